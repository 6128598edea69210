//! k-input kernels, the volume families built on them, and kernel algebra.

use std::fmt;
use std::sync::Arc;

use itertools::Itertools;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{bordered_gram, edge_vectors, gram_matrix, Point};
use crate::linalg::{adjugate, determinant, dot, SquareMatrix};
use crate::scalar::{factorial, Scalar};

pub type EvalFn<T> = Arc<dyn Fn(&[&Point<T>]) -> T + Send + Sync>;
/// Euclidean gradient with respect to every input: `out[p][c] = ∂K/∂(x_p)_c`.
pub type GradFn<T> = Arc<dyn Fn(&[&Point<T>]) -> Vec<Vec<T>> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct KernelFlags {
    pub symmetric_all: bool,
    pub symmetric_first_two: bool,
    pub rotation_invariant: bool,
    pub spherical_only: bool,
    /// Unbounded on coincident inputs; energies then only sum over tuples of
    /// pairwise distinct indices.
    pub singular: bool,
}

impl KernelFlags {
    fn symmetric_rotation_invariant() -> Self {
        Self { symmetric_all: true, symmetric_first_two: true, rotation_invariant: true, ..Self::default() }
    }

    /// Flags that survive pointwise combination: a property holds only if it
    /// holds for every operand; singularity holds if it holds for any.
    fn intersect(self, other: Self) -> Self {
        Self {
            symmetric_all: self.symmetric_all && other.symmetric_all,
            symmetric_first_two: self.symmetric_first_two && other.symmetric_first_two,
            rotation_invariant: self.rotation_invariant && other.rotation_invariant,
            spherical_only: self.spherical_only || other.spherical_only,
            singular: self.singular || other.singular,
        }
    }
}

/// A real-valued function of `arity` points in `R^dim`.
#[derive(Clone)]
pub struct MultiKernel<T> {
    arity: usize,
    dim: usize,
    eval: EvalFn<T>,
    grad: Option<GradFn<T>>,
    flags: KernelFlags,
    label: String,
}

impl<T> fmt::Debug for MultiKernel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiKernel")
            .field("label", &self.label)
            .field("arity", &self.arity)
            .field("dim", &self.dim)
            .field("flags", &self.flags)
            .field("analytic_gradient", &self.grad.is_some())
            .finish()
    }
}

impl<T: Scalar> MultiKernel<T> {
    pub fn new(
        arity: usize,
        dim: usize,
        flags: KernelFlags,
        label: impl Into<String>,
        eval: impl Fn(&[&Point<T>]) -> T + Send + Sync + 'static,
    ) -> Result<Self> {
        if arity == 0 {
            return Err(Error::InvalidArity { arity, reason: "kernels take at least one input".into() });
        }
        if dim == 0 {
            return Err(Error::InvalidArgument { name: "d", reason: "dimension must be positive".into() });
        }
        Ok(Self { arity, dim, eval: Arc::new(eval), grad: None, flags, label: label.into() })
    }

    pub fn with_gradient(mut self, grad: impl Fn(&[&Point<T>]) -> Vec<Vec<T>> + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn flags(&self) -> KernelFlags {
        self.flags
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.grad.is_some()
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn set_flags(mut self, flags: KernelFlags) -> Self {
        self.flags = flags;
        self
    }

    fn check_inputs(&self, points: &[&Point<T>]) -> Result<()> {
        if points.len() != self.arity {
            return Err(Error::InvalidArity {
                arity: points.len(),
                reason: format!("kernel '{}' takes {} inputs", self.label, self.arity),
            });
        }
        for p in points {
            if p.dim() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, found: p.dim() });
            }
            if self.flags.spherical_only {
                p.check_unit()?;
            }
        }
        Ok(())
    }

    /// Validated evaluation.
    pub fn evaluate(&self, points: &[&Point<T>]) -> Result<T> {
        self.check_inputs(points)?;
        let v = (self.eval)(points);
        if v.is_nan() {
            return Err(Error::NonFinite);
        }
        Ok(v)
    }

    /// Evaluation without input validation, for inner loops over
    /// configurations that were checked once up front.
    #[inline]
    pub fn eval_unchecked(&self, points: &[&Point<T>]) -> T {
        (self.eval)(points)
    }

    /// Euclidean gradient in every input: analytic when available, otherwise
    /// central differences with step `1e-5` (scaled to the precision).
    pub fn gradient(&self, points: &[&Point<T>]) -> Vec<Vec<T>> {
        match &self.grad {
            Some(g) => g(points),
            None => self.fd_gradient(points),
        }
    }

    /// Central finite-difference gradient, independent of any analytic form.
    pub fn fd_gradient(&self, points: &[&Point<T>]) -> Vec<Vec<T>> {
        let h = T::c(1e-5).max(T::epsilon().cbrt());
        let mut owned: Vec<Point<T>> = points.iter().map(|p| (*p).clone()).collect();
        let mut out = vec![vec![T::zero(); self.dim]; points.len()];
        for p in 0..points.len() {
            for c in 0..self.dim {
                let orig = owned[p].coords()[c];
                owned[p] = shifted(&owned[p], c, orig + h);
                let plus = (self.eval)(&owned.iter().collect::<Vec<_>>());
                owned[p] = shifted(&owned[p], c, orig - h);
                let minus = (self.eval)(&owned.iter().collect::<Vec<_>>());
                owned[p] = (*points[p]).clone();
                out[p][c] = (plus - minus) / (h + h);
            }
        }
        out
    }

    /// Two-input view with the inputs `3..k` fixed.
    pub fn slice(&self, tail: Vec<Point<T>>) -> Result<PotentialSlice<T>> {
        if self.arity < 2 || tail.len() != self.arity - 2 {
            return Err(Error::InvalidArgument {
                name: "tail",
                reason: format!("kernel of arity {} needs a tail of {} points", self.arity, self.arity.saturating_sub(2)),
            });
        }
        for p in &tail {
            if p.dim() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, found: p.dim() });
            }
        }
        Ok(PotentialSlice { parent: self.clone(), tail })
    }
}

fn shifted<T: Scalar>(p: &Point<T>, c: usize, value: T) -> Point<T> {
    let mut coords = p.coords().to_vec();
    coords[c] = value;
    Point::new(coords).expect("finite perturbation")
}

/// `(x, y) ↦ K(x, y, z_3, ..., z_k)` for a fixed tail.
#[derive(Debug, Clone)]
pub struct PotentialSlice<T> {
    parent: MultiKernel<T>,
    tail: Vec<Point<T>>,
}

impl<T: Scalar> PotentialSlice<T> {
    pub fn eval(&self, x: &Point<T>, y: &Point<T>) -> T {
        let mut args: Vec<&Point<T>> = Vec::with_capacity(self.parent.arity);
        args.push(x);
        args.push(y);
        args.extend(self.tail.iter());
        self.parent.eval_unchecked(&args)
    }

    pub fn tail(&self) -> &[Point<T>] {
        &self.tail
    }

    pub fn parent(&self) -> &MultiKernel<T> {
        &self.parent
    }

    /// `M_ij = U(x_i, x_j)` over the given points.
    pub fn matrix(&self, points: &[Point<T>]) -> SquareMatrix<T> {
        SquareMatrix::from_fn(points.len(), |i, j| self.eval(&points[i], &points[j]))
    }
}

fn coords_of<T: Scalar>(p: &Point<T>) -> &[T] {
    p.coords()
}

/// Two inputs coincide (or, with `up_to_sign`, are antipodal), so the
/// volume vanishes identically near this tuple. Roundoff would otherwise leave
/// a tiny positive `B` where `B^{s/2}` has an unbounded slope.
fn repeated_input<T: Scalar>(points: &[&Point<T>], up_to_sign: bool) -> bool {
    (0..points.len()).any(|i| {
        (i + 1..points.len()).any(|j| {
            let (a, b) = (points[i].coords(), points[j].coords());
            a == b || (up_to_sign && a.iter().zip(b).all(|(x, y)| *x == -*y))
        })
    })
}

fn zero_gradient<T: Scalar>(points: &[&Point<T>]) -> (T, Vec<Vec<T>>) {
    (T::zero(), vec![vec![T::zero(); points[0].dim()]; points.len()])
}

/// `∇_i det U = 2 Σ_j adj(U)_ij x_j`.
fn gram_det_gradient<T: Scalar>(points: &[&Point<T>]) -> (T, Vec<Vec<T>>) {
    if repeated_input(points, true) {
        return zero_gradient(points);
    }
    let u = gram_matrix(points);
    let det = determinant(&u);
    let adj = adjugate(&u);
    let d = points[0].dim();
    let two = T::c(2.0);
    let grads = (0..points.len())
        .map(|i| {
            let mut g = vec![T::zero(); d];
            for (j, p) in points.iter().enumerate() {
                let a = two * adj[(i, j)];
                for (gc, xc) in g.iter_mut().zip(coords_of(p)) {
                    *gc += a * *xc;
                }
            }
            g
        })
        .collect();
    (det, grads)
}

/// `A²` and its gradient through the Gram matrix of the edges `x_j - x_1`.
fn simplex_sq_gradient<T: Scalar>(points: &[&Point<T>]) -> (T, Vec<Vec<T>>) {
    if repeated_input(points, false) {
        return zero_gradient(points);
    }
    let k = points.len();
    let d = points[0].dim();
    let edges = edge_vectors(points);
    let g = SquareMatrix::from_fn(k - 1, |i, j| dot(&edges[i], &edges[j]));
    let f: T = factorial(k - 1);
    let norm = T::one() / (f * f);
    let det = determinant(&g) * norm;
    let adj = adjugate(&g);
    let two = T::c(2.0);
    let mut grads = vec![vec![T::zero(); d]; k];
    for l in 0..k - 1 {
        for (m, e) in edges.iter().enumerate() {
            let a = two * adj[(l, m)] * norm;
            for c in 0..d {
                grads[l + 1][c] += a * e[c];
            }
        }
    }
    for l in 1..k {
        for c in 0..d {
            let v = grads[l][c];
            grads[0][c] -= v;
        }
    }
    (det, grads)
}

fn simplex_sq_value<T: Scalar>(points: &[&Point<T>]) -> T {
    if repeated_input(points, false) {
        return T::zero();
    }
    let k = points.len();
    let f: T = factorial(k - 1);
    (-determinant(&bordered_gram(points)) / (f * f)).max(T::zero())
}

fn gram_det_value<T: Scalar>(points: &[&Point<T>]) -> T {
    if points.len() > points[0].dim() || repeated_input(points, true) {
        return T::zero();
    }
    determinant(&gram_matrix(points)).max(T::zero())
}

/// How the squared volume `B` is turned into a kernel value.
#[derive(Debug, Clone, Copy)]
enum PowerLaw<T> {
    /// `B^{s/2}`, `s > 0`.
    Power(T),
    /// `B^{s/2}` with `s < 0`: unbounded at degenerate tuples.
    Negative(T),
    /// `-log sqrt(B)`.
    Log,
}

impl<T: Scalar> PowerLaw<T> {
    fn from_s(s: T, allow_singular: bool) -> Result<Self> {
        if !s.is_finite() {
            return Err(Error::InvalidArgument { name: "s", reason: "power must be finite".into() });
        }
        if s > T::zero() {
            return Ok(Self::Power(s));
        }
        if !allow_singular {
            return Err(Error::InvalidArgument {
                name: "s",
                reason: "non-positive powers need the singular constructor".into(),
            });
        }
        Ok(if s == T::zero() { Self::Log } else { Self::Negative(s) })
    }

    fn singular(&self) -> bool {
        !matches!(self, Self::Power(_))
    }

    fn value(&self, b: T) -> T {
        let two = T::c(2.0);
        match *self {
            Self::Power(s) if s == two => b,
            Self::Power(s) | Self::Negative(s) => {
                if b == T::zero() {
                    if s > T::zero() {
                        T::zero()
                    } else {
                        T::infinity()
                    }
                } else {
                    b.powf(s / two)
                }
            }
            Self::Log => -b.ln() / two,
        }
    }

    /// `dφ/dB`; zero where `B = 0` and the power is not differentiable.
    fn slope(&self, b: T) -> T {
        let two = T::c(2.0);
        match *self {
            Self::Power(s) if s == two => T::one(),
            Self::Power(s) | Self::Negative(s) => {
                if b <= T::zero() {
                    T::zero()
                } else {
                    s / two * b.powf(s / two - T::one())
                }
            }
            Self::Log => {
                if b <= T::zero() {
                    T::zero()
                } else {
                    -T::one() / (two * b)
                }
            }
        }
    }

    fn describe(&self) -> String {
        match self {
            Self::Power(s) | Self::Negative(s) => format!("^{}", s),
            Self::Log => " log".into(),
        }
    }
}

fn power_kernel<T: Scalar>(
    arity: usize,
    dim: usize,
    law: PowerLaw<T>,
    name: &str,
    value: fn(&[&Point<T>]) -> T,
    with_grad: fn(&[&Point<T>]) -> (T, Vec<Vec<T>>),
) -> Result<MultiKernel<T>> {
    let mut flags = KernelFlags::symmetric_rotation_invariant();
    flags.singular = law.singular();
    let label = format!("{name}{} (k={arity}, d={dim})", law.describe());
    Ok(MultiKernel::new(arity, dim, flags, label, move |p: &[&Point<T>]| law.value(value(p)))?.with_gradient(
        move |p: &[&Point<T>]| {
            let (b, mut g) = with_grad(p);
            let slope = law.slope(b.max(T::zero()));
            for row in g.iter_mut() {
                for v in row.iter_mut() {
                    *v *= slope;
                }
            }
            g
        },
    ))
}

fn check_v_arity(k: usize, d: usize) -> Result<()> {
    if k < 2 || k > d {
        return Err(Error::InvalidArity { arity: k, reason: format!("V needs 2 <= k <= d = {d}") });
    }
    Ok(())
}

fn check_a_arity(k: usize, d: usize) -> Result<()> {
    if k < 2 || k > d + 1 {
        return Err(Error::InvalidArity { arity: k, reason: format!("A needs 2 <= k <= d + 1 = {}", d + 1) });
    }
    Ok(())
}

/// `V(x_1..x_k)^s`, `s > 0`.
pub fn kernel_v_pow<T: Scalar>(k: usize, d: usize, s: T) -> Result<MultiKernel<T>> {
    check_v_arity(k, d)?;
    power_kernel(k, d, PowerLaw::from_s(s, false)?, "V", gram_det_value, gram_det_gradient)
}

/// `V^s` for any real `s`; `s = 0` gives `-log V`. Flagged singular when
/// `s <= 0`.
pub fn kernel_v_pow_singular<T: Scalar>(k: usize, d: usize, s: T) -> Result<MultiKernel<T>> {
    check_v_arity(k, d)?;
    power_kernel(k, d, PowerLaw::from_s(s, true)?, "V", gram_det_value, gram_det_gradient)
}

/// `A(x_1..x_k)^s`, `s > 0`.
pub fn kernel_a_pow<T: Scalar>(k: usize, d: usize, s: T) -> Result<MultiKernel<T>> {
    check_a_arity(k, d)?;
    power_kernel(k, d, PowerLaw::from_s(s, false)?, "A", simplex_sq_value, simplex_sq_gradient)
}

/// `A^s` for any real `s`; `s = 0` gives `-log A`.
pub fn kernel_a_pow_singular<T: Scalar>(k: usize, d: usize, s: T) -> Result<MultiKernel<T>> {
    check_a_arity(k, d)?;
    power_kernel(k, d, PowerLaw::from_s(s, true)?, "A", simplex_sq_value, simplex_sq_gradient)
}

/// Frame potential `<x, y>²`.
pub fn kernel_frame<T: Scalar>(d: usize) -> Result<MultiKernel<T>> {
    let flags = KernelFlags::symmetric_rotation_invariant();
    Ok(MultiKernel::new(2, d, flags, format!("frame (d={d})"), |p: &[&Point<T>]| {
        let t = p[0].dot(p[1]);
        t * t
    })?
    .with_gradient(|p: &[&Point<T>]| {
        let two_t = T::c(2.0) * p[0].dot(p[1]);
        vec![
            p[1].coords().iter().map(|c| two_t * *c).collect(),
            p[0].coords().iter().map(|c| two_t * *c).collect(),
        ]
    }))
}

pub fn constant<T: Scalar>(arity: usize, d: usize, c: T) -> Result<MultiKernel<T>> {
    let flags = KernelFlags::symmetric_rotation_invariant();
    Ok(MultiKernel::new(arity, d, flags, format!("{c}"), move |_: &[&Point<T>]| c)?
        .with_gradient(move |p: &[&Point<T>]| vec![vec![T::zero(); p[0].dim()]; p.len()]))
}

fn check_compatible<T: Scalar>(a: &MultiKernel<T>, b: &MultiKernel<T>) -> Result<()> {
    if a.arity != b.arity {
        return Err(Error::InvalidArity { arity: b.arity, reason: format!("operands need arity {}", a.arity) });
    }
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, found: b.dim });
    }
    Ok(())
}

fn combine_grads<T: Scalar>(mut a: Vec<Vec<T>>, b: &[Vec<T>], wa: T, wb: T) -> Vec<Vec<T>> {
    for (ra, rb) in a.iter_mut().zip(b) {
        for (x, y) in ra.iter_mut().zip(rb) {
            *x = wa * *x + wb * *y;
        }
    }
    a
}

/// Pointwise sum of kernels sharing arity and dimension.
pub fn sum<T: Scalar>(terms: &[MultiKernel<T>]) -> Result<MultiKernel<T>> {
    let first = terms.first().ok_or(Error::Empty("sum operands"))?;
    for t in terms {
        check_compatible(first, t)?;
    }
    let flags = terms.iter().skip(1).fold(first.flags, |f, t| f.intersect(t.flags));
    let label = terms.iter().map(|t| t.label.as_str()).join(" + ");
    let evals: Vec<EvalFn<T>> = terms.iter().map(|t| t.eval.clone()).collect();
    let mut out = MultiKernel::new(first.arity, first.dim, flags, format!("({label})"), move |p: &[&Point<T>]| {
        evals.iter().map(|e| e(p)).sum()
    })?;
    if let Some(grads) = terms.iter().map(|t| t.grad.clone()).collect::<Option<Vec<_>>>() {
        out = out.with_gradient(move |p: &[&Point<T>]| {
            let mut acc = grads[0](p);
            for g in &grads[1..] {
                acc = combine_grads(acc, &g(p), T::one(), T::one());
            }
            acc
        });
    }
    Ok(out)
}

/// Pointwise product of kernels sharing arity and dimension.
pub fn product<T: Scalar>(factors: &[MultiKernel<T>]) -> Result<MultiKernel<T>> {
    let first = factors.first().ok_or(Error::Empty("product operands"))?;
    for t in factors {
        check_compatible(first, t)?;
    }
    let flags = factors.iter().skip(1).fold(first.flags, |f, t| f.intersect(t.flags));
    let label = factors.iter().map(|t| t.label.as_str()).join(" * ");
    let evals: Vec<EvalFn<T>> = factors.iter().map(|t| t.eval.clone()).collect();
    let evals_g = evals.clone();
    let mut out = MultiKernel::new(first.arity, first.dim, flags, format!("({label})"), move |p: &[&Point<T>]| {
        evals.iter().fold(T::one(), |acc, e| acc * e(p))
    })?;
    if let Some(grads) = factors.iter().map(|t| t.grad.clone()).collect::<Option<Vec<_>>>() {
        out = out.with_gradient(move |p: &[&Point<T>]| {
            let values: Vec<T> = evals_g.iter().map(|e| e(p)).collect();
            let mut acc = vec![vec![T::zero(); p[0].dim()]; p.len()];
            for (i, g) in grads.iter().enumerate() {
                let others = values.iter().enumerate().filter(|(j, _)| *j != i).fold(T::one(), |a, (_, v)| a * *v);
                acc = combine_grads(acc, &g(p), T::one(), others);
            }
            acc
        });
    }
    Ok(out)
}

/// `c · K`.
pub fn scale<T: Scalar>(base: &MultiKernel<T>, c: T) -> MultiKernel<T> {
    let e = base.eval.clone();
    let mut out = MultiKernel {
        eval: Arc::new(move |p: &[&Point<T>]| c * e(p)),
        grad: None,
        label: format!("{c}·{}", base.label),
        ..base.clone()
    };
    if let Some(g) = base.grad.clone() {
        out.grad = Some(Arc::new(move |p: &[&Point<T>]| {
            let mut v = g(p);
            v.iter_mut().flatten().for_each(|x| *x *= c);
            v
        }));
    }
    out
}

/// `K + c`.
pub fn add_constant<T: Scalar>(base: &MultiKernel<T>, c: T) -> MultiKernel<T> {
    let e = base.eval.clone();
    MultiKernel {
        eval: Arc::new(move |p: &[&Point<T>]| e(p) + c),
        label: format!("{} + {c}", base.label),
        ..base.clone()
    }
}

/// Arity-`n` kernel averaging `base(x_1, x_2, x_{π(3)}, ..., x_{π(k)})` over
/// the given permutations. Each permutation lists, for positions `3..=n`,
/// which input (1-based, in `3..=n`) lands there; only its first `k - 2`
/// entries are used.
pub fn lift<T: Scalar>(base: &MultiKernel<T>, n: usize, permutations: &[Vec<usize>]) -> Result<MultiKernel<T>> {
    let k = base.arity;
    if k < 2 || n < k {
        return Err(Error::InvalidArity { arity: n, reason: format!("lift needs n >= k = {k} >= 2") });
    }
    if permutations.is_empty() {
        return Err(Error::Empty("lift permutations"));
    }
    let mut maps: Vec<Vec<usize>> = Vec::with_capacity(permutations.len());
    for perm in permutations {
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        if sorted != (3..=n).collect::<Vec<_>>() {
            return Err(Error::InvalidArgument {
                name: "permutations",
                reason: format!("{perm:?} is not a permutation of 3..={n}"),
            });
        }
        let mut map = vec![0, 1];
        map.extend(perm.iter().take(k - 2).map(|i| i - 1));
        maps.push(map);
    }
    let weight = T::one() / T::from_usize_lossy(maps.len());
    let e = base.eval.clone();
    let maps_e = maps.clone();
    let flags = KernelFlags { symmetric_all: false, ..base.flags };
    let mut out = MultiKernel::new(n, base.dim, flags, format!("lift{n}[{}]", base.label), move |p: &[&Point<T>]| {
        let mut acc = T::zero();
        let mut args = Vec::with_capacity(k);
        for map in &maps_e {
            args.clear();
            args.extend(map.iter().map(|&i| p[i]));
            acc += e(&args);
        }
        acc * weight
    })?;
    if let Some(g) = base.grad.clone() {
        out = out.with_gradient(move |p: &[&Point<T>]| {
            let mut acc = vec![vec![T::zero(); p[0].dim()]; p.len()];
            let mut args = Vec::with_capacity(k);
            for map in &maps {
                args.clear();
                args.extend(map.iter().map(|&i| p[i]));
                for (pos, row) in g(&args).into_iter().enumerate() {
                    for (a, v) in acc[map[pos]].iter_mut().zip(row) {
                        *a += weight * v;
                    }
                }
            }
            acc
        });
    }
    Ok(out)
}

/// Average of `base` over all `k!` orderings of its inputs.
pub fn symmetrize<T: Scalar>(base: &MultiKernel<T>) -> MultiKernel<T> {
    let k = base.arity;
    let perms: Vec<Vec<usize>> = (0..k).permutations(k).collect();
    let weight = T::one() / T::from_usize_lossy(perms.len());
    let e = base.eval.clone();
    let perms_e = perms.clone();
    let eval = move |p: &[&Point<T>]| {
        let mut acc = T::zero();
        let mut args = Vec::with_capacity(k);
        for perm in &perms_e {
            args.clear();
            args.extend(perm.iter().map(|&i| p[i]));
            acc += e(&args);
        }
        acc * weight
    };
    let grad: Option<GradFn<T>> = base.grad.clone().map(|g| {
        Arc::new(move |p: &[&Point<T>]| {
            let mut acc = vec![vec![T::zero(); p[0].dim()]; p.len()];
            let mut args = Vec::with_capacity(k);
            for perm in &perms {
                args.clear();
                args.extend(perm.iter().map(|&i| p[i]));
                for (pos, row) in g(&args).into_iter().enumerate() {
                    for (a, v) in acc[perm[pos]].iter_mut().zip(row) {
                        *a += weight * v;
                    }
                }
            }
            acc
        }) as GradFn<T>
    });
    MultiKernel {
        arity: k,
        dim: base.dim,
        eval: Arc::new(eval),
        grad,
        flags: KernelFlags { symmetric_all: true, symmetric_first_two: true, ..base.flags },
        label: format!("sym[{}]", base.label),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::volume_simplex_sq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Point<f64> {
        Point::spherical((0..d).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
    }

    fn triple_with_products(u: f64, v: f64, t: f64) -> [Point<f64>; 3] {
        // x, y, z with <y,z> = u, <x,z> = v, <x,y> = t via Cholesky of the Gram matrix.
        let g = SquareMatrix::from_rows(&[vec![1.0, t, v], vec![t, 1.0, u], vec![v, u, 1.0]]).unwrap();
        let mut l = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..=i {
                let s: f64 = (0..j).map(|m| l[i][m] * l[j][m]).sum();
                l[i][j] = if i == j { (g[(i, i)] - s).sqrt() } else { (g[(i, j)] - s) / l[j][j] };
            }
        }
        [0, 1, 2].map(|i| Point::spherical(l[i].to_vec()).unwrap())
    }

    #[test]
    fn v_squared_examples() {
        let k = kernel_v_pow(3, 3, 2.0).unwrap();
        let [x, y, z] = triple_with_products(0.5, 0.5, 0.5);
        assert!((k.evaluate(&[&x, &y, &z]).unwrap() - 0.5).abs() < 1e-14);
        let e = [0, 1, 2].map(|i| Point::<f64>::basis(3, i));
        assert!((k.evaluate(&[&e[0], &e[1], &e[2]]).unwrap() - 1.0).abs() < 1e-15);
        let k3 = kernel_v_pow(3, 3, 3.0).unwrap();
        assert_eq!(k3.evaluate(&[&e[0], &e[1], &e[0]]).unwrap(), 0.0);
        assert!(kernel_v_pow::<f64>(4, 3, 2.0).is_err());
        assert!(kernel_v_pow::<f64>(2, 3, -1.0).is_err());
    }

    #[test]
    fn a_squared_examples() {
        let k2 = kernel_a_pow(2, 3, 2.0).unwrap();
        let n = Point::<f64>::basis(3, 2);
        let s = n.scaled(-1.0);
        assert!((k2.evaluate(&[&n, &s]).unwrap() - 4.0).abs() < 1e-14);
        let k = kernel_a_pow(3, 2, 2.0).unwrap();
        let tri: Vec<Point<f64>> = (0..3)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / 3.0;
                Point::spherical(vec![a.cos(), a.sin()]).unwrap()
            })
            .collect();
        assert!((k.evaluate(&[&tri[0], &tri[1], &tri[2]]).unwrap() - 27.0 / 16.0).abs() < 1e-13);
        let e = [0, 1, 2].map(|i| Point::<f64>::basis(3, i));
        let k3 = kernel_a_pow(3, 3, 2.0).unwrap();
        assert!((k3.evaluate(&[&e[0], &e[1], &e[2]]).unwrap() - 0.75).abs() < 1e-15);
        assert!(kernel_a_pow::<f64>(5, 3, 2.0).is_err());
    }

    #[test]
    fn two_input_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a1 = kernel_a_pow(2, 4, 1.0).unwrap();
        let a3 = kernel_a_pow(2, 4, 3.0).unwrap();
        let v2 = kernel_v_pow(2, 4, 2.0).unwrap();
        for _ in 0..200 {
            let x = random_point(&mut rng, 4);
            let y = random_point(&mut rng, 4);
            let dist: f64 = x.coords().iter().zip(y.coords()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!((a1.evaluate(&[&x, &y]).unwrap() - dist).abs() < 1e-12);
            assert!((a3.evaluate(&[&x, &y]).unwrap() - dist.powi(3)).abs() < 1e-12);
            let t = x.dot(&y);
            assert!((v2.evaluate(&[&x, &y]).unwrap() - (1.0 - t * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn heron_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = kernel_a_pow(3, 5, 2.0).unwrap();
        for _ in 0..500 {
            let p: Vec<Point<f64>> = (0..3).map(|_| random_point(&mut rng, 5)).collect();
            let (u, v, t) = (p[1].dot(&p[2]), p[0].dot(&p[2]), p[0].dot(&p[1]));
            let heron = 0.75 - (u + v + t) / 2.0 + (u * v + v * t + t * u) / 2.0 - (u * u + v * v + t * t) / 4.0;
            assert!((k.evaluate(&[&p[0], &p[1], &p[2]]).unwrap() - heron).abs() < 1e-12);
        }
    }

    #[test]
    fn higher_powers_are_dominated() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v2 = kernel_v_pow(3, 4, 2.0).unwrap();
        let v3 = kernel_v_pow(3, 4, 3.0).unwrap();
        for _ in 0..2000 {
            let p: Vec<Point<f64>> = (0..3).map(|_| random_point(&mut rng, 4)).collect();
            let r = p.iter().collect::<Vec<_>>();
            assert!(v3.evaluate(&r).unwrap() <= v2.evaluate(&r).unwrap() + 1e-15);
        }
    }

    #[test]
    fn permutation_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let kernels = [kernel_a_pow(4, 4, 1.5).unwrap(), kernel_v_pow(3, 4, 2.5).unwrap()];
        for k in &kernels {
            for _ in 0..100 {
                let p: Vec<Point<f64>> = (0..k.arity()).map(|_| random_point(&mut rng, 4)).collect();
                let base = k.evaluate(&p.iter().collect::<Vec<_>>()).unwrap();
                for perm in (0..k.arity()).permutations(k.arity()) {
                    let q: Vec<&Point<f64>> = perm.iter().map(|&i| &p[i]).collect();
                    assert!((k.evaluate(&q).unwrap() - base).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn analytic_gradients_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let kernels = [
            kernel_a_pow(3, 3, 2.0).unwrap(),
            kernel_a_pow(3, 3, 1.0).unwrap(),
            kernel_v_pow(3, 4, 2.0).unwrap(),
            kernel_v_pow(2, 3, 1.0).unwrap(),
            kernel_frame(3).unwrap(),
            kernel_a_pow_singular(3, 3, -1.0).unwrap(),
            kernel_v_pow_singular(2, 3, 0.0).unwrap(),
        ];
        for k in &kernels {
            let d = k.dim();
            for _ in 0..20 {
                let p: Vec<Point<f64>> = (0..k.arity()).map(|_| random_point(&mut rng, d)).collect();
                let r: Vec<&Point<f64>> = p.iter().collect();
                let a = k.gradient(&r);
                let f = k.fd_gradient(&r);
                let scale = a.iter().flatten().fold(1e-3f64, |m, v| m.max(v.abs()));
                for (ra, rf) in a.iter().zip(&f) {
                    for (x, y) in ra.iter().zip(rf) {
                        assert!((x - y).abs() < 1e-6 * scale, "{}: {x} vs {y}", k.label());
                    }
                }
            }
        }
    }

    #[test]
    fn singular_kernels() {
        let k = kernel_a_pow_singular(2, 3, 0.0).unwrap();
        assert!(k.flags().singular);
        let x = Point::<f64>::basis(3, 0);
        let y = x.scaled(-1.0);
        assert!((k.evaluate(&[&x, &y]).unwrap() + 2f64.ln()).abs() < 1e-15);
        let neg = kernel_a_pow_singular(2, 3, -1.0).unwrap();
        assert!(neg.evaluate(&[&x, &x]).unwrap().is_infinite());
        assert!(!kernel_a_pow(2, 3, 1.0).unwrap().flags().singular);
    }

    #[test]
    fn algebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let f = kernel_frame::<f64>(3).unwrap();
        let zero = constant(2, 3, 0.0).unwrap();
        let twice = sum(&[f.clone(), f.clone()]).unwrap();
        let plus_zero = sum(&[f.clone(), zero]).unwrap();
        let neg = scale(&f, -1.0);
        let sq = product(&[f.clone(), f.clone()]).unwrap();
        let shifted = add_constant(&f, 0.25);
        for _ in 0..50 {
            let x = random_point(&mut rng, 3);
            let y = random_point(&mut rng, 3);
            let base = f.evaluate(&[&x, &y]).unwrap();
            assert_eq!(plus_zero.evaluate(&[&x, &y]).unwrap(), base);
            assert!((twice.evaluate(&[&x, &y]).unwrap() - 2.0 * base).abs() < 1e-15);
            assert_eq!(neg.evaluate(&[&x, &y]).unwrap(), -base);
            assert!((sq.evaluate(&[&x, &y]).unwrap() - base * base).abs() < 1e-15);
            assert!((shifted.evaluate(&[&x, &y]).unwrap() - base - 0.25).abs() < 1e-15);
            let g = sq.gradient(&[&x, &y]);
            let fd = sq.fd_gradient(&[&x, &y]);
            for (a, b) in g.iter().flatten().zip(fd.iter().flatten()) {
                assert!((a - b).abs() < 1e-7);
            }
        }
        let a = kernel_a_pow::<f64>(3, 3, 2.0).unwrap();
        assert!(sum(&[f.clone(), a.clone()]).is_err());
        assert!(product(&[f, kernel_frame(4).unwrap()]).is_err());
    }

    #[test]
    fn symmetrize_linear_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let base = MultiKernel::new(3, 3, KernelFlags::default(), "<x,y>", |p: &[&Point<f64>]| p[0].dot(p[1])).unwrap();
        let sym = symmetrize(&base);
        assert!(sym.flags().symmetric_all);
        let a = kernel_a_pow(3, 3, 2.0).unwrap();
        let sym_a = symmetrize(&a);
        for _ in 0..100 {
            let p: Vec<Point<f64>> = (0..3).map(|_| random_point(&mut rng, 3)).collect();
            let r: Vec<&Point<f64>> = p.iter().collect();
            // Each unordered pair appears in positions (1,2) for two of the six orderings.
            let want = (p[0].dot(&p[1]) + p[0].dot(&p[2]) + p[1].dot(&p[2])) / 3.0;
            assert!((sym.evaluate(&r).unwrap() - want).abs() < 1e-15);
            assert!((sym_a.evaluate(&r).unwrap() - a.evaluate(&r).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn lift_behaviour() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let f = kernel_frame::<f64>(3).unwrap();
        let all: Vec<Vec<usize>> = (3..=4).permutations(2).collect();
        let lifted = lift(&f, 4, &all).unwrap();
        assert_eq!(lifted.arity(), 4);
        let a = kernel_a_pow::<f64>(3, 4, 2.0).unwrap();
        let same = lift(&a, 3, &[vec![3]]).unwrap();
        let a_lift = lift(&a, 5, &(3..=5).permutations(3).collect::<Vec<_>>()).unwrap();
        for _ in 0..50 {
            let p: Vec<Point<f64>> = (0..5).map(|_| random_point(&mut rng, 4)).collect();
            let q: Vec<Point<f64>> = p.iter().map(|x| Point::spherical(x.coords()[..3].to_vec()).unwrap()).collect();
            let t = q[0].dot(&q[1]);
            assert!((lifted.evaluate(&[&q[0], &q[1], &q[2], &q[3]]).unwrap() - t * t).abs() < 1e-15);
            let r3 = [&p[0], &p[1], &p[2]];
            assert_eq!(same.evaluate(&r3).unwrap(), a.evaluate(&r3).unwrap());
            let want = (2..5).map(|i| volume_simplex_sq(&[&p[0], &p[1], &p[i]]).unwrap()).sum::<f64>() / 3.0;
            let r: Vec<&Point<f64>> = p.iter().collect();
            assert!((a_lift.evaluate(&r).unwrap() - want).abs() < 1e-12);
            let g = a_lift.gradient(&r);
            let fd = a_lift.fd_gradient(&r);
            for (x, y) in g.iter().flatten().zip(fd.iter().flatten()) {
                assert!((x - y).abs() < 1e-7);
            }
        }
        assert!(lift(&f, 4, &[]).is_err());
        assert!(lift(&f, 4, &[vec![3, 3]]).is_err());
    }

    #[test]
    fn slices() {
        let a = kernel_a_pow::<f64>(3, 3, 2.0).unwrap();
        let z = Point::basis(3, 2);
        let s = a.slice(vec![z.clone()]).unwrap();
        assert_eq!(s.eval(&z, &z), 0.0);
        assert!(a.slice(vec![]).is_err());
        let f = kernel_frame::<f64>(3).unwrap();
        let fs = f.slice(vec![]).unwrap();
        let x = Point::spherical(vec![1.0, 2.0, 2.0]).unwrap();
        assert_eq!(fs.eval(&x, &z), f.evaluate(&[&x, &z]).unwrap());
    }

    #[test]
    fn input_validation() {
        let a = kernel_a_pow::<f64>(3, 3, 2.0).unwrap();
        let x = Point::basis(3, 0);
        let y = Point::basis(2, 0);
        assert!(matches!(a.evaluate(&[&x, &x]), Err(Error::InvalidArity { .. })));
        assert!(matches!(a.evaluate(&[&x, &x, &y]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn single_precision() {
        let k = kernel_a_pow::<f32>(3, 2, 2.0).unwrap();
        let tri: Vec<Point<f32>> = (0..3)
            .map(|i| {
                let a = 2.0 * std::f32::consts::PI * i as f32 / 3.0;
                Point::spherical(vec![a.cos(), a.sin()]).unwrap()
            })
            .collect();
        let r: Vec<&Point<f32>> = tri.iter().collect();
        assert!((k.evaluate(&r).unwrap() - 27.0 / 16.0).abs() < 1e-5);
    }
}
