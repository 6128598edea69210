//! Polynomial kernels behind three-point and k-point semidefinite bounds.
//!
//! * `Y_{m,i,j}^d(x, y, z) = P_i^{d+2m}(u) P_j^{d+2m}(v) Q_m^d(u, v, t)` with
//!   `u = <y,z>`, `v = <x,z>`, `t = <x,y>`, and `S_{m,i,j}^d` its average over
//!   the six orderings of `(x, y, z)`.
//! * `Q_{k,l}^d(x_1..x_k)`, built from the projections of `x_1, x_2` onto the
//!   orthogonal complement of `span(x_3..x_k)` and scaled by `det(W)^l`.
//!
//! `Q_m^d` is always evaluated in its polynomial form
//! `Σ_r a_{m-2r} (t - uv)^{m-2r} ((1-u²)(1-v²))^r`, where `a_j` are the
//! monomial coefficients of `P_m^{d-1}`, so it is defined at `u² = 1` and
//! `v² = 1` as well.

use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gegenbauer::{eval_all, eval_unchecked, monomial_coefficients};
use crate::geom::{gram_matrix, volume_parallelepiped_sq, volume_simplex_edge_form_sq, volume_simplex_sq, Point};
use crate::kernels::{KernelFlags, MultiKernel};
use crate::linalg::{adjugate, determinant, dot, symmetric_eigenvalues, SquareMatrix};
use crate::sampling::{stream_rng, uniform_sphere_points};
use crate::scalar::Scalar;

/// Addresses the entry `(Y_m^d)_{i+1, j+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct YIndex {
    pub m: usize,
    pub i: usize,
    pub j: usize,
    pub d: usize,
}

impl YIndex {
    pub fn new(m: usize, i: usize, j: usize, d: usize) -> Self {
        Self { m, i, j, d }
    }
}

/// `Σ_r a_{m-2r} w^{m-2r} p^r` for the monomial coefficients `a` of a
/// degree-`m` Gegenbauer polynomial with the parity of `m`.
fn homogenized<T: Scalar>(a: &[T], w: T, p: T) -> T {
    let m = a.len() - 1;
    let mut acc = T::zero();
    let mut p_pow = T::one();
    let mut r = 0;
    while 2 * r <= m {
        acc += a[m - 2 * r] * w.powi((m - 2 * r) as i32) * p_pow;
        p_pow *= p;
        r += 1;
    }
    acc
}

/// The three-input `Q_m^d(u, v, t)` with its coefficients precomputed.
#[derive(Debug, Clone)]
pub struct BlockPolynomial<T> {
    m: usize,
    coeffs: Vec<T>,
}

impl<T: Scalar> BlockPolynomial<T> {
    pub fn new(m: usize, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidArgument { name: "d", reason: "Y kernels need d >= 2".into() });
        }
        let coeffs = if m == 0 { vec![T::one()] } else { monomial_coefficients(d - 1, m)? };
        Ok(Self { m, coeffs })
    }

    pub fn degree(&self) -> usize {
        self.m
    }

    pub fn eval(&self, u: T, v: T, t: T) -> T {
        let one = T::one();
        homogenized(&self.coeffs, t - u * v, (one - u * u) * (one - v * v))
    }
}

fn uvt<T: Scalar>(x: &Point<T>, y: &Point<T>, z: &Point<T>) -> (T, T, T) {
    (y.dot(z), x.dot(z), x.dot(y))
}

fn check_spherical<T: Scalar>(points: &[&Point<T>]) -> Result<usize> {
    let d = points[0].dim();
    for p in points {
        if p.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: p.dim() });
        }
        p.check_unit()?;
    }
    Ok(d)
}

fn check_dim<T: Scalar>(idx: &YIndex, points: &[&Point<T>]) -> Result<()> {
    let d = check_spherical(points)?;
    if d != idx.d {
        return Err(Error::DimensionMismatch { expected: idx.d, found: d });
    }
    Ok(())
}

/// Polynomial evaluator for one `Y_{m,i,j}^d`.
#[derive(Debug, Clone)]
pub struct YPolynomial<T> {
    idx: YIndex,
    block: BlockPolynomial<T>,
}

impl<T: Scalar> YPolynomial<T> {
    pub fn new(idx: YIndex) -> Result<Self> {
        Ok(Self { idx, block: BlockPolynomial::new(idx.m, idx.d)? })
    }

    pub fn eval_uvt(&self, u: T, v: T, t: T) -> T {
        let h = self.idx.d + 2 * self.idx.m;
        eval_unchecked(h, self.idx.i, u) * eval_unchecked(h, self.idx.j, v) * self.block.eval(u, v, t)
    }

    pub fn eval(&self, x: &Point<T>, y: &Point<T>, z: &Point<T>) -> T {
        let (u, v, t) = uvt(x, y, z);
        self.eval_uvt(u, v, t)
    }

    /// Average over the six orderings of `(x, y, z)`.
    pub fn eval_symmetrized(&self, x: &Point<T>, y: &Point<T>, z: &Point<T>) -> T {
        let (a, b, c) = (y.dot(z), x.dot(z), x.dot(y));
        // (u, v, t) for each ordering of (x, y, z), u and v being the
        // products of the first and second argument with the third.
        let orders = [(a, b, c), (b, a, c), (a, c, b), (c, a, b), (b, c, a), (c, b, a)];
        let total: T = orders.iter().map(|&(u, v, t)| self.eval_uvt(u, v, t)).sum();
        total / T::c(6.0)
    }
}

pub fn eval_y<T: Scalar>(idx: YIndex, x: &Point<T>, y: &Point<T>, z: &Point<T>) -> Result<T> {
    check_dim(&idx, &[x, y, z])?;
    Ok(YPolynomial::new(idx)?.eval(x, y, z))
}

pub fn eval_s<T: Scalar>(idx: YIndex, x: &Point<T>, y: &Point<T>, z: &Point<T>) -> Result<T> {
    check_dim(&idx, &[x, y, z])?;
    Ok(YPolynomial::new(idx)?.eval_symmetrized(x, y, z))
}

/// A finite corner `A_m` of one of the coefficient matrices in a trace
/// kernel `Σ_m Tr(S_m^d A_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdCoefficientMatrix<T> {
    m: usize,
    entries: SquareMatrix<T>,
}

impl<T: Scalar> PsdCoefficientMatrix<T> {
    /// Validates symmetry, positive semidefiniteness (smallest eigenvalue at
    /// least `-1e-10 · ‖A‖_F`) and, for `m = 0`, the zero first row/column.
    pub fn new(m: usize, entries: SquareMatrix<T>) -> Result<Self> {
        let scale = entries.frobenius();
        let tol = T::tol(1e-10) * scale.max(T::min_positive_value());
        if entries.order() == 0 {
            return Err(Error::InvalidBlock { m, reason: "empty coefficient matrix".into() });
        }
        if !entries.is_symmetric(tol) {
            return Err(Error::InvalidBlock { m, reason: "not symmetric".into() });
        }
        let min = symmetric_eigenvalues(&entries)[0];
        if min < -tol {
            return Err(Error::InvalidBlock { m, reason: format!("smallest eigenvalue {min} is negative") });
        }
        if m == 0 {
            let n = entries.order();
            if (0..n).any(|i| entries[(0, i)] != T::zero() || entries[(i, 0)] != T::zero()) {
                return Err(Error::InvalidBlock { m, reason: "first row and column of A_0 must vanish".into() });
            }
        }
        Ok(Self { m, entries })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn entries(&self) -> &SquareMatrix<T> {
        &self.entries
    }
}

/// Evaluates `Σ_m Tr(Y_m^d(x,y,z) A_m) = Σ_m P(u)ᵀ A_m P(v) Q_m(u,v,t)`.
#[derive(Debug, Clone)]
struct TraceEvaluator<T> {
    d: usize,
    blocks: Vec<(BlockPolynomial<T>, SquareMatrix<T>)>,
}

impl<T: Scalar> TraceEvaluator<T> {
    fn new(blocks: &[PsdCoefficientMatrix<T>], d: usize) -> Result<Self> {
        let blocks = blocks
            .iter()
            .map(|b| Ok((BlockPolynomial::new(b.m, d)?, b.entries.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { d, blocks })
    }

    fn eval_uvt(&self, u: T, v: T, t: T) -> T {
        let mut total = T::zero();
        for (q, a) in &self.blocks {
            let h = self.d + 2 * q.degree();
            let n = a.order();
            let pu = eval_all(h, n - 1, u).expect("h >= 2");
            let pv = eval_all(h, n - 1, v).expect("h >= 2");
            total += a.bilinear(&pu, &pv) * q.eval(u, v, t);
        }
        total
    }
}

fn trace_flags(symmetric_all: bool) -> KernelFlags {
    KernelFlags {
        symmetric_all,
        symmetric_first_two: true,
        rotation_invariant: true,
        spherical_only: true,
        singular: false,
    }
}

/// `K(x, y, z) = Σ_m Tr(S_m^d(x, y, z) A_m)`.
pub fn trace_kernel<T: Scalar>(blocks: &[PsdCoefficientMatrix<T>], d: usize) -> Result<MultiKernel<T>> {
    let ev = TraceEvaluator::new(blocks, d)?;
    let label = format!("S-trace ({} blocks, d={d})", blocks.len());
    MultiKernel::new(3, d, trace_flags(true), label, move |p: &[&Point<T>]| {
        let (a, b, c) = (p[1].dot(p[2]), p[0].dot(p[2]), p[0].dot(p[1]));
        let orders = [(a, b, c), (b, a, c), (a, c, b), (c, a, b), (b, c, a), (c, b, a)];
        orders.iter().map(|&(u, v, t)| ev.eval_uvt(u, v, t)).sum::<T>() / T::c(6.0)
    })
}

/// `K(x, y, z) = Σ_m Tr(Y_m^d(x, y, z) A_m)`, the same construction before
/// symmetrization. Symmetric in its first two inputs.
pub fn trace_kernel_unsymmetrized<T: Scalar>(blocks: &[PsdCoefficientMatrix<T>], d: usize) -> Result<MultiKernel<T>> {
    let ev = TraceEvaluator::new(blocks, d)?;
    let label = format!("Y-trace ({} blocks, d={d})", blocks.len());
    MultiKernel::new(3, d, trace_flags(false), label, move |p: &[&Point<T>]| {
        let (u, v, t) = uvt(p[0], p[1], p[2]);
        ev.eval_uvt(u, v, t)
    })
}

fn check_q_range(k: usize, l: usize, d: usize) -> Result<()> {
    if k < 3 || k > d + 1 {
        return Err(Error::InvalidArity { arity: k, reason: format!("Q needs 3 <= k <= d + 1 = {}", d + 1) });
    }
    if k == d + 1 && l >= 2 {
        return Err(Error::UndefinedGegenbauer { d: 1, m: l });
    }
    Ok(())
}

/// `Q_{k,l}^d` with the coefficients of `P_l^{d-k+2}` precomputed.
#[derive(Debug, Clone)]
pub struct QPolynomial<T> {
    k: usize,
    l: usize,
    coeffs: Vec<T>,
}

impl<T: Scalar> QPolynomial<T> {
    pub fn new(k: usize, l: usize, d: usize) -> Result<Self> {
        check_q_range(k, l, d)?;
        Ok(Self { k, l, coeffs: monomial_coefficients(d + 2 - k, l)? })
    }

    /// Adjugate expansion
    /// `Σ_m a_{l-2m} (det W u_12 - w_1ᵀ adj W w_2)^{l-2m} (det W u_11 - w_1ᵀ adj W w_1)^m (det W u_22 - w_2ᵀ adj W w_2)^m`.
    pub fn eval(&self, points: &[&Point<T>]) -> T {
        if self.l == 0 {
            return T::one();
        }
        let u = gram_matrix(points);
        let n = self.k - 2;
        let w = SquareMatrix::from_fn(n, |i, j| u[(i + 2, j + 2)]);
        let det_w = determinant(&w);
        let adj_w = adjugate(&w);
        let w1: Vec<T> = (0..n).map(|i| u[(0, i + 2)]).collect();
        let w2: Vec<T> = (0..n).map(|i| u[(1, i + 2)]).collect();
        let cross = det_w * u[(0, 1)] - adj_w.bilinear(&w1, &w2);
        let n1 = det_w * u[(0, 0)] - adj_w.bilinear(&w1, &w1);
        let n2 = det_w * u[(1, 1)] - adj_w.bilinear(&w2, &w2);
        homogenized(&self.coeffs, cross, n1 * n2)
    }
}

fn check_q_inputs<T: Scalar>(k: usize, d: usize, inputs: &[&Point<T>]) -> Result<()> {
    if inputs.len() != k {
        return Err(Error::InvalidArity { arity: inputs.len(), reason: format!("Q_{{{k},l}} takes {k} inputs") });
    }
    let dim = check_spherical(inputs)?;
    if dim != d {
        return Err(Error::DimensionMismatch { expected: d, found: dim });
    }
    Ok(())
}

pub fn eval_q<T: Scalar>(k: usize, l: usize, d: usize, inputs: &[&Point<T>]) -> Result<T> {
    let q = QPolynomial::new(k, l, d)?;
    check_q_inputs(k, d, inputs)?;
    Ok(q.eval(inputs))
}

/// Largest condition number of the tail Gram matrix accepted by
/// [`eval_q_geometric`].
pub const MAX_TAIL_CONDITION: f64 = 1e8;

/// `det(W)^l ‖y_1‖^l ‖y_2‖^l P_l^{d-k+2}(<y_1, y_2> / (‖y_1‖ ‖y_2‖))` from
/// explicit projections `y_i` of `x_i` onto the orthogonal complement of the
/// tail span.
pub fn eval_q_geometric<T: Scalar>(k: usize, l: usize, d: usize, inputs: &[&Point<T>]) -> Result<T> {
    check_q_range(k, l, d)?;
    check_q_inputs(k, d, inputs)?;
    if l == 0 {
        return Ok(T::one());
    }
    let tail = &inputs[2..];
    let w = gram_matrix(tail);
    let eig = symmetric_eigenvalues(&w);
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    let condition = if lo > T::zero() { (hi / lo).as_f64() } else { f64::INFINITY };
    if condition > MAX_TAIL_CONDITION {
        return Err(Error::DegenerateTail { condition });
    }
    // Orthonormal basis of the tail span, Gram–Schmidt applied twice.
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(tail.len());
    for p in tail {
        let mut v = p.coords().to_vec();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(a, e)| *a -= c * *e);
            }
        }
        let r = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|a| *a /= r);
        basis.push(v);
    }
    let project = |x: &Point<T>| {
        let mut v = x.coords().to_vec();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(a, e)| *a -= c * *e);
            }
        }
        v
    };
    let (y1, y2) = (project(inputs[0]), project(inputs[1]));
    let (r1, r2) = (dot(&y1, &y1).sqrt(), dot(&y2, &y2).sqrt());
    if r1 == T::zero() || r2 == T::zero() {
        return Ok(T::zero());
    }
    let cos = (dot(&y1, &y2) / (r1 * r2)).max(-T::one()).min(T::one());
    let det_w = determinant(&w);
    let li = l as i32;
    Ok(det_w.powi(li) * r1.powi(li) * r2.powi(li) * eval_unchecked(d + 2 - k, l, cos))
}

fn q_flags() -> KernelFlags {
    KernelFlags {
        symmetric_all: false,
        symmetric_first_two: true,
        rotation_invariant: true,
        spherical_only: true,
        singular: false,
    }
}

/// `Q_{k,l}^d` as a kernel.
pub fn q_kernel<T: Scalar>(k: usize, l: usize, d: usize) -> Result<MultiKernel<T>> {
    let q = QPolynomial::new(k, l, d)?;
    MultiKernel::new(k, d, q_flags(), format!("Q_{{{k},{l}}} (d={d})"), move |p: &[&Point<T>]| q.eval(p))
}

/// A `(k-1)`-input weight depending only on inner products of its inputs.
pub type WeightFn<T> = Arc<dyn Fn(&[&Point<T>]) -> T + Send + Sync>;

/// `T(x_1..x_k) = G(x_1, x_3..x_k) G(x_2, x_3..x_k) Q_{k,l}^d(x_1..x_k)`.
///
/// With `l = 0` this is `G(x_1, tail) G(x_2, tail)`, whose energy is
/// minimized by the uniform measure only when `G` integrates to zero in its
/// first argument; see [`weight_mean_zero_check`].
pub fn g_weighted_kernel<T: Scalar>(g: WeightFn<T>, k: usize, l: usize, d: usize) -> Result<MultiKernel<T>> {
    let q = QPolynomial::new(k, l, d)?;
    MultiKernel::new(k, d, q_flags(), format!("G·G·Q_{{{k},{l}}} (d={d})"), move |p: &[&Point<T>]| {
        let mut args: Vec<&Point<T>> = Vec::with_capacity(k - 1);
        args.push(p[0]);
        args.extend_from_slice(&p[2..]);
        let g1 = g(&args);
        args[0] = p[1];
        let g2 = g(&args);
        g1 * g2 * q.eval(p)
    })
}

/// Monte-Carlo spot check of `∫ G(η, tail) dσ(η) = 0` over random tails.
/// Returns the largest `|mean| / standard error` seen.
pub fn weight_mean_zero_check<T: Scalar>(
    g: &WeightFn<T>,
    k: usize,
    d: usize,
    tails: usize,
    samples: usize,
    seed: u64,
) -> f64 {
    (0..tails)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let tail: Vec<Point<T>> = uniform_sphere_points(&mut rng, d, k - 2);
            let values: Vec<f64> = (0..samples)
                .map(|_| {
                    let eta = uniform_sphere_points::<T>(&mut rng, d, 1).pop().expect("one point");
                    let mut args: Vec<&Point<T>> = vec![&eta];
                    args.extend(tail.iter());
                    g(&args).as_f64()
                })
                .collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            if se > 0.0 {
                mean.abs() / se
            } else if mean == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// Names of the polynomial identities that [`identity_check`] can verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    V2Decomposition,
    A2Decomposition,
    SumOfSquaresIdentity,
    Heron,
    BorderedVsEdge,
    Q31Explicit,
    Q41Explicit,
    AToVLift,
}

impl Identity {
    pub const ALL: [Identity; 8] = [
        Identity::V2Decomposition,
        Identity::A2Decomposition,
        Identity::SumOfSquaresIdentity,
        Identity::Heron,
        Identity::BorderedVsEdge,
        Identity::Q31Explicit,
        Identity::Q41Explicit,
        Identity::AToVLift,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Identity::V2Decomposition => "v2_decomposition",
            Identity::A2Decomposition => "a2_decomposition",
            Identity::SumOfSquaresIdentity => "sum_of_squares_identity",
            Identity::Heron => "heron",
            Identity::BorderedVsEdge => "bordered_vs_edge",
            Identity::Q31Explicit => "q31_explicit",
            Identity::Q41Explicit => "q41_explicit",
            Identity::AToVLift => "a_to_v_lift",
        }
    }

    /// Smallest dimension at which both sides are defined.
    pub fn min_dim(&self) -> usize {
        match self {
            Identity::V2Decomposition
            | Identity::A2Decomposition
            | Identity::SumOfSquaresIdentity
            | Identity::Q41Explicit => 3,
            Identity::Heron | Identity::BorderedVsEdge | Identity::Q31Explicit => 2,
            Identity::AToVLift => 1,
        }
    }

    /// Whether the residual is relative to the size of the compared values.
    pub fn relative(&self) -> bool {
        matches!(self, Identity::AToVLift)
    }

    fn arity(&self) -> usize {
        match self {
            Identity::Q41Explicit => 4,
            _ => 3,
        }
    }
}

impl FromStr for Identity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Identity::ALL
            .iter()
            .copied()
            .find(|i| i.name() == s)
            .ok_or_else(|| Error::UnknownIdentity(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub name: &'static str,
    pub d: usize,
    pub trials: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Residual tolerance applied by [`identity_check`].
pub const IDENTITY_TOLERANCE: f64 = 1e-10;

const TRIAL_BLOCK: usize = 256;

/// The `S_{m,i,j}^d` values the three-point identities need.
struct SValues {
    s100: f64,
    s111: f64,
    s200: f64,
    s022: f64,
}

fn s_values(d: usize, x: &Point<f64>, y: &Point<f64>, z: &Point<f64>) -> Result<SValues> {
    let s = |m, i, j| YPolynomial::new(YIndex::new(m, i, j, d)).map(|p| p.eval_symmetrized(x, y, z));
    Ok(SValues { s100: s(1, 0, 0)?, s111: s(1, 1, 1)?, s200: s(2, 0, 0)?, s022: s(0, 2, 2)? })
}

fn residual_on_tuple(id: Identity, d: usize, p: &[Point<f64>]) -> Result<f64> {
    let df = d as f64;
    let r: Vec<&Point<f64>> = p.iter().collect();
    let (x, y, z) = (&p[0], &p[1], &p[2]);
    let (u, v, t) = uvt(x, y, z);
    Ok(match id {
        Identity::V2Decomposition => {
            let s = s_values(d, x, y, z)?;
            let c = (df - 1.0) * (df - 2.0) / (df * df);
            let rhs = c
                - c * s.s022
                - 4.0 * (df - 2.0) / df * s.s111
                - (3.0 * df - 4.0) * (df - 2.0) / (df * (df - 1.0)) * s.s200;
            (volume_parallelepiped_sq(&r)? - rhs).abs()
        }
        Identity::A2Decomposition => {
            let s = s_values(d, x, y, z)?;
            let rhs = 0.25
                * (3.0 * (df - 1.0) / df
                    - 3.0 * (df - 2.0) / (df - 1.0) * s.s200
                    - 6.0 * s.s111
                    - 6.0 * s.s100
                    - 3.0 * (df - 1.0) / df * s.s022);
            (volume_simplex_sq(&r)? - rhs).abs()
        }
        Identity::SumOfSquaresIdentity => {
            let s = s_values(d, x, y, z)?;
            let lhs = 3.0 * (df - 2.0) / (df - 1.0) * s.s200 + 6.0 * s.s111 + 3.0 * (df - 1.0) / df * s.s022 + 3.0 / df;
            (lhs - (u * u + v * v + t * t)).abs()
        }
        Identity::Heron => {
            let a2 = volume_simplex_sq(&r)?;
            let heron = 0.75 - (u + v + t) / 2.0 + (u * v + v * t + t * u) / 2.0 - (u * u + v * v + t * t) / 4.0;
            let s100 = YPolynomial::new(YIndex::new(1, 0, 0, d))?.eval_symmetrized(x, y, z);
            let via_s = 0.75 - 1.5 * s100 - (u * u + v * v + t * t) / 4.0;
            (a2 - heron).abs().max((a2 - via_s).abs())
        }
        Identity::BorderedVsEdge => {
            let mut worst = 0.0f64;
            for k in 2..=(d + 1).min(p.len()) {
                let sub = &r[..k];
                worst = worst.max((volume_simplex_sq(sub)? - volume_simplex_edge_form_sq(sub)?).abs());
            }
            worst
        }
        Identity::Q31Explicit => {
            let q = eval_q(3, 1, d, &r)?;
            (q - (t - u * v)).abs()
        }
        Identity::Q41Explicit => {
            let g = gram_matrix(&r);
            let e = |i: usize, j: usize| g[(i - 1, j - 1)];
            let explicit = e(1, 2) - e(1, 2) * e(3, 4) * e(3, 4) - e(1, 3) * e(2, 3) - e(1, 4) * e(2, 4)
                + e(1, 3) * e(2, 4) * e(3, 4)
                + e(1, 4) * e(2, 3) * e(3, 4);
            (eval_q(4, 1, d, &r)? - explicit).abs()
        }
        Identity::AToVLift => unreachable!("handled by measure-level check"),
    })
}

/// Evaluates both sides of a registered identity at `trials` random inputs
/// and reports the largest residual.
///
/// Trials are drawn in blocks of 256, block `b` from stream `b` of `seed`,
/// so the result does not depend on the number of worker threads.
pub fn identity_check(id: Identity, d: usize, trials: usize, seed: u64) -> Result<IdentityReport> {
    if d < id.min_dim() {
        return Err(Error::InvalidArgument {
            name: "d",
            reason: format!("{} needs d >= {}", id.name(), id.min_dim()),
        });
    }
    if trials == 0 {
        return Err(Error::InvalidArgument { name: "trials", reason: "need at least one trial".into() });
    }
    let max_residual = if id == Identity::AToVLift {
        crate::measures::a_to_v_residual(d, trials, seed)?
    } else {
        let arity = match id {
            Identity::BorderedVsEdge => d + 1,
            _ => id.arity(),
        };
        let blocks = trials.div_ceil(TRIAL_BLOCK);
        let per_block: Vec<f64> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream_rng(seed, b as u64);
                let n = TRIAL_BLOCK.min(trials - b * TRIAL_BLOCK);
                let mut worst = 0.0f64;
                for _ in 0..n {
                    let p = uniform_sphere_points::<f64>(&mut rng, d, arity);
                    worst = worst.max(residual_on_tuple(id, d, &p)?);
                }
                Ok(worst)
            })
            .collect::<Result<Vec<_>>>()?;
        per_block.into_iter().fold(0.0, f64::max)
    };
    Ok(IdentityReport {
        name: id.name(),
        d,
        trials,
        max_residual,
        tolerance: IDENTITY_TOLERANCE,
        pass: max_residual <= IDENTITY_TOLERANCE,
    })
}

/// Trace-kernel blocks reproducing `3(d-1)/d - 4A²` on `S^{d-1}`:
/// `A_0 = diag(0, 0, 3(d-1)/d)`, `A_1 = [[6, 0], [0, 6]]` and
/// `A_2 = [3(d-2)/(d-1)]`.
pub fn a2_decomposition_blocks<T: Scalar>(d: usize) -> Result<Vec<PsdCoefficientMatrix<T>>> {
    if d < 3 {
        return Err(Error::InvalidArgument { name: "d", reason: "needs d >= 3".into() });
    }
    let df = T::from_usize_lossy(d);
    let one = T::one();
    let a0 = SquareMatrix::from_fn(3, |i, j| if i == 2 && j == 2 { T::c(3.0) * (df - one) / df } else { T::zero() });
    let a1 = SquareMatrix::from_fn(2, |i, j| if i == j { T::c(6.0) } else { T::zero() });
    let a2 = SquareMatrix::from_fn(1, |_, _| T::c(3.0) * (df - T::c(2.0)) / (df - one));
    Ok(vec![PsdCoefficientMatrix::new(0, a0)?, PsdCoefficientMatrix::new(1, a1)?, PsdCoefficientMatrix::new(2, a2)?])
}

/// `blocks` random coefficient matrices `A_m = B Bᵀ / size` (`m = 0..blocks`)
/// of order `size` with standard Gaussian `B`; `A_0` gets its first row and
/// column cleared, which keeps it positive semidefinite.
pub fn random_psd_blocks<T: Scalar>(blocks: usize, size: usize, rng: &mut impl Rng) -> Result<Vec<PsdCoefficientMatrix<T>>> {
    if size == 0 {
        return Err(Error::InvalidArgument { name: "size", reason: "blocks need order >= 1".into() });
    }
    (0..blocks)
        .map(|m| {
            let b: Vec<Vec<f64>> = (0..size).map(|_| (0..size).map(|_| rng.sample(StandardNormal)).collect()).collect();
            let a = SquareMatrix::from_fn(size, |i, j| {
                if m == 0 && (i == 0 || j == 0) {
                    T::zero()
                } else {
                    T::c(dot(&b[i], &b[j]) / size as f64)
                }
            });
            PsdCoefficientMatrix::new(m, a)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_orthogonal, rotate};

    fn rand_points(seed: u64, d: usize, n: usize) -> Vec<Point<f64>> {
        uniform_sphere_points(&mut stream_rng(seed, 0), d, n)
    }

    #[test]
    fn displayed_entries() {
        for d in 3..=6 {
            let df = d as f64;
            for s in 0..20 {
                let p = rand_points(s, d, 3);
                let (x, y, z) = (&p[0], &p[1], &p[2]);
                let (u, v, t) = uvt(x, y, z);
                let y_ = |m, i, j| eval_y(YIndex::new(m, i, j, d), x, y, z).unwrap();
                let p2 = |a: f64| (df * a * a - 1.0) / (df - 1.0);
                assert_eq!(y_(0, 0, 0), 1.0);
                assert!((y_(0, 0, 1) - v).abs() < 1e-15);
                assert!((y_(0, 1, 0) - u).abs() < 1e-15);
                assert!((y_(0, 0, 2) - p2(v)).abs() < 1e-14);
                assert!((y_(0, 2, 1) - p2(u) * v).abs() < 1e-14);
                assert!((y_(0, 2, 2) - p2(u) * p2(v)).abs() < 1e-14);
                assert!((y_(1, 0, 0) - (t - u * v)).abs() < 1e-15);
                assert!((y_(1, 1, 0) - u * (t - u * v)).abs() < 1e-15);
                assert!((y_(1, 1, 1) - u * v * (t - u * v)).abs() < 1e-15);
                let want = ((df - 1.0) * (t - u * v).powi(2) - (1.0 - u * u) * (1.0 - v * v)) / (df - 2.0);
                assert!((y_(2, 0, 0) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn block_polynomial_matches_quotient_form() {
        let d = 5;
        for m in 0..=6 {
            let q = BlockPolynomial::<f64>::new(m, d).unwrap();
            for s in 0..10 {
                let p = rand_points(100 + s, d, 3);
                let (u, v, t) = uvt(&p[0], &p[1], &p[2]);
                let r = ((1.0 - u * u) * (1.0 - v * v)).sqrt();
                let want = r.powi(m as i32) * eval_unchecked(d - 1, m, (t - u * v) / r);
                assert!((q.eval(u, v, t) - want).abs() < 1e-12, "m={m}");
            }
            if m >= 1 {
                assert_eq!(q.eval(1.0, 1.0, 1.0), 0.0);
            }
        }
    }

    #[test]
    fn symmetrized_entries() {
        let d = 4;
        let p = rand_points(7, d, 3);
        let (x, y, z) = (&p[0], &p[1], &p[2]);
        assert_eq!(eval_s(YIndex::new(0, 0, 0, d), x, y, z).unwrap(), 1.0);
        assert!(eval_s(YIndex::new(1, 0, 0, d), x, x, x).unwrap().abs() < 1e-15);
        for (m, i, j) in [(1, 0, 0), (1, 1, 1), (2, 0, 0), (0, 2, 2), (2, 1, 3)] {
            let idx = YIndex::new(m, i, j, d);
            let brute = [[x, y, z], [y, x, z], [x, z, y], [z, x, y], [y, z, x], [z, y, x]]
                .iter()
                .map(|q| eval_y(idx, q[0], q[1], q[2]).unwrap())
                .sum::<f64>()
                / 6.0;
            assert!((eval_s(idx, x, y, z).unwrap() - brute).abs() < 1e-14);
        }
        let off = Point::new(vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(eval_s(YIndex::new(1, 0, 0, d), &off, y, z), Err(Error::NotSpherical { .. })));
    }

    #[test]
    fn rotation_invariance() {
        let d = 5;
        let mut rng = stream_rng(31, 0);
        let q: SquareMatrix<f64> = random_orthogonal(&mut rng, d);
        let p = rand_points(32, d, 4);
        let rp: Vec<Point<f64>> = p.iter().map(|x| rotate(&q, x)).collect();
        let idx = YIndex::new(2, 1, 2, d);
        let a = eval_s(idx, &p[0], &p[1], &p[2]).unwrap();
        let b = eval_s(idx, &rp[0], &rp[1], &rp[2]).unwrap();
        assert!((a - b).abs() < 1e-12);
        let r: Vec<&Point<f64>> = p.iter().collect();
        let rr: Vec<&Point<f64>> = rp.iter().collect();
        assert!((eval_q(4, 3, d, &r).unwrap() - eval_q(4, 3, d, &rr).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn psd_block_validation() {
        let ok = SquareMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert!(PsdCoefficientMatrix::new(1, ok.clone()).is_ok());
        assert!(PsdCoefficientMatrix::new(0, ok).is_err());
        let indefinite = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(PsdCoefficientMatrix::new(1, indefinite).is_err());
        let asym = SquareMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(PsdCoefficientMatrix::new(2, asym).is_err());
        let bordered = SquareMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(PsdCoefficientMatrix::new(0, bordered).is_ok());
    }

    #[test]
    fn trace_kernel_examples() {
        let d = 4;
        let unit = SquareMatrix::from_fn(3, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 });
        let k = trace_kernel(&[PsdCoefficientMatrix::new(1, unit).unwrap()], d).unwrap();
        let zero = trace_kernel(&[PsdCoefficientMatrix::new(2, SquareMatrix::zeros(2)).unwrap()], d).unwrap();
        let a2 = crate::kernels::kernel_a_pow(3, d, 2.0).unwrap();
        let decomposition = trace_kernel(&a2_decomposition_blocks(d).unwrap(), d).unwrap();
        let df = d as f64;
        for s in 0..30 {
            let p = rand_points(200 + s, d, 3);
            let r: Vec<&Point<f64>> = p.iter().collect();
            let s100 = eval_s(YIndex::new(1, 0, 0, d), r[0], r[1], r[2]).unwrap();
            assert!((k.evaluate(&r).unwrap() - s100).abs() < 1e-14);
            assert_eq!(zero.evaluate(&r).unwrap(), 0.0);
            let want = 3.0 * (df - 1.0) / df - 4.0 * a2.evaluate(&r).unwrap();
            assert!((decomposition.evaluate(&r).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn q_explicit_values() {
        let d = 4;
        let p = rand_points(5, d, 5);
        let r: Vec<&Point<f64>> = p.iter().collect();
        for k in 3..=5 {
            assert_eq!(eval_q(k, 0, d, &r[..k]).unwrap(), 1.0);
        }
        // Q_{3,1} depends only on the three inner products, so any triple with
        // those products will do.
        let t = |a: f64, b: f64, c: f64| a - b * c;
        assert!((t(0.5, 0.2, 0.3) - 0.44).abs() < 1e-15);
        let q = QPolynomial::<f64>::new(3, 1, 3).unwrap();
        let pts = crate::sampling::uniform_sphere_points::<f64>(&mut stream_rng(8, 0), 3, 3);
        let g = gram_matrix(&pts.iter().collect::<Vec<_>>());
        assert!((q.eval(&pts.iter().collect::<Vec<_>>()) - (g[(0, 1)] - g[(0, 2)] * g[(1, 2)])).abs() < 1e-15);
        assert!(eval_q(5, 2, 4, &r).is_err());
        assert!(eval_q(5, 1, 4, &r).is_ok());
        assert!(eval_q(2, 1, 4, &r[..2]).is_err());
    }

    #[test]
    fn q_oracle_agreement() {
        for d in 4..=6 {
            for k in 3..=5.min(d) {
                for l in 1..=3 {
                    for s in 0..20 {
                        let p = rand_points(1000 * d as u64 + 10 * k as u64 + s, d, k);
                        let r: Vec<&Point<f64>> = p.iter().collect();
                        let a = eval_q(k, l, d, &r).unwrap();
                        let b = eval_q_geometric(k, l, d, &r).unwrap();
                        assert!((a - b).abs() < 1e-10, "k={k} l={l} d={d}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn q_symmetries_and_degenerate_tail() {
        let d = 6;
        let p = rand_points(41, d, 5);
        let r: Vec<&Point<f64>> = p.iter().collect();
        let base = eval_q(5, 2, d, &r).unwrap();
        let swapped = [r[1], r[0], r[4], r[2], r[3]];
        assert!((eval_q(5, 2, d, &swapped).unwrap() - base).abs() < 1e-13);
        // Tail with a repeated vector.
        let dep = [r[0], r[1], r[2], r[2]];
        for l in 1..=3 {
            assert!(eval_q(4, l, d, &dep).unwrap().abs() < 1e-12);
        }
        assert!(matches!(eval_q_geometric(4, 1, d, &dep), Err(Error::DegenerateTail { .. })));
    }

    #[test]
    fn g_weighted_examples() {
        let d = 4;
        let ip: WeightFn<f64> = Arc::new(|p: &[&Point<f64>]| p[0].dot(p[1]));
        let one: WeightFn<f64> = Arc::new(|_: &[&Point<f64>]| 1.0);
        let zero: WeightFn<f64> = Arc::new(|_: &[&Point<f64>]| 0.0);
        let t_ip = g_weighted_kernel(ip.clone(), 3, 1, d).unwrap();
        let t_one = g_weighted_kernel(one, 3, 1, d).unwrap();
        let t_zero = g_weighted_kernel(zero, 3, 1, d).unwrap();
        for s in 0..20 {
            let p = rand_points(300 + s, d, 3);
            let r: Vec<&Point<f64>> = p.iter().collect();
            let (u, v, t) = uvt(r[0], r[1], r[2]);
            assert!((t_ip.evaluate(&r).unwrap() - v * u * (t - u * v)).abs() < 1e-15);
            assert!((t_one.evaluate(&r).unwrap() - eval_q(3, 1, d, &r).unwrap()).abs() < 1e-15);
            assert_eq!(t_zero.evaluate(&r).unwrap(), 0.0);
        }
        assert!(weight_mean_zero_check(&ip, 3, d, 3, 4000, 1) < 5.0);
        let biased: WeightFn<f64> = Arc::new(|p: &[&Point<f64>]| 1.0 + p[0].dot(p[1]));
        assert!(weight_mean_zero_check(&biased, 3, d, 3, 4000, 1) > 50.0);
    }

    #[test]
    fn identity_registry() {
        assert_eq!("heron".parse::<Identity>().unwrap(), Identity::Heron);
        assert!(matches!("nope".parse::<Identity>(), Err(Error::UnknownIdentity(_))));
        assert!(identity_check(Identity::V2Decomposition, 2, 10, 1).is_err());
        for id in Identity::ALL.iter().filter(|i| **i != Identity::AToVLift) {
            for d in id.min_dim().max(3)..=6 {
                let r = identity_check(*id, d, 300, 9).unwrap();
                assert!(r.pass, "{} d={d}: {}", id.name(), r.max_residual);
            }
        }
    }
}
