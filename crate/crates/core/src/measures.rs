//! Probability measures on `S^{d-1}` and `R^d`: discrete atoms, the uniform
//! surface measure, mixtures, their moments, and the maps `π` and `ψ`.

use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::discrete_measure_energy;
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::kernels::{kernel_a_pow, kernel_v_pow};
use crate::linalg::{symmetric_eigen, SquareMatrix};
use crate::sampling::{stream_rng, uniform_sphere_point};
use crate::scalar::{factorial, Scalar};

/// Tolerance on the total mass of a measure.
pub const MASS_TOL: f64 = 1e-12;
/// Default tolerance for the balanced and isotropic flags of exact moments.
pub const MOMENT_TOL: f64 = 1e-9;

fn check_weights<T: Scalar>(weights: &[T]) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
        return Err(Error::InvalidArgument { name: "weights", reason: "weights must be finite and nonnegative".into() });
    }
    let total: T = weights.iter().copied().sum();
    if (total - T::one()).abs() > T::tol(MASS_TOL) * T::from_usize_lossy(weights.len().max(1)) {
        return Err(Error::InvalidWeights { sum: total.as_f64() });
    }
    Ok(())
}

/// Finitely many weighted atoms in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure<T> {
    atoms: Vec<Point<T>>,
    weights: Vec<T>,
}

impl<T: Scalar> DiscreteMeasure<T> {
    pub fn new(atoms: Vec<Point<T>>, weights: Vec<T>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("measure atoms"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidArgument {
                name: "weights",
                reason: format!("{} atoms but {} weights", atoms.len(), weights.len()),
            });
        }
        let d = atoms[0].dim();
        if let Some(p) = atoms.iter().find(|p| p.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: p.dim() });
        }
        check_weights(&weights)?;
        Ok(Self { atoms, weights })
    }

    /// Equal weights on the given atoms.
    pub fn uniform(atoms: Vec<Point<T>>) -> Result<Self> {
        let w = T::one() / T::from_usize_lossy(atoms.len().max(1));
        let n = atoms.len();
        Self::new(atoms, vec![w; n])
    }

    pub fn atoms(&self) -> &[Point<T>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_spherical(&self) -> bool {
        self.atoms.iter().all(|p| p.check_unit().is_ok())
    }

    /// `∫ ‖x‖² dμ`.
    pub fn second_moment(&self) -> T {
        self.atoms.iter().zip(&self.weights).map(|(p, w)| *w * p.dot(p)).sum()
    }

    fn sample_one(&self, rng: &mut impl Rng) -> Point<T> {
        let r: f64 = rng.random();
        let mut acc = 0.0;
        for (p, w) in self.atoms.iter().zip(&self.weights) {
            acc += w.as_f64();
            if r < acc {
                return p.clone();
            }
        }
        // Rounding in the cumulative sum: fall back to the last atom of
        // positive weight.
        let last = self.weights.iter().rposition(|w| *w > T::zero()).unwrap_or(self.atoms.len() - 1);
        self.atoms[last].clone()
    }
}

/// A measure that can be integrated exactly (discrete) or sampled.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureSpec<T> {
    Discrete(DiscreteMeasure<T>),
    UniformSphere { dim: usize },
    Mixture(Vec<(T, MeasureSpec<T>)>),
}

impl<T: Scalar> MeasureSpec<T> {
    pub fn mixture(components: Vec<(T, MeasureSpec<T>)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("mixture components"));
        }
        let weights: Vec<T> = components.iter().map(|(w, _)| *w).collect();
        check_weights(&weights)?;
        let d = components[0].1.dim();
        if let Some((_, c)) = components.iter().find(|(_, c)| c.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: c.dim() });
        }
        Ok(Self::Mixture(components))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Discrete(m) => m.dim(),
            Self::UniformSphere { dim } => *dim,
            Self::Mixture(c) => c[0].1.dim(),
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteMeasure<T>> {
        match self {
            Self::Discrete(m) => Some(m),
            _ => None,
        }
    }

    /// One draw using the given generator.
    pub fn sample_one(&self, rng: &mut impl Rng) -> Point<T> {
        match self {
            Self::Discrete(m) => m.sample_one(rng),
            Self::UniformSphere { dim } => uniform_sphere_point(rng, *dim),
            Self::Mixture(components) => {
                let r: f64 = rng.random();
                let mut acc = 0.0;
                for (w, c) in components {
                    acc += w.as_f64();
                    if r < acc {
                        return c.sample_one(rng);
                    }
                }
                components[components.len() - 1].1.sample_one(rng)
            }
        }
    }
}

/// Draws per stream in [`sample`].
pub const SAMPLE_BLOCK: usize = 4096;

/// `n` i.i.d. draws; draw `i` comes from stream `i / 4096` of `seed`, so the
/// output does not depend on how many threads produce it.
pub fn sample<T: Scalar>(spec: &MeasureSpec<T>, n: usize, seed: u64) -> Result<Vec<Point<T>>> {
    if n == 0 {
        return Err(Error::InvalidArgument { name: "n", reason: "need at least one draw".into() });
    }
    let blocks = n.div_ceil(SAMPLE_BLOCK);
    let parts: Vec<Vec<Point<T>>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let len = SAMPLE_BLOCK.min(n - b * SAMPLE_BLOCK);
            (0..len).map(|_| spec.sample_one(&mut rng)).collect()
        })
        .collect();
    Ok(parts.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub mean: Vec<f64>,
    /// `∫ x xᵀ dμ`, row-major.
    pub second_moment_matrix: Vec<Vec<f64>>,
    pub second_moment: f64,
    pub balanced: bool,
    pub isotropic: bool,
    pub unit_second_moment: bool,
    pub tolerance: f64,
    /// `max_ij |∫ x_i x_j dμ - δ_ij / d|`.
    pub isotropy_error: f64,
    pub mean_norm: f64,
}

/// Exact moments of a discrete measure. `balanced` iff `‖mean‖ <= tol`,
/// `isotropic` iff `∫ x xᵀ dμ` is within `tol` of `I/d` entrywise.
pub fn moments<T: Scalar>(m: &DiscreteMeasure<T>, tol: f64) -> MomentReport {
    let d = m.dim();
    let mut mean = vec![0.0; d];
    let mut second = vec![vec![0.0; d]; d];
    for (p, w) in m.atoms.iter().zip(&m.weights) {
        let w = w.as_f64();
        let c: Vec<f64> = p.coords().iter().map(|x| x.as_f64()).collect();
        for i in 0..d {
            mean[i] += w * c[i];
            for j in 0..d {
                second[i][j] += w * c[i] * c[j];
            }
        }
    }
    let trace: f64 = (0..d).map(|i| second[i][i]).sum();
    let inv_d = 1.0 / d as f64;
    let isotropy_error = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| (second[i][j] - if i == j { inv_d } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    let mean_norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
    MomentReport {
        balanced: mean_norm <= tol,
        isotropic: isotropy_error <= tol,
        unit_second_moment: (trace - 1.0).abs() <= tol.max(d as f64 * tol),
        mean,
        second_moment_matrix: second,
        second_moment: trace,
        tolerance: tol,
        isotropy_error,
        mean_norm,
    }
}

/// Moments of `n` draws from a general spec, treated as an empirical measure.
pub fn sampled_moments<T: Scalar>(spec: &MeasureSpec<T>, n: usize, seed: u64, tol: f64) -> Result<MomentReport> {
    let pts = sample(spec, n, seed)?;
    Ok(moments(&DiscreteMeasure::uniform(pts)?, tol))
}

/// Tolerance on the unit second moment required by [`project_pi`].
pub const PROJECTION_TOL: f64 = 1e-10;

/// Pushes `μ` with `∫‖x‖² dμ = 1` to the sphere: the atom `x` of weight `w`
/// becomes `x / ‖x‖` with weight `w ‖x‖²`.
pub fn project_pi<T: Scalar>(m: &DiscreteMeasure<T>) -> Result<DiscreteMeasure<T>> {
    let second = m.second_moment();
    if (second - T::one()).abs() > T::tol(PROJECTION_TOL) {
        return Err(Error::InvalidArgument {
            name: "measure",
            reason: format!("second moment must be 1, found {second}"),
        });
    }
    let mut atoms = Vec::with_capacity(m.len());
    let mut weights = Vec::with_capacity(m.len());
    for (p, w) in m.atoms.iter().zip(&m.weights) {
        let r2 = p.dot(p);
        if r2 == T::zero() {
            return Err(Error::InvalidArgument { name: "measure", reason: "atom at the origin".into() });
        }
        atoms.push(p.normalized()?);
        weights.push(*w * r2);
    }
    // Renormalize away the rounding left after the second-moment check.
    let total: T = weights.iter().copied().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    DiscreteMeasure::new(atoms, weights)
}

/// `ψ(x) = sqrt(d/(d+1)) x + e_{d+1} / sqrt(d+1)`.
pub fn psi<T: Scalar>(p: &Point<T>) -> Point<T> {
    let d = T::from_usize_lossy(p.dim());
    let a = (d / (d + T::one())).sqrt();
    let mut coords: Vec<T> = p.coords().iter().map(|c| a * *c).collect();
    coords.push(T::one() / (d + T::one()).sqrt());
    if p.is_spherical() {
        Point::spherical(coords).expect("image of a unit vector")
    } else {
        Point::new(coords).expect("finite image")
    }
}

/// Pushforward of `μ` under [`psi`].
pub fn lift_psi<T: Scalar>(m: &DiscreteMeasure<T>) -> DiscreteMeasure<T> {
    DiscreteMeasure { atoms: m.atoms.iter().map(psi).collect(), weights: m.weights.clone() }
}

/// Constant in `V²(ψ(x_1), .., ψ(x_{d+1})) = (d!)² d^d / (d+1)^{d+1} · A²(x_1, .., x_{d+1})`.
pub fn a_to_v_constant(d: usize) -> f64 {
    let f: f64 = factorial(d);
    let df = d as f64;
    f * f * df.powi(d as i32) / (df + 1.0).powi(d as i32 + 1)
}

/// Largest relative residual of the lift relation between `I_{V²}` of the
/// lifted measure and `I_{A²}` of the original, both with `k = d + 1`, over
/// `trials` random five-atom measures on `S^{d-1}`.
pub fn a_to_v_residual(d: usize, trials: usize, seed: u64) -> Result<f64> {
    let a2 = kernel_a_pow::<f64>(d + 1, d, 2.0)?;
    let v2 = kernel_v_pow::<f64>(d + 1, d + 1, 2.0)?;
    let c = a_to_v_constant(d);
    let residuals: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let atoms: Vec<Point<f64>> = (0..5).map(|_| uniform_sphere_point(&mut rng, d)).collect();
            let raw: Vec<f64> = (0..5).map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = raw.iter().sum();
            let mu = DiscreteMeasure::new(atoms, raw.iter().map(|w| w / total).collect())?;
            let lhs = discrete_measure_energy(&v2, &lift_psi(&mu))?;
            let rhs = c * discrete_measure_energy(&a2, &mu)?;
            let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
            Ok((lhs - rhs).abs() / scale)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(residuals.into_iter().fold(0.0, f64::max))
}

/// The named measures addressable as `sigma:3`, `simplex:4`, and so on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedMeasure {
    Sigma(usize),
    OrthonormalBasis(usize),
    RegularSimplex(usize),
    AntipodalPair(usize),
    CrossPolytope(usize),
    /// Regular `n`-gon on `S^1`.
    Polygon(usize),
}

impl FromStr for NamedMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("expected name:dimension, got '{s}'")))?;
        let n: usize = arg.trim().parse().map_err(|_| Error::Parse(format!("bad dimension in '{s}'")))?;
        if n == 0 {
            return Err(Error::Parse(format!("dimension must be positive in '{s}'")));
        }
        Ok(match name.trim() {
            "sigma" | "uniform" => Self::Sigma(n),
            "onb" | "orthonormal_basis" => Self::OrthonormalBasis(n),
            "simplex" | "regular_simplex" => Self::RegularSimplex(n),
            "pair" | "antipodal_pair" => Self::AntipodalPair(n),
            "cross" | "cross_polytope" => Self::CrossPolytope(n),
            "polygon" => Self::Polygon(n),
            other => return Err(Error::Parse(format!("unknown measure '{other}'"))),
        })
    }
}

/// `d + 1` unit vectors in `R^d` with pairwise inner products `-1/d`, from
/// an eigen-factorization of their Gram matrix.
pub fn regular_simplex<T: Scalar>(d: usize) -> Result<Vec<Point<T>>> {
    if d == 0 {
        return Err(Error::InvalidArgument { name: "d", reason: "dimension must be positive".into() });
    }
    let n = d + 1;
    let off = -T::one() / T::from_usize_lossy(d);
    let g = SquareMatrix::from_fn(n, |i, j| if i == j { T::one() } else { off });
    let (vals, vecs) = symmetric_eigen(&g);
    // Eigenvalues are 0 (once, along the all-ones vector) and (d+1)/d.
    (0..n)
        .map(|i| Point::spherical((1..n).map(|j| vecs[(i, j)] * vals[j].max(T::zero()).sqrt()).collect()))
        .collect()
}

pub fn orthonormal_basis<T: Scalar>(d: usize) -> Vec<Point<T>> {
    (0..d).map(|i| Point::basis(d, i)).collect()
}

pub fn cross_polytope<T: Scalar>(d: usize) -> Vec<Point<T>> {
    (0..d).flat_map(|i| [Point::basis(d, i), Point::basis(d, i).scaled(-T::one())]).map(mark_spherical).collect()
}

pub fn regular_polygon<T: Scalar>(n: usize) -> Vec<Point<T>> {
    (0..n)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            Point::spherical(vec![T::c(a.cos()), T::c(a.sin())]).expect("unit vector")
        })
        .collect()
}

fn mark_spherical<T: Scalar>(p: Point<T>) -> Point<T> {
    Point::spherical(p.coords().to_vec()).expect("unit vector")
}

pub fn make_named_measure<T: Scalar>(name: NamedMeasure) -> Result<MeasureSpec<T>> {
    Ok(match name {
        NamedMeasure::Sigma(d) => MeasureSpec::UniformSphere { dim: d },
        NamedMeasure::OrthonormalBasis(d) => MeasureSpec::Discrete(DiscreteMeasure::uniform(orthonormal_basis(d))?),
        NamedMeasure::RegularSimplex(d) => MeasureSpec::Discrete(DiscreteMeasure::uniform(regular_simplex(d)?)?),
        NamedMeasure::AntipodalPair(d) => {
            let p = Point::basis(d, 0);
            let q = mark_spherical(p.scaled(-T::one()));
            MeasureSpec::Discrete(DiscreteMeasure::uniform(vec![p, q])?)
        }
        NamedMeasure::CrossPolytope(d) => MeasureSpec::Discrete(DiscreteMeasure::uniform(cross_polytope(d))?),
        NamedMeasure::Polygon(n) => MeasureSpec::Discrete(DiscreteMeasure::uniform(regular_polygon(n))?),
    })
}

/// JSON form of a [`MeasureSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum MeasureDocument {
    Discrete { dim: usize, atoms: Vec<Vec<f64>>, weights: Vec<f64> },
    UniformSphere { dim: usize },
    Mixture { components: Vec<MixtureComponent> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub measure: MeasureDocument,
}

impl<T: Scalar> MeasureSpec<T> {
    pub fn to_document(&self) -> MeasureDocument {
        match self {
            Self::Discrete(m) => MeasureDocument::Discrete {
                dim: m.dim(),
                atoms: m.atoms.iter().map(|p| p.coords().iter().map(|c| c.as_f64()).collect()).collect(),
                weights: m.weights.iter().map(|w| w.as_f64()).collect(),
            },
            Self::UniformSphere { dim } => MeasureDocument::UniformSphere { dim: *dim },
            Self::Mixture(c) => MeasureDocument::Mixture {
                components: c
                    .iter()
                    .map(|(w, m)| MixtureComponent { weight: w.as_f64(), measure: m.to_document() })
                    .collect(),
            },
        }
    }

    /// Atoms of unit norm (within `1e-12`) are stored as spherical points.
    pub fn from_document(doc: &MeasureDocument) -> Result<Self> {
        Ok(match doc {
            MeasureDocument::Discrete { dim, atoms, weights } => {
                let atoms = atoms
                    .iter()
                    .map(|row| {
                        if row.len() != *dim {
                            return Err(Error::DimensionMismatch { expected: *dim, found: row.len() });
                        }
                        let coords: Vec<T> = row.iter().map(|c| T::c(*c)).collect();
                        let r = row.iter().map(|c| c * c).sum::<f64>().sqrt();
                        if (r - 1.0).abs() <= 1e-12 {
                            Point::spherical(coords)
                        } else {
                            Point::new(coords)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::Discrete(DiscreteMeasure::new(atoms, weights.iter().map(|w| T::c(*w)).collect())?)
            }
            MeasureDocument::UniformSphere { dim } => {
                if *dim == 0 {
                    return Err(Error::InvalidArgument { name: "dim", reason: "must be positive".into() });
                }
                Self::UniformSphere { dim: *dim }
            }
            MeasureDocument::Mixture { components } => Self::mixture(
                components
                    .iter()
                    .map(|c| Ok((T::c(c.weight), Self::from_document(&c.measure)?)))
                    .collect::<Result<Vec<_>>>()?,
            )?,
        })
    }

    /// Accepts a named measure (`simplex:3`) or a JSON document.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.starts_with('{') {
            let doc: MeasureDocument = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
            Self::from_document(&doc)
        } else {
            make_named_measure(text.parse()?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    #[test]
    fn weights_are_validated() {
        let p = Point::<f64>::basis(2, 0);
        assert!(DiscreteMeasure::new(vec![p.clone()], vec![0.9]).is_err());
        assert!(DiscreteMeasure::new(vec![p.clone(), p.clone()], vec![1.5, -0.5]).is_err());
        assert!(DiscreteMeasure::new(vec![p.clone(), Point::basis(3, 0)], vec![0.5, 0.5]).is_err());
        assert!(DiscreteMeasure::new(vec![p], vec![1.0]).is_ok());
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = MeasureSpec::<f64>::UniformSphere { dim: 3 };
        let a = sample(&s, 10_000, 5).unwrap();
        let b = sample(&s, 10_000, 5).unwrap();
        assert_eq!(a, b);
        let single = MeasureSpec::Discrete(DiscreteMeasure::uniform(vec![Point::<f64>::basis(3, 1)]).unwrap());
        assert!(sample(&single, 50, 1).unwrap().iter().all(|p| *p == Point::basis(3, 1)));
    }

    #[test]
    fn uniform_sphere_moments() {
        let s = MeasureSpec::<f64>::UniformSphere { dim: 3 };
        let n = 200_000;
        let r = sampled_moments(&s, n, 11, 5e-3).unwrap();
        assert!(r.mean_norm <= 4.0 / (n as f64).sqrt() * 3f64.sqrt());
        assert!(r.isotropic);
    }

    #[test]
    fn mixture_sampling_respects_weights() {
        let a = make_named_measure::<f64>(NamedMeasure::AntipodalPair(2)).unwrap();
        let b = MeasureSpec::Discrete(DiscreteMeasure::uniform(vec![Point::basis(2, 1)]).unwrap());
        let mix = MeasureSpec::mixture(vec![(0.25, a), (0.75, b)]).unwrap();
        let pts = sample(&mix, 40_000, 3).unwrap();
        let frac = pts.iter().filter(|p| p.coords()[1] == 1.0).count() as f64 / pts.len() as f64;
        assert!((frac - 0.75).abs() < 0.01);
        assert!(MeasureSpec::<f64>::mixture(vec![]).is_err());
    }

    #[test]
    fn named_measure_moments() {
        for d in 2..=6 {
            let onb = DiscreteMeasure::<f64>::uniform(orthonormal_basis(d)).unwrap();
            let r = moments(&onb, MOMENT_TOL);
            assert!(r.isotropic && !r.balanced && r.unit_second_moment);
            let simplex = regular_simplex::<f64>(d).unwrap();
            for i in 0..=d {
                for j in 0..i {
                    assert!((simplex[i].dot(&simplex[j]) + 1.0 / d as f64).abs() < 1e-12);
                }
            }
            let r = moments(&DiscreteMeasure::uniform(simplex).unwrap(), MOMENT_TOL);
            assert!(r.isotropic && r.balanced);
            let r = moments(&DiscreteMeasure::uniform(cross_polytope::<f64>(d)).unwrap(), MOMENT_TOL);
            assert!(r.isotropic && r.balanced);
            let pair = make_named_measure::<f64>(NamedMeasure::AntipodalPair(d)).unwrap();
            let r = moments(pair.as_discrete().unwrap(), MOMENT_TOL);
            assert!(r.balanced && !r.isotropic);
            let single = DiscreteMeasure::uniform(vec![Point::<f64>::basis(d, 0)]).unwrap();
            let r = moments(&single, MOMENT_TOL);
            assert!(!r.balanced && !r.isotropic);
        }
        for n in 3..=7 {
            let r = moments(&DiscreteMeasure::uniform(regular_polygon::<f64>(n)).unwrap(), MOMENT_TOL);
            assert!(r.isotropic && r.balanced, "n={n}");
        }
    }

    #[test]
    fn projection_examples() {
        let a = (4.0f64 / 3.0).sqrt();
        let b = (2.0f64 / 3.0).sqrt();
        let m = DiscreteMeasure::new(
            vec![Point::new(vec![a, 0.0]).unwrap(), Point::new(vec![0.0, b]).unwrap()],
            vec![0.5, 0.5],
        )
        .unwrap();
        let p = project_pi(&m).unwrap();
        assert!((p.weights()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.weights()[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.atoms()[0].coords(), &[1.0, 0.0]);
        let on_sphere = DiscreteMeasure::<f64>::uniform(regular_simplex(3).unwrap()).unwrap();
        let q = project_pi(&on_sphere).unwrap();
        for (x, y) in q.atoms().iter().zip(on_sphere.atoms()) {
            assert!(x.coords().iter().zip(y.coords()).all(|(a, b)| (a - b).abs() < 1e-15));
        }
        let origin = DiscreteMeasure::new(
            vec![Point::new(vec![0.0, 0.0]).unwrap(), Point::new(vec![2f64.sqrt(), 0.0]).unwrap()],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert!(project_pi(&origin).is_err());
        let short = DiscreteMeasure::new(vec![Point::new(vec![0.5, 0.0]).unwrap()], vec![1.0]).unwrap();
        assert!(project_pi(&short).is_err());
    }

    #[test]
    fn psi_examples() {
        let e1 = Point::<f64>::basis(2, 0);
        let img = psi(&e1);
        let want = [(2.0f64 / 3.0).sqrt(), 0.0, 1.0 / 3f64.sqrt()];
        assert!(img.coords().iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!((dot(img.coords(), img.coords()) - 1.0).abs() < 1e-15);
        for d in 2..=5 {
            let simplex = DiscreteMeasure::<f64>::uniform(regular_simplex(d).unwrap()).unwrap();
            let r = moments(&lift_psi(&simplex), 1e-10);
            assert!(r.isotropic, "d={d}: {}", r.isotropy_error);
            let onb = DiscreteMeasure::<f64>::uniform(orthonormal_basis(d)).unwrap();
            assert!(!moments(&lift_psi(&onb), 1e-10).isotropic);
        }
    }

    #[test]
    fn a_to_v_relation() {
        for d in 1..=4 {
            assert!(a_to_v_residual(d, 10, 3).unwrap() < 1e-10, "d={d}");
        }
    }

    #[test]
    fn parsing_and_json() {
        assert_eq!("sigma:3".parse::<NamedMeasure>().unwrap(), NamedMeasure::Sigma(3));
        assert_eq!("cross:4".parse::<NamedMeasure>().unwrap(), NamedMeasure::CrossPolytope(4));
        assert!("blob:3".parse::<NamedMeasure>().is_err());
        assert!("sigma".parse::<NamedMeasure>().is_err());
        let spec = MeasureSpec::<f64>::parse("simplex:3").unwrap();
        let json = serde_json::to_string(&spec.to_document()).unwrap();
        assert!(json.contains("\"variant\":\"discrete\""));
        let back = MeasureSpec::<f64>::parse(&json).unwrap();
        let (a, b) = (back.as_discrete().unwrap(), spec.as_discrete().unwrap());
        assert_eq!(a.weights(), b.weights());
        for (x, y) in a.atoms().iter().zip(b.atoms()) {
            assert!(x.is_spherical());
            assert!(x.coords().iter().zip(y.coords()).all(|(p, q)| (p - q).abs() < 1e-15));
        }
        let sigma = MeasureSpec::<f64>::parse(r#"{"variant": "uniform_sphere", "dim": 4}"#).unwrap();
        assert_eq!(sigma, MeasureSpec::UniformSphere { dim: 4 });
        let mix = r#"{"variant":"mixture","components":[{"weight":0.5,"measure":{"variant":"uniform_sphere","dim":2}},
            {"weight":0.5,"measure":{"variant":"discrete","dim":2,"atoms":[[1,0]],"weights":[1]}}]}"#;
        assert!(matches!(MeasureSpec::<f64>::parse(mix).unwrap(), MeasureSpec::Mixture(_)));
    }
}
