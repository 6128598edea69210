//! Riemannian gradient ascent of discrete energies over `(S^{d-1})^N`, local
//! maximality probes, and empirical k-positive-definiteness checks.

use itertools::Itertools;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::energy::discrete_energy_value;
use crate::error::{Error, Result};
use crate::geom::{gram_matrix, Point, PointConfig};
use crate::kernels::MultiKernel;
use crate::linalg::{symmetric_eigenvalues, SquareMatrix};
use crate::sampling::{stream_rng, uniform_sphere_points};
use crate::scalar::{falling_factorial, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AscentConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub initial_step: f64,
    /// Step multiplier after a failed Armijo test.
    pub backtrack: f64,
    pub armijo: f64,
    /// Stop once the Riemannian gradient norm falls below this. Line searches
    /// compare energy values, which pins a maximizer down only to about
    /// `sqrt(eps)`, so much below `1e-8` is rarely reachable.
    pub tol: f64,
    pub seed: u64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self { restarts: 20, max_iters: 5000, initial_step: 0.1, backtrack: 0.5, armijo: 1e-4, tol: 1e-8, seed: 0 }
    }
}

impl AscentConfig {
    fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| Err(Error::InvalidArgument { name, reason: reason.into() });
        if self.restarts == 0 {
            return bad("restarts", "need at least one restart");
        }
        if self.max_iters == 0 {
            return bad("max_iters", "need at least one iteration");
        }
        if !(self.initial_step > 0.0) {
            return bad("initial_step", "must be positive");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack", "must lie in (0, 1)");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("armijo", "must lie in (0, 1)");
        }
        if !(self.tol > 0.0) {
            return bad("tol", "must be positive");
        }
        Ok(())
    }
}

/// Outcome of one restart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartOutcome {
    pub restart: usize,
    /// Stream the successful attempt drew its start from.
    pub stream: u64,
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Every accepted step increased the energy.
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentResult<T> {
    pub best_config: PointConfig<T>,
    pub best_energy: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartOutcome>,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Gradient norm reached `tol` (otherwise `max_iters` or a stalled line
    /// search ended the best restart).
    pub converged: bool,
    /// Attempts thrown away because of non-finite energies or gradients.
    pub discarded: usize,
}

fn tangent_project<T: Scalar>(x: &[T], g: &mut [T]) {
    let r = x.iter().zip(g.iter()).map(|(a, b)| *a * *b).sum::<T>();
    g.iter_mut().zip(x).for_each(|(gi, xi)| *gi -= r * *xi);
}

/// Energy and Riemannian gradient (tangent projection of the Euclidean
/// gradient at each point) of `E_K` at the given points.
pub fn energy_and_gradient<T: Scalar>(kernel: &MultiKernel<T>, points: &[Point<T>]) -> Result<(T, Vec<Vec<T>>)> {
    let value = discrete_energy_value(kernel, points)?;
    let n = points.len();
    let k = kernel.arity();
    let d = kernel.dim();
    let singular = kernel.flags().singular;
    let tuples: Vec<Vec<usize>> = if singular {
        (0..n).permutations(k).collect()
    } else {
        (0..k).map(|_| 0..n).multi_cartesian_product().collect()
    };
    let norm = if singular { T::one() / falling_factorial::<T>(n, k) } else { T::one() / T::from_usize_lossy(n).powi(k as i32) };
    let partial: Vec<Vec<Vec<T>>> = tuples
        .par_chunks(256)
        .map(|chunk| {
            let mut acc = vec![vec![T::zero(); d]; n];
            let mut args: Vec<&Point<T>> = Vec::with_capacity(k);
            for t in chunk {
                args.clear();
                args.extend(t.iter().map(|&i| &points[i]));
                for (pos, row) in kernel.gradient(&args).into_iter().enumerate() {
                    acc[t[pos]].iter_mut().zip(row).for_each(|(a, v)| *a += v);
                }
            }
            acc
        })
        .collect();
    let mut grad = vec![vec![T::zero(); d]; n];
    for block in partial {
        for (g, b) in grad.iter_mut().zip(block) {
            g.iter_mut().zip(b).for_each(|(a, v)| *a += v);
        }
    }
    for (g, p) in grad.iter_mut().zip(points) {
        g.iter_mut().for_each(|v| *v *= norm);
        tangent_project(p.coords(), g);
    }
    if grad.iter().flatten().any(|v| !v.is_finite()) {
        return Err(if singular { Error::CoincidentPoints } else { Error::NonFinite });
    }
    Ok((value, grad))
}

/// Riemannian gradient of `E_K` at `config`.
pub fn gradient<T: Scalar>(kernel: &MultiKernel<T>, config: &PointConfig<T>) -> Result<Vec<Vec<T>>> {
    Ok(energy_and_gradient(kernel, config.points())?.1)
}

fn grad_norm<T: Scalar>(g: &[Vec<T>]) -> T {
    g.iter().flatten().map(|v| *v * *v).sum::<T>().sqrt()
}

fn retract<T: Scalar>(points: &[Point<T>], dir: &[Vec<T>], step: T) -> Result<Vec<Point<T>>> {
    points
        .iter()
        .zip(dir)
        .map(|(p, g)| Point::spherical(p.coords().iter().zip(g).map(|(x, v)| *x + step * *v).collect()))
        .collect()
}

struct Ascent<T> {
    points: Vec<Point<T>>,
    energy: T,
    grad_norm: T,
    iterations: usize,
    converged: bool,
    monotone: bool,
}

fn ascend<T: Scalar>(kernel: &MultiKernel<T>, start: Vec<Point<T>>, cfg: &AscentConfig) -> Result<Ascent<T>> {
    let mut points = start;
    let (mut energy, mut grad) = energy_and_gradient(kernel, &points)?;
    if !energy.is_finite() {
        return Err(Error::NonFinite);
    }
    let mut step = T::c(cfg.initial_step);
    let max_step = T::c(cfg.initial_step * 64.0);
    let min_step = T::epsilon();
    let mut monotone = true;
    let mut iterations = 0;
    let mut gnorm = grad_norm(&grad);
    let tol = T::c(cfg.tol);
    while iterations < cfg.max_iters && gnorm > tol {
        iterations += 1;
        let g2 = gnorm * gnorm;
        let mut accepted = None;
        while step > min_step {
            let trial = retract(&points, &grad, step)?;
            let e = discrete_energy_value(kernel, &trial)?;
            if e.is_finite() && e >= energy + T::c(cfg.armijo) * step * g2 {
                accepted = Some((trial, e));
                break;
            }
            step *= T::c(cfg.backtrack);
        }
        let Some((trial, e)) = accepted else {
            // No step of representable size improves the energy.
            break;
        };
        monotone &= e >= energy;
        let stalled = e == energy;
        points = trial;
        energy = e;
        let (_, g) = energy_and_gradient(kernel, &points)?;
        grad = g;
        gnorm = grad_norm(&grad);
        step = (step / T::c(cfg.backtrack)).min(max_step);
        if stalled {
            break;
        }
    }
    Ok(Ascent { points, energy, grad_norm: gnorm, iterations, converged: gnorm <= tol, monotone })
}

/// Maximizes `E_K` over `N` points on `S^{d-1}` by projected gradient ascent
/// with Armijo backtracking, from `cfg.restarts` uniform random starts.
///
/// Restart `r` first draws from stream `r` of `cfg.seed`; if that attempt
/// hits a non-finite value it is retried from streams `r + R`, `r + 2R`
/// (`R` restarts), so at most three times the budget is spent. Ties in the
/// best energy go to the lowest restart index.
pub fn maximize_discrete<T: Scalar>(
    kernel: &MultiKernel<T>,
    n: usize,
    d: usize,
    cfg: &AscentConfig,
) -> Result<AscentResult<T>> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument { name: "N", reason: "need at least one point".into() });
    }
    if d != kernel.dim() {
        return Err(Error::DimensionMismatch { expected: kernel.dim(), found: d });
    }
    if kernel.flags().singular && n < kernel.arity() {
        return Err(Error::InvalidArgument {
            name: "N",
            reason: format!("singular kernels need N >= k = {}", kernel.arity()),
        });
    }
    let r_total = cfg.restarts;
    let runs: Vec<(usize, Option<(RestartOutcome, Vec<Point<T>>)>, usize)> = (0..r_total)
        .into_par_iter()
        .map(|r| {
            let mut discarded = 0;
            for attempt in 0..3 {
                let stream = (r + attempt * r_total) as u64;
                let mut rng = stream_rng(cfg.seed, stream);
                let start = uniform_sphere_points(&mut rng, d, n);
                match ascend(kernel, start, cfg) {
                    Ok(a) if a.energy.is_finite() => {
                        let outcome = RestartOutcome {
                            restart: r,
                            stream,
                            energy: a.energy.as_f64(),
                            grad_norm: a.grad_norm.as_f64(),
                            iterations: a.iterations,
                            converged: a.converged,
                            monotone: a.monotone,
                        };
                        return (r, Some((outcome, a.points)), discarded);
                    }
                    _ => discarded += 1,
                }
            }
            (r, None, discarded)
        })
        .collect();
    let discarded = runs.iter().map(|r| r.2).sum();
    let mut outcomes = Vec::with_capacity(r_total);
    let mut best: Option<(RestartOutcome, Vec<Point<T>>)> = None;
    for (_, run, _) in runs {
        if let Some((o, pts)) = run {
            outcomes.push(o.clone());
            if best.as_ref().is_none_or(|(b, _)| o.energy > b.energy) {
                best = Some((o, pts));
            }
        }
    }
    let (b, pts) = best.ok_or(Error::NonFinite)?;
    Ok(AscentResult {
        best_config: PointConfig::new(pts)?,
        best_energy: b.energy,
        best_restart: b.restart,
        grad_norm: b.grad_norm,
        iterations: b.iterations,
        converged: b.converged,
        restarts: outcomes,
        discarded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateReport {
    pub pass: bool,
    /// Largest energy change seen among the perturbations.
    pub max_increase: f64,
    pub trials: usize,
    pub radius: f64,
}

/// Energy increase regarded as numerical noise by [`local_max_certificate`].
pub const CERTIFICATE_TOL: f64 = 1e-10;

/// Tries `trials` random tangent perturbations of total size at most
/// `radius` (then renormalized onto the sphere); passes if none raises `E_K`
/// by more than `1e-10`.
pub fn local_max_certificate<T: Scalar>(
    kernel: &MultiKernel<T>,
    config: &PointConfig<T>,
    trials: usize,
    radius: f64,
    seed: u64,
) -> Result<CertificateReport> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument { name: "radius", reason: "must be positive".into() });
    }
    let points = config.points();
    let base = discrete_energy_value(kernel, points)?.as_f64();
    let d = config.dim();
    let increases: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            let mut dir: Vec<Vec<T>> = points
                .iter()
                .map(|p| {
                    let mut g: Vec<T> = (0..d).map(|_| T::c(rng.sample(StandardNormal))).collect();
                    tangent_project(p.coords(), &mut g);
                    g
                })
                .collect();
            let norm = grad_norm(&dir);
            let size = T::c(radius * rng.random::<f64>().max(1e-3));
            if norm > T::zero() {
                dir.iter_mut().flatten().for_each(|v| *v *= size / norm);
            }
            let moved = retract(points, &dir, T::one())?;
            Ok(discrete_energy_value(kernel, &moved)?.as_f64() - base)
        })
        .collect::<Result<Vec<_>>>()?;
    let max_increase = increases.into_iter().fold(f64::NEG_INFINITY, f64::max);
    Ok(CertificateReport { pass: !(max_increase > CERTIFICATE_TOL), max_increase, trials, radius })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdReport {
    pub label: String,
    pub n_points: usize,
    pub n_tails: usize,
    /// Smallest eigenvalue over all tails divided by
    /// `max(|trace|, ‖M‖_F)` of its matrix.
    pub min_normalized_eigenvalue: f64,
    pub worst_tail: usize,
    pub threshold: f64,
    pub consistent: bool,
}

/// Threshold on the normalized eigenvalue for a kernel to count as
/// consistent with k-positive definiteness.
pub const PSD_THRESHOLD: f64 = -1e-8;

/// Smallest eigenvalue of `M` relative to `max(|tr M|, ‖M‖_F)`; for a
/// positive semidefinite matrix the scale is its trace, and the Frobenius
/// floor keeps indefinite matrices with vanishing trace comparable.
pub fn normalized_min_eigenvalue<T: Scalar>(m: &SquareMatrix<T>) -> f64 {
    let sym = SquareMatrix::from_fn(m.order(), |i, j| (m[(i, j)] + m[(j, i)]) / T::c(2.0));
    let min = symmetric_eigenvalues(&sym)[0].as_f64();
    let scale = sym.trace().abs().max(sym.frobenius()).as_f64();
    if scale == 0.0 {
        0.0
    } else {
        min / scale
    }
}

/// For each of `n_tails` random tails `z_3..z_k`, the matrix
/// `M_ij = K(x_i, x_j, z_3, .., z_k)` over `n_points` uniform random points;
/// reports the smallest normalized eigenvalue. Tail `t` uses stream `t`.
pub fn psd_empirical<T: Scalar>(
    kernel: &MultiKernel<T>,
    n_points: usize,
    n_tails: usize,
    seed: u64,
) -> Result<PsdReport> {
    if n_points < 2 {
        return Err(Error::InvalidArgument { name: "n_points", reason: "need at least two points".into() });
    }
    if n_tails == 0 {
        return Err(Error::InvalidArgument { name: "n_tails", reason: "need at least one tail".into() });
    }
    let k = kernel.arity();
    if k < 2 {
        return Err(Error::InvalidArity { arity: k, reason: "positive definiteness needs two free inputs".into() });
    }
    let d = kernel.dim();
    let per_tail: Vec<f64> = (0..n_tails)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            let tail: Vec<Point<T>> = uniform_sphere_points(&mut rng, d, k - 2);
            let pts: Vec<Point<T>> = uniform_sphere_points(&mut rng, d, n_points);
            let slice = kernel.slice(tail)?;
            Ok(normalized_min_eigenvalue(&slice.matrix(&pts)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (worst_tail, min) =
        per_tail.iter().copied().enumerate().fold((0, f64::INFINITY), |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) });
    Ok(PsdReport {
        label: kernel.label().to_string(),
        n_points,
        n_tails,
        min_normalized_eigenvalue: min,
        worst_tail,
        threshold: PSD_THRESHOLD,
        consistent: min >= PSD_THRESHOLD,
    })
}

/// Largest entrywise difference between the Gram matrices of two
/// configurations, minimized over relabelings of the second one. With
/// `up_to_sign`, entries are compared in absolute value (each point may be
/// replaced by its antipode). Two configurations related by an orthogonal
/// map have identical Gram matrices, so a small value means they agree up to
/// rotation and reflection.
pub fn gram_distance<T: Scalar>(a: &PointConfig<T>, b: &PointConfig<T>, up_to_sign: bool) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument { name: "config", reason: "configurations differ in size".into() });
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let n = a.len();
    if n > 9 {
        return Err(Error::InvalidArgument { name: "config", reason: "relabeling search limited to 9 points".into() });
    }
    let ga = gram_matrix(&a.refs());
    let gb = gram_matrix(&b.refs());
    let f = |v: T| if up_to_sign { v.abs() } else { v };
    let best = (0..n)
        .permutations(n)
        .map(|perm| {
            let mut worst = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max((f(ga[(i, j)]) - f(gb[(perm[i], perm[j])])).abs().as_f64());
                }
            }
            worst
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{constant, kernel_a_pow, kernel_frame, kernel_v_pow, scale, symmetrize};
    use crate::measures::{orthonormal_basis, regular_simplex};
    use crate::sdp::q_kernel;

    fn cfg(points: Vec<Point<f64>>) -> PointConfig<f64> {
        PointConfig::new(points).unwrap()
    }

    #[test]
    fn gradient_vanishes_at_regular_simplex() {
        for d in 2..=3 {
            let k = kernel_a_pow(3, d, 2.0).unwrap();
            let g = gradient(&k, &cfg(regular_simplex(d).unwrap())).unwrap();
            assert!(grad_norm(&g) < 1e-12);
        }
        let c = constant(3, 3, 1.5).unwrap();
        let pts = uniform_sphere_points::<f64>(&mut stream_rng(1, 0), 3, 4);
        assert_eq!(grad_norm(&gradient(&c, &cfg(pts)).unwrap()), 0.0);
    }

    #[test]
    fn energy_gradient_matches_differences() {
        let kernels =
            [kernel_a_pow(3, 3, 2.0).unwrap(), kernel_v_pow(3, 3, 2.0).unwrap(), kernel_frame(3).unwrap()];
        for k in &kernels {
            let pts = uniform_sphere_points::<f64>(&mut stream_rng(2, 0), 3, 4);
            let (_, g) = energy_and_gradient(k, &pts).unwrap();
            // Directional derivative along a tangent direction through the retraction.
            let mut rng = stream_rng(3, 0);
            let mut dir: Vec<Vec<f64>> =
                pts.iter().map(|_| (0..3).map(|_| rng.sample(StandardNormal)).collect()).collect();
            for (v, p) in dir.iter_mut().zip(&pts) {
                tangent_project(p.coords(), v);
            }
            let h = 1e-6;
            let plus = discrete_energy_value(k, &retract(&pts, &dir, h).unwrap()).unwrap();
            let minus = discrete_energy_value(k, &retract(&pts, &dir, -h).unwrap()).unwrap();
            let fd = (plus - minus) / (2.0 * h);
            let an: f64 = g.iter().flatten().zip(dir.iter().flatten()).map(|(a, b)| a * b).sum();
            assert!((fd - an).abs() < 1e-7 * an.abs().max(1.0), "{}: {fd} vs {an}", k.label());
        }
    }

    #[test]
    fn recovers_triangle() {
        let k = kernel_a_pow(3, 2, 2.0).unwrap();
        let c = AscentConfig { restarts: 6, seed: 4, ..Default::default() };
        let r = maximize_discrete(&k, 3, 2, &c).unwrap();
        assert!((r.best_energy - 3.0 / 8.0).abs() < 1e-9);
        assert!(r.restarts.iter().all(|o| o.monotone));
        let target = cfg(regular_simplex(2).unwrap());
        assert!(gram_distance(&r.best_config, &target, false).unwrap() < 1e-4);
        let cert = local_max_certificate(&k, &r.best_config, 200, 1e-3, 1).unwrap();
        assert!(cert.pass);
    }

    #[test]
    fn two_point_v_cubed() {
        let k = kernel_v_pow(2, 2, 3.0).unwrap();
        let c = AscentConfig { restarts: 4, seed: 1, ..Default::default() };
        let r = maximize_discrete(&k, 2, 2, &c).unwrap();
        assert!((r.best_energy - 0.5).abs() < 1e-9);
        assert!(gram_distance(&r.best_config, &cfg(orthonormal_basis(2)), true).unwrap() < 1e-4);
    }

    #[test]
    fn determinism() {
        let k = kernel_a_pow(3, 3, 1.0).unwrap();
        let c = AscentConfig { restarts: 3, max_iters: 50, seed: 9, ..Default::default() };
        let a = maximize_discrete(&k, 4, 3, &c).unwrap();
        let b = maximize_discrete(&k, 4, 3, &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn certificate_rejects_generic_points() {
        let k = kernel_a_pow(3, 3, 2.0).unwrap();
        let pts = uniform_sphere_points::<f64>(&mut stream_rng(5, 0), 3, 4);
        assert!(!local_max_certificate(&k, &cfg(pts.clone()), 100, 1e-2, 2).unwrap().pass);
        let c = constant(3, 3, 2.0).unwrap();
        assert!(local_max_certificate(&c, &cfg(pts), 50, 1e-2, 2).unwrap().pass);
    }

    #[test]
    fn psd_examples() {
        let q = q_kernel::<f64>(3, 1, 3).unwrap();
        assert!(psd_empirical(&q, 30, 5, 1).unwrap().consistent);
        let f = kernel_frame::<f64>(3).unwrap();
        assert!(psd_empirical(&f, 30, 3, 1).unwrap().consistent);
        let neg_a = scale(&symmetrize(&kernel_a_pow::<f64>(3, 3, 2.0).unwrap()), -1.0);
        let r = psd_empirical(&neg_a, 60, 20, 1).unwrap();
        assert!(!r.consistent && r.min_normalized_eigenvalue < -1e-6);
    }

    #[test]
    fn validation() {
        let k = kernel_a_pow(3, 2, 2.0).unwrap();
        let bad = AscentConfig { backtrack: 1.5, ..Default::default() };
        assert!(maximize_discrete(&k, 3, 2, &bad).is_err());
        assert!(maximize_discrete(&k, 3, 3, &AscentConfig::default()).is_err());
        assert!(psd_empirical(&k, 1, 1, 0).is_err());
    }
}
