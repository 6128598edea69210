//! Discrete energies `E_K(ω_N)`, energy integrals `I_K(μ)` and reference
//! values to compare them with.

use itertools::Itertools;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gegenbauer::VolumeKind;
use crate::geom::{Point, PointConfig};
use crate::kernels::{kernel_a_pow, kernel_v_pow, MultiKernel};
use crate::measures::{DiscreteMeasure, MeasureSpec};
use crate::sampling::stream_rng;
use crate::scalar::{binomial, factorial, falling_factorial, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyEstimate {
    pub value: f64,
    /// Zero on exact paths.
    pub std_error: f64,
    pub samples_used: u64,
    pub exact: bool,
}

impl EnergyEstimate {
    pub fn exact(value: f64, samples_used: u64) -> Self {
        Self { value, std_error: 0.0, samples_used, exact: true }
    }

    /// `(value - reference) / std_error`; zero when both coincide exactly.
    pub fn z_score(&self, reference: f64) -> f64 {
        z_score(self.value, self.std_error, reference)
    }
}

pub fn z_score(value: f64, std_error: f64, reference: f64) -> f64 {
    let diff = value - reference;
    if std_error > 0.0 {
        diff / std_error
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

fn validate_points<T: Scalar>(kernel: &MultiKernel<T>, points: &[Point<T>]) -> Result<()> {
    for p in points {
        if p.dim() != kernel.dim() {
            return Err(Error::DimensionMismatch { expected: kernel.dim(), found: p.dim() });
        }
        if kernel.flags().spherical_only {
            p.check_unit()?;
        }
    }
    Ok(())
}

/// `Σ_tuples Π w_{i_j} K(x_{i_1}, .., x_{i_k})` over all ordered index tuples,
/// iterating multisets with multinomial multiplicities when the kernel is
/// flagged fully symmetric. Parallel over the first index; partial sums are
/// combined in index order.
fn weighted_tuple_sum<T: Scalar>(kernel: &MultiKernel<T>, atoms: &[Point<T>], weights: &[T]) -> T {
    let n = atoms.len();
    let k = kernel.arity();
    if kernel.flags().symmetric_all {
        let k_fact: T = factorial(k);
        let partials: Vec<T> = (0..n)
            .into_par_iter()
            .map(|first| {
                let mut acc = T::zero();
                let mut args: Vec<&Point<T>> = Vec::with_capacity(k);
                for rest in (first..n).combinations_with_replacement(k - 1) {
                    args.clear();
                    args.push(&atoms[first]);
                    args.extend(rest.iter().map(|&i| &atoms[i]));
                    let mut w = weights[first];
                    let mut mult = T::one();
                    let mut run = 1usize;
                    let mut prev = first;
                    for &i in &rest {
                        w *= weights[i];
                        if i == prev {
                            run += 1;
                            mult *= T::from_usize_lossy(run);
                        } else {
                            run = 1;
                            prev = i;
                        }
                    }
                    if w != T::zero() {
                        acc += k_fact / mult * w * kernel.eval_unchecked(&args);
                    }
                }
                acc
            })
            .collect();
        partials.into_iter().sum()
    } else if k == 1 {
        (0..n).map(|i| weights[i] * kernel.eval_unchecked(&[&atoms[i]])).sum()
    } else {
        let partials: Vec<T> = (0..n)
            .into_par_iter()
            .map(|first| {
                let mut acc = T::zero();
                let mut args: Vec<&Point<T>> = Vec::with_capacity(k);
                for rest in (0..k - 1).map(|_| 0..n).multi_cartesian_product() {
                    let w = rest.iter().fold(weights[first], |w, &i| w * weights[i]);
                    if w == T::zero() {
                        continue;
                    }
                    args.clear();
                    args.push(&atoms[first]);
                    args.extend(rest.iter().map(|&i| &atoms[i]));
                    acc += w * kernel.eval_unchecked(&args);
                }
                acc
            })
            .collect();
        partials.into_iter().sum()
    }
}

/// `Σ` over tuples of pairwise distinct indices, divided by `N (N-1) .. (N-k+1)`.
fn distinct_tuple_mean<T: Scalar>(kernel: &MultiKernel<T>, atoms: &[Point<T>]) -> T {
    let n = atoms.len();
    let k = kernel.arity();
    let partials: Vec<T> = (0..n)
        .into_par_iter()
        .map(|first| {
            let others: Vec<usize> = (0..n).filter(|&i| i != first).collect();
            let mut acc = T::zero();
            let mut args: Vec<&Point<T>> = Vec::with_capacity(k);
            for rest in others.into_iter().permutations(k - 1) {
                args.clear();
                args.push(&atoms[first]);
                args.extend(rest.iter().map(|&i| &atoms[i]));
                acc += kernel.eval_unchecked(&args);
            }
            acc
        })
        .collect();
    partials.into_iter().sum::<T>() / falling_factorial::<T>(n, k)
}

/// `E_K(ω_N) = N^{-k} Σ K` over all `N^k` ordered tuples, repeats included.
/// Singular kernels use the distinct-tuple mean instead.
pub fn discrete_energy<T: Scalar>(kernel: &MultiKernel<T>, config: &PointConfig<T>) -> Result<EnergyEstimate> {
    let value = discrete_energy_value(kernel, config.points())?;
    let n = config.len() as u64;
    let count = if kernel.flags().singular {
        (0..kernel.arity() as u64).map(|i| n - i).product()
    } else {
        n.saturating_pow(kernel.arity() as u32)
    };
    Ok(EnergyEstimate::exact(value.as_f64(), count))
}

/// Scalar-typed discrete energy of a list of points.
pub fn discrete_energy_value<T: Scalar>(kernel: &MultiKernel<T>, points: &[Point<T>]) -> Result<T> {
    if points.is_empty() {
        return Err(Error::Empty("configuration"));
    }
    validate_points(kernel, points)?;
    let k = kernel.arity();
    if kernel.flags().singular {
        if points.len() < k {
            return Err(Error::InvalidArgument {
                name: "config",
                reason: format!("distinct-tuple energy needs N >= k = {k}, got {}", points.len()),
            });
        }
        let v = distinct_tuple_mean(kernel, points);
        if !v.is_finite() {
            return Err(Error::CoincidentPoints);
        }
        return Ok(v);
    }
    let w = T::one() / T::from_usize_lossy(points.len());
    let weights = vec![w; points.len()];
    let v = weighted_tuple_sum(kernel, points, &weights);
    if v.is_nan() {
        return Err(Error::NonFinite);
    }
    Ok(v)
}

/// Exact `I_K(μ)` for a discrete measure.
pub fn discrete_measure_energy<T: Scalar>(kernel: &MultiKernel<T>, m: &DiscreteMeasure<T>) -> Result<T> {
    if kernel.flags().singular {
        return Err(Error::InvalidArgument {
            name: "kernel",
            reason: "singular kernels are only evaluated on configurations, over distinct tuples".into(),
        });
    }
    validate_points(kernel, m.atoms())?;
    let v = weighted_tuple_sum(kernel, m.atoms(), m.weights());
    if v.is_nan() {
        return Err(Error::NonFinite);
    }
    Ok(v)
}

/// Smallest Monte-Carlo budget accepted by [`energy_integral`].
pub const MIN_MC_SAMPLES: usize = 1000;
/// Number of independent batches behind every Monte-Carlo estimate.
pub const MC_BATCHES: usize = 64;

#[derive(Debug, Clone, Copy)]
struct BatchStats {
    n: f64,
    mean: f64,
    m2: f64,
}

impl BatchStats {
    fn merge(self, o: Self) -> Self {
        if self.n == 0.0 {
            return o;
        }
        let n = self.n + o.n;
        let delta = o.mean - self.mean;
        Self { n, mean: self.mean + delta * o.n / n, m2: self.m2 + o.m2 + delta * delta * self.n * o.n / n }
    }
}

/// Monte-Carlo estimate of `I_K(μ)` from i.i.d. k-tuples, split into 64
/// batches where batch `b` draws from stream `b` of `seed`. The standard
/// error comes from the pooled per-sample variance; batches are merged in a
/// fixed order so the estimate does not depend on the thread count.
pub fn monte_carlo_energy<T: Scalar>(
    kernel: &MultiKernel<T>,
    measure: &MeasureSpec<T>,
    mc_samples: usize,
    seed: u64,
) -> Result<EnergyEstimate> {
    if mc_samples < MIN_MC_SAMPLES {
        return Err(Error::InvalidArgument {
            name: "mc",
            reason: format!("Monte-Carlo needs at least {MIN_MC_SAMPLES} samples, got {mc_samples}"),
        });
    }
    if measure.dim() != kernel.dim() {
        return Err(Error::DimensionMismatch { expected: kernel.dim(), found: measure.dim() });
    }
    let k = kernel.arity();
    let per_batch = mc_samples.div_ceil(MC_BATCHES);
    let stats: Vec<BatchStats> = (0..MC_BATCHES)
        .into_par_iter()
        .map(|b| {
            let start = b * per_batch;
            let len = per_batch.min(mc_samples.saturating_sub(start));
            let mut rng = stream_rng(seed, b as u64);
            let mut s = BatchStats { n: 0.0, mean: 0.0, m2: 0.0 };
            let mut pts: Vec<Point<T>> = Vec::with_capacity(k);
            for _ in 0..len {
                pts.clear();
                pts.extend((0..k).map(|_| measure.sample_one(&mut rng)));
                let refs: Vec<&Point<T>> = pts.iter().collect();
                let x = kernel.eval_unchecked(&refs).as_f64();
                s.n += 1.0;
                let delta = x - s.mean;
                s.mean += delta / s.n;
                s.m2 += delta * (x - s.mean);
            }
            s
        })
        .collect();
    let total = stats.into_iter().fold(BatchStats { n: 0.0, mean: 0.0, m2: 0.0 }, BatchStats::merge);
    if !total.mean.is_finite() {
        return Err(Error::NonFinite);
    }
    let var = total.m2 / (total.n - 1.0);
    Ok(EnergyEstimate {
        value: total.mean,
        std_error: (var / total.n).sqrt(),
        samples_used: total.n as u64,
        exact: false,
    })
}

/// `I_K(μ)`: exact for discrete measures, Monte-Carlo otherwise.
pub fn energy_integral<T: Scalar>(
    kernel: &MultiKernel<T>,
    measure: &MeasureSpec<T>,
    mc_samples: usize,
    seed: u64,
) -> Result<EnergyEstimate> {
    match measure {
        MeasureSpec::Discrete(m) => {
            if m.dim() != kernel.dim() {
                return Err(Error::DimensionMismatch { expected: kernel.dim(), found: m.dim() });
            }
            let v = discrete_measure_energy(kernel, m)?;
            Ok(EnergyEstimate::exact(v.as_f64(), (m.len() as u64).saturating_pow(kernel.arity() as u32)))
        }
        _ => monte_carlo_energy(kernel, measure, mc_samples, seed),
    }
}

/// Closed-form extremal values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedForm {
    /// `max I_{V²} = k!/d^k · C(d, k)`, `2 <= k <= d`.
    V2,
    /// `max I_{A²} = k/((k-1)! d^{k-1}) · C(d, k-1)`, `2 <= k <= d+1`.
    A2,
    /// `max I_{A²}` at `k = d+1`: `(d+1)/(d! d^d)`.
    A2Full,
    /// `min I_{<x,y>²} = 1/d`, `k = 2`.
    FrameMin,
}

pub fn closed_form_max(kind: ClosedForm, d: usize, k: usize) -> Result<f64> {
    let range_err = |what: &str| Err(Error::InvalidArgument { name: "k", reason: format!("{what}, got d={d}, k={k}") });
    if d == 0 {
        return range_err("dimension must be positive");
    }
    let df = d as f64;
    match kind {
        ClosedForm::V2 => {
            if k < 2 || k > d {
                return range_err("V2 needs 2 <= k <= d");
            }
            Ok(factorial::<f64>(k) / df.powi(k as i32) * binomial::<f64>(d, k))
        }
        ClosedForm::A2 => {
            if k < 2 || k > d + 1 {
                return range_err("A2 needs 2 <= k <= d + 1");
            }
            Ok(k as f64 / (factorial::<f64>(k - 1) * df.powi(k as i32 - 1)) * binomial::<f64>(d, k - 1))
        }
        ClosedForm::A2Full => {
            if k != d + 1 {
                return range_err("A2_full needs k = d + 1");
            }
            Ok((df + 1.0) / (factorial::<f64>(d) * df.powi(d as i32)))
        }
        ClosedForm::FrameMin => {
            if k != 2 {
                return range_err("frame_min needs k = 2");
            }
            Ok(1.0 / df)
        }
    }
}

/// Upper bound `N(N-1)..(N-k+1)/N^k · f(N^k I_B(σ) / (N(N-1)..(N-k+1)))` on
/// `E_{f∘B}(ω_N)` for concave increasing `f` with `f(0) = 0`.
pub fn jensen_bound(b_at_sigma: f64, k: usize, n: usize, f: impl Fn(f64) -> f64) -> Result<f64> {
    if n < k {
        return Err(Error::InvalidArgument { name: "N", reason: format!("need N >= k = {k}, got {n}") });
    }
    let falling: f64 = falling_factorial(n, k);
    let nk = (n as f64).powi(k as i32);
    Ok(falling / nk * f(nk * b_at_sigma / falling))
}

/// `I_{B}(σ)` for `B = A²` or `V²` with `k` inputs on `S^{d-1}` (the
/// closed-form maxima, attained by σ).
pub fn squared_volume_at_sigma(kind: VolumeKind, d: usize, k: usize) -> Result<f64> {
    match kind {
        VolumeKind::A => closed_form_max(ClosedForm::A2, d, k),
        VolumeKind::V => closed_form_max(ClosedForm::V2, d, k),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRow {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseReport {
    pub kind: VolumeKind,
    pub s: f64,
    pub d: usize,
    /// Sorted by decreasing energy.
    pub rows: Vec<PhaseRow>,
}

impl PhaseReport {
    pub fn row(&self, name: &str) -> Option<&PhaseRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Two-input energies `I_{A^s}` or `I_{V^s}` of the candidates and of σ
/// (labelled `sigma`), ranked.
pub fn two_input_phase_report(
    kind: VolumeKind,
    s: f64,
    d: usize,
    candidates: &[(String, MeasureSpec<f64>)],
    mc_samples: usize,
    seed: u64,
) -> Result<PhaseReport> {
    if !(s > 0.0) {
        return Err(Error::InvalidArgument { name: "s", reason: "power must be positive".into() });
    }
    let kernel = match kind {
        VolumeKind::A => kernel_a_pow(2, d, s)?,
        VolumeKind::V => kernel_v_pow(2, d, s)?,
    };
    let mut rows = Vec::with_capacity(candidates.len() + 1);
    let sigma = MeasureSpec::UniformSphere { dim: d };
    let all = std::iter::once(("sigma".to_string(), &sigma)).chain(candidates.iter().map(|(n, m)| (n.clone(), m)));
    for (name, m) in all {
        let e = energy_integral(&kernel, m, mc_samples, seed)?;
        rows.push(PhaseRow { name, value: e.value, std_error: e.std_error, exact: e.exact });
    }
    rows.sort_by(|a, b| b.value.total_cmp(&a.value));
    Ok(PhaseReport { kind, s, d, rows })
}
