//! Normalized Gegenbauer polynomials `P_m^d` with `P_m^d(1) = 1`.
//!
//! `P_m^d` is orthogonal on `[-1, 1]` against `(1 - t²)^{(d-3)/2}` and is the
//! zonal polynomial of degree `m` on `S^{d-1}`: Chebyshev `T_m` for `d = 2`,
//! Legendre for `d = 3`. For `d = 1` only `P_0 = 1` and `P_1 = t` exist.
//!
//! All evaluation uses the normalized three-term recurrence
//!
//! ```text
//! (m + d - 2) P_{m+1}(t) = (2m + d - 2) t P_m(t) - m P_{m-1}(t)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::tridiagonal_eigen_first_row;
use crate::scalar::{binomial_real, Scalar};

fn check_defined(d: usize, m: usize) -> Result<()> {
    if d == 0 || (d == 1 && m >= 2) {
        return Err(Error::UndefinedGegenbauer { d, m });
    }
    Ok(())
}

/// `P_m^d(t)`.
pub fn eval<T: Scalar>(d: usize, m: usize, t: T) -> Result<T> {
    check_defined(d, m)?;
    Ok(eval_unchecked(d, m, t))
}

/// `P_m^d(t)` for `(d, m)` already known to be valid.
pub fn eval_unchecked<T: Scalar>(d: usize, m: usize, t: T) -> T {
    match m {
        0 => T::one(),
        1 => t,
        _ => {
            let h = T::from_usize_lossy(d);
            let two = T::c(2.0);
            let (mut prev, mut cur) = (T::one(), t);
            for n in 1..m {
                let nf = T::from_usize_lossy(n);
                let next = ((two * nf + h - two) * t * cur - nf * prev) / (nf + h - two);
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// `[P_0^d(t), ..., P_max^d(t)]` in one pass of the recurrence.
pub fn eval_all<T: Scalar>(d: usize, max: usize, t: T) -> Result<Vec<T>> {
    check_defined(d, max)?;
    let h = T::from_usize_lossy(d);
    let two = T::c(2.0);
    let mut out = Vec::with_capacity(max + 1);
    out.push(T::one());
    if max >= 1 {
        out.push(t);
    }
    for n in 1..max {
        let nf = T::from_usize_lossy(n);
        let next = ((two * nf + h - two) * t * out[n] - nf * out[n - 1]) / (nf + h - two);
        out.push(next);
    }
    Ok(out)
}

/// Derivative `d/dt P_m^d(t)` by differentiating the recurrence.
pub fn derivative<T: Scalar>(d: usize, m: usize, t: T) -> Result<T> {
    check_defined(d, m)?;
    if m == 0 {
        return Ok(T::zero());
    }
    let h = T::from_usize_lossy(d);
    let two = T::c(2.0);
    let (mut p_prev, mut p_cur) = (T::one(), t);
    let (mut dp_prev, mut dp_cur) = (T::zero(), T::one());
    for n in 1..m {
        let nf = T::from_usize_lossy(n);
        let a = (two * nf + h - two) / (nf + h - two);
        let b = nf / (nf + h - two);
        let p_next = a * t * p_cur - b * p_prev;
        let dp_next = a * (p_cur + t * dp_cur) - b * dp_prev;
        p_prev = p_cur;
        p_cur = p_next;
        dp_prev = dp_cur;
        dp_cur = dp_next;
    }
    Ok(dp_cur)
}

/// Monomial coefficients `[c_0, ..., c_m]` with `P_m^d(t) = Σ c_j t^j`,
/// obtained by running the recurrence on coefficient vectors.
pub fn monomial_coefficients<T: Scalar>(d: usize, m: usize) -> Result<Vec<T>> {
    check_defined(d, m)?;
    let h = T::from_usize_lossy(d);
    let two = T::c(2.0);
    let mut prev = vec![T::one()];
    if m == 0 {
        return Ok(prev);
    }
    let mut cur = vec![T::zero(), T::one()];
    for n in 1..m {
        let nf = T::from_usize_lossy(n);
        let a = (two * nf + h - two) / (nf + h - two);
        let b = nf / (nf + h - two);
        let mut next = vec![T::zero(); n + 2];
        for (j, c) in cur.iter().enumerate() {
            next[j + 1] += a * *c;
        }
        for (j, c) in prev.iter().enumerate() {
            next[j] -= b * *c;
        }
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Coefficients of a function in the basis `{P_m^d}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GegenbauerSeries<T> {
    pub d: usize,
    pub coeffs: Vec<T>,
}

impl<T: Scalar> GegenbauerSeries<T> {
    pub fn new(d: usize, coeffs: Vec<T>) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidArgument { name: "d", reason: "series need d >= 2".into() });
        }
        Ok(Self { d, coeffs })
    }

    /// The single basis polynomial `P_m^d`.
    pub fn basis(d: usize, m: usize) -> Result<Self> {
        let mut coeffs = vec![T::zero(); m + 1];
        coeffs[m] = T::one();
        Self::new(d, coeffs)
    }

    pub fn eval(&self, t: T) -> T {
        if self.coeffs.is_empty() {
            return T::zero();
        }
        let p = eval_all(self.d, self.coeffs.len() - 1, t).expect("d >= 2 validated at construction");
        p.iter().zip(&self.coeffs).map(|(a, b)| *a * *b).sum()
    }

    pub fn max_abs(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |m, c| m.max(c.abs()))
    }
}

/// Gauss quadrature for the weight `(1 - t²)^alpha` on `[-1, 1]`, `alpha > -1`.
///
/// Golub–Welsch on the symmetric Jacobi matrix of the ultraspherical family.
/// Weights are normalized to sum to one; callers only ever take ratios.
pub fn gauss_jacobi_symmetric<T: Scalar>(alpha: T, n: usize) -> (Vec<T>, Vec<T>) {
    let one = T::one();
    let four = T::c(4.0);
    let half = T::c(0.5);
    let off: Vec<T> = (1..n)
        .map(|k| {
            let kf = T::from_usize_lossy(k);
            let b = if k == 1 && (alpha + half).abs() < T::epsilon() {
                // Chebyshev limit of the general formula (0/0 at alpha = -1/2).
                half
            } else {
                kf * (kf + two(alpha)) / (four * (kf + alpha) * (kf + alpha) - one)
            };
            b.sqrt()
        })
        .collect();
    let diag = vec![T::zero(); n];
    let (nodes, first) = tridiagonal_eigen_first_row(&diag, &off);
    let weights = first.iter().map(|v| *v * *v).collect();
    (nodes, weights)
}

fn two<T: Scalar>(x: T) -> T {
    x + x
}

/// Result of projecting a function onto the Gegenbauer basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion<T> {
    pub series: GegenbauerSeries<T>,
    pub nodes: usize,
    /// False when doubling the quadrature order moved some coefficient by
    /// more than `1e-8`.
    pub converged: bool,
    pub max_change: T,
}

fn project<T: Scalar>(f: &impl Fn(T) -> T, d: usize, max_degree: usize, n: usize) -> Vec<T> {
    let alpha = (T::from_usize_lossy(d) - T::c(3.0)) / T::c(2.0);
    let (nodes, weights) = gauss_jacobi_symmetric(alpha, n);
    let mut num = vec![T::zero(); max_degree + 1];
    let mut den = vec![T::zero(); max_degree + 1];
    for (t, w) in nodes.iter().zip(&weights) {
        let ft = f(*t);
        let p = eval_all(d, max_degree, *t).expect("d >= 2");
        for m in 0..=max_degree {
            num[m] += *w * ft * p[m];
            den[m] += *w * p[m] * p[m];
        }
    }
    num.iter().zip(&den).map(|(a, b)| *a / *b).collect()
}

/// Coefficients `f̂_0..f̂_M` of `f` in the `P_m^d` basis by Gauss–Jacobi
/// quadrature of order `2M + 16`, with one doubling check.
pub fn expand<T: Scalar>(f: impl Fn(T) -> T, d: usize, max_degree: usize) -> Result<Expansion<T>> {
    if d < 2 {
        return Err(Error::InvalidArgument { name: "d", reason: "expansion needs d >= 2".into() });
    }
    let n = 2 * max_degree + 16;
    let coarse = project(&f, d, max_degree, n);
    let fine = project(&f, d, max_degree, 2 * n);
    let max_change = coarse.iter().zip(&fine).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
    Ok(Expansion {
        series: GegenbauerSeries::new(d, fine)?,
        nodes: 2 * n,
        converged: max_change <= T::c(1e-8),
        max_change,
    })
}

/// Which two-input potential a Maclaurin sign test refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VolumeKind {
    /// `A^s(x, y) = (2 - 2t)^{s/2}`.
    A,
    /// `V^s(x, y) = (1 - t²)^{s/2}`.
    V,
}

/// Number of Maclaurin terms reported by [`maclaurin_sign_test`] (`m = 0..=25`).
pub const MACLAURIN_TERMS: usize = 26;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaclaurinReport {
    pub kind: VolumeKind,
    pub s: f64,
    /// `(power of t, coefficient)` for `m = 0..MACLAURIN_TERMS`; the power is
    /// `m` for kind A and `2m` for kind V.
    pub coefficients: Vec<(usize, f64)>,
    /// Indices `m >= 1` whose coefficient is not strictly negative.
    pub offending: Vec<usize>,
    pub all_negative_after_constant: bool,
}

/// Maclaurin coefficients of the two-input `A^s` or `V^s` in powers of
/// `t = <x, y>`, i.e. `(-1)^m C(s/2, m)` with the `2^{s/2}` prefactor for A.
pub fn maclaurin_sign_test(s: f64, kind: VolumeKind) -> Result<MaclaurinReport> {
    if !(s > 0.0 && s < 2.0) {
        return Err(Error::InvalidArgument { name: "s", reason: format!("must lie in (0, 2), got {s}") });
    }
    let half = s / 2.0;
    let prefactor = match kind {
        VolumeKind::A => 2f64.powf(half),
        VolumeKind::V => 1.0,
    };
    let coefficients: Vec<(usize, f64)> = (0..MACLAURIN_TERMS)
        .map(|m| {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let power = match kind {
                VolumeKind::A => m,
                VolumeKind::V => 2 * m,
            };
            (power, prefactor * sign * binomial_real(half, m))
        })
        .collect();
    let offending: Vec<usize> = (1..MACLAURIN_TERMS).filter(|&m| coefficients[m].1 >= 0.0).collect();
    Ok(MaclaurinReport { kind, s, all_negative_after_constant: offending.is_empty(), coefficients, offending })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdReport {
    pub positive_definite: bool,
    pub offending: Vec<usize>,
}

/// Schoenberg test: every `f̂_m` with `m >= from_m` is nonnegative up to
/// `1e-10 · max|f̂|`. `from_m = 0` tests positive definiteness, `from_m = 1`
/// positive definiteness modulo a constant.
pub fn schoenberg_pd_test<T: Scalar>(series: &GegenbauerSeries<T>, from_m: usize) -> PdReport {
    let floor = -T::c(1e-10) * series.max_abs();
    let offending: Vec<usize> =
        series.coeffs.iter().enumerate().skip(from_m).filter(|(_, c)| **c < floor).map(|(m, _)| m).collect();
    PdReport { positive_definite: offending.is_empty(), offending }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert!(eval::<f64>(4, 2, 0.5).unwrap().abs() < 1e-15);
        for d in 2..=8 {
            for t in [-0.9, -0.2, 0.3, 0.77] {
                assert_eq!(eval::<f64>(d, 0, t).unwrap(), 1.0);
                let p2 = (d as f64 * t * t - 1.0) / (d as f64 - 1.0);
                assert!((eval::<f64>(d, 2, t).unwrap() - p2).abs() < 1e-14);
            }
        }
        let theta = 0.7f64;
        assert!((eval::<f64>(2, 9, theta.cos()).unwrap() - (9.0 * theta).cos()).abs() < 1e-13);
        let t = 0.4f64;
        assert!((eval::<f64>(3, 3, t).unwrap() - 0.5 * (5.0 * t.powi(3) - 3.0 * t)).abs() < 1e-15);
    }

    #[test]
    fn one_dimensional_convention() {
        assert_eq!(eval::<f64>(1, 0, 0.3).unwrap(), 1.0);
        assert_eq!(eval::<f64>(1, 1, 0.3).unwrap(), 0.3);
        assert_eq!(eval::<f64>(1, 2, 0.3), Err(Error::UndefinedGegenbauer { d: 1, m: 2 }));
        assert!(monomial_coefficients::<f64>(1, 3).is_err());
    }

    #[test]
    fn unit_at_one() {
        for d in 2..=8 {
            for m in 0..=20 {
                assert!((eval::<f64>(d, m, 1.0).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn monomial_coefficients_match_recurrence() {
        for d in 2..=7 {
            for m in 0..=9 {
                let c = monomial_coefficients::<f64>(d, m).unwrap();
                assert_eq!(c.len(), m + 1);
                for t in [-0.8, 0.1, 0.65] {
                    let horner = c.iter().rev().fold(0.0, |acc, a| acc * t + a);
                    assert!((horner - eval::<f64>(d, m, t).unwrap()).abs() < 1e-12);
                }
                // parity
                for (j, a) in c.iter().enumerate() {
                    if (m + j) % 2 == 1 {
                        assert_eq!(*a, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for d in 2..=6 {
            for m in 0..=7 {
                let t = 0.37;
                let h = 1e-6;
                let fd = (eval::<f64>(d, m, t + h).unwrap() - eval::<f64>(d, m, t - h).unwrap()) / (2.0 * h);
                assert!((derivative::<f64>(d, m, t).unwrap() - fd).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn quadrature_integrates_weight_moments() {
        // ∫ t² (1-t²)^a dt / ∫ (1-t²)^a dt = 1/(2a+3)
        for d in 2..=8 {
            let a = (d as f64 - 3.0) / 2.0;
            let (x, w) = gauss_jacobi_symmetric(a, 12);
            let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            assert!((m2 - 1.0 / (2.0 * a + 3.0)).abs() < 1e-13, "d={d}");
        }
    }

    #[test]
    fn basis_reproduction() {
        for d in 2..=6 {
            let e = expand(|t: f64| eval_unchecked(d, 3, t), d, 8).unwrap();
            assert!(e.converged);
            for (m, c) in e.series.coeffs.iter().enumerate() {
                let want = if m == 3 { 1.0 } else { 0.0 };
                assert!((c - want).abs() < 1e-10, "d={d} m={m} c={c}");
            }
        }
    }

    #[test]
    fn square_in_legendre_basis() {
        // Analytic: t² = 1/3 P_0 + 2/3 P_2 for Legendre.
        let e = expand(|t: f64| t * t, 3, 6).unwrap();
        let c = &e.series.coeffs;
        assert!((c[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!(c[1].abs() < 1e-12);
        assert!((c[2] - 2.0 / 3.0).abs() < 1e-12);
        let neg = expand(|t: f64| -t * t, 3, 6).unwrap();
        let rep = schoenberg_pd_test(&neg.series, 1);
        assert!(!rep.positive_definite);
        assert_eq!(rep.offending, vec![2]);
    }

    #[test]
    fn sqrt_one_minus_t_has_negative_tail() {
        let e = expand(|t: f64| (1.0 - t).max(0.0).sqrt(), 3, 10).unwrap();
        for m in 1..=10 {
            assert!(e.series.coeffs[m] < 0.0, "m={m}: {}", e.series.coeffs[m]);
        }
        assert!(!schoenberg_pd_test(&e.series, 1).positive_definite);
        let neg = expand(|t: f64| -(1.0 - t).max(0.0).sqrt(), 3, 10).unwrap();
        assert!(schoenberg_pd_test(&neg.series, 1).positive_definite);
    }

    #[test]
    fn schoenberg_on_single_basis_element() {
        let s = GegenbauerSeries::<f64>::basis(5, 2).unwrap();
        assert!(schoenberg_pd_test(&s, 0).positive_definite);
        assert!((s.eval(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn maclaurin_signs() {
        for kind in [VolumeKind::A, VolumeKind::V] {
            for s in [0.5, 1.0, 1.5] {
                let r = maclaurin_sign_test(s, kind).unwrap();
                assert!(r.all_negative_after_constant);
                assert!(r.coefficients[0].1 > 0.0);
            }
        }
        let a = maclaurin_sign_test(1.0, VolumeKind::A).unwrap();
        assert!((a.coefficients[1].1 + 0.5 * 2f64.sqrt()).abs() < 1e-15);
        let v = maclaurin_sign_test(1.0, VolumeKind::V).unwrap();
        assert_eq!(v.coefficients[1].0, 2);
        assert!(v.coefficients[1].1 < 0.0);
        assert!(maclaurin_sign_test(2.0, VolumeKind::A).is_err());
        assert!(maclaurin_sign_test(0.0, VolumeKind::V).is_err());
    }
}
