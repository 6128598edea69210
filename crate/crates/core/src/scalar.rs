//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Real scalar type the geometry, kernels and energies are written against.
///
/// Implemented for `f32` and `f64`. Random draws and quadrature constants are
/// produced in `f64` and converted, so both precisions see the same stream.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Conversion from a count or index.
    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Tolerance below which a value is treated as roundoff noise for this
    /// precision, floored at `tol` for `f64`.
    #[inline]
    fn tol(tol: f64) -> Self {
        let eps = Self::epsilon().as_f64();
        Self::c(tol.max(64.0 * eps))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `n!` as a scalar.
pub fn factorial<T: Scalar>(n: usize) -> T {
    (1..=n).fold(T::one(), |acc, i| acc * T::from_usize_lossy(i))
}

/// Binomial coefficient `C(n, r)` as a scalar; zero when `r > n`.
pub fn binomial<T: Scalar>(n: usize, r: usize) -> T {
    if r > n {
        return T::zero();
    }
    let r = r.min(n - r);
    (0..r).fold(T::one(), |acc, i| {
        acc * T::from_usize_lossy(n - i) / T::from_usize_lossy(i + 1)
    })
}

/// Generalized binomial coefficient `C(a, m)` for real `a`.
pub fn binomial_real<T: Scalar>(a: T, m: usize) -> T {
    (0..m).fold(T::one(), |acc, i| {
        acc * (a - T::from_usize_lossy(i)) / T::from_usize_lossy(i + 1)
    })
}

/// Falling factorial `n (n-1) ... (n-k+1)`.
pub fn falling_factorial<T: Scalar>(n: usize, k: usize) -> T {
    if k > n {
        return T::zero();
    }
    (0..k).fold(T::one(), |acc, i| acc * T::from_usize_lossy(n - i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinatorics() {
        assert_eq!(factorial::<f64>(5), 120.0);
        assert_eq!(binomial::<f64>(6, 2), 15.0);
        assert_eq!(binomial::<f64>(2, 3), 0.0);
        assert_eq!(falling_factorial::<f64>(4, 3), 24.0);
        assert_eq!(falling_factorial::<f64>(2, 3), 0.0);
        assert!((binomial_real(0.5f64, 2) + 0.125).abs() < 1e-15);
        assert!((binomial_real(0.5f32, 1) - 0.5).abs() < 1e-7);
    }
}
