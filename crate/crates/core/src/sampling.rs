//! Reproducible random streams and the basic random geometric objects.
//!
//! Every randomized routine derives its generators as
//! `ChaCha8Rng::seed_from_u64(seed)` followed by `set_stream(stream)`, where
//! `stream` is a fixed index (batch, restart, trial block). Work split into
//! streams therefore gives identical results for any number of workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geom::Point;
use crate::linalg::{dot, SquareMatrix};
use crate::scalar::Scalar;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform point on `S^{d-1}` from a normalized Gaussian vector.
pub fn uniform_sphere_point<T: Scalar>(rng: &mut impl Rng, d: usize) -> Point<T> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let r = dot(&g, &g).sqrt();
        if r > 1e-300 {
            return Point::spherical(g.into_iter().map(|c| T::c(c / r)).collect()).expect("nonzero finite vector");
        }
    }
}

pub fn uniform_sphere_points<T: Scalar>(rng: &mut impl Rng, d: usize, n: usize) -> Vec<Point<T>> {
    (0..n).map(|_| uniform_sphere_point(rng, d)).collect()
}

/// Haar-random orthogonal matrix by Gram–Schmidt on Gaussian columns.
pub fn random_orthogonal<T: Scalar>(rng: &mut impl Rng, d: usize) -> SquareMatrix<T> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for c in &cols {
                let p = dot(&v, c);
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
            }
        }
        let r = dot(&v, &v).sqrt();
        if r > 1e-8 {
            cols.push(v.into_iter().map(|a| a / r).collect());
        }
    }
    SquareMatrix::from_fn(d, |i, j| T::c(cols[j][i]))
}

/// `Q x` for every point, keeping the spherical flag.
pub fn rotate<T: Scalar>(q: &SquareMatrix<T>, p: &Point<T>) -> Point<T> {
    let coords = q.mul_vec(p.coords());
    if p.is_spherical() {
        Point::spherical(coords).expect("rotation of a unit vector")
    } else {
        Point::new(coords).expect("finite rotation")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Point<f64> = uniform_sphere_point(&mut stream_rng(1, 0), 4);
        let b: Point<f64> = uniform_sphere_point(&mut stream_rng(1, 0), 4);
        let c: Point<f64> = uniform_sphere_point(&mut stream_rng(1, 1), 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((a.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_matrix() {
        let q: SquareMatrix<f64> = random_orthogonal(&mut stream_rng(2, 0), 5);
        let qtq = q.transpose().mul(&q);
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[(i, j)] - want).abs() < 1e-13);
            }
        }
    }
}
