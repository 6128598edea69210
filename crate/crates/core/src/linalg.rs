//! Dense linear algebra at tuple scale.
//!
//! Matrices here are tiny (Gram matrices of a handful of points, bordered
//! variants, coefficient blocks), with the exception of the empirical
//! positive-definiteness checks which diagonalize matrices of a few dozen
//! rows. Determinants use cofactor expansion up to [`COFACTOR_MAX`] and LU
//! with partial pivoting beyond.

use std::ops::{Index, IndexMut};

use crate::scalar::Scalar;

/// Largest order for which determinants are expanded by cofactors.
pub const COFACTOR_MAX: usize = 6;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Builds from nested rows; `None` when the rows are ragged or not square.
    pub fn from_rows(rows: &[Vec<T>]) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(Self { n, data: rows.iter().flatten().copied().collect() })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.n.max(1)).take(self.n).map(<[T]>::to_vec).collect()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self::from_fn(self.n, |i, j| (0..self.n).map(|l| self[(i, l)] * other[(l, j)]).sum())
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }

    /// `aᵀ M b`.
    pub fn bilinear(&self, a: &[T], b: &[T]) -> T {
        dot(a, &self.mul_vec(b))
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|x| *x * *x).sum::<T>().sqrt()
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Copy with row `r` and column `c` removed.
    pub fn minor_matrix(&self, r: usize, c: usize) -> Self {
        let n = self.n - 1;
        Self::from_fn(n, |i, j| {
            let ii = if i < r { i } else { i + 1 };
            let jj = if j < c { j } else { j + 1 };
            self[(ii, jj)]
        })
    }

    pub fn determinant(&self) -> T {
        determinant(self)
    }

    pub fn adjugate(&self) -> Self {
        adjugate(self)
    }
}

impl<T> Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for SquareMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn determinant<T: Scalar>(m: &SquareMatrix<T>) -> T {
    match m.n {
        0 => T::one(),
        1 => m.data[0],
        2 => m.data[0] * m.data[3] - m.data[1] * m.data[2],
        n if n <= COFACTOR_MAX => cofactor_det(m, 0, (1u32 << n) - 1),
        _ => lu_determinant(m),
    }
}

/// Laplace expansion along `row` over the columns still set in `cols`.
fn cofactor_det<T: Scalar>(m: &SquareMatrix<T>, row: usize, cols: u32) -> T {
    if row == m.n {
        return T::one();
    }
    let mut acc = T::zero();
    let mut sign = T::one();
    for c in 0..m.n {
        if cols & (1 << c) == 0 {
            continue;
        }
        let entry = m[(row, c)];
        if entry != T::zero() {
            acc += sign * entry * cofactor_det(m, row + 1, cols & !(1 << c));
        }
        sign = -sign;
    }
    acc
}

fn lu_determinant<T: Scalar>(m: &SquareMatrix<T>) -> T {
    let n = m.n;
    let mut a = m.data.clone();
    let mut det = T::one();
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, a[i * n + k].abs()))
            .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot == T::zero() {
            return T::zero();
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            det = -det;
        }
        let akk = a[k * n + k];
        det *= akk;
        for i in k + 1..n {
            let f = a[i * n + k] / akk;
            if f != T::zero() {
                for j in k + 1..n {
                    let v = a[k * n + j];
                    a[i * n + j] -= f * v;
                }
            }
        }
    }
    det
}

/// Transposed cofactor matrix, so that `M · adj(M) = det(M) · I`.
/// The adjugate of a 1×1 matrix is the 1×1 identity.
pub fn adjugate<T: Scalar>(m: &SquareMatrix<T>) -> SquareMatrix<T> {
    let n = m.n;
    if n == 1 {
        return SquareMatrix::identity(1);
    }
    SquareMatrix::from_fn(n, |i, j| {
        let minor = determinant(&m.minor_matrix(j, i));
        if (i + j) % 2 == 0 {
            minor
        } else {
            -minor
        }
    })
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// the columns of the returned matrix.
pub fn symmetric_eigen<T: Scalar>(m: &SquareMatrix<T>) -> (Vec<T>, SquareMatrix<T>) {
    let n = m.n;
    let mut a = m.clone();
    let mut v = SquareMatrix::identity(n);
    let scale = a.max_abs();
    if n <= 1 || scale == T::zero() {
        return (a.data.iter().step_by(n + 1).copied().collect(), v);
    }
    let two = T::c(2.0);
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() <= T::epsilon() * scale * T::c(1e-2) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = SquareMatrix::from_fn(n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

pub fn symmetric_eigenvalues<T: Scalar>(m: &SquareMatrix<T>) -> Vec<T> {
    symmetric_eigen(m).0
}

/// Eigenvalues of the symmetric tridiagonal matrix with zero-based diagonal
/// `diag` and off-diagonal `off` (`off[i]` couples rows `i` and `i+1`),
/// together with the first component of each normalized eigenvector.
///
/// Implicit QL with Wilkinson shifts; only the first row of the eigenvector
/// matrix is tracked, which is all Golub–Welsch quadrature needs.
pub fn tridiagonal_eigen_first_row<T: Scalar>(diag: &[T], off: &[T]) -> (Vec<T>, Vec<T>) {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![T::zero(); n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);
    let mut z0 = vec![T::zero(); n];
    if n > 0 {
        z0[0] = T::one();
    }
    let two = T::c(2.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 200 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            let signed = if g >= T::zero() { r.abs() } else { -r.abs() };
            g = d[m] - d[l] + e[l] / (g + signed);
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z0[i + 1];
                z0[i + 1] = s * z0[i] + c * zf;
                z0[i] = c * z0[i] - s * zf;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap_or(std::cmp::Ordering::Equal));
    (order.iter().map(|&i| d[i]).collect(), order.iter().map(|&i| z0[i]).collect())
}
