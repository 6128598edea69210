//! Points, configurations, Gram matrices and the two volume potentials.
//!
//! `V(x_1..x_k)` is the k-volume of the parallelepiped spanned by the
//! vectors, with `V² = det U` for the Gram matrix `U`. `A(x_1..x_k)` is the
//! (k-1)-volume of the simplex with those vertices, obtained from the
//! bordered Gram determinant `((k-1)!)² A² = -det [[U, 1], [1ᵀ, 0]]`.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{adjugate, determinant, dot, norm, SquareMatrix};
use crate::scalar::{factorial, Scalar};

/// Default tolerance below which a negative determinant is reported as an
/// error rather than clamped.
pub const NEGATIVE_DET_TOL: f64 = 1e-10;

/// A point in `R^d`, optionally flagged as lying on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct Point<T> {
    coords: Vec<T>,
    spherical: bool,
}

impl<T: Scalar> Point<T> {
    pub fn new(coords: Vec<T>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Empty("point coordinates"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { coords, spherical: false })
    }

    /// Renormalizes onto the unit sphere and sets the spherical flag.
    pub fn spherical(coords: Vec<T>) -> Result<Self> {
        let p = Self::new(coords)?;
        let r = norm(&p.coords);
        if r == T::zero() {
            return Err(Error::NotSpherical { norm: 0.0 });
        }
        Ok(Self { coords: p.coords.into_iter().map(|c| c / r).collect(), spherical: true })
    }

    /// `i`-th standard basis vector of `R^d`, flagged spherical.
    pub fn basis(d: usize, i: usize) -> Self {
        let mut coords = vec![T::zero(); d];
        coords[i] = T::one();
        Self { coords, spherical: true }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn is_spherical(&self) -> bool {
        self.spherical
    }

    pub fn dot(&self, other: &Self) -> T {
        dot(&self.coords, &other.coords)
    }

    pub fn norm(&self) -> T {
        norm(&self.coords)
    }

    pub fn scaled(&self, lambda: T) -> Self {
        Self { coords: self.coords.iter().map(|c| *c * lambda).collect(), spherical: false }
    }

    /// The point pushed back onto the sphere (flag set).
    pub fn normalized(&self) -> Result<Self> {
        Self::spherical(self.coords.clone())
    }

    /// Checks `| ‖x‖ - 1 |` against a precision-appropriate tolerance.
    pub fn check_unit(&self) -> Result<()> {
        let r = self.norm();
        if (r - T::one()).abs() > T::epsilon().sqrt() {
            return Err(Error::NotSpherical { norm: r.as_f64() });
        }
        Ok(())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Point<U> {
        Point { coords: self.coords.iter().map(|c| f(*c)).collect(), spherical: self.spherical }
    }
}

/// Ordered multiset of points sharing one ambient dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfig<T> {
    points: Vec<Point<T>>,
    dim: usize,
}

impl<T: Scalar> PointConfig<T> {
    pub fn new(points: Vec<Point<T>>) -> Result<Self> {
        let dim = points.first().ok_or(Error::Empty("point configuration"))?.dim();
        check_dims(points.iter(), dim)?;
        Ok(Self { points, dim })
    }

    /// Every row renormalized onto the sphere.
    pub fn spherical(rows: Vec<Vec<T>>) -> Result<Self> {
        Self::new(rows.into_iter().map(Point::spherical).collect::<Result<_>>()?)
    }

    pub fn points(&self) -> &[Point<T>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point<T>> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn refs(&self) -> Vec<&Point<T>> {
        self.points.iter().collect()
    }

    pub fn gram(&self) -> Result<GramBundle<T>> {
        gram(&self.refs())
    }
}

fn check_dims<'a, T: Scalar + 'a>(points: impl Iterator<Item = &'a Point<T>>, dim: usize) -> Result<()> {
    for p in points {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: p.dim() });
        }
    }
    Ok(())
}

fn common_dim<T: Scalar>(points: &[&Point<T>]) -> Result<usize> {
    let dim = points.first().ok_or(Error::Empty("point tuple"))?.dim();
    check_dims(points.iter().copied(), dim)?;
    Ok(dim)
}

/// Gram matrix of a tuple with its determinant and adjugate.
#[derive(Debug, Clone, PartialEq)]
pub struct GramBundle<T> {
    pub matrix: SquareMatrix<T>,
    pub det: T,
    pub adjugate: SquareMatrix<T>,
    pub dim: usize,
}

impl<T: Scalar> GramBundle<T> {
    pub fn order(&self) -> usize {
        self.matrix.order()
    }

    /// Submatrix with the listed rows and columns deleted.
    pub fn submatrix(&self, drop_rows: &[usize], drop_cols: &[usize]) -> SquareMatrix<T> {
        let rows: Vec<usize> = (0..self.order()).filter(|i| !drop_rows.contains(i)).collect();
        let cols: Vec<usize> = (0..self.order()).filter(|j| !drop_cols.contains(j)).collect();
        assert_eq!(rows.len(), cols.len(), "submatrix must stay square");
        SquareMatrix::from_fn(rows.len(), |i, j| self.matrix[(rows[i], cols[j])])
    }
}

/// Plain Gram matrix `u_ij = <x_i, x_j>` without determinant bookkeeping.
pub fn gram_matrix<T: Scalar>(points: &[&Point<T>]) -> SquareMatrix<T> {
    let k = points.len();
    let mut u = SquareMatrix::zeros(k);
    for i in 0..k {
        for j in i..k {
            let v = points[i].dot(points[j]);
            u[(i, j)] = v;
            u[(j, i)] = v;
        }
    }
    u
}

pub fn gram<T: Scalar>(points: &[&Point<T>]) -> Result<GramBundle<T>> {
    let dim = common_dim(points)?;
    let matrix = gram_matrix(points);
    let det = determinant(&matrix);
    let adjugate = adjugate(&matrix);
    Ok(GramBundle { matrix, det, adjugate, dim })
}

/// Clamps a provably nonnegative determinant at zero; values below
/// `-tol · scale` are reported as errors.
pub fn clamp_nonnegative<T: Scalar>(value: T, scale: T, tol: f64) -> Result<T> {
    let limit = T::tol(tol) * scale.max(T::one());
    if value < -limit {
        return Err(Error::NegativeDeterminant { value: value.as_f64(), tolerance: limit.as_f64() });
    }
    Ok(value.max(T::zero()))
}

/// Parallelepiped volume together with a rank-deficiency flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Volume<T> {
    pub value: T,
    /// Set when the tuple has more vectors than the ambient dimension, so the
    /// volume vanishes identically.
    pub degenerate: bool,
}

/// `V² = det U` of the tuple, clamped at zero.
pub fn volume_parallelepiped_sq<T: Scalar>(points: &[&Point<T>]) -> Result<T> {
    let dim = common_dim(points)?;
    if points.len() > dim {
        return Ok(T::zero());
    }
    let u = gram_matrix(points);
    let scale = u.max_abs().powi(points.len() as i32);
    clamp_nonnegative(determinant(&u), scale, NEGATIVE_DET_TOL)
}

pub fn volume_parallelepiped<T: Scalar>(points: &[&Point<T>]) -> Result<Volume<T>> {
    let dim = common_dim(points)?;
    if points.len() > dim {
        return Ok(Volume { value: T::zero(), degenerate: true });
    }
    Ok(Volume { value: volume_parallelepiped_sq(points)?.sqrt(), degenerate: false })
}

/// `[[U, 1], [1ᵀ, 0]]` for the tuple.
pub fn bordered_gram<T: Scalar>(points: &[&Point<T>]) -> SquareMatrix<T> {
    let k = points.len();
    let u = gram_matrix(points);
    SquareMatrix::from_fn(k + 1, |i, j| match (i < k, j < k) {
        (true, true) => u[(i, j)],
        (false, false) => T::zero(),
        _ => T::one(),
    })
}

fn check_simplex_arity(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidArity { arity: k, reason: "a simplex needs at least two vertices".into() });
    }
    Ok(())
}

/// `A²` from the bordered Gram determinant.
pub fn volume_simplex_sq<T: Scalar>(points: &[&Point<T>]) -> Result<T> {
    common_dim(points)?;
    let k = points.len();
    check_simplex_arity(k)?;
    let b = bordered_gram(points);
    let f: T = factorial(k - 1);
    let raw = -determinant(&b) / (f * f);
    let scale = b.max_abs().powi(k as i32 - 1);
    clamp_nonnegative(raw, scale, NEGATIVE_DET_TOL)
}

pub fn volume_simplex<T: Scalar>(points: &[&Point<T>]) -> Result<T> {
    Ok(volume_simplex_sq(points)?.sqrt())
}

/// Edge vectors `x_j - x_1`, `j = 2..k`.
pub fn edge_vectors<T: Scalar>(points: &[&Point<T>]) -> Vec<Vec<T>> {
    let base = points[0].coords();
    points[1..]
        .iter()
        .map(|p| p.coords().iter().zip(base).map(|(a, b)| *a - *b).collect())
        .collect()
}

/// `A²` from the Gram matrix of the edge vectors; a cross-check for
/// [`volume_simplex_sq`].
pub fn volume_simplex_edge_form_sq<T: Scalar>(points: &[&Point<T>]) -> Result<T> {
    common_dim(points)?;
    let k = points.len();
    check_simplex_arity(k)?;
    let edges = edge_vectors(points);
    let g = SquareMatrix::from_fn(k - 1, |i, j| dot(&edges[i], &edges[j]));
    let f: T = factorial(k - 1);
    let scale = g.max_abs().powi(k as i32 - 1);
    Ok(clamp_nonnegative(determinant(&g), scale, NEGATIVE_DET_TOL)? / (f * f))
}

pub fn volume_simplex_edge_form<T: Scalar>(points: &[&Point<T>]) -> Result<T> {
    Ok(volume_simplex_edge_form_sq(points)?.sqrt())
}

/// Sum of `s`-th powers of the `j`-dimensional face volumes of the simplex
/// whose `d+1` vertices in `R^d` make up `config`.
pub fn face_functional<T: Scalar>(config: &PointConfig<T>, j: usize, s: T) -> Result<T> {
    let d = config.dim();
    if config.len() != d + 1 {
        return Err(Error::InvalidArgument {
            name: "config",
            reason: format!("expected {} vertices in R^{d}, found {}", d + 1, config.len()),
        });
    }
    if j < 1 || j > d {
        return Err(Error::InvalidArgument { name: "j", reason: format!("face dimension must lie in 1..={d}, got {j}") });
    }
    if s <= T::zero() {
        return Err(Error::InvalidArgument { name: "s", reason: "power must be positive".into() });
    }
    let pts = config.refs();
    let mut total = T::zero();
    for face in pts.iter().copied().combinations(j + 1) {
        let vol = volume_simplex(&face)?;
        total += if vol == T::zero() { T::zero() } else { vol.powf(s) };
    }
    Ok(total)
}

/// JSON form `{"dim": d, "points": [[...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConfigDocument {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
}

impl<T: Scalar> PointConfig<T> {
    pub fn to_document(&self) -> ConfigDocument {
        ConfigDocument {
            dim: self.dim,
            points: self.points.iter().map(|p| p.coords().iter().map(|c| c.as_f64()).collect()).collect(),
        }
    }

    /// Points keep their coordinates as written; `spherical` renormalizes.
    pub fn from_document(doc: &ConfigDocument, spherical: bool) -> Result<Self> {
        let pts = doc
            .points
            .iter()
            .map(|row| {
                if row.len() != doc.dim {
                    return Err(Error::DimensionMismatch { expected: doc.dim, found: row.len() });
                }
                let coords = row.iter().map(|c| T::c(*c)).collect();
                if spherical {
                    Point::spherical(coords)
                } else {
                    Point::new(coords)
                }
            })
            .collect::<Result<_>>()?;
        Self::new(pts)
    }

    /// Plain-text matrix: `N d` on the first line, then one row per point.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim);
        for p in &self.points {
            out.push_str(&p.coords().iter().map(|c| format!("{:e}", c.as_f64())).join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, spherical: bool) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or(Error::Parse("missing `N d` header".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad header token `{t}`"))))
            .collect::<Result<_>>()?;
        let [n, d] = dims[..] else {
            return Err(Error::Parse(format!("header must be `N d`, got `{header}`")));
        };
        let rows: Vec<Vec<f64>> = lines
            .map(|l| {
                l.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad coordinate `{t}`"))))
                    .collect()
            })
            .collect::<Result<_>>()?;
        if rows.len() != n {
            return Err(Error::Parse(format!("header announces {n} points, found {}", rows.len())));
        }
        Self::from_document(&ConfigDocument { dim: d, points: rows }, spherical)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sph(rows: &[&[f64]]) -> Vec<Point<f64>> {
        rows.iter().map(|r| Point::<f64>::spherical(r.to_vec()).unwrap()).collect()
    }

    /// Unit vectors in R^3 with pairwise inner products all equal to `c`.
    fn equiangular_triple(c: f64) -> Vec<Point<f64>> {
        let x = Point::<f64>::spherical(vec![1.0, 0.0, 0.0]).unwrap();
        let y = Point::<f64>::spherical(vec![c, (1.0 - c * c).sqrt(), 0.0]).unwrap();
        let z2 = (c - c * c) / (1.0 - c * c).sqrt();
        let z = Point::<f64>::spherical(vec![c, z2, (1.0 - c * c - z2 * z2).sqrt()]).unwrap();
        vec![x, y, z]
    }

    #[test]
    fn gram_of_orthonormal_triple() {
        let pts: Vec<Point<f64>> = (0..3).map(|i| Point::basis(3, i)).collect();
        let g = gram(&pts.iter().collect::<Vec<_>>()).unwrap();
        assert_eq!(g.matrix, SquareMatrix::identity(3));
        assert_eq!(g.det, 1.0);
        assert_eq!(g.adjugate, SquareMatrix::identity(3));
    }

    #[test]
    fn gram_of_duplicates_is_singular() {
        let p = Point::<f64>::spherical(vec![0.6, 0.8]).unwrap();
        let g = gram(&[&p, &p]).unwrap();
        assert!((g.matrix[(0, 1)] - 1.0).abs() < 1e-15);
        assert!(g.det.abs() < 1e-15);
    }

    #[test]
    fn gram_rejects_mixed_dimensions() {
        let a = Point::<f64>::new(vec![1.0, 0.0]).unwrap();
        let b = Point::<f64>::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(gram(&[&a, &b]), Err(Error::DimensionMismatch { .. })));
        assert!(PointConfig::new(vec![a, b]).is_err());
    }

    #[test]
    fn equiangular_half_determinant() {
        let t = equiangular_triple(0.5);
        let r: Vec<_> = t.iter().collect();
        let g = gram(&r).unwrap();
        assert!((g.det - 0.5).abs() < 1e-14);
        let v = volume_parallelepiped(&r).unwrap();
        assert!((v.value - 0.5f64.sqrt()).abs() < 1e-14);
        assert!(!v.degenerate);
    }

    #[test]
    fn parallelepiped_edge_cases() {
        let e: Vec<Point<f64>> = (0..2).map(|i| Point::basis(2, i)).collect();
        let r: Vec<_> = e.iter().collect();
        assert_eq!(volume_parallelepiped(&r).unwrap().value, 1.0);
        let dep = sph(&[&[1.0, 1.0, 0.0], &[-1.0, -1.0, 0.0]]);
        assert_eq!(volume_parallelepiped(&dep.iter().collect::<Vec<_>>()).unwrap().value, 0.0);
        let three = sph(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let v = volume_parallelepiped(&three.iter().collect::<Vec<_>>()).unwrap();
        assert!(v.degenerate);
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn simplex_volume_examples() {
        let a = Point::<f64>::spherical(vec![0.0, 0.0, 1.0]).unwrap();
        let b = Point::<f64>::spherical(vec![0.0, 0.0, -1.0]).unwrap();
        assert!((volume_simplex(&[&a, &b]).unwrap() - 2.0).abs() < 1e-14);
        assert!((volume_simplex_edge_form(&[&a, &b]).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(volume_simplex(&[&a, &a, &a]).unwrap(), 0.0);
        assert!(matches!(volume_simplex(&[&a]), Err(Error::InvalidArity { .. })));
    }

    /// Shoelace area of the triangle with vertices at angles 0, 120, 240 degrees.
    fn shoelace_equilateral_sq() -> f64 {
        let v: Vec<(f64, f64)> =
            (0..3).map(|i| 2.0 * std::f64::consts::PI * i as f64 / 3.0).map(|a| (a.cos(), a.sin())).collect();
        let area = 0.5
            * ((v[0].0 * v[1].1 - v[1].0 * v[0].1) + (v[1].0 * v[2].1 - v[2].0 * v[1].1)
                + (v[2].0 * v[0].1 - v[0].0 * v[2].1))
                .abs();
        area * area
    }

    #[test]
    fn equilateral_triangle_area() {
        let oracle = shoelace_equilateral_sq();
        assert!((oracle - 27.0 / 16.0).abs() < 1e-14);
        let pts: Vec<Point<f64>> = (0..3)
            .map(|i| 2.0 * std::f64::consts::PI * i as f64 / 3.0)
            .map(|a| Point::<f64>::spherical(vec![a.cos(), a.sin()]).unwrap())
            .collect();
        let r: Vec<_> = pts.iter().collect();
        assert!((volume_simplex_sq(&r).unwrap() - oracle).abs() < 1e-13);
        assert!((volume_simplex_edge_form_sq(&r).unwrap() - oracle).abs() < 1e-13);
    }

    /// Regular tetrahedron with vertices (±1,±1,±1) of even parity, scaled
    /// onto the unit sphere; volume from the scalar triple product.
    fn tetrahedron() -> (Vec<Point<f64>>, f64) {
        let raw = [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];
        let s = 1.0 / 3f64.sqrt();
        let v: Vec<[f64; 3]> = raw.iter().map(|r| [r[0] * s, r[1] * s, r[2] * s]).collect();
        let e: Vec<[f64; 3]> = (1..4).map(|i| [v[i][0] - v[0][0], v[i][1] - v[0][1], v[i][2] - v[0][2]]).collect();
        let triple = e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1]) - e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0])
            + e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0]);
        let vol = triple.abs() / 6.0;
        (v.iter().map(|r| Point::<f64>::spherical(r.to_vec()).unwrap()).collect(), vol * vol)
    }

    #[test]
    fn regular_tetrahedron_volume() {
        let (pts, oracle) = tetrahedron();
        assert!((oracle - 64.0 / 243.0).abs() < 1e-14);
        let r: Vec<_> = pts.iter().collect();
        assert!((volume_simplex_sq(&r).unwrap() - oracle).abs() < 1e-13);
        assert!((volume_simplex_edge_form_sq(&r).unwrap() - oracle).abs() < 1e-13);
        let cfg = PointConfig::new(pts).unwrap();
        assert!((face_functional(&cfg, 3, 2.0).unwrap() - oracle).abs() < 1e-13);
    }

    #[test]
    fn face_functional_examples() {
        let pts: Vec<Point<f64>> = (0..3)
            .map(|i| 2.0 * std::f64::consts::PI * i as f64 / 3.0)
            .map(|a| Point::<f64>::spherical(vec![a.cos(), a.sin()]).unwrap())
            .collect();
        let cfg = PointConfig::new(pts).unwrap();
        assert!((face_functional(&cfg, 1, 1.0).unwrap() - 3.0 * 3f64.sqrt()).abs() < 1e-13);
        assert!(face_functional(&cfg, 3, 1.0).is_err());
        assert!(face_functional(&cfg, 0, 1.0).is_err());
        let p = Point::<f64>::spherical(vec![1.0, 0.0]).unwrap();
        let degenerate = PointConfig::new(vec![p.clone(), p.clone(), p]).unwrap();
        for j in 1..=2 {
            assert_eq!(face_functional(&degenerate, j, 1.5).unwrap(), 0.0);
        }
    }

    #[test]
    fn negative_determinant_beyond_tolerance_is_an_error() {
        assert_eq!(clamp_nonnegative(-1e-14, 1.0, 1e-10).unwrap(), 0.0);
        assert!(clamp_nonnegative(-1e-3, 1.0, 1e-10).is_err());
    }

    #[test]
    fn text_and_json_round_trip() {
        let cfg = PointConfig::spherical(vec![vec![0.1, 0.2, 0.3], vec![-1.0, 1e-7, 2.0]]).unwrap();
        let back = PointConfig::<f64>::from_text(&cfg.to_text(), false).unwrap();
        assert_eq!(back.to_document(), cfg.to_document());
        let json = serde_json::to_string(&cfg.to_document()).unwrap();
        let doc: ConfigDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(PointConfig::<f64>::from_document(&doc, false).unwrap().to_document(), cfg.to_document());
        assert!(PointConfig::<f64>::from_text("2 3\n1 2 3\n", false).is_err());
        assert!(PointConfig::<f64>::from_text("1 3\n1 2\n", false).is_err());
    }

    #[test]
    fn single_precision_volumes() {
        let pts: Vec<Point<f32>> = (0..3).map(|i| Point::basis(3, i)).collect();
        let r: Vec<_> = pts.iter().collect();
        assert!((volume_simplex_sq(&r).unwrap() - 0.75).abs() < 1e-5);
        assert!((volume_parallelepiped(&r).unwrap().value - 1.0).abs() < 1e-6);
    }
}
