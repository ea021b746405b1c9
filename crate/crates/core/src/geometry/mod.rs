//! Manifolds with affine connections whose torsion and curvature are parallel.
//!
//! Three backends are provided:
//!
//! * [`Backend::EuclideanFlat`]: `ℝ^m` with the trivial connection.
//! * [`Backend::Sphere`]: the unit sphere `S^m ⊂ ℝ^{m+1}` with its
//!   Levi-Civita connection. Tangent vectors are ambient vectors orthogonal
//!   to the base point.
//! * [`Backend::RotationGroupFlat`]: `SO(3)` with the connection making
//!   left-invariant fields parallel (`R = 0`, `T(x,y) = −[x,y]`). Points are
//!   3×3 matrices stored row-major; tangent vectors are left-trivialized
//!   elements of `so(3) ≅ ℝ³`.
//!
//! Fields are symbolic expressions over polynomial presets (see [`fields`]),
//! evaluated with nested forward-mode differentiation so every covariant
//! derivative is exact up to rounding.

pub mod fields;
pub mod jet;
pub mod spec;

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fields::{
    cov_deriv_covector, cov_deriv_endo, cov_deriv_vec, curvature, curvature_computed, frozen, jacobi_bracket, torsion,
    torsion_computed, torsion_field, CovectorField, EndoField, ScalarField, TensorField, VectorField,
};

pub const SPHERE_NORM_TOL: f64 = 1e-12;
pub const ROTATION_TOL: f64 = 1e-10;
/// Logarithm is rejected this close to the antipode / cut locus.
pub const CUT_LOCUS_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("backend mismatch: {0:?} vs {1:?}")]
    BackendMismatch(Backend, Backend),
    #[error("point is not on {backend:?}: {reason}")]
    NotOnManifold { backend: Backend, reason: String },
    #[error("vector is not tangent at its base point (residual {0:e})")]
    NotTangent(f64),
    #[error("tangent vector is based at a different point")]
    BaseMismatch,
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("field validation failed: {0}")]
    InvalidField(String),
    #[error("expected a field of kind {expected:?}, found {found:?}")]
    Kind { expected: fields::Kind, found: fields::Kind },
    #[error("malformed field specification: {0}")]
    Spec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Backend {
    EuclideanFlat { m: usize },
    Sphere { m: usize },
    RotationGroupFlat,
}

impl Backend {
    /// Number of stored point coordinates.
    pub fn ambient_dim(&self) -> usize {
        match *self {
            Backend::EuclideanFlat { m } => m,
            Backend::Sphere { m } => m + 1,
            Backend::RotationGroupFlat => 9,
        }
    }

    /// Number of stored tangent-vector components.
    pub fn vector_dim(&self) -> usize {
        match *self {
            Backend::EuclideanFlat { m } => m,
            Backend::Sphere { m } => m + 1,
            Backend::RotationGroupFlat => 3,
        }
    }

    /// Intrinsic dimension.
    pub fn manifold_dim(&self) -> usize {
        match *self {
            Backend::EuclideanFlat { m } | Backend::Sphere { m } => m,
            Backend::RotationGroupFlat => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Backend::EuclideanFlat { .. } => "flat",
            Backend::Sphere { .. } => "sphere",
            Backend::RotationGroupFlat => "so3",
        }
    }

    pub fn check_same(&self, other: &Backend) -> Result<(), GeometryError> {
        if self == other {
            Ok(())
        } else {
            Err(GeometryError::BackendMismatch(*self, *other))
        }
    }

    /// Orthogonal projection onto `T_p` (identity off the sphere).
    pub fn project(&self, p: &Point, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Backend::Sphere { .. } => v - &p.coords * p.coords.dot(v),
            _ => v.clone(),
        }
    }

    /// Canonical base point: `e₁`, the origin, or the identity.
    pub fn origin(&self) -> Point {
        let coords = match *self {
            Backend::EuclideanFlat { m } => DVector::zeros(m),
            Backend::Sphere { m } => {
                let mut e = DVector::zeros(m + 1);
                e[0] = 1.0;
                e
            }
            Backend::RotationGroupFlat => rot_to_coords(&Matrix3::identity()),
        };
        Point { backend: *self, coords }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    backend: Backend,
    coords: DVector<f64>,
}

impl Point {
    /// Validates the manifold constraint for the backend.
    pub fn new(backend: Backend, coords: DVector<f64>) -> Result<Point, GeometryError> {
        if coords.len() != backend.ambient_dim() {
            return Err(GeometryError::Dimension { expected: backend.ambient_dim(), found: coords.len() });
        }
        match backend {
            Backend::Sphere { .. } => {
                let r = (coords.norm() - 1.0).abs();
                if r > SPHERE_NORM_TOL {
                    return Err(GeometryError::NotOnManifold { backend, reason: format!("|p| - 1 = {r:e}") });
                }
            }
            Backend::RotationGroupFlat => {
                let m = coords_to_rot(&coords);
                let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
                let det = (m.determinant() - 1.0).abs();
                if ortho > ROTATION_TOL || det > ROTATION_TOL {
                    return Err(GeometryError::NotOnManifold {
                        backend,
                        reason: format!("orthogonality {ortho:e}, det {det:e}"),
                    });
                }
            }
            Backend::EuclideanFlat { .. } => {}
        }
        Ok(Point { backend, coords })
    }

    /// Normalizes onto the manifold (sphere: radial; rotations: polar factor).
    pub fn projected(backend: Backend, coords: DVector<f64>) -> Result<Point, GeometryError> {
        if coords.len() != backend.ambient_dim() {
            return Err(GeometryError::Dimension { expected: backend.ambient_dim(), found: coords.len() });
        }
        let coords = match backend {
            Backend::Sphere { .. } => {
                let n = coords.norm();
                if n == 0.0 {
                    return Err(GeometryError::Domain("cannot project the origin onto the sphere".into()));
                }
                coords / n
            }
            Backend::RotationGroupFlat => rot_to_coords(&nearest_rotation(&coords_to_rot(&coords))),
            Backend::EuclideanFlat { .. } => coords,
        };
        Point::new(backend, coords)
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    /// Rotation-group points as matrices.
    pub fn matrix(&self) -> Option<Matrix3<f64>> {
        match self.backend {
            Backend::RotationGroupFlat => Some(coords_to_rot(&self.coords)),
            _ => None,
        }
    }

    pub fn from_rotation(r: &Matrix3<f64>) -> Result<Point, GeometryError> {
        Point::new(Backend::RotationGroupFlat, rot_to_coords(r))
    }

    pub fn distance_to(&self, other: &Point) -> f64 {
        (&self.coords - &other.coords).norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: Point,
    components: DVector<f64>,
}

impl TangentVector {
    pub fn new(base: Point, components: DVector<f64>) -> Result<TangentVector, GeometryError> {
        let expected = base.backend.vector_dim();
        if components.len() != expected {
            return Err(GeometryError::Dimension { expected, found: components.len() });
        }
        if let Backend::Sphere { .. } = base.backend {
            let r = base.coords.dot(&components).abs();
            if r > SPHERE_NORM_TOL * components.norm().max(1.0) {
                return Err(GeometryError::NotTangent(r));
            }
        }
        Ok(TangentVector { base, components })
    }

    /// Projects `components` onto `T_base` first.
    pub fn projected(base: Point, components: DVector<f64>) -> Result<TangentVector, GeometryError> {
        let expected = base.backend.vector_dim();
        if components.len() != expected {
            return Err(GeometryError::Dimension { expected, found: components.len() });
        }
        let components = base.backend.project(&base, &components);
        Ok(TangentVector { base, components })
    }

    pub fn zero(base: Point) -> TangentVector {
        let n = base.backend.vector_dim();
        TangentVector { base, components: DVector::zeros(n) }
    }

    pub(crate) fn unchecked(base: Point, components: DVector<f64>) -> TangentVector {
        TangentVector { base, components }
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn components(&self) -> &DVector<f64> {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        self.components.norm()
    }

    pub fn scaled(&self, s: f64) -> TangentVector {
        TangentVector { base: self.base.clone(), components: &self.components * s }
    }
}

pub(crate) fn coords_to_rot(c: &DVector<f64>) -> Matrix3<f64> {
    Matrix3::from_row_slice(c.as_slice())
}

pub(crate) fn rot_to_coords(r: &Matrix3<f64>) -> DVector<f64> {
    DVector::from_iterator(9, r.transpose().iter().copied())
}

fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut d = Matrix3::identity();
        d[(2, 2)] = -1.0;
        r = u * d * vt;
    }
    r
}

pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

fn vec3(v: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

/// Connection exponential `exp_p(v)`.
pub fn conn_exp(v: &TangentVector) -> Point {
    let p = v.base();
    match p.backend {
        Backend::EuclideanFlat { .. } => Point { backend: p.backend, coords: &p.coords + &v.components },
        Backend::Sphere { .. } => {
            let n = v.norm();
            let coords = if n == 0.0 { p.coords.clone() } else { &p.coords * n.cos() + &v.components * (n.sin() / n) };
            // renormalize to absorb rounding
            let norm = coords.norm();
            Point { backend: p.backend, coords: coords / norm }
        }
        Backend::RotationGroupFlat => {
            let r = coords_to_rot(&p.coords) * Rotation3::new(vec3(&v.components)).into_inner();
            Point { backend: p.backend, coords: rot_to_coords(&r) }
        }
    }
}

/// Inverse of [`conn_exp`] at `base`.
pub fn conn_log(base: &Point, p: &Point) -> Result<TangentVector, GeometryError> {
    base.backend.check_same(&p.backend)?;
    let components = match base.backend {
        Backend::EuclideanFlat { .. } => &p.coords - &base.coords,
        Backend::Sphere { .. } => {
            let c = base.coords.dot(&p.coords).clamp(-1.0, 1.0);
            if c <= -1.0 + CUT_LOCUS_MARGIN {
                return Err(GeometryError::Domain(format!("antipodal points (⟨p̂,p⟩ = {c})")));
            }
            let d = &p.coords - &base.coords * c;
            let dn = d.norm();
            if dn == 0.0 {
                DVector::zeros(d.len())
            } else {
                // atan2 keeps full accuracy near the base point
                let theta = dn.atan2(c);
                let v = d * (theta / dn);
                base.backend.project(base, &v)
            }
        }
        Backend::RotationGroupFlat => {
            let rel = coords_to_rot(&base.coords).transpose() * coords_to_rot(&p.coords);
            let rot = Rotation3::from_matrix_unchecked(rel);
            if rot.angle() >= std::f64::consts::PI - CUT_LOCUS_MARGIN {
                return Err(GeometryError::Domain(format!("rotation angle {} at the cut locus", rot.angle())));
            }
            let w = rot.scaled_axis();
            DVector::from_column_slice(w.as_slice())
        }
    };
    Ok(TangentVector { base: base.clone(), components })
}

/// Parallel transport of `v ∈ T_p̂` along the geodesic from `p̂ = base(v)` to `p`.
///
/// On the sphere this is
/// `P(v) = v + ⟨v,w⟩(−√(1−⟨p̂,p⟩²) p̂ + (⟨p̂,p⟩−1) w)` with `w` the unit
/// direction of `p − ⟨p̂,p⟩p̂`, defined on the open hemisphere `⟨p̂,p⟩ > 0`.
/// The flat backends transport trivially.
pub fn parallel_transport(v: &TangentVector, p: &Point) -> Result<TangentVector, GeometryError> {
    let base = v.base();
    base.backend.check_same(&p.backend)?;
    let components = match base.backend {
        Backend::EuclideanFlat { .. } | Backend::RotationGroupFlat => v.components.clone(),
        Backend::Sphere { .. } => {
            let c = base.coords.dot(&p.coords);
            if c <= 0.0 {
                return Err(GeometryError::Domain(format!("transport needs ⟨p̂,p⟩ > 0, got {c}")));
            }
            let d = &p.coords - &base.coords * c;
            let dn = d.norm();
            if dn == 0.0 {
                v.components.clone()
            } else {
                let w = d / dn;
                let s = (1.0 - c * c).max(0.0).sqrt();
                let vw = v.components.dot(&w);
                &v.components + (&base.coords * (-s) + &w * (c - 1.0)) * vw
            }
        }
    };
    Ok(TangentVector { base: p.clone(), components: p.backend.project(p, &components) })
}

/// Inner product of tangent components (the ambient metric on the sphere).
pub fn inner(a: &TangentVector, b: &TangentVector) -> f64 {
    a.components.dot(&b.components)
}

/// Dense `n×n` view of an endomorphism value.
pub type Endomorphism = DMatrix<f64>;

/// Closed-form torsion `T(x, y)` of two vectors at the same point.
pub fn torsion_at(x: &TangentVector, y: &TangentVector) -> Result<TangentVector, GeometryError> {
    if x.base != y.base {
        return Err(GeometryError::BaseMismatch);
    }
    let components = match x.base.backend {
        Backend::RotationGroupFlat => {
            let c = -vec3(&x.components).cross(&vec3(&y.components));
            DVector::from_column_slice(c.as_slice())
        }
        _ => DVector::zeros(x.components.len()),
    };
    Ok(TangentVector { base: x.base.clone(), components })
}

/// Closed-form curvature `R(x, y)` at a point, as an ambient matrix.
pub fn curvature_at(x: &TangentVector, y: &TangentVector) -> Result<Endomorphism, GeometryError> {
    if x.base != y.base {
        return Err(GeometryError::BaseMismatch);
    }
    let n = x.components.len();
    Ok(match x.base.backend {
        Backend::Sphere { .. } => &x.components * y.components.transpose() - &y.components * x.components.transpose(),
        _ => DMatrix::zeros(n, n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn sphere2() -> Backend {
        Backend::Sphere { m: 2 }
    }

    fn sp(x: &[f64]) -> Point {
        Point::projected(sphere2(), DVector::from_column_slice(x)).unwrap()
    }

    fn tv(p: &Point, x: &[f64]) -> TangentVector {
        TangentVector::projected(p.clone(), DVector::from_column_slice(x)).unwrap()
    }

    #[test]
    fn sphere_exp_examples() {
        let e1 = sp(&[1.0, 0.0, 0.0]);
        assert_eq!(conn_exp(&TangentVector::zero(e1.clone())), e1);
        let q = conn_exp(&tv(&e1, &[0.0, FRAC_PI_2, 0.0]));
        assert!((q.coords() - DVector::from_column_slice(&[0.0, 1.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn flat_exp_is_translation() {
        let b = Backend::EuclideanFlat { m: 2 };
        let p = Point::new(b, DVector::from_column_slice(&[1.0, 2.0])).unwrap();
        let v = TangentVector::new(p, DVector::from_column_slice(&[0.5, -1.0])).unwrap();
        assert_eq!(conn_exp(&v).coords().as_slice(), &[1.5, 1.0]);
    }

    #[test]
    fn sphere_log_examples() {
        let e1 = sp(&[1.0, 0.0, 0.0]);
        let e2 = sp(&[0.0, 1.0, 0.0]);
        assert_eq!(conn_log(&e1, &e1).unwrap().norm(), 0.0);
        let v = conn_log(&e1, &e2).unwrap();
        assert!((v.components() - DVector::from_column_slice(&[0.0, FRAC_PI_2, 0.0])).norm() < 1e-15);
        let anti = sp(&[-1.0, 0.0, 0.0]);
        assert!(matches!(conn_log(&e1, &anti), Err(GeometryError::Domain(_))));
    }

    #[test]
    fn transport_examples() {
        let e1 = sp(&[1.0, 0.0, 0.0]);
        let w = tv(&e1, &[0.0, 1.0, 0.0]);
        let t = 0.8;
        let p = conn_exp(&w.scaled(t));
        // orthogonal to the geodesic direction: unchanged
        let v = tv(&e1, &[0.0, 0.0, 1.0]);
        let pv = parallel_transport(&v, &p).unwrap();
        assert!((pv.components() - v.components()).norm() < 1e-15);
        // the direction itself rotates with the geodesic
        let pw = parallel_transport(&w, &p).unwrap();
        let expected = DVector::from_column_slice(&[-t.sin(), t.cos(), 0.0]);
        assert!((pw.components() - expected).norm() < 1e-15);
        // identity at the base
        assert_eq!(parallel_transport(&v, &e1).unwrap().components(), v.components());
    }

    #[test]
    fn transport_domain_is_open_hemisphere() {
        let e1 = sp(&[1.0, 0.0, 0.0]);
        let v = tv(&e1, &[0.0, 0.0, 1.0]);
        assert!(parallel_transport(&v, &sp(&[0.0, 1.0, 0.0])).is_err());
        assert!(parallel_transport(&v, &sp(&[-0.1, 1.0, 0.0])).is_err());
        assert!(parallel_transport(&v, &sp(&[0.01, 1.0, 0.0])).is_ok());
    }

    #[test]
    fn validation_rejects_bad_points() {
        assert!(Point::new(sphere2(), DVector::from_column_slice(&[1.0, 1.0, 0.0])).is_err());
        assert!(Point::new(sphere2(), DVector::from_column_slice(&[1.0, 0.0])).is_err());
        let skew = DVector::from_column_slice(&[1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(Point::new(Backend::RotationGroupFlat, skew.clone()).is_err());
        assert!(Point::projected(Backend::RotationGroupFlat, skew).is_ok());
        let p = sp(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            TangentVector::new(p, DVector::from_column_slice(&[1.0, 0.0, 0.0])),
            Err(GeometryError::NotTangent(_))
        ));
    }

    #[test]
    fn rotation_exp_log() {
        let b = Backend::RotationGroupFlat;
        let p = conn_exp(&TangentVector::new(b.origin(), DVector::from_column_slice(&[0.3, -0.2, 0.5])).unwrap());
        let v = TangentVector::new(p.clone(), DVector::from_column_slice(&[-0.4, 0.9, 0.1])).unwrap();
        let q = conn_exp(&v);
        let back = conn_log(&p, &q).unwrap();
        assert!((back.components() - v.components()).norm() < 1e-13);
        assert!(Point::new(b, q.coords().clone()).is_ok());
        let w = Vector3::new(0.1, 0.2, 0.3);
        assert_eq!(vee(&hat(&w)), w);
    }

    #[test]
    fn backend_mismatch_reported() {
        let e1 = sp(&[1.0, 0.0, 0.0]);
        let flat = Backend::EuclideanFlat { m: 3 }.origin();
        assert!(matches!(conn_log(&e1, &flat), Err(GeometryError::BackendMismatch(..))));
    }
}
