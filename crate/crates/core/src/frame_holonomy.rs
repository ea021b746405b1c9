//! Frames, scalarization, holonomy and the post-Lie structure on vector
//! fields plus holonomy endomorphisms.
//!
//! A [`Frame`] at `p` is a linear isomorphism `u: ℝ^m → T_pM`, stored as the
//! matrix of its columns. The structure group acts on the right by
//! `q·u = u∘q⁻¹`, and the scalarization `τ̄(u)` of a tensor is its component
//! array in the frame; it satisfies `τ̄(q·u) = q·τ̄(u)` for the standard tensor
//! action.
//!
//! [`ExtendedField`] carries a pair `(x, E)` of a vector field and an
//! endomorphism field taking values in the holonomy algebra. On these pairs
//!
//! ```text
//! [(x,E₁),(y,E₂)] = (−T(x,y) − E₁y + E₂x, R(x,y) − E₁E₂ + E₂E₁)
//! (x,E₁) ⊳ (y,E₂) = (∇_x y + E₁y, ∇_x E₂ + E₁E₂ − E₂E₁)
//! ```
//!
//! form a post-Lie algebra; [`theorem1_axiom_residuals`] measures the axioms.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::fields::{normal, random_point, random_tangent, FieldValue};
use crate::geometry::{
    conn_exp, cov_deriv_endo, cov_deriv_vec, curvature_at, curvature_computed, parallel_transport, torsion_at,
    torsion_computed, torsion_field, Backend, EndoField, GeometryError, Point, TangentVector, TensorField, VectorField,
};

/// Columns of a frame must be tangent to this accuracy.
pub const FRAME_TANGENCY_TOL: f64 = 1e-12;
/// Singular values above this count toward the holonomy rank.
pub const HOLONOMY_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("unsupported valence: {inputs} vector inputs, {outputs} vector outputs")]
    UnsupportedValence { inputs: usize, outputs: usize },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("frames live over different points")]
    BaseMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    base: Point,
    iso: DMatrix<f64>,
}

impl Frame {
    /// Checks that the columns are tangent and linearly independent.
    pub fn new(base: Point, iso: DMatrix<f64>) -> Result<Frame, FrameError> {
        let b = base.backend();
        let (n, m) = (b.vector_dim(), b.manifold_dim());
        if iso.shape() != (n, m) {
            return Err(FrameError::InvalidFrame(format!("expected {n}×{m}, got {}×{}", iso.nrows(), iso.ncols())));
        }
        if let Backend::Sphere { .. } = b {
            let r = (iso.transpose() * base.coords()).amax();
            if r > FRAME_TANGENCY_TOL * (1.0 + iso.amax()) {
                return Err(FrameError::Geometry(GeometryError::NotTangent(r)));
            }
        }
        let sv = iso.singular_values();
        if sv.min() <= 1e-12 * sv.max().max(1.0) {
            return Err(FrameError::InvalidFrame("columns are linearly dependent".into()));
        }
        Ok(Frame { base, iso })
    }

    /// Orthonormal frame: the standard basis on flat backends, the first
    /// `m` vectors of an orthonormal completion of `p` on the sphere.
    pub fn standard(base: Point) -> Frame {
        let b = base.backend();
        let iso = match b {
            Backend::Sphere { m } => {
                let mut cols = DMatrix::zeros(m + 1, m + 1);
                cols.set_column(0, base.coords());
                for j in 1..=m {
                    let mut e = DVector::zeros(m + 1);
                    e[j] = 1.0;
                    cols.set_column(j, &e);
                }
                // a basis vector nearly parallel to p would be lost, so swap e₀ in
                let k = base.coords().iamax();
                if k != 0 {
                    let mut e = DVector::zeros(m + 1);
                    e[0] = 1.0;
                    cols.set_column(k, &e);
                }
                let q = cols.qr().q();
                q.columns(1, m).into_owned()
            }
            _ => DMatrix::identity(b.vector_dim(), b.manifold_dim()),
        };
        Frame::new(base, iso).expect("orthonormal completion is a frame")
    }

    /// Random orthonormal frame at `base`.
    pub fn random_orthonormal<R: Rng>(base: Point, rng: &mut R) -> Frame {
        let u = Frame::standard(base);
        let m = u.dim();
        let q = random_orthogonal(m, rng);
        u.act(&q)
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.iso
    }

    pub fn dim(&self) -> usize {
        self.iso.ncols()
    }

    /// `u(a)`.
    pub fn apply(&self, a: &DVector<f64>) -> TangentVector {
        TangentVector::projected(self.base.clone(), &self.iso * a).expect("frame columns are tangent")
    }

    /// `u⁻¹(v)` for `v ∈ T_p`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let gram = self.iso.transpose() * &self.iso;
        gram.lu().solve(&(self.iso.transpose() * v)).expect("frame is invertible")
    }

    /// `q·u = u∘q⁻¹`.
    pub fn act(&self, q: &DMatrix<f64>) -> Frame {
        let qinv = q.clone().try_inverse().expect("structure group element is invertible");
        Frame { base: self.base.clone(), iso: &self.iso * qinv }
    }

    /// Largest deviation of `uᵀu` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let m = self.dim();
        (self.iso.transpose() * &self.iso - DMatrix::identity(m, m)).amax()
    }

    pub fn gram(&self) -> DMatrix<f64> {
        self.iso.transpose() * &self.iso
    }
}

/// Uniformly random element of `SO(m)` (QR of a Gaussian matrix).
pub fn random_orthogonal<R: Rng>(m: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, m, |_, _| normal(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            let c = -q.column(j);
            q.set_column(j, &c);
        }
    }
    if q.determinant() < 0.0 {
        let c = -q.column(0);
        q.set_column(0, &c);
    }
    q
}

/// Parallel transport of every column of `u` along the geodesic to `p`.
pub fn frame_transport(u: &Frame, p: &Point) -> Result<Frame, FrameError> {
    let mut iso = DMatrix::zeros(p.backend().vector_dim(), u.dim());
    for j in 0..u.dim() {
        let col = TangentVector::new(u.base.clone(), u.iso.column(j).into_owned())?;
        iso.set_column(j, parallel_transport(&col, p)?.components());
    }
    Ok(Frame { base: p.clone(), iso })
}

/// Number of vector inputs and vector outputs (0 or 1) of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Valence {
    pub inputs: usize,
    pub outputs: usize,
}

impl Valence {
    pub const VECTOR: Valence = Valence { inputs: 0, outputs: 1 };
    pub const COVECTOR: Valence = Valence { inputs: 1, outputs: 0 };
    pub const ENDOMORPHISM: Valence = Valence { inputs: 1, outputs: 1 };
    pub const TORSION: Valence = Valence { inputs: 2, outputs: 1 };
    pub const CURVATURE: Valence = Valence { inputs: 3, outputs: 1 };

    fn check(self) -> Result<(), FrameError> {
        if self.outputs <= 1 && self.inputs <= 3 {
            Ok(())
        } else {
            Err(FrameError::UnsupportedValence { inputs: self.inputs, outputs: self.outputs })
        }
    }
}

/// A multilinear map on tangent spaces, evaluated pointwise.
pub trait PointTensor {
    fn backend(&self) -> Backend;
    fn valence(&self) -> Valence;
    /// Value on `inputs` at `p`: vector components, or a length-one vector
    /// when there is no vector output.
    fn apply(&self, p: &Point, inputs: &[TangentVector]) -> Result<DVector<f64>, FrameError>;
}

impl PointTensor for TensorField {
    fn backend(&self) -> Backend {
        TensorField::backend(self)
    }

    fn valence(&self) -> Valence {
        match self {
            TensorField::Scalar(_) => Valence { inputs: 0, outputs: 0 },
            TensorField::Vector(_) => Valence::VECTOR,
            TensorField::Covector(_) => Valence::COVECTOR,
            TensorField::Endo(_) => Valence::ENDOMORPHISM,
        }
    }

    fn apply(&self, p: &Point, inputs: &[TangentVector]) -> Result<DVector<f64>, FrameError> {
        Ok(match (self.eval(p)?, inputs) {
            (FieldValue::Scalar(s), []) => DVector::from_element(1, s),
            (FieldValue::Vector(v), []) => v,
            (FieldValue::Vector(alpha), [a]) => DVector::from_element(1, alpha.dot(a.components())),
            (FieldValue::Endo(e), [a]) => e * a.components(),
            _ => {
                let v = PointTensor::valence(self);
                return Err(FrameError::UnsupportedValence { inputs: v.inputs, outputs: v.outputs });
            }
        })
    }
}

/// Torsion, evaluated either in closed form or from the connection through
/// parallel extensions of the inputs.
#[derive(Debug, Clone, Copy)]
pub struct TorsionTensor {
    pub backend: Backend,
    pub computed: bool,
}

/// Curvature `(a, b, c) ↦ R(a, b) c`, in closed form or from the connection.
#[derive(Debug, Clone, Copy)]
pub struct CurvatureTensor {
    pub backend: Backend,
    pub computed: bool,
}

impl PointTensor for TorsionTensor {
    fn backend(&self) -> Backend {
        self.backend
    }

    fn valence(&self) -> Valence {
        Valence::TORSION
    }

    fn apply(&self, p: &Point, inputs: &[TangentVector]) -> Result<DVector<f64>, FrameError> {
        let [a, b] = inputs else { return Err(FrameError::InvalidFrame("torsion takes two inputs".into())) };
        Ok(if self.computed {
            let (x, y) = (VectorField::parallel_extension(a), VectorField::parallel_extension(b));
            torsion_computed(&x, &y)?.eval(p)?.components().clone()
        } else {
            torsion_at(a, b)?.components().clone()
        })
    }
}

impl PointTensor for CurvatureTensor {
    fn backend(&self) -> Backend {
        self.backend
    }

    fn valence(&self) -> Valence {
        Valence::CURVATURE
    }

    fn apply(&self, p: &Point, inputs: &[TangentVector]) -> Result<DVector<f64>, FrameError> {
        let [a, b, c] = inputs else { return Err(FrameError::InvalidFrame("curvature takes three inputs".into())) };
        Ok(if self.computed {
            let ext = VectorField::parallel_extension;
            curvature_computed(&ext(a), &ext(b), &ext(c))?.eval(p)?.components().clone()
        } else {
            curvature_at(a, b)? * c.components()
        })
    }
}

/// Components of a tensor in a frame.
///
/// `data[o·m^k + Σ_r i_r m^{k−1−r}]` is output component `o` on the basis
/// inputs `(e_{i_1}, …, e_{i_k})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarizedTensor {
    pub valence: Valence,
    pub m: usize,
    pub data: Vec<f64>,
}

fn multi_index(mut flat: usize, k: usize, m: usize) -> Vec<usize> {
    let mut idx = vec![0; k];
    for r in (0..k).rev() {
        idx[r] = flat % m;
        flat /= m;
    }
    idx
}

impl ScalarizedTensor {
    fn out_dim(&self) -> usize {
        if self.valence.outputs == 1 {
            self.m
        } else {
            1
        }
    }

    fn in_count(&self) -> usize {
        self.m.pow(self.valence.inputs as u32)
    }

    pub fn component(&self, out: usize, inputs: &[usize]) -> f64 {
        let flat = inputs.iter().fold(0, |acc, &i| acc * self.m + i);
        self.data[out * self.in_count() + flat]
    }

    /// Standard action `(q·S)(a₁, …) = q S(q⁻¹a₁, …)`.
    pub fn act(&self, q: &DMatrix<f64>) -> ScalarizedTensor {
        let m = self.m;
        let k = self.valence.inputs;
        let qinv = q.clone().try_inverse().expect("structure group element is invertible");
        let (nout, nin) = (self.out_dim(), self.in_count());
        let mut data = vec![0.0; self.data.len()];
        for o in 0..nout {
            for flat_i in 0..nin {
                let is = multi_index(flat_i, k, m);
                let mut s = 0.0;
                for o2 in 0..nout {
                    let qo = if self.valence.outputs == 1 { q[(o, o2)] } else { 1.0 };
                    if qo == 0.0 {
                        continue;
                    }
                    for flat_j in 0..nin {
                        let js = multi_index(flat_j, k, m);
                        let w: f64 = is.iter().zip(&js).map(|(&i, &j)| qinv[(j, i)]).product();
                        s += qo * w * self.data[o2 * nin + flat_j];
                    }
                }
                data[o * nin + flat_i] = s;
            }
        }
        ScalarizedTensor { valence: self.valence, m, data }
    }

    pub fn max_abs_diff(&self, other: &ScalarizedTensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    /// For curvature-type tensors, `R̄(a, b)` as an `m×m` matrix.
    pub fn curvature_matrix(&self, a: usize, b: usize) -> Option<DMatrix<f64>> {
        (self.valence == Valence::CURVATURE)
            .then(|| DMatrix::from_fn(self.m, self.m, |i, j| self.component(i, &[a, b, j])))
    }
}

/// `τ̄(u)(a₁, …, a_k) = u⁻¹ τ(u a₁, …, u a_k)`.
pub fn scalarize(tau: &dyn PointTensor, u: &Frame) -> Result<ScalarizedTensor, FrameError> {
    let valence = tau.valence();
    valence.check()?;
    tau.backend().check_same(&u.base.backend())?;
    let m = u.dim();
    let k = valence.inputs;
    let nin = m.pow(k as u32);
    let nout = if valence.outputs == 1 { m } else { 1 };
    let basis: Vec<TangentVector> = (0..m)
        .map(|i| TangentVector::projected(u.base.clone(), u.iso.column(i).into_owned()))
        .collect::<Result<_, _>>()?;
    let mut data = vec![0.0; nout * nin];
    for flat in 0..nin {
        let inputs: Vec<TangentVector> = multi_index(flat, k, m).into_iter().map(|i| basis[i].clone()).collect();
        let value = tau.apply(&u.base, &inputs)?;
        let comps = if valence.outputs == 1 { u.solve(&value) } else { value };
        for o in 0..nout {
            data[o * nin + flat] = comps[o];
        }
    }
    Ok(ScalarizedTensor { valence, m, data })
}

/// Largest `|τ̄(q·u) − q·τ̄(u)|` over all frames and group elements.
pub fn equivariance_residual<F>(scalarized: F, frames: &[Frame], group: &[DMatrix<f64>]) -> Result<f64, FrameError>
where
    F: Fn(&Frame) -> Result<ScalarizedTensor, FrameError>,
{
    let mut worst: f64 = 0.0;
    for u in frames {
        let at_u = scalarized(u)?;
        for q in group {
            let moved = scalarized(&u.act(q))?;
            worst = worst.max(moved.max_abs_diff(&at_u.act(q)));
        }
    }
    Ok(worst)
}

pub fn equivariance_check(tau: &dyn PointTensor, frames: &[Frame], group: &[DMatrix<f64>]) -> Result<f64, FrameError> {
    equivariance_residual(|u| scalarize(tau, u), frames, group)
}

/// The component array of `τ(p)` read off without reference to the frame;
/// not a scalarization, and not equivariant.
pub fn raw_components(tau: &dyn PointTensor, u: &Frame) -> Result<ScalarizedTensor, FrameError> {
    let valence = tau.valence();
    if valence != Valence::VECTOR {
        return Err(FrameError::UnsupportedValence { inputs: valence.inputs, outputs: valence.outputs });
    }
    let v = tau.apply(&u.base, &[])?;
    Ok(ScalarizedTensor { valence, m: u.dim(), data: v.iter().take(u.dim()).copied().collect() })
}

/// `d/dt τ̄(u(t))` at `t = 0` by central differences, where `u(t)` is `u`
/// transported along the geodesic `exp_p(t x(p))`.
pub fn horizontal_derivative(
    tau: &dyn PointTensor,
    x: &VectorField,
    u: &Frame,
    h: f64,
) -> Result<ScalarizedTensor, FrameError> {
    let xp = x.eval(&u.base)?;
    let plus = frame_transport(u, &conn_exp(&xp.scaled(h)))?;
    let minus = frame_transport(u, &conn_exp(&xp.scaled(-h)))?;
    let (sp, sm) = (scalarize(tau, &plus)?, scalarize(tau, &minus)?);
    let data = sp.data.iter().zip(&sm.data).map(|(a, b)| (a - b) / (2.0 * h)).collect();
    Ok(ScalarizedTensor { valence: sp.valence, m: sp.m, data })
}

/// A frame reached from `u` by a few random geodesic legs of length < 1.2.
pub fn random_holonomy_frame<R: Rng>(u: &Frame, rng: &mut R) -> Result<Frame, FrameError> {
    let legs = rng.gen_range(1..=3);
    let mut cur = u.clone();
    for _ in 0..legs {
        let v = random_tangent(&cur.base, rng);
        let len = rng.gen_range(0.0..1.2);
        let p = conn_exp(&v.scaled(len / v.norm().max(f64::MIN_POSITIVE)));
        cur = frame_transport(&cur, &p)?;
    }
    Ok(cur)
}

/// Numerical dimension of the span of `R̄(u')(a, b)` over `samples` random
/// frames `u'` in the holonomy bundle of `u` and random `a, b`.
pub fn holonomy_span<R: Rng>(u: &Frame, samples: usize, rng: &mut R) -> Result<usize, FrameError> {
    let m = u.dim();
    let mut rows = DMatrix::zeros(samples.max(1), m * m);
    for s in 0..samples {
        let f = random_holonomy_frame(u, rng)?;
        let a = DVector::from_fn(m, |_, _| normal(rng));
        let b = DVector::from_fn(m, |_, _| normal(rng));
        let r = curvature_at(&f.apply(&a), &f.apply(&b))?;
        let rbar = {
            let ru = &r * &f.iso;
            let gram = f.gram().lu();
            gram.solve(&(f.iso.transpose() * ru)).expect("frame is invertible")
        };
        for (j, x) in rbar.iter().enumerate() {
            rows[(s, j)] = *x;
        }
    }
    Ok(rows.singular_values().iter().filter(|&&s| s > HOLONOMY_RANK_TOL).count())
}

/// An element `(x, E)` of vector fields ⊕ holonomy endomorphism fields.
#[derive(Clone, Debug)]
pub struct ExtendedField {
    pub vec: VectorField,
    pub endo: EndoField,
}

impl ExtendedField {
    pub fn new(vec: VectorField, endo: EndoField) -> Result<ExtendedField, FrameError> {
        vec.backend().check_same(&endo.backend())?;
        Ok(ExtendedField { vec, endo })
    }

    pub fn zero(backend: Backend) -> ExtendedField {
        ExtendedField { vec: VectorField::zero(backend), endo: EndoField::zero(backend) }
    }

    pub fn from_vector(vec: VectorField) -> ExtendedField {
        let endo = EndoField::zero(vec.backend());
        ExtendedField { vec, endo }
    }

    pub fn from_endo(endo: EndoField) -> ExtendedField {
        let vec = VectorField::zero(endo.backend());
        ExtendedField { vec, endo }
    }

    pub fn backend(&self) -> Backend {
        self.vec.backend()
    }

    pub fn add(&self, other: &ExtendedField) -> Result<ExtendedField, FrameError> {
        Ok(ExtendedField { vec: self.vec.add(&other.vec)?, endo: self.endo.add(&other.endo)? })
    }

    pub fn sub(&self, other: &ExtendedField) -> Result<ExtendedField, FrameError> {
        Ok(ExtendedField { vec: self.vec.sub(&other.vec)?, endo: self.endo.sub(&other.endo)? })
    }

    pub fn eval(&self, p: &Point) -> Result<(DVector<f64>, DMatrix<f64>), FrameError> {
        Ok((self.vec.eval(p)?.components().clone(), self.endo.eval(p)?))
    }

    /// `max(|x(p)|, |E(p)|_F)`.
    pub fn norm_at(&self, p: &Point) -> Result<f64, FrameError> {
        let (v, e) = self.eval(p)?;
        Ok(v.norm().max(e.norm()))
    }
}

/// `[(x,E₁),(y,E₂)] = (−T(x,y) − E₁y + E₂x, R(x,y) − E₁E₂ + E₂E₁)`.
pub fn theorem1_bracket(a: &ExtendedField, b: &ExtendedField) -> Result<ExtendedField, FrameError> {
    a.backend().check_same(&b.backend())?;
    let vec = torsion_field(&a.vec, &b.vec)?.scale(-1.0).sub(&a.endo.apply(&b.vec)?)?.add(&b.endo.apply(&a.vec)?)?;
    let endo = EndoField::curvature_of(&a.vec, &b.vec)?.sub(&a.endo.commutator(&b.endo)?)?;
    Ok(ExtendedField { vec, endo })
}

/// `(x,E₁) ⊳ (y,E₂) = (∇_x y + E₁y, ∇_x E₂ + E₁E₂ − E₂E₁)`.
pub fn theorem1_triangle(a: &ExtendedField, b: &ExtendedField) -> Result<ExtendedField, FrameError> {
    a.backend().check_same(&b.backend())?;
    let vec = cov_deriv_vec(&a.vec, &b.vec)?.add(&a.endo.apply(&b.vec)?)?;
    let endo = cov_deriv_endo(&a.vec, &b.endo)?.add(&a.endo.commutator(&b.endo)?)?;
    Ok(ExtendedField { vec, endo })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxiomResiduals {
    pub jacobi: f64,
    pub derivation: f64,
    pub associator: f64,
}

impl AxiomResiduals {
    pub fn max(&self) -> f64 {
        self.jacobi.max(self.derivation).max(self.associator)
    }

    pub fn combine(&self, other: &AxiomResiduals) -> AxiomResiduals {
        AxiomResiduals {
            jacobi: self.jacobi.max(other.jacobi),
            derivation: self.derivation.max(other.derivation),
            associator: self.associator.max(other.associator),
        }
    }
}

/// Residuals at `p` of
/// (i) `[A,[B,C]] + [B,[C,A]] + [C,[A,B]]`,
/// (ii) `A⊳[B,C] − [A⊳B,C] − [B,A⊳C]`,
/// (iii) `[A,B]⊳C − a(A,B,C) + a(B,A,C)` with `a(x,y,z) = x⊳(y⊳z) − (x⊳y)⊳z`.
pub fn theorem1_axiom_residuals(
    a: &ExtendedField,
    b: &ExtendedField,
    c: &ExtendedField,
    p: &Point,
) -> Result<AxiomResiduals, FrameError> {
    let br = theorem1_bracket;
    let tr = theorem1_triangle;
    let jacobi = br(a, &br(b, c)?)?.add(&br(b, &br(c, a)?)?)?.add(&br(c, &br(a, b)?)?)?;
    let derivation = tr(a, &br(b, c)?)?.sub(&br(&tr(a, b)?, c)?)?.sub(&br(b, &tr(a, c)?)?)?;
    let assoc = |x: &ExtendedField, y: &ExtendedField, z: &ExtendedField| -> Result<ExtendedField, FrameError> {
        tr(x, &tr(y, z)?)?.sub(&tr(&tr(x, y)?, z)?)
    };
    let associator = tr(&br(a, b)?, c)?.sub(&assoc(a, b, c)?)?.add(&assoc(b, a, c)?)?;
    Ok(AxiomResiduals {
        jacobi: jacobi.norm_at(p)?,
        derivation: derivation.norm_at(p)?,
        associator: associator.norm_at(p)?,
    })
}

/// Random extended field used by the axiom sweeps: a projected-affine vector
/// field with a constant skew endomorphism plus a curvature-generated one on
/// the sphere; a left-invariant field with `E = 0` on the rotation group; an
/// affine field with `E = 0` in flat space.
pub fn sample_extended_field<R: Rng>(backend: Backend, rng: &mut R) -> Result<ExtendedField, FrameError> {
    let mut mat = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
    match backend {
        Backend::Sphere { m } => {
            let n = m + 1;
            let x = VectorField::projected_affine(m, mat(n, n), mat(n, 1).column(0).into_owned())?;
            let s = mat(n, n);
            let skew = &s - s.transpose();
            let y1 = VectorField::rotation({
                let t = mat(n, n);
                &t - t.transpose()
            })?;
            let y2 = VectorField::projected_affine(m, mat(n, n), mat(n, 1).column(0).into_owned())?;
            let endo = EndoField::constant(backend, skew)?.add(&EndoField::curvature_of(&y1, &y2)?.scale(0.5))?;
            ExtendedField::new(x, endo)
        }
        Backend::RotationGroupFlat => {
            let c = mat(3, 1);
            Ok(ExtendedField::from_vector(VectorField::left_invariant([c[0], c[1], c[2]])))
        }
        Backend::EuclideanFlat { m } => {
            let x = VectorField::affine(mat(m, m), mat(m, 1).column(0).into_owned())?;
            Ok(ExtendedField::from_vector(x))
        }
    }
}

/// A sample point where every sampled field is defined.
pub fn sample_point<R: Rng>(backend: Backend, rng: &mut R) -> Point {
    random_point(backend, rng)
}
