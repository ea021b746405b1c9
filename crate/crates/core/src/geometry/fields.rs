//! Symbolic fields on a backend and their exact covariant derivatives.
//!
//! A field is an expression tree over polynomial presets. Evaluating it at a
//! point runs the tree on [`Jet`] coordinates: each covariant derivative
//! `∇_x t` perturbs the point along `x` with a fresh nilpotent generator,
//! evaluates `t` there and reads off the first-order coefficient. Nested
//! derivatives use nested generators, so towers of any depth come out exact.
//!
//! Presets are evaluated through ambient polynomial formulas. Off the
//! manifold these are arbitrary extensions; only derivatives along tangent
//! directions are ever taken, and those do not see the extension.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::jet::{dot, Jet};
use super::{Backend, GeometryError, Point, TangentVector};

/// Finite-difference step for validation oracles.
pub const FD_STEP: f64 = 1e-5;
/// Agreement required between exact and finite-difference Jacobians.
pub const JACOBIAN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Scalar,
    Vector,
    Covector,
    Endo,
}

#[derive(Clone)]
pub(crate) struct Expr {
    backend: Backend,
    kind: Kind,
    node: Arc<Node>,
}

enum Node {
    /// `c + A p + (pᵀ Q_i p)_i`, projected to the tangent space on the sphere.
    Poly {
        c: DVector<f64>,
        a: DMatrix<f64>,
        quad: Vec<DMatrix<f64>>,
    },
    /// `c0 + ⟨c, p⟩ + pᵀ Q p`.
    ScalarPoly {
        c0: f64,
        c: DVector<f64>,
        q: DMatrix<f64>,
    },
    /// Constant ambient matrix, compressed to `T_p` on the sphere.
    ConstEndo(DMatrix<f64>),
    /// `p ↦ P_{base,p} value`.
    Frozen {
        base: DVector<f64>,
        value: DVector<f64>,
    },
    Zero,
    Sum(Expr, Expr),
    Scale(f64, Expr),
    /// scalar field times field
    ScalarMul(Expr, Expr),
    /// `∇_x t`; for a scalar `t` this is the directional derivative `x(t)`.
    Cov(Expr, Expr),
    /// Jacobi bracket of vector fields.
    Jacobi(Expr, Expr),
    /// `E z`
    Apply(Expr, Expr),
    /// `E₁ E₂`
    Compose(Expr, Expr),
    /// `α(z)`
    Pair(Expr, Expr),
    /// `−α∘E`, the dual action of an endomorphism on a covector
    DualAct(Expr, Expr),
    /// metric pairing of two vector fields
    Inner(Expr, Expr),
    /// torsion tensor `T(x, y)` in closed form
    Torsion(Expr, Expr),
    /// curvature tensor `R(x, y)` in closed form, as an endomorphism
    Curvature(Expr, Expr),
}

#[derive(Clone, Debug)]
enum Val {
    S(Jet),
    V(Vec<Jet>),
    M(Vec<Jet>),
}

impl Val {
    fn s(self) -> Jet {
        match self {
            Val::S(j) => j,
            _ => unreachable!("kind checked at construction"),
        }
    }

    fn v(self) -> Vec<Jet> {
        match self {
            Val::V(v) => v,
            _ => unreachable!("kind checked at construction"),
        }
    }

    fn m(self) -> Vec<Jet> {
        match self {
            Val::M(m) => m,
            _ => unreachable!("kind checked at construction"),
        }
    }

    fn map(self, f: impl Fn(&Jet) -> Jet) -> Val {
        match self {
            Val::S(j) => Val::S(f(&j)),
            Val::V(v) => Val::V(v.iter().map(&f).collect()),
            Val::M(m) => Val::M(m.iter().map(&f).collect()),
        }
    }

    fn zip(self, other: Val, f: impl Fn(&Jet, &Jet) -> Jet) -> Val {
        match (self, other) {
            (Val::S(a), Val::S(b)) => Val::S(f(&a, &b)),
            (Val::V(a), Val::V(b)) => Val::V(a.iter().zip(&b).map(|(x, y)| f(x, y)).collect()),
            (Val::M(a), Val::M(b)) => Val::M(a.iter().zip(&b).map(|(x, y)| f(x, y)).collect()),
            _ => unreachable!("kind checked at construction"),
        }
    }
}

/// Evaluated field value in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldValue {
    Scalar(f64),
    Vector(DVector<f64>),
    Endo(DMatrix<f64>),
}

impl FieldValue {
    pub fn norm(&self) -> f64 {
        match self {
            FieldValue::Scalar(s) => s.abs(),
            FieldValue::Vector(v) => v.norm(),
            FieldValue::Endo(m) => m.norm(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            FieldValue::Scalar(s) => s.abs(),
            FieldValue::Vector(v) => v.amax(),
            FieldValue::Endo(m) => m.amax(),
        }
    }
}

fn mat_mul(a: &[Jet], b: &[Jet], n: usize) -> Vec<Jet> {
    let dim = a[0].dim();
    let mut out = vec![Jet::zero(dim); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = &a[i * n + k];
            if aik.real() == 0.0 && aik.coeff(0) == 0.0 && aik == &Jet::zero(dim) {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += &(aik * &b[k * n + j]);
            }
        }
    }
    out
}

fn mat_vec(a: &[Jet], v: &[Jet], n: usize) -> Vec<Jet> {
    (0..n).map(|i| dot(&a[i * n..(i + 1) * n], v)).collect()
}

fn consts(v: &DVector<f64>, dim: usize) -> Vec<Jet> {
    v.iter().map(|&x| Jet::constant(x, dim)).collect()
}

impl Backend {
    fn jet_project_vec(&self, p: &[Jet], v: Vec<Jet>) -> Vec<Jet> {
        match self {
            Backend::Sphere { .. } => {
                let pv = dot(p, &v);
                v.iter().zip(p).map(|(vi, pi)| vi - &(&pv * pi)).collect()
            }
            _ => v,
        }
    }

    fn jet_projector(&self, p: &[Jet]) -> Vec<Jet> {
        let n = p.len();
        let dim = p[0].dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let delta = Jet::constant(if i == j { 1.0 } else { 0.0 }, dim);
                out.push(&delta - &(&p[i] * &p[j]));
            }
        }
        out
    }

    fn jet_project_endo(&self, p: &[Jet], m: Vec<Jet>) -> Vec<Jet> {
        match self {
            Backend::Sphere { .. } => {
                let n = p.len();
                let pr = self.jet_projector(p);
                mat_mul(&mat_mul(&pr, &m, n), &pr, n)
            }
            _ => m,
        }
    }

    /// Ambient displacement of the point coordinates along tangent vector `v`.
    fn jet_displacement(&self, p: &[Jet], v: &[Jet]) -> Vec<Jet> {
        match self {
            Backend::RotationGroupFlat => {
                // P · hat(v), row-major
                let dim = v[0].dim();
                let z = Jet::zero(dim);
                let h = [
                    [z.clone(), -&v[2], v[1].clone()],
                    [v[2].clone(), z.clone(), -&v[0]],
                    [-&v[1], v[0].clone(), z.clone()],
                ];
                let mut out = Vec::with_capacity(9);
                for i in 0..3 {
                    for k in 0..3 {
                        let mut s = Jet::zero(dim);
                        for (j, row) in h.iter().enumerate() {
                            s += &(&p[i * 3 + j] * &row[k]);
                        }
                        out.push(s);
                    }
                }
                out
            }
            _ => v.to_vec(),
        }
    }

    fn jet_torsion(&self, x: &[Jet], y: &[Jet]) -> Vec<Jet> {
        match self {
            Backend::RotationGroupFlat => {
                let c = cross(x, y);
                c.iter().map(|j| -j).collect()
            }
            _ => vec![Jet::zero(x[0].dim()); x.len()],
        }
    }

    fn jet_curvature(&self, x: &[Jet], y: &[Jet]) -> Vec<Jet> {
        let n = x.len();
        match self {
            Backend::Sphere { .. } => {
                let mut out = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        out.push(&(&x[i] * &y[j]) - &(&y[i] * &x[j]));
                    }
                }
                out
            }
            _ => vec![Jet::zero(x[0].dim()); n * n],
        }
    }
}

fn cross(x: &[Jet], y: &[Jet]) -> Vec<Jet> {
    vec![&(&x[1] * &y[2]) - &(&x[2] * &y[1]), &(&x[2] * &y[0]) - &(&x[0] * &y[2]), &(&x[0] * &y[1]) - &(&x[1] * &y[0])]
}

impl Expr {
    fn new(backend: Backend, kind: Kind, node: Node) -> Expr {
        Expr { backend, kind, node: Arc::new(node) }
    }

    fn zero(backend: Backend, kind: Kind) -> Expr {
        Expr::new(backend, kind, Node::Zero)
    }

    fn expect(&self, kind: Kind) -> Result<(), GeometryError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(GeometryError::Kind { expected: kind, found: self.kind })
        }
    }

    fn same_backend(&self, other: &Expr) -> Result<(), GeometryError> {
        self.backend.check_same(&other.backend)
    }

    /// Number of nested derivative generators needed to evaluate.
    fn depth(&self) -> usize {
        match &*self.node {
            Node::Poly { .. } | Node::ScalarPoly { .. } | Node::ConstEndo(_) | Node::Frozen { .. } | Node::Zero => 0,
            Node::Scale(_, a) => a.depth(),
            Node::Sum(a, b)
            | Node::ScalarMul(a, b)
            | Node::Apply(a, b)
            | Node::Compose(a, b)
            | Node::Pair(a, b)
            | Node::DualAct(a, b)
            | Node::Inner(a, b)
            | Node::Torsion(a, b)
            | Node::Curvature(a, b) => a.depth().max(b.depth()),
            Node::Cov(x, t) => x.depth().max(1 + t.depth()),
            Node::Jacobi(x, y) => 1 + x.depth().max(y.depth()),
        }
    }

    fn zero_val(&self, dim: usize) -> Val {
        let n = self.backend.vector_dim();
        match self.kind {
            Kind::Scalar => Val::S(Jet::zero(dim)),
            Kind::Vector | Kind::Covector => Val::V(vec![Jet::zero(dim); n]),
            Kind::Endo => Val::M(vec![Jet::zero(dim); n * n]),
        }
    }

    fn eval(&self, p: &[Jet], level: usize) -> Result<Val, GeometryError> {
        let b = self.backend;
        let dim = p[0].dim();
        Ok(match &*self.node {
            Node::Zero => self.zero_val(dim),
            Node::Poly { c, a, quad } => {
                let mut out = consts(c, dim);
                for (i, o) in out.iter_mut().enumerate() {
                    for (j, pj) in p.iter().enumerate() {
                        let aij = a[(i, j)];
                        if aij != 0.0 {
                            *o += &pj.scale(aij);
                        }
                    }
                    if let Some(qi) = quad.get(i) {
                        for (j, pj) in p.iter().enumerate() {
                            for (k, pk) in p.iter().enumerate() {
                                let qjk = qi[(j, k)];
                                if qjk != 0.0 {
                                    *o += &(pj * pk).scale(qjk);
                                }
                            }
                        }
                    }
                }
                Val::V(b.jet_project_vec(p, out))
            }
            Node::ScalarPoly { c0, c, q } => {
                let mut s = Jet::constant(*c0, dim);
                for (j, pj) in p.iter().enumerate() {
                    if c[j] != 0.0 {
                        s += &pj.scale(c[j]);
                    }
                    for (k, pk) in p.iter().enumerate() {
                        if q[(j, k)] != 0.0 {
                            s += &(pj * pk).scale(q[(j, k)]);
                        }
                    }
                }
                Val::S(s)
            }
            Node::ConstEndo(s) => {
                let n = s.nrows();
                let m = (0..n * n).map(|k| Jet::constant(s[(k / n, k % n)], dim)).collect();
                Val::M(b.jet_project_endo(p, m))
            }
            Node::Frozen { base, value } => match b {
                Backend::Sphere { .. } => {
                    let base_j = consts(base, dim);
                    let c = dot(&base_j, p);
                    if c.real() <= 0.0 {
                        return Err(GeometryError::Domain(format!(
                            "frozen field evaluated outside the open hemisphere (⟨p̂,p⟩ = {})",
                            c.real()
                        )));
                    }
                    let v = consts(value, dim);
                    // P(v) = v − ⟨v,p⟩/(1+⟨p̂,p⟩) (p̂ + p), with ⟨v,p⟩ = ⟨v,p − p̂⟩
                    // since v ⊥ p̂; this keeps P_{p̂,p̂} the exact identity
                    let one_plus_c = &Jet::constant(1.0, dim) + &c;
                    let d: Vec<Jet> = p.iter().zip(&base_j).map(|(pi, bi)| pi - bi).collect();
                    let coef = dot(&v, &d).div(&one_plus_c);
                    Val::V(
                        v.iter().zip(base_j.iter().zip(p)).map(|(vi, (bi, pi))| vi - &(&coef * &(bi + pi))).collect(),
                    )
                }
                _ => Val::V(consts(value, dim)),
            },
            Node::Sum(x, y) => x.eval(p, level)?.zip(y.eval(p, level)?, |a, b| a + b),
            Node::Scale(s, x) => x.eval(p, level)?.map(|j| j.scale(*s)),
            Node::ScalarMul(phi, x) => {
                let s = phi.eval(p, level)?.s();
                x.eval(p, level)?.map(|j| &s * j)
            }
            Node::Cov(x, t) => {
                let xv = x.eval(p, level)?.v();
                let d = self.directional(p, &xv, t, level)?;
                match t.kind {
                    Kind::Scalar => d,
                    Kind::Vector | Kind::Covector => Val::V(b.jet_project_vec(p, d.v())),
                    Kind::Endo => Val::M(b.jet_project_endo(p, d.m())),
                }
            }
            Node::Jacobi(x, y) => {
                let xv = x.eval(p, level)?.v();
                let yv = y.eval(p, level)?.v();
                let dy = self.directional(p, &xv, y, level)?.v();
                let dx = self.directional(p, &yv, x, level)?.v();
                let mut out: Vec<Jet> = dy.iter().zip(&dx).map(|(a, b)| a - b).collect();
                if let Backend::RotationGroupFlat = b {
                    // left-trivialized bracket picks up the so(3) structure constants
                    for (o, c) in out.iter_mut().zip(cross(&xv, &yv)) {
                        *o += &c;
                    }
                }
                Val::V(out)
            }
            Node::Apply(e, z) => {
                let m = e.eval(p, level)?.m();
                let v = z.eval(p, level)?.v();
                Val::V(mat_vec(&m, &v, v.len()))
            }
            Node::Compose(e1, e2) => {
                let n = b.vector_dim();
                Val::M(mat_mul(&e1.eval(p, level)?.m(), &e2.eval(p, level)?.m(), n))
            }
            Node::Pair(alpha, z) => Val::S(dot(&alpha.eval(p, level)?.v(), &z.eval(p, level)?.v())),
            Node::DualAct(e, alpha) => {
                let n = b.vector_dim();
                let m = e.eval(p, level)?.m();
                let a = alpha.eval(p, level)?.v();
                // (−α∘E)_j = −Σ_i a_i E_ij
                let out = (0..n)
                    .map(|j| {
                        let mut s = Jet::zero(dim);
                        for i in 0..n {
                            s += &(&a[i] * &m[i * n + j]);
                        }
                        -&s
                    })
                    .collect();
                Val::V(b.jet_project_vec(p, out))
            }
            Node::Inner(x, y) => Val::S(dot(&x.eval(p, level)?.v(), &y.eval(p, level)?.v())),
            Node::Torsion(x, y) => Val::V(b.jet_torsion(&x.eval(p, level)?.v(), &y.eval(p, level)?.v())),
            Node::Curvature(x, y) => Val::M(b.jet_curvature(&x.eval(p, level)?.v(), &y.eval(p, level)?.v())),
        })
    }

    /// Unprojected derivative of `t` along tangent `xv` at `p`, using
    /// generator `level`.
    fn directional(&self, p: &[Jet], xv: &[Jet], t: &Expr, level: usize) -> Result<Val, GeometryError> {
        let disp = self.backend.jet_displacement(p, xv);
        let q: Vec<Jet> = p.iter().zip(&disp).map(|(pi, di)| pi.perturb(level, di)).collect();
        Ok(t.eval(&q, level + 1)?.map(|j| j.derivative(level)))
    }

    fn eval_at(&self, p: &Point) -> Result<FieldValue, GeometryError> {
        self.backend.check_same(&p.backend())?;
        let dim = 1usize << self.depth();
        let pj = consts(p.coords(), dim);
        let n = self.backend.vector_dim();
        Ok(match self.eval(&pj, 0)? {
            Val::S(s) => FieldValue::Scalar(s.real()),
            Val::V(v) => FieldValue::Vector(DVector::from_iterator(v.len(), v.iter().map(Jet::real))),
            Val::M(m) => FieldValue::Endo(DMatrix::from_row_iterator(n, n, m.iter().map(Jet::real))),
        })
    }

    /// Ambient Jacobian of the raw vector formula at `p` (columns indexed by
    /// ambient coordinates).
    fn ambient_jacobian(&self, p: &Point) -> Result<DMatrix<f64>, GeometryError> {
        let amb = self.backend.ambient_dim();
        let n = self.backend.vector_dim();
        let dim = 2usize << self.depth();
        let level = self.depth();
        let mut jac = DMatrix::zeros(n, amb);
        for k in 0..amb {
            let pj: Vec<Jet> = p
                .coords()
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let j = Jet::constant(x, dim);
                    if i == k {
                        j.perturb(level, &Jet::constant(1.0, dim))
                    } else {
                        j
                    }
                })
                .collect();
            let v = self.eval(&pj, level + 1)?.v();
            for (i, vi) in v.iter().enumerate() {
                jac[(i, k)] = vi.derivative(level).real();
            }
        }
        Ok(jac)
    }

    fn eval_ambient_raw(&self, coords: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        let dim = 1usize << self.depth();
        let v = self.eval(&consts(coords, dim), 0)?.v();
        Ok(DVector::from_iterator(v.len(), v.iter().map(Jet::real)))
    }
}

fn binary(a: &Expr, b: &Expr, kind: Kind, node: Node) -> Result<Expr, GeometryError> {
    a.same_backend(b)?;
    Ok(Expr::new(a.backend, kind, node))
}

/// Deterministic sample points used to validate presets.
pub(crate) fn sample_points(backend: Backend, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_point(backend, &mut rng)).collect()
}

/// A uniformly scattered point (Gaussian direction on the sphere, Gaussian
/// rotation vector on `SO(3)`, box in flat space).
pub fn random_point<R: Rng>(backend: Backend, rng: &mut R) -> Point {
    match backend {
        Backend::EuclideanFlat { m } => {
            Point::new(backend, DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
        }
        Backend::Sphere { m } => loop {
            let v = DVector::from_fn(m + 1, |_, _| normal(rng));
            if v.norm() > 1e-3 {
                break Point::projected(backend, v).unwrap();
            }
        },
        Backend::RotationGroupFlat => {
            let w = DVector::from_fn(3, |_, _| normal(rng) * 0.8);
            let v = TangentVector::new(backend.origin(), w).unwrap();
            super::conn_exp(&v)
        }
    }
}

/// Random tangent vector at `p` with Gaussian components.
pub fn random_tangent<R: Rng>(p: &Point, rng: &mut R) -> TangentVector {
    let n = p.backend().vector_dim();
    TangentVector::projected(p.clone(), DVector::from_fn(n, |_, _| normal(rng))).unwrap()
}

/// Standard normal sample.
pub(crate) fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

macro_rules! common_ops {
    ($t:ident, $kind:expr) => {
        impl $t {
            pub fn backend(&self) -> Backend {
                self.0.backend
            }

            pub fn zero(backend: Backend) -> Self {
                $t(Expr::zero(backend, $kind))
            }

            pub fn add(&self, other: &$t) -> Result<$t, GeometryError> {
                Ok($t(binary(&self.0, &other.0, $kind, Node::Sum(self.0.clone(), other.0.clone()))?))
            }

            pub fn sub(&self, other: &$t) -> Result<$t, GeometryError> {
                self.add(&other.scale(-1.0))
            }

            pub fn scale(&self, s: f64) -> $t {
                $t(Expr::new(self.0.backend, $kind, Node::Scale(s, self.0.clone())))
            }

            /// Pointwise product with a scalar field.
            pub fn scale_by(&self, phi: &ScalarField) -> Result<$t, GeometryError> {
                Ok($t(binary(&phi.0, &self.0, $kind, Node::ScalarMul(phi.0.clone(), self.0.clone()))?))
            }

            /// Nesting depth of derivatives in the expression.
            pub fn derivative_depth(&self) -> usize {
                self.0.depth()
            }
        }

        impl std::fmt::Debug for $t {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, "{}({:?}, depth {})", stringify!($t), self.0.backend, self.0.depth())
            }
        }
    };
}

/// Smooth tangent vector field.
#[derive(Clone)]
pub struct VectorField(pub(crate) Expr);

/// Smooth function on the manifold.
#[derive(Clone)]
pub struct ScalarField(pub(crate) Expr);

/// Smooth field of endomorphisms of the tangent spaces.
#[derive(Clone)]
pub struct EndoField(pub(crate) Expr);

/// Smooth one-form, stored by its metric dual (ambient components on the
/// sphere, left-trivialized components on the rotation group).
#[derive(Clone)]
pub struct CovectorField(pub(crate) Expr);

common_ops!(VectorField, Kind::Vector);
common_ops!(ScalarField, Kind::Scalar);
common_ops!(EndoField, Kind::Endo);
common_ops!(CovectorField, Kind::Covector);

fn poly_node(
    backend: Backend,
    c: DVector<f64>,
    a: Option<DMatrix<f64>>,
    quad: Vec<DMatrix<f64>>,
) -> Result<Node, GeometryError> {
    let n = backend.vector_dim();
    let amb = backend.ambient_dim();
    if c.len() != n {
        return Err(GeometryError::Dimension { expected: n, found: c.len() });
    }
    let a = a.unwrap_or_else(|| DMatrix::zeros(n, amb));
    if a.shape() != (n, amb) {
        return Err(GeometryError::InvalidField(format!(
            "linear part must be {n}×{amb}, got {}×{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !quad.is_empty() && (quad.len() != n || quad.iter().any(|q| q.shape() != (amb, amb))) {
        return Err(GeometryError::InvalidField(format!("quadratic part must be {n} matrices of size {amb}×{amb}")));
    }
    Ok(Node::Poly { c, a: a.clone(), quad })
}

impl VectorField {
    /// `p ↦ c + A p + (pᵀ Q_i p)_i`, projected onto `T_p` on the sphere.
    ///
    /// On the rotation group the output is the left-trivialized vector and
    /// `p` is the row-major matrix. The exact Jacobian is checked against
    /// central differences at a few sample points.
    pub fn polynomial(
        backend: Backend,
        c: DVector<f64>,
        a: Option<DMatrix<f64>>,
        quad: Vec<DMatrix<f64>>,
    ) -> Result<VectorField, GeometryError> {
        let node = poly_node(backend, c, a, quad)?;
        let f = VectorField(Expr::new(backend, Kind::Vector, node));
        f.validate()?;
        Ok(f)
    }

    /// Sphere field `Π_p(A p + c)`.
    pub fn projected_affine(m: usize, a: DMatrix<f64>, c: DVector<f64>) -> Result<VectorField, GeometryError> {
        Self::polynomial(Backend::Sphere { m }, c, Some(a), Vec::new())
    }

    /// Sphere rotation field `ζ_A(p) = A p` for skew `A`.
    pub fn rotation(a: DMatrix<f64>) -> Result<VectorField, GeometryError> {
        if (&a + a.transpose()).amax() > 1e-12 {
            return Err(GeometryError::InvalidField("rotation generator must be skew".into()));
        }
        let m = a.nrows() - 1;
        Self::projected_affine(m, a, DVector::zeros(m + 1))
    }

    /// Flat field `A p + c`.
    pub fn affine(a: DMatrix<f64>, c: DVector<f64>) -> Result<VectorField, GeometryError> {
        Self::polynomial(Backend::EuclideanFlat { m: c.len() }, c, Some(a), Vec::new())
    }

    /// Flat field with constant value `c`.
    pub fn constant(backend: Backend, c: DVector<f64>) -> Result<VectorField, GeometryError> {
        Self::polynomial(backend, c, None, Vec::new())
    }

    /// Left-invariant field on the rotation group.
    pub fn left_invariant(coeffs: [f64; 3]) -> VectorField {
        let node = poly_node(Backend::RotationGroupFlat, DVector::from_column_slice(&coeffs), None, Vec::new())
            .expect("shapes are fixed");
        VectorField(Expr::new(Backend::RotationGroupFlat, Kind::Vector, node))
    }

    /// Parallel extension of a single tangent vector, `p ↦ P_{base,p} v`.
    pub fn parallel_extension(v: &TangentVector) -> VectorField {
        let b = v.base();
        VectorField(Expr::new(
            b.backend(),
            Kind::Vector,
            Node::Frozen { base: b.coords().clone(), value: v.components().clone() },
        ))
    }

    fn validate(&self) -> Result<(), GeometryError> {
        for p in sample_points(self.backend(), 3, 0x5eed) {
            let exact = self.0.ambient_jacobian(&p)?;
            let fd = fd_jacobian(&self.0, &p)?;
            let err = (&exact - &fd).amax();
            if err > JACOBIAN_TOL * (1.0 + exact.amax()) {
                return Err(GeometryError::InvalidField(format!(
                    "Jacobian disagrees with finite differences by {err:e}"
                )));
            }
            let v = self.eval(&p)?;
            if let Backend::Sphere { .. } = self.backend() {
                let r = p.coords().dot(v.components()).abs();
                if r > 1e-12 * (1.0 + v.norm()) {
                    return Err(GeometryError::NotTangent(r));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, p: &Point) -> Result<TangentVector, GeometryError> {
        match self.0.eval_at(p)? {
            FieldValue::Vector(v) => Ok(TangentVector::unchecked(p.clone(), v)),
            _ => unreachable!(),
        }
    }

    /// Evaluates the ambient formula at raw coordinates, which need not lie
    /// on the manifold.
    pub fn eval_ambient(&self, coords: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        if coords.len() != self.backend().ambient_dim() {
            return Err(GeometryError::Dimension { expected: self.backend().ambient_dim(), found: coords.len() });
        }
        self.0.eval_ambient_raw(coords)
    }

    /// Exact Jacobian of the ambient formula.
    pub fn ambient_jacobian(&self, p: &Point) -> Result<DMatrix<f64>, GeometryError> {
        self.0.ambient_jacobian(p)
    }

    /// Directional derivative `x(φ)` of a scalar.
    pub fn apply_to(&self, phi: &ScalarField) -> Result<ScalarField, GeometryError> {
        Ok(ScalarField(binary(&self.0, &phi.0, Kind::Scalar, Node::Cov(self.0.clone(), phi.0.clone()))?))
    }

    pub fn inner(&self, other: &VectorField) -> Result<ScalarField, GeometryError> {
        Ok(ScalarField(binary(&self.0, &other.0, Kind::Scalar, Node::Inner(self.0.clone(), other.0.clone()))?))
    }
}

fn fd_jacobian(e: &Expr, p: &Point) -> Result<DMatrix<f64>, GeometryError> {
    let amb = e.backend.ambient_dim();
    let n = e.backend.vector_dim();
    let mut jac = DMatrix::zeros(n, amb);
    for k in 0..amb {
        let mut plus = p.coords().clone();
        let mut minus = p.coords().clone();
        plus[k] += FD_STEP;
        minus[k] -= FD_STEP;
        let d = (e.eval_ambient_raw(&plus)? - e.eval_ambient_raw(&minus)?) / (2.0 * FD_STEP);
        jac.set_column(k, &d);
    }
    Ok(jac)
}

impl ScalarField {
    /// `φ(p) = c0 + ⟨c, p⟩ + pᵀ Q p` in ambient coordinates.
    pub fn quadratic(
        backend: Backend,
        c0: f64,
        c: DVector<f64>,
        q: Option<DMatrix<f64>>,
    ) -> Result<ScalarField, GeometryError> {
        let amb = backend.ambient_dim();
        if c.len() != amb {
            return Err(GeometryError::Dimension { expected: amb, found: c.len() });
        }
        let q = q.unwrap_or_else(|| DMatrix::zeros(amb, amb));
        if q.shape() != (amb, amb) {
            return Err(GeometryError::InvalidField("quadratic form has the wrong shape".into()));
        }
        Ok(ScalarField(Expr::new(backend, Kind::Scalar, Node::ScalarPoly { c0, c, q })))
    }

    pub fn linear(backend: Backend, c: DVector<f64>) -> Result<ScalarField, GeometryError> {
        Self::quadratic(backend, 0.0, c, None)
    }

    pub fn eval(&self, p: &Point) -> Result<f64, GeometryError> {
        match self.0.eval_at(p)? {
            FieldValue::Scalar(s) => Ok(s),
            _ => unreachable!(),
        }
    }

    /// Evaluates at raw ambient coordinates (no manifold check).
    pub fn eval_coords(&self, coords: &DVector<f64>) -> Result<f64, GeometryError> {
        let dim = 1usize << self.0.depth();
        Ok(self.0.eval(&consts(coords, dim), 0)?.s().real())
    }
}

impl EndoField {
    /// Constant ambient matrix `S`; on the sphere it acts as `Π_p S Π_p`.
    pub fn constant(backend: Backend, s: DMatrix<f64>) -> Result<EndoField, GeometryError> {
        let n = backend.vector_dim();
        if s.shape() != (n, n) {
            return Err(GeometryError::Dimension { expected: n, found: s.nrows() });
        }
        Ok(EndoField(Expr::new(backend, Kind::Endo, Node::ConstEndo(s))))
    }

    /// Identity on each tangent space.
    pub fn identity(backend: Backend) -> EndoField {
        let n = backend.vector_dim();
        EndoField(Expr::new(backend, Kind::Endo, Node::ConstEndo(DMatrix::identity(n, n))))
    }

    /// `p ↦ R(x, y)|_p`.
    pub fn curvature_of(x: &VectorField, y: &VectorField) -> Result<EndoField, GeometryError> {
        Ok(EndoField(binary(&x.0, &y.0, Kind::Endo, Node::Curvature(x.0.clone(), y.0.clone()))?))
    }

    pub fn eval(&self, p: &Point) -> Result<DMatrix<f64>, GeometryError> {
        match self.0.eval_at(p)? {
            FieldValue::Endo(m) => Ok(m),
            _ => unreachable!(),
        }
    }

    /// `p ↦ E(p) z(p)`.
    pub fn apply(&self, z: &VectorField) -> Result<VectorField, GeometryError> {
        Ok(VectorField(binary(&self.0, &z.0, Kind::Vector, Node::Apply(self.0.clone(), z.0.clone()))?))
    }

    /// `p ↦ E(p) F(p)`.
    pub fn compose(&self, other: &EndoField) -> Result<EndoField, GeometryError> {
        Ok(EndoField(binary(&self.0, &other.0, Kind::Endo, Node::Compose(self.0.clone(), other.0.clone()))?))
    }

    /// `EF − FE`.
    pub fn commutator(&self, other: &EndoField) -> Result<EndoField, GeometryError> {
        self.compose(other)?.sub(&other.compose(self)?)
    }

    /// Dual action `α ↦ −α∘E`.
    pub fn act_on_covector(&self, alpha: &CovectorField) -> Result<CovectorField, GeometryError> {
        Ok(CovectorField(binary(&self.0, &alpha.0, Kind::Covector, Node::DualAct(self.0.clone(), alpha.0.clone()))?))
    }
}

impl CovectorField {
    /// One-form dual to the polynomial field with the same coefficients.
    pub fn polynomial(
        backend: Backend,
        c: DVector<f64>,
        a: Option<DMatrix<f64>>,
        quad: Vec<DMatrix<f64>>,
    ) -> Result<CovectorField, GeometryError> {
        let node = poly_node(backend, c, a, quad)?;
        Ok(CovectorField(Expr::new(backend, Kind::Covector, node)))
    }

    /// `p ↦ α(z)|_p`.
    pub fn pair(&self, z: &VectorField) -> Result<ScalarField, GeometryError> {
        Ok(ScalarField(binary(&self.0, &z.0, Kind::Scalar, Node::Pair(self.0.clone(), z.0.clone()))?))
    }

    pub fn eval(&self, p: &Point) -> Result<DVector<f64>, GeometryError> {
        match self.0.eval_at(p)? {
            FieldValue::Vector(v) => Ok(v),
            _ => unreachable!(),
        }
    }
}

/// A field of any supported valence.
#[derive(Clone, Debug)]
pub enum TensorField {
    Scalar(ScalarField),
    Vector(VectorField),
    Covector(CovectorField),
    Endo(EndoField),
}

impl TensorField {
    fn expr(&self) -> &Expr {
        match self {
            TensorField::Scalar(f) => &f.0,
            TensorField::Vector(f) => &f.0,
            TensorField::Covector(f) => &f.0,
            TensorField::Endo(f) => &f.0,
        }
    }

    fn wrap(e: Expr) -> TensorField {
        match e.kind {
            Kind::Scalar => TensorField::Scalar(ScalarField(e)),
            Kind::Vector => TensorField::Vector(VectorField(e)),
            Kind::Covector => TensorField::Covector(CovectorField(e)),
            Kind::Endo => TensorField::Endo(EndoField(e)),
        }
    }

    pub fn kind(&self) -> Kind {
        self.expr().kind
    }

    pub fn backend(&self) -> Backend {
        self.expr().backend
    }

    /// `∇_x` of this field.
    pub fn covariant_derivative(&self, x: &VectorField) -> Result<TensorField, GeometryError> {
        let e = self.expr();
        Ok(TensorField::wrap(binary(&x.0, e, e.kind, Node::Cov(x.0.clone(), e.clone()))?))
    }

    pub fn add(&self, other: &TensorField) -> Result<TensorField, GeometryError> {
        let (a, b) = (self.expr(), other.expr());
        b.expect(a.kind)?;
        Ok(TensorField::wrap(binary(a, b, a.kind, Node::Sum(a.clone(), b.clone()))?))
    }

    pub fn sub(&self, other: &TensorField) -> Result<TensorField, GeometryError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> TensorField {
        let e = self.expr();
        TensorField::wrap(Expr::new(e.backend, e.kind, Node::Scale(s, e.clone())))
    }

    pub fn zero_like(&self) -> TensorField {
        let e = self.expr();
        TensorField::wrap(Expr::zero(e.backend, e.kind))
    }

    pub fn eval(&self, p: &Point) -> Result<FieldValue, GeometryError> {
        self.expr().eval_at(p)
    }

    pub fn derivative_depth(&self) -> usize {
        self.expr().depth()
    }
}

impl From<ScalarField> for TensorField {
    fn from(f: ScalarField) -> Self {
        TensorField::Scalar(f)
    }
}

impl From<VectorField> for TensorField {
    fn from(f: VectorField) -> Self {
        TensorField::Vector(f)
    }
}

impl From<CovectorField> for TensorField {
    fn from(f: CovectorField) -> Self {
        TensorField::Covector(f)
    }
}

impl From<EndoField> for TensorField {
    fn from(f: EndoField) -> Self {
        TensorField::Endo(f)
    }
}

/// `∇_x y`.
pub fn cov_deriv_vec(x: &VectorField, y: &VectorField) -> Result<VectorField, GeometryError> {
    Ok(VectorField(binary(&x.0, &y.0, Kind::Vector, Node::Cov(x.0.clone(), y.0.clone()))?))
}

/// `∇_x E`, characterized by `(∇_x E) z = ∇_x(E z) − E ∇_x z`.
pub fn cov_deriv_endo(x: &VectorField, e: &EndoField) -> Result<EndoField, GeometryError> {
    Ok(EndoField(binary(&x.0, &e.0, Kind::Endo, Node::Cov(x.0.clone(), e.0.clone()))?))
}

/// `∇_x α`.
pub fn cov_deriv_covector(x: &VectorField, alpha: &CovectorField) -> Result<CovectorField, GeometryError> {
    Ok(CovectorField(binary(&x.0, &alpha.0, Kind::Covector, Node::Cov(x.0.clone(), alpha.0.clone()))?))
}

/// Jacobi bracket `[x, y]_J`.
pub fn jacobi_bracket(x: &VectorField, y: &VectorField) -> Result<VectorField, GeometryError> {
    Ok(VectorField(binary(&x.0, &y.0, Kind::Vector, Node::Jacobi(x.0.clone(), y.0.clone()))?))
}

/// Torsion tensor field `p ↦ T(x, y)|_p` from the backend's closed form.
pub fn torsion_field(x: &VectorField, y: &VectorField) -> Result<VectorField, GeometryError> {
    Ok(VectorField(binary(&x.0, &y.0, Kind::Vector, Node::Torsion(x.0.clone(), y.0.clone()))?))
}

/// `T(x, y)` at `p` from the backend's closed form.
pub fn torsion(x: &VectorField, y: &VectorField, p: &Point) -> Result<TangentVector, GeometryError> {
    torsion_field(x, y)?.eval(p)
}

/// `R(x, y)` at `p` from the backend's closed form.
pub fn curvature(x: &VectorField, y: &VectorField, p: &Point) -> Result<DMatrix<f64>, GeometryError> {
    EndoField::curvature_of(x, y)?.eval(p)
}

/// `∇_x y − ∇_y x − [x, y]_J`, computed from the connection.
pub fn torsion_computed(x: &VectorField, y: &VectorField) -> Result<VectorField, GeometryError> {
    cov_deriv_vec(x, y)?.sub(&cov_deriv_vec(y, x)?)?.sub(&jacobi_bracket(x, y)?)
}

/// `∇_x∇_y z − ∇_y∇_x z − ∇_{[x,y]_J} z`, computed from the connection.
pub fn curvature_computed(x: &VectorField, y: &VectorField, z: &VectorField) -> Result<VectorField, GeometryError> {
    let xy = cov_deriv_vec(x, &cov_deriv_vec(y, z)?)?;
    let yx = cov_deriv_vec(y, &cov_deriv_vec(x, z)?)?;
    let br = cov_deriv_vec(&jacobi_bracket(x, y)?, z)?;
    xy.sub(&yx)?.sub(&br)
}

/// Frozen field `f^{p̂}|_p = P_{p̂,p} f|_{p̂}`, defined on the transport domain.
pub fn frozen(f: &VectorField, base: &Point) -> Result<VectorField, GeometryError> {
    Ok(VectorField::parallel_extension(&f.eval(base)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{conn_exp, parallel_transport};

    fn skew3(a: f64, b: f64, c: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, -c, b, c, 0.0, -a, -b, a, 0.0])
    }

    fn sp(x: &[f64]) -> Point {
        Point::projected(Backend::Sphere { m: 2 }, DVector::from_column_slice(x)).unwrap()
    }

    #[test]
    fn rotation_field_covariant_derivative_closed_form() {
        let a = skew3(0.3, -0.7, 0.2);
        let b = skew3(-0.5, 0.1, 0.9);
        let za = VectorField::rotation(a.clone()).unwrap();
        let zb = VectorField::rotation(b.clone()).unwrap();
        let nab = cov_deriv_vec(&za, &zb).unwrap();
        for p in sample_points(Backend::Sphere { m: 2 }, 10, 3) {
            let bap = &b * &a * p.coords();
            let expected = &bap - p.coords() * bap.dot(p.coords());
            let got = nab.eval(&p).unwrap();
            assert!((got.components() - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn flat_constant_field_is_parallel() {
        let b = Backend::EuclideanFlat { m: 3 };
        let x =
            VectorField::affine(DMatrix::from_fn(3, 3, |i, j| (i + 2 * j) as f64 * 0.1), DVector::from_element(3, 1.0))
                .unwrap();
        let y = VectorField::constant(b, DVector::from_column_slice(&[1.0, -2.0, 0.5])).unwrap();
        let d = cov_deriv_vec(&x, &y).unwrap();
        for p in sample_points(b, 5, 1) {
            assert_eq!(d.eval(&p).unwrap().norm(), 0.0);
        }
    }

    #[test]
    fn leibniz_rule_for_scalar_multiples() {
        let m = 2;
        let x = VectorField::projected_affine(
            m,
            DMatrix::from_fn(3, 3, |i, j| ((i * 3 + j) as f64).sin()),
            DVector::from_column_slice(&[0.2, -0.1, 0.4]),
        )
        .unwrap();
        let y = VectorField::projected_affine(
            m,
            DMatrix::from_fn(3, 3, |i, j| ((i + 5 * j) as f64).cos()),
            DVector::from_column_slice(&[-0.3, 0.5, 0.1]),
        )
        .unwrap();
        let c = DVector::from_column_slice(&[0.4, -0.9, 0.3]);
        let phi = ScalarField::linear(Backend::Sphere { m }, c).unwrap();
        let lhs = cov_deriv_vec(&x, &y.scale_by(&phi).unwrap()).unwrap();
        let rhs = y
            .scale_by(&x.apply_to(&phi).unwrap())
            .unwrap()
            .add(&cov_deriv_vec(&x, &y).unwrap().scale_by(&phi).unwrap())
            .unwrap();
        let diff = lhs.sub(&rhs).unwrap();
        for p in sample_points(Backend::Sphere { m }, 10, 2) {
            assert!(diff.eval(&p).unwrap().norm() < 1e-10);
        }
    }

    #[test]
    fn projector_is_parallel_on_sphere() {
        let b = Backend::Sphere { m: 2 };
        let id = EndoField::identity(b);
        let x = VectorField::projected_affine(
            2,
            DMatrix::from_fn(3, 3, |i, j| (i as f64) - (j as f64) * 0.5),
            DVector::from_column_slice(&[0.1, 0.2, 0.3]),
        )
        .unwrap();
        let d = cov_deriv_endo(&x, &id).unwrap();
        for p in sample_points(b, 10, 9) {
            assert!(d.eval(&p).unwrap().amax() < 1e-14);
        }
    }

    #[test]
    fn endo_derivative_defining_identity() {
        let b = Backend::Sphere { m: 2 };
        let e = EndoField::constant(b, skew3(0.4, 0.1, -0.8)).unwrap();
        let x = VectorField::projected_affine(
            2,
            DMatrix::from_fn(3, 3, |i, j| ((i * j) as f64 + 0.3).sin()),
            DVector::from_column_slice(&[0.0, 0.5, -0.2]),
        )
        .unwrap();
        let z = VectorField::projected_affine(
            2,
            DMatrix::from_fn(3, 3, |i, j| ((i + j) as f64 - 1.0) * 0.3),
            DVector::from_column_slice(&[0.7, 0.0, 0.1]),
        )
        .unwrap();
        let lhs = cov_deriv_endo(&x, &e).unwrap().apply(&z).unwrap();
        let rhs = cov_deriv_vec(&x, &e.apply(&z).unwrap())
            .unwrap()
            .sub(&e.apply(&cov_deriv_vec(&x, &z).unwrap()).unwrap())
            .unwrap();
        let diff = lhs.sub(&rhs).unwrap();
        for p in sample_points(b, 10, 4) {
            assert!(diff.eval(&p).unwrap().norm() < 1e-12);
            // ∇_x E stays skew on T_p
            let m = cov_deriv_endo(&x, &e).unwrap().eval(&p).unwrap();
            assert!((&m + m.transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn sphere_curvature_matches_closed_form() {
        let b = Backend::Sphere { m: 2 };
        let x = VectorField::rotation(skew3(0.3, -0.7, 0.2)).unwrap();
        let y = VectorField::rotation(skew3(-0.5, 0.1, 0.9)).unwrap();
        let z = VectorField::rotation(skew3(0.6, 0.6, -0.1)).unwrap();
        let r = curvature_computed(&x, &y, &z).unwrap();
        for p in sample_points(b, 10, 5) {
            let (xv, yv, zv) = (x.eval(&p).unwrap(), y.eval(&p).unwrap(), z.eval(&p).unwrap());
            let expected = xv.components() * yv.components().dot(zv.components())
                - yv.components() * xv.components().dot(zv.components());
            assert!((r.eval(&p).unwrap().components() - &expected).norm() < 1e-12);
            let closed = curvature(&x, &y, &p).unwrap() * zv.components();
            assert!((closed - expected).norm() < 1e-14);
            assert!(torsion_computed(&x, &y).unwrap().eval(&p).unwrap().norm() < 1e-13);
        }
    }

    #[test]
    fn rotation_group_torsion_of_left_invariant_fields() {
        let x = VectorField::left_invariant([0.3, -0.2, 0.8]);
        let y = VectorField::left_invariant([-0.5, 0.4, 0.1]);
        let t = torsion_computed(&x, &y).unwrap();
        let r = curvature_computed(&x, &y, &VectorField::left_invariant([0.2, 0.2, -0.6])).unwrap();
        let expected = -nalgebra::Vector3::new(0.3, -0.2, 0.8).cross(&nalgebra::Vector3::new(-0.5, 0.4, 0.1));
        for p in sample_points(Backend::RotationGroupFlat, 5, 6) {
            let tv = t.eval(&p).unwrap();
            assert!((tv.components() - DVector::from_column_slice(expected.as_slice())).norm() < 1e-14);
            assert!(r.eval(&p).unwrap().norm() < 1e-14);
        }
    }

    #[test]
    fn frozen_field_matches_transport() {
        let f = VectorField::projected_affine(
            2,
            DMatrix::from_fn(3, 3, |i, j| (i as f64 * 0.7 - j as f64 * 0.2).cos()),
            DVector::from_column_slice(&[0.1, 0.0, -0.3]),
        )
        .unwrap();
        let base = sp(&[0.2, 0.9, -0.3]);
        let fz = frozen(&f, &base).unwrap();
        assert_eq!(fz.eval(&base).unwrap().components(), f.eval(&base).unwrap().components());
        let fb = f.eval(&base).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let v = random_tangent(&base, &mut rng).scaled(0.4);
            let p = conn_exp(&v);
            let expected = parallel_transport(&fb, &p).unwrap();
            let got = fz.eval(&p).unwrap();
            assert!((got.components() - expected.components()).norm() < 1e-13);
            assert!((got.norm() - fb.norm()).abs() < 1e-13);
        }
        assert!(matches!(fz.eval(&sp(&[-0.2, -0.9, 0.3])), Err(GeometryError::Domain(_))));
    }

    #[test]
    fn ambient_jacobian_of_affine_field() {
        let a = DMatrix::from_fn(2, 2, |i, j| (i * 2 + j) as f64);
        let f = VectorField::affine(a.clone(), DVector::from_column_slice(&[1.0, 1.0])).unwrap();
        let p = Point::new(Backend::EuclideanFlat { m: 2 }, DVector::from_column_slice(&[0.3, -0.4])).unwrap();
        assert_eq!(f.ambient_jacobian(&p).unwrap(), a);
    }

    #[test]
    fn construction_errors() {
        assert!(VectorField::rotation(DMatrix::identity(3, 3)).is_err());
        assert!(VectorField::projected_affine(2, DMatrix::zeros(2, 2), DVector::zeros(3)).is_err());
        let s = VectorField::rotation(skew3(1.0, 0.0, 0.0)).unwrap();
        let f = VectorField::constant(Backend::EuclideanFlat { m: 3 }, DVector::zeros(3)).unwrap();
        assert!(matches!(cov_deriv_vec(&s, &f), Err(GeometryError::BackendMismatch(..))));
    }
}
