//! Covariant towers, elementary differentials, Lie–Butcher series actions
//! and geodesic integrators driven by frozen vector fields.
//!
//! Words in vector fields and endomorphism fields act on tensor fields by
//! `D_{a·W} = D_a D_W − D_{a⊳W}`, where `a⊳W` is the Leibniz sum over the
//! letters of `W`, `x⊳y = ∇_x y`, `x⊳E = ∇_x E`, `E⊳y = E y` and
//! `E⊳F = EF − FE`. On pure vector words this is the covariant tower
//! `∇^k_{x₁,…,x_k}`; in general `D_{x₁⊗…⊗x_i⊗E₁⊗…⊗E_j} = D_{E_j}…D_{E₁}∇^i`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix3};
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest_algebra::{AlgebraError, TruncatedSeries};
use crate::geometry::fields::{FieldValue, Kind};
use crate::geometry::{
    conn_exp, cov_deriv_endo, cov_deriv_vec, hat, parallel_transport, Backend, EndoField, GeometryError, Point,
    ScalarField, TensorField, VectorField,
};
use crate::trees::{Forest, Tree};

/// Deepest covariant tower and deepest series truncation accepted.
pub const MAX_TOWER_DEPTH: usize = 4;
/// Smallest tolerance the exact-flow oracle accepts.
pub const MIN_ORACLE_TOL: f64 = 1e-13;
/// Node spacing for Taylor-coefficient extraction.
pub const TAYLOR_SPACING: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegratorError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("tower depth {depth} exceeds the limit {max}")]
    TowerTooDeep { depth: usize, max: usize },
    #[error("forest {0} uses more than one color")]
    MixedColors(String),
    #[error("operator cannot act on a field of kind {0:?}")]
    UnsupportedTarget(Kind),
    #[error("oracle step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

type Result<T> = std::result::Result<T, IntegratorError>;

/// One factor of a differential-operator word.
#[derive(Clone, Debug)]
pub enum Letter {
    Vector(VectorField),
    Endo(EndoField),
}

impl Letter {
    fn backend(&self) -> Backend {
        match self {
            Letter::Vector(x) => x.backend(),
            Letter::Endo(e) => e.backend(),
        }
    }

    /// `D_a τ`.
    fn act(&self, tau: &TensorField) -> Result<TensorField> {
        Ok(match self {
            Letter::Vector(x) => tau.covariant_derivative(x)?,
            Letter::Endo(e) => match tau {
                TensorField::Scalar(_) => tau.zero_like(),
                TensorField::Vector(z) => e.apply(z)?.into(),
                TensorField::Covector(a) => e.act_on_covector(a)?.into(),
                TensorField::Endo(f) => e.commutator(f)?.into(),
            },
        })
    }

    /// `a ⊳ b`.
    fn triangle(&self, b: &Letter) -> Result<Letter> {
        Ok(match (self, b) {
            (Letter::Vector(x), Letter::Vector(y)) => Letter::Vector(cov_deriv_vec(x, y)?),
            (Letter::Vector(x), Letter::Endo(f)) => Letter::Endo(cov_deriv_endo(x, f)?),
            (Letter::Endo(e), Letter::Vector(y)) => Letter::Vector(e.apply(y)?),
            (Letter::Endo(e), Letter::Endo(f)) => Letter::Endo(e.commutator(f)?),
        })
    }
}

/// The word `w₁⊗…⊗w_n`, acting as `D_{w₁⊗…⊗w_n}`.
#[derive(Clone, Debug, Default)]
pub struct OperatorWord {
    pub letters: Vec<Letter>,
}

impl OperatorWord {
    pub fn new(letters: Vec<Letter>) -> Result<OperatorWord> {
        if let Some(first) = letters.first() {
            for l in &letters[1..] {
                first.backend().check_same(&l.backend())?;
            }
        }
        if letters.len() > MAX_TOWER_DEPTH {
            return Err(IntegratorError::TowerTooDeep { depth: letters.len(), max: MAX_TOWER_DEPTH });
        }
        Ok(OperatorWord { letters })
    }

    pub fn vectors(fields: &[VectorField]) -> Result<OperatorWord> {
        OperatorWord::new(fields.iter().cloned().map(Letter::Vector).collect())
    }

    /// `D_W τ` as a field.
    pub fn apply(&self, tau: &TensorField) -> Result<TensorField> {
        apply_letters(&self.letters, tau)
    }
}

fn apply_letters(letters: &[Letter], tau: &TensorField) -> Result<TensorField> {
    let Some((a, rest)) = letters.split_first() else {
        return Ok(tau.clone());
    };
    let mut out = a.act(&apply_letters(rest, tau)?)?;
    for i in 0..rest.len() {
        let mut w = rest.to_vec();
        w[i] = a.triangle(&rest[i])?;
        out = out.sub(&apply_letters(&w, tau)?)?;
    }
    Ok(out)
}

/// `∇^k_{x₁,…,x_k} τ` as a field, with `x₁` outermost.
pub fn cov_tower_field(fields: &[VectorField], target: &TensorField) -> Result<TensorField> {
    OperatorWord::vectors(fields)?.apply(target)
}

/// `∇^k_{x₁,…,x_k} τ` at `p`.
pub fn cov_tower(fields: &[VectorField], target: &TensorField, p: &Point) -> Result<FieldValue> {
    Ok(cov_tower_field(fields, target)?.eval(p)?)
}

/// `D_W τ` at `p`.
pub fn mixed_operator_apply(word: &OperatorWord, target: &TensorField, p: &Point) -> Result<FieldValue> {
    Ok(word.apply(target)?.eval(p)?)
}

fn check_single_color(f: &Forest) -> Result<()> {
    fn visit<'a>(t: &'a Tree, out: &mut Vec<&'a str>) {
        out.push(t.root().name());
        for b in t.branches() {
            visit(b, out);
        }
    }
    let mut names = Vec::new();
    for t in f.trees() {
        visit(t, &mut names);
    }
    names.sort_unstable();
    names.dedup();
    if names.len() > 1 {
        return Err(IntegratorError::MixedColors(f.code()));
    }
    Ok(())
}

/// The vector field `F_f(τ)`: `f` for a leaf and
/// `∇^r_{F_f(τ₁),…,F_f(τ_r)} f` for `t(c; τ₁, …, τ_r)`.
pub fn elementary_field(tree: &Tree, f: &VectorField) -> Result<VectorField> {
    if tree.grade() > MAX_TOWER_DEPTH + 1 {
        return Err(IntegratorError::TowerTooDeep { depth: tree.grade() - 1, max: MAX_TOWER_DEPTH });
    }
    check_single_color(&Forest::from(tree.clone()))?;
    let branches: Vec<VectorField> = tree.branches().iter().map(|b| elementary_field(b, f)).collect::<Result<_>>()?;
    match cov_tower_field(&branches, &f.clone().into())? {
        TensorField::Vector(v) => Ok(v),
        _ => unreachable!("towers preserve kind"),
    }
}

/// `F_f(ω) φ`: the forest `τ₁…τ_k` acts as `D_{F_f(τ₁)⊗…⊗F_f(τ_k)}`.
pub fn elementary_differential(omega: &Forest, f: &VectorField, phi: &ScalarField) -> Result<ScalarField> {
    check_single_color(omega)?;
    if omega.grade() > MAX_TOWER_DEPTH {
        return Err(IntegratorError::TowerTooDeep { depth: omega.grade(), max: MAX_TOWER_DEPTH });
    }
    let fields: Vec<VectorField> = omega.trees().iter().map(|t| elementary_field(t, f)).collect::<Result<_>>()?;
    match cov_tower_field(&fields, &phi.clone().into())? {
        TensorField::Scalar(s) => Ok(s),
        _ => unreachable!("towers preserve kind"),
    }
}

pub fn elementary_differential_at(omega: &Forest, f: &VectorField, phi: &ScalarField, p: &Point) -> Result<f64> {
    Ok(elementary_differential(omega, f, phi)?.eval(p)?)
}

/// `Σ_ω ⟨α, ω⟩ (F_f(ω) φ)(p)`.
pub fn lb_action(alpha: &TruncatedSeries, f: &VectorField, phi: &ScalarField, p: &Point) -> Result<f64> {
    lb_action_scaled(alpha, 1.0, f, phi, p)
}

/// `Σ_ω t^{|ω|} ⟨α, ω⟩ (F_f(ω) φ)(p)`, the action of `α` with every grade-`n`
/// coefficient scaled by `t^n`. For `α = exp^∗(a[])` this is the action of
/// `exp^∗(t·a[])`.
pub fn lb_action_scaled(alpha: &TruncatedSeries, t: f64, f: &VectorField, phi: &ScalarField, p: &Point) -> Result<f64> {
    if alpha.order() > MAX_TOWER_DEPTH {
        return Err(IntegratorError::TowerTooDeep { depth: alpha.order(), max: MAX_TOWER_DEPTH });
    }
    let mut sum = 0.0;
    for (omega, c) in alpha.coefficients().terms() {
        let c = c.to_f64().ok_or(AlgebraError::BadCoefficient(c.to_string()))?;
        sum += c * t.powi(omega.grade() as i32) * elementary_differential_at(omega, f, phi, p)?;
    }
    Ok(sum)
}

/// `f(f(…f(φ)))`, `k` times.
pub fn iterated_lie_derivative(f: &VectorField, phi: &ScalarField, k: usize) -> Result<ScalarField> {
    let mut out = phi.clone();
    for _ in 0..k {
        out = f.apply_to(&out)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GeodesicEuler,
    FrozenMidpoint,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::GeodesicEuler => "geodesic-euler",
            Method::FrozenMidpoint => "frozen-midpoint",
        }
    }

    pub fn step(&self, f: &VectorField, p: &Point, h: f64) -> Result<Point> {
        match self {
            Method::GeodesicEuler => step_geodesic_euler(f, p, h),
            Method::FrozenMidpoint => step_frozen_midpoint(f, p, h),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = IntegratorError;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "geodesic-euler" | "euler" => Ok(Method::GeodesicEuler),
            "frozen-midpoint" | "midpoint" => Ok(Method::FrozenMidpoint),
            _ => Err(IntegratorError::InvalidInput(format!("unknown method {s:?}"))),
        }
    }
}

/// `exp_p(h f(p))`, the exact flow of the frozen field `f^p` for time `h`.
pub fn step_geodesic_euler(f: &VectorField, p: &Point, h: f64) -> Result<Point> {
    Ok(conn_exp(&f.eval(p)?.scaled(h)))
}

/// `q = exp_p((h/2) f(p))`, `v = P_{q,p} f(q)`, result `exp_p(h v)`.
pub fn step_frozen_midpoint(f: &VectorField, p: &Point, h: f64) -> Result<Point> {
    let q = conn_exp(&f.eval(p)?.scaled(h / 2.0));
    let v = parallel_transport(&f.eval(&q)?, p)?;
    Ok(conn_exp(&v.scaled(h)))
}

/// Points `(t_k, p_k)` of a fixed-step run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub method: Method,
    pub h: f64,
    pub points: Vec<(f64, Point)>,
}

impl Trajectory {
    pub fn endpoint(&self) -> &Point {
        &self.points.last().expect("trajectories are nonempty").1
    }

    /// Header `t,x0,x1,…` then one row per point.
    pub fn to_csv(&self) -> String {
        let n = self.points[0].1.coords().len();
        let mut out = String::from("t");
        for i in 0..n {
            out.push_str(&format!(",x{i}"));
        }
        out.push('\n');
        for (t, p) in &self.points {
            out.push_str(&format!("{t:?}"));
            for x in p.coords().iter() {
                out.push_str(&format!(",{x:?}"));
            }
            out.push('\n');
        }
        out
    }

    /// Largest `|1 − |p||` on the sphere, orthogonality defect on `SO(3)`.
    pub fn manifold_defect(&self) -> f64 {
        self.points
            .iter()
            .map(|(_, p)| match p.backend() {
                Backend::Sphere { .. } => (1.0 - p.coords().norm()).abs(),
                Backend::RotationGroupFlat => {
                    let m = p.matrix().expect("rotation point");
                    (m.transpose() * m - Matrix3::identity()).amax()
                }
                Backend::EuclideanFlat { .. } => 0.0,
            })
            .fold(0.0, f64::max)
    }
}

pub fn integrate(f: &VectorField, p0: &Point, t1: f64, steps: usize, method: Method) -> Result<Trajectory> {
    if steps == 0 {
        return Err(IntegratorError::InvalidInput("need at least one step".into()));
    }
    let h = t1 / steps as f64;
    let mut points = Vec::with_capacity(steps + 1);
    let mut p = p0.clone();
    points.push((0.0, p.clone()));
    for k in 1..=steps {
        p = method.step(f, &p, h)?;
        points.push((k as f64 * h, p.clone()));
    }
    Ok(Trajectory { method, h, points })
}

fn ambient_velocity(f: &VectorField, y: &DVector<f64>) -> Result<DVector<f64>> {
    let v = f.eval_ambient(y)?;
    Ok(match f.backend() {
        Backend::RotationGroupFlat => {
            let pm = Matrix3::from_row_slice(y.as_slice());
            let d = pm * hat(&nalgebra::Vector3::new(v[0], v[1], v[2]));
            DVector::from_iterator(9, d.transpose().iter().copied())
        }
        _ => v,
    })
}

// Dormand–Prince 5(4) tableau; the fields are autonomous so the nodes are unused
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Flow of `f` for time `t` from `p`: adaptive Dormand–Prince in ambient
/// coordinates, projecting onto the manifold after every accepted step.
pub fn exact_flow_oracle(f: &VectorField, p: &Point, t: f64, tol: f64) -> Result<Point> {
    if tol.is_nan() || tol < MIN_ORACLE_TOL {
        return Err(IntegratorError::InvalidInput(format!("oracle tolerance must be at least {MIN_ORACLE_TOL:e}")));
    }
    f.backend().check_same(&p.backend())?;
    let backend = p.backend();
    let mut y = p.coords().clone();
    let mut s = 0.0;
    let dir = t.signum();
    let mut h = dir * t.abs().min(0.05);
    let mut steps = 0usize;
    while (t - s).abs() > 0.0 {
        if (t - s).abs() < h.abs() {
            h = t - s;
        }
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        for row in A.iter() {
            let mut yi = y.clone();
            for (a, kj) in row.iter().zip(&k) {
                if *a != 0.0 {
                    yi += kj * (h * a);
                }
            }
            k.push(ambient_velocity(f, &yi)?);
        }
        let mut y5 = y.clone();
        let mut e = DVector::zeros(y.len());
        for i in 0..7 {
            y5 += &k[i] * (h * B5[i]);
            e += &k[i] * (h * (B5[i] - B4[i]));
        }
        let err = e
            .iter()
            .zip(y.iter().zip(y5.iter()))
            .map(|(ei, (a, b))| (ei / (tol * (1.0 + a.abs().max(b.abs())))).powi(2))
            .sum::<f64>()
            / y.len() as f64;
        let err = err.sqrt();
        if err <= 1.0 {
            s = if (t - s - h).abs() < 1e-15 * t.abs().max(1.0) { t } else { s + h };
            y = Point::projected(backend, y5)?.coords().clone();
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        steps += 1;
        if h.abs() < 1e-14 * t.abs().max(1.0) || steps > 1_000_000 {
            return Err(IntegratorError::StepUnderflow(s));
        }
    }
    Ok(Point::projected(backend, y)?)
}

/// One row of [`taylor_compare_dot`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorRow {
    pub k: usize,
    pub tower: f64,
    pub taylor: f64,
    pub error: f64,
}

/// Compares `(1/k!) ∇^k_{f,…,f} φ(p)` with the `k`-th Taylor coefficient of
/// `t ↦ φ(exp_p(t f(p)))`, extracted by interpolation on `2K+1` symmetric
/// nodes with spacing [`TAYLOR_SPACING`].
pub fn taylor_compare_dot(f: &VectorField, phi: &ScalarField, p: &Point, k_max: usize) -> Result<Vec<TaylorRow>> {
    if k_max > MAX_TOWER_DEPTH {
        return Err(IntegratorError::TowerTooDeep { depth: k_max, max: MAX_TOWER_DEPTH });
    }
    let n = 2 * k_max + 1;
    let h = TAYLOR_SPACING;
    let fp = f.eval(p)?;
    let mut vander = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    for j in 0..n {
        let s = j as f64 - k_max as f64;
        for i in 0..n {
            vander[(j, i)] = s.powi(i as i32);
        }
        g[j] = phi.eval(&conn_exp(&fp.scaled(s * h)))?;
    }
    let b = vander.lu().solve(&g).ok_or_else(|| IntegratorError::InvalidInput("singular stencil".into()))?;
    let mut rows = Vec::with_capacity(k_max + 1);
    let mut fact = 1.0;
    for k in 0..=k_max {
        if k > 0 {
            fact *= k as f64;
        }
        let fields = vec![f.clone(); k];
        let tower = match cov_tower(&fields, &phi.clone().into(), p)? {
            FieldValue::Scalar(v) => v / fact,
            _ => unreachable!(),
        };
        let taylor = b[k] / h.powi(k as i32);
        rows.push(TaylorRow { k, tower, taylor, error: (tower - taylor).abs() });
    }
    Ok(rows)
}

/// `Σ_{k≤N} t^k/k! (f^{(k)} φ)(p)`.
pub fn truncated_flow_series(f: &VectorField, phi: &ScalarField, p: &Point, t: f64, order: usize) -> Result<f64> {
    if order > MAX_TOWER_DEPTH {
        return Err(IntegratorError::TowerTooDeep { depth: order, max: MAX_TOWER_DEPTH });
    }
    let mut sum = 0.0;
    let mut fact = 1.0;
    for k in 0..=order {
        if k > 0 {
            fact *= k as f64;
        }
        sum += t.powi(k as i32) / fact * iterated_lie_derivative(f, phi, k)?.eval(p)?;
    }
    Ok(sum)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub steps: usize,
    pub h: f64,
    pub error: f64,
    pub local_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub method: Method,
    pub t1: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log error` against `log h`; `None` when some
    /// error vanishes.
    pub slope: Option<f64>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,error,local_slope\n");
        for r in &self.rows {
            let slope = r.local_slope.map(|s| format!("{s:?}")).unwrap_or_default();
            out.push_str(&format!("{:?},{:?},{}\n", r.h, r.error, slope));
        }
        out
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Endpoint errors against [`exact_flow_oracle`] for each step count.
pub fn convergence_table(
    f: &VectorField,
    p0: &Point,
    t1: f64,
    method: Method,
    step_counts: &[usize],
) -> Result<ConvergenceTable> {
    if step_counts.len() < 4 {
        return Err(IntegratorError::InvalidInput("need at least four step counts".into()));
    }
    let ratio = step_counts[1] as f64 / step_counts[0] as f64;
    if ratio <= 1.0 || step_counts.windows(2).any(|w| (w[1] as f64 / w[0] as f64 - ratio).abs() > 1e-12) {
        return Err(IntegratorError::InvalidInput("step counts must form an increasing geometric progression".into()));
    }
    let exact = exact_flow_oracle(f, p0, t1, MIN_ORACLE_TOL)?;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(step_counts.len());
    for &n in step_counts {
        let traj = integrate(f, p0, t1, n, method)?;
        let error = traj.endpoint().distance_to(&exact);
        let h = t1 / n as f64;
        let local_slope = rows
            .last()
            .filter(|prev| prev.error > 0.0 && error > 0.0)
            .map(|prev| (prev.error / error).ln() / (prev.h / h).ln());
        rows.push(ConvergenceRow { steps: n, h, error, local_slope });
    }
    let slope = if rows.iter().all(|r| r.error > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| r.h.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.error.ln()).collect();
        Some(fit_slope(&xs, &ys))
    } else {
        None
    };
    Ok(ConvergenceTable { method, t1, rows, slope })
}
