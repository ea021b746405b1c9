use nalgebra::{DMatrix, DVector};
use postlie::forest_algebra::{ForestVector, TruncatedSeries};
use postlie::geometry::fields::{random_point, FieldValue};
use postlie::geometry::{
    cov_deriv_endo, cov_deriv_vec, torsion_field, Backend, EndoField, Point, ScalarField, TensorField, VectorField,
};
use postlie::integrators::{
    convergence_table, cov_tower, cov_tower_field, elementary_differential_at, elementary_field, exact_flow_oracle,
    fit_slope, integrate, iterated_lie_derivative, lb_action, lb_action_scaled, mixed_operator_apply,
    step_geodesic_euler, taylor_compare_dot, truncated_flow_series, IntegratorError, Letter, Method, OperatorWord,
};
use postlie::trees::{forests_up_to, Alphabet, Forest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const S2: Backend = Backend::Sphere { m: 2 };

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sphere_field(r: &mut ChaCha8Rng, m: usize) -> VectorField {
    VectorField::projected_affine(
        m,
        DMatrix::from_fn(m + 1, m + 1, |_, _| r.gen_range(-1.0..1.0)),
        DVector::from_fn(m + 1, |_, _| r.gen_range(-1.0..1.0)),
    )
    .unwrap()
}

fn linear_phi(r: &mut ChaCha8Rng, b: Backend) -> ScalarField {
    ScalarField::linear(b, DVector::from_fn(b.ambient_dim(), |_, _| r.gen_range(-1.0..1.0))).unwrap()
}

fn scalar(v: FieldValue) -> f64 {
    match v {
        FieldValue::Scalar(s) => s,
        other => panic!("{other:?}"),
    }
}

fn vector(v: FieldValue) -> DVector<f64> {
    match v {
        FieldValue::Vector(s) => s,
        other => panic!("{other:?}"),
    }
}

fn skew(r: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
    &a - a.transpose()
}

#[test]
fn tower_depth_limit() {
    let mut r = rng(1);
    let f = sphere_field(&mut r, 2);
    let phi: TensorField = linear_phi(&mut r, S2).into();
    assert!(matches!(cov_tower_field(&vec![f.clone(); 5], &phi), Err(IntegratorError::TowerTooDeep { .. })));
    assert!(cov_tower_field(&vec![f; 4], &phi).is_ok());
}

#[test]
fn flat_second_derivative_with_constant_fields() {
    let b = Backend::EuclideanFlat { m: 2 };
    let x = VectorField::constant(b, DVector::from_column_slice(&[1.0, 2.0])).unwrap();
    let y = VectorField::constant(b, DVector::from_column_slice(&[-1.0, 0.5])).unwrap();
    let q = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 0.0, -2.0]);
    let phi = ScalarField::quadratic(b, 0.0, DVector::from_column_slice(&[1.0, 1.0]), Some(q.clone())).unwrap();
    let p = Point::new(b, DVector::from_column_slice(&[0.3, 0.7])).unwrap();
    let v = scalar(cov_tower(&[x.clone(), y.clone()], &phi.into(), &p).unwrap());
    let xv = DVector::from_column_slice(&[1.0, 2.0]);
    let yv = DVector::from_column_slice(&[-1.0, 0.5]);
    let expected = (xv.transpose() * (&q + q.transpose()) * yv)[(0, 0)];
    assert!((v - expected).abs() < 1e-13);
}

#[test]
fn hessian_is_symmetric_on_sphere() {
    let mut r = rng(2);
    let (x, y) = (sphere_field(&mut r, 2), sphere_field(&mut r, 2));
    let q = DMatrix::from_fn(3, 3, |_, _| r.gen_range(-1.0..1.0));
    let phi: TensorField = ScalarField::quadratic(S2, 0.2, DVector::from_element(3, 0.4), Some(q)).unwrap().into();
    for _ in 0..20 {
        let p = random_point(S2, &mut r);
        let a = scalar(cov_tower(&[x.clone(), y.clone()], &phi, &p).unwrap());
        let b = scalar(cov_tower(&[y.clone(), x.clone()], &phi, &p).unwrap());
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn antisymmetrized_hessian_on_rotation_group_is_torsion() {
    let mut r = rng(3);
    let b = Backend::RotationGroupFlat;
    let mk = |r: &mut ChaCha8Rng| {
        VectorField::polynomial(
            b,
            DVector::from_fn(3, |_, _| r.gen_range(-1.0..1.0)),
            Some(DMatrix::from_fn(3, 9, |_, _| r.gen_range(-1.0..1.0))),
            Vec::new(),
        )
        .unwrap()
    };
    let (x, y) = (mk(&mut r), mk(&mut r));
    let phi = ScalarField::quadratic(b, 0.0, DVector::from_fn(9, |_, _| r.gen_range(-1.0..1.0)), None).unwrap();
    let t_phi = torsion_field(&x, &y).unwrap().apply_to(&phi).unwrap();
    for _ in 0..10 {
        let p = random_point(b, &mut r);
        let a = scalar(cov_tower(&[x.clone(), y.clone()], &phi.clone().into(), &p).unwrap());
        let c = scalar(cov_tower(&[y.clone(), x.clone()], &phi.clone().into(), &p).unwrap());
        let t = t_phi.eval(&p).unwrap();
        assert!((a - c + t).abs() < 1e-8);
        assert!(t.abs() > 1e-4);
    }
}

#[test]
fn word_commutator_is_curvature_minus_torsion_derivative() {
    let mut r = rng(4);
    for b in [S2, Backend::Sphere { m: 3 }] {
        let m = b.manifold_dim();
        let (x, y, z) = (sphere_field(&mut r, m), sphere_field(&mut r, m), sphere_field(&mut r, m));
        let xy = OperatorWord::vectors(&[x.clone(), y.clone()]).unwrap();
        let yx = OperatorWord::vectors(&[y.clone(), x.clone()]).unwrap();
        let zt: TensorField = z.clone().into();
        for _ in 0..10 {
            let p = random_point(b, &mut r);
            let lhs = vector(mixed_operator_apply(&xy, &zt, &p).unwrap())
                - vector(mixed_operator_apply(&yx, &zt, &p).unwrap());
            let rz = EndoField::curvature_of(&x, &y).unwrap().apply(&z).unwrap().eval(&p).unwrap();
            let tz = cov_deriv_vec(&torsion_field(&x, &y).unwrap(), &z).unwrap().eval(&p).unwrap();
            assert!((lhs - rz.components() + tz.components()).norm() < 1e-8);
        }
    }
}

#[test]
fn mixed_words_with_endomorphisms() {
    let mut r = rng(5);
    let (x, z) = (sphere_field(&mut r, 2), sphere_field(&mut r, 2));
    let e = EndoField::constant(S2, skew(&mut r, 3)).unwrap();
    let zt: TensorField = z.clone().into();
    let ex = OperatorWord::new(vec![Letter::Endo(e.clone()), Letter::Vector(x.clone())]).unwrap();
    let xe = OperatorWord::new(vec![Letter::Vector(x.clone()), Letter::Endo(e.clone())]).unwrap();
    let e_alone = OperatorWord::new(vec![Letter::Endo(e.clone())]).unwrap();
    let x_alone = OperatorWord::vectors(std::slice::from_ref(&x)).unwrap();
    for _ in 0..10 {
        let p = random_point(S2, &mut r);
        // [D_E, D_x] z + (∇_x E) z = 0
        let de_dx = e_alone.apply(&x_alone.apply(&zt).unwrap()).unwrap().eval(&p).unwrap();
        let dx_de = x_alone.apply(&e_alone.apply(&zt).unwrap()).unwrap().eval(&p).unwrap();
        let nxe = cov_deriv_endo(&x, &e).unwrap().apply(&z).unwrap().eval(&p).unwrap();
        assert!((vector(de_dx) - vector(dx_de) + nxe.components()).norm() < 1e-9);
        // x⊗E acts as D_E ∇_x; E⊗x − x⊗E acts as −∇_{Ex}
        let xe_v = vector(mixed_operator_apply(&xe, &zt, &p).unwrap());
        let e_nx = e.apply(&cov_deriv_vec(&x, &z).unwrap()).unwrap().eval(&p).unwrap();
        assert!((&xe_v - e_nx.components()).norm() < 1e-9);
        let ex_v = vector(mixed_operator_apply(&ex, &zt, &p).unwrap());
        let n_ex = cov_deriv_vec(&e.apply(&x).unwrap(), &z).unwrap().eval(&p).unwrap();
        assert!((ex_v - xe_v + n_ex.components()).norm() < 1e-9);
    }
}

#[test]
fn elementary_differentials_of_small_forests() {
    let mut r = rng(6);
    let f = sphere_field(&mut r, 2);
    let phi = linear_phi(&mut r, S2);
    let p = random_point(S2, &mut r);
    let ed = |code: &str| elementary_differential_at(&Forest::parse(code).unwrap(), &f, &phi, &p).unwrap();
    let nff = cov_deriv_vec(&f, &f).unwrap().apply_to(&phi).unwrap().eval(&p).unwrap();
    assert!((ed("a[a[]]") - nff).abs() < 1e-14);
    let tower = scalar(cov_tower(&[f.clone(), f.clone()], &phi.clone().into(), &p).unwrap());
    assert!((ed("a[]a[]") - tower).abs() < 1e-14);
    // words of leaves are the towers themselves
    for k in 1..=4 {
        let code = "a[]".repeat(k);
        let t = scalar(cov_tower(&vec![f.clone(); k], &phi.clone().into(), &p).unwrap());
        assert!((ed(&code) - t).abs() <= 1e-12);
    }
    // F(a[a[],a[]]) = ∇²_{f,f} f
    let v = elementary_field(&Forest::parse("a[a[],a[]]").unwrap().trees()[0], &f).unwrap();
    let w = cov_tower_field(&[f.clone(), f.clone()], &f.clone().into()).unwrap();
    match w {
        TensorField::Vector(w) => {
            assert!((v.eval(&p).unwrap().components() - w.eval(&p).unwrap().components()).norm() < 1e-14)
        }
        _ => unreachable!(),
    }
}

#[test]
fn lb_action_of_exponentials() {
    let mut r = rng(7);
    let f = sphere_field(&mut r, 2);
    let phi = linear_phi(&mut r, S2);
    let p = random_point(S2, &mut r);
    let alpha = TruncatedSeries::new(4, ForestVector::parse("a[]").unwrap()).unwrap();
    let t: f64 = 0.37;
    // exp^·: single words only
    let ed = alpha.exp_dot(3).unwrap();
    let mut expected = 0.0;
    let mut fact = 1.0;
    for k in 0..=3 {
        if k > 0 {
            fact *= k as f64;
        }
        let tk = if k == 0 {
            phi.eval(&p).unwrap()
        } else {
            scalar(cov_tower(&vec![f.clone(); k], &phi.clone().into(), &p).unwrap())
        };
        expected += t.powi(k as i32) / fact * tk;
    }
    assert!((lb_action_scaled(&ed, t, &f, &phi, &p).unwrap() - expected).abs() < 1e-12);
    // exp^∗ is the iterated Lie derivative
    for n in 2..=4 {
        let es = alpha.exp_star(n).unwrap();
        let lhs = lb_action_scaled(&es, t, &f, &phi, &p).unwrap();
        let rhs = truncated_flow_series(&f, &phi, &p, t, n).unwrap();
        assert!((lhs - rhs).abs() < 1e-12, "{n}: {lhs} {rhs}");
    }
    // second order by hand: φ + t fφ + t²/2 f(fφ)
    let es2 = alpha.exp_star(2).unwrap();
    let hand = phi.eval(&p).unwrap()
        + t * iterated_lie_derivative(&f, &phi, 1).unwrap().eval(&p).unwrap()
        + t * t / 2.0 * iterated_lie_derivative(&f, &phi, 2).unwrap().eval(&p).unwrap();
    assert!((lb_action_scaled(&es2, t, &f, &phi, &p).unwrap() - hand).abs() < 1e-13);
    let _ = lb_action(&es2, &f, &phi, &p).unwrap();
}

#[test]
fn word_tower_consistency_over_all_leaf_words() {
    let mut r = rng(8);
    let f = sphere_field(&mut r, 3);
    let b = Backend::Sphere { m: 3 };
    let phi = linear_phi(&mut r, b);
    let p = random_point(b, &mut r);
    for forest in forests_up_to(&Alphabet::default(), 4) {
        if forest.trees().iter().all(|t| t.is_leaf()) && !forest.is_unit() {
            let k = forest.len();
            let a = elementary_differential_at(&forest, &f, &phi, &p).unwrap();
            let b = scalar(cov_tower(&vec![f.clone(); k], &phi.clone().into(), &p).unwrap());
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn rotation_field_euler_is_exact() {
    let mut r = rng(9);
    let a = skew(&mut r, 3);
    let f = VectorField::rotation(a.clone()).unwrap();
    let p = random_point(S2, &mut r);
    for h in [0.01, 0.1, 0.5, 1.0] {
        // the flow of p ↦ Ap is e^{tA}p
        let exact = exact_flow_oracle(&f, &p, h, 1e-13).unwrap();
        let rot = (a.clone() * h).exp() * p.coords();
        assert!((exact.coords() - rot).norm() < 1e-10);
    }
    // a rotation field about an axis orthogonal to p is geodesic along its orbit
    let axis_skew = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let g = VectorField::rotation(axis_skew.clone()).unwrap();
    let eq = Point::new(S2, DVector::from_column_slice(&[1.0, 0.0, 0.0])).unwrap();
    for h in [0.01, 0.3, 1.0, 2.5] {
        let step = step_geodesic_euler(&g, &eq, h).unwrap();
        let exact = exact_flow_oracle(&g, &eq, h, 1e-13).unwrap();
        assert!(step.distance_to(&exact) < 1e-9);
    }
}

#[test]
fn oracle_semigroup_property() {
    let mut r = rng(10);
    let f = sphere_field(&mut r, 2);
    let p = random_point(S2, &mut r);
    let (t1, t2) = (0.4, 0.75);
    let direct = exact_flow_oracle(&f, &p, t1 + t2, 1e-13).unwrap();
    let composed = exact_flow_oracle(&f, &exact_flow_oracle(&f, &p, t1, 1e-13).unwrap(), t2, 1e-13).unwrap();
    assert!(direct.distance_to(&composed) < 1e-9);
    // rotation group flow stays on the group
    let b = Backend::RotationGroupFlat;
    let g = VectorField::polynomial(
        b,
        DVector::from_column_slice(&[0.3, -0.2, 0.5]),
        Some(DMatrix::from_fn(3, 9, |_, _| r.gen_range(-0.5..0.5))),
        Vec::new(),
    )
    .unwrap();
    let q = random_point(b, &mut r);
    let end = exact_flow_oracle(&g, &q, 1.0, 1e-12).unwrap();
    let m = end.matrix().unwrap();
    assert!((m.transpose() * m - nalgebra::Matrix3::identity()).amax() < 1e-10);
}

#[test]
fn taylor_coefficients_match_towers() {
    let mut r = rng(11);
    for _ in 0..20 {
        let f = sphere_field(&mut r, 2);
        let phi = linear_phi(&mut r, S2);
        let p = random_point(S2, &mut r);
        let rows = taylor_compare_dot(&f, &phi, &p, 4).unwrap();
        assert!(rows[0].error < 1e-12);
        assert!(rows[1].error < 1e-10, "{:?}", rows[1]);
        for row in &rows {
            assert!(row.error < 1e-6, "{row:?}");
        }
    }
}

#[test]
fn truncated_flow_series_error_order() {
    let mut r = rng(12);
    let f = sphere_field(&mut r, 2);
    let phi = linear_phi(&mut r, S2);
    let p = random_point(S2, &mut r);
    for n in [2usize, 3] {
        let ts: Vec<f64> = (0..9).map(|j| 1e-3 * 10f64.powf(j as f64 / 4.0)).collect();
        let errs: Vec<f64> = ts
            .iter()
            .map(|&t| {
                let exact = phi.eval(&exact_flow_oracle(&f, &p, t, 1e-13).unwrap()).unwrap();
                (truncated_flow_series(&f, &phi, &p, t, n).unwrap() - exact).abs()
            })
            .collect();
        let slope =
            fit_slope(&ts.iter().map(|t| t.ln()).collect::<Vec<_>>(), &errs.iter().map(|e| e.ln()).collect::<Vec<_>>());
        assert!(slope >= n as f64 + 0.8, "N = {n}: slope {slope}, errors {errs:?}");
    }
}

#[test]
fn convergence_orders_on_sphere() {
    let mut r = rng(13);
    let f = sphere_field(&mut r, 2);
    let p = random_point(S2, &mut r);
    let steps: Vec<usize> = (4..=9).map(|k| 1 << k).collect();
    let euler = convergence_table(&f, &p, 1.0, Method::GeodesicEuler, &steps).unwrap();
    let mid = convergence_table(&f, &p, 1.0, Method::FrozenMidpoint, &steps).unwrap();
    let (se, sm) = (euler.slope.unwrap(), mid.slope.unwrap());
    assert!((se - 1.0).abs() <= 0.1, "euler slope {se}");
    assert!((sm - 2.0).abs() <= 0.15, "midpoint slope {sm}");
    let traj = integrate(&f, &p, 1.0, 512, Method::FrozenMidpoint).unwrap();
    assert!(traj.manifold_defect() <= 1e-10);
    assert!(traj.to_csv().starts_with("t,x0,x1,x2\n"));
}

#[test]
fn zero_field_has_zero_errors() {
    let f = VectorField::zero(S2);
    let p = S2.origin();
    for m in [Method::GeodesicEuler, Method::FrozenMidpoint] {
        let t = convergence_table(&f, &p, 1.0, m, &[16, 32, 64, 128]).unwrap();
        assert!(t.rows.iter().all(|r| r.error == 0.0));
    }
}
