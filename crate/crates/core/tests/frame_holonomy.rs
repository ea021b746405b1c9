use nalgebra::{DMatrix, DVector};
use postlie::frame_holonomy::{
    equivariance_check, equivariance_residual, frame_transport, holonomy_span, horizontal_derivative,
    random_holonomy_frame, random_orthogonal, raw_components, sample_extended_field, scalarize,
    theorem1_axiom_residuals, theorem1_bracket, theorem1_triangle, CurvatureTensor, ExtendedField, Frame,
    TorsionTensor, Valence,
};
use postlie::geometry::fields::{random_point, CovectorField};
use postlie::geometry::{Backend, EndoField, TensorField, VectorField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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

#[test]
fn axioms_hold_on_spheres_with_endomorphisms() {
    for m in [2, 3] {
        let b = Backend::Sphere { m };
        let mut r = rng(100 + m as u64);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let fields: Vec<ExtendedField> = (0..3).map(|_| sample_extended_field(b, &mut r).unwrap()).collect();
            let p = random_point(b, &mut r);
            assert!(fields[0].endo.eval(&p).unwrap().norm() > 1e-3);
            let res = theorem1_axiom_residuals(&fields[0], &fields[1], &fields[2], &p).unwrap();
            worst = worst.max(res.max());
        }
        assert!(worst <= 1e-7, "m = {m}: {worst:e}");
    }
}

#[test]
fn axioms_hold_on_rotation_group() {
    let b = Backend::RotationGroupFlat;
    let mut r = rng(7);
    for _ in 0..100 {
        let fields: Vec<ExtendedField> = (0..3).map(|_| sample_extended_field(b, &mut r).unwrap()).collect();
        let p = random_point(b, &mut r);
        let res = theorem1_axiom_residuals(&fields[0], &fields[1], &fields[2], &p).unwrap();
        assert!(res.max() <= 1e-10, "{res:?}");
    }
}

#[test]
fn axioms_with_non_invariant_fields_on_rotation_group() {
    // E = 0 but general polynomial vector fields
    let b = Backend::RotationGroupFlat;
    let mut r = rng(8);
    let mk = |r: &mut ChaCha8Rng| {
        let c = DVector::from_fn(3, |_, _| r.gen_range(-1.0..1.0));
        let a = DMatrix::from_fn(3, 9, |_, _| r.gen_range(-1.0..1.0));
        ExtendedField::from_vector(VectorField::polynomial(b, c, Some(a), Vec::new()).unwrap())
    };
    for _ in 0..20 {
        let (x, y, z) = (mk(&mut r), mk(&mut r), mk(&mut r));
        let p = random_point(b, &mut r);
        assert!(theorem1_axiom_residuals(&x, &y, &z, &p).unwrap().max() <= 1e-10);
    }
}

#[test]
fn all_zero_fields_have_zero_residuals() {
    let b = Backend::Sphere { m: 2 };
    let z = ExtendedField::zero(b);
    let res = theorem1_axiom_residuals(&z, &z, &z, &b.origin()).unwrap();
    assert_eq!(res.max(), 0.0);
}

/// A bracket that drops the curvature term must break Jacobi on the sphere.
#[test]
fn wrong_curvature_sign_is_detected() {
    let b = Backend::Sphere { m: 2 };
    let mut r = rng(9);
    let (x, y, z) = (sphere_field(&mut r, 2), sphere_field(&mut r, 2), sphere_field(&mut r, 2));
    let flipped = |a: &VectorField, c: &VectorField| EndoField::curvature_of(a, c).unwrap().scale(-1.0);
    // [x,[y,z]] with R replaced by −R
    let term = |a: &VectorField, c: &VectorField, d: &VectorField| flipped(c, d).apply(a).unwrap().scale(-1.0);
    let s = term(&x, &y, &z).add(&term(&y, &z, &x)).unwrap().add(&term(&z, &x, &y)).unwrap();
    let p = random_point(b, &mut r);
    // Bianchi still holds with either sign, so use the derivation axiom instead
    let ex = ExtendedField::from_vector(x.clone());
    let ey = ExtendedField::from_vector(y.clone());
    let ez = ExtendedField::from_vector(z.clone());
    let good = theorem1_axiom_residuals(&ex, &ey, &ez, &p).unwrap();
    assert!(good.max() < 1e-8);
    assert!(s.eval(&p).unwrap().norm() < 1e-8);
    // associator axiom with a wrong-sign bracket: [x,y]⊳z would be −R(x,y)z
    let wrong = ExtendedField::from_endo(flipped(&x, &y));
    let lhs = theorem1_triangle(&wrong, &ez).unwrap();
    let right = theorem1_triangle(&theorem1_bracket(&ex, &ey).unwrap(), &ez).unwrap();
    assert!(lhs.sub(&right).unwrap().norm_at(&p).unwrap() > 1e-3);
}

#[test]
fn reductive_split_is_respected() {
    let b = Backend::Sphere { m: 3 };
    let mut r = rng(10);
    for _ in 0..20 {
        let a = sample_extended_field(b, &mut r).unwrap();
        let c = sample_extended_field(b, &mut r).unwrap();
        let p = random_point(b, &mut r);
        for f in [theorem1_bracket(&a, &c).unwrap(), theorem1_triangle(&a, &c).unwrap()] {
            let (v, e) = f.eval(&p).unwrap();
            assert!(v.dot(p.coords()).abs() < 1e-10);
            assert!((&e + e.transpose()).amax() < 1e-9);
            assert!((&e * p.coords()).norm() < 1e-10);
        }
    }
}

#[test]
fn holonomy_rank() {
    let mut r = rng(11);
    for (b, expected) in [
        (Backend::Sphere { m: 2 }, 1),
        (Backend::Sphere { m: 3 }, 3),
        (Backend::Sphere { m: 4 }, 6),
        (Backend::EuclideanFlat { m: 3 }, 0),
        (Backend::RotationGroupFlat, 0),
    ] {
        let u = Frame::standard(b.origin());
        let m = b.manifold_dim();
        assert_eq!(holonomy_span(&u, 4 * m * m, &mut r).unwrap(), expected, "{b:?}");
    }
}

#[test]
fn frame_transport_preserves_gram_and_curvature() {
    let mut r = rng(12);
    for m in [2, 3] {
        let b = Backend::Sphere { m };
        let curv = CurvatureTensor { backend: b, computed: true };
        for _ in 0..10 {
            let p = random_point(b, &mut r);
            // non-orthonormal frame to make the Gram check meaningful
            let u0 = Frame::random_orthonormal(p.clone(), &mut r);
            let g = DMatrix::from_fn(m, m, |i, j| if i <= j { r.gen_range(0.5..1.5) } else { 0.0 });
            let u = Frame::new(p.clone(), u0.matrix() * g).unwrap();
            let same = frame_transport(&u, &p).unwrap();
            assert!((same.matrix() - u.matrix()).amax() < 1e-15);
            let moved = random_holonomy_frame(&u, &mut r).unwrap();
            assert!((moved.gram() - u.gram()).amax() < 1e-10);
            let orth = random_holonomy_frame(&u0, &mut r).unwrap();
            assert!(orth.orthonormality_defect() < 1e-10);
            let r0 = scalarize(&curv, &u).unwrap();
            let r1 = scalarize(&curv, &moved).unwrap();
            assert!(r0.max_abs_diff(&r1) <= 1e-9, "{:e}", r0.max_abs_diff(&r1));
        }
    }
}

#[test]
fn torsion_constant_along_transport_on_rotation_group() {
    let b = Backend::RotationGroupFlat;
    let mut r = rng(13);
    let tors = TorsionTensor { backend: b, computed: true };
    for _ in 0..10 {
        let u = Frame::random_orthonormal(random_point(b, &mut r), &mut r);
        let moved = random_holonomy_frame(&u, &mut r).unwrap();
        let (t0, t1) = (scalarize(&tors, &u).unwrap(), scalarize(&tors, &moved).unwrap());
        assert!(t0.max_abs_diff(&t1) <= 1e-9);
        assert!(t0.max_abs() > 0.1);
    }
}

#[test]
fn scalarized_curvature_is_skew() {
    let mut r = rng(14);
    for m in [2, 3] {
        let b = Backend::Sphere { m };
        let u = Frame::random_orthonormal(random_point(b, &mut r), &mut r);
        let s = scalarize(&CurvatureTensor { backend: b, computed: false }, &u).unwrap();
        for a in 0..m {
            for c in 0..m {
                let mat = s.curvature_matrix(a, c).unwrap();
                assert!((&mat + mat.transpose()).amax() < 1e-12);
            }
        }
    }
}

#[test]
fn closed_and_computed_scalarizations_agree() {
    let mut r = rng(15);
    for b in [Backend::Sphere { m: 3 }, Backend::RotationGroupFlat] {
        let u = Frame::random_orthonormal(random_point(b, &mut r), &mut r);
        let c1 = scalarize(&CurvatureTensor { backend: b, computed: true }, &u).unwrap();
        let c2 = scalarize(&CurvatureTensor { backend: b, computed: false }, &u).unwrap();
        assert!(c1.max_abs_diff(&c2) < 1e-10);
        let t1 = scalarize(&TorsionTensor { backend: b, computed: true }, &u).unwrap();
        let t2 = scalarize(&TorsionTensor { backend: b, computed: false }, &u).unwrap();
        assert!(t1.max_abs_diff(&t2) < 1e-10);
    }
}

#[test]
fn equivariance_of_genuine_tensors() {
    let mut r = rng(16);
    for m in [2, 3] {
        let b = Backend::Sphere { m };
        let frames: Vec<Frame> = (0..5).map(|_| Frame::random_orthonormal(random_point(b, &mut r), &mut r)).collect();
        let group: Vec<DMatrix<f64>> = (0..5).map(|_| random_orthogonal(m, &mut r)).collect();
        let x: TensorField = sphere_field(&mut r, m).into();
        let alpha: TensorField = CovectorField::polynomial(
            b,
            DVector::from_element(m + 1, 0.3),
            Some(DMatrix::identity(m + 1, m + 1)),
            Vec::new(),
        )
        .unwrap()
        .into();
        let e: TensorField =
            EndoField::constant(b, DMatrix::from_fn(m + 1, m + 1, |i, j| (i as f64) - (j as f64))).unwrap().into();
        assert!(equivariance_check(&x, &frames, &group).unwrap() < 1e-9);
        assert!(equivariance_check(&alpha, &frames, &group).unwrap() < 1e-9);
        assert!(equivariance_check(&e, &frames, &group).unwrap() < 1e-9);
        let curv = CurvatureTensor { backend: b, computed: false };
        assert!(equivariance_check(&curv, &frames, &group).unwrap() < 1e-9);
        // negative control
        let raw = equivariance_residual(|u| raw_components(&x, u), &frames, &group).unwrap();
        assert!(raw > 1e-3, "{raw:e}");
    }
    // flat space, general linear group
    let b = Backend::EuclideanFlat { m: 3 };
    let frames = vec![Frame::standard(b.origin())];
    let group: Vec<DMatrix<f64>> =
        (0..5).map(|_| DMatrix::from_fn(3, 3, |i, j| if i == j { 2.0 } else { r.gen_range(-0.5..0.5) })).collect();
    let c: TensorField = VectorField::constant(b, DVector::from_column_slice(&[1.0, 2.0, 3.0])).unwrap().into();
    assert!(equivariance_check(&c, &frames, &[DMatrix::identity(3, 3)]).unwrap() == 0.0);
    assert!(equivariance_check(&c, &frames, &group).unwrap() < 1e-12);
    let tors = TorsionTensor { backend: Backend::RotationGroupFlat, computed: false };
    let so3_frames = vec![Frame::standard(Backend::RotationGroupFlat.origin())];
    let rot: Vec<DMatrix<f64>> = (0..5).map(|_| random_orthogonal(3, &mut r)).collect();
    assert!(equivariance_check(&tors, &so3_frames, &rot).unwrap() < 1e-12);
}

#[test]
fn horizontal_lift_compatibility() {
    let mut r = rng(17);
    for b in [Backend::Sphere { m: 2 }, Backend::Sphere { m: 3 }] {
        let m = b.manifold_dim();
        let x = sphere_field(&mut r, m);
        let y = sphere_field(&mut r, m);
        let e = EndoField::constant(b, DMatrix::from_fn(m + 1, m + 1, |_, _| r.gen_range(-1.0..1.0))).unwrap();
        for tau in [TensorField::from(y), TensorField::from(e)] {
            for _ in 0..5 {
                let u = Frame::random_orthonormal(random_point(b, &mut r), &mut r);
                let lhs = horizontal_derivative(&tau, &x, &u, 1e-5).unwrap();
                let rhs = scalarize(&tau.covariant_derivative(&x).unwrap(), &u).unwrap();
                assert!(lhs.max_abs_diff(&rhs) <= 1e-6, "{:e}", lhs.max_abs_diff(&rhs));
            }
        }
    }
}

#[test]
fn valence_constants() {
    assert_eq!(Valence::CURVATURE.inputs, 3);
    assert_eq!(Valence::TORSION.outputs, 1);
}
