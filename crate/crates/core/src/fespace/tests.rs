use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn space(n: usize, family: Family) -> Arc<FunctionSpace> {
    let mesh = Arc::new(PeriodicTriMesh::build_uniform(n).unwrap());
    Arc::new(FunctionSpace::new(mesh, family))
}

fn random_function(space: &Arc<FunctionSpace>, rng: &mut ChaCha8Rng) -> FeFunction {
    let c = (0..space.dof_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    FeFunction::from_coefficients(Arc::clone(space), c).unwrap()
}

fn velocity0(p: [f64; 2]) -> [f64; 2] {
    let (x, y) = (p[0], p[1]);
    [
        -1e-2 * (PI * x).sin().powi(2) * (2.0 * PI * y).sin(),
        1e-2 * (2.0 * PI * x).sin() * (PI * y).sin().powi(2),
    ]
}

#[test]
fn dof_counts() {
    assert_eq!(space(4, Family::P1).dof_count(), 16);
    assert_eq!(space(4, Family::P2).dof_count(), 64);
    assert_eq!(space(2, Family::P2Vector).dof_count(), 32);
    assert_eq!(space(3, Family::P1MeanFree).dof_count(), 9);
}

#[test]
fn every_dof_referenced_and_in_range() {
    for family in [Family::P1, Family::P2] {
        for n in [1, 2, 5] {
            let s = space(n, family);
            let mut seen = vec![false; s.scalar_dof_count()];
            for t in 0..s.mesh().num_triangles() {
                for &d in s.element_dofs(t) {
                    assert!(d < s.scalar_dof_count());
                    seen[d] = true;
                }
            }
            assert!(seen.iter().all(|&b| b), "{family:?} n = {n}");
            assert!(s
                .nodes()
                .iter()
                .all(|p| (0.0..1.0).contains(&p[0]) && (0.0..1.0).contains(&p[1])));
        }
    }
}

#[test]
fn dofs_are_ordered_lexicographically() {
    let s = space(3, Family::P2);
    let nv = 9;
    let lex = |a: &[f64; 2], b: &[f64; 2]| a.partial_cmp(b).unwrap();
    assert!(s.nodes()[..nv].windows(2).all(|w| lex(&w[0], &w[1]).is_lt()));
    assert!(s.nodes()[nv..].windows(2).all(|w| lex(&w[0], &w[1]).is_lt()));
}

#[test]
fn opposite_faces_share_dofs() {
    // A function continuous across the periodic seam: evaluating just inside
    // x = 0 and just inside x = 1 must agree for any coefficient vector.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for family in [Family::P1, Family::P2] {
        let s = space(4, family);
        let f = random_function(&s, &mut rng);
        for k in 0..20 {
            let y = (k as f64 + 0.37) / 20.0;
            let a = f.evaluate([1e-13, y]);
            let b = f.evaluate([1.0 - 1e-13, y]);
            assert!((a - b).abs() < 1e-10);
            let a = f.evaluate([y, 1e-13]);
            let b = f.evaluate([y, 1.0 - 1e-13]);
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn partition_of_unity_at_quadrature_points() {
    let rule = quad_rule(6).unwrap();
    for family in [Family::P1, Family::P2] {
        let s = space(3, family);
        let tab = s.tabulate(&rule);
        for t in 0..s.mesh().num_triangles() {
            for q in 0..tab.num_points() {
                let sum: f64 = tab.values(q).iter().sum();
                assert!((sum - 1.0).abs() < 1e-14);
                let g = tab.grads(t, q).iter().fold([0.0, 0.0], |a, g| [a[0] + g[0], a[1] + g[1]]);
                assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12);
            }
        }
    }
}

#[test]
fn partition_of_unity_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for order in [1, 2] {
        for _ in 0..50 {
            let a: f64 = rng.gen();
            let b: f64 = rng.gen::<f64>() * (1.0 - a);
            let lam = [1.0 - a - b, a, b];
            let mut v = [0.0; 6];
            basis::values(order, lam, &mut v);
            let sum: f64 = v[..basis::count(order)].iter().sum();
            assert!((sum - 1.0).abs() < 1e-14);
        }
    }
}

/// L2 error of the gradient of the P2 interpolant of sin(2 pi x).
fn gradient_error(n: usize) -> f64 {
    let s = space(n, Family::P2);
    let f = s.interpolate(|p| (2.0 * PI * p[0]).sin());
    let rule = quad_rule(8).unwrap();
    let tab = s.tabulate(&rule);
    let mut err = 0.0;
    for t in 0..s.mesh().num_triangles() {
        for q in 0..tab.num_points() {
            let mut g = [0.0; 2];
            for (a, &d) in s.element_dofs(t).iter().enumerate() {
                let gr = tab.grads(t, q)[a];
                g[0] += f.coefficients()[d] * gr[0];
                g[1] += f.coefficients()[d] * gr[1];
            }
            let x = tab.point(t, q)[0];
            let ex = 2.0 * PI * (2.0 * PI * x).cos();
            err += tab.weight(t, q) * ((g[0] - ex).powi(2) + g[1].powi(2));
        }
    }
    err.sqrt()
}

#[test]
fn p2_gradient_converges_quadratically() {
    let e: Vec<f64> = [4, 8, 16].iter().map(|&n| gradient_error(n)).collect();
    for w in e.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!(rate > 1.9 && rate < 2.2, "rate {rate} from {e:?}");
    }
}

#[test]
fn interpolation_of_constants_and_initial_phase() {
    let s = space(4, Family::P1);
    let one = s.interpolate(|_| 1.0);
    assert!(one.coefficients().iter().all(|&c| c == 1.0));
    let phi = s.interpolate(|p| 0.4 + 0.2 * (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).sin());
    // vertex (0.25, 0.25) has lattice indices (1, 1)
    assert_eq!(s.nodes()[4 + 1], [0.25, 0.25]);
    assert!((phi.coefficients()[5] - 0.6).abs() < 1e-15);
}

#[test]
fn mean_free_interpolation_has_zero_mean() {
    let s = space(5, Family::P1MeanFree);
    let f = s.interpolate(|p| 2.0 + p[0] * (1.0 - p[0]) + (2.0 * PI * p[1]).cos());
    assert!(f.integrate().abs() < 1e-12);
}

/// Divergence of the P2 interpolant of the initial velocity tested against
/// every P1 hat function, measured in the norm induced by the lumped P1 mass.
fn divergence_residual(n: usize, field: fn([f64; 2]) -> [f64; 2]) -> f64 {
    let mesh = Arc::new(PeriodicTriMesh::build_uniform(n).unwrap());
    let p1 = Arc::new(FunctionSpace::new(Arc::clone(&mesh), Family::P1));
    let p2 = Arc::new(FunctionSpace::new(mesh, Family::P2Vector));
    let u = p2.interpolate_vector(field);
    let rule = quad_rule(6).unwrap();
    let t1 = p1.tabulate(&rule);
    let t2 = p2.tabulate(&rule);
    let ns = p2.scalar_dof_count();
    let mut r = vec![0.0; p1.dof_count()];
    for t in 0..mesh_triangles(&p1) {
        for q in 0..t1.num_points() {
            let mut div = 0.0;
            for (a, &d) in p2.element_dofs(t).iter().enumerate() {
                let g = t2.grads(t, q)[a];
                div += u.coefficients()[d] * g[0] + u.coefficients()[ns + d] * g[1];
            }
            for (i, &d) in p1.element_dofs(t).iter().enumerate() {
                r[d] += t1.weight(t, q) * div * t1.value(q, i);
            }
        }
    }
    let m = p1.basis_integrals(&rule);
    r.iter().zip(&m).map(|(ri, mi)| ri * ri / mi).sum::<f64>().sqrt()
}

fn mesh_triangles(s: &FunctionSpace) -> usize {
    s.mesh().num_triangles()
}

// curl of sin(2πx) sin(4πy) + cos(2πy) sin(2πx)²
fn skewed_solenoidal(p: [f64; 2]) -> [f64; 2] {
    let (x, y) = (2.0 * PI * p[0], 2.0 * PI * p[1]);
    [
        4.0 * PI * x.sin() * (2.0 * y).cos() - 2.0 * PI * y.sin() * x.sin().powi(2),
        -2.0 * PI * x.cos() * (2.0 * y).sin() - 4.0 * PI * y.cos() * x.sin() * x.cos(),
    ]
}

#[test]
fn interpolated_velocity_is_nearly_solenoidal() {
    let e: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| divergence_residual(n, skewed_solenoidal))
        .collect();
    for w in e.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!(rate > 1.8, "rate {rate} from {e:?}");
    }
    // the symmetric initial velocity is discretely solenoidal up to roundoff
    for n in [8, 16, 32] {
        let h = 1.0 / n as f64;
        assert!(divergence_residual(n, velocity0) <= 1e-3 * h * h);
    }
}

#[test]
fn prolongation_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for family in [Family::P1, Family::P2, Family::P2Vector] {
        let coarse = space(4, family);
        let fine = Arc::new(FunctionSpace::new(Arc::new(coarse.mesh().refine()), family));
        let f = random_function(&coarse, &mut rng);
        let g = f.prolong(&fine).unwrap();
        for _ in 0..50 {
            let p = [rng.gen::<f64>(), rng.gen::<f64>()];
            for c in 0..family.components() {
                let a = f.evaluate_component(p, c);
                let b = g.evaluate_component(p, c);
                assert!((a - b).abs() < 1e-13, "{family:?}: {a} vs {b}");
            }
        }
        let (nf, ng) = (f.norms(), g.norms());
        assert!((nf.l2 - ng.l2).abs() < 1e-13);
        assert!((nf.h1_semi - ng.h1_semi).abs() < 1e-12 * nf.h1_semi.max(1.0));
    }
    let coarse = space(2, Family::P1);
    let fine = Arc::new(FunctionSpace::new(Arc::new(coarse.mesh().refine()), Family::P1));
    let one = coarse.interpolate(|_| 1.0).prolong(&fine).unwrap();
    assert!(one.coefficients().iter().all(|&c| (c - 1.0).abs() < 1e-15));
}

#[test]
fn prolongation_rejects_mismatches() {
    let coarse = space(2, Family::P1);
    let wrong_family = space(4, Family::P2);
    let wrong_mesh = space(8, Family::P1);
    let f = coarse.interpolate(|_| 1.0);
    assert!(matches!(f.prolong(&wrong_family), Err(FeError::SpaceMismatch(_))));
    assert!(matches!(f.prolong(&wrong_mesh), Err(FeError::SpaceMismatch(_))));
}

#[test]
fn norms_of_simple_functions() {
    let s = space(4, Family::P2);
    let one = s.interpolate(|_| 1.0);
    let n = one.norms();
    assert!((n.l2 - 1.0).abs() < 1e-14);
    assert!(n.h1_semi < 1e-14);
    let c = space(3, Family::P1).interpolate(|_| -2.5);
    assert!(c.norms().h1_semi < 1e-14);
}

#[test]
fn h1_seminorm_of_sine_converges() {
    let err = |n: usize| {
        let f = space(n, Family::P2).interpolate(|p| (2.0 * PI * p[0]).sin());
        (f.norms().h1_semi.powi(2) - 2.0 * PI * PI).abs()
    };
    let (e8, e16) = (err(8), err(16));
    assert!(e8 < 0.05);
    assert!((e8 / e16).log2() > 1.9, "{e8} {e16}");
}

#[test]
fn interpolation_reproduces_own_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for family in [Family::P1, Family::P2] {
        let s = space(4, family);
        let f = random_function(&s, &mut rng);
        let g = s.interpolate(|p| f.evaluate(p));
        for (a, b) in f.coefficients().iter().zip(g.coefficients()) {
            assert!((a - b).abs() < 1e-13);
        }
    }
    let s = space(4, Family::P2Vector);
    let f = random_function(&s, &mut rng);
    let g = s.interpolate_vector(|p| f.evaluate_vector(p));
    for (a, b) in f.coefficients().iter().zip(g.coefficients()) {
        assert!((a - b).abs() < 1e-13);
    }
}

#[test]
fn skew_form_vanishes_on_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let s = space(4, Family::P2Vector);
    for _ in 0..20 {
        let u = random_function(&s, &mut rng);
        let v = random_function(&s, &mut rng);
        assert!(c_skw(&u, &v, &v).unwrap().abs() <= 1e-13);
    }
    let z = s.zero();
    let v = random_function(&s, &mut rng);
    let w = random_function(&s, &mut rng);
    assert_eq!(c_skw(&z, &v, &w).unwrap(), 0.0);
}

#[test]
fn skew_form_rejects_scalar_fields() {
    let s = space(2, Family::P2);
    let f = s.interpolate(|_| 1.0);
    assert!(c_skw(&f, &f, &f).is_err());
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn skew_form_antisymmetric_and_linear(seed in 0u64..1_000_000, a in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = space(2, Family::P2Vector);
            let u = random_function(&s, &mut rng);
            let v = random_function(&s, &mut rng);
            let w = random_function(&s, &mut rng);
            let x = random_function(&s, &mut rng);
            let vw = c_skw(&u, &v, &w).unwrap();
            let wv = c_skw(&u, &w, &v).unwrap();
            prop_assert!((vw + wv).abs() < 1e-14);
            // linear in the middle slot
            let comb = FeFunction::from_coefficients(
                Arc::clone(&s),
                v.coefficients().iter().zip(x.coefficients()).map(|(p, q)| p + a * q).collect(),
            ).unwrap();
            let lhs = c_skw(&u, &comb, &w).unwrap();
            let rhs = vw + a * c_skw(&u, &x, &w).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
