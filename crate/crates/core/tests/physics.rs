use chnst::physics::{
    eval_entropy, eval_internal_energy, eval_mobility, eval_split_derivative, eval_viscosity, mobility_min_eigenvalue,
    validate_model, MaterialModel, PhysicsError, ThermalDoubleWell,
};
use proptest::prelude::*;

fn model() -> ThermalDoubleWell {
    ThermalDoubleWell::default()
}

/// `W(φ) = φ²(1 − φ)²`, written independently of the library.
fn well(phi: f64) -> f64 {
    phi * phi * (1.0 - phi) * (1.0 - phi)
}

proptest! {
    #[test]
    fn closed_forms(phi in -0.5f64..1.5, theta in 0.55f64..2.0, g2 in 0.0f64..10.0) {
        let m = model();
        let psi = theta.ln() + (2.0 * theta - 1.0) * well(phi);
        let e = 1.0 / theta + 2.0 * well(phi);
        prop_assert!((m.psi(phi, theta) - psi).abs() <= 1e-13);
        prop_assert!((eval_internal_energy(&m, phi, theta).unwrap() - e).abs() <= 1e-13);
        let s = theta * e - psi - 0.5 * m.gamma * g2;
        prop_assert!((eval_entropy(&m, phi, theta, g2).unwrap() - s).abs() <= 1e-12);
        prop_assert!((m.psi_vex(phi, theta) + m.psi_cav(phi, theta) - psi).abs() <= 1e-13);
        let eta = 1e-3 + (phi + 1.0) * (phi + 1.0) / 40.0;
        prop_assert!((eval_viscosity(&m, phi, theta).unwrap() - eta).abs() <= 1e-15);
    }

    #[test]
    fn split_derivative_is_consistent(phi in -0.5f64..1.5, theta in 0.55f64..2.0) {
        let m = model();
        let d = eval_split_derivative(&m, phi, phi, theta).unwrap();
        let h = 1e-6;
        let fd = (m.psi(phi + h, theta) - m.psi(phi - h, theta)) / (2.0 * h);
        prop_assert!(!d.split_invalid);
        prop_assert!((d.value - fd).abs() <= 1e-7 * (1.0 + fd.abs()));
    }
}

#[test]
fn default_model_passes_validation() {
    let r = validate_model(&model(), (-0.5, 1.5), (0.55, 2.0), 21);
    assert!(r.all_passed(), "{r}");
    for name in ["(A1)", "(A2)", "(A3)", "(A4) vex", "(A4) cav", "(A4) theta"] {
        assert!(r.check(name).is_some(), "missing {name}");
    }
}

#[test]
fn violated_assumptions_are_reported() {
    let bad_gamma = ThermalDoubleWell {
        gamma: -1.0,
        ..model()
    };
    let r = validate_model(&bad_gamma, (-0.5, 1.5), (0.55, 2.0), 11);
    assert!(!r.check("(A1)").unwrap().passed);
    let bad_viscosity = ThermalDoubleWell {
        viscosity_base: -1.0,
        viscosity_slope: 0.0,
        ..model()
    };
    let r = validate_model(&bad_viscosity, (-0.5, 1.5), (0.55, 2.0), 11);
    assert!(!r.check("(A2)").unwrap().passed);
}

#[test]
fn domain_errors() {
    let m = model();
    assert!(matches!(eval_internal_energy(&m, 0.5, 0.0), Err(PhysicsError::Domain(_))));
    assert!(matches!(eval_entropy(&m, 0.5, -1.0, 0.0), Err(PhysicsError::Domain(_))));
    assert!(matches!(eval_entropy(&m, 0.5, 1.0, -1.0), Err(PhysicsError::Domain(_))));
    assert!(eval_viscosity(&m, 0.5, 0.0).is_err());
    assert!(eval_mobility(&m, 0.5, 0.0).is_err());
    assert!(eval_split_derivative(&m, 0.5, 0.5, 0.4).unwrap().split_invalid);
    let l = eval_mobility(&m, 0.5, 1.0).unwrap();
    assert!((mobility_min_eigenvalue(&l).unwrap() - 1e-2).abs() <= 1e-15);
}
