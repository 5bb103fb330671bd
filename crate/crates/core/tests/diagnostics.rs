use chnst::diagnostics::{DiagnosticsError, Evaluator, D_NUM_TOLERANCE};
use chnst::fespace::{FeFunction, DEFAULT_QUAD_DEGREE};
use chnst::harness::InitialData;
use chnst::mesh::quad_rule;
use chnst::physics::{MaterialModel, ThermalDoubleWell};
use chnst::scheme::{Spaces, State, Stepper, StepperConfig};

const TAU: f64 = 1.25e-4;

fn model() -> ThermalDoubleWell {
    ThermalDoubleWell::default()
}

fn bump_steps(n: usize, steps: usize) -> (Spaces, StepperConfig, Vec<State>) {
    let spaces = Spaces::uniform(n).unwrap();
    let cfg = StepperConfig::new(TAU);
    let mut st = Stepper::new(spaces.clone(), model(), cfg).unwrap();
    let mut states = vec![InitialData::bump().state(&spaces, &model()).unwrap()];
    for _ in 0..steps {
        let (next, _) = st.step(states.last().unwrap()).unwrap();
        states.push(next);
    }
    (spaces, cfg, states)
}

/// `Σ_q w_q f(values of the given P1 functions at q)` with the default rule.
fn integrate_p1(fields: &[&FeFunction], f: impl Fn(&[f64]) -> f64) -> f64 {
    let space = fields[0].space();
    let tab = space.tabulate(&quad_rule(DEFAULT_QUAD_DEGREE).unwrap());
    let mut vals = vec![0.0; fields.len()];
    let mut sum = 0.0;
    for t in 0..space.mesh().num_triangles() {
        let dofs = space.element_dofs(t);
        for q in 0..tab.num_points() {
            for (v, field) in vals.iter_mut().zip(fields) {
                let c = field.coefficients();
                *v = dofs.iter().zip(tab.values(q)).map(|(&d, b)| c[d] * b).sum();
            }
            sum += tab.weight(t, q) * f(&vals);
        }
    }
    sum
}

#[test]
fn uniform_state_dissipates_nothing() {
    let spaces = Spaces::uniform(4).unwrap();
    let s = InitialData::uniform(0.3, 1.2).state(&spaces, &model()).unwrap();
    let cfg = StepperConfig::new(TAU);
    let (next, _) = Stepper::new(spaces.clone(), model(), cfg).unwrap().step(&s).unwrap();
    let ev = Evaluator::new(&spaces, &cfg).unwrap();
    assert!(ev.physical_dissipation(&next, &s, &model()).abs() <= 1e-14);
    assert!(ev.numerical_dissipation(&next, &s, &model()).abs() <= 1e-12);
    assert!(ev.numerical_dissipation_closed_form(&next, &s, &model()).total().abs() <= 1e-12);
}

#[test]
fn physical_dissipation_matches_tested_equations() {
    let (spaces, cfg, states) = bump_steps(8, 2);
    let ev = Evaluator::new(&spaces, &cfg).unwrap();
    let m = model();
    for w in states.windows(2) {
        let (old, new) = (&w[0], &w[1]);
        let tau_d = cfg.tau * ev.physical_dissipation(new, old, &m);
        // energy equation tested with θ^{n+1} minus phase equation tested with μ^{n+1}
        let energy = integrate_p1(&[&new.phi, &new.theta, &old.phi, &old.theta], |v| {
            (m.internal_energy(v[0], v[1]) - m.internal_energy(v[2], v[3])) * v[1]
        });
        let phase = integrate_p1(&[&new.phi, &old.phi, &new.mu], |v| (v[0] - v[1]) * v[2]);
        assert!(tau_d > 0.0);
        assert!((tau_d - (energy - phase)).abs() <= 1e-10, "{tau_d} vs {}", energy - phase);
    }
}

#[test]
fn closed_form_numerical_dissipation_agrees() {
    let (spaces, cfg, states) = bump_steps(8, 3);
    let ev = Evaluator::new(&spaces, &cfg).unwrap();
    let m = model();
    for w in states.windows(2) {
        let d = ev.numerical_dissipation(&w[1], &w[0], &m);
        let parts = ev.numerical_dissipation_closed_form(&w[1], &w[0], &m);
        assert!((d - parts.total()).abs() <= 1e-10, "{d} vs {parts:?}");
        for p in [parts.gradient, parts.convex, parts.concave, parts.temperature] {
            assert!(p >= -1e-14, "{parts:?}");
        }
        assert!(parts.gradient <= d + 1e-10);
    }
}

#[test]
fn numerical_dissipation_stays_nonnegative() {
    let (spaces, cfg, states) = bump_steps(8, 50);
    let ev = Evaluator::new(&spaces, &cfg).unwrap();
    let m = model();
    let mut entropy = ev.totals(&states[0], &m).entropy;
    for (k, w) in states.windows(2).enumerate() {
        let rec = ev.record(&w[1], &w[0], &m, k + 1, 0).unwrap();
        assert!(rec.d_num >= -D_NUM_TOLERANCE, "step {}: {}", k + 1, rec.d_num);
        assert!(rec.entropy >= entropy - 1e-13);
        entropy = rec.entropy;
        assert!((rec.mass - states[0].phi.integrate()).abs() <= 1e-11);
    }
}

#[test]
fn reversed_step_is_a_structure_violation() {
    let (spaces, cfg, states) = bump_steps(8, 1);
    let ev = Evaluator::new(&spaces, &cfg).unwrap();
    match ev.record(&states[0], &states[1], &model(), 7, 0) {
        Err(DiagnosticsError::StructureViolation { step, d_num }) => {
            assert_eq!(step, 7);
            assert!(d_num < -D_NUM_TOLERANCE);
        }
        other => panic!("expected a structure violation, got {other:?}"),
    }
}

#[test]
fn initial_record_has_no_production() {
    let (spaces, cfg, states) = bump_steps(4, 0);
    let r = Evaluator::new(&spaces, &cfg).unwrap().record_initial(&states[0], &model());
    assert_eq!((r.step, r.dissipation, r.d_num, r.newton_iterations), (0, 0.0, 0.0, 0));
    assert!(r.min_theta > 0.0);
    assert!((r.total_energy() - (r.kinetic + r.internal)).abs() == 0.0);
}
