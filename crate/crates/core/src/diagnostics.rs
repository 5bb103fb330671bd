//! Conserved and produced quantities per time step: mass, kinetic and
//! internal energy, entropy, physical dissipation and numerical dissipation.
//!
//! All integrals use the quadrature rule of the stepper configuration so that
//! the discrete identities close to roundoff.

use thiserror::Error;

use crate::fespace::Tabulation;
use crate::mesh::quad_rule;
use crate::physics::{apply, MaterialModel};
use crate::scheme::kernel::{frobenius, sym_grad, Local, Point};
use crate::scheme::{SchemeError, Spaces, StarRule, State, StepperConfig};

/// Most negative numerical dissipation accepted as roundoff.
pub const D_NUM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("numerical dissipation {d_num:.3e} is negative at step {step}")]
    StructureViolation { step: usize, d_num: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    /// `⟨φ, 1⟩`
    pub mass: f64,
    /// `⟨½|u|², 1⟩`
    pub kinetic: f64,
    /// `⟨e(φ, θ), 1⟩`
    pub internal: f64,
    /// `⟨s(φ, θ, |∇φ|²), 1⟩`
    pub entropy: f64,
    /// `τ𝒟` of the step leading to this level (0 at step 0).
    pub dissipation: f64,
    /// `𝒟_num` of the step leading to this level (0 at step 0).
    pub d_num: f64,
    pub newton_iterations: usize,
    pub min_theta: f64,
}

impl DiagnosticsRecord {
    pub fn total_energy(&self) -> f64 {
        self.kinetic + self.internal
    }
}

/// Level integrals of a single state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Totals {
    pub mass: f64,
    pub kinetic: f64,
    pub internal: f64,
    pub entropy: f64,
}

/// Cached tabulations for repeated diagnostics on one set of spaces.
#[derive(Debug, Clone)]
pub struct Evaluator {
    spaces: Spaces,
    tab1: Tabulation,
    tab2: Tabulation,
    tau: f64,
    star_rule: StarRule,
}

impl Evaluator {
    pub fn new(spaces: &Spaces, cfg: &StepperConfig) -> Result<Self, SchemeError> {
        cfg.validate()?;
        let rule = quad_rule(cfg.quad_degree)?;
        Ok(Evaluator {
            tab1: spaces.p1.tabulate(&rule),
            tab2: spaces.velocity.tabulate(&rule),
            spaces: spaces.clone(),
            tau: cfg.tau,
            star_rule: cfg.star_rule,
        })
    }

    /// Calls `f(weight, new, old)` at every quadrature point of the mesh.
    fn for_each_point(&self, new: &State, old: &State, mut f: impl FnMut(f64, &Point<f64>, &Point<f64>)) {
        let layout = self.spaces.layout();
        let (xn, xo) = (new.pack(), old.pack());
        for t in 0..self.spaces.mesh.num_triangles() {
            let map = layout.local_to_global(self.spaces.p1.element_dofs(t), self.spaces.velocity.element_dofs(t));
            let ln: Local<f64> = map.map(|g| xn[g]);
            let lo: Local<f64> = map.map(|g| xo[g]);
            for q in 0..self.tab1.num_points() {
                let (v1, g1) = (self.tab1.values(q), self.tab1.grads(t, q));
                let (v2, g2) = (self.tab2.values(q), self.tab2.grads(t, q));
                let pn = Point::evaluate(&ln, v1, g1, v2, g2);
                let po = Point::evaluate(&lo, v1, g1, v2, g2);
                f(self.tab1.weight(t, q), &pn, &po);
            }
        }
    }

    pub fn totals<M: MaterialModel>(&self, state: &State, model: &M) -> Totals {
        let mut out = Totals {
            mass: 0.0,
            kinetic: 0.0,
            internal: 0.0,
            entropy: 0.0,
        };
        self.for_each_point(state, state, |w, p, _| {
            let g2 = p.gphi[0] * p.gphi[0] + p.gphi[1] * p.gphi[1];
            out.mass += w * p.phi;
            out.kinetic += w * 0.5 * (p.u[0] * p.u[0] + p.u[1] * p.u[1]);
            out.internal += w * model.internal_energy(p.phi, p.theta);
            out.entropy += w * model.entropy(p.phi, p.theta, g2);
        });
        out
    }

    /// `𝒟 = ⟨η*|Du^{n+½}|², θ^{n+1}⟩ + ⟨L11*∇μ, ∇μ⟩ − 2⟨L12*∇θ, ∇μ⟩ + ⟨L22*∇θ, ∇θ⟩`
    /// with `μ, θ` at the new level.
    pub fn physical_dissipation<M: MaterialModel>(&self, new: &State, old: &State, model: &M) -> f64 {
        let mut d = 0.0;
        self.for_each_point(new, old, |w, pn, po| {
            let star = match self.star_rule {
                StarRule::Old => po,
                StarRule::New => pn,
            };
            let gum = [
                [0.5 * (pn.gu[0][0] + po.gu[0][0]), 0.5 * (pn.gu[0][1] + po.gu[0][1])],
                [0.5 * (pn.gu[1][0] + po.gu[1][0]), 0.5 * (pn.gu[1][1] + po.gu[1][1])],
            ];
            let du = sym_grad(&gum);
            let eta = model.viscosity(star.phi, star.theta);
            let l = model.mobility(star.phi, star.theta);
            let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
            d += w
                * (eta * frobenius(&du, &du) * pn.theta + dot(apply(&l.l11, pn.gmu), pn.gmu)
                    - 2.0 * dot(apply(&l.l12, pn.gtheta), pn.gmu)
                    + dot(apply(&l.l22, pn.gtheta), pn.gtheta));
        });
        d
    }

    /// `𝒟_num = ⟨s^{n+1} − s^n, 1⟩ − τ𝒟`.
    pub fn numerical_dissipation<M: MaterialModel>(&self, new: &State, old: &State, model: &M) -> f64 {
        let sn = self.totals(new, model).entropy;
        let so = self.totals(old, model).entropy;
        (sn - so) - self.tau * self.physical_dissipation(new, old, model)
    }

    /// Closed form of `𝒟_num` valid at a converged step: the gradient term
    /// `γ/2|∇(φ^{n+1} − φ^n)|²` plus the Taylor remainders of the convex part,
    /// the concave part and the θ-dependence of the potential. Each bracket
    /// is nonnegative for a model satisfying the structural assumptions.
    pub fn numerical_dissipation_closed_form<M: MaterialModel>(
        &self,
        new: &State,
        old: &State,
        model: &M,
    ) -> NumericalDissipationParts {
        let mut parts = NumericalDissipationParts::default();
        let gamma = model.gamma();
        self.for_each_point(new, old, |w, pn, po| {
            let dphi = pn.phi - po.phi;
            let gd = [pn.gphi[0] - po.gphi[0], pn.gphi[1] - po.gphi[1]];
            let (p1, p0, t1, t0) = (pn.phi, po.phi, pn.theta, po.theta);
            parts.gradient += w * 0.5 * gamma * (gd[0] * gd[0] + gd[1] * gd[1]);
            parts.convex += w
                * (model.dphi_psi_vex(p1, t1) * dphi - model.psi_vex(p1, t1) + model.psi_vex(p0, t1));
            parts.concave += w
                * (model.dphi_psi_cav(p0, t1) * dphi - model.psi_cav(p1, t1) + model.psi_cav(p0, t1));
            parts.temperature +=
                w * (model.psi(p0, t0) - model.psi(p0, t1) + model.internal_energy(p0, t0) * (t1 - t0));
        });
        parts
    }

    pub fn record<M: MaterialModel>(
        &self,
        new: &State,
        old: &State,
        model: &M,
        step: usize,
        newton_iterations: usize,
    ) -> Result<DiagnosticsRecord, DiagnosticsError> {
        let totals = self.totals(new, model);
        let so = self.totals(old, model).entropy;
        let dissipation = self.tau * self.physical_dissipation(new, old, model);
        let d_num = (totals.entropy - so) - dissipation;
        if d_num < -D_NUM_TOLERANCE {
            return Err(DiagnosticsError::StructureViolation { step, d_num });
        }
        Ok(DiagnosticsRecord {
            step,
            time: new.time,
            mass: totals.mass,
            kinetic: totals.kinetic,
            internal: totals.internal,
            entropy: totals.entropy,
            dissipation,
            d_num,
            newton_iterations,
            min_theta: new.min_nodal_theta(),
        })
    }

    /// Record of the initial level (no step taken yet).
    pub fn record_initial<M: MaterialModel>(&self, state: &State, model: &M) -> DiagnosticsRecord {
        let totals = self.totals(state, model);
        DiagnosticsRecord {
            step: 0,
            time: state.time,
            mass: totals.mass,
            kinetic: totals.kinetic,
            internal: totals.internal,
            entropy: totals.entropy,
            dissipation: 0.0,
            d_num: 0.0,
            newton_iterations: 0,
            min_theta: state.min_nodal_theta(),
        }
    }
}

/// Summands of the closed-form numerical dissipation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NumericalDissipationParts {
    pub gradient: f64,
    pub convex: f64,
    pub concave: f64,
    pub temperature: f64,
}

impl NumericalDissipationParts {
    pub fn total(&self) -> f64 {
        self.gradient + self.convex + self.concave + self.temperature
    }
}

/// `𝒟` for one step; see [`Evaluator::physical_dissipation`].
pub fn physical_dissipation<M: MaterialModel>(
    new: &State,
    old: &State,
    model: &M,
    cfg: &StepperConfig,
) -> Result<f64, SchemeError> {
    Ok(Evaluator::new(&spaces_of(new), cfg)?.physical_dissipation(new, old, model))
}

/// `𝒟_num` for one step, rejected when below `-D_NUM_TOLERANCE`.
pub fn numerical_dissipation<M: MaterialModel>(
    new: &State,
    old: &State,
    model: &M,
    cfg: &StepperConfig,
) -> Result<f64, DiagnosticsError> {
    let d = Evaluator::new(&spaces_of(new), cfg)?.numerical_dissipation(new, old, model);
    if d < -D_NUM_TOLERANCE {
        let step = (new.time / cfg.tau).round() as usize;
        return Err(DiagnosticsError::StructureViolation { step, d_num: d });
    }
    Ok(d)
}

pub fn record<M: MaterialModel>(
    new: &State,
    old: &State,
    model: &M,
    cfg: &StepperConfig,
    newton_iterations: usize,
) -> Result<DiagnosticsRecord, DiagnosticsError> {
    let step = (new.time / cfg.tau).round() as usize;
    Evaluator::new(&spaces_of(new), cfg)?.record(new, old, model, step, newton_iterations)
}

fn spaces_of(state: &State) -> Spaces {
    Spaces {
        mesh: std::sync::Arc::clone(state.phi.space().mesh()),
        p1: std::sync::Arc::clone(state.phi.space()),
        pressure: std::sync::Arc::clone(state.pi.space()),
        velocity: std::sync::Arc::clone(state.u.space()),
    }
}
