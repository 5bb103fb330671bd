//! The fully discrete time stepper: residual and exact Jacobian of the
//! coupled nonlinear system for `(φ, μ, θ, u, π)` at the new time level, and
//! one Newton solve per step.
//!
//! Unknowns are packed as `[φ | μ | θ | u_x | u_y | π | λ]`, where `λ` is the
//! multiplier enforcing `⟨π, 1⟩ = 0`. Residual rows use the same order: phase
//! field, chemical potential, internal energy, momentum, divergence, and the
//! pressure mean.

pub(crate) mod kernel;
mod saddle;

use std::cell::Cell;
use std::sync::Arc;

use thiserror::Error;

use crate::fespace::{FeError, FeFunction, Family, FunctionSpace, Tabulation, DEFAULT_QUAD_DEGREE};
use crate::la::{self, Damping, JacobianUpdate, LinalgError, NewtonSettings, SparseMatrix, TripletBuilder};
use saddle::SaddleSolver;
use crate::mesh::{quad_rule, MeshError, PeriodicTriMesh};
use crate::physics::{MaterialModel, PhysicsError};
use crate::scalar::{Dual, Scalar};

use kernel::{Local, Point, LOCAL_DOFS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Fe(#[from] FeError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("inverse temperature {min_theta:.3e} at or below the floor {floor:.1e}")]
    Positivity { min_theta: f64, floor: f64 },
    #[error("step {step} failed (last residual {residual:.3e}): {source}")]
    Step {
        step: usize,
        residual: f64,
        source: Box<SchemeError>,
    },
}

/// Which time level the starred coefficients are evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StarRule {
    #[default]
    Old,
    New,
}

/// Newton settings of the time stepper: tolerance `1e-12`, and the Jacobian
/// factorization kept across iterations and steps while it contracts the
/// residual by at least a factor 10 per iteration.
pub const DEFAULT_NEWTON: NewtonSettings = NewtonSettings {
    tolerance: 1e-12,
    max_iterations: 25,
    damping: Damping::Halving,
    jacobian: JacobianUpdate::Lagged { ratio: 0.1 },
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub tau: f64,
    pub star_rule: StarRule,
    pub newton: NewtonSettings,
    pub theta_floor: f64,
    pub quad_degree: usize,
}

impl StepperConfig {
    pub fn new(tau: f64) -> Self {
        StepperConfig {
            tau,
            star_rule: StarRule::Old,
            newton: DEFAULT_NEWTON,
            theta_floor: 1e-8,
            quad_degree: DEFAULT_QUAD_DEGREE,
        }
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(SchemeError::InvalidConfig(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.theta_floor >= 0.0) {
            return Err(SchemeError::InvalidConfig(format!(
                "theta floor must be nonnegative, got {}",
                self.theta_floor
            )));
        }
        self.newton.validate()?;
        quad_rule(self.quad_degree)?;
        Ok(())
    }
}

/// The four discrete spaces on one mesh.
#[derive(Debug, Clone)]
pub struct Spaces {
    pub mesh: Arc<PeriodicTriMesh>,
    pub p1: Arc<FunctionSpace>,
    pub pressure: Arc<FunctionSpace>,
    pub velocity: Arc<FunctionSpace>,
}

impl Spaces {
    pub fn new(mesh: Arc<PeriodicTriMesh>) -> Self {
        Spaces {
            p1: Arc::new(FunctionSpace::new(Arc::clone(&mesh), Family::P1)),
            pressure: Arc::new(FunctionSpace::new(Arc::clone(&mesh), Family::P1MeanFree)),
            velocity: Arc::new(FunctionSpace::new(Arc::clone(&mesh), Family::P2Vector)),
            mesh,
        }
    }

    pub fn uniform(n: usize) -> Result<Self, SchemeError> {
        Ok(Self::new(Arc::new(PeriodicTriMesh::build_uniform(n)?)))
    }

    pub fn layout(&self) -> Layout {
        Layout {
            n1: self.p1.dof_count(),
            n2: self.velocity.scalar_dof_count(),
        }
    }
}

/// Offsets of each block in the packed unknown (and residual) vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    n1: usize,
    n2: usize,
}

impl Layout {
    pub fn phi(&self) -> std::ops::Range<usize> {
        0..self.n1
    }
    pub fn mu(&self) -> std::ops::Range<usize> {
        self.n1..2 * self.n1
    }
    pub fn theta(&self) -> std::ops::Range<usize> {
        2 * self.n1..3 * self.n1
    }
    /// Both velocity components, x block first.
    pub fn u(&self) -> std::ops::Range<usize> {
        3 * self.n1..3 * self.n1 + 2 * self.n2
    }
    pub fn pi(&self) -> std::ops::Range<usize> {
        let s = 3 * self.n1 + 2 * self.n2;
        s..s + self.n1
    }
    pub fn multiplier(&self) -> usize {
        4 * self.n1 + 2 * self.n2
    }
    pub fn len(&self) -> usize {
        self.multiplier() + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    pub(crate) fn local_to_global(&self, dofs1: &[usize], dofs2: &[usize]) -> [usize; LOCAL_DOFS] {
        let mut g = [0; LOCAL_DOFS];
        for a in 0..3 {
            g[kernel::PHI + a] = dofs1[a];
            g[kernel::MU + a] = self.n1 + dofs1[a];
            g[kernel::THETA + a] = 2 * self.n1 + dofs1[a];
            g[kernel::PI + a] = 3 * self.n1 + 2 * self.n2 + dofs1[a];
        }
        for b in 0..6 {
            g[kernel::UX + b] = 3 * self.n1 + dofs2[b];
            g[kernel::UY + b] = 3 * self.n1 + self.n2 + dofs2[b];
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct State {
    pub time: f64,
    pub phi: FeFunction,
    pub mu: FeFunction,
    pub theta: FeFunction,
    pub u: FeFunction,
    pub pi: FeFunction,
}

impl State {
    pub fn min_nodal_theta(&self) -> f64 {
        self.theta.coefficients().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Packs the fields into the unknown layout with `λ = 0`.
    pub fn pack(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.layout().len());
        for f in [&self.phi, &self.mu, &self.theta, &self.u, &self.pi] {
            x.extend_from_slice(f.coefficients());
        }
        x.push(0.0);
        x
    }

    pub fn unpack(spaces: &Spaces, x: &[f64], time: f64) -> Result<State, SchemeError> {
        let l = spaces.layout();
        if x.len() != l.len() {
            return Err(FeError::LengthMismatch {
                got: x.len(),
                expected: l.len(),
            }
            .into());
        }
        let f = |s: &Arc<FunctionSpace>, r: std::ops::Range<usize>| {
            FeFunction::from_coefficients(Arc::clone(s), x[r].to_vec())
        };
        Ok(State {
            time,
            phi: f(&spaces.p1, l.phi())?,
            mu: f(&spaces.p1, l.mu())?,
            theta: f(&spaces.p1, l.theta())?,
            u: f(&spaces.velocity, l.u())?,
            pi: f(&spaces.pressure, l.pi())?,
        })
    }

    fn layout(&self) -> Layout {
        Layout {
            n1: self.phi.space().dof_count(),
            n2: self.u.space().scalar_dof_count(),
        }
    }
}

fn nodal_check_theta(x: &[f64], floor: f64) -> Result<(), SchemeError> {
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    if min > floor {
        Ok(())
    } else {
        Err(SchemeError::Positivity { min_theta: min, floor })
    }
}

/// Interpolates the initial data and computes `μ⁰` from
/// `⟨μ⁰, ξ⟩ = γ⟨∇φ⁰, ∇ξ⟩ + ⟨∂φΨ(φ⁰, θ⁰), ξ⟩` by a mass-matrix solve.
pub fn initial_state<M: MaterialModel>(
    spaces: &Spaces,
    model: &M,
    phi0: impl Fn([f64; 2]) -> f64,
    theta0: impl Fn([f64; 2]) -> f64,
    u0: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<State, SchemeError> {
    let phi = spaces.p1.interpolate(phi0);
    let theta = spaces.p1.interpolate(theta0);
    if let Some((i, &t)) = theta
        .coefficients()
        .iter()
        .enumerate()
        .find(|(_, t)| !(**t > 0.0))
    {
        return Err(PhysicsError::Domain(format!(
            "initial inverse temperature {t} at node {i} is not positive"
        ))
        .into());
    }
    let u = spaces.velocity.interpolate_vector(u0);

    let rule = quad_rule(DEFAULT_QUAD_DEGREE)?;
    let tab = spaces.p1.tabulate(&rule);
    let n1 = spaces.p1.dof_count();
    let mut mass = TripletBuilder::with_capacity(n1, n1, 9 * spaces.mesh.num_triangles());
    let mut rhs = vec![0.0; n1];
    let (pc, tc) = (phi.coefficients(), theta.coefficients());
    let gamma = model.gamma();
    for t in 0..spaces.mesh.num_triangles() {
        let dofs = spaces.p1.element_dofs(t);
        let mut me = [[0.0; 3]; 3];
        for q in 0..tab.num_points() {
            let (w, v, g) = (tab.weight(t, q), tab.values(q), tab.grads(t, q));
            let mut ph = 0.0;
            let mut th = 0.0;
            let mut gp = [0.0; 2];
            for a in 0..3 {
                ph += pc[dofs[a]] * v[a];
                th += tc[dofs[a]] * v[a];
                gp[0] += pc[dofs[a]] * g[a][0];
                gp[1] += pc[dofs[a]] * g[a][1];
            }
            let dpsi = model.dphi_psi(ph, th);
            for a in 0..3 {
                rhs[dofs[a]] += w * (gamma * (gp[0] * g[a][0] + gp[1] * g[a][1]) + dpsi * v[a]);
                for b in 0..3 {
                    me[a][b] += w * v[a] * v[b];
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                mass.push(dofs[a], dofs[b], me[a][b]);
            }
        }
    }
    let mu = la::lu_solve(&mass.build()?, &rhs)?;
    Ok(State {
        time: 0.0,
        phi,
        mu: FeFunction::from_coefficients(Arc::clone(&spaces.p1), mu)?,
        theta,
        u,
        pi: spaces.pressure.zero(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStats {
    pub iterations: usize,
    /// Jacobian factorizations during the step.
    pub factorizations: usize,
    pub residual_norm: f64,
    /// Value of the pressure-mean multiplier in the solved system.
    pub multiplier: f64,
}

/// Assembles and solves the discrete system on a fixed set of spaces.
pub struct Stepper<M> {
    model: M,
    cfg: StepperConfig,
    spaces: Spaces,
    layout: Layout,
    tab1: Tabulation,
    tab2: Tabulation,
    /// `⟨1, q_i⟩` for every P1 basis function.
    q_integrals: Vec<f64>,
    /// Jacobian with fixed pattern, plus the value offset of every local
    /// entry of every triangle (row-major 24x24 blocks).
    pattern: Option<(SparseMatrix, Vec<usize>)>,
    solver: SaddleSolver,
}

impl<M: MaterialModel> Stepper<M> {
    pub fn new(spaces: Spaces, model: M, cfg: StepperConfig) -> Result<Self, SchemeError> {
        cfg.validate()?;
        let rule = quad_rule(cfg.quad_degree)?;
        let tab1 = spaces.p1.tabulate(&rule);
        let tab2 = spaces.velocity.tabulate(&rule);
        let q_integrals = spaces.p1.basis_integrals(&rule);
        let solver = SaddleSolver::new(spaces.layout(), q_integrals.clone());
        Ok(Stepper {
            layout: spaces.layout(),
            model,
            cfg,
            spaces,
            tab1,
            tab2,
            q_integrals,
            pattern: None,
            solver,
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    pub fn spaces(&self) -> &Spaces {
        &self.spaces
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    fn check_len(&self, x: &[f64]) -> Result<(), SchemeError> {
        if x.len() != self.layout.len() {
            return Err(FeError::LengthMismatch {
                got: x.len(),
                expected: self.layout.len(),
            }
            .into());
        }
        Ok(())
    }

    fn gather(&self, x: &[f64], t: usize) -> ([usize; LOCAL_DOFS], Local<f64>) {
        let map = self
            .layout
            .local_to_global(self.spaces.p1.element_dofs(t), self.spaces.velocity.element_dofs(t));
        (map, map.map(|g| x[g]))
    }

    /// θ must stay above the floor at every quadrature point.
    fn check_positivity(&self, x: &[f64]) -> Result<(), SchemeError> {
        let floor = self.cfg.theta_floor;
        let theta = &x[self.layout.theta()];
        if nodal_check_theta(theta, floor).is_ok() {
            // P1 values at interior points are convex combinations of nodal ones
            return Ok(());
        }
        let mut min = f64::INFINITY;
        for t in 0..self.spaces.mesh.num_triangles() {
            let dofs = self.spaces.p1.element_dofs(t);
            for q in 0..self.tab1.num_points() {
                let v: f64 = (0..3).map(|a| theta[dofs[a]] * self.tab1.value(q, a)).sum();
                min = min.min(v);
            }
        }
        if !(min > floor) {
            return Err(SchemeError::Positivity { min_theta: min, floor });
        }
        Ok(())
    }

    /// Local residual of triangle `t` for local unknowns `new` (any scalar).
    fn element_residual<T: Scalar>(&self, t: usize, new: &Local<T>, old: &Local<f64>) -> Local<T> {
        let mut out = [T::zero(); LOCAL_DOFS];
        for q in 0..self.tab1.num_points() {
            let (v1, g1) = (self.tab1.values(q), self.tab1.grads(t, q));
            let (v2, g2) = (self.tab2.values(q), self.tab2.grads(t, q));
            let pn = Point::evaluate(new, v1, g1, v2, g2);
            let po = Point::evaluate(old, v1, g1, v2, g2);
            let star = match self.cfg.star_rule {
                StarRule::Old => po.lift(),
                StarRule::New => pn,
            };
            let f = kernel::flux(&self.model, self.cfg.tau, &pn, &po, &star);
            kernel::accumulate(&f, self.tab1.weight(t, q), v1, g1, v2, g2, &mut out);
        }
        out
    }

    /// Residual at the packed unknown `x` given the previous level `old`.
    pub fn residual_packed(&self, old: &[f64], x: &[f64]) -> Result<Vec<f64>, SchemeError> {
        self.check_len(old)?;
        self.check_len(x)?;
        self.check_positivity(x)?;
        let mut r = vec![0.0; self.layout.len()];
        for t in 0..self.spaces.mesh.num_triangles() {
            let (map, xn) = self.gather(x, t);
            let (_, xo) = self.gather(old, t);
            let loc = self.element_residual(t, &xn, &xo);
            for (g, v) in map.iter().zip(loc) {
                r[*g] += v;
            }
        }
        let lam = x[self.layout.multiplier()];
        let pi = self.layout.pi();
        let mut mean = 0.0;
        for (i, m) in self.q_integrals.iter().enumerate() {
            r[pi.start + i] += lam * m;
            mean += x[pi.start + i] * m;
        }
        r[self.layout.multiplier()] = mean;
        Ok(r)
    }

    fn build_pattern(&self) -> Result<(SparseMatrix, Vec<usize>), SchemeError> {
        let n = self.layout.len();
        let ne = self.spaces.mesh.num_triangles();
        let mut b = TripletBuilder::with_capacity(n, n, ne * LOCAL_DOFS * LOCAL_DOFS + 2 * self.q_integrals.len());
        let mut maps = Vec::with_capacity(ne);
        for t in 0..ne {
            let map = self
                .layout
                .local_to_global(self.spaces.p1.element_dofs(t), self.spaces.velocity.element_dofs(t));
            maps.push(map);
            for &i in &map {
                for &j in &map {
                    b.push(i, j, 0.0);
                }
            }
        }
        let lam = self.layout.multiplier();
        for i in self.layout.pi() {
            b.push(i, lam, 0.0);
            b.push(lam, i, 0.0);
        }
        let m = b.build()?;
        let mut pos = Vec::with_capacity(ne * LOCAL_DOFS * LOCAL_DOFS);
        for map in &maps {
            for &i in map {
                for &j in map {
                    pos.push(m.position(i, j).expect("entry pushed above"));
                }
            }
        }
        Ok((m, pos))
    }

    /// Exact Jacobian of [`Stepper::residual_packed`] with respect to `x`.
    pub fn jacobian_packed(&mut self, old: &[f64], x: &[f64]) -> Result<SparseMatrix, SchemeError> {
        let mut pattern = self.pattern.take();
        let out = self.jacobian_with(&mut pattern, old, x);
        self.pattern = pattern;
        out
    }

    fn jacobian_with(
        &self,
        pattern: &mut Option<(SparseMatrix, Vec<usize>)>,
        old: &[f64],
        x: &[f64],
    ) -> Result<SparseMatrix, SchemeError> {
        self.check_len(old)?;
        self.check_len(x)?;
        self.check_positivity(x)?;
        if pattern.is_none() {
            *pattern = Some(self.build_pattern()?);
        }
        let (m, pos) = pattern.as_mut().expect("built above");
        let vals = m.values_mut();
        vals.fill(0.0);
        for t in 0..self.spaces.mesh.num_triangles() {
            let (_, xn) = self.gather(x, t);
            let (_, xo) = self.gather(old, t);
            let seeded: Local<Dual<LOCAL_DOFS>> = std::array::from_fn(|k| Dual::variable(xn[k], k));
            let loc = self.element_residual(t, &seeded, &xo);
            let base = t * LOCAL_DOFS * LOCAL_DOFS;
            for (i, r) in loc.iter().enumerate() {
                for (j, d) in r.eps.iter().enumerate() {
                    vals[pos[base + i * LOCAL_DOFS + j]] += d;
                }
            }
        }
        let lam = self.layout.multiplier();
        let pi0 = self.layout.pi().start;
        for (i, q) in self.q_integrals.iter().enumerate() {
            let a = m.position(pi0 + i, lam).expect("multiplier column");
            let b = m.position(lam, pi0 + i).expect("multiplier row");
            let vals = m.values_mut();
            vals[a] = *q;
            vals[b] = *q;
        }
        Ok(m.clone())
    }

    pub fn assemble_residual(&self, old: &State, guess: &State) -> Result<Vec<f64>, SchemeError> {
        self.residual_packed(&old.pack(), &guess.pack())
    }

    pub fn assemble_jacobian(&mut self, old: &State, guess: &State) -> Result<SparseMatrix, SchemeError> {
        self.jacobian_packed(&old.pack(), &guess.pack())
    }

    /// Solves for the next level starting from `old` itself as the guess.
    pub fn step(&mut self, old: &State) -> Result<(State, NewtonStats), SchemeError> {
        let index = (old.time / self.cfg.tau).round() as usize + 1;
        let last = Cell::new(f64::NAN);
        let xo = old.pack();
        let settings = self.cfg.newton;
        let placeholder = SaddleSolver::new(self.layout, Vec::new());
        let mut solver = std::mem::replace(&mut self.solver, placeholder);
        let mut pattern = self.pattern.take();
        let outcome = {
            let this = &*self;
            let residual = |x: &[f64]| {
                let r = this.residual_packed(&xo, x)?;
                last.set(la::norm2(&r));
                Ok::<_, SchemeError>(r)
            };
            let jacobian = |x: &[f64]| this.jacobian_with(&mut pattern, &xo, x);
            la::newton_with_solver(residual, jacobian, xo.clone(), &settings, &mut solver)
        };
        self.pattern = pattern;
        self.solver = solver;
        let fail = |e: SchemeError, residual: f64| SchemeError::Step {
            step: index,
            residual,
            source: Box::new(e),
        };
        let outcome = outcome.map_err(|e| {
            let r = match &e {
                SchemeError::Linalg(LinalgError::NoConvergence { residual, .. }) => *residual,
                _ => last.get(),
            };
            fail(e, r)
        })?;
        let x = outcome.x;
        nodal_check_theta(&x[self.layout.theta()], 0.0).map_err(|e| fail(e, outcome.residual_norm))?;
        let multiplier = x[self.layout.multiplier()];
        let state = State::unpack(&self.spaces, &x, old.time + self.cfg.tau)?;
        Ok((
            state,
            NewtonStats {
                iterations: outcome.iterations,
                factorizations: outcome.factorizations,
                residual_norm: outcome.residual_norm,
                multiplier,
            },
        ))
    }
}
