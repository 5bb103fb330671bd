//! Full simulations, inter-level errors and experimental orders of
//! convergence over a ladder of uniformly refined meshes with `τ ∝ h`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::diagnostics::{DiagnosticsError, DiagnosticsRecord, Evaluator};
use crate::fespace::{FeError, FeFunction};
use crate::la::NewtonSettings;
use crate::physics::MaterialModel;
use crate::scheme::{initial_state, NewtonStats, SchemeError, Spaces, StarRule, State, Stepper, StepperConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Fe(#[from] FeError),
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("trajectories are not consecutive levels: {0}")]
    LevelMismatch(String),
    #[error("level {level}: {source}")]
    Level { level: usize, source: Box<HarnessError> },
}

type ScalarField = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
type VectorField = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Initial phase field, inverse temperature and velocity.
#[derive(Clone)]
pub struct InitialData {
    pub phi: ScalarField,
    pub theta: ScalarField,
    pub u: VectorField,
}

impl std::fmt::Debug for InitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("InitialData { .. }")
    }
}

impl InitialData {
    /// Smooth bump data: `φ₀ = 0.4 + 0.2 b`, `θ₀ = 1 + 0.2 b` with
    /// `b = sin(2πx) sin(2πy)`, and a divergence-free swirl of size 1e-2.
    pub fn bump() -> Self {
        let b = |p: [f64; 2]| (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).sin();
        InitialData {
            phi: Arc::new(move |p| 0.4 + 0.2 * b(p)),
            theta: Arc::new(move |p| 1.0 + 0.2 * b(p)),
            u: Arc::new(|p| {
                let (x, y) = (p[0], p[1]);
                [
                    -1e-2 * (PI * x).sin().powi(2) * (2.0 * PI * y).sin(),
                    1e-2 * (2.0 * PI * x).sin() * (PI * y).sin().powi(2),
                ]
            }),
        }
    }

    /// Spatially constant phase field and inverse temperature at rest.
    pub fn uniform(phi: f64, theta: f64) -> Self {
        InitialData {
            phi: Arc::new(move |_| phi),
            theta: Arc::new(move |_| theta),
            u: Arc::new(|_| [0.0, 0.0]),
        }
    }

    pub fn state<M: MaterialModel>(&self, spaces: &Spaces, model: &M) -> Result<State, SchemeError> {
        initial_state(spaces, model, &*self.phi, &*self.theta, &*self.u)
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig<M> {
    /// Subdivisions per axis at level 0.
    pub base: usize,
    pub level: usize,
    /// `τ_k = c_tau · h_k`, then reduced so that it divides the final time.
    pub c_tau: f64,
    pub final_time: f64,
    pub model: M,
    pub star_rule: StarRule,
    pub newton: NewtonSettings,
    pub theta_floor: f64,
    pub quad_degree: usize,
}

impl<M: MaterialModel + Clone> RunConfig<M> {
    /// Defaults: base 8, `c_tau = 1e-3` and a final time of 16 level-0 steps.
    pub fn new(model: M) -> Self {
        let base = 8;
        let c_tau = 1e-3;
        RunConfig {
            base,
            level: 0,
            c_tau,
            final_time: 16.0 * c_tau / base as f64,
            model,
            star_rule: StarRule::Old,
            newton: crate::scheme::DEFAULT_NEWTON,
            theta_floor: 1e-8,
            quad_degree: crate::fespace::DEFAULT_QUAD_DEGREE,
        }
    }

    pub fn at_level(&self, level: usize) -> Self {
        RunConfig {
            level,
            ..self.clone()
        }
    }

    pub fn n(&self) -> usize {
        self.base << self.level
    }

    /// Number of steps and the step size that divides the final time.
    pub fn time_grid(&self) -> Result<(usize, f64), HarnessError> {
        self.validate()?;
        let raw = self.c_tau / self.n() as f64;
        let steps = ((self.final_time / raw) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok((steps, self.final_time / steps as f64))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.base < 4 {
            return Err(HarnessError::InvalidConfig(format!("base must be at least 4, got {}", self.base)));
        }
        if !(self.c_tau > 0.0 && self.c_tau.is_finite()) {
            return Err(HarnessError::InvalidConfig(format!("c_tau must be positive, got {}", self.c_tau)));
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(HarnessError::InvalidConfig(format!(
                "final time must be positive, got {}",
                self.final_time
            )));
        }
        Ok(())
    }

    pub fn stepper_config(&self) -> Result<StepperConfig, HarnessError> {
        let (_, tau) = self.time_grid()?;
        let cfg = StepperConfig {
            tau,
            star_rule: self.star_rule,
            newton: self.newton,
            theta_floor: self.theta_floor,
            quad_degree: self.quad_degree,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// All time levels of one simulation together with their diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub n: usize,
    pub tau: f64,
    pub states: Vec<State>,
    pub records: Vec<DiagnosticsRecord>,
    pub newton: Vec<NewtonStats>,
}

/// Runs `steps` steps of a stepper from `initial`, calling `observe` on every
/// level (including the initial one). States are not retained.
pub fn simulate<M: MaterialModel>(
    stepper: &mut Stepper<M>,
    initial: State,
    steps: usize,
    mut observe: impl FnMut(&State, &DiagnosticsRecord, Option<&NewtonStats>) -> Result<(), HarnessError>,
) -> Result<State, HarnessError> {
    let eval = Evaluator::new(stepper.spaces(), stepper.config())?;
    let first = eval.record_initial(&initial, stepper.model());
    observe(&initial, &first, None)?;
    let mut state = initial;
    for k in 1..=steps {
        let (next, stats) = stepper.step(&state)?;
        let rec = eval.record(&next, &state, stepper.model(), k, stats.iterations)?;
        observe(&next, &rec, Some(&stats))?;
        state = next;
    }
    Ok(state)
}

/// Runs one level to the final time and keeps every state.
pub fn run<M: MaterialModel + Clone>(cfg: &RunConfig<M>, init: &InitialData) -> Result<Trajectory, HarnessError> {
    let (steps, _) = cfg.time_grid()?;
    let scfg = cfg.stepper_config()?;
    let spaces = Spaces::uniform(cfg.n())?;
    let initial = init.state(&spaces, &cfg.model)?;
    let mut stepper = Stepper::new(spaces, cfg.model.clone(), scfg)?;
    let mut states = Vec::with_capacity(steps + 1);
    let mut records = Vec::with_capacity(steps + 1);
    let mut newton = Vec::with_capacity(steps);
    simulate(&mut stepper, initial, steps, |s, r, st| {
        states.push(s.clone());
        records.push(*r);
        if let Some(st) = st {
            newton.push(*st);
        }
        Ok(())
    })?;
    Ok(Trajectory {
        n: cfg.n(),
        tau: scfg.tau,
        states,
        records,
        newton,
    })
}

/// Squared inter-level errors, one per constituent of the combined error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorRow {
    /// `‖φ_H − φ_h‖²_{L∞(H¹)}`
    pub phi_linf_h1: f64,
    /// `‖θ_H − θ_h‖²_{L∞(L²)}`
    pub theta_linf_l2: f64,
    /// `‖u_H − u_h‖²_{L∞(L²)}`
    pub u_linf_l2: f64,
    /// `‖μ_H − μ_h‖²_{L²(H¹)}`
    pub mu_l2_h1: f64,
    /// `‖θ_H − θ_h‖²_{L²(H¹)}`
    pub theta_l2_h1: f64,
    /// `‖u_H − u_h‖²_{L²(H¹)}`
    pub u_l2_h1: f64,
}

impl ErrorRow {
    /// Sum of all six squared norms.
    pub fn combined(&self) -> f64 {
        self.phi_linf_h1 + self.theta_linf_l2 + self.u_linf_l2 + self.mu_l2_h1 + self.theta_l2_h1 + self.u_l2_h1
    }
}

fn diff_h1_squared(coarse: &FeFunction, fine: &FeFunction) -> Result<f64, FeError> {
    Ok(coarse.prolong(fine.space())?.difference(fine)?.norms().h1_squared())
}

fn diff_l2_squared(coarse: &FeFunction, fine: &FeFunction) -> Result<f64, FeError> {
    let l2 = coarse.prolong(fine.space())?.difference(fine)?.norms().l2;
    Ok(l2 * l2)
}

/// Errors between a trajectory and the one computed on the once refined mesh
/// with half the step size, both up to the same final time.
///
/// `L∞` in time is the maximum over coarse time nodes, `L²` in time uses the
/// left-endpoint rule on coarse intervals. The chemical potential is constant
/// on each time interval; on a coarse interval it is compared with both fine
/// half-interval values, each weighted by half the coarse step.
pub fn inter_level_error(coarse: &Trajectory, fine: &Trajectory) -> Result<ErrorRow, HarnessError> {
    let steps = coarse.states.len() - 1;
    if fine.n != 2 * coarse.n {
        return Err(HarnessError::LevelMismatch(format!("n = {} and {}", coarse.n, fine.n)));
    }
    if fine.states.len() != 2 * steps + 1 || (2.0 * fine.tau - coarse.tau).abs() > 1e-12 * coarse.tau {
        return Err(HarnessError::LevelMismatch(format!(
            "{} steps of {} against {} steps of {}",
            steps,
            coarse.tau,
            fine.states.len() - 1,
            fine.tau
        )));
    }
    let tau = coarse.tau;
    let mut row = ErrorRow::default();
    for (k, c) in coarse.states.iter().enumerate() {
        let f = &fine.states[2 * k];
        row.phi_linf_h1 = row.phi_linf_h1.max(diff_h1_squared(&c.phi, &f.phi)?);
        row.theta_linf_l2 = row.theta_linf_l2.max(diff_l2_squared(&c.theta, &f.theta)?);
        row.u_linf_l2 = row.u_linf_l2.max(diff_l2_squared(&c.u, &f.u)?);
        if k < steps {
            row.theta_l2_h1 += tau * diff_h1_squared(&c.theta, &f.theta)?;
            row.u_l2_h1 += tau * diff_h1_squared(&c.u, &f.u)?;
            let mu = &coarse.states[k + 1].mu;
            row.mu_l2_h1 += 0.5
                * tau
                * (diff_h1_squared(mu, &fine.states[2 * k + 1].mu)? + diff_h1_squared(mu, &fine.states[2 * k + 2].mu)?);
        }
    }
    Ok(row)
}

/// Experimental orders `log₂(e_{k−1} / e_k)`; `None` where an error is not
/// positive and finite.
pub fn eoc(errors: &[f64]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .map(|w| {
            let ok = |e: f64| e > 0.0 && e.is_finite();
            (ok(w[0]) && ok(w[1])).then(|| (w[0] / w[1]).log2())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    /// Mesh subdivisions of the coarse level of each row.
    pub n: Vec<usize>,
    pub rows: Vec<ErrorRow>,
}

/// Extracts one constituent of an error row.
pub type ErrorColumn = fn(&ErrorRow) -> f64;

/// Column selectors of the table, in display order.
pub const TABLE_COLUMNS: [(&str, ErrorColumn); 5] = [
    ("e", ErrorRow::combined),
    ("e_phi", |r| r.phi_linf_h1),
    ("e_mu", |r| r.mu_l2_h1),
    ("e_grad_theta", |r| r.theta_l2_h1),
    ("e_grad_u", |r| r.u_l2_h1),
];

impl ErrorTable {
    pub fn column(&self, f: fn(&ErrorRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    /// EOC of a column aligned with the rows (`None` for the first row).
    pub fn column_eoc(&self, f: fn(&ErrorRow) -> f64) -> Vec<Option<f64>> {
        let mut out = vec![None];
        out.extend(eoc(&self.column(f)));
        out.truncate(self.rows.len());
        out
    }

    pub fn last_eoc(&self, f: fn(&ErrorRow) -> f64) -> Option<f64> {
        eoc(&self.column(f)).last().copied().flatten()
    }

    fn fmt_eoc(e: Option<f64>) -> String {
        e.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
    }

    /// CSV with the table columns plus the two `L∞(L²)` constituents that
    /// enter the combined error without a column of their own.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,n");
        for (name, _) in TABLE_COLUMNS {
            let _ = write!(s, ",{name},eoc_{name}");
        }
        s.push_str(",e_theta_linf_l2,e_u_linf_l2\n");
        let eocs: Vec<Vec<Option<f64>>> = TABLE_COLUMNS.iter().map(|(_, f)| self.column_eoc(*f)).collect();
        for (k, row) in self.rows.iter().enumerate() {
            let _ = write!(s, "{k},{}", self.n[k]);
            for (c, (_, f)) in TABLE_COLUMNS.iter().enumerate() {
                let e = eocs[c][k].map_or_else(String::new, |v| format!("{v:.16e}"));
                let _ = write!(s, ",{:.16e},{e}", f(row));
            }
            let _ = writeln!(s, ",{:.16e},{:.16e}", row.theta_linf_l2, row.u_linf_l2);
        }
        s
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut s = format!("{:>2} {:>5}", "k", "n");
        for (name, _) in TABLE_COLUMNS {
            let _ = write!(s, " {name:>12} {:>5}", "eoc");
        }
        s.push('\n');
        let eocs: Vec<Vec<Option<f64>>> = TABLE_COLUMNS.iter().map(|(_, f)| self.column_eoc(*f)).collect();
        for (k, row) in self.rows.iter().enumerate() {
            let _ = write!(s, "{k:>2} {:>5}", self.n[k]);
            for (c, (_, f)) in TABLE_COLUMNS.iter().enumerate() {
                let _ = write!(s, " {:>12.3e} {:>5}", f(row), Self::fmt_eoc(eocs[c][k]));
            }
            s.push('\n');
        }
        s
    }
}

/// Result of a refinement study: the table and the diagnostics of every
/// simulated level.
#[derive(Debug, Clone)]
pub struct Study {
    pub table: ErrorTable,
    pub records: Vec<Vec<DiagnosticsRecord>>,
}

/// Simulates levels `0..=levels` (in parallel up to the available cores) and tabulates the errors of
/// each consecutive pair, giving `levels` rows.
pub fn convergence_study<M: MaterialModel + Clone>(
    cfg: &RunConfig<M>,
    init: &InitialData,
    levels: usize,
) -> Result<Study, HarnessError> {
    if levels < 2 {
        return Err(HarnessError::InvalidConfig(format!(
            "a convergence study needs at least 2 levels, got {levels}"
        )));
    }
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get());
    let mut results: Vec<Result<Trajectory, HarnessError>> = Vec::with_capacity(levels + 1);
    // finest levels first so the largest runs overlap with the smaller ones
    let order: Vec<usize> = (0..=levels).rev().collect();
    for batch in order.chunks(workers) {
        let done: Vec<Result<Trajectory, HarnessError>> = if batch.len() == 1 {
            vec![run(&cfg.at_level(batch[0]), init)]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|&k| {
                        let c = cfg.at_level(k);
                        scope.spawn(move || run(&c, init))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("simulation thread panicked"))
                    .collect()
            })
        };
        results.extend(done);
    }
    results.reverse();
    let mut trajectories = Vec::with_capacity(results.len());
    for (level, r) in results.into_iter().enumerate() {
        trajectories.push(r.map_err(|e| HarnessError::Level {
            level,
            source: Box::new(e),
        })?);
    }
    let mut table = ErrorTable {
        n: Vec::new(),
        rows: Vec::new(),
    };
    for pair in trajectories.windows(2) {
        table.n.push(pair[0].n);
        table.rows.push(inter_level_error(&pair[0], &pair[1])?);
    }
    Ok(Study {
        table,
        records: trajectories.into_iter().map(|t| t.records).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::ThermalDoubleWell;

    #[test]
    fn eoc_examples() {
        assert_eq!(eoc(&[0.4, 0.1]), vec![Some(2.0)]);
        let e = eoc(&[1.42, 5.77e-1])[0].unwrap();
        assert!((e - 1.2992).abs() < 1e-3, "{e}");
        assert_eq!(eoc(&[8.0, 8.0]), vec![Some(0.0)]);
        assert_eq!(eoc(&[1.0, 0.0, 1.0]), vec![None, None]);
        assert_eq!(eoc(&[-1.0, 1.0]), vec![None]);
        assert!(eoc(&[1.0]).is_empty());
    }

    #[test]
    fn time_grid_divides_final_time() {
        let cfg = RunConfig::new(ThermalDoubleWell::default());
        for k in 0..4 {
            let (steps, tau) = cfg.at_level(k).time_grid().unwrap();
            assert_eq!(steps, 16 << k);
            assert!((tau * steps as f64 - cfg.final_time).abs() < 1e-18);
        }
        let odd = RunConfig {
            final_time: 1e-3,
            c_tau: 3e-3,
            ..cfg.clone()
        };
        let (steps, tau) = odd.time_grid().unwrap();
        assert_eq!(steps, 3);
        assert!(tau <= 3e-3 / 8.0);
        assert!(matches!(
            RunConfig { base: 2, ..cfg }.time_grid(),
            Err(HarnessError::InvalidConfig(_))
        ));
    }

    #[test]
    fn table_layout() {
        let row = |e: f64| ErrorRow {
            phi_linf_h1: e,
            theta_linf_l2: e,
            u_linf_l2: e,
            mu_l2_h1: e,
            theta_l2_h1: e,
            u_l2_h1: e,
        };
        let t = ErrorTable {
            n: vec![8, 16],
            rows: vec![row(0.4), row(0.1)],
        };
        assert!((t.rows[0].combined() - 2.4).abs() < 1e-15);
        assert!((t.last_eoc(ErrorRow::combined).unwrap() - 2.0).abs() < 1e-12);
        let csv = t.to_csv();
        let header = csv.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 2 + 10 + 2);
        assert!(header.starts_with("k,n,e,eoc_e,e_phi,eoc_e_phi"));
        let text = t.to_text();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(1).unwrap().contains(" - "));
        assert!(text.lines().nth(2).unwrap().contains("2.00"));
    }
}
