//! TOML run configuration. Unknown keys are rejected.

use std::path::PathBuf;

use chnst::harness::{InitialData, RunConfig};
use chnst::la::{Damping, JacobianUpdate, NewtonSettings};
use chnst::physics::ThermalDoubleWell;
use chnst::scheme::{StarRule, StepperConfig, DEFAULT_NEWTON};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub mesh: MeshSection,
    pub time: TimeSection,
    pub model: ModelSection,
    pub initial: InitialSection,
    pub scheme: SchemeSection,
    pub output: OutputSection,
    pub converge: ConvergeSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSection {
    /// Subdivisions per axis at level 0.
    pub base: usize,
    /// Refinement level used by `run`.
    pub level: usize,
    /// Number of error rows computed by `converge`.
    pub levels: usize,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection {
            base: 8,
            level: 0,
            levels: 3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    /// `τ = c_tau · h` unless `tau` is given.
    pub c_tau: f64,
    pub tau: Option<f64>,
    #[serde(alias = "T")]
    pub final_time: Option<f64>,
    pub steps: Option<usize>,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection {
            c_tau: 1e-3,
            tau: None,
            final_time: None,
            steps: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub name: String,
    pub gamma: f64,
    /// Scale of the diagonal mobility blocks `L11 = L22`.
    pub mobility: f64,
    pub mobility_cross: f64,
    pub viscosity_base: f64,
    pub viscosity_slope: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ThermalDoubleWell::default();
        ModelSection {
            name: ThermalDoubleWell::NAME.to_string(),
            gamma: m.gamma,
            mobility: m.l11,
            mobility_cross: m.l12,
            viscosity_base: m.viscosity_base,
            viscosity_slope: m.viscosity_slope,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    /// `"bump"` or `"uniform"`.
    pub kind: String,
    /// Values of the uniform state.
    pub phi: f64,
    pub theta: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            kind: "bump".to_string(),
            phi: 0.4,
            theta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    pub star_rule: String,
    pub newton_tolerance: f64,
    pub newton_max_iterations: usize,
    pub line_search: bool,
    /// `"lagged"` keeps the Jacobian factorization while Newton contracts by
    /// `lagged_ratio` per iteration; `"every_iteration"` is plain Newton.
    pub jacobian: String,
    pub lagged_ratio: f64,
    pub theta_floor: f64,
    pub quad_degree: usize,
}

impl Default for SchemeSection {
    fn default() -> Self {
        let n = DEFAULT_NEWTON;
        let lagged_ratio = match n.jacobian {
            JacobianUpdate::Lagged { ratio } => ratio,
            JacobianUpdate::EveryIteration => 0.1,
        };
        SchemeSection {
            star_rule: "old".to_string(),
            newton_tolerance: n.tolerance,
            newton_max_iterations: n.max_iterations,
            line_search: n.damping == Damping::Halving,
            jacobian: "lagged".to_string(),
            lagged_ratio,
            theta_floor: 1e-8,
            quad_degree: chnst::fespace::DEFAULT_QUAD_DEGREE,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    /// Write a snapshot every this many steps (0 disables snapshots).
    pub snapshot_stride: usize,
    /// Any of `"csv"`, `"vtk"`, `"raw"`.
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("output"),
            snapshot_stride: 0,
            formats: vec!["csv".to_string()],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeSection {
    /// Minimum last EOC of the combined error for a zero exit status.
    pub eoc_gate: f64,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        ConvergeSection { eoc_gate: 1.5 }
    }
}

/// A configuration that parses but cannot be used.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

/// Time stepping of a single run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub tau: f64,
    pub steps: usize,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn model(&self) -> Result<ThermalDoubleWell, UsageError> {
        if self.model.name != ThermalDoubleWell::NAME {
            return usage(format!(
                "unknown model {:?} (available: {:?})",
                self.model.name,
                ThermalDoubleWell::NAME
            ));
        }
        let m = &self.model;
        Ok(ThermalDoubleWell {
            gamma: m.gamma,
            viscosity_base: m.viscosity_base,
            viscosity_slope: m.viscosity_slope,
            l11: m.mobility,
            l12: m.mobility_cross,
            l22: m.mobility,
        })
    }

    pub fn initial(&self) -> Result<InitialData, UsageError> {
        match self.initial.kind.as_str() {
            "bump" => Ok(InitialData::bump()),
            "uniform" => Ok(InitialData::uniform(self.initial.phi, self.initial.theta)),
            other => usage(format!("unknown initial data {other:?} (expected \"bump\" or \"uniform\")")),
        }
    }

    fn star_rule(&self) -> Result<StarRule, UsageError> {
        match self.scheme.star_rule.as_str() {
            "old" => Ok(StarRule::Old),
            "new" => Ok(StarRule::New),
            other => usage(format!("unknown star_rule {other:?} (expected \"old\" or \"new\")")),
        }
    }

    fn newton(&self) -> Result<NewtonSettings, UsageError> {
        let s = NewtonSettings {
            tolerance: self.scheme.newton_tolerance,
            max_iterations: self.scheme.newton_max_iterations,
            damping: if self.scheme.line_search {
                Damping::Halving
            } else {
                Damping::None
            },
            jacobian: match self.scheme.jacobian.as_str() {
                "lagged" => JacobianUpdate::Lagged {
                    ratio: self.scheme.lagged_ratio,
                },
                "every_iteration" => JacobianUpdate::EveryIteration,
                other => {
                    return usage(format!(
                        "unknown jacobian update {other:?} (expected \"lagged\" or \"every_iteration\")"
                    ))
                }
            },
        };
        s.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(s)
    }

    pub fn formats(&self) -> Result<Vec<String>, UsageError> {
        for f in &self.output.formats {
            if !matches!(f.as_str(), "csv" | "vtk" | "raw") {
                return usage(format!("unknown output format {f:?} (expected csv, vtk or raw)"));
            }
        }
        Ok(self.output.formats.clone())
    }

    pub fn n(&self) -> Result<usize, UsageError> {
        if self.mesh.base < 1 {
            return usage("mesh.base must be positive");
        }
        if self.mesh.level > 10 {
            return usage("mesh.level above 10 is not supported");
        }
        Ok(self.mesh.base << self.mesh.level)
    }

    /// Level-0 step `c_tau / base`.
    fn tau0(&self) -> f64 {
        self.time.c_tau / self.mesh.base as f64
    }

    pub fn time_grid(&self) -> Result<TimeGrid, UsageError> {
        let n = self.n()?;
        let t = &self.time;
        if !(t.c_tau > 0.0) {
            return usage("time.c_tau must be positive");
        }
        let tau = match t.tau {
            Some(tau) if !(tau > 0.0) => return usage("time.tau must be positive"),
            Some(tau) => tau,
            None => t.c_tau / n as f64,
        };
        match (t.final_time, t.steps) {
            (Some(_), Some(_)) => usage("time.final_time and time.steps are mutually exclusive"),
            (None, Some(0)) => usage("time.steps must be positive"),
            (None, Some(steps)) => Ok(TimeGrid { tau, steps }),
            (final_time, None) => {
                let tf = final_time.unwrap_or(16.0 * self.tau0());
                if !(tf > 0.0) {
                    return usage("time.final_time must be positive");
                }
                let steps = ((tf / tau) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
                Ok(TimeGrid {
                    tau: tf / steps as f64,
                    steps,
                })
            }
        }
    }

    pub fn stepper_config(&self, tau: f64) -> Result<StepperConfig, UsageError> {
        let cfg = StepperConfig {
            tau,
            star_rule: self.star_rule()?,
            newton: self.newton()?,
            theta_floor: self.scheme.theta_floor,
            quad_degree: self.scheme.quad_degree,
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn run_config(&self) -> Result<RunConfig<ThermalDoubleWell>, UsageError> {
        if self.time.tau.is_some() {
            return usage("time.tau is not used by converge; set time.c_tau instead");
        }
        if self.mesh.base < 4 {
            return usage("mesh.base must be at least 4 for a convergence study");
        }
        let final_time = match (self.time.final_time, self.time.steps) {
            (Some(_), Some(_)) => return usage("time.final_time and time.steps are mutually exclusive"),
            (Some(t), None) => t,
            (None, Some(s)) => s as f64 * self.tau0(),
            (None, None) => 16.0 * self.tau0(),
        };
        let mut rc = RunConfig::new(self.model()?);
        rc.base = self.mesh.base;
        rc.c_tau = self.time.c_tau;
        rc.final_time = final_time;
        rc.star_rule = self.star_rule()?;
        rc.newton = self.newton()?;
        rc.theta_floor = self.scheme.theta_floor;
        rc.quad_degree = self.scheme.quad_degree;
        rc.validate().map_err(|e| UsageError(e.to_string()))?;
        self.stepper_config(rc.c_tau / rc.base as f64)?;
        Ok(rc)
    }
}
