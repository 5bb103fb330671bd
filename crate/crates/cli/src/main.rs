//! `chnst` command-line driver: model validation, single runs and refinement
//! studies.

mod config;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use chnst::harness::{convergence_study, simulate, HarnessError, TABLE_COLUMNS};
use chnst::physics::{validate_model, ThermalDoubleWell, ValidationReport};
use chnst::scheme::{Spaces, Stepper};
use clap::{Args, Parser, Subcommand};

use config::{Config, UsageError};

/// Sampling window of the model validation sweep.
const VALIDATE_PHI: (f64, f64) = (-0.5, 1.5);
const VALIDATE_THETA: (f64, f64) = (0.55, 2.0);
const VALIDATE_SAMPLES: usize = 41;

#[derive(Debug, Parser)]
#[command(name = "chnst", version, about = "Non-isothermal Cahn-Hilliard-Navier-Stokes solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the structural assumptions of the configured model.
    Validate(Common),
    /// Run one simulation and write diagnostics.csv and snapshots.
    Run(Common),
    /// Run a refinement study and write eoc_table.csv and eoc_table.txt.
    Converge(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.directory`).
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    /// Numerical or structural failure (exit status 1).
    Failed,
}

type Handler = fn(&Config, &Path) -> Result<Status>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, cmd): (&Common, Handler) = match &cli.command {
        Command::Validate(c) => (c, cmd_validate),
        Command::Run(c) => (c, cmd_run),
        Command::Converge(c) => (c, cmd_converge),
    };
    let config = match load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let dir = common.output.clone().unwrap_or_else(|| config.output.directory.clone());
    match cmd(&config, &dir) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Config::parse(&text).with_context(|| format!("invalid configuration {}", path.display()))
}

fn report(model: &ThermalDoubleWell) -> ValidationReport {
    validate_model(model, VALIDATE_PHI, VALIDATE_THETA, VALIDATE_SAMPLES)
}

fn print_violations(r: &ValidationReport) {
    for c in r.checks.iter().filter(|c| !c.passed) {
        eprintln!("{} violated: {} (worst {:.4e})", c.name, c.description, c.worst);
    }
}

fn cmd_validate(config: &Config, _dir: &Path) -> Result<Status> {
    let model = config.model()?;
    let r = report(&model);
    print!("{r}");
    if r.all_passed() {
        println!("all checks passed");
        Ok(Status::Ok)
    } else {
        print_violations(&r);
        Ok(Status::Failed)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_run(config: &Config, dir: &Path) -> Result<Status> {
    let model = config.model()?;
    let formats = config.formats()?;
    let n = config.n()?;
    let grid = config.time_grid()?;
    let scfg = config.stepper_config(grid.tau)?;
    let init = config.initial()?;
    let r = report(&model);
    if !r.all_passed() {
        print_violations(&r);
        return Ok(Status::Failed);
    }
    create_dir(dir)?;
    let stride = config.output.snapshot_stride;
    let vtk = stride > 0 && formats.iter().any(|f| f == "vtk");
    let raw = stride > 0 && formats.iter().any(|f| f == "raw");
    let csv = formats.iter().any(|f| f == "csv");

    let spaces = Spaces::uniform(n)?;
    let initial = init.state(&spaces, &model)?;
    let mut stepper = Stepper::new(spaces, model, scfg)?;
    let mut table = String::from(output::DIAGNOSTICS_HEADER);
    table.push('\n');
    let steps = grid.steps;
    let mut write_error = None;
    let outcome = simulate(&mut stepper, initial, steps, |state, rec, _| {
        table.push_str(&output::diagnostics_row(rec));
        table.push('\n');
        if stride > 0 && (rec.step % stride == 0 || rec.step == steps) {
            let mut files = Vec::new();
            if vtk {
                files.push((format!("snapshot_{}.vtk", rec.step), output::vtk_snapshot(state)));
            }
            if raw {
                files.push((format!("snapshot_{}.csv", rec.step), output::raw_snapshot(state)));
            }
            for (name, contents) in files {
                if let Err(e) = write(dir.join(name), &contents) {
                    write_error = Some(e);
                    return Err(HarnessError::InvalidConfig("snapshot output failed".to_string()));
                }
            }
        }
        Ok(())
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    // the rows up to the failure are still useful
    if csv {
        write(dir.join("diagnostics.csv"), &table)?;
    }
    match outcome {
        Ok(last) => {
            println!(
                "n = {n}, {steps} steps of tau = {:.6e}, final time {:.6e}",
                grid.tau, last.time
            );
            Ok(Status::Ok)
        }
        Err(e) => {
            eprintln!("solver failure: {e}");
            Ok(Status::Failed)
        }
    }
}

fn cmd_converge(config: &Config, dir: &Path) -> Result<Status> {
    let levels = config.mesh.levels;
    if levels < 2 {
        return Err(UsageError(format!("mesh.levels must be at least 2, got {levels}")).into());
    }
    let rc = config.run_config()?;
    let init = config.initial()?;
    let r = report(&rc.model);
    if !r.all_passed() {
        print_violations(&r);
        return Ok(Status::Failed);
    }
    create_dir(dir)?;
    let study = match convergence_study(&rc, &init, levels) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("solver failure: {e}");
            return Ok(Status::Failed);
        }
    };
    let table = &study.table;
    write(dir.join("eoc_table.csv"), &table.to_csv())?;
    let text = table.to_text();
    write(dir.join("eoc_table.txt"), &text)?;
    print!("{text}");
    let gate = config.converge.eoc_gate;
    match table.last_eoc(TABLE_COLUMNS[0].1) {
        Some(e) if e >= gate => Ok(Status::Ok),
        other => {
            eprintln!("final EOC of e is {other:?}, below the gate {gate}");
            Ok(Status::Failed)
        }
    }
}
