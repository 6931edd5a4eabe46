use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use wilson_bamg::harness::{self, ExperimentConfig, SolverKind};
use wilson_bamg::mg::SetupSchedule;

#[derive(Parser)]
#[command(name = "wilson-bamg", version, about = "Bootstrap AMG experiments for the 2-D Wilson-Dirac operator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate gauge ensembles.
    Generate(Common),
    /// Solve at explicit masses `--shift`.
    Solve(Common),
    /// Solve at explicit masses and at the eta_min targets.
    Sweep(Common),
    /// Low modes of Z, participation ratios and field dumps.
    Spectrum(Common),
    /// Print the effective configuration as JSON.
    Config(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Cgnr,
    CgnrFull,
    Gmres32,
    Gmres32Full,
    Bamg,
    BamgGmres32,
}

impl From<Solver> for SolverKind {
    fn from(s: Solver) -> Self {
        match s {
            Solver::Cgnr => SolverKind::Cgnr,
            Solver::CgnrFull => SolverKind::CgnrFull,
            Solver::Gmres32 => SolverKind::Gmres32,
            Solver::Gmres32Full => SolverKind::Gmres32Full,
            Solver::Bamg => SolverKind::Bamg,
            Solver::BamgGmres32 => SolverKind::BamgGmres32,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Schedule {
    W,
    SuperV,
}

impl From<Schedule> for SetupSchedule {
    fn from(s: Schedule) -> Self {
        match s {
            Schedule::W => SetupSchedule::W,
            Schedule::SuperV => SetupSchedule::SuperV,
        }
    }
}

#[derive(Args)]
struct Common {
    /// JSON configuration; unspecified fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV (the spectrum CSV for `spectrum`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Seed for right-hand sides and setup vectors.
    #[arg(long)]
    seed: Option<u64>,
    /// Lattice extent.
    #[arg(long)]
    n: Option<usize>,
    /// Coupling; repeat for several.
    #[arg(long = "beta")]
    betas: Vec<f64>,
    /// Mass m; repeat for several.
    #[arg(long = "shift", allow_negative_numbers = true)]
    shifts: Vec<f64>,
    /// Target eta_min(D); repeat for several.
    #[arg(long = "eta-target")]
    eta_targets: Vec<f64>,
    #[arg(long = "solver", value_enum)]
    solvers: Vec<Solver>,
    #[arg(long = "schedule", value_enum)]
    schedules: Vec<Schedule>,
    /// Directory of gauge files.
    #[arg(long)]
    config_dir: Option<PathBuf>,
    /// Record wall-clock timings.
    #[arg(long)]
    timings: bool,
    /// Write hierarchy diagnostics as JSON into this directory.
    #[arg(long)]
    diagnostics_dir: Option<PathBuf>,
    /// Export reduced operators as MatrixMarket into this directory.
    #[arg(long)]
    matrix_dir: Option<PathBuf>,
}

impl Common {
    fn resolve(&self, spectrum: bool) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(o) = &self.out {
            if spectrum {
                c.spectrum.output = o.clone();
            } else {
                c.output = o.clone();
            }
        }
        if let Some(w) = self.workers {
            c.workers = w;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(n) = self.n {
            c.n = n;
        }
        if !self.betas.is_empty() {
            c.betas = self.betas.clone();
        }
        if !self.shifts.is_empty() {
            c.shifts = self.shifts.clone();
        }
        if !self.eta_targets.is_empty() {
            c.eta_targets = self.eta_targets.clone();
        }
        if !self.solvers.is_empty() {
            c.solvers = self.solvers.iter().map(|&s| s.into()).collect();
        }
        if !self.schedules.is_empty() {
            c.schedules = self.schedules.iter().map(|&s| s.into()).collect();
        }
        if let Some(d) = &self.config_dir {
            c.ensemble.dir = d.clone();
        }
        c.timings |= self.timings;
        if self.diagnostics_dir.is_some() {
            c.diagnostics_dir = self.diagnostics_dir.clone();
        }
        if self.matrix_dir.is_some() {
            c.matrix_dir = self.matrix_dir.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn summarize(rows: &[harness::ExperimentRecord]) {
    let failed = rows.iter().filter(|r| r.failed).count();
    log::info!("{} rows, {failed} failed", rows.len());
    for ((solver, setup, point), (mean, count)) in harness::group_mean(rows, |r| (!r.failed).then_some(r.iterations as f64)) {
        let rho = harness::group_mean(rows, |r| r.rho)
            .get(&(solver.clone(), setup.clone(), point.clone()))
            .map(|v| format!(" mean rho {:.3}", v.0))
            .unwrap_or_default();
        println!("{solver:>13} {setup:>7} {point:>16}: mean iterations {mean:.1} over {count}{rho}");
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(a) => {
            let c = a.resolve(false)?;
            for p in harness::cmd_generate(&c)? {
                println!("{}", p.display());
            }
        }
        Command::Solve(a) => {
            let c = a.resolve(false)?;
            let rows = harness::cmd_solve(&c)?;
            summarize(&rows);
            println!("wrote {}", c.output.display());
        }
        Command::Sweep(a) => {
            let c = a.resolve(false)?;
            let rows = harness::cmd_sweep(&c)?;
            summarize(&rows);
            println!("wrote {}", c.output.display());
        }
        Command::Spectrum(a) => {
            let c = a.resolve(true)?;
            let rows = harness::cmd_spectrum(&c)?;
            for r in &rows {
                println!(
                    "beta {} cfg {} k {}: lambda {:+.6e} PR {:.4}",
                    r.beta, r.config_id, r.index, r.lambda, r.participation_ratio
                );
            }
            println!("wrote {}", c.spectrum.output.display());
        }
        Command::Config(a) => {
            println!("{}", serde_json::to_string_pretty(&a.resolve(false)?)?);
        }
    }
    Ok(())
}
