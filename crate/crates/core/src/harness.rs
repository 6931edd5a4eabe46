//! Experiment driver behind the command-line tool: ensemble files, solver
//! grids over mass shifts, spectra and the CSV and field-dump outputs.
//!
//! Each (beta, configuration, shift) point is an independent task. Tasks run
//! on a rayon pool and results are collected in task order, so output files
//! do not depend on the number of workers. Random inputs of a task are drawn
//! from a seed derived from the run seed and the task coordinates.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eigensolver::{hermitian_eig, DenseComplexMatrix};
use crate::error::{Error, Result};
use crate::gauge::{
    encode_config, load_config, save_config, GaugeConfiguration, MetropolisChain, DEFAULT_PROPOSAL_WIDTH,
    SNAPSHOT_SWEEPS,
};
use crate::krylov::{cgnr, gmres_restarted, MultigridPreconditioner, SolveReport, CGNR_MAX_ITER};
use crate::lattice::LatticeDims;
use crate::mg::{build_hierarchy, mg_solve, CycleParams, Hierarchy, SetupSchedule};
use crate::operator::{assemble_wilson, eta_min, odd_even_reduce, spectrum_from_reduced, KrylovSchurParams, OddEvenSystem};
use crate::transfer::LevelGeometry;
use crate::vector::{norm_sqr, random_normal, C64};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// CGNR on the reduced operator.
    Cgnr,
    /// CGNR on the full operator.
    CgnrFull,
    Gmres32,
    Gmres32Full,
    /// Stationary multigrid iteration on `Z`.
    Bamg,
    /// GMRES preconditioned by one multigrid cycle.
    BamgGmres32,
}

impl SolverKind {
    pub const ALL: [SolverKind; 6] = [
        SolverKind::Cgnr,
        SolverKind::CgnrFull,
        SolverKind::Gmres32,
        SolverKind::Gmres32Full,
        SolverKind::Bamg,
        SolverKind::BamgGmres32,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Cgnr => "cgnr",
            SolverKind::CgnrFull => "cgnr-full",
            SolverKind::Gmres32 => "gmres32",
            SolverKind::Gmres32Full => "gmres32-full",
            SolverKind::Bamg => "bamg",
            SolverKind::BamgGmres32 => "bamg-gmres32",
        }
    }

    pub fn uses_hierarchy(self) -> bool {
        matches!(self, SolverKind::Bamg | SolverKind::BamgGmres32)
    }
}

pub fn schedule_name(s: SetupSchedule) -> &'static str {
    match s {
        SetupSchedule::W => "w",
        SetupSchedule::SuperV => "super-v",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Directory holding `WGF1` files.
    pub dir: PathBuf,
    pub seed: u64,
    pub proposal_width: f64,
    /// Snapshot sweep counts; these double as configuration ids.
    pub sweeps: Vec<u64>,
    /// Generate missing files instead of failing.
    pub generate: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("configs"),
            seed: 7,
            proposal_width: DEFAULT_PROPOSAL_WIDTH,
            sweeps: SNAPSHOT_SWEEPS.to_vec(),
            generate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Explicit mass; overrides `eta_target`.
    pub m: Option<f64>,
    /// Target `eta_min(D)`, reached with `m = eta_target - eta_min(D(0))`.
    pub eta_target: f64,
    /// Number of smallest-magnitude eigenvalues of `Z` to report.
    pub k: usize,
    /// Largest extent for which `Z` is diagonalised densely. Above it the
    /// level-0 Ritz pairs of a multigrid hierarchy are used.
    pub dense_max_n: usize,
    /// Largest extent for which the full spectrum of `D` is written.
    pub full_spectrum_max_n: usize,
    /// Indices into the sorted list of modes whose moduli are dumped.
    pub modes: Vec<usize>,
    pub output: PathBuf,
    pub field_dir: PathBuf,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            m: None,
            eta_target: 1e-5,
            k: 8,
            dense_max_n: 32,
            full_spectrum_max_n: 32,
            modes: vec![0],
            output: PathBuf::from("spectrum.csv"),
            field_dir: PathBuf::from("fields"),
        }
    }
}

/// Eight logarithmically spaced targets from `1e-5` to `1e-1`.
pub fn default_eta_targets() -> Vec<f64> {
    (0..8).map(|k| 10f64.powf(-5.0 + 4.0 * k as f64 / 7.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub betas: Vec<f64>,
    pub ensemble: EnsembleConfig,
    /// Explicit masses `m`.
    pub shifts: Vec<f64>,
    /// Targets for `eta_min(D)`; used by sweeps only.
    pub eta_targets: Vec<f64>,
    pub solvers: Vec<SolverKind>,
    pub schedules: Vec<SetupSchedule>,
    pub multigrid: CycleParams,
    pub tol: f64,
    pub mg_max_iter: usize,
    pub cgnr_max_iter: usize,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
    /// Operators with at most this many rows get a dense `eta_min`.
    pub dense_eta_limit: usize,
    pub krylov_schur: KrylovSchurParams,
    /// Compute `eta_min` for explicit shifts as well.
    pub record_eta: bool,
    pub seed: u64,
    pub output: PathBuf,
    /// Worker threads; 0 lets rayon decide.
    pub workers: usize,
    /// Wall-clock timings in the CSV; written as 0 when off so that output
    /// is reproducible.
    pub timings: bool,
    pub diagnostics_dir: Option<PathBuf>,
    pub matrix_dir: Option<PathBuf>,
    pub spectrum: SpectrumConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 64,
            betas: vec![6.0],
            ensemble: EnsembleConfig::default(),
            shifts: Vec::new(),
            eta_targets: default_eta_targets(),
            solvers: vec![SolverKind::Bamg, SolverKind::BamgGmres32],
            schedules: vec![SetupSchedule::W],
            multigrid: CycleParams::default(),
            tol: 1e-8,
            mg_max_iter: 100,
            cgnr_max_iter: CGNR_MAX_ITER,
            gmres_restart: 32,
            gmres_max_iter: 3200,
            dense_eta_limit: 512,
            krylov_schur: KrylovSchurParams::default(),
            record_eta: false,
            seed: 1,
            output: PathBuf::from("results.csv"),
            workers: 0,
            timings: false,
            diagnostics_dir: None,
            matrix_dir: None,
            spectrum: SpectrumConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        LatticeDims::new(self.n)?;
        self.multigrid.validate()?;
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if self.betas.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return bad("beta must be finite and nonnegative");
        }
        if !(self.tol > 0.0) {
            return bad("tolerance must be positive");
        }
        if self.gmres_restart == 0 {
            return bad("GMRES restart length must be positive");
        }
        if self.schedules.is_empty() && self.solvers.iter().any(|s| s.uses_hierarchy()) {
            return bad("multigrid solvers need at least one setup schedule");
        }
        if self.ensemble.sweeps.windows(2).any(|w| w[0] >= w[1]) {
            return bad("ensemble sweeps must be strictly increasing");
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
    }
}

/// One solver run. Empty cells stand for quantities that do not apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub schema_version: u32,
    pub n: usize,
    pub beta: f64,
    pub config_id: u64,
    pub m: f64,
    pub eta_target: Option<f64>,
    pub eta_min: Option<f64>,
    pub eta_method: String,
    /// Smallest `|lambda|` among the level-0 Ritz values of `Z`.
    pub sigma_min_proxy: Option<f64>,
    pub solver: String,
    pub setup: String,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: usize,
    pub rho: Option<f64>,
    pub rho_source: String,
    pub rel_residual: Option<f64>,
    pub rel_error: Option<f64>,
    pub levels: Option<usize>,
    pub grid_complexity: Option<f64>,
    pub operator_complexity: Option<f64>,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
    pub seed: u64,
    pub config_hash: String,
    pub failed: bool,
    pub message: String,
}

pub const RECORD_COLUMNS: [&str; 27] = [
    "schema_version",
    "n",
    "beta",
    "config_id",
    "m",
    "eta_target",
    "eta_min",
    "eta_method",
    "sigma_min_proxy",
    "solver",
    "setup",
    "iterations",
    "converged",
    "restarts",
    "rho",
    "rho_source",
    "rel_residual",
    "rel_error",
    "levels",
    "grid_complexity",
    "operator_complexity",
    "setup_seconds",
    "solve_seconds",
    "seed",
    "config_hash",
    "failed",
    "message",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub schema_version: u32,
    pub n: usize,
    pub beta: f64,
    pub config_id: u64,
    pub m: f64,
    pub eta_min: Option<f64>,
    pub index: usize,
    pub lambda: f64,
    pub abs_lambda: f64,
    pub participation_ratio: f64,
    pub method: String,
}

pub const SPECTRUM_COLUMNS: [&str; 11] = [
    "schema_version",
    "n",
    "beta",
    "config_id",
    "m",
    "eta_min",
    "index",
    "lambda",
    "abs_lambda",
    "participation_ratio",
    "method",
];

/// Writes a CSV with an explicit header, so an empty run still produces a
/// well-formed file.
pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, columns: &[&str], rows: &[T]) -> Result<()> {
    if let Some(dir) = path.as_ref().parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(columns)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_records(path: impl AsRef<Path>, rows: &[ExperimentRecord]) -> Result<()> {
    write_csv(path, &RECORD_COLUMNS, rows)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<ExperimentRecord>> {
    read_csv(path)
}

/// Hex SHA-256 of the encoded configuration.
pub fn config_hash(cfg: &GaugeConfiguration) -> String {
    hex::encode(Sha256::digest(encode_config(cfg)))
}

/// Deterministic seed for the random inputs of one task.
pub fn task_seed(seed: u64, beta: f64, config_id: u64, m: f64) -> u64 {
    let mut h = Sha256::new();
    for word in [seed, beta.to_bits(), config_id, m.to_bits()] {
        h.update(word.to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn tag(x: f64) -> String {
    format!("{x}").replace('-', "m")
}

pub fn config_path(ens: &EnsembleConfig, n: usize, beta: f64, sweep: u64) -> PathBuf {
    ens.dir
        .join(format!("wgf_n{n}_b{}_s{}_{sweep}.wgf", tag(beta), ens.seed))
}

/// Runs the cold-start chain for `beta` and writes every snapshot.
pub fn generate_ensemble_files(ens: &EnsembleConfig, n: usize, beta: f64) -> Result<Vec<(PathBuf, GaugeConfiguration)>> {
    let dims = LatticeDims::new(n)?;
    let mut chain = MetropolisChain::new(GaugeConfiguration::cold(dims, beta), ens.seed, ens.proposal_width)?;
    let snaps = chain.snapshots(&ens.sweeps)?;
    fs::create_dir_all(&ens.dir)?;
    snaps
        .into_iter()
        .map(|c| {
            let p = config_path(ens, n, beta, c.meta.sweep_count);
            save_config(&c, &p)?;
            log::info!("wrote {} (plaquette {:.4})", p.display(), c.mean_plaquette());
            Ok((p, c))
        })
        .collect()
}

/// Reads the ensemble for `beta`, generating it when files are missing and
/// generation is enabled.
pub fn load_or_generate(ens: &EnsembleConfig, n: usize, beta: f64) -> Result<Vec<GaugeConfiguration>> {
    let paths: Vec<PathBuf> = ens.sweeps.iter().map(|&s| config_path(ens, n, beta, s)).collect();
    if paths.iter().all(|p| p.exists()) {
        let cfgs: Vec<GaugeConfiguration> = paths.iter().map(load_config).collect::<Result<_>>()?;
        for (c, p) in cfgs.iter().zip(&paths) {
            if c.dims().n() != n || c.beta() != beta {
                return Err(Error::Format(format!(
                    "{} holds n = {}, beta = {} (expected {n}, {beta})",
                    p.display(),
                    c.dims().n(),
                    c.beta()
                )));
            }
        }
        return Ok(cfgs);
    }
    if !ens.generate {
        let missing = paths.iter().find(|p| !p.exists()).expect("some path is missing");
        return Err(Error::InvalidArgument(format!("missing configuration {}", missing.display())));
    }
    Ok(generate_ensemble_files(ens, n, beta)?.into_iter().map(|(_, c)| c).collect())
}

/// `eta_min(D(m = 0))` and the method used.
pub fn compute_eta0(cfg: &GaugeConfiguration, dense_limit: usize, ks: &KrylovSchurParams) -> Result<(f64, &'static str)> {
    let d = assemble_wilson(cfg, 0.0);
    let method = if d.nrows() <= dense_limit { "dense" } else { "krylov-schur" };
    Ok((eta_min(&d, dense_limit, ks)?, method))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Point {
    Shift(f64),
    EtaTarget(f64),
}

/// One ensemble configuration with its hash and `eta_min(D(0))`.
#[derive(Debug, Clone)]
pub struct Member {
    pub beta: f64,
    pub id: u64,
    pub cfg: GaugeConfiguration,
    pub hash: String,
    pub eta0: Option<(f64, &'static str)>,
}

struct Task<'a> {
    member: &'a Member,
    point: Point,
}

impl Task<'_> {
    fn m(&self) -> Option<f64> {
        match self.point {
            Point::Shift(m) => Some(m),
            Point::EtaTarget(t) => self.member.eta0.map(|(e, _)| t - e),
        }
    }
}

/// Prefilled record for a task; solver fields are set by the caller.
fn base_record(cfg: &ExperimentConfig, task: &Task, m: f64, seed: u64) -> ExperimentRecord {
    let mb = task.member;
    ExperimentRecord {
        schema_version: SCHEMA_VERSION,
        n: cfg.n,
        beta: mb.beta,
        config_id: mb.id,
        m,
        eta_target: match task.point {
            Point::EtaTarget(t) => Some(t),
            Point::Shift(_) => None,
        },
        eta_min: mb.eta0.map(|(e, _)| e + m),
        eta_method: mb.eta0.map_or(String::new(), |(_, s)| s.to_string()),
        sigma_min_proxy: None,
        solver: String::new(),
        setup: String::new(),
        iterations: 0,
        converged: false,
        restarts: 0,
        rho: None,
        rho_source: String::new(),
        rel_residual: None,
        rel_error: None,
        levels: None,
        grid_complexity: None,
        operator_complexity: None,
        setup_seconds: 0.0,
        solve_seconds: 0.0,
        seed,
        config_hash: mb.hash.clone(),
        failed: false,
        message: String::new(),
    }
}

fn fail(mut r: ExperimentRecord, e: &Error) -> ExperimentRecord {
    r.failed = true;
    r.message = e.to_string();
    r
}

fn fill_krylov(mut r: ExperimentRecord, rep: &SolveReport) -> ExperimentRecord {
    r.iterations = rep.iterations;
    r.converged = rep.converged;
    r.restarts = rep.restarts;
    r.rel_residual = Some(rep.relative_residual);
    r.rel_error = rep.relative_error;
    if rep.stagnated {
        r.message = "stagnated".into();
    }
    r
}

fn seconds(t: Instant, on: bool) -> f64 {
    if on {
        t.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

fn file_stem(n: usize, beta: f64, id: u64, m: f64) -> String {
    format!("n{n}_b{}_cfg{id}_m{}", tag(beta), tag(m))
}

fn write_matrices(dir: &Path, stem: &str, sys: &OddEvenSystem) -> Result<()> {
    fs::create_dir_all(dir)?;
    let f = fs::File::create(dir.join(format!("dhat_{stem}.mtx")))?;
    sys.dhat.write_matrix_market(std::io::BufWriter::new(f))?;
    let f = fs::File::create(dir.join(format!("z_{stem}.mtx")))?;
    sys.z().write_matrix_market(std::io::BufWriter::new(f))?;
    Ok(())
}

fn write_diagnostics(dir: &Path, stem: &str, schedule: SetupSchedule, h: &Hierarchy) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("diag_{stem}_{}.json", schedule_name(schedule)));
    let f = fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), &h.diagnostics())?;
    Ok(())
}

fn run_task(cfg: &ExperimentConfig, task: &Task) -> Vec<ExperimentRecord> {
    let mb = task.member;
    let Some(m) = task.m() else {
        let dummy = base_record(cfg, task, f64::NAN, cfg.seed);
        let e = Error::InvalidArgument("eta target requires eta_min of D(0)".into());
        return cfg
            .solvers
            .iter()
            .map(|s| {
                let mut r = fail(dummy.clone(), &e);
                r.solver = s.name().into();
                r
            })
            .collect();
    };
    let seed = task_seed(cfg.seed, mb.beta, mb.id, m);
    let base = base_record(cfg, task, m, seed);
    log::info!("beta {} cfg {} m {m:.6}", mb.beta, mb.id);
    let dims = mb.cfg.dims();
    let d = assemble_wilson(&mb.cfg, m);
    let sys = match odd_even_reduce(&d, dims) {
        Ok(s) => s,
        Err(e) => {
            return cfg
                .solvers
                .iter()
                .map(|s| {
                    let mut r = fail(base.clone(), &e);
                    r.solver = s.name().into();
                    r
                })
                .collect()
        }
    };
    let stem = file_stem(cfg.n, mb.beta, mb.id, m);
    if let Some(dir) = &cfg.matrix_dir {
        if let Err(e) = write_matrices(dir, &stem, &sys) {
            log::warn!("matrix export failed: {e}");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_e = random_normal(sys.dhat.ncols(), &mut rng);
    let b_e = sys.dhat.matvec(&x_e);
    let x_full = random_normal(d.ncols(), &mut rng);
    let b_full = d.matvec(&x_full);

    let mut out = Vec::new();
    for &solver in &cfg.solvers {
        let mut r = base.clone();
        r.solver = solver.name().into();
        if solver.uses_hierarchy() {
            continue;
        }
        let t = Instant::now();
        let res = match solver {
            SolverKind::Cgnr => cgnr(&sys.dhat, &b_e, cfg.tol, cfg.cgnr_max_iter).map(|(x, rep)| rep.with_error(&x, &x_e)),
            SolverKind::CgnrFull => cgnr(&d, &b_full, cfg.tol, cfg.cgnr_max_iter).map(|(x, rep)| rep.with_error(&x, &x_full)),
            SolverKind::Gmres32 => gmres_restarted(&sys.dhat, &b_e, cfg.gmres_restart, cfg.tol, cfg.gmres_max_iter, None)
                .map(|(x, rep)| rep.with_error(&x, &x_e)),
            SolverKind::Gmres32Full => gmres_restarted(&d, &b_full, cfg.gmres_restart, cfg.tol, cfg.gmres_max_iter, None)
                .map(|(x, rep)| rep.with_error(&x, &x_full)),
            SolverKind::Bamg | SolverKind::BamgGmres32 => unreachable!(),
        };
        r.solve_seconds = seconds(t, cfg.timings);
        out.push(match res {
            Ok(rep) => fill_krylov(r, &rep),
            Err(e) => fail(r, &e),
        });
    }

    let mg_solvers: Vec<SolverKind> = cfg.solvers.iter().copied().filter(|s| s.uses_hierarchy()).collect();
    if mg_solvers.is_empty() {
        return out;
    }
    let z = sys.z();
    let gamma_e = sys.gamma_e();
    let z_rhs = gamma_e.apply(&b_e);
    for &schedule in &cfg.schedules {
        let params = CycleParams {
            schedule,
            seed,
            ..cfg.multigrid.clone()
        };
        let t = Instant::now();
        let built = LevelGeometry::new(cfg.n).and_then(|g| build_hierarchy(z.clone(), g, &params));
        let setup_seconds = seconds(t, cfg.timings);
        let h = match built {
            Ok(h) => h,
            Err(e) => {
                for &s in &mg_solvers {
                    let mut r = fail(base.clone(), &e);
                    r.solver = s.name().into();
                    r.setup = schedule_name(schedule).into();
                    out.push(r);
                }
                continue;
            }
        };
        if let Some(dir) = &cfg.diagnostics_dir {
            if let Err(e) = write_diagnostics(dir, &stem, schedule, &h) {
                log::warn!("diagnostics export failed: {e}");
            }
        }
        let mut hb = base.clone();
        hb.setup = schedule_name(schedule).into();
        hb.setup_seconds = setup_seconds;
        hb.levels = Some(h.num_levels());
        hb.grid_complexity = Some(h.grid_complexity());
        hb.operator_complexity = Some(h.operator_complexity());
        hb.sigma_min_proxy = h.level(0).tvs.ritz.iter().map(|l| l.abs()).reduce(f64::min);
        for &s in &mg_solvers {
            let mut r = hb.clone();
            r.solver = s.name().into();
            let t = Instant::now();
            match s {
                SolverKind::Bamg => match mg_solve(&h, &z_rhs, None, cfg.tol, cfg.mg_max_iter, Some(&x_e)) {
                    Ok((_, rep)) => {
                        r.iterations = rep.iterations;
                        r.converged = rep.converged;
                        r.rho = rep.rho.is_finite().then_some(rep.rho);
                        r.rho_source = serde_json::to_value(rep.rho_source)
                            .ok()
                            .and_then(|v| v.as_str().map(str::to_string))
                            .unwrap_or_default();
                        r.rel_residual = Some(rep.relative_residual);
                        r.rel_error = rep.relative_error;
                    }
                    Err(e) => r = fail(r, &e),
                },
                _ => {
                    let pc = MultigridPreconditioner::new(&h);
                    match gmres_restarted(&sys.dhat, &b_e, cfg.gmres_restart, cfg.tol, cfg.gmres_max_iter, Some(&pc)) {
                        Ok((x, rep)) => r = fill_krylov(r, &rep.with_error(&x, &x_e)),
                        Err(e) => r = fail(r, &e),
                    }
                }
            }
            r.solve_seconds = seconds(t, cfg.timings);
            out.push(r);
        }
    }
    out
}

/// Loads or generates every ensemble member, optionally with `eta_min`.
pub fn load_members(cfg: &ExperimentConfig, with_eta: bool) -> Result<Vec<Member>> {
    let mut members = Vec::new();
    for &beta in &cfg.betas {
        for c in load_or_generate(&cfg.ensemble, cfg.n, beta)? {
            members.push(Member {
                beta,
                id: c.meta.sweep_count,
                hash: config_hash(&c),
                cfg: c,
                eta0: None,
            });
        }
    }
    if with_eta {
        let pool = cfg.pool()?;
        let etas: Vec<Option<(f64, &'static str)>> = pool.install(|| {
            members
                .par_iter()
                .map(|mb| match compute_eta0(&mb.cfg, cfg.dense_eta_limit, &cfg.krylov_schur) {
                    Ok(e) => Some(e),
                    Err(e) => {
                        log::warn!("eta_min for beta {} cfg {}: {e}", mb.beta, mb.id);
                        None
                    }
                })
                .collect()
        });
        for (mb, e) in members.iter_mut().zip(etas) {
            mb.eta0 = e;
        }
    }
    Ok(members)
}

/// Runs every solver at every point for every ensemble member.
pub fn run_grid(cfg: &ExperimentConfig, points: &[Point], with_eta: bool) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    if points.is_empty() {
        return Ok(Vec::new());
    }
    run_members(cfg, &load_members(cfg, with_eta)?, points)
}

/// [`run_grid`] on members loaded beforehand.
pub fn run_members(cfg: &ExperimentConfig, members: &[Member], points: &[Point]) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let tasks: Vec<Task> = members
        .iter()
        .flat_map(|mb| points.iter().map(move |&point| Task { member: mb, point }))
        .collect();
    let pool = cfg.pool()?;
    let rows: Vec<Vec<ExperimentRecord>> = pool.install(|| tasks.par_iter().map(|t| run_task(cfg, t)).collect());
    Ok(rows.into_iter().flatten().collect())
}

/// Writes the ensemble files for every beta.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &beta in &cfg.betas {
        out.extend(generate_ensemble_files(&cfg.ensemble, cfg.n, beta)?.into_iter().map(|(p, _)| p));
    }
    Ok(out)
}

/// Explicit shifts only.
pub fn cmd_solve(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    let points: Vec<Point> = cfg.shifts.iter().map(|&m| Point::Shift(m)).collect();
    let rows = run_grid(cfg, &points, cfg.record_eta)?;
    write_records(&cfg.output, &rows)?;
    Ok(rows)
}

/// Explicit shifts followed by the `eta_min` targets.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    let points: Vec<Point> = cfg
        .shifts
        .iter()
        .map(|&m| Point::Shift(m))
        .chain(cfg.eta_targets.iter().map(|&t| Point::EtaTarget(t)))
        .collect();
    let with_eta = cfg.record_eta || !cfg.eta_targets.is_empty();
    let rows = run_grid(cfg, &points, with_eta)?;
    write_records(&cfg.output, &rows)?;
    Ok(rows)
}

/// `(sum_x |psi(x)|^2)^2 / (V sum_x |psi(x)|^4)` with spins summed per
/// site: 1 for a uniform field, `1/V` for a field on one site.
pub fn participation_ratio(psi: &[C64]) -> f64 {
    let dens: Vec<f64> = psi.chunks(2).map(norm_sqr).collect();
    let s2: f64 = dens.iter().sum();
    let s4: f64 = dens.iter().map(|d| d * d).sum();
    if s4 == 0.0 {
        return 0.0;
    }
    s2 * s2 / (dens.len() as f64 * s4)
}

/// Per-spin moduli of a full field as `n` lines of `n` values, line `y`
/// holding `x = 0..n`.
pub fn write_modulus_field(path: impl AsRef<Path>, psi: &[C64], n: usize, spin: usize) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    for y in 0..n {
        let line: Vec<String> = (0..n).map(|x| format!("{:.10e}", psi[2 * (y * n + x) + spin].norm())).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

/// Smallest-magnitude eigenpairs of `Z` for one member: dense for small
/// lattices, level-0 Ritz pairs otherwise.
fn smallest_modes(cfg: &ExperimentConfig, sys: &OddEvenSystem, seed: u64) -> Result<(Vec<(f64, Vec<C64>)>, &'static str)> {
    let z = sys.z();
    let k = cfg.spectrum.k;
    if cfg.n <= cfg.spectrum.dense_max_n {
        let (vals, vecs) = hermitian_eig(&DenseComplexMatrix::from_sparse(&z))?;
        let mut idx: Vec<usize> = (0..vals.len()).collect();
        idx.sort_by(|&a, &b| vals[a].abs().total_cmp(&vals[b].abs()));
        let modes = idx.into_iter().take(k).map(|j| (vals[j], vecs.column(j).to_vec())).collect();
        return Ok((modes, "dense"));
    }
    let params = CycleParams {
        seed,
        k_e: cfg.multigrid.k_e.max(k),
        ..cfg.multigrid.clone()
    };
    let h = build_hierarchy(z, LevelGeometry::new(cfg.n)?, &params)?;
    let tvs = &h.level(0).tvs;
    let mut modes: Vec<(f64, Vec<C64>)> = tvs.ritz.iter().copied().zip(tvs.eigen.iter().cloned()).collect();
    modes.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
    modes.truncate(k);
    Ok((modes, "bamg-ritz"))
}

/// Low modes of `Z`, their localisation and the full spectrum of `D` for
/// small lattices.
pub fn cmd_spectrum(cfg: &ExperimentConfig) -> Result<Vec<SpectrumRecord>> {
    cfg.validate()?;
    let sp = &cfg.spectrum;
    let members = load_members(cfg, sp.m.is_none())?;
    let pool = cfg.pool()?;
    let field_dir = &sp.field_dir;
    fs::create_dir_all(field_dir)?;
    let per: Vec<Result<Vec<SpectrumRecord>>> = pool.install(|| {
        members
            .par_iter()
            .map(|mb| -> Result<Vec<SpectrumRecord>> {
                let m = match (sp.m, mb.eta0) {
                    (Some(m), _) => m,
                    (None, Some((e, _))) => sp.eta_target - e,
                    (None, None) => return Err(Error::InvalidArgument("eta_min of D(0) unavailable".into())),
                };
                let dims = mb.cfg.dims();
                let sys = odd_even_reduce(&assemble_wilson(&mb.cfg, m), dims)?;
                let seed = task_seed(cfg.seed, mb.beta, mb.id, m);
                let (modes, method) = smallest_modes(cfg, &sys, seed)?;
                let stem = file_stem(cfg.n, mb.beta, mb.id, m);
                let zeros = vec![C64::new(0.0, 0.0); dims.variables()];
                let mut rows = Vec::with_capacity(modes.len());
                for (index, (lambda, v)) in modes.iter().enumerate() {
                    let psi = sys.reconstruct(v, &zeros);
                    let pr = participation_ratio(&psi);
                    if sp.modes.contains(&index) {
                        for spin in 0..2 {
                            let p = field_dir.join(format!("mode_{stem}_k{index}_s{spin}.txt"));
                            write_modulus_field(p, &psi, cfg.n, spin)?;
                        }
                    }
                    rows.push(SpectrumRecord {
                        schema_version: SCHEMA_VERSION,
                        n: cfg.n,
                        beta: mb.beta,
                        config_id: mb.id,
                        m,
                        eta_min: mb.eta0.map(|(e, _)| e + m),
                        index,
                        lambda: *lambda,
                        abs_lambda: lambda.abs(),
                        participation_ratio: pr,
                        method: method.into(),
                    });
                }
                if cfg.n <= sp.full_spectrum_max_n {
                    let ev = spectrum_from_reduced(&sys, crate::operator::DENSE_EIG_LIMIT)?;
                    let mut w = csv::Writer::from_path(field_dir.join(format!("dspec_{stem}.csv")))?;
                    w.write_record(["re", "im"])?;
                    for z in ev {
                        w.serialize((z.re, z.im))?;
                    }
                    w.flush()?;
                }
                Ok(rows)
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in per {
        rows.extend(r?);
    }
    write_csv(&sp.output, &SPECTRUM_COLUMNS, &rows)?;
    Ok(rows)
}

/// Config-averaged value of `f` per (solver, setup, point) group, keyed in
/// CSV order.
pub fn group_mean<F>(rows: &[ExperimentRecord], mut f: F) -> BTreeMap<(String, String, String), (f64, usize)>
where
    F: FnMut(&ExperimentRecord) -> Option<f64>,
{
    let mut out: BTreeMap<(String, String, String), (f64, usize)> = BTreeMap::new();
    for r in rows {
        let point = match r.eta_target {
            Some(t) => format!("eta={t:e}"),
            None => format!("m={}", r.m),
        };
        if let Some(v) = f(r) {
            let e = out.entry((r.solver.clone(), r.setup.clone(), point)).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    for v in out.values_mut() {
        v.0 /= v.1 as f64;
    }
    out
}
