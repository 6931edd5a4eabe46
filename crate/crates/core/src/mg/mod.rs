//! The multigrid hierarchy: bootstrap setup cycles and the solve cycle.
//!
//! All levels work with the Hermitian form `Z_l` and the mass matrix `T_l`
//! (`T_0 = I`). Interpolation is spin-block diagonal, so Galerkin products
//! `P^H Z_l P` are the Hermitian forms of the Petrov-Galerkin operators
//! `(Gamma5 P)^H D_l P` and no separate restriction is stored.

mod cycle;
mod setup;

pub use cycle::{mg_solve, MgReport, RhoSource};

use serde::{Deserialize, Serialize};

use crate::eigensolver::{DenseComplexMatrix, LuFactorization};
use crate::error::{Error, Result};
use crate::operator::Gamma5Signature;
use crate::smoother::{KaczmarzWorkspace, SweepOrder};
use crate::sparse::SparseComplexOperator;
use crate::transfer::{CoarseningMap, InterpolationOperator, LevelGeometry, Restriction, TestVectorSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetupSchedule {
    /// Recursive bootstrap cycles revisiting coarser levels `gamma` times.
    #[default]
    W,
    /// A single pass with `mu * 2^l` sweeps on level `l` and one coarsest
    /// eigensolve.
    SuperV,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CycleParams {
    /// Solve-cycle smoothing.
    pub nu_pre: usize,
    pub nu_post: usize,
    /// Cycle index: 1 for V, 2 for W.
    pub gamma: usize,
    pub k_r: usize,
    pub k_e: usize,
    pub schedule: SetupSchedule,
    /// Sweeps on `Z v = 0` when building the initial hierarchy.
    pub initial_sweeps: usize,
    /// Smoothing of the first and second bootstrap cycle (`mu` for super-V).
    pub first_cycle: usize,
    pub second_cycle: Option<usize>,
    pub adaptive: bool,
    pub adaptive_cycles: usize,
    /// Extent of the coarsest lattice; `None` selects 16, or 8 when the
    /// fine lattice is at most 32.
    pub coarsest_extent: Option<usize>,
    pub order: SweepOrder,
    pub restriction: Restriction,
    pub seed: u64,
}

impl Default for CycleParams {
    fn default() -> Self {
        Self {
            nu_pre: 4,
            nu_post: 4,
            gamma: 2,
            k_r: 8,
            k_e: 8,
            schedule: SetupSchedule::W,
            initial_sweeps: 10,
            first_cycle: 10,
            second_cycle: Some(5),
            adaptive: true,
            adaptive_cycles: 2,
            coarsest_extent: None,
            order: SweepOrder::Forward,
            restriction: Restriction::TWeighted,
            seed: 1,
        }
    }
}

impl CycleParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_r == 0 {
            return Err(Error::InvalidArgument("k_r must be at least 1".into()));
        }
        if self.gamma == 0 {
            return Err(Error::InvalidArgument("cycle index must be at least 1".into()));
        }
        Ok(())
    }

    pub fn floor_for(&self, n: usize) -> usize {
        self.coarsest_extent.unwrap_or(if n <= 32 { 8 } else { 16 })
    }
}

#[derive(Debug, Clone)]
pub struct Level {
    pub geometry: LevelGeometry,
    pub z: SparseComplexOperator,
    pub t: SparseComplexOperator,
    pub gamma5: Gamma5Signature,
    pub ws: KaczmarzWorkspace,
    pub map: Option<CoarseningMap>,
    pub interp: Option<InterpolationOperator>,
    pub tvs: TestVectorSet,
}

impl Level {
    fn new(geometry: LevelGeometry, z: SparseComplexOperator, t: SparseComplexOperator, order: SweepOrder) -> Result<Self> {
        let ws = KaczmarzWorkspace::new(&z, order)?;
        let gamma5 = Gamma5Signature::for_variables(z.nrows())?;
        Ok(Self {
            geometry,
            z,
            t,
            gamma5,
            ws,
            map: None,
            interp: None,
            tvs: TestVectorSet::default(),
        })
    }

    pub fn p(&self) -> Option<&SparseComplexOperator> {
        self.interp.as_ref().map(|i| &i.p)
    }

    /// `D_l = Gamma5_l Z_l`.
    pub fn d(&self) -> SparseComplexOperator {
        self.z.scale_rows(self.gamma5.signs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Initial,
    Descend,
    Coarsest,
    Ascend,
    Adaptive,
}

/// One logged setup stage on one level.
#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub cycle: usize,
    pub level: usize,
    pub stage: Stage,
    pub sweeps: usize,
    pub ritz: Vec<f64>,
    /// `||Z v - lambda T v|| / ||v||` of each eigen test vector before and
    /// after the stage's relaxation.
    pub residual_before: Vec<f64>,
    pub residual_after: Vec<f64>,
    pub fit_mean: Option<f64>,
    pub fit_max: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub(crate) levels: Vec<Level>,
    pub(crate) coarse_lu: LuFactorization,
    pub(crate) params: CycleParams,
    pub(crate) log: Vec<StageRecord>,
    pub(crate) sweep_counts: Vec<usize>,
    pub(crate) cycle: usize,
}

impl Hierarchy {
    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> &Level {
        &self.levels[l]
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn params(&self) -> &CycleParams {
        &self.params
    }

    pub fn log(&self) -> &[StageRecord] {
        &self.log
    }

    /// Per-vector Kaczmarz sweeps applied on each level during setup.
    pub fn sweep_counts(&self) -> &[usize] {
        &self.sweep_counts
    }

    pub fn reset_sweep_counts(&mut self) {
        self.sweep_counts.iter_mut().for_each(|c| *c = 0);
    }

    pub fn grid_complexity(&self) -> f64 {
        let fine = self.levels[0].geometry.points() as f64;
        self.levels.iter().map(|l| l.geometry.points() as f64).sum::<f64>() / fine
    }

    pub fn operator_complexity(&self) -> f64 {
        let fine = self.levels[0].z.nnz() as f64;
        self.levels.iter().map(|l| l.z.nnz() as f64).sum::<f64>() / fine
    }

    pub fn coarse_lu(&self) -> &LuFactorization {
        &self.coarse_lu
    }

    pub(crate) fn factor_coarsest(&mut self) -> Result<()> {
        let last = self.levels.len() - 1;
        let dense = DenseComplexMatrix::from_sparse(&self.levels[last].z);
        self.coarse_lu = LuFactorization::new(&dense).map_err(|e| e.at_level(last))?;
        Ok(())
    }

    pub fn diagnostics(&self) -> HierarchyDiagnostics {
        HierarchyDiagnostics {
            levels: self
                .levels
                .iter()
                .enumerate()
                .map(|(l, lev)| LevelDiagnostics {
                    level: l,
                    extent: lev.geometry.n(),
                    points: lev.geometry.points(),
                    variables: lev.geometry.variables(),
                    nnz: lev.z.nnz(),
                    max_row_nnz: lev.z.max_row_nnz(),
                    ritz: lev.tvs.ritz.clone(),
                    fit_mean: lev.interp.as_ref().map(|i| i.mean_fit_residual()),
                    fit_max: lev.interp.as_ref().map(|i| i.max_fit_residual()),
                    fallback_rows: lev.interp.as_ref().map_or(0, |i| i.fallback_rows.len()),
                    sweeps: self.sweep_counts[l],
                })
                .collect(),
            grid_complexity: self.grid_complexity(),
            operator_complexity: self.operator_complexity(),
            log: self.log.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelDiagnostics {
    pub level: usize,
    pub extent: usize,
    pub points: usize,
    pub variables: usize,
    pub nnz: usize,
    pub max_row_nnz: usize,
    pub ritz: Vec<f64>,
    pub fit_mean: Option<f64>,
    pub fit_max: Option<f64>,
    pub fallback_rows: usize,
    pub sweeps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct HierarchyDiagnostics {
    pub levels: Vec<LevelDiagnostics>,
    pub grid_complexity: f64,
    pub operator_complexity: f64,
    pub log: Vec<StageRecord>,
}

pub use setup::{adaptive_step, bootstrap_cycle, build_hierarchy, initial_setup, initial_setup_with_vectors, super_v_setup, AdaptiveReport};
pub use cycle::solve_cycle;
