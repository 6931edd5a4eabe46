//! Initial hierarchy construction, bootstrap cycles and the adaptive step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{solve_cycle, CycleParams, Hierarchy, Level, SetupSchedule, Stage, StageRecord};
use crate::eigensolver::{generalized_hermitian_eig, DenseComplexMatrix, LuFactorization};
use crate::error::{Error, Result};
use crate::smoother::{kaczmarz_sweeps, relax_eigenvector, ritz_value, t_normalize};
use crate::sparse::SparseComplexOperator;
use crate::transfer::{
    build_ls_interpolation, full_coarsen, galerkin_coarsen, prolong_vector, restrict_vector, LevelGeometry,
};
use crate::vector::{norm, random_normal, sub, C64, ZERO};

fn eigen_residual(z: &SparseComplexOperator, t: &SparseComplexOperator, v: &[C64], lambda: f64) -> f64 {
    let zv = z.matvec(v);
    let tv: Vec<C64> = t.matvec(v).into_iter().map(|x| x * lambda).collect();
    norm(&sub(&zv, &tv)) / norm(v).max(f64::MIN_POSITIVE)
}

/// Builds the initial hierarchy from relaxed random vectors only.
pub fn initial_setup(z: SparseComplexOperator, geometry: LevelGeometry, params: &CycleParams) -> Result<Hierarchy> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let vectors = (0..params.k_r)
        .map(|_| random_normal(geometry.variables(), &mut rng))
        .collect();
    initial_setup_with_vectors(z, geometry, params, vectors)
}

/// As [`initial_setup`] with caller-supplied starting vectors in place of
/// the random ones.
pub fn initial_setup_with_vectors(
    z: SparseComplexOperator,
    geometry: LevelGeometry,
    params: &CycleParams,
    vectors: Vec<Vec<C64>>,
) -> Result<Hierarchy> {
    params.validate()?;
    if vectors.is_empty() {
        return Err(Error::InvalidArgument("no initial test vectors".into()));
    }
    if z.nrows() != geometry.variables() {
        return Err(Error::DimensionMismatch {
            expected: geometry.variables(),
            actual: z.nrows(),
        });
    }
    let floor = params.floor_for(geometry.n());
    let t = SparseComplexOperator::identity(z.nrows());
    let mut levels = vec![Level::new(geometry, z, t, params.order).map_err(|e| e.at_level(0))?];
    if let Some(v) = vectors.iter().find(|v| v.len() != geometry.variables()) {
        return Err(Error::DimensionMismatch {
            expected: geometry.variables(),
            actual: v.len(),
        });
    }
    levels[0].tvs.relaxed = vectors;
    let mut h = Hierarchy {
        levels,
        coarse_lu: LuFactorization::new(&DenseComplexMatrix::identity(1))?,
        params: params.clone(),
        log: Vec::new(),
        sweep_counts: vec![0],
        cycle: 0,
    };
    loop {
        let l = h.levels.len() - 1;
        let geo = h.levels[l].geometry;
        if geo.n() <= floor || !geo.can_coarsen() {
            break;
        }
        h.levels[l].map = Some(full_coarsen(geo, &h.levels[l].z).map_err(|e| e.at_level(l))?);
        h.relax_relaxed(l, params.initial_sweeps)?;
        h.sweep_counts[l] += params.initial_sweeps;
        h.rebuild_p(l)?;
        let c = {
            let lev = &h.levels[l];
            galerkin_coarsen(&lev.z, lev.p().unwrap(), &lev.t).map_err(|e| e.at_level(l))?
        };
        let coarse = Level::new(geo.coarser()?, c.z, c.t, params.order).map_err(|e| e.at_level(l + 1))?;
        h.levels.push(coarse);
        h.sweep_counts.push(0);
        h.restrict_vectors(l)?;
        h.record(l, Stage::Initial, params.initial_sweeps, Vec::new(), Vec::new());
    }
    h.factor_coarsest()?;
    Ok(h)
}

impl Hierarchy {
    fn coarsest(&self) -> usize {
        self.levels.len() - 1
    }

    fn record(&mut self, l: usize, stage: Stage, sweeps: usize, before: Vec<f64>, after: Vec<f64>) {
        let lev = &self.levels[l];
        self.log.push(StageRecord {
            cycle: self.cycle,
            level: l,
            stage,
            sweeps,
            ritz: lev.tvs.ritz.clone(),
            residual_before: before,
            residual_after: after,
            fit_mean: lev.interp.as_ref().map(|i| i.mean_fit_residual()),
            fit_max: lev.interp.as_ref().map(|i| i.max_fit_residual()),
        });
    }

    /// `nu` sweeps on `Z v = 0` for every relaxed vector, then T-normalization.
    fn relax_relaxed(&mut self, l: usize, nu: usize) -> Result<()> {
        let lev = &mut self.levels[l];
        let (z, t, ws) = (&lev.z, &lev.t, &lev.ws);
        let zero = vec![ZERO; z.nrows()];
        lev.tvs
            .relaxed
            .par_iter_mut()
            .try_for_each(|v| -> Result<()> {
                kaczmarz_sweeps(z, v, &zero, ws, nu)?;
                t_normalize(t, v)
            })
            .map_err(|e| e.at_level(l))
    }

    /// `nu` eigen-sweeps with Ritz refresh for every eigen vector. Returns
    /// the eigen residuals before and after.
    fn relax_eigen(&mut self, l: usize, nu: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let lev = &mut self.levels[l];
        let (z, t, ws) = (&lev.z, &lev.t, &lev.ws);
        let out: Vec<(f64, f64, f64)> = lev
            .tvs
            .eigen
            .par_iter_mut()
            .zip(lev.tvs.ritz.par_iter())
            .map(|(v, &lam)| -> Result<(f64, f64, f64)> {
                let before = eigen_residual(z, t, v, lam);
                let lam = relax_eigenvector(z, t, v, lam, ws, nu)?;
                t_normalize(t, v)?;
                Ok((lam, before, eigen_residual(z, t, v, lam)))
            })
            .collect::<Result<_>>()
            .map_err(|e| e.at_level(l))?;
        lev.tvs.ritz = out.iter().map(|o| o.0).collect();
        Ok((out.iter().map(|o| o.1).collect(), out.iter().map(|o| o.2).collect()))
    }

    fn relax_stage(&mut self, l: usize, nu: usize, stage: Stage) -> Result<()> {
        let (before, after) = if stage == Stage::Ascend {
            let r = self.relax_eigen(l, nu)?;
            self.relax_relaxed(l, nu)?;
            r
        } else {
            self.relax_relaxed(l, nu)?;
            self.relax_eigen(l, nu)?
        };
        self.sweep_counts[l] += nu;
        self.rebuild_p(l)?;
        self.record(l, stage, nu, before, after);
        Ok(())
    }

    pub(crate) fn rebuild_p(&mut self, l: usize) -> Result<()> {
        let lev = &mut self.levels[l];
        let map = lev
            .map
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("level {l} has no coarsening map")))?;
        lev.interp = Some(build_ls_interpolation(map, &lev.tvs).map_err(|e| e.at_level(l))?);
        Ok(())
    }

    /// Recomputes `Z_{l+1}, T_{l+1}` from level `l`.
    fn coarsen_one(&mut self, l: usize) -> Result<()> {
        let c = {
            let lev = &self.levels[l];
            galerkin_coarsen(&lev.z, lev.p().unwrap(), &lev.t).map_err(|e| e.at_level(l))?
        };
        let order = self.params.order;
        let next = &mut self.levels[l + 1];
        next.ws = crate::smoother::KaczmarzWorkspace::new(&c.z, order).map_err(|e| e.at_level(l + 1))?;
        next.z = c.z;
        next.t = c.t;
        next.gamma5 = c.gamma5;
        Ok(())
    }

    /// Recomputes every operator below level `l` and refactors the coarsest.
    pub(crate) fn coarsen_from(&mut self, l: usize) -> Result<()> {
        for k in l..self.coarsest() {
            self.coarsen_one(k)?;
        }
        self.factor_coarsest()
    }

    fn restrict_vectors(&mut self, l: usize) -> Result<()> {
        let mode = self.params.restriction;
        let (fine, coarse) = self.levels.split_at_mut(l + 1);
        let (fine, coarse) = (&fine[l], &mut coarse[0]);
        let p = fine.p().unwrap();
        let carry = |v: &Vec<C64>| -> Result<Vec<C64>> {
            let mut w = restrict_vector(p, mode, v, &fine.t, &coarse.t)?;
            t_normalize(&coarse.t, &mut w)?;
            Ok(w)
        };
        coarse.tvs.relaxed = fine.tvs.relaxed.par_iter().map(carry).collect::<Result<_>>()?;
        coarse.tvs.eigen = fine.tvs.eigen.par_iter().map(carry).collect::<Result<_>>()?;
        coarse.tvs.ritz = coarse
            .tvs
            .eigen
            .iter()
            .map(|v| ritz_value(&coarse.z, &coarse.t, v))
            .collect::<Result<_>>()
            .map_err(|e| e.at_level(l + 1))?;
        Ok(())
    }

    fn prolong_eigen(&mut self, l: usize) -> Result<()> {
        let (fine, coarse) = self.levels.split_at_mut(l + 1);
        let (fine, coarse) = (&mut fine[l], &coarse[0]);
        let p = fine.p().unwrap();
        let eigen: Vec<Vec<C64>> = coarse
            .tvs
            .eigen
            .iter()
            .map(|v| {
                let mut w = prolong_vector(p, v)?;
                t_normalize(&fine.t, &mut w)?;
                Ok(w)
            })
            .collect::<Result<_>>()
            .map_err(|e: Error| e.at_level(l))?;
        fine.tvs.ritz = eigen
            .iter()
            .map(|v| ritz_value(&fine.z, &fine.t, v))
            .collect::<Result<_>>()
            .map_err(|e| e.at_level(l))?;
        fine.tvs.eigen = eigen;
        Ok(())
    }

    /// The `k_e` smallest-modulus eigenpairs of `(Z_L, T_L)`.
    fn coarsest_eigensolve(&mut self) -> Result<()> {
        let l = self.coarsest();
        let lev = &mut self.levels[l];
        let z = DenseComplexMatrix::from_sparse(&lev.z);
        let t = DenseComplexMatrix::from_sparse(&lev.t);
        let k = self.params.k_e.min(z.nrows());
        let (lambda, v) = generalized_hermitian_eig(&z, &t, k).map_err(|e| e.at_level(l))?;
        lev.tvs.eigen = (0..k).map(|j| v.column(j).to_vec()).collect();
        lev.tvs.ritz = lambda;
        self.record(l, Stage::Coarsest, 0, Vec::new(), Vec::new());
        Ok(())
    }

    fn visit(&mut self, l: usize, nu: usize) -> Result<()> {
        if l == self.coarsest() {
            return self.coarsest_eigensolve();
        }
        self.relax_stage(l, nu, Stage::Descend)?;
        self.coarsen_one(l)?;
        self.restrict_vectors(l)?;
        for _ in 0..self.params.gamma {
            self.visit(l + 1, nu)?;
        }
        self.prolong_eigen(l)?;
        self.relax_stage(l, nu, Stage::Ascend)?;
        self.coarsen_from(l)
    }
}

/// One recursive bootstrap cycle with `nu` smoothing steps per stage.
pub fn bootstrap_cycle(h: &mut Hierarchy, nu: usize) -> Result<()> {
    h.cycle += 1;
    if k_e_disabled(h) {
        return Ok(());
    }
    h.visit(0, nu)
}

fn k_e_disabled(h: &Hierarchy) -> bool {
    h.levels.len() < 2
}

/// A single descending-ascending pass with `mu * 2^l` sweeps per stage on
/// level `l` (0-based) and one coarsest eigensolve.
pub fn super_v_setup(h: &mut Hierarchy, mu: usize) -> Result<()> {
    h.cycle += 1;
    if k_e_disabled(h) {
        return Ok(());
    }
    let last = h.coarsest();
    for l in 0..last {
        h.relax_stage(l, mu << l, Stage::Descend)?;
        h.coarsen_one(l)?;
        h.restrict_vectors(l)?;
    }
    h.coarsest_eigensolve()?;
    for l in (0..last).rev() {
        h.prolong_eigen(l)?;
        h.relax_stage(l, mu << l, Stage::Ascend)?;
        h.coarsen_from(l)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveReport {
    pub index: usize,
    pub ritz_before: f64,
    pub ritz_after: f64,
    pub residual_before: f64,
    pub residual_after: f64,
}

/// Improves the finest-level eigen test vector of smallest `|lambda|` with
/// solve cycles on `Z v = lambda T v`, then rebuilds the hierarchy below.
pub fn adaptive_step(h: &mut Hierarchy) -> Result<Option<AdaptiveReport>> {
    let lev = &h.levels[0];
    let Some(index) = (0..lev.tvs.ritz.len()).min_by(|&a, &b| lev.tvs.ritz[a].abs().total_cmp(&lev.tvs.ritz[b].abs()))
    else {
        return Ok(None);
    };
    let mut v = lev.tvs.eigen[index].clone();
    let mut lambda = lev.tvs.ritz[index];
    let ritz_before = lambda;
    let residual_before = eigen_residual(&lev.z, &lev.t, &v, lambda);
    let (nu_pre, nu_post, gamma) = (h.params.nu_pre, h.params.nu_post, h.params.gamma);
    for _ in 0..h.params.adaptive_cycles {
        let b: Vec<C64> = h.levels[0].t.matvec(&v).into_iter().map(|x| x * lambda).collect();
        solve_cycle(h, 0, &mut v, &b, nu_pre, nu_post, gamma)?;
        t_normalize(&h.levels[0].t, &mut v)?;
        lambda = ritz_value(&h.levels[0].z, &h.levels[0].t, &v)?;
    }
    let lev = &mut h.levels[0];
    let residual_after = eigen_residual(&lev.z, &lev.t, &v, lambda);
    lev.tvs.eigen[index] = v;
    lev.tvs.ritz[index] = lambda;
    h.rebuild_p(0)?;
    h.coarsen_from(0)?;
    h.record(0, Stage::Adaptive, 0, vec![residual_before], vec![residual_after]);
    Ok(Some(AdaptiveReport {
        index,
        ritz_before,
        ritz_after: lambda,
        residual_before,
        residual_after,
    }))
}

/// Runs the complete setup schedule of `params`: initial hierarchy, first
/// bootstrap cycle, adaptive step and second cycle.
pub fn build_hierarchy(z: SparseComplexOperator, geometry: LevelGeometry, params: &CycleParams) -> Result<Hierarchy> {
    let mut h = initial_setup(z, geometry, params)?;
    let run = |h: &mut Hierarchy, nu: usize| match params.schedule {
        SetupSchedule::W => bootstrap_cycle(h, nu),
        SetupSchedule::SuperV => super_v_setup(h, nu),
    };
    run(&mut h, params.first_cycle)?;
    if params.adaptive {
        adaptive_step(&mut h)?;
    }
    if let Some(nu) = params.second_cycle {
        run(&mut h, nu)?;
    }
    Ok(h)
}
