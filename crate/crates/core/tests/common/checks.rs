//! The acceptance criteria as functions returning a measured outcome.

use std::path::Path;
use std::time::Instant;

use wilson_bamg::eigensolver::{generalized_hermitian_eig, lu_solve, DenseComplexMatrix, LuFactorization};
use wilson_bamg::gauge::{GaugeConfiguration, MetropolisChain};
use wilson_bamg::harness::{self, ExperimentConfig, ExperimentRecord, Member, Point, SolverKind};
use wilson_bamg::lattice::LatticeDims;
use wilson_bamg::mg::{build_hierarchy, CycleParams, Hierarchy, SetupSchedule};
use wilson_bamg::operator::{
    assemble_wilson, block_form_matrix, block_spin_form, dense_eigenvalues, gamma5_defect, odd_even_reduce,
    spin_permutation, Gamma5Signature, DENSE_EIG_LIMIT,
};
use wilson_bamg::smoother::{
    kaczmarz_eig_sweep, kaczmarz_sweeps, kaczmarz_update, residual, ritz_value, KaczmarzWorkspace, SweepOrder,
};
use wilson_bamg::sparse::SparseComplexOperator;
use wilson_bamg::transfer::LevelGeometry;
use wilson_bamg::vector::{dotc, norm, random_normal, rel_diff, sub, C64};

use super::{
    exact_plaquette, free_field_spectrum, multiset_distance, normal_equation_gauss_seidel, random_config, random_dense,
    rng, toy_hierarchy,
};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(id: &'static str, pass: bool, detail: String) -> Self {
        Self { id, pass, detail }
    }
}

pub fn a1_gamma5_symmetry() -> Outcome {
    let mut worst_d: f64 = 0.0;
    let mut worst_h: f64 = 0.0;
    for n in [8, 16, 32] {
        for k in 0..20 {
            let cfg = random_config(n, 1.0, 100 * n as u64 + k);
            let m = -0.5 + 0.05 * k as f64;
            let d = assemble_wilson(&cfg, m);
            let sig = Gamma5Signature::for_variables(d.nrows()).unwrap();
            worst_d = worst_d.max(gamma5_defect(&d, &sig) / d.frobenius_norm());
            let sys = odd_even_reduce(&d, cfg.dims()).unwrap();
            worst_h = worst_h.max(gamma5_defect(&sys.dhat, &sys.gamma_e()) / sys.dhat.frobenius_norm());
        }
    }
    Outcome::new(
        "A1",
        worst_d <= 1e-13 && worst_h <= 1e-13,
        format!("max relative defect D {worst_d:.2e}, Dhat {worst_h:.2e} (60 configs)"),
    )
}

pub fn a2_free_field() -> Outcome {
    let dims = LatticeDims::new(8).unwrap();
    let cold = GaugeConfiguration::cold(dims, 1.0);
    let mut worst: f64 = 0.0;
    for m in [0.0, 0.3, 1.0] {
        let ev = dense_eigenvalues(&assemble_wilson(&cold, m), DENSE_EIG_LIMIT).unwrap();
        worst = worst.max(multiset_distance(&free_field_spectrum(8, m), &ev));
    }
    Outcome::new("A2", worst <= 1e-10, format!("max eigenvalue deviation {worst:.2e}"))
}

pub fn a3_block_form() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 0..5 {
        let cfg = random_config(8, 2.0, 300 + k);
        let m = 0.1 * k as f64 - 0.2;
        let d = assemble_wilson(&cfg, m);
        let (a, b) = block_spin_form(&cfg, m);
        let diff = d.permute(&spin_permutation(64)).add_scaled(C64::new(-1.0, 0.0), &block_form_matrix(&a, &b));
        worst = worst.max(diff.values().iter().map(|v| v.norm()).fold(0.0, f64::max));
    }
    Outcome::new("A3", worst <= 1e-15, format!("max entry difference {worst:.2e}"))
}

pub fn a4_schur_equivalence() -> Outcome {
    let cfg = random_config(8, 2.0, 400);
    let d = assemble_wilson(&cfg, 0.1);
    let sys = odd_even_reduce(&d, cfg.dims()).unwrap();
    let dd = DenseComplexMatrix::from_sparse(&d);
    let dh = DenseComplexMatrix::from_sparse(&sys.dhat);
    let mut r = rng(401);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let b = random_normal(d.nrows(), &mut r);
        let direct = lu_solve(&dd, &b).unwrap();
        let psi_e = lu_solve(&dh, &sys.reduce_rhs(&b)).unwrap();
        worst = worst.max(rel_diff(&sys.reconstruct(&psi_e, &b), &direct));
    }
    Outcome::new("A4", worst <= 1e-10, format!("max relative difference {worst:.2e}"))
}

fn dense(op: &SparseComplexOperator) -> DenseComplexMatrix {
    DenseComplexMatrix::from_sparse(op)
}

/// Product of all interpolation operators down to level `to`.
pub fn composite_p(h: &Hierarchy, to: usize) -> SparseComplexOperator {
    let mut p = SparseComplexOperator::identity(h.level(0).z.nrows());
    for l in 0..to {
        p = p.matmul(h.level(l).p().expect("interpolation"));
    }
    p
}

/// Coarsest-level generalized eigenpairs of `(Z_L, T_L)` against the
/// singular triplets of the doubled pencil `[[0, D_L], [D_L^H, 0]]`,
/// `diag(Q_L, T_L)` with `Q_L = R R^H`, `R = (Gamma5 P)^H` and the
/// gamma5-symmetric coarse operator `D_L = P^H D P`. Returns the worst
/// singular-value deviation, the worst triplet residual and the worst
/// distance between oracle singular vectors and `(sign(lambda) Gamma5 v, v)`
/// over simple singular values.
pub fn coarsest_triplets(h: &Hierarchy, k: usize) -> (f64, f64, f64) {
    let last = h.num_levels() - 1;
    let p = composite_p(h, last);
    let g0 = &h.level(0).gamma5;
    let gl = &h.level(last).gamma5;
    let rh = p.scale_rows(g0.signs());
    let dl = dense(&p.adjoint().matmul(&h.level(0).d()).matmul(&p));
    let q = dense(&rh.adjoint().matmul(&rh));
    let t = dense(&p.adjoint().matmul(&p));
    let nc = dl.nrows();
    let dlh = dl.adjoint();
    let big = DenseComplexMatrix::from_fn(2 * nc, 2 * nc, |i, j| match (i < nc, j < nc) {
        (true, false) => dl[(i, j - nc)],
        (false, true) => dlh[(i - nc, j)],
        _ => C64::new(0.0, 0.0),
    });
    let mass = DenseComplexMatrix::from_fn(2 * nc, 2 * nc, |i, j| match (i < nc, j < nc) {
        (true, true) => q[(i, j)],
        (false, false) => t[(i - nc, j - nc)],
        _ => C64::new(0.0, 0.0),
    });
    let (mu, w) = generalized_hermitian_eig(&big, &mass, 2 * k + 2).unwrap();
    let mut oracle: Vec<(f64, Vec<C64>, Vec<C64>)> = mu
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(j, &x)| (x, w.column(j)[..nc].to_vec(), w.column(j)[nc..].to_vec()))
        .collect();
    oracle.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (lam, v) = generalized_hermitian_eig(&dense(&h.level(last).z), &dense(&h.level(last).t), k).unwrap();
    let sv_dev = lam.iter().zip(&oracle).map(|(l, o)| (l.abs() - o.0).abs()).fold(0.0, f64::max);
    let mut trip_dev: f64 = 0.0;
    let mut vec_dev: f64 = 0.0;
    for (j, &l) in lam.iter().enumerate() {
        let vj = v.column(j);
        let u: Vec<C64> = gl.apply(vj).into_iter().map(|x| x * l.signum()).collect();
        let s = l.abs();
        let lhs1 = dl.matvec(vj);
        let rhs1: Vec<C64> = q.matvec(&u).into_iter().map(|x| x * s).collect();
        let lhs2 = dlh.matvec(&u);
        let rhs2: Vec<C64> = t.matvec(vj).into_iter().map(|x| x * s).collect();
        let scale = norm(vj);
        trip_dev = trip_dev.max(norm(&sub(&lhs1, &rhs1)) / scale).max(norm(&sub(&lhs2, &rhs2)) / scale);
        let simple = lam
            .iter()
            .enumerate()
            .all(|(i, o)| i == j || (o.abs() - s).abs() > 1e-6 * s.max(1e-12));
        if simple && j + 1 < lam.len() {
            let (_, ou, ov) = oracle.iter().min_by(|a, b| (a.0 - s).abs().total_cmp(&(b.0 - s).abs())).unwrap();
            let alpha = dotc(ov, vj) / dotc(ov, ov);
            let dv = norm(&sub(&ov.iter().map(|x| x * alpha).collect::<Vec<_>>(), vj)) / scale;
            let du = norm(&sub(&ou.iter().map(|x| x * alpha).collect::<Vec<_>>(), &u)) / scale;
            vec_dev = vec_dev.max(dv).max(du);
        }
    }
    (sv_dev, trip_dev, vec_dev)
}

/// Eigen-sweeps on level 1 in the `Z` form against Kaczmarz on
/// `D_1 v = sigma Q_1 u` with `u = sign(lambda) Gamma5 v`, both with the
/// Ritz value refreshed after each sweep. Returns the worst elementwise
/// difference over `sweeps` sweeps.
pub fn eigen_sweep_forms(h: &Hierarchy, sweeps: usize, seed: u64) -> f64 {
    let lev = h.level(1);
    let p = h.level(0).p().unwrap();
    let rh = p.scale_rows(h.level(0).gamma5.signs());
    let q = rh.adjoint().matmul(&rh);
    let d1 = lev.d();
    let ws_z = KaczmarzWorkspace::new(&lev.z, SweepOrder::Forward).unwrap();
    let ws_d = KaczmarzWorkspace::new(&d1, SweepOrder::Forward).unwrap();
    let mut vz = random_normal(lev.z.nrows(), &mut rng(seed));
    let mut vd = vz.clone();
    let mut lz = ritz_value(&lev.z, &lev.t, &vz).unwrap();
    let mut ld = lz;
    let mut worst: f64 = 0.0;
    for _ in 0..sweeps {
        kaczmarz_eig_sweep(&lev.z, &lev.t, &mut vz, lz, &ws_z).unwrap();
        lz = ritz_value(&lev.z, &lev.t, &vz).unwrap();
        let u: Vec<C64> = lev.gamma5.apply(&vd).into_iter().map(|x| x * ld.signum()).collect();
        let b: Vec<C64> = q.matvec(&u).into_iter().map(|x| x * ld.abs()).collect();
        kaczmarz_sweeps(&d1, &mut vd, &b, &ws_d, 1).unwrap();
        ld = ritz_value(&lev.z, &lev.t, &vd).unwrap();
        worst = worst.max(vz.iter().zip(&vd).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
    }
    worst
}

/// `P D_c^{-1} R x` with `R = (Gamma5 P)^H` against
/// `P (P^H Z P)^{-1} P^H Gamma5 x`. Returns the worst relative difference.
pub fn correction_forms(h: &Hierarchy, vectors: usize, seed: u64) -> f64 {
    let p = h.level(0).p().unwrap();
    let g = &h.level(0).gamma5;
    let rh = p.scale_rows(g.signs());
    let r = rh.adjoint();
    let dc = LuFactorization::new(&dense(&r.matmul(&h.level(0).d()).matmul(p))).unwrap();
    let zc = LuFactorization::new(&dense(&p.adjoint().matmul(&h.level(0).z).matmul(p))).unwrap();
    let mut rg = rng(seed);
    (0..vectors)
        .map(|_| {
            let x = random_normal(p.nrows(), &mut rg);
            let pg = p.matvec(&dc.solve(&r.matvec(&x)));
            let gal = p.matvec(&zc.solve(&p.matvec_adjoint(&g.apply(&x))));
            rel_diff(&pg, &gal)
        })
        .fold(0.0, f64::max)
}

pub fn a5_galerkin_theorem() -> Outcome {
    let h3 = toy_hierarchy(16, 4, 2.0, 0.05, 501);
    let (sv, trip, vecs) = coarsest_triplets(&h3, 6);
    let h2 = toy_hierarchy(8, 4, 2.0, 0.05, 502);
    let sweeps = eigen_sweep_forms(&h2, 8, 503);
    let corr = correction_forms(&h2, 10, 504);
    Outcome::new(
        "A5",
        sv <= 1e-10 && trip <= 1e-10 && vecs <= 1e-10 && sweeps <= 1e-12 && corr <= 1e-10,
        format!(
            "(i) sigma vs |lambda| {sv:.2e}, triplet residual {trip:.2e}, singular vectors {vecs:.2e}; (ii) Z vs D sweeps {sweeps:.2e}; \
             (iii) correction {corr:.2e}"
        ),
    )
}

/// Largest `|<b - A x, A e_i>|` relative to `||A e_i|| ||b||` right after each
/// update of a few sweeps.
pub fn annihilation_defect(a: &SparseComplexOperator, b: &[C64], sweeps: usize) -> f64 {
    let ws = KaczmarzWorkspace::new(a, SweepOrder::Forward).unwrap();
    let mut x = vec![C64::new(0.0, 0.0); a.ncols()];
    let mut r = residual(a, &x, b);
    let bn = norm(b);
    let mut worst: f64 = 0.0;
    for _ in 0..sweeps {
        for &i in ws.order() {
            kaczmarz_update(a, &mut x, &mut r, i, &ws);
            let (rows, vals) = a.columns().column(i);
            let dot: C64 = rows.iter().zip(vals).map(|(&k, v)| v.conj() * r[k]).sum();
            worst = worst.max(dot.norm() / (ws.column_norms()[i].sqrt() * bn));
        }
    }
    worst
}

pub fn a10_kaczmarz() -> Outcome {
    let mut ann: f64 = 0.0;
    let mut gs: f64 = 0.0;
    for (k, dim) in [4usize, 9, 16].into_iter().enumerate() {
        let a = random_dense(dim, 1.0, 1000 + k as u64);
        let sa = SparseComplexOperator::from_triplets(
            dim,
            dim,
            (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).map(|(i, j)| (i, j, a[(i, j)])).collect(),
        );
        let b = random_normal(dim, &mut rng(2000 + k as u64));
        ann = ann.max(annihilation_defect(&sa, &b, 3));
        let ws = KaczmarzWorkspace::new(&sa, SweepOrder::Forward).unwrap();
        let mut xk = random_normal(dim, &mut rng(3000 + k as u64));
        let mut xg = xk.clone();
        for _ in 0..3 {
            kaczmarz_sweeps(&sa, &mut xk, &b, &ws, 1).unwrap();
            normal_equation_gauss_seidel(&a, &mut xg, &b);
            gs = gs.max(xk.iter().zip(&xg).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max));
        }
    }
    let cfg = random_config(8, 2.0, 1001);
    let d = assemble_wilson(&cfg, 0.2);
    let b = random_normal(d.nrows(), &mut rng(1002));
    ann = ann.max(annihilation_defect(&d, &b, 2));
    Outcome::new(
        "A10",
        ann <= 1e-12 && gs <= 1e-12,
        format!("annihilation {ann:.2e}, Gauss-Seidel difference {gs:.2e}"),
    )
}

/// Mean plaquette of a cold-start chain after `therm` sweeps, averaged over
/// `measure` further sweeps.
pub fn measured_plaquette(n: usize, beta: f64, seed: u64, therm: u64, measure: u64) -> f64 {
    let dims = LatticeDims::new(n).unwrap();
    let mut chain = MetropolisChain::new(GaugeConfiguration::cold(dims, beta), seed, 1.0).unwrap();
    chain.sweep(therm);
    let mut acc = 0.0;
    for _ in 0..measure {
        chain.sweep(1);
        acc += chain.config().mean_plaquette();
    }
    acc / measure as f64
}

pub fn a11_plaquette() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (k, beta) in [3.0, 6.0, 10.0].into_iter().enumerate() {
        let got = measured_plaquette(16, beta, 1100 + k as u64, 1000, 4000);
        let want = exact_plaquette(beta);
        worst = worst.max((got - want).abs());
        parts.push(format!("beta {beta}: {got:.4} vs {want:.4}"));
    }
    Outcome::new("A11", worst <= 0.02, format!("{} (max deviation {worst:.4})", parts.join(", ")))
}

pub fn desk_config(dir: &Path, n: usize, betas: Vec<f64>) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        n,
        betas,
        ..Default::default()
    };
    c.ensemble.dir = dir.to_path_buf();
    c.output = dir.join("unused.csv");
    c
}

pub fn a6_complexities(dir: &Path) -> Outcome {
    let cfg = desk_config(dir, 64, vec![3.0, 6.0, 10.0]);
    let members = match harness::load_members(&cfg, false) {
        Ok(m) => m,
        Err(e) => return Outcome::new("A6", false, format!("ensemble: {e}")),
    };
    let (mut gc, mut oc, mut nnz) = (0.0f64, 0.0f64, 0usize);
    let mut failures = Vec::new();
    for mb in &members {
        let sys = odd_even_reduce(&assemble_wilson(&mb.cfg, 0.0), mb.cfg.dims()).unwrap();
        let params = CycleParams {
            seed: mb.id,
            ..Default::default()
        };
        match build_hierarchy(sys.z(), LevelGeometry::new(64).unwrap(), &params) {
            Ok(h) => {
                gc = gc.max(h.grid_complexity());
                oc = oc.max(h.operator_complexity());
                nnz = nnz.max((1..h.num_levels()).map(|l| h.level(l).z.max_row_nnz()).max().unwrap_or(0));
            }
            Err(e) => failures.push(format!("beta {} cfg {}: {e}", mb.beta, mb.id)),
        }
    }
    Outcome::new(
        "A6",
        failures.is_empty() && gc <= 1.4 && oc <= 1.4 && nnz <= 18,
        format!(
            "{} hierarchies at m = 0: max grid complexity {gc:.4}, operator complexity {oc:.4}, coarse nnz/row {nnz}{}",
            members.len() - failures.len(),
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join("; ")) }
        ),
    )
}

/// Members of the `n = 64`, `beta = 6` ensemble with `eta_min(D(0))`.
pub fn desk_members(dir: &Path) -> wilson_bamg::Result<(ExperimentConfig, Vec<Member>)> {
    let mut cfg = desk_config(dir, 64, vec![6.0]);
    cfg.solvers = vec![SolverKind::Bamg, SolverKind::BamgGmres32];
    cfg.schedules = vec![SetupSchedule::W];
    let members = harness::load_members(&cfg, true)?;
    Ok((cfg, members))
}

pub fn a7_solver_quality(cfg: &ExperimentConfig, members: &[Member]) -> (Outcome, Vec<ExperimentRecord>) {
    let t = Instant::now();
    let points: Vec<Point> = cfg.eta_targets.iter().map(|&e| Point::EtaTarget(e)).collect();
    let rows = match harness::run_members(cfg, members, &points) {
        Ok(r) => r,
        Err(e) => return (Outcome::new("A7", false, format!("sweep failed: {e}")), Vec::new()),
    };
    let secs = t.elapsed().as_secs_f64();
    let mut ok = true;
    let mut worst_count = usize::MAX;
    let mut worst_rho: f64 = 0.0;
    for &target in &cfg.eta_targets {
        let at: Vec<&ExperimentRecord> = rows.iter().filter(|r| r.eta_target == Some(target) && r.solver == "bamg").collect();
        let good = at.iter().filter(|r| !r.failed && r.rho.is_some_and(|x| x <= 0.7)).count();
        worst_count = worst_count.min(good);
        worst_rho = at.iter().filter_map(|r| r.rho).fold(worst_rho, f64::max);
        ok &= at.len() == members.len() && good >= 7;
    }
    let gm: Vec<&ExperimentRecord> = rows.iter().filter(|r| r.solver == "bamg-gmres32").collect();
    let gmres_ok = gm.len() == members.len() * cfg.eta_targets.len()
        && gm.iter().all(|r| !r.failed && r.converged && r.iterations <= 40 && r.restarts == 0);
    let max_it = gm.iter().map(|r| r.iterations).max().unwrap_or(0);
    let failed = rows.iter().filter(|r| r.failed).count();
    (
        Outcome::new(
            "A7",
            ok && gmres_ok && secs <= 900.0,
            format!(
                "min configs with rho <= 0.7 per shift {worst_count}/9 (max rho {worst_rho:.3}); \
                 BAMG-GMRES(32) max iterations {max_it}, restarts {}; failed rows {failed}; {secs:.0} s",
                gm.iter().map(|r| r.restarts).sum::<usize>()
            ),
        ),
        rows,
    )
}

fn mean_rho(rows: &[ExperimentRecord], setup: &str, target: f64) -> (f64, usize) {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.solver == "bamg" && r.setup == setup && r.eta_target == Some(target))
        .filter_map(|r| r.rho)
        .collect();
    (v.iter().sum::<f64>() / v.len().max(1) as f64, v.len())
}

pub fn a9_schedules(cfg: &ExperimentConfig, members: &[Member], a7_rows: &[ExperimentRecord]) -> Outcome {
    let target = cfg.eta_targets.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sv = cfg.clone();
    sv.solvers = vec![SolverKind::Bamg];
    sv.schedules = vec![SetupSchedule::SuperV];
    let rows = match harness::run_members(&sv, members, &[Point::EtaTarget(target)]) {
        Ok(r) => r,
        Err(e) => return Outcome::new("A9", false, format!("super-V run failed: {e}")),
    };
    let (w, nw) = mean_rho(a7_rows, "w", target);
    let (s, ns) = mean_rho(&rows, "super-v", target);
    Outcome::new(
        "A9",
        nw == members.len() && ns == members.len() && w <= s,
        format!("eta = {target:e}: mean rho W {w:.4} ({nw} configs), super-V {s:.4} ({ns} configs)"),
    )
}

pub fn a8_odd_even(dir: &Path) -> Outcome {
    let mut cfg = desk_config(dir, 32, vec![6.0]);
    cfg.solvers = vec![SolverKind::Cgnr, SolverKind::CgnrFull];
    let rows = match harness::cmd_sweep(&ExperimentConfig {
        output: dir.join("a8.csv"),
        ..cfg.clone()
    }) {
        Ok(r) => r,
        Err(e) => return Outcome::new("A8", false, format!("sweep failed: {e}")),
    };
    let mut worst: f64 = 0.0;
    let (mut tot_r, mut tot_f) = (0.0, 0.0);
    for &t in &cfg.eta_targets {
        let mean = |s: &str| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.solver == s && r.eta_target == Some(t))
                .map(|r| r.iterations as f64)
                .collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        };
        let (r, f) = (mean("cgnr"), mean("cgnr-full"));
        tot_r += r;
        tot_f += f;
        worst = worst.max(r / f);
    }
    let unconverged = rows.iter().filter(|r| !r.converged).count();
    Outcome::new(
        "A8",
        worst <= 0.6 && rows.iter().all(|r| !r.failed),
        format!(
            "worst per-shift ratio {worst:.3}, overall {:.3} ({} shifts x 9 configs, {unconverged} runs at the cap)",
            tot_r / tot_f,
            cfg.eta_targets.len()
        ),
    )
}
