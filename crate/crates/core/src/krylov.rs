//! CGNR, restarted GMRES and the multigrid preconditioner.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mg::{solve_cycle, Hierarchy};
use crate::operator::Gamma5Signature;
use crate::sparse::SparseComplexOperator;
use crate::vector::{axpy, dotc, norm, norm_sqr, rel_diff, scale, sub, C64, ONE, ZERO};

/// Iteration cap for CGNR.
pub const CGNR_MAX_ITER: usize = 4096;

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    pub relative_residual: f64,
    pub relative_error: Option<f64>,
    /// Relative residual before the first and after every iteration.
    pub residual_history: Vec<f64>,
    pub restarts: usize,
    /// A full restart cycle without residual decrease.
    pub stagnated: bool,
}

impl SolveReport {
    fn new(history: Vec<f64>, iterations: usize, converged: bool) -> Self {
        Self {
            iterations,
            converged,
            relative_residual: *history.last().unwrap_or(&0.0),
            relative_error: None,
            residual_history: history,
            restarts: 0,
            stagnated: false,
        }
    }

    pub fn with_error(mut self, x: &[C64], x_true: &[C64]) -> Self {
        self.relative_error = Some(rel_diff(x, x_true));
        self
    }
}

fn check_rhs(op: &SparseComplexOperator, b: &[C64]) -> Result<()> {
    if b.len() != op.nrows() {
        return Err(Error::DimensionMismatch {
            expected: op.nrows(),
            actual: b.len(),
        });
    }
    Ok(())
}

/// Conjugate gradients on `A^H A x = A^H b`, stopping on the true relative
/// residual `||b - A x|| / ||b||`, which is updated recursively.
pub fn cgnr(op: &SparseComplexOperator, b: &[C64], tol: f64, max_iter: usize) -> Result<(Vec<C64>, SolveReport)> {
    check_rhs(op, b)?;
    let mut x = vec![ZERO; op.ncols()];
    let bn = norm(b);
    if bn == 0.0 {
        return Ok((x, SolveReport::new(vec![0.0], 0, true)));
    }
    let mut r = b.to_vec();
    let mut s = op.matvec_adjoint(&r);
    let mut p = s.clone();
    let mut gamma = norm_sqr(&s);
    let mut history = vec![1.0];
    let mut q = vec![ZERO; op.nrows()];
    for k in 1..=max_iter {
        op.matvec_into(&p, &mut q);
        let qq = norm_sqr(&q);
        if !(qq > 0.0) {
            return Err(Error::Breakdown(format!("CGNR: zero curvature at iteration {k}")));
        }
        let alpha = C64::new(gamma / qq, 0.0);
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        let rel = norm(&r) / bn;
        history.push(rel);
        if rel <= tol {
            return Ok((x, SolveReport::new(history, k, true)));
        }
        s = op.matvec_adjoint(&r);
        let gamma_new = norm_sqr(&s);
        let beta = C64::new(gamma_new / gamma, 0.0);
        gamma = gamma_new;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
    }
    Ok((x, SolveReport::new(history, max_iter, false)))
}

/// A fixed linear map applied to residuals inside GMRES.
pub trait Preconditioner {
    fn apply(&self, r: &[C64]) -> Result<Vec<C64>>;
}

/// One solve cycle for the Hermitian form, started from zero: for the
/// reduced operator `Dhat` with `Z = Gamma_e Dhat` this approximates
/// `Dhat^{-1} r = Z^{-1} Gamma_e r`.
pub struct MultigridPreconditioner<'a> {
    pub hierarchy: &'a Hierarchy,
    pub gamma5: Gamma5Signature,
    pub nu_pre: usize,
    pub nu_post: usize,
    pub gamma: usize,
}

impl<'a> MultigridPreconditioner<'a> {
    /// Uses the solve-cycle parameters stored in the hierarchy.
    pub fn new(hierarchy: &'a Hierarchy) -> Self {
        let p = hierarchy.params();
        Self {
            gamma5: hierarchy.level(0).gamma5.clone(),
            nu_pre: p.nu_pre,
            nu_post: p.nu_post,
            gamma: p.gamma,
            hierarchy,
        }
    }
}

impl Preconditioner for MultigridPreconditioner<'_> {
    fn apply(&self, r: &[C64]) -> Result<Vec<C64>> {
        let b = self.gamma5.apply(r);
        let mut x = vec![ZERO; b.len()];
        solve_cycle(self.hierarchy, 0, &mut x, &b, self.nu_pre, self.nu_post, self.gamma)?;
        Ok(x)
    }
}

fn givens(a: C64, b: C64) -> (f64, C64, C64) {
    // Returns (c, s, r) with [c s; -conj(s) c] [a; b] = [r; 0].
    let an = a.norm();
    let bn = b.norm();
    if bn == 0.0 {
        return (1.0, ZERO, a);
    }
    if an == 0.0 {
        return (0.0, (b / bn).conj(), C64::new(bn, 0.0));
    }
    let nrm = an.hypot(bn);
    let phase = a / an;
    let c = an / nrm;
    let s = phase * b.conj() / nrm;
    (c, s, phase * nrm)
}

/// Right-preconditioned GMRES(m) with modified Gram-Schmidt and one
/// reorthogonalisation pass. `max_iter` bounds the total number of inner
/// iterations; the stopping test uses the unpreconditioned residual.
pub fn gmres_restarted(
    op: &SparseComplexOperator,
    b: &[C64],
    restart: usize,
    tol: f64,
    max_iter: usize,
    preconditioner: Option<&dyn Preconditioner>,
) -> Result<(Vec<C64>, SolveReport)> {
    check_rhs(op, b)?;
    if restart == 0 {
        return Err(Error::InvalidArgument("GMRES restart length must be positive".into()));
    }
    let n = op.ncols();
    let mut x = vec![ZERO; n];
    let bn = norm(b);
    if bn == 0.0 {
        return Ok((x, SolveReport::new(vec![0.0], 0, true)));
    }
    let precond = |v: &[C64]| -> Result<Vec<C64>> {
        match preconditioner {
            Some(m) => m.apply(v),
            None => Ok(v.to_vec()),
        }
    };
    let mut history = vec![1.0];
    let mut total = 0;
    let mut restarts = 0;
    let mut stagnated = false;
    loop {
        let r0 = sub(b, &op.matvec(&x));
        let beta = norm(&r0);
        if beta / bn <= tol {
            *history.last_mut().unwrap() = beta / bn;
            break;
        }
        let start_res = beta;
        let mut v0 = r0;
        scale(C64::new(1.0 / beta, 0.0), &mut v0);
        let mut basis: Vec<Vec<C64>> = vec![v0];
        let mut hcols: Vec<Vec<C64>> = Vec::new();
        let mut rot: Vec<(f64, C64)> = Vec::new();
        let mut g = vec![C64::new(beta, 0.0)];
        let mut res = beta;
        while hcols.len() < restart && total < max_iter {
            let j = hcols.len();
            let mut w = op.matvec(&precond(&basis[j])?);
            let mut h = vec![ZERO; j + 2];
            for _pass in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dotc(v, &w);
                    h[i] += c;
                    axpy(-c, v, &mut w);
                }
            }
            let wn = norm(&w);
            h[j + 1] = C64::new(wn, 0.0);
            for (i, &(c, s)) in rot.iter().enumerate() {
                let (a, bb) = (h[i], h[i + 1]);
                h[i] = c * a + s * bb;
                h[i + 1] = -s.conj() * a + c * bb;
            }
            let (c, s, r) = givens(h[j], h[j + 1]);
            h[j] = r;
            h[j + 1] = ZERO;
            rot.push((c, s));
            let gj = g[j];
            g[j] = c * gj;
            g.push(-s.conj() * gj);
            hcols.push(h);
            total += 1;
            res = g[j + 1].norm();
            history.push(res / bn);
            if res / bn <= tol || wn <= f64::EPSILON * beta {
                break;
            }
            scale(C64::new(1.0 / wn, 0.0), &mut w);
            basis.push(w);
        }
        let k = hcols.len();
        let mut y = vec![ZERO; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for (l, yl) in y.iter().enumerate().skip(i + 1) {
                acc -= hcols[l][i] * yl;
            }
            y[i] = acc / hcols[i][i];
        }
        let mut u = vec![ZERO; n];
        for (v, yi) in basis.iter().zip(&y) {
            axpy(*yi, v, &mut u);
        }
        axpy(ONE, &precond(&u)?, &mut x);
        let true_res = norm(&sub(b, &op.matvec(&x))) / bn;
        *history.last_mut().unwrap() = true_res;
        if true_res <= tol || total >= max_iter {
            break;
        }
        if !(res < start_res) {
            stagnated = true;
            break;
        }
        restarts += 1;
    }
    let rel = *history.last().unwrap();
    let mut report = SolveReport::new(history, total, rel <= tol);
    report.restarts = restarts;
    report.stagnated = stagnated;
    Ok((x, report))
}

/// Final relative residual and relative error for one shift.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorResidualRow {
    pub m: f64,
    pub iterations: usize,
    pub relative_residual: f64,
    pub relative_error: f64,
}

/// Runs `solver(m, op, b)` on manufactured systems `b = op(m) x_true` for
/// every shift.
pub fn error_vs_residual_study<F, S>(
    mut build: F,
    mut solver: S,
    shifts: &[f64],
    x_true: &[C64],
) -> Result<Vec<ErrorResidualRow>>
where
    F: FnMut(f64) -> Result<SparseComplexOperator>,
    S: FnMut(&SparseComplexOperator, &[C64]) -> Result<(Vec<C64>, SolveReport)>,
{
    shifts
        .iter()
        .map(|&m| {
            let op = build(m)?;
            let b = op.matvec(x_true);
            let (x, rep) = solver(&op, &b)?;
            let r = norm(&sub(&b, &op.matvec(&x))) / norm(&b).max(f64::MIN_POSITIVE);
            Ok(ErrorResidualRow {
                m,
                iterations: rep.iterations,
                relative_residual: r,
                relative_error: rel_diff(&x, x_true),
            })
        })
        .collect()
}
