//! The multigrid solve cycle and the stationary iteration built on it.

use serde::Serialize;

use super::Hierarchy;
use crate::error::{Error, Result};
use crate::smoother::{kaczmarz_sweeps, residual};
use crate::vector::{axpy, norm, sub, C64, ONE, ZERO};

/// One cycle for `Z_l x = b` on level `l`, updating `x` in place. The
/// coarsest level is solved directly.
pub fn solve_cycle(
    h: &Hierarchy,
    l: usize,
    x: &mut [C64],
    b: &[C64],
    nu_pre: usize,
    nu_post: usize,
    gamma: usize,
) -> Result<()> {
    let last = h.levels.len() - 1;
    if l == last {
        x.copy_from_slice(&h.coarse_lu.solve(b));
        return Ok(());
    }
    let lev = &h.levels[l];
    let p = lev
        .p()
        .ok_or_else(|| Error::InvalidArgument(format!("level {l} has no interpolation")))?;
    let r = kaczmarz_sweeps(&lev.z, x, b, &lev.ws, nu_pre)?;
    let rc = p.matvec_adjoint(&r);
    let ec = if l + 1 == last {
        h.coarse_lu.solve(&rc)
    } else {
        let mut ec = vec![ZERO; rc.len()];
        for _ in 0..gamma {
            solve_cycle(h, l + 1, &mut ec, &rc, nu_pre, nu_post, gamma)?;
        }
        ec
    };
    axpy(ONE, &p.matvec(&ec), x);
    kaczmarz_sweeps(&lev.z, x, b, &lev.ws, nu_post)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoSource {
    Error,
    Residual,
    None,
}

#[derive(Debug, Clone, Serialize)]
pub struct MgReport {
    pub iterations: usize,
    pub converged: bool,
    /// Asymptotic convergence factor taken from errors when the exact
    /// solution is known, from residuals otherwise.
    pub rho: f64,
    pub rho_source: RhoSource,
    pub rho_residual: f64,
    pub rho_error: Option<f64>,
    pub relative_residual: f64,
    pub relative_error: Option<f64>,
    pub residual_history: Vec<f64>,
    pub error_history: Vec<f64>,
}

fn last_ratio(history: &[f64]) -> f64 {
    match history {
        [.., a, b] if *a > 0.0 => b / a,
        _ => f64::NAN,
    }
}

/// Iterates solve cycles on level 0 until `||b - Z x|| <= tol ||b||` or
/// `max_iter` cycles. Aborts when the residual grows tenfold.
pub fn mg_solve(
    h: &Hierarchy,
    b: &[C64],
    x0: Option<&[C64]>,
    tol: f64,
    max_iter: usize,
    x_true: Option<&[C64]>,
) -> Result<(Vec<C64>, MgReport)> {
    let z = &h.levels[0].z;
    if b.len() != z.nrows() {
        return Err(Error::DimensionMismatch {
            expected: z.nrows(),
            actual: b.len(),
        });
    }
    let mut x = x0.map_or_else(|| vec![ZERO; b.len()], <[C64]>::to_vec);
    let r0 = norm(&residual(z, &x, b));
    let scale = match norm(b) {
        s if s > 0.0 => s,
        _ if r0 > 0.0 => r0,
        _ => 1.0,
    };
    let err_of = |x: &[C64]| x_true.map(|t| norm(&sub(x, t)));
    let true_norm = x_true.map(|t| norm(t)).filter(|&n| n > 0.0).unwrap_or(1.0);
    let mut residual_history = vec![r0];
    let mut error_history: Vec<f64> = err_of(&x).into_iter().collect();
    let p = &h.params;
    let mut converged = r0 <= tol * scale;
    let mut iterations = 0;
    while !converged && iterations < max_iter {
        solve_cycle(h, 0, &mut x, b, p.nu_pre, p.nu_post, p.gamma)?;
        iterations += 1;
        let rk = norm(&residual(z, &x, b));
        if !rk.is_finite() || rk > 10.0 * r0 {
            return Err(Error::Diverged { initial: r0, current: rk });
        }
        residual_history.push(rk);
        error_history.extend(err_of(&x));
        converged = rk <= tol * scale;
    }
    let rho_residual = last_ratio(&residual_history);
    let rho_error = x_true.map(|_| last_ratio(&error_history));
    let (rho, rho_source) = match rho_error {
        Some(r) if r.is_finite() => (r, RhoSource::Error),
        _ if rho_residual.is_finite() => (rho_residual, RhoSource::Residual),
        _ => (f64::NAN, RhoSource::None),
    };
    let report = MgReport {
        iterations,
        converged,
        rho,
        rho_source,
        rho_residual,
        rho_error,
        relative_residual: residual_history.last().copied().unwrap_or(0.0) / scale,
        relative_error: error_history.last().map(|e| e / true_norm),
        residual_history,
        error_history,
    };
    Ok((x, report))
}
