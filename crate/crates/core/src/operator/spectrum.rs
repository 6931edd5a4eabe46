//! Nonsymmetric spectra of `D`: a dense Schur path for small operators and a
//! Krylov-Schur iteration for the leftmost eigenvalue of large ones.

use nalgebra::{DMatrix, Schur};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::OddEvenSystem;
use crate::error::{Error, Result};
use crate::sparse::SparseComplexOperator;
use crate::vector::{axpy, dotc, norm, random_normal, C64, ZERO};

/// Size guard for dense nonsymmetric eigendecompositions.
pub const DENSE_EIG_LIMIT: usize = 8192;

/// All eigenvalues of a square sparse operator via a dense complex Schur
/// decomposition, sorted by real part then imaginary part.
pub fn dense_eigenvalues(op: &SparseComplexOperator, limit: usize) -> Result<Vec<C64>> {
    let n = op.nrows();
    if n > limit {
        return Err(Error::SizeGuard { size: n, limit });
    }
    let mut m = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        let (c, v) = op.row(i);
        for (&j, &x) in c.iter().zip(v) {
            m[(i, j)] = x;
        }
    }
    let ev = Schur::new(m)
        .eigenvalues()
        .ok_or_else(|| Error::NoConvergence("dense Schur form is not triangular".into()))?;
    let mut ev: Vec<C64> = ev.iter().copied().collect();
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

/// Full spectrum of `D` from the reduced operator. With `D / c` in block form
/// `[[I, A], [B, I]]` and `Dhat = I - A B`, every eigenvalue `mu` of `Dhat`
/// gives the pair `c (1 +- sqrt(1 - mu))`, so only a half-size dense problem
/// is solved.
pub fn spectrum_from_reduced(sys: &OddEvenSystem, limit: usize) -> Result<Vec<C64>> {
    let mu = dense_eigenvalues(&sys.dhat, limit)?;
    let one = C64::new(1.0, 0.0);
    let mut ev: Vec<C64> = mu
        .iter()
        .flat_map(|&m| {
            let r = (one - m).sqrt();
            [(one - r) * sys.scale, (one + r) * sys.scale]
        })
        .collect();
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

/// `min Re(lambda)` over the spectrum, computed densely.
pub fn eta_min_dense(op: &SparseComplexOperator) -> Result<f64> {
    let ev = dense_eigenvalues(op, DENSE_EIG_LIMIT)?;
    Ok(ev.first().map(|z| z.re).unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KrylovSchurParams {
    /// Maximal basis size.
    pub subspace: usize,
    /// Ritz vectors kept at each restart.
    pub keep: usize,
    /// Residual tolerance relative to `max(1, |lambda|)`.
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for KrylovSchurParams {
    fn default() -> Self {
        Self {
            subspace: 64,
            keep: 24,
            tol: 1e-10,
            max_restarts: 3000,
            seed: 0x5eed,
        }
    }
}

// (cs, sn, r) with [cs sn; -conj(sn) cs] [f; g] = [r; 0].
fn lartg(f: C64, g: C64) -> (f64, C64, C64) {
    let g2 = g.norm_sqr();
    if g2 == 0.0 {
        return (1.0, ZERO, f);
    }
    let f2 = f.norm_sqr();
    if f2 == 0.0 {
        let a = g.norm();
        return (0.0, g.conj() / a, C64::new(a, 0.0));
    }
    let fa = f.norm();
    let d = (f2 + g2).sqrt();
    let phase = f / fa;
    (fa / d, phase * g.conj() / d, phase * d)
}

// x <- c x + s y, y <- c y - conj(s) x
#[inline]
fn rot(x: &mut C64, y: &mut C64, c: f64, s: C64) {
    let t = *x * c + s * *y;
    *y = *y * c - s.conj() * *x;
    *x = t;
}

/// Swaps the diagonal entries `k` and `k + 1` of the upper-triangular `t`,
/// updating the Schur vectors `q`.
fn swap_adjacent(t: &mut DMatrix<C64>, q: &mut DMatrix<C64>, k: usize) {
    let n = t.nrows();
    let t11 = t[(k, k)];
    let t22 = t[(k + 1, k + 1)];
    let (cs, sn, _) = lartg(t[(k, k + 1)], t22 - t11);
    for j in k + 2..n {
        let (mut a, mut b) = (t[(k, j)], t[(k + 1, j)]);
        rot(&mut a, &mut b, cs, sn);
        t[(k, j)] = a;
        t[(k + 1, j)] = b;
    }
    for i in 0..k {
        let (mut a, mut b) = (t[(i, k)], t[(i, k + 1)]);
        rot(&mut a, &mut b, cs, sn.conj());
        t[(i, k)] = a;
        t[(i, k + 1)] = b;
    }
    t[(k, k)] = t22;
    t[(k + 1, k + 1)] = t11;
    for i in 0..q.nrows() {
        let (mut a, mut b) = (q[(i, k)], q[(i, k + 1)]);
        rot(&mut a, &mut b, cs, sn.conj());
        q[(i, k)] = a;
        q[(i, k + 1)] = b;
    }
}

/// Moves the `count` leftmost eigenvalues of the Schur form to the front,
/// in ascending order of real part.
fn order_leftmost(t: &mut DMatrix<C64>, q: &mut DMatrix<C64>, count: usize) {
    let n = t.nrows();
    for pos in 0..count.min(n) {
        let best = (pos..n)
            .min_by(|&a, &b| t[(a, a)].re.total_cmp(&t[(b, b)].re))
            .unwrap();
        for k in (pos..best).rev() {
            swap_adjacent(t, q, k);
        }
    }
}

fn leftmost_of_small(h: &DMatrix<C64>) -> Result<C64> {
    let ev = Schur::new(h.clone())
        .eigenvalues()
        .ok_or_else(|| Error::NoConvergence("Schur form of the Hessenberg matrix".into()))?;
    Ok(ev.iter().copied().min_by(|a, b| a.re.total_cmp(&b.re)).unwrap())
}

/// Eigenvalue of smallest real part of the operator `apply` on `C^n`, by a
/// thick-restarted Krylov-Schur iteration.
pub fn leftmost_eigenvalue<F>(n: usize, apply: F, p: &KrylovSchurParams) -> Result<C64>
where
    F: Fn(&[C64], &mut [C64]),
{
    if n == 0 {
        return Err(Error::InvalidArgument("empty operator".into()));
    }
    let m = p.subspace.min(n).max(2);
    let keep = p.keep.clamp(1, m - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut v0 = random_normal(n, &mut rng);
    let s = 1.0 / norm(&v0);
    v0.iter_mut().for_each(|x| *x *= s);
    let mut basis: Vec<Vec<C64>> = vec![v0];
    let mut h = DMatrix::<C64>::zeros(m + 1, m);
    let mut k = 0;
    let mut w = vec![ZERO; n];
    let mut scale: f64 = 0.0;
    for _ in 0..p.max_restarts {
        for j in k..m {
            apply(&basis[j], &mut w);
            scale = scale.max(norm(&w));
            for _ in 0..2 {
                for (i, vi) in basis.iter().enumerate() {
                    let c = dotc(vi, &w);
                    axpy(-c, vi, &mut w);
                    h[(i, j)] += c;
                }
            }
            let beta = norm(&w);
            if beta <= 1e-13 * scale.max(1.0) {
                // invariant subspace: the Ritz values are exact eigenvalues
                let hs = h.view((0, 0), (j + 1, j + 1)).clone_owned();
                return leftmost_of_small(&hs);
            }
            h[(j + 1, j)] = C64::new(beta, 0.0);
            basis.push(w.iter().map(|x| x / beta).collect());
        }
        let beta = h[(m, m - 1)];
        let (mut q, mut t) = Schur::new(h.view((0, 0), (m, m)).clone_owned()).unpack();
        order_leftmost(&mut t, &mut q, keep);
        let b: Vec<C64> = (0..m).map(|j| beta * q[(m - 1, j)]).collect();
        let lambda = t[(0, 0)];
        if b[0].norm() <= p.tol * lambda.norm().max(1.0) {
            return Ok(lambda);
        }
        let mut next: Vec<Vec<C64>> = (0..keep)
            .map(|i| {
                let mut u = vec![ZERO; n];
                for (j, vj) in basis.iter().take(m).enumerate() {
                    axpy(q[(j, i)], vj, &mut u);
                }
                u
            })
            .collect();
        next.push(basis.pop().unwrap());
        basis = next;
        h.fill(ZERO);
        for i in 0..keep {
            for j in i..keep {
                h[(i, j)] = t[(i, j)];
            }
            h[(keep, i)] = b[i];
        }
        k = keep;
    }
    Err(Error::NoConvergence(format!(
        "Krylov-Schur: leftmost eigenvalue not converged after {} restarts",
        p.max_restarts
    )))
}

/// `min Re(lambda)`: dense when the operator has at most `dense_threshold`
/// rows, Krylov-Schur otherwise.
pub fn eta_min(op: &SparseComplexOperator, dense_threshold: usize, p: &KrylovSchurParams) -> Result<f64> {
    if op.nrows() <= dense_threshold {
        return eta_min_dense(op);
    }
    let z = leftmost_eigenvalue(op.nrows(), |x, y| op.matvec_into(x, y), p)?;
    Ok(z.re)
}
