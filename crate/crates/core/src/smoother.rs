//! Kaczmarz relaxation in column form.
//!
//! An update of variable `i` sets `x_i += s_i` with
//! `s_i = (A e_i)^H r / ||A e_i||^2`, which makes the new residual orthogonal
//! to column `i`. A sweep is therefore Gauss-Seidel on `A^H A x = A^H b`.

use crate::error::{Error, Result};
use crate::sparse::SparseComplexOperator;
use crate::vector::{dotc, C64, ZERO};

/// Sweeps between full recomputations of the running residual.
pub const RESIDUAL_REFRESH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepOrder {
    #[default]
    Forward,
    Reverse,
    /// Forward followed by reverse.
    Symmetric,
}

#[derive(Debug, Clone)]
pub struct KaczmarzWorkspace {
    column_norms: Vec<f64>,
    order: Vec<usize>,
    nrows: usize,
}

impl KaczmarzWorkspace {
    pub fn new(op: &SparseComplexOperator, order: SweepOrder) -> Result<Self> {
        let cols = op.columns();
        let column_norms: Vec<f64> = (0..op.ncols())
            .map(|j| cols.column(j).1.iter().map(|v| v.norm_sqr()).sum())
            .collect();
        if let Some(j) = column_norms.iter().position(|&n| !(n > 0.0)) {
            return Err(Error::ZeroColumn(j));
        }
        let n = op.ncols();
        let order = match order {
            SweepOrder::Forward => (0..n).collect(),
            SweepOrder::Reverse => (0..n).rev().collect(),
            SweepOrder::Symmetric => (0..n).chain((0..n).rev()).collect(),
        };
        Ok(Self {
            column_norms,
            order,
            nrows: op.nrows(),
        })
    }

    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    fn check(&self, op: &SparseComplexOperator, x: &[C64], b: &[C64]) -> Result<()> {
        if op.ncols() != self.column_norms.len() || op.nrows() != self.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.column_norms.len(),
                actual: op.ncols(),
            });
        }
        if x.len() != op.ncols() {
            return Err(Error::DimensionMismatch {
                expected: op.ncols(),
                actual: x.len(),
            });
        }
        if b.len() != op.nrows() {
            return Err(Error::DimensionMismatch {
                expected: op.nrows(),
                actual: b.len(),
            });
        }
        Ok(())
    }
}

pub fn residual(op: &SparseComplexOperator, x: &[C64], b: &[C64]) -> Vec<C64> {
    let mut r = op.matvec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    r
}

/// A single update of component `i` with the residual `r = b - A x` kept
/// current. Afterwards `<r, A e_i> = 0`.
pub fn kaczmarz_update(op: &SparseComplexOperator, x: &mut [C64], r: &mut [C64], i: usize, ws: &KaczmarzWorkspace) {
    let (rows, vals) = op.columns().column(i);
    let mut acc = ZERO;
    for (&k, v) in rows.iter().zip(vals) {
        acc += v.conj() * r[k];
    }
    let s = acc / ws.column_norms[i];
    if s == ZERO {
        return;
    }
    x[i] += s;
    for (&k, v) in rows.iter().zip(vals) {
        r[k] -= v * s;
    }
}

/// One pass over `ws.order()` with the residual `r = b - A x` kept current.
fn sweep_with_residual(op: &SparseComplexOperator, x: &mut [C64], r: &mut [C64], ws: &KaczmarzWorkspace) {
    for &i in &ws.order {
        kaczmarz_update(op, x, r, i, ws);
    }
}

/// A single sweep for `A x = b`.
pub fn kaczmarz_sweep(op: &SparseComplexOperator, x: &mut [C64], b: &[C64], ws: &KaczmarzWorkspace) -> Result<()> {
    kaczmarz_sweeps(op, x, b, ws, 1).map(|_| ())
}

/// `nu` sweeps for `A x = b`, returning the final residual.
pub fn kaczmarz_sweeps(
    op: &SparseComplexOperator,
    x: &mut [C64],
    b: &[C64],
    ws: &KaczmarzWorkspace,
    nu: usize,
) -> Result<Vec<C64>> {
    ws.check(op, x, b)?;
    let mut r = residual(op, x, b);
    for k in 0..nu {
        if k > 0 && k % RESIDUAL_REFRESH == 0 {
            r = residual(op, x, b);
        }
        sweep_with_residual(op, x, &mut r, ws);
    }
    Ok(r)
}

/// One sweep on `Z v = lambda T v` with the right-hand side `lambda T v`
/// frozen at the start of the sweep.
pub fn kaczmarz_eig_sweep(
    z: &SparseComplexOperator,
    t: &SparseComplexOperator,
    v: &mut [C64],
    lambda: f64,
    ws: &KaczmarzWorkspace,
) -> Result<()> {
    if t.nrows() != z.nrows() || t.ncols() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: z.nrows(),
            actual: t.nrows(),
        });
    }
    let b: Vec<C64> = t.matvec(v).into_iter().map(|x| x * lambda).collect();
    ws.check(z, v, &b)?;
    let mut r = residual(z, v, &b);
    sweep_with_residual(z, v, &mut r, ws);
    Ok(())
}

/// `nu` eigen-sweeps, refreshing the Ritz value after each. Returns the
/// final Ritz value.
pub fn relax_eigenvector(
    z: &SparseComplexOperator,
    t: &SparseComplexOperator,
    v: &mut [C64],
    lambda: f64,
    ws: &KaczmarzWorkspace,
    nu: usize,
) -> Result<f64> {
    let mut lambda = lambda;
    for _ in 0..nu {
        kaczmarz_eig_sweep(z, t, v, lambda, ws)?;
        lambda = ritz_value(z, t, v)?;
    }
    Ok(lambda)
}

/// `<T v, v>`, real for Hermitian `T`.
pub fn t_norm_sqr(t: &SparseComplexOperator, v: &[C64]) -> f64 {
    dotc(v, &t.matvec(v)).re
}

/// Scales `v` so that `<T v, v> = 1`.
pub fn t_normalize(t: &SparseComplexOperator, v: &mut [C64]) -> Result<()> {
    let n2 = t_norm_sqr(t, v);
    if !(n2 > 0.0) || !n2.is_finite() {
        return Err(Error::InvalidArgument(format!("vector has T-norm^2 {n2}")));
    }
    let s = 1.0 / n2.sqrt();
    v.iter_mut().for_each(|x| *x *= s);
    Ok(())
}

/// Generalized Rayleigh quotient `<Z v, v> / <T v, v>`.
pub fn ritz_value(z: &SparseComplexOperator, t: &SparseComplexOperator, v: &[C64]) -> Result<f64> {
    let den = t_norm_sqr(t, v);
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::InvalidArgument("ritz value of a vector with zero T-norm".into()));
    }
    Ok(dotc(v, &z.matvec(v)).re / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::{norm, random_normal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(n: usize, seed: u64) -> SparseComplexOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals = random_normal(n * n, &mut rng);
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if (i + 2 * j) % 3 != 0 || i == j {
                    trip.push((i, j, vals[i * n + j]));
                }
            }
        }
        SparseComplexOperator::from_triplets(n, n, trip)
    }

    #[test]
    fn scalar_system_exact() {
        let a = SparseComplexOperator::from_diagonal(&[C64::new(2.0, -1.0)]);
        let ws = KaczmarzWorkspace::new(&a, SweepOrder::Forward).unwrap();
        let mut x = vec![ZERO];
        let b = vec![C64::new(3.0, 4.0)];
        kaczmarz_sweep(&a, &mut x, &b, &ws).unwrap();
        assert!((x[0] - b[0] / C64::new(2.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_column_rejected() {
        let a = SparseComplexOperator::from_triplets(2, 2, vec![(0, 0, C64::new(1.0, 0.0))]);
        assert!(matches!(
            KaczmarzWorkspace::new(&a, SweepOrder::Forward),
            Err(Error::ZeroColumn(1))
        ));
    }

    #[test]
    fn orders() {
        let a = SparseComplexOperator::identity(3);
        assert_eq!(KaczmarzWorkspace::new(&a, SweepOrder::Reverse).unwrap().order(), &[2, 1, 0]);
        assert_eq!(
            KaczmarzWorkspace::new(&a, SweepOrder::Symmetric).unwrap().order(),
            &[0, 1, 2, 2, 1, 0]
        );
    }

    #[test]
    fn ritz_scale_invariant() {
        let a = random_sparse(8, 1);
        let z = a.hermitian_part();
        let t = SparseComplexOperator::identity(8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_normal(8, &mut rng);
        let r1 = ritz_value(&z, &t, &v).unwrap();
        let w: Vec<C64> = v.iter().map(|x| x * C64::new(10.0, -3.0)).collect();
        assert!((ritz_value(&z, &t, &w).unwrap() - r1).abs() < 1e-12 * r1.abs().max(1.0));
        assert!(ritz_value(&z, &t, &[ZERO; 8]).is_err());
    }

    #[test]
    fn refresh_keeps_residual_consistent() {
        let a = random_sparse(10, 3);
        let ws = KaczmarzWorkspace::new(&a, SweepOrder::Forward).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = random_normal(10, &mut rng);
        let mut x = vec![ZERO; 10];
        let r = kaczmarz_sweeps(&a, &mut x, &b, &ws, 120).unwrap();
        let direct = residual(&a, &x, &b);
        let d: Vec<C64> = r.iter().zip(&direct).map(|(p, q)| p - q).collect();
        assert!(norm(&d) < 1e-12);
    }
}
