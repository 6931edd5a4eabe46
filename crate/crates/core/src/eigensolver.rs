//! Dense complex kernels: Cholesky, pivoted LU, Hermitian and generalized
//! Hermitian eigensolvers, and an SVD built on the Hermitian embedding.
//!
//! The Hermitian solver reduces to real tridiagonal form with Householder
//! reflections and runs implicit QL; cyclic Jacobi is kept as an independent
//! second method.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::sparse::SparseComplexOperator;
use crate::vector::{C64, ONE, ZERO};

/// Largest matrix accepted by [`dense_svd`].
pub const SVD_LIMIT: usize = 4096;

/// Column-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseComplexMatrix {
    nrows: usize,
    ncols: usize,
    values: Vec<C64>,
}

impl Index<(usize, usize)> for DenseComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.values[j * self.nrows + i]
    }
}

impl IndexMut<(usize, usize)> for DenseComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.values[j * self.nrows + i]
    }
}

impl DenseComplexMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            values: vec![ZERO; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Rejects non-finite entries.
    pub fn from_column_major(nrows: usize, ncols: usize, values: Vec<C64>) -> Result<Self> {
        if values.len() != nrows * ncols {
            return Err(Error::DimensionMismatch {
                expected: nrows * ncols,
                actual: values.len(),
            });
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite matrix entry".into()));
        }
        Ok(Self { nrows, ncols, values })
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_sparse(op: &SparseComplexOperator) -> Self {
        let mut m = Self::zeros(op.nrows(), op.ncols());
        for i in 0..op.nrows() {
            let (c, v) = op.row(i);
            for (&j, &x) in c.iter().zip(v) {
                m[(i, j)] = x;
            }
        }
        m
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<C64>]) -> Self {
        let nrows = cols.first().map_or(0, |c| c.len());
        let mut values = Vec::with_capacity(nrows * cols.len());
        for c in cols {
            assert_eq!(c.len(), nrows, "from_columns: ragged input");
            values.extend_from_slice(c);
        }
        Self {
            nrows,
            ncols: cols.len(),
            values,
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn column(&self, j: usize) -> &[C64] {
        &self.values[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [C64] {
        &mut self.values[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.ncols, rhs.nrows, "matmul: inner dimension");
        let mut out = Self::zeros(self.nrows, rhs.ncols);
        for j in 0..rhs.ncols {
            for k in 0..self.ncols {
                let b = rhs[(k, j)];
                if b == ZERO {
                    continue;
                }
                let a = self.column(k);
                let o = out.column_mut(j);
                for (oi, ai) in o.iter_mut().zip(a) {
                    *oi += ai * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.ncols, "matvec: input length");
        let mut y = vec![ZERO; self.nrows];
        for (j, &xj) in x.iter().enumerate() {
            for (yi, a) in y.iter_mut().zip(self.column(j)) {
                *yi += a * xj;
            }
        }
        y
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (rhs.nrows, rhs.ncols));
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.sub(&self.adjoint()).frobenius_norm()
    }

    fn require_square(&self) -> Result<usize> {
        if self.nrows != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                actual: self.ncols,
            });
        }
        Ok(self.nrows)
    }

    fn require_hermitian(&self) -> Result<usize> {
        let n = self.require_square()?;
        let scale = self.frobenius_norm();
        let defect = self.hermitian_defect();
        if defect > 1e-10 * scale {
            return Err(Error::NotHermitian(defect / scale.max(f64::MIN_POSITIVE)));
        }
        Ok(n)
    }
}

/// Lower-triangular `L` with `A = L L^H`.
pub fn cholesky(a: &DenseComplexMatrix) -> Result<DenseComplexMatrix> {
    let n = a.require_hermitian()?;
    let mut l = DenseComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { row: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = C64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &DenseComplexMatrix, b: &[C64]) -> Vec<C64> {
    let n = l.nrows();
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `L^H x = b` for lower-triangular `L`.
pub fn solve_lower_adjoint(l: &DenseComplexMatrix, b: &[C64]) -> Vec<C64> {
    let n = l.nrows();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[(k, i)].conj() * x[k];
        }
        x[i] = s / l[(i, i)].conj();
    }
    x
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct LuFactorization {
    lu: DenseComplexMatrix,
    pivots: Vec<usize>,
    sign: f64,
}

impl LuFactorization {
    pub fn new(a: &DenseComplexMatrix) -> Result<Self> {
        let n = a.require_square()?;
        let tol = 1e-14 * a.frobenius_norm();
        let mut lu = a.clone();
        let mut pivots = Vec::with_capacity(n);
        let mut sign = 1.0;
        for k in 0..n {
            let (p, best) = (k..n)
                .map(|i| (i, lu[(i, k)].norm()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            if best <= tol || best == 0.0 {
                return Err(Error::Singular { column: k, pivot: best });
            }
            pivots.push(p);
            if p != k {
                sign = -sign;
                for j in 0..n {
                    lu.values.swap(j * n + k, j * n + p);
                }
            }
            let inv = ONE / lu[(k, k)];
            for i in k + 1..n {
                lu[(i, k)] *= inv;
            }
            for j in k + 1..n {
                let ukj = lu[(k, j)];
                if ukj == ZERO {
                    continue;
                }
                for i in k + 1..n {
                    let lik = lu[(i, k)];
                    lu[(i, j)] -= lik * ukj;
                }
            }
        }
        Ok(Self { lu, pivots, sign })
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "lu solve: rhs length");
        let mut x = b.to_vec();
        for (k, &p) in self.pivots.iter().enumerate() {
            x.swap(k, p);
        }
        for j in 0..n {
            let xj = x[j];
            if xj == ZERO {
                continue;
            }
            for i in j + 1..n {
                x[i] -= self.lu[(i, j)] * xj;
            }
        }
        for j in (0..n).rev() {
            x[j] /= self.lu[(j, j)];
            let xj = x[j];
            for i in 0..j {
                x[i] -= self.lu[(i, j)] * xj;
            }
        }
        x
    }

    pub fn determinant(&self) -> C64 {
        (0..self.dim()).fold(C64::new(self.sign, 0.0), |acc, i| acc * self.lu[(i, i)])
    }
}

pub fn lu_solve(a: &DenseComplexMatrix, b: &[C64]) -> Result<Vec<C64>> {
    Ok(LuFactorization::new(a)?.solve(b))
}

/// Householder reduction `A = Q T Q^H`; returns `(Q, diag, subdiag)` with
/// complex sub-diagonal.
fn tridiagonalize(a: &DenseComplexMatrix) -> (DenseComplexMatrix, Vec<f64>, Vec<C64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut q = DenseComplexMatrix::identity(n);
    let mut v = vec![ZERO; n];
    let mut p = vec![ZERO; n];
    for k in 0..n.saturating_sub(2) {
        let xnorm = (k + 1..n).map(|i| a[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let phase = if x0.norm() == 0.0 { ONE } else { x0 / x0.norm() };
        let alpha = -phase * xnorm;
        v.iter_mut().for_each(|z| *z = ZERO);
        for i in k + 1..n {
            v[i] = a[(i, k)];
        }
        v[k + 1] -= alpha;
        let vnorm2: f64 = (k + 1..n).map(|i| v[i].norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let tau = 2.0 / vnorm2;
        // p = tau A v, restricted to the trailing block
        for i in k..n {
            let mut s = ZERO;
            for j in k + 1..n {
                s += a[(i, j)] * v[j];
            }
            p[i] = s * tau;
        }
        let mut kk = ZERO;
        for i in k + 1..n {
            kk += v[i].conj() * p[i];
        }
        let kk = kk * (tau / 2.0);
        for i in k + 1..n {
            p[i] -= kk * v[i];
        }
        // A <- A - v p^H - p v^H on the trailing block
        for j in k + 1..n {
            for i in k + 1..n {
                let upd = v[i] * p[j].conj() + p[i] * v[j].conj();
                a[(i, j)] -= upd;
            }
        }
        a[(k + 1, k)] = alpha;
        a[(k, k + 1)] = alpha.conj();
        for i in k + 2..n {
            a[(i, k)] = ZERO;
            a[(k, i)] = ZERO;
        }
        // Q <- Q H
        for i in 0..n {
            let mut s = ZERO;
            for j in k + 1..n {
                s += q[(i, j)] * v[j];
            }
            let s = s * tau;
            for j in k + 1..n {
                let upd = s * v[j].conj();
                q[(i, j)] -= upd;
            }
        }
    }
    let d = (0..n).map(|i| a[(i, i)].re).collect();
    let e = (0..n.saturating_sub(1)).map(|i| a[(i + 1, i)]).collect();
    (q, d, e)
}

/// Implicit QL on a real symmetric tridiagonal matrix, accumulating into the
/// row-major `n x n` matrix `z`.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NoConvergence("tridiagonal QL".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let f = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * f;
                    z[k * n + i] = c * z[k * n + i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

fn sort_eigenpairs(lambda: Vec<f64>, v: DenseComplexMatrix) -> (Vec<f64>, DenseComplexMatrix) {
    let n = lambda.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lambda[a].total_cmp(&lambda[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&k| lambda[k]).collect();
    let cols: Vec<Vec<C64>> = order.iter().map(|&k| v.column(k).to_vec()).collect();
    (sorted, DenseComplexMatrix::from_columns(&cols))
}

/// Full spectrum of a Hermitian matrix: ascending eigenvalues and a unitary
/// matrix of eigenvectors (columns).
pub fn hermitian_eig(a: &DenseComplexMatrix) -> Result<(Vec<f64>, DenseComplexMatrix)> {
    let n = a.require_hermitian()?;
    if n == 0 {
        return Ok((Vec::new(), DenseComplexMatrix::zeros(0, 0)));
    }
    let (q, mut d, ec) = tridiagonalize(a);
    // unitary diagonal scaling that makes the sub-diagonal real
    let mut delta = vec![ONE; n];
    let mut e = vec![0.0; n];
    for i in 0..n - 1 {
        let m = ec[i].norm();
        e[i] = m;
        delta[i + 1] = if m == 0.0 { delta[i] } else { delta[i] * ec[i] / m };
    }
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    tridiagonal_ql(&mut d, &mut e, &mut z)?;
    let mut qd = q;
    for j in 0..n {
        for x in qd.column_mut(j) {
            *x *= delta[j];
        }
    }
    let mut v = DenseComplexMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let zkj = z[k * n + j];
            if zkj == 0.0 {
                continue;
            }
            let src = qd.column(k).to_vec();
            for (vi, s) in v.column_mut(j).iter_mut().zip(src) {
                *vi += s * zkj;
            }
        }
    }
    Ok(sort_eigenpairs(d, v))
}

/// Cyclic Jacobi eigensolver for Hermitian matrices.
pub fn hermitian_eig_jacobi(a: &DenseComplexMatrix) -> Result<(Vec<f64>, DenseComplexMatrix)> {
    let n = a.require_hermitian()?;
    let mut a = a.clone();
    for i in 0..n {
        a[(i, i)] = C64::new(a[(i, i)].re, 0.0);
    }
    let mut v = DenseComplexMatrix::identity(n);
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            let lambda = (0..n).map(|i| a[(i, i)].re).collect();
            return Ok(sort_eigenpairs(lambda, v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let m = apq.norm();
                if m <= 1e-300 {
                    continue;
                }
                let ph = apq / m;
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * m);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let phc = ph.conj();
                // A <- A J with J = [[c, s], [-s conj(ph), c conj(ph)]]
                for i in 0..n {
                    let (x, y) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = x * c - y * s * phc;
                    a[(i, q)] = x * s + y * c * phc;
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = x * c - y * s * phc;
                    v[(i, q)] = x * s + y * c * phc;
                }
                // A <- J^H A
                for j in 0..n {
                    let (x, y) = (a[(p, j)], a[(q, j)]);
                    a[(p, j)] = x * c - y * s * ph;
                    a[(q, j)] = x * s + y * c * ph;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
            }
        }
    }
    Err(Error::NoConvergence("cyclic Jacobi".into()))
}

/// The `k` eigenpairs of `Z v = lambda T v` of smallest `|lambda|`, ordered by
/// increasing `|lambda|`, with `V^H T V = I`.
pub fn generalized_hermitian_eig(
    z: &DenseComplexMatrix,
    t: &DenseComplexMatrix,
    k: usize,
) -> Result<(Vec<f64>, DenseComplexMatrix)> {
    let n = z.require_hermitian()?;
    if t.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: t.nrows(),
        });
    }
    let l = cholesky(t)?;
    // C = L^{-1} Z L^{-H}
    let mut w = DenseComplexMatrix::zeros(n, n);
    for j in 0..n {
        let col = solve_lower(&l, z.column(j));
        w.column_mut(j).copy_from_slice(&col);
    }
    let wh = w.adjoint();
    let mut c = DenseComplexMatrix::zeros(n, n);
    for j in 0..n {
        let col = solve_lower(&l, wh.column(j));
        c.column_mut(j).copy_from_slice(&col);
    }
    // c is (L^{-1} (L^{-1} Z)^H) = L^{-1} Z L^{-H}; remove rounding asymmetry
    let ch = c.adjoint();
    let c = DenseComplexMatrix::from_fn(n, n, |i, j| (c[(i, j)] + ch[(i, j)]) * 0.5);
    let (lambda, y) = hermitian_eig(&c)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lambda[a].abs().total_cmp(&lambda[b].abs()).then(a.cmp(&b)));
    let k = k.min(n);
    let vals = order[..k].iter().map(|&i| lambda[i]).collect();
    let cols: Vec<Vec<C64>> = order[..k]
        .iter()
        .map(|&i| solve_lower_adjoint(&l, y.column(i)))
        .collect();
    Ok((vals, DenseComplexMatrix::from_columns(&cols)))
}

/// Singular value decomposition `A = U diag(sigma) V^H`, sigma descending,
/// from the Hermitian embedding `[[0, A], [A^H, 0]]`.
pub fn dense_svd(a: &DenseComplexMatrix) -> Result<(DenseComplexMatrix, Vec<f64>, DenseComplexMatrix)> {
    let (m, n) = (a.nrows(), a.ncols());
    if m + n > 2 * SVD_LIMIT || m.max(n) > SVD_LIMIT {
        return Err(Error::SizeGuard {
            size: m.max(n),
            limit: SVD_LIMIT,
        });
    }
    let mut h = DenseComplexMatrix::zeros(m + n, m + n);
    for j in 0..n {
        for i in 0..m {
            h[(i, m + j)] = a[(i, j)];
            h[(m + j, i)] = a[(i, j)].conj();
        }
    }
    let (lambda, w) = hermitian_eig(&h)?;
    let r = m.min(n);
    let s2 = std::f64::consts::SQRT_2;
    let mut u = Vec::with_capacity(r);
    let mut v = Vec::with_capacity(r);
    let mut sigma = Vec::with_capacity(r);
    for idx in (m + n - r..m + n).rev() {
        let col = w.column(idx);
        sigma.push(lambda[idx].max(0.0));
        u.push(col[..m].iter().map(|x| x * s2).collect::<Vec<_>>());
        v.push(col[m..].iter().map(|x| x * s2).collect::<Vec<_>>());
    }
    Ok((
        DenseComplexMatrix::from_columns(&u),
        sigma,
        DenseComplexMatrix::from_columns(&v),
    ))
}
