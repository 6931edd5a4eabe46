//! Full coarsening of the even sublattice, least-squares interpolation and
//! Galerkin coarse operators.
//!
//! Every level lives on the even sites of an `n x n` periodic lattice, which
//! is a square lattice rotated by 45 degrees with basis `(1, 1)`, `(1, -1)`.
//! Full coarsening keeps every other point along both rotated axes: the
//! sites with `x`, `y` even and `x/2 + y/2` even. They are relabelled
//! `(x/2, y/2)`, which is again the even sublattice of an `n/2` lattice, so
//! the construction repeats. Fine points on a rotated axis between two coarse
//! points interpolate from those two; cell centres interpolate from four.

use rayon::prelude::*;

use crate::eigensolver::{DenseComplexMatrix, LuFactorization};
use crate::error::{Error, Result};
use crate::lattice::{parity_index, site_of_parity_index, LatticeDims, Parity, Site, SPINS};
use crate::operator::Gamma5Signature;
use crate::sparse::SparseComplexOperator;
use crate::vector::{axpy, dotc, norm_sqr, C64, ONE, ZERO};

/// Maximal number of interpolatory variables per fine variable.
pub const MAX_INTERPOLATORY: usize = 4;

/// The even sublattice of an `n x n` lattice, in parity-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct LevelGeometry {
    pub dims: LatticeDims,
}

impl LevelGeometry {
    pub fn new(n: usize) -> Result<Self> {
        Ok(Self {
            dims: LatticeDims::new(n)?,
        })
    }

    pub fn n(&self) -> usize {
        self.dims.n()
    }

    pub fn points(&self) -> usize {
        self.dims.volume() / 2
    }

    pub fn variables(&self) -> usize {
        SPINS * self.points()
    }

    pub fn site(&self, point: usize) -> Site {
        site_of_parity_index(point, Parity::Even, self.dims)
    }

    pub fn point(&self, s: Site) -> usize {
        parity_index(s, self.dims)
    }

    /// Whether a further full-coarsening step yields a valid level.
    pub fn can_coarsen(&self) -> bool {
        self.n() % 4 == 0 && self.n() / 2 >= 4
    }

    pub fn coarser(&self) -> Result<Self> {
        if !self.can_coarsen() {
            return Err(Error::InvalidExtent(self.n() / 2));
        }
        Self::new(self.n() / 2)
    }
}

fn is_coarse_site(s: Site) -> bool {
    s.x % 2 == 0 && s.y % 2 == 0 && (s.x / 2 + s.y / 2) % 2 == 0
}

#[derive(Debug, Clone)]
pub struct CoarseningMap {
    pub fine: LevelGeometry,
    pub coarse: LevelGeometry,
    /// Coarse point index of each fine point, if it is a coarse point.
    pub coarse_index: Vec<Option<usize>>,
    /// Interpolatory coarse variables of each fine variable. A coarse
    /// variable maps to itself alone.
    pub interpolatory: Vec<Vec<usize>>,
    /// Fine variable injected into each coarse variable.
    pub fine_of_coarse: Vec<usize>,
}

impl CoarseningMap {
    pub fn is_coarse_variable(&self, i: usize) -> bool {
        self.coarse_index[i / SPINS].is_some()
    }

    pub fn fine_variables(&self) -> usize {
        self.interpolatory.len()
    }

    pub fn coarse_variables(&self) -> usize {
        self.coarse.variables()
    }

    pub fn coarse_points(&self) -> usize {
        self.coarse.points()
    }
}

/// Full coarsening of `geometry` with interpolatory sets taken from the
/// same-spin couplings of `op` to coarse variables, keeping at most four of
/// largest magnitude (ties by index).
pub fn full_coarsen(geometry: LevelGeometry, op: &SparseComplexOperator) -> Result<CoarseningMap> {
    if !geometry.can_coarsen() {
        return Err(Error::InvalidExtent(geometry.n()));
    }
    if op.nrows() != geometry.variables() {
        return Err(Error::DimensionMismatch {
            expected: geometry.variables(),
            actual: op.nrows(),
        });
    }
    let coarse = geometry.coarser()?;
    let coarse_index: Vec<Option<usize>> = (0..geometry.points())
        .map(|p| {
            let s = geometry.site(p);
            is_coarse_site(s).then(|| coarse.point(Site { x: s.x / 2, y: s.y / 2 }))
        })
        .collect();
    let mut interpolatory = Vec::with_capacity(geometry.variables());
    for i in 0..geometry.variables() {
        let (p, spin) = (i / SPINS, i % SPINS);
        if let Some(c) = coarse_index[p] {
            interpolatory.push(vec![SPINS * c + spin]);
            continue;
        }
        let (cols, vals) = op.row(i);
        let mut cand: Vec<(f64, usize)> = cols
            .iter()
            .zip(vals)
            .filter(|(&j, v)| j % SPINS == spin && v.norm() > 0.0)
            .filter_map(|(&j, v)| coarse_index[j / SPINS].map(|c| (v.norm(), SPINS * c + spin)))
            .collect();
        if cand.is_empty() {
            return Err(Error::Pattern(format!("fine variable {i} has no coarse neighbours")));
        }
        cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        cand.truncate(MAX_INTERPOLATORY);
        let mut set: Vec<usize> = cand.into_iter().map(|(_, j)| j).collect();
        set.sort_unstable();
        interpolatory.push(set);
    }
    let mut fine_of_coarse = vec![0; coarse.variables()];
    for (p, c) in coarse_index.iter().enumerate() {
        if let Some(c) = c {
            for spin in 0..SPINS {
                fine_of_coarse[SPINS * c + spin] = SPINS * p + spin;
            }
        }
    }
    Ok(CoarseningMap {
        fine: geometry,
        coarse,
        coarse_index,
        interpolatory,
        fine_of_coarse,
    })
}

/// Relaxed test vectors `V^r` and eigen test vectors `V^e` with Ritz values.
#[derive(Debug, Clone, Default)]
pub struct TestVectorSet {
    pub relaxed: Vec<Vec<C64>>,
    pub eigen: Vec<Vec<C64>>,
    pub ritz: Vec<f64>,
}

impl TestVectorSet {
    pub fn len(&self) -> usize {
        self.relaxed.len() + self.eigen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `1` for relaxed vectors and `1 / max(|lambda|, 1e-10 * mean|lambda|)`
    /// for eigen vectors.
    pub fn weights(&self) -> Vec<f64> {
        let mean = if self.ritz.is_empty() {
            0.0
        } else {
            self.ritz.iter().map(|l| l.abs()).sum::<f64>() / self.ritz.len() as f64
        };
        let floor = (1e-10 * mean).max(f64::MIN_POSITIVE);
        self.relaxed
            .iter()
            .map(|_| 1.0)
            .chain(self.ritz.iter().map(|l| 1.0 / l.abs().max(floor)))
            .collect()
    }

    pub fn vectors(&self) -> impl Iterator<Item = &Vec<C64>> {
        self.relaxed.iter().chain(self.eigen.iter())
    }
}

#[derive(Debug, Clone)]
pub struct InterpolationOperator {
    pub p: SparseComplexOperator,
    /// Weighted least-squares residual of each fine row relative to the
    /// weighted data norm of that row (0 for coarse rows).
    pub fit_residual: Vec<f64>,
    /// Rows where all data vanished and equal weights were used.
    pub fallback_rows: Vec<usize>,
}

impl InterpolationOperator {
    pub fn max_fit_residual(&self) -> f64 {
        self.fit_residual.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_fit_residual(&self) -> f64 {
        if self.fit_residual.is_empty() {
            0.0
        } else {
            self.fit_residual.iter().sum::<f64>() / self.fit_residual.len() as f64
        }
    }
}

/// Coefficients and relative fit residual of fine variable `i` from the fine
/// variables `set`; `None` when the data at the row vanishes.
fn fit_row(i: usize, set: &[usize], vectors: &[&Vec<C64>], weights: &[f64]) -> Option<(Vec<C64>, f64)> {
    let q = set.len();
    let mut g = DenseComplexMatrix::zeros(q, q);
    let mut h = vec![ZERO; q];
    let mut data = 0.0;
    for (v, &w) in vectors.iter().zip(weights) {
        let vi = v[i];
        data += w * vi.norm_sqr();
        for (a, &ja) in set.iter().enumerate() {
            let vja = v[ja].conj() * w;
            h[a] += vja * vi;
            for (b, &jb) in set.iter().enumerate() {
                g[(a, b)] += vja * v[jb];
            }
        }
    }
    let trace: f64 = (0..q).map(|a| g[(a, a)].re).sum();
    if !(trace > 0.0) {
        return None;
    }
    let ridge = 1e-12 * trace / q as f64;
    for a in 0..q {
        g[(a, a)] += ridge;
    }
    let coeffs = LuFactorization::new(&g).ok()?.solve(&h);
    let mut res = 0.0;
    for (v, &w) in vectors.iter().zip(weights) {
        let mut e = v[i];
        for (c, &j) in coeffs.iter().zip(set) {
            e -= c * v[j];
        }
        res += w * e.norm_sqr();
    }
    let rel = if data > 0.0 { res / data } else { 0.0 };
    Some((coeffs, rel.sqrt()))
}

/// Weighted least-squares interpolation from the test vectors.
pub fn build_ls_interpolation(map: &CoarseningMap, tvs: &TestVectorSet) -> Result<InterpolationOperator> {
    if tvs.is_empty() {
        return Err(Error::InvalidArgument("no test vectors".into()));
    }
    let weights = tvs.weights();
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidArgument("test vector weights must be positive".into()));
    }
    let vectors: Vec<&Vec<C64>> = tvs.vectors().collect();
    let n = map.fine_variables();
    if let Some(v) = vectors.iter().find(|v| v.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: v.len(),
        });
    }
    let rows: Vec<(Vec<(usize, C64)>, f64, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let set = &map.interpolatory[i];
            if map.is_coarse_variable(i) {
                return (vec![(set[0], ONE)], 0.0, false);
            }
            let sources: Vec<usize> = set.iter().map(|&j| map.fine_of_coarse[j]).collect();
            match fit_row(i, &sources, &vectors, &weights) {
                Some((c, res)) => (set.iter().copied().zip(c).collect(), res, false),
                None => {
                    let w = C64::new(1.0 / set.len() as f64, 0.0);
                    (set.iter().map(|&j| (j, w)).collect(), 0.0, true)
                }
            }
        })
        .collect();
    let mut trip = Vec::new();
    let mut fit_residual = Vec::with_capacity(n);
    let mut fallback_rows = Vec::new();
    for (i, (entries, res, fallback)) in rows.into_iter().enumerate() {
        trip.extend(entries.into_iter().map(|(j, x)| (i, j, x)));
        fit_residual.push(res);
        if fallback {
            fallback_rows.push(i);
        }
    }
    if !fallback_rows.is_empty() {
        log::warn!("{} interpolation rows fell back to equal weights", fallback_rows.len());
    }
    Ok(InterpolationOperator {
        p: SparseComplexOperator::from_triplets(n, map.coarse_variables(), trip),
        fit_residual,
        fallback_rows,
    })
}

/// Rejects interpolation entries that couple different spins.
pub fn check_spin_pattern(p: &SparseComplexOperator) -> Result<()> {
    for i in 0..p.nrows() {
        let (cols, vals) = p.row(i);
        for (&j, v) in cols.iter().zip(vals) {
            if j % SPINS != i % SPINS && *v != ZERO {
                return Err(Error::Pattern(format!("entry ({i}, {j}) couples different spins")));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CoarseOperators {
    pub z: SparseComplexOperator,
    pub t: SparseComplexOperator,
    pub gamma5: Gamma5Signature,
}

/// `Z_c = P^H Z P` and `T_c = P^H T P`, both symmetrised.
pub fn galerkin_coarsen(
    z: &SparseComplexOperator,
    p: &SparseComplexOperator,
    t: &SparseComplexOperator,
) -> Result<CoarseOperators> {
    check_spin_pattern(p)?;
    if z.ncols() != p.nrows() || t.ncols() != p.nrows() {
        return Err(Error::DimensionMismatch {
            expected: p.nrows(),
            actual: z.ncols(),
        });
    }
    let ph = p.adjoint();
    let zc = ph.matmul(&z.matmul(p)).hermitian_part();
    let tc = ph.matmul(&t.matmul(p)).hermitian_part();
    let gamma5 = Gamma5Signature::for_variables(p.ncols())?;
    Ok(CoarseOperators { z: zc, t: tc, gamma5 })
}

pub fn prolong_vector(p: &SparseComplexOperator, v: &[C64]) -> Result<Vec<C64>> {
    if v.len() != p.ncols() {
        return Err(Error::DimensionMismatch {
            expected: p.ncols(),
            actual: v.len(),
        });
    }
    Ok(p.matvec(v))
}

/// How fine test vectors are carried to the coarse level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Restriction {
    /// `P^H v`.
    Adjoint,
    /// `T_c^{-1} P^H T v`, the T-orthogonal projection.
    #[default]
    TWeighted,
}

pub fn restrict_vector(
    p: &SparseComplexOperator,
    mode: Restriction,
    v: &[C64],
    t_fine: &SparseComplexOperator,
    t_coarse: &SparseComplexOperator,
) -> Result<Vec<C64>> {
    if v.len() != p.nrows() {
        return Err(Error::DimensionMismatch {
            expected: p.nrows(),
            actual: v.len(),
        });
    }
    match mode {
        Restriction::Adjoint => Ok(p.matvec_adjoint(v)),
        Restriction::TWeighted => {
            let rhs = p.matvec_adjoint(&t_fine.matvec(v));
            hpd_solve(t_coarse, &rhs, 1e-13, 10 * rhs.len() + 100)
        }
    }
}

/// Conjugate gradients for a Hermitian positive definite operator.
fn hpd_solve(a: &SparseComplexOperator, b: &[C64], tol: f64, max_iter: usize) -> Result<Vec<C64>> {
    let bn = norm_sqr(b).sqrt();
    let mut x = vec![ZERO; b.len()];
    if bn == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut d = r.clone();
    let mut rr = norm_sqr(&r);
    for _ in 0..max_iter {
        if rr.sqrt() <= tol * bn {
            return Ok(x);
        }
        let ad = a.matvec(&d);
        let curv = dotc(&d, &ad).re;
        if !(curv > 0.0) {
            return Err(Error::Breakdown("mass matrix is not positive definite".into()));
        }
        let alpha = C64::new(rr / curv, 0.0);
        axpy(alpha, &d, &mut x);
        axpy(-alpha, &ad, &mut r);
        let rr_new = norm_sqr(&r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (di, ri) in d.iter_mut().zip(&r) {
            *di = ri + *di * beta;
        }
    }
    if rr.sqrt() <= 1e-8 * bn {
        Ok(x)
    } else {
        Err(Error::NoConvergence("mass-matrix solve".into()))
    }
}
