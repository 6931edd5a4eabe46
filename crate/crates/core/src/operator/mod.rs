//! The Wilson operator `D`, its Hermitian form `Z = Gamma5 D`, the
//! block-spin cross-check and the odd-even Schur reduction.
//!
//! Link orientation: a forward hop `z -> z + e_mu` carries `conj(U_mu^z)`,
//! a backward hop `z -> z - e_mu` carries `U_mu^{z - e_mu}`. With this choice
//! the spin-permuted `D` equals `(1/2) [[A, B], [-B^H, A]]` with the gauge
//! Laplacian `A` and the covariant central difference `B` of
//! [`block_spin_form`].

mod spectrum;

pub use spectrum::{
    dense_eigenvalues, eta_min, eta_min_dense, leftmost_eigenvalue, spectrum_from_reduced, KrylovSchurParams,
    DENSE_EIG_LIMIT,
};

use crate::error::{Error, Result};
use crate::gauge::GaugeConfiguration;
use crate::lattice::{
    neighbor, parity, site_index, site_of_parity_index, Direction, LatticeDims, Parity, Sign, SPINS,
};
use crate::sparse::SparseComplexOperator;
use crate::vector::{SpinorField, C64, ONE};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// `m_q = m + 2(d - 1)` with `d = 2`.
#[inline]
pub fn quark_mass(m: f64) -> f64 {
    m + 2.0
}

/// Diagonal of `I (x) gamma5` in site-major, spin-minor layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gamma5Signature {
    signs: Vec<f64>,
}

impl Gamma5Signature {
    /// Signature for `points` grid points, i.e. `2 * points` variables.
    pub fn new(points: usize) -> Self {
        let signs = (0..SPINS * points)
            .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        Self { signs }
    }

    pub fn for_variables(vars: usize) -> Result<Self> {
        if vars % SPINS != 0 {
            return Err(Error::InvalidArgument(format!(
                "{vars} variables do not form whole spinors"
            )));
        }
        Ok(Self::new(vars / SPINS))
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.signs.len(), "gamma5: length");
        v.iter().zip(&self.signs).map(|(x, s)| x * s).collect()
    }

    pub fn apply_in_place(&self, v: &mut [C64]) {
        assert_eq!(v.len(), self.signs.len(), "gamma5: length");
        for (x, s) in v.iter_mut().zip(&self.signs) {
            *x *= s;
        }
    }
}

pub fn gamma5_multiply(sig: &Gamma5Signature, v: &SpinorField) -> Result<SpinorField> {
    if v.len() != sig.len() {
        return Err(Error::DimensionMismatch {
            expected: sig.len(),
            actual: v.len(),
        });
    }
    Ok(SpinorField::new(sig.apply(v), v.level()))
}

/// `Z = Gamma5 D`: rows of `D` scaled by the signature.
pub fn form_z(d: &SparseComplexOperator, sig: &Gamma5Signature) -> Result<SparseComplexOperator> {
    if d.nrows() != sig.len() {
        return Err(Error::DimensionMismatch {
            expected: sig.len(),
            actual: d.nrows(),
        });
    }
    Ok(d.scale_rows(sig.signs()))
}

/// `||Gamma5 D - D^H Gamma5||_F`, using `D^H Gamma5 = (Gamma5 D)^H`.
pub fn gamma5_defect(d: &SparseComplexOperator, sig: &Gamma5Signature) -> f64 {
    let left = d.scale_rows(sig.signs());
    left.add_scaled(-ONE, &left.adjoint()).frobenius_norm()
}

/// Assembles `D` for the given links and mass shift `m`.
pub fn assemble_wilson(cfg: &GaugeConfiguration, m: f64) -> SparseComplexOperator {
    let dims = cfg.dims();
    let mq = C64::new(quark_mass(m), 0.0);
    let half = C64::new(0.5, 0.0);
    let mut trip = Vec::with_capacity(9 * dims.variables());
    for z in dims.sites() {
        let iz = site_index(z, dims);
        for s in 0..SPINS {
            trip.push((2 * iz + s, 2 * iz + s, mq));
        }
        for mu in Direction::ALL {
            // gamma_1 = [[0, 1], [1, 0]], gamma_2 = [[0, i], [-i, 0]]
            let g01 = match mu {
                Direction::X => ONE,
                Direction::Y => I,
            };
            let g10 = g01.conj();
            let fwd = neighbor(z, mu, Sign::Forward, dims);
            let bwd = neighbor(z, mu, Sign::Backward, dims);
            let jf = site_index(fwd, dims);
            let jb = site_index(bwd, dims);
            let uf = cfg.link(z, mu).conj();
            let ub = cfg.link(bwd, mu);
            // forward: -(1/2)(I - gamma_mu) conj(U_mu^z)
            trip.push((2 * iz, 2 * jf, -half * uf));
            trip.push((2 * iz + 1, 2 * jf + 1, -half * uf));
            trip.push((2 * iz, 2 * jf + 1, half * g01 * uf));
            trip.push((2 * iz + 1, 2 * jf, half * g10 * uf));
            // backward: -(1/2)(I + gamma_mu) U_mu^{z - e_mu}
            trip.push((2 * iz, 2 * jb, -half * ub));
            trip.push((2 * iz + 1, 2 * jb + 1, -half * ub));
            trip.push((2 * iz, 2 * jb + 1, -half * g01 * ub));
            trip.push((2 * iz + 1, 2 * jb, -half * g10 * ub));
        }
    }
    SparseComplexOperator::from_triplets(dims.variables(), dims.variables(), trip)
}

/// The gauge Laplacian `A` (diagonal `4 + 2m`) and the covariant central
/// difference `B`, both acting on scalar fields.
pub fn block_spin_form(cfg: &GaugeConfiguration, m: f64) -> (SparseComplexOperator, SparseComplexOperator) {
    let dims = cfg.dims();
    let vol = dims.volume();
    let mut a = Vec::with_capacity(5 * vol);
    let mut b = Vec::with_capacity(4 * vol);
    for z in dims.sites() {
        let iz = site_index(z, dims);
        a.push((iz, iz, C64::new(4.0 + 2.0 * m, 0.0)));
        for mu in Direction::ALL {
            let phase = match mu {
                Direction::X => ONE,
                Direction::Y => I,
            };
            let fwd = neighbor(z, mu, Sign::Forward, dims);
            let bwd = neighbor(z, mu, Sign::Backward, dims);
            let uf = cfg.link(z, mu).conj();
            let ub = cfg.link(bwd, mu);
            a.push((iz, site_index(fwd, dims), -uf));
            a.push((iz, site_index(bwd, dims), -ub));
            b.push((iz, site_index(fwd, dims), phase * uf));
            b.push((iz, site_index(bwd, dims), -phase * ub));
        }
    }
    (
        SparseComplexOperator::from_triplets(vol, vol, a),
        SparseComplexOperator::from_triplets(vol, vol, b),
    )
}

/// Permutation taking site-major/spin-minor order to spin-major order:
/// entry `i` of the permuted vector is entry `perm[i]` of the original.
pub fn spin_permutation(volume: usize) -> Vec<usize> {
    (0..volume)
        .map(|i| 2 * i)
        .chain((0..volume).map(|i| 2 * i + 1))
        .collect()
}

/// `(1/2) [[A, B], [-B^H, A]]` assembled as one matrix.
pub fn block_form_matrix(a: &SparseComplexOperator, b: &SparseComplexOperator) -> SparseComplexOperator {
    let v = a.nrows();
    let half = C64::new(0.5, 0.0);
    let bh = b.adjoint();
    let mut trip = Vec::with_capacity(2 * a.nnz() + 2 * b.nnz());
    let mut push = |m: &SparseComplexOperator, r0: usize, c0: usize, f: C64| {
        for i in 0..m.nrows() {
            let (c, vals) = m.row(i);
            for (&j, &x) in c.iter().zip(vals) {
                trip.push((r0 + i, c0 + j, f * x));
            }
        }
    };
    push(a, 0, 0, half);
    push(b, 0, v, half);
    push(&bh, v, 0, -half);
    push(a, v, v, half);
    SparseComplexOperator::from_triplets(2 * v, 2 * v, trip)
}

/// Index maps between the full variable set and the even/odd sublattices.
#[derive(Debug, Clone)]
pub struct ParitySplit {
    pub even: Vec<usize>,
    pub odd: Vec<usize>,
}

impl ParitySplit {
    /// Reduced index `2 * k + s` for site `k` of the class and spin `s`.
    pub fn new(dims: LatticeDims) -> Self {
        let half = dims.volume() / 2;
        let build = |p: Parity| {
            (0..half)
                .flat_map(|k| {
                    let i = site_index(site_of_parity_index(k, p, dims), dims);
                    (0..SPINS).map(move |s| 2 * i + s)
                })
                .collect::<Vec<_>>()
        };
        Self {
            even: build(Parity::Even),
            odd: build(Parity::Odd),
        }
    }

    pub fn split(&self, v: &[C64]) -> (Vec<C64>, Vec<C64>) {
        (
            self.even.iter().map(|&i| v[i]).collect(),
            self.odd.iter().map(|&i| v[i]).collect(),
        )
    }

    pub fn merge(&self, even: &[C64], odd: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.even.len() + self.odd.len()];
        for (&i, &x) in self.even.iter().zip(even) {
            out[i] = x;
        }
        for (&i, &x) in self.odd.iter().zip(odd) {
            out[i] = x;
        }
        out
    }
}

/// The scaled odd-even system: `D / c = [[I, D_eo], [D_oe, I]]` and the
/// Schur complement `Dhat = I - D_eo D_oe` on even variables.
#[derive(Debug, Clone)]
pub struct OddEvenSystem {
    pub dims: LatticeDims,
    pub scale: f64,
    pub dhat: SparseComplexOperator,
    pub deo: SparseComplexOperator,
    pub doe: SparseComplexOperator,
    pub split: ParitySplit,
}

impl OddEvenSystem {
    /// Right-hand side of the reduced system: `b_e/c - D_eo b_o/c`.
    pub fn reduce_rhs(&self, b: &[C64]) -> Vec<C64> {
        let inv = 1.0 / self.scale;
        let (be, bo) = self.split.split(b);
        let bo: Vec<C64> = bo.iter().map(|x| x * inv).collect();
        let t = self.deo.matvec(&bo);
        be.iter().zip(t).map(|(x, y)| x * inv - y).collect()
    }

    /// Back-substitution `psi_o = b_o/c - D_oe psi_e`, returning the full
    /// solution.
    pub fn reconstruct(&self, psi_e: &[C64], b: &[C64]) -> Vec<C64> {
        let inv = 1.0 / self.scale;
        let (_, bo) = self.split.split(b);
        let t = self.doe.matvec(psi_e);
        let psi_o: Vec<C64> = bo.iter().zip(t).map(|(x, y)| x * inv - y).collect();
        self.split.merge(psi_e, &psi_o)
    }

    /// The reduced signature `Gamma_e`.
    pub fn gamma_e(&self) -> Gamma5Signature {
        Gamma5Signature::new(self.dims.volume() / 2)
    }

    /// Hermitian form `Gamma_e Dhat`, symmetrised to remove rounding residue.
    pub fn z(&self) -> SparseComplexOperator {
        self.dhat.scale_rows(self.gamma_e().signs()).hermitian_part()
    }
}

fn check_scalar_block(
    d: &SparseComplexOperator,
    vars: &[usize],
    mark: &[bool],
    c: f64,
    name: &str,
) -> Result<()> {
    let tol = 1e-12 * c.abs().max(1.0);
    for &i in vars {
        let (cols, vals) = d.row(i);
        for (&j, v) in cols.iter().zip(vals) {
            if !mark[j] {
                continue;
            }
            let want = if i == j { C64::new(c, 0.0) } else { C64::new(0.0, 0.0) };
            if (v - want).norm() > tol {
                return Err(Error::NotWilson(format!(
                    "{name} block entry ({i}, {j}) = {v} is not {want}"
                )));
            }
        }
    }
    Ok(())
}

/// Odd-even reduction after scaling by `c = D_00`.
pub fn odd_even_reduce(d: &SparseComplexOperator, dims: LatticeDims) -> Result<OddEvenSystem> {
    if d.nrows() != dims.variables() || d.ncols() != dims.variables() {
        return Err(Error::DimensionMismatch {
            expected: dims.variables(),
            actual: d.nrows(),
        });
    }
    let split = ParitySplit::new(dims);
    let c = d.get(0, 0);
    if c.im.abs() > 1e-12 * c.norm() || c.re == 0.0 {
        return Err(Error::NotWilson(format!("diagonal entry {c} is not a nonzero real")));
    }
    let c = c.re;
    let mut is_even = vec![false; dims.variables()];
    for &i in &split.even {
        is_even[i] = true;
    }
    let is_odd: Vec<bool> = is_even.iter().map(|e| !e).collect();
    check_scalar_block(d, &split.even, &is_even, c, "even/even")?;
    check_scalar_block(d, &split.odd, &is_odd, c, "odd/odd")?;
    let inv = C64::new(1.0 / c, 0.0);
    let deo = d.submatrix(&split.even, &split.odd).scale(inv);
    let doe = d.submatrix(&split.odd, &split.even).scale(inv);
    let dhat = SparseComplexOperator::identity(split.even.len()).add_scaled(-ONE, &deo.matmul(&doe));
    debug_assert!(split.even.iter().all(|&i| parity(dims.site_at(i / 2)) == Parity::Even));
    Ok(OddEvenSystem {
        dims,
        scale: c,
        dhat,
        deo,
        doe,
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::max_abs_diff;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_cfg(n: usize, seed: u64) -> GaugeConfiguration {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GaugeConfiguration::random(LatticeDims::new(n).unwrap(), 1.0, &mut rng)
    }

    #[test]
    fn row_counts() {
        let d = assemble_wilson(&random_cfg(8, 1), 0.1);
        assert_eq!(d.max_row_nnz(), 9);
        let oe = odd_even_reduce(&d, LatticeDims::new(8).unwrap()).unwrap();
        assert_eq!(oe.dhat.max_row_nnz(), 18);
        assert_eq!(oe.dhat.nrows(), 64);
    }

    #[test]
    fn gamma5_symmetry_exact() {
        let cfg = random_cfg(6, 2);
        let d = assemble_wilson(&cfg, -0.4);
        let sig = Gamma5Signature::new(36);
        assert_eq!(gamma5_defect(&d, &sig), 0.0);
        let z = form_z(&d, &sig).unwrap();
        assert_eq!(z.hermitian_defect(), 0.0);
    }

    #[test]
    fn gamma5_squares_to_identity() {
        let sig = Gamma5Signature::new(3);
        let v = SpinorField::new((0..6).map(|k| C64::new(k as f64, 1.0)).collect(), 0);
        let w = gamma5_multiply(&sig, &gamma5_multiply(&sig, &v).unwrap()).unwrap();
        assert_eq!(w, v);
        assert!(gamma5_multiply(&sig, &SpinorField::zeros(4, 0)).is_err());
    }

    #[test]
    fn block_form_identity() {
        let cfg = random_cfg(8, 3);
        let d = assemble_wilson(&cfg, 0.25);
        let (a, b) = block_spin_form(&cfg, 0.25);
        let p = d.permute(&spin_permutation(64));
        let blk = block_form_matrix(&a, &b);
        let diff = p.add_scaled(-ONE, &blk);
        assert!(diff.values().iter().all(|v| v.norm() <= 1e-15));
    }

    #[test]
    fn free_field_laplacian_and_gradient() {
        let cfg = GaugeConfiguration::cold(LatticeDims::new(4).unwrap(), 1.0);
        let (a, b) = block_spin_form(&cfg, 0.5);
        assert_eq!(a.get(0, 0), C64::new(5.0, 0.0));
        assert_eq!(a.get(0, 1), C64::new(-1.0, 0.0));
        assert_eq!(a.get(0, 4), C64::new(-1.0, 0.0));
        assert_eq!(b.get(0, 1), C64::new(1.0, 0.0));
        assert_eq!(b.get(0, 3), C64::new(-1.0, 0.0));
        assert_eq!(b.get(0, 4), C64::new(0.0, 1.0));
        assert_eq!(b.get(0, 12), C64::new(0.0, -1.0));
    }

    #[test]
    fn rejects_non_wilson() {
        let dims = LatticeDims::new(4).unwrap();
        let mut d = assemble_wilson(&GaugeConfiguration::cold(dims, 1.0), 0.0);
        d = d.add_scaled(
            ONE,
            &SparseComplexOperator::from_triplets(32, 32, vec![(0, 0, C64::new(0.0, 0.0)), (2, 2, C64::new(0.5, 0.0))]),
        );
        assert!(matches!(odd_even_reduce(&d, dims), Err(Error::NotWilson(_))));
    }

    #[test]
    fn split_merge_round_trip() {
        let dims = LatticeDims::new(4).unwrap();
        let s = ParitySplit::new(dims);
        let v: Vec<C64> = (0..32).map(|k| C64::new(k as f64, 0.0)).collect();
        let (e, o) = s.split(&v);
        assert_eq!(max_abs_diff(&s.merge(&e, &o), &v), 0.0);
        // site (0,0) and (1,0) lead the two classes
        assert_eq!(&s.even[0..2], &[0, 1]);
        assert_eq!(&s.odd[0..2], &[2, 3]);
    }
}
