//! Independent oracles shared by the integration tests and the acceptance
//! runner: Bessel ratios, the free-field Fourier spectrum, dense reference
//! iterations and small random fixtures.
#![allow(dead_code)]

pub mod checks;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wilson_bamg::eigensolver::DenseComplexMatrix;
use wilson_bamg::gauge::GaugeConfiguration;
use wilson_bamg::lattice::LatticeDims;
use wilson_bamg::mg::{build_hierarchy, CycleParams, Hierarchy};
use wilson_bamg::operator::{assemble_wilson, odd_even_reduce};
use wilson_bamg::transfer::LevelGeometry;
use wilson_bamg::C64;

/// Modified Bessel function `I_nu(x)` from its power series.
pub fn bessel_i(nu: u32, x: f64) -> f64 {
    let h = x / 2.0;
    let mut term = (1..=nu).fold(1.0, |t, k| t * h / k as f64);
    let mut sum = term;
    for k in 1..500 {
        term *= h * h / (k as f64 * (k + nu) as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Exact infinite-volume plaquette of 2-D U(1) with action
/// `-beta sum Re U_p`.
pub fn exact_plaquette(beta: f64) -> f64 {
    bessel_i(1, beta) / bessel_i(0, beta)
}

/// Eigenvalues of the free Wilson operator on a periodic `n x n` lattice:
/// `m + sum_mu (1 - cos p_mu) +- i sqrt(sum_mu sin^2 p_mu)`.
pub fn free_field_spectrum(n: usize, m: f64) -> Vec<C64> {
    let mut out = Vec::with_capacity(2 * n * n);
    for k1 in 0..n {
        for k2 in 0..n {
            let (p1, p2) = (2.0 * PI * k1 as f64 / n as f64, 2.0 * PI * k2 as f64 / n as f64);
            let re = m + 2.0 - p1.cos() - p2.cos();
            let im = (p1.sin().powi(2) + p2.sin().powi(2)).sqrt();
            out.push(C64::new(re, im));
            out.push(C64::new(re, -im));
        }
    }
    out
}

/// Largest distance in a greedy one-to-one matching of two multisets.
pub fn multiset_distance(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for z in a {
        let (k, d) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, w)| (k, (w - z).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("equal lengths");
        used[k] = true;
        worst = worst.max(d);
    }
    worst
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_config(n: usize, beta: f64, seed: u64) -> GaugeConfiguration {
    GaugeConfiguration::random(LatticeDims::new(n).expect("valid extent"), beta, &mut rng(seed))
}

/// A random dense complex matrix with entries of unit variance plus `shift`
/// on the diagonal.
pub fn random_dense(n: usize, shift: f64, seed: u64) -> DenseComplexMatrix {
    let mut r = rng(seed);
    DenseComplexMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { shift } else { 0.0 };
        C64::new(r.random::<f64>() - 0.5 + d, r.random::<f64>() - 0.5)
    })
}

/// One forward Gauss-Seidel sweep on `A^H A x = A^H b`, computed densely.
pub fn normal_equation_gauss_seidel(a: &DenseComplexMatrix, x: &mut [C64], b: &[C64]) {
    let ah = a.adjoint();
    let n = ah.matmul(a);
    let rhs = ah.matvec(b);
    for i in 0..x.len() {
        let mut s = rhs[i];
        for j in 0..x.len() {
            if j != i {
                s -= n[(i, j)] * x[j];
            }
        }
        x[i] = s / n[(i, i)];
    }
}

/// Hierarchy for the reduced operator of a random configuration.
pub fn toy_hierarchy(n: usize, floor: usize, beta: f64, m: f64, seed: u64) -> Hierarchy {
    let cfg = random_config(n, beta, seed);
    let sys = odd_even_reduce(&assemble_wilson(&cfg, m), cfg.dims()).expect("Wilson operator");
    let params = CycleParams {
        coarsest_extent: Some(floor),
        k_r: 4,
        k_e: 4,
        seed,
        ..Default::default()
    };
    build_hierarchy(sys.z(), LevelGeometry::new(n).unwrap(), &params).expect("setup")
}

/// Kolmogorov-Smirnov statistic of samples against the uniform law on
/// `[lo, hi]`.
pub fn ks_uniform(samples: &mut [f64], lo: f64, hi: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
