//! Complex vector kernels and the spinor field type.

use std::ops::{Deref, DerefMut};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// `a^H b`.
#[inline]
pub fn dotc(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    C64::new(re, im)
}

#[inline]
pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

#[inline]
pub fn norm(a: &[C64]) -> f64 {
    norm_sqr(a).sqrt()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn scale(alpha: C64, x: &mut [C64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

pub fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Relative Euclidean distance `||a - b|| / ||b||`.
pub fn rel_diff(a: &[C64], b: &[C64]) -> f64 {
    let nb = norm(b);
    let d = norm(&sub(a, b));
    if nb == 0.0 {
        d
    } else {
        d / nb
    }
}

/// Complex normal samples with `E|z|^2 = 1`.
pub fn random_normal<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(s * re, s * im)
        })
        .collect()
}

/// Spinor-valued field on one level of a hierarchy: two spin components per
/// grid point, site-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    values: Vec<C64>,
    level: usize,
}

impl SpinorField {
    pub fn new(values: Vec<C64>, level: usize) -> Self {
        debug_assert!(values.len() % 2 == 0);
        Self { values, level }
    }

    pub fn zeros(len: usize, level: usize) -> Self {
        Self::new(vec![ZERO; len], level)
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn into_inner(self) -> Vec<C64> {
        self.values
    }
}

impl Deref for SpinorField {
    type Target = [C64];
    fn deref(&self) -> &[C64] {
        &self.values
    }
}

impl DerefMut for SpinorField {
    fn deref_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }
}
