//! Quenched U(1) gauge configurations: Metropolis generation, plaquettes and
//! the binary `WGF1` file format.
//!
//! The action is `S = -beta * sum_z Re(plaquette(z))`, so that large `beta`
//! orders the links towards `U = 1`. Random numbers come from ChaCha8 seeded
//! with a 64-bit value.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::{neighbor, site_index, Direction, LatticeDims, Sign, Site};
use crate::vector::C64;

const MAGIC: &[u8; 4] = b"WGF1";
const HEADER_BYTES: usize = 4 + 4 + 8 + 8 + 8;

/// Snapshot sweeps of the standard ensemble: 11000, 12000, ..., 19000.
pub const SNAPSHOT_SWEEPS: [u64; 9] = [
    11_000, 12_000, 13_000, 14_000, 15_000, 16_000, 17_000, 18_000, 19_000,
];

pub const DEFAULT_PROPOSAL_WIDTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GaugeMeta {
    pub seed: u64,
    pub sweep_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaugeConfiguration {
    dims: LatticeDims,
    beta: f64,
    phases: Vec<f64>,
    pub meta: GaugeMeta,
}

/// Reduces an angle to `(-pi, pi]`.
pub fn wrap_phase(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

impl GaugeConfiguration {
    /// Cold start: every link is 1.
    pub fn cold(dims: LatticeDims, beta: f64) -> Self {
        Self {
            dims,
            beta,
            phases: vec![0.0; 2 * dims.volume()],
            meta: GaugeMeta::default(),
        }
    }

    /// Hot start with i.i.d. uniform phases.
    pub fn random<R: Rng + ?Sized>(dims: LatticeDims, beta: f64, rng: &mut R) -> Self {
        let phases = (0..2 * dims.volume())
            .map(|_| wrap_phase(rng.random_range(-PI..PI)))
            .collect();
        Self {
            dims,
            beta,
            phases,
            meta: GaugeMeta::default(),
        }
    }

    pub fn from_phases(dims: LatticeDims, beta: f64, phases: Vec<f64>, meta: GaugeMeta) -> Result<Self> {
        if phases.len() != 2 * dims.volume() {
            return Err(Error::DimensionMismatch {
                expected: 2 * dims.volume(),
                actual: phases.len(),
            });
        }
        Ok(Self {
            dims,
            beta,
            phases,
            meta,
        })
    }

    #[inline]
    pub fn dims(&self) -> LatticeDims {
        self.dims
    }

    #[inline]
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    #[inline]
    pub fn phase(&self, s: Site, mu: Direction) -> f64 {
        self.phases[2 * site_index(s, self.dims) + mu.index()]
    }

    #[inline]
    pub fn set_phase(&mut self, s: Site, mu: Direction, theta: f64) {
        let k = 2 * site_index(s, self.dims) + mu.index();
        self.phases[k] = wrap_phase(theta);
    }

    /// `U_mu^z = exp(i theta_mu^z)`.
    #[inline]
    pub fn link(&self, s: Site, mu: Direction) -> C64 {
        C64::from_polar(1.0, self.phase(s, mu))
    }

    /// Phase of the plaquette at `z`:
    /// `theta_x^z + theta_y^{z+x} - theta_x^{z+y} - theta_y^z`.
    pub fn plaquette_phase(&self, z: Site) -> f64 {
        let d = self.dims;
        let zx = neighbor(z, Direction::X, Sign::Forward, d);
        let zy = neighbor(z, Direction::Y, Sign::Forward, d);
        self.phase(z, Direction::X) + self.phase(zx, Direction::Y)
            - self.phase(zy, Direction::X)
            - self.phase(z, Direction::Y)
    }

    pub fn plaquette(&self, z: Site) -> C64 {
        C64::from_polar(1.0, self.plaquette_phase(z))
    }

    pub fn mean_plaquette(&self) -> f64 {
        let sum: f64 = self.dims.sites().map(|z| self.plaquette_phase(z).cos()).sum();
        sum / self.dims.volume() as f64
    }

    pub fn action(&self) -> f64 {
        -self.beta * self.dims.sites().map(|z| self.plaquette_phase(z).cos()).sum::<f64>()
    }

    /// Sum of `cos` over the two plaquettes containing link `(s, mu)`.
    fn local_cos(&self, s: Site, mu: Direction) -> f64 {
        let d = self.dims;
        let other = match mu {
            Direction::X => neighbor(s, Direction::Y, Sign::Backward, d),
            Direction::Y => neighbor(s, Direction::X, Sign::Backward, d),
        };
        self.plaquette_phase(s).cos() + self.plaquette_phase(other).cos()
    }

    /// Applies `U_mu^z -> g_z U_mu^z conj(g_{z+mu})` with `g_z = exp(i alpha_z)`.
    pub fn gauge_transform(&self, alpha: &[f64]) -> Result<Self> {
        if alpha.len() != self.dims.volume() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.volume(),
                actual: alpha.len(),
            });
        }
        let mut out = self.clone();
        for s in self.dims.sites() {
            let i = site_index(s, self.dims);
            for mu in Direction::ALL {
                let j = site_index(neighbor(s, mu, Sign::Forward, self.dims), self.dims);
                out.set_phase(s, mu, self.phase(s, mu) + alpha[i] - alpha[j]);
            }
        }
        Ok(out)
    }
}

/// Statistics of a batch of Metropolis sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepStats {
    pub proposals: u64,
    pub accepted: u64,
}

impl SweepStats {
    pub fn acceptance(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// A Markov chain owning its configuration and random state, so that
/// snapshots taken at increasing sweep counts come from one trajectory.
#[derive(Debug, Clone)]
pub struct MetropolisChain {
    cfg: GaugeConfiguration,
    rng: ChaCha8Rng,
    width: f64,
}

impl MetropolisChain {
    pub fn new(mut cfg: GaugeConfiguration, seed: u64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidArgument(format!("proposal width {width} must be positive")));
        }
        cfg.meta.seed = seed;
        Ok(Self {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            width,
        })
    }

    pub fn config(&self) -> &GaugeConfiguration {
        &self.cfg
    }

    pub fn into_config(self) -> GaugeConfiguration {
        self.cfg
    }

    /// Full-lattice sweeps in site order, `x` link before `y` link.
    pub fn sweep(&mut self, n_sweeps: u64) -> SweepStats {
        let mut stats = SweepStats::default();
        let dims = self.cfg.dims;
        let beta = self.cfg.beta;
        for _ in 0..n_sweeps {
            for i in 0..dims.volume() {
                let s = dims.site_at(i);
                for mu in Direction::ALL {
                    let old = self.cfg.phase(s, mu);
                    let before = self.cfg.local_cos(s, mu);
                    let step: f64 = self.rng.random_range(-self.width..self.width);
                    self.cfg.set_phase(s, mu, old + step);
                    let after = self.cfg.local_cos(s, mu);
                    let delta_s = -beta * (after - before);
                    let u: f64 = self.rng.random();
                    stats.proposals += 1;
                    if delta_s <= 0.0 || u < (-delta_s).exp() {
                        stats.accepted += 1;
                    } else {
                        self.cfg.set_phase(s, mu, old);
                    }
                }
            }
            self.cfg.meta.sweep_count += 1;
        }
        stats
    }

    /// Advances to each requested absolute sweep count in turn and returns a
    /// copy of the configuration at each.
    pub fn snapshots(&mut self, at: &[u64]) -> Result<Vec<GaugeConfiguration>> {
        let mut out = Vec::with_capacity(at.len());
        for &target in at {
            let now = self.cfg.meta.sweep_count;
            if target < now {
                return Err(Error::InvalidArgument(format!(
                    "snapshot sweeps must be nondecreasing ({target} after {now})"
                )));
            }
            self.sweep(target - now);
            out.push(self.cfg.clone());
        }
        Ok(out)
    }
}

/// Runs `n_sweeps` Metropolis sweeps from `cfg` with a fresh generator seeded
/// by `seed`. Zero sweeps returns the input unchanged.
pub fn metropolis_sweeps(
    cfg: &GaugeConfiguration,
    n_sweeps: u64,
    proposal_width: f64,
    seed: u64,
) -> Result<GaugeConfiguration> {
    if n_sweeps == 0 {
        return Ok(cfg.clone());
    }
    let mut chain = MetropolisChain::new(cfg.clone(), seed, proposal_width)?;
    chain.sweep(n_sweeps);
    Ok(chain.into_config())
}

/// Cold-start chain sampled at [`SNAPSHOT_SWEEPS`].
pub fn generate_ensemble(dims: LatticeDims, beta: f64, seed: u64, sweeps: &[u64]) -> Result<Vec<GaugeConfiguration>> {
    let mut chain = MetropolisChain::new(GaugeConfiguration::cold(dims, beta), seed, DEFAULT_PROPOSAL_WIDTH)?;
    chain.snapshots(sweeps)
}

pub fn encode_config(cfg: &GaugeConfiguration) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_BYTES + 8 * cfg.phases.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(cfg.dims.n() as u32).to_le_bytes());
    buf.extend_from_slice(&cfg.beta.to_le_bytes());
    buf.extend_from_slice(&cfg.meta.seed.to_le_bytes());
    buf.extend_from_slice(&cfg.meta.sweep_count.to_le_bytes());
    for p in &cfg.phases {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    buf
}

pub fn decode_config(bytes: &[u8]) -> Result<GaugeConfiguration> {
    if bytes.len() < HEADER_BYTES {
        return Err(Error::LengthMismatch {
            expected: HEADER_BYTES,
            actual: bytes.len(),
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[0..4])));
    }
    let u32_at = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().unwrap());
    let u64_at = |k: usize| u64::from_le_bytes(bytes[k..k + 8].try_into().unwrap());
    let f64_at = |k: usize| f64::from_le_bytes(bytes[k..k + 8].try_into().unwrap());
    let n = u32_at(4) as usize;
    let dims = LatticeDims::new(n).map_err(|_| Error::Format(format!("invalid extent {n} in header")))?;
    let beta = f64_at(8);
    let meta = GaugeMeta {
        seed: u64_at(16),
        sweep_count: u64_at(24),
    };
    let expected = HEADER_BYTES + 8 * 2 * dims.volume();
    if bytes.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let phases = (0..2 * dims.volume()).map(|k| f64_at(HEADER_BYTES + 8 * k)).collect();
    GaugeConfiguration::from_phases(dims, beta, phases, meta)
}

pub fn save_config(cfg: &GaugeConfiguration, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_config(cfg))?;
    Ok(())
}

pub fn load_config(path: impl AsRef<Path>) -> Result<GaugeConfiguration> {
    decode_config(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(n: usize) -> LatticeDims {
        LatticeDims::new(n).unwrap()
    }

    #[test]
    fn cold_plaquette_is_one() {
        let c = GaugeConfiguration::cold(dims(4), 1.0);
        for z in c.dims().sites() {
            assert_eq!(c.plaquette(z), C64::new(1.0, 0.0));
        }
    }

    #[test]
    fn single_flipped_link() {
        let mut c = GaugeConfiguration::cold(dims(4), 1.0);
        let z = Site { x: 1, y: 1 };
        c.set_phase(z, Direction::X, PI);
        let p = c.plaquette(z);
        assert!((p - C64::new(-1.0, 0.0)).norm() < 1e-15);
        // the link also borders the plaquette below it
        let below = Site { x: 1, y: 0 };
        assert!((c.plaquette(below) - C64::new(-1.0, 0.0)).norm() < 1e-15);
        assert!((c.plaquette(Site { x: 3, y: 3 }) - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn plaquette_matches_link_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = GaugeConfiguration::random(dims(6), 1.0, &mut rng);
        let d = c.dims();
        for z in d.sites() {
            let zx = neighbor(z, Direction::X, Sign::Forward, d);
            let zy = neighbor(z, Direction::Y, Sign::Forward, d);
            let prod = c.link(z, Direction::Y).conj()
                * c.link(zy, Direction::X).conj()
                * c.link(zx, Direction::Y)
                * c.link(z, Direction::X);
            assert!((prod - c.plaquette(z)).norm() < 1e-13);
        }
    }

    #[test]
    fn zero_sweeps_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = GaugeConfiguration::random(dims(4), 2.0, &mut rng);
        assert_eq!(metropolis_sweeps(&c, 0, 1.0, 9).unwrap(), c);
    }

    #[test]
    fn beta_zero_accepts_everything() {
        let c = GaugeConfiguration::cold(dims(4), 0.0);
        let mut chain = MetropolisChain::new(c, 1, 1.0).unwrap();
        let st = chain.sweep(10);
        assert_eq!(st.accepted, st.proposals);
        assert_eq!(chain.config().meta.sweep_count, 10);
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(PI), PI);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_width() {
        let c = GaugeConfiguration::cold(dims(4), 1.0);
        assert!(MetropolisChain::new(c, 0, 0.0).is_err());
    }

    #[test]
    fn encode_decode_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut c = GaugeConfiguration::random(dims(6), 6.0, &mut rng);
        c.meta = GaugeMeta {
            seed: 77,
            sweep_count: 12_000,
        };
        let back = decode_config(&encode_config(&c)).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn decode_errors() {
        let c = GaugeConfiguration::cold(dims(4), 1.0);
        let mut bytes = encode_config(&c);
        bytes.pop();
        assert!(matches!(decode_config(&bytes), Err(Error::LengthMismatch { .. })));
        let mut bytes = encode_config(&c);
        bytes[0] = b'X';
        assert!(matches!(decode_config(&bytes), Err(Error::Format(_))));
    }
}
