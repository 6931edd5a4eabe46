//! Periodic two-dimensional lattice geometry.
//!
//! Sites are 0-based and laid out lexicographically, y-major then x, so the
//! site index of `(x, y)` is `y * n + x`. Spinor vectors are site-major and
//! spin-minor: the entry for spin `s` at site `i` lives at `2 * i + s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of space-time dimensions handled by this crate.
pub const DIMENSIONS: usize = 2;

/// Spin components per grid point.
pub const SPINS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeDims {
    n: usize,
}

impl LatticeDims {
    /// `n` must be even and at least 4 so that both parity classes have
    /// `n^2 / 2` points.
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidExtent(n));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        DIMENSIONS
    }

    #[inline]
    pub fn volume(&self) -> usize {
        self.n * self.n
    }

    /// Spinor variables on the full lattice.
    #[inline]
    pub fn variables(&self) -> usize {
        SPINS * self.volume()
    }

    pub fn site(&self, x: i64, y: i64) -> Site {
        let n = self.n as i64;
        Site {
            x: x.rem_euclid(n) as usize,
            y: y.rem_euclid(n) as usize,
        }
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.volume()).map(move |i| self.site_at(i))
    }

    #[inline]
    pub fn site_at(&self, index: usize) -> Site {
        Site {
            x: index % self.n,
            y: index / self.n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    X,
    Y,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::X, Direction::Y];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Direction::X => 0,
            Direction::Y => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

/// Lexicographic index `y * n + x`; coordinates must already be reduced.
#[inline]
pub fn site_index(s: Site, dims: LatticeDims) -> usize {
    debug_assert!(s.x < dims.n && s.y < dims.n);
    s.y * dims.n + s.x
}

#[inline]
pub fn neighbor(s: Site, mu: Direction, sign: Sign, dims: LatticeDims) -> Site {
    let n = dims.n;
    let step = |c: usize| match sign {
        Sign::Forward => (c + 1) % n,
        Sign::Backward => (c + n - 1) % n,
    };
    match mu {
        Direction::X => Site { x: step(s.x), y: s.y },
        Direction::Y => Site { x: s.x, y: step(s.y) },
    }
}

#[inline]
pub fn parity(s: Site) -> Parity {
    if (s.x + s.y) % 2 == 0 {
        Parity::Even
    } else {
        Parity::Odd
    }
}

/// Index of a site within its own parity class.
///
/// Within a row all sites of one parity differ in `x` by multiples of two,
/// so `(y * n + x) / 2` enumerates each class as `0..n^2/2` in lexicographic
/// order.
#[inline]
pub fn parity_index(s: Site, dims: LatticeDims) -> usize {
    site_index(s, dims) / 2
}

/// Inverse of [`parity_index`] for the given parity class.
#[inline]
pub fn site_of_parity_index(index: usize, parity_class: Parity, dims: LatticeDims) -> Site {
    let half = dims.n / 2;
    let y = index / half;
    let k = index % half;
    let offset = match parity_class {
        Parity::Even => y % 2,
        Parity::Odd => (y + 1) % 2,
    };
    Site { x: 2 * k + offset, y }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn site_index_examples() {
        let d = LatticeDims::new(4).unwrap();
        assert_eq!(site_index(d.site(0, 0), d), 0);
        assert_eq!(site_index(d.site(3, 2), d), 11);
        assert_eq!(site_index(d.site(4, 0), d), 0);
        assert_eq!(d.site(-1, -1), Site { x: 3, y: 3 });
    }

    #[test]
    fn rejects_bad_extent() {
        assert!(LatticeDims::new(3).is_err());
        assert!(LatticeDims::new(2).is_err());
        assert!(LatticeDims::new(7).is_err());
    }

    #[test]
    fn neighbor_examples() {
        let d = LatticeDims::new(4).unwrap();
        assert_eq!(
            neighbor(Site { x: 0, y: 0 }, Direction::X, Sign::Backward, d),
            Site { x: 3, y: 0 }
        );
        assert_eq!(
            neighbor(Site { x: 1, y: 2 }, Direction::Y, Sign::Forward, d),
            Site { x: 1, y: 3 }
        );
    }

    #[test]
    fn neighbors_are_involutions() {
        let d = LatticeDims::new(6).unwrap();
        for s in d.sites() {
            for mu in Direction::ALL {
                let f = neighbor(s, mu, Sign::Forward, d);
                assert_eq!(neighbor(f, mu, Sign::Backward, d), s);
                let b = neighbor(s, mu, Sign::Backward, d);
                assert_eq!(neighbor(b, mu, Sign::Forward, d), s);
            }
        }
    }

    #[test]
    fn parity_counts() {
        assert_eq!(parity(Site { x: 0, y: 0 }), Parity::Even);
        assert_eq!(parity(Site { x: 1, y: 0 }), Parity::Odd);
        let d = LatticeDims::new(8).unwrap();
        let even = d.sites().filter(|&s| parity(s) == Parity::Even).count();
        assert_eq!(even, 32);
    }

    #[test]
    fn site_index_is_bijective() {
        let d = LatticeDims::new(10).unwrap();
        let mut idx: Vec<usize> = d.sites().map(|s| site_index(s, d)).collect();
        idx.sort_unstable();
        assert!(idx.iter().enumerate().all(|(i, &v)| i == v));
    }

    #[test]
    fn parity_index_round_trip() {
        let d = LatticeDims::new(8).unwrap();
        for s in d.sites() {
            let p = parity(s);
            let k = parity_index(s, d);
            assert!(k < d.volume() / 2);
            assert_eq!(site_of_parity_index(k, p, d), s);
        }
    }
}
