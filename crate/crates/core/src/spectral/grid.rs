use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Collocation grid and Fourier index conventions for the periodic square.
///
/// Index `i` in `0..n` maps to the integer wavenumber `i` for `i < n/2` and
/// `i - n` otherwise, so the symmetric range is `-n/2..n/2`. The physical
/// wavevector is `(2π/L)·(k1, k2)`. Spectral arrays are row-major in
/// `(k1, k2)`; physical arrays are row-major in `(y, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub side: f64,
    pub dealias_fraction: f64,
}

impl GridSpec {
    pub fn new(n: usize, side: f64, dealias_fraction: f64) -> Result<Self> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "n_points_per_axis must be an even integer >= 4, got {n}"
            )));
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::InvalidGrid(format!("domain side must be > 0, got {side}")));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(Error::InvalidGrid(format!(
                "dealias fraction must lie in (0, 1], got {dealias_fraction}"
            )));
        }
        Ok(Self {
            n,
            side,
            dealias_fraction,
        })
    }

    /// `n`×`n` grid on `[0, 2π)²` with the 2/3 rule.
    pub fn periodic_2pi(n: usize) -> Result<Self> {
        Self::new(n, 2.0 * PI, 2.0 / 3.0)
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `2π/L`.
    pub fn wavenumber_scale(&self) -> f64 {
        2.0 * PI / self.side
    }

    /// Smallest positive Stokes eigenvalue, `(2π/L)²`.
    pub fn lambda1(&self) -> f64 {
        let s = self.wavenumber_scale();
        s * s
    }

    pub fn area(&self) -> f64 {
        self.side * self.side
    }

    pub fn dx(&self) -> f64 {
        self.side / self.n as f64
    }

    /// Signed integer wavenumber for array index `i`.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Array index for a signed integer wavenumber (taken modulo `n`).
    #[inline]
    pub fn index_of(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    /// Index of `-k` for array index `i`.
    #[inline]
    pub fn neg_index(&self, i: usize) -> usize {
        (self.n - i) % self.n
    }

    #[inline]
    pub fn is_nyquist(&self, i: usize) -> bool {
        i == self.n / 2
    }

    /// Largest retained |k_i| under the dealiasing rule.
    pub fn dealias_cutoff(&self) -> i64 {
        let raw = (self.dealias_fraction * self.n as f64 / 2.0 + 1e-9).floor() as i64;
        raw.min(self.n as i64 / 2 - 1)
    }

    /// Whether the mode at flat index `idx` survives dealiasing.
    #[inline]
    pub fn is_resolved(&self, i1: usize, i2: usize) -> bool {
        let kc = self.dealias_cutoff();
        self.wavenumber(i1).abs() <= kc && self.wavenumber(i2).abs() <= kc
    }

    /// Integer |k|² for indices `(i1, i2)`.
    #[inline]
    pub fn int_k2(&self, i1: usize, i2: usize) -> i64 {
        let a = self.wavenumber(i1);
        let b = self.wavenumber(i2);
        a * a + b * b
    }

    /// Physical wavevector components.
    #[inline]
    pub fn kvec(&self, i1: usize, i2: usize) -> (f64, f64) {
        let s = self.wavenumber_scale();
        (s * self.wavenumber(i1) as f64, s * self.wavenumber(i2) as f64)
    }

    /// Physical |k|² (the Stokes eigenvalue of the mode).
    #[inline]
    pub fn k2(&self, i1: usize, i2: usize) -> f64 {
        self.lambda1() * self.int_k2(i1, i2) as f64
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: format!("{self:?}"),
                right: format!("{other:?}"),
            })
        }
    }

    /// Conjugate-pair ordering used by the low-mode projector.
    pub fn mode_ordering(&self) -> ModeOrdering {
        ModeOrdering::new(self)
    }
}

/// One conjugate pair `{k, -k}` represented by its canonical member
/// (`k1 > 0`, or `k1 == 0 && k2 > 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModePair {
    pub k1: i64,
    pub k2: i64,
    pub int_k2: i64,
}

/// Conjugate pairs (Nyquist rows excluded) sorted by |k|², then by `(k1, k2)`.
#[derive(Debug, Clone)]
pub struct ModeOrdering {
    pairs: Vec<ModePair>,
}

impl ModeOrdering {
    fn new(grid: &GridSpec) -> Self {
        let half = grid.n as i64 / 2;
        let mut pairs = Vec::new();
        for k1 in 0..half {
            for k2 in (1 - half)..half {
                if k1 == 0 && k2 <= 0 {
                    continue;
                }
                pairs.push(ModePair {
                    k1,
                    k2,
                    int_k2: k1 * k1 + k2 * k2,
                });
            }
        }
        pairs.sort_by_key(|p| (p.int_k2, p.k1, p.k2));
        Self { pairs }
    }

    pub fn pairs(&self) -> &[ModePair] {
        &self.pairs
    }

    pub fn total(&self) -> usize {
        self.pairs.len()
    }

    /// Number of pairs with integer |k|² at most `max_int_k2`.
    pub fn count_within(&self, max_int_k2: i64) -> usize {
        self.pairs.partition_point(|p| p.int_k2 <= max_int_k2)
    }

    /// Integer |k|² of the `(m+1)`-th pair, i.e. the first excluded shell.
    pub fn next_int_k2(&self, m: usize) -> Option<i64> {
        self.pairs.get(m).map(|p| p.int_k2)
    }

    /// Rank (0-based) of every flat index; `usize::MAX` for the zero mode
    /// and Nyquist rows.
    pub fn rank_table(&self, grid: &GridSpec) -> Vec<usize> {
        let mut table = vec![usize::MAX; grid.len()];
        for (rank, p) in self.pairs.iter().enumerate() {
            let a = grid.index_of(p.k1) * grid.n + grid.index_of(p.k2);
            let b = grid.index_of(-p.k1) * grid.n + grid.index_of(-p.k2);
            table[a] = rank;
            table[b] = rank;
        }
        table
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_and_tiny_grids() {
        assert!(GridSpec::new(7, 1.0, 2.0 / 3.0).is_err());
        assert!(GridSpec::new(2, 1.0, 2.0 / 3.0).is_err());
        assert!(GridSpec::new(8, 0.0, 2.0 / 3.0).is_err());
        assert!(GridSpec::new(8, 1.0, 0.0).is_err());
        assert!(GridSpec::new(8, 1.0, 1.5).is_err());
    }

    #[test]
    fn lambda1_matches_side() {
        let g = GridSpec::new(16, 1.0, 2.0 / 3.0).unwrap();
        assert!((g.lambda1() - (2.0 * PI).powi(2)).abs() < 1e-12);
        let g = GridSpec::periodic_2pi(16).unwrap();
        assert!((g.lambda1() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn wavenumbers_are_symmetric() {
        let g = GridSpec::periodic_2pi(8).unwrap();
        let ks: Vec<i64> = (0..8).map(|i| g.wavenumber(i)).collect();
        assert_eq!(ks, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        for i in 0..8 {
            assert_eq!(g.index_of(g.wavenumber(i)), i);
        }
    }

    #[test]
    fn two_thirds_cutoff_is_alias_free() {
        for n in [16usize, 32, 64, 128, 256] {
            let g = GridSpec::periodic_2pi(n).unwrap();
            let kc = g.dealias_cutoff();
            assert!(3 * kc < n as i64, "n={n} kc={kc}");
        }
        assert_eq!(GridSpec::periodic_2pi(128).unwrap().dealias_cutoff(), 42);
        assert_eq!(GridSpec::new(64, 1.0, 1.0).unwrap().dealias_cutoff(), 31);
    }

    #[test]
    fn shell_ordering_for_small_grid() {
        let g = GridSpec::periodic_2pi(8).unwrap();
        let ord = g.mode_ordering();
        // (n-1)^2 - 1 non-Nyquist nonzero modes, grouped into pairs.
        assert_eq!(ord.total(), (7 * 7 - 1) / 2);
        let first: Vec<(i64, i64)> = ord.pairs()[..4].iter().map(|p| (p.k1, p.k2)).collect();
        assert_eq!(first, vec![(0, 1), (1, 0), (1, -1), (1, 1)]);
        assert_eq!(ord.count_within(1), 2);
        assert_eq!(ord.count_within(2), 4);
        assert_eq!(ord.next_int_k2(2), Some(2));
    }

    #[test]
    fn shell_count_for_ac_cutoff() {
        let g = GridSpec::periodic_2pi(128).unwrap();
        let ord = g.mode_ordering();
        let m = ord.count_within(42);
        // lattice points with 0 < |k|^2 <= 42, halved
        let mut brute = 0;
        for a in -7i64..=7 {
            for b in -7i64..=7 {
                let r = a * a + b * b;
                if r > 0 && r <= 42 {
                    brute += 1;
                }
            }
        }
        assert_eq!(2 * m, brute);
        assert_eq!(ord.next_int_k2(m), Some(45));
    }
}
