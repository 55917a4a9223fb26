use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const TILE: usize = 16;

/// Square 2D FFT on row-major buffers.
///
/// `forward` maps physical `[y][x]` samples to spectral `[k1][k2]`
/// coefficients normalised so that `u(x) = Σ û(k) e^{ik·x}`; `inverse` is its
/// exact inverse. Each direction does one transpose, which is why the
/// physical and spectral layouts are swapped.
pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Clone for Fft2 {
    fn clone(&self) -> Self {
        Self::new(self.n)
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self {
            n,
            fwd,
            inv,
            scratch: vec![Complex64::default(); scratch_len],
            tmp: vec![Complex64::default(); n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Physical `[y][x]` → spectral `[k1][k2]`, in place.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.forward_rows(data, None);
    }

    /// Like [`forward`](Self::forward) but only the spectral rows listed in
    /// `rows` are computed; all other rows are set to zero.
    pub fn forward_rows(&mut self, data: &mut [Complex64], rows: Option<&[usize]>) {
        let n = self.n;
        assert_eq!(data.len(), n * n);
        self.fwd.process_with_scratch(data, &mut self.scratch);
        transpose(data, &mut self.tmp, n);
        let norm = 1.0 / (n * n) as f64;
        match rows {
            None => {
                self.fwd.process_with_scratch(&mut self.tmp, &mut self.scratch);
                for (d, t) in data.iter_mut().zip(self.tmp.iter()) {
                    *d = t * norm;
                }
            }
            Some(rows) => {
                data.fill(Complex64::default());
                for &r in rows {
                    let row = &mut self.tmp[r * n..(r + 1) * n];
                    self.fwd.process_with_scratch(row, &mut self.scratch);
                    for (d, t) in data[r * n..(r + 1) * n].iter_mut().zip(row.iter()) {
                        *d = t * norm;
                    }
                }
            }
        }
    }

    /// Spectral `[k1][k2]` → physical `[y][x]`, in place.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.inverse_rows(data, None);
    }

    /// Inverse transform assuming only spectral rows in `rows` are nonzero.
    pub fn inverse_rows(&mut self, data: &mut [Complex64], rows: Option<&[usize]>) {
        let n = self.n;
        assert_eq!(data.len(), n * n);
        match rows {
            None => self.inv.process_with_scratch(data, &mut self.scratch),
            Some(rows) => {
                for &r in rows {
                    self.inv
                        .process_with_scratch(&mut data[r * n..(r + 1) * n], &mut self.scratch);
                }
            }
        }
        transpose(data, &mut self.tmp, n);
        self.inv.process_with_scratch(&mut self.tmp, &mut self.scratch);
        data.copy_from_slice(&self.tmp);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for bi in (0..n).step_by(TILE) {
        for bj in (0..n).step_by(TILE) {
            for i in bi..(bi + TILE).min(n) {
                for j in bj..(bj + TILE).min(n) {
                    dst[j * n + i] = src[i * n + j];
                }
            }
        }
    }
}

/// Split the transform of `a + i·b` (both real) into the transforms of `a`
/// and `b`.
pub fn unpack_real_pair(z: &[Complex64], n: usize, a: &mut [Complex64], b: &mut [Complex64]) {
    for i1 in 0..n {
        let j1 = (n - i1) % n;
        for i2 in 0..n {
            let j2 = (n - i2) % n;
            let zk = z[i1 * n + i2];
            let zm = z[j1 * n + j2].conj();
            a[i1 * n + i2] = (zk + zm) * 0.5;
            // (zk - zm) / (2i)
            let d = zk - zm;
            b[i1 * n + i2] = Complex64::new(d.im * 0.5, -d.re * 0.5);
        }
    }
}
