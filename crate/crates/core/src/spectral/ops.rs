use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use super::fft::{unpack_real_pair, Fft2};
use super::field::{enforce_invariants, SpectralField, VectorField};
use super::grid::GridSpec;
use crate::error::Result;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Leray–Helmholtz projection onto mean-free, divergence-free fields.
///
/// Projecting a [`SpectralField`] returns it unchanged, which makes the
/// projector idempotent coefficient for coefficient.
pub trait LerayProject {
    fn project_leray(&self) -> SpectralField;
}

impl LerayProject for SpectralField {
    fn project_leray(&self) -> SpectralField {
        self.clone()
    }
}

impl LerayProject for VectorField {
    fn project_leray(&self) -> SpectralField {
        let grid = *self.grid();
        let n = grid.n;
        let mut vort = vec![Complex64::default(); grid.len()];
        for i1 in 0..n {
            for i2 in 0..n {
                let idx = i1 * n + i2;
                let (k1, k2) = grid.kvec(i1, i2);
                vort[idx] = I * (self.u2[idx] * k1 - self.u1[idx] * k2);
            }
        }
        enforce_invariants(&grid, &mut vort);
        SpectralField::from_vorticity_unchecked(grid, vort)
    }
}

pub fn project_leray<F: LerayProject + ?Sized>(raw: &F) -> SpectralField {
    raw.project_leray()
}

/// `A u`: multiplication by |k|².
pub fn stokes_apply(u: &SpectralField) -> SpectralField {
    let grid = *u.grid();
    let n = grid.n;
    let vort = u
        .vorticity()
        .iter()
        .enumerate()
        .map(|(idx, c)| c * grid.k2(idx / n, idx % n))
        .collect();
    SpectralField::from_vorticity_unchecked(grid, vort)
}

/// `P_m u`: keeps the first `m` conjugate pairs of the eigenvalue ordering.
pub fn low_mode_project(u: &SpectralField, m: usize) -> SpectralField {
    let grid = *u.grid();
    let ranks = grid.mode_ordering().rank_table(&grid);
    let vort = u
        .vorticity()
        .iter()
        .zip(&ranks)
        .map(|(c, &r)| if r < m { *c } else { Complex64::default() })
        .collect();
    SpectralField::from_vorticity_unchecked(grid, vort)
}

/// Zero every coefficient outside the dealiased square.
pub fn dealias(u: &SpectralField) -> SpectralField {
    let grid = *u.grid();
    let n = grid.n;
    let vort = u
        .vorticity()
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            if grid.is_resolved(idx / n, idx % n) {
                *c
            } else {
                Complex64::default()
            }
        })
        .collect();
    SpectralField::from_vorticity_unchecked(grid, vort)
}

/// `B(u, v) = P_σ((u·∇)v)` in velocity form. Inputs are truncated to the
/// dealiased square before the products are formed.
pub fn bilinear(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    u.grid().check_same(v.grid())?;
    let grid = *u.grid();
    let n = grid.n;
    let mut fft = Fft2::new(n);
    let uu = dealias(u).to_vector();
    let vv = dealias(v).to_vector();

    let mut zu: Vec<Complex64> = uu.u1.iter().zip(&uu.u2).map(|(a, b)| a + I * b).collect();
    let mut zx = vec![Complex64::default(); grid.len()];
    let mut zy = vec![Complex64::default(); grid.len()];
    for i1 in 0..n {
        for i2 in 0..n {
            let idx = i1 * n + i2;
            let (k1, k2) = grid.kvec(i1, i2);
            zx[idx] = I * k1 * (vv.u1[idx] + I * vv.u2[idx]);
            zy[idx] = I * k2 * (vv.u1[idx] + I * vv.u2[idx]);
        }
    }
    fft.inverse(&mut zu);
    fft.inverse(&mut zx);
    fft.inverse(&mut zy);
    let mut z: Vec<Complex64> = (0..grid.len())
        .map(|p| {
            let (u1, u2) = (zu[p].re, zu[p].im);
            let a = u1 * zx[p].re + u2 * zy[p].re;
            let b = u1 * zx[p].im + u2 * zy[p].im;
            Complex64::new(a, b)
        })
        .collect();
    fft.forward(&mut z);
    let mut out = VectorField::zeros(grid);
    unpack_real_pair(&z, n, &mut out.u1, &mut out.u2);
    Ok(dealias(&out.project_leray()))
}

/// Pseudo-spectral evaluation of the advective vorticity tendency
/// `(u·∇ω)^`, reusing transform plans and buffers across calls.
#[derive(Debug, Clone)]
pub struct Advection {
    grid: GridSpec,
    fft: Fft2,
    rows: Vec<usize>,
    resolved: Vec<bool>,
    vel: Vec<Complex64>,
    grad: Vec<Complex64>,
}

impl Advection {
    pub fn new(grid: GridSpec) -> Self {
        let n = grid.n;
        let kc = grid.dealias_cutoff();
        let rows = (0..n).filter(|&i| grid.wavenumber(i).abs() <= kc).collect();
        let resolved = (0..grid.len()).map(|idx| grid.is_resolved(idx / n, idx % n)).collect();
        Self {
            grid,
            fft: Fft2::new(n),
            rows,
            resolved,
            vel: vec![Complex64::default(); grid.len()],
            grad: vec![Complex64::default(); grid.len()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Writes the dealiased, Hermitian-symmetrised `(u·∇ω)^` into `out` and
    /// returns `max |u|` over the collocation grid.
    pub fn tendency(&mut self, w: &SpectralField, out: &mut [Complex64]) -> f64 {
        let grid = self.grid;
        let n = grid.n;
        let vort = w.vorticity();
        for i1 in 0..n {
            for i2 in 0..n {
                let idx = i1 * n + i2;
                if !self.resolved[idx] {
                    self.vel[idx] = Complex64::default();
                    self.grad[idx] = Complex64::default();
                    continue;
                }
                let (k1, k2) = grid.kvec(i1, i2);
                let kk = k1 * k1 + k2 * k2;
                let c = vort[idx];
                if kk == 0.0 {
                    self.vel[idx] = Complex64::default();
                    self.grad[idx] = Complex64::default();
                    continue;
                }
                let s = c / kk;
                // u1 + i·u2 with u1 = i k2 ω/|k|², u2 = -i k1 ω/|k|²
                self.vel[idx] = I * k2 * s + k1 * s;
                // ∂xω + i·∂yω
                self.grad[idx] = I * k1 * c - k2 * c;
            }
        }
        self.fft.inverse_rows(&mut self.vel, Some(&self.rows));
        self.fft.inverse_rows(&mut self.grad, Some(&self.rows));
        let mut max_speed2: f64 = 0.0;
        for (v, g) in self.vel.iter_mut().zip(self.grad.iter()) {
            max_speed2 = max_speed2.max(v.norm_sqr());
            *v = Complex64::new(v.re * g.re + v.im * g.im, 0.0);
        }
        self.fft.forward_rows(&mut self.vel, Some(&self.rows));
        for (idx, o) in out.iter_mut().enumerate() {
            *o = if self.resolved[idx] {
                self.vel[idx]
            } else {
                Complex64::default()
            };
        }
        enforce_invariants(&grid, out);
        max_speed2.sqrt()
    }

    /// `B(u, u)` as a field.
    pub fn apply(&mut self, u: &SpectralField) -> SpectralField {
        let mut out = vec![Complex64::default(); self.grid.len()];
        self.tendency(u, &mut out);
        SpectralField::from_vorticity_unchecked(self.grid, out)
    }
}

/// Random real field with coefficients supported on the integer shell band
/// `kmin ≤ |k| ≤ kmax` (intersected with the dealiased square), amplitudes
/// decaying like `|k|^{-slope}`, and random phases.
pub fn random_band_field(grid: GridSpec, kmin: f64, kmax: f64, slope: f64, seed: u64) -> SpectralField {
    let n = grid.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vort = vec![Complex64::default(); grid.len()];
    for i1 in 0..n {
        for i2 in 0..n {
            let r: f64 = rng.gen_range(-1.0..1.0);
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let kk = (grid.int_k2(i1, i2) as f64).sqrt();
            if kk == 0.0 || kk < kmin || kk > kmax || !grid.is_resolved(i1, i2) {
                continue;
            }
            vort[i1 * n + i2] = Complex64::from_polar(r * kk.powf(-slope), phase);
        }
    }
    enforce_invariants(&grid, &mut vort);
    SpectralField::from_vorticity_unchecked(grid, vort)
}

/// Random smooth field over the full dealiased range with a steep spectrum.
pub fn random_smooth_field(grid: GridSpec, seed: u64) -> SpectralField {
    let kc = grid.dealias_cutoff() as f64;
    random_band_field(grid, 1.0, kc * std::f64::consts::SQRT_2, 2.5, seed)
}
