use rustfft::num_complex::Complex64;

use super::fft::{unpack_real_pair, Fft2};
use super::grid::GridSpec;
use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// |·|_{L²}, ‖·‖_{H¹} and |A·|_{L²} of a field, all with the |Ω| factor.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormReport {
    pub l2: f64,
    pub h1: f64,
    pub h2: f64,
}

/// A real, mean-free, divergence-free periodic vector field.
///
/// Stored through its vorticity coefficients `ω̂(k) = i(k1·û2 − k2·û1)`,
/// which determine the velocity uniquely in this class
/// (`û = (i·k2, −i·k1)·ω̂/|k|²`). Construction enforces, coefficient by
/// coefficient, Hermitian symmetry, a zero mean mode and zero Nyquist rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    vort: Vec<Complex64>,
}

/// Unconstrained vector field coefficients `(û1(k), û2(k))` on the full grid,
/// mean and Nyquist modes included. Outputs of observers and noise models
/// live here until they are Leray-projected.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    pub u1: Vec<Complex64>,
    pub u2: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            vort: vec![Complex64::default(); grid.len()],
        }
    }

    /// Build from vorticity coefficients, symmetrising to enforce the field
    /// invariants.
    pub fn from_vorticity(grid: GridSpec, mut vort: Vec<Complex64>) -> Result<Self> {
        if vort.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                vort.len()
            )));
        }
        enforce_invariants(&grid, &mut vort);
        Ok(Self { grid, vort })
    }

    /// Caller guarantees the invariants already hold.
    pub(crate) fn from_vorticity_unchecked(grid: GridSpec, vort: Vec<Complex64>) -> Self {
        debug_assert_eq!(vort.len(), grid.len());
        Self { grid, vort }
    }

    /// Real-space vorticity samples `[y][x]` → field.
    pub fn from_vorticity_samples(grid: GridSpec, samples: &[f64]) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::InvalidInput("sample count does not match grid".into()));
        }
        let mut buf: Vec<Complex64> = samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        Fft2::new(grid.n).forward(&mut buf);
        Self::from_vorticity(grid, buf)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn vorticity(&self) -> &[Complex64] {
        &self.vort
    }

    /// Velocity coefficients at `(i1, i2)`.
    #[inline]
    pub fn velocity_at(&self, i1: usize, i2: usize) -> (Complex64, Complex64) {
        let n = self.grid.n;
        let ik2 = self.grid.int_k2(i1, i2);
        if ik2 == 0 {
            return (Complex64::default(), Complex64::default());
        }
        let (k1, k2) = self.grid.kvec(i1, i2);
        let w = self.vort[i1 * n + i2] / self.grid.k2(i1, i2);
        (I * k2 * w, -I * k1 * w)
    }

    pub fn to_vector(&self) -> VectorField {
        let n = self.grid.n;
        let mut u1 = vec![Complex64::default(); self.grid.len()];
        let mut u2 = vec![Complex64::default(); self.grid.len()];
        for i1 in 0..n {
            for i2 in 0..n {
                let (a, b) = self.velocity_at(i1, i2);
                u1[i1 * n + i2] = a;
                u2[i1 * n + i2] = b;
            }
        }
        VectorField {
            grid: self.grid,
            u1,
            u2,
        }
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &SpectralField, b: f64) -> Result<SpectralField> {
        self.grid.check_same(&other.grid)?;
        let vort = self.vort.iter().zip(&other.vort).map(|(x, y)| x * a + y * b).collect();
        Ok(Self::from_vorticity_unchecked(self.grid, vort))
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> SpectralField {
        let vort = self.vort.iter().map(|x| x * a).collect();
        Self::from_vorticity_unchecked(self.grid, vort)
    }

    /// `Σ_k w(k)·|ω̂(k)|²` with `w` a function of the physical |k|².
    fn weighted_sum(&self, weight: impl Fn(f64) -> f64) -> f64 {
        let n = self.grid.n;
        let mut acc = 0.0;
        for i1 in 0..n {
            for i2 in 0..n {
                let c = self.vort[i1 * n + i2];
                if c.re == 0.0 && c.im == 0.0 {
                    continue;
                }
                acc += weight(self.grid.k2(i1, i2)) * c.norm_sqr();
            }
        }
        acc
    }

    pub fn norms(&self) -> NormReport {
        let area = self.grid.area();
        NormReport {
            l2: (area * self.weighted_sum(|k2| 1.0 / k2)).sqrt(),
            h1: (area * self.weighted_sum(|_| 1.0)).sqrt(),
            h2: (area * self.weighted_sum(|k2| k2)).sqrt(),
        }
    }

    pub fn l2(&self) -> f64 {
        (self.grid.area() * self.weighted_sum(|k2| 1.0 / k2)).sqrt()
    }

    pub fn h1(&self) -> f64 {
        (self.grid.area() * self.weighted_sum(|_| 1.0)).sqrt()
    }

    /// `|u|²_{L²}/2`.
    pub fn energy(&self) -> f64 {
        0.5 * self.grid.area() * self.weighted_sum(|k2| 1.0 / k2)
    }

    /// `‖u‖²_{H¹}/2`.
    pub fn enstrophy(&self) -> f64 {
        0.5 * self.grid.area() * self.weighted_sum(|_| 1.0)
    }

    /// `(u, v)_{L²}`.
    pub fn inner(&self, other: &SpectralField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let n = self.grid.n;
        let mut acc = 0.0;
        for i1 in 0..n {
            for i2 in 0..n {
                let idx = i1 * n + i2;
                let k2 = self.grid.k2(i1, i2);
                if k2 == 0.0 {
                    continue;
                }
                acc += (self.vort[idx] * other.vort[idx].conj()).re / k2;
            }
        }
        Ok(acc * self.grid.area())
    }

    /// Largest violation of `û(−k) = conj(û(k))`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.n;
        let mut worst: f64 = 0.0;
        for i1 in 0..n {
            for i2 in 0..n {
                let j = self.grid.neg_index(i1) * n + self.grid.neg_index(i2);
                worst = worst.max((self.vort[i1 * n + i2] - self.vort[j].conj()).norm());
            }
        }
        worst
    }

    /// Largest `|k·û(k)|` relative to the largest `|k|·|û(k)|`, computed from
    /// the velocity coefficients.
    pub fn divergence_defect(&self) -> f64 {
        self.to_vector().divergence_defect()
    }

    /// Velocity components sampled on the collocation grid, `[y][x]`.
    pub fn velocity_samples(&self, fft: &mut Fft2) -> (Vec<f64>, Vec<f64>) {
        self.to_vector().to_physical(fft)
    }

    /// Whether every structural invariant holds to the given tolerance.
    pub fn check_structure(&self, tol: f64) -> Result<()> {
        let herm = self.hermitian_defect();
        let div = self.divergence_defect();
        let n = self.grid.n;
        let mean = self.vort[0].norm();
        let nyq = (0..n)
            .flat_map(|i| [self.vort[(n / 2) * n + i], self.vort[i * n + n / 2]])
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if herm > 0.0 || mean > 0.0 || nyq > 0.0 || div > tol {
            return Err(Error::InvalidInput(format!(
                "structure check failed: hermitian {herm:e}, mean {mean:e}, nyquist {nyq:e}, divergence {div:e}"
            )));
        }
        Ok(())
    }
}

impl VectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            u1: vec![Complex64::default(); grid.len()],
            u2: vec![Complex64::default(); grid.len()],
        }
    }

    pub fn new(grid: GridSpec, u1: Vec<Complex64>, u2: Vec<Complex64>) -> Result<Self> {
        if u1.len() != grid.len() || u2.len() != grid.len() {
            return Err(Error::InvalidInput("coefficient count does not match grid".into()));
        }
        Ok(Self { grid, u1, u2 })
    }

    /// Spatially constant field `(c1, c2)`.
    pub fn constant(grid: GridSpec, c1: f64, c2: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.u1[0] = Complex64::new(c1, 0.0);
        f.u2[0] = Complex64::new(c2, 0.0);
        f
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Real samples `[y][x]` of both components → coefficients.
    pub fn from_physical(grid: GridSpec, a: &[f64], b: &[f64], fft: &mut Fft2) -> Self {
        let n = grid.n;
        let mut z: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
        fft.forward(&mut z);
        let mut u1 = vec![Complex64::default(); n * n];
        let mut u2 = vec![Complex64::default(); n * n];
        unpack_real_pair(&z, n, &mut u1, &mut u2);
        Self { grid, u1, u2 }
    }

    /// Samples of both components on the collocation grid, `[y][x]`.
    pub fn to_physical(&self, fft: &mut Fft2) -> (Vec<f64>, Vec<f64>) {
        let mut z: Vec<Complex64> = self.u1.iter().zip(&self.u2).map(|(a, b)| a + I * b).collect();
        fft.inverse(&mut z);
        (z.iter().map(|c| c.re).collect(), z.iter().map(|c| c.im).collect())
    }

    pub fn lin_comb(&self, a: f64, other: &VectorField, b: f64) -> Result<VectorField> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            u1: self.u1.iter().zip(&other.u1).map(|(x, y)| x * a + y * b).collect(),
            u2: self.u2.iter().zip(&other.u2).map(|(x, y)| x * a + y * b).collect(),
        })
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> VectorField {
        Self {
            grid: self.grid,
            u1: self.u1.iter().map(|x| x * a).collect(),
            u2: self.u2.iter().map(|x| x * a).collect(),
        }
    }

    fn weighted_sum(&self, weight: impl Fn(f64) -> f64) -> f64 {
        let n = self.grid.n;
        let mut acc = 0.0;
        for i1 in 0..n {
            for i2 in 0..n {
                let idx = i1 * n + i2;
                let m = self.u1[idx].norm_sqr() + self.u2[idx].norm_sqr();
                if m != 0.0 {
                    acc += weight(self.grid.k2(i1, i2)) * m;
                }
            }
        }
        acc
    }

    pub fn l2(&self) -> f64 {
        (self.grid.area() * self.weighted_sum(|_| 1.0)).sqrt()
    }

    /// Gradient seminorm `(Σ |k|²|û|²·|Ω|)^{1/2}`.
    pub fn h1(&self) -> f64 {
        (self.grid.area() * self.weighted_sum(|k2| k2)).sqrt()
    }

    pub fn divergence_defect(&self) -> f64 {
        let n = self.grid.n;
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i1 in 0..n {
            for i2 in 0..n {
                let idx = i1 * n + i2;
                let (k1, k2) = self.grid.kvec(i1, i2);
                let div = self.u1[idx] * k1 + self.u2[idx] * k2;
                worst = worst.max(div.norm());
                let kk = (k1 * k1 + k2 * k2).sqrt();
                scale = scale.max(kk * (self.u1[idx].norm_sqr() + self.u2[idx].norm_sqr()).sqrt());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

/// Symmetrise so that `c(−k) = conj(c(k))`, and clear the mean and Nyquist
/// rows.
pub(crate) fn enforce_invariants(grid: &GridSpec, c: &mut [Complex64]) {
    let n = grid.n;
    for i1 in 0..n {
        for i2 in 0..n {
            let idx = i1 * n + i2;
            if grid.is_nyquist(i1) || grid.is_nyquist(i2) {
                c[idx] = Complex64::default();
                continue;
            }
            let j = grid.neg_index(i1) * n + grid.neg_index(i2);
            if idx < j {
                let avg = (c[idx] + c[j].conj()) * 0.5;
                c[idx] = avg;
                c[j] = avg.conj();
            } else if idx == j {
                c[idx] = Complex64::default();
            }
        }
    }
}
