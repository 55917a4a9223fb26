//! Observation operators, bounded measurement noise, and observation streams.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::Trajectory;
use crate::spectral::{unpack_real_pair, Complex64, Fft2, GridSpec, LerayProject, SpectralField, VectorField};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Maximum number of enlarged cells meeting any enlarged cell.
pub const VOLUME_OVERLAP_C1: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObserverSpec {
    /// The first `m` conjugate pairs of the Stokes eigenvalue ordering.
    Fourier { m: usize },
    /// Cell averages recombined through a smooth partition of unity whose
    /// ramps have total width `mollify_width` times the cell side.
    VolumeAverage { cells_per_axis: usize, mollify_width: f64 },
}

impl ObserverSpec {
    /// Fourier observer keeping every pair with integer `|k|² ≤ max_int_k2`.
    pub fn fourier_cutoff(grid: &GridSpec, max_int_k2: i64) -> Self {
        ObserverSpec::Fourier {
            m: grid.mode_ordering().count_within(max_int_k2),
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Fourier {
        m: usize,
        keep: Vec<bool>,
        pairs: Vec<(usize, usize)>,
        lambda_next: Option<f64>,
    },
    Volume {
        cells: usize,
        width: f64,
        filter_x: Vec<Complex64>,
        weights: Vec<[(usize, f64); 2]>,
    },
}

/// A linear observation operator `I_h` bound to a grid.
#[derive(Debug, Clone)]
pub struct ObservationOperator {
    spec: ObserverSpec,
    grid: GridSpec,
    h_eff: f64,
    kind: Kind,
}

/// Scratch buffers for [`ObservationOperator`] evaluations.
#[derive(Debug, Clone)]
pub struct ObsWorkspace {
    fft: Fft2,
    buf: Vec<Complex64>,
    cell: Vec<Complex64>,
}

impl ObsWorkspace {
    pub fn new(grid: &GridSpec) -> Self {
        Self {
            fft: Fft2::new(grid.n),
            buf: vec![Complex64::default(); grid.len()],
            cell: Vec::new(),
        }
    }
}

fn smootherstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Signed periodic distance `x - c` folded into `[-L/2, L/2)`.
fn periodic_offset(x: f64, c: f64, side: f64) -> f64 {
    (x - c + 0.5 * side).rem_euclid(side) - 0.5 * side
}

/// 1D partition weight of cell `a` at coordinate `x`, before renormalisation.
fn ramp_weight(x: f64, a: usize, cells: usize, width: f64, side: f64) -> f64 {
    let delta = side / cells as f64;
    let center = (a as f64 + 0.5) * delta;
    let d = periodic_offset(x, center, side).abs();
    let ramp = width * delta;
    // 1 inside the core, smooth drop across [Δ/2 − ramp/2, Δ/2 + ramp/2]
    1.0 - smootherstep((d - 0.5 * delta + 0.5 * ramp) / ramp)
}

impl ObservationOperator {
    pub fn new(spec: ObserverSpec, grid: GridSpec) -> Result<Self> {
        let n = grid.n;
        match spec {
            ObserverSpec::Fourier { m } => {
                let ordering = grid.mode_ordering();
                if m > ordering.total() {
                    return Err(Error::IncompatibleObserver(format!(
                        "m = {m} exceeds the {} available pairs",
                        ordering.total()
                    )));
                }
                let ranks = ordering.rank_table(&grid);
                let next = ordering.next_int_k2(m);
                let mut keep = vec![false; grid.len()];
                keep[0] = true;
                for i1 in 0..n {
                    for i2 in 0..n {
                        let idx = i1 * n + i2;
                        if ranks[idx] < m {
                            keep[idx] = true;
                        } else if grid.is_nyquist(i1) || grid.is_nyquist(i2) {
                            keep[idx] = match next {
                                None => true,
                                Some(nk) => grid.int_k2(i1, i2) < nk,
                            };
                        }
                    }
                }
                let pairs = ordering.pairs()[..m]
                    .iter()
                    .map(|p| {
                        (
                            grid.index_of(p.k1) * n + grid.index_of(p.k2),
                            grid.index_of(-p.k1) * n + grid.index_of(-p.k2),
                        )
                    })
                    .collect();
                let lambda_next = next.map(|k| k as f64 * grid.lambda1());
                let h_eff = lambda_next.map_or(0.0, |l| l.powf(-0.5));
                Ok(Self {
                    spec,
                    grid,
                    h_eff,
                    kind: Kind::Fourier {
                        m,
                        keep,
                        pairs,
                        lambda_next,
                    },
                })
            }
            ObserverSpec::VolumeAverage {
                cells_per_axis: cells,
                mollify_width: width,
            } => {
                if cells == 0 || !n.is_multiple_of(cells) {
                    return Err(Error::IncompatibleObserver(format!(
                        "{cells} cells per axis do not divide the {n}-point grid"
                    )));
                }
                if !(width > 0.0 && width < 1.0) {
                    return Err(Error::IncompatibleObserver(format!(
                        "mollify width must lie in (0, 1), got {width}"
                    )));
                }
                let side = grid.side;
                let delta = side / cells as f64;
                let filter_x = (0..n)
                    .map(|i| {
                        let k = grid.wavenumber(i) as f64 * grid.wavenumber_scale();
                        let s = sinc(0.5 * k * delta);
                        if grid.is_nyquist(i) {
                            Complex64::new(s * (0.5 * k * delta).cos(), 0.0)
                        } else {
                            Complex64::from_polar(s, 0.5 * k * delta)
                        }
                    })
                    .collect();
                let mut weights = Vec::with_capacity(n);
                for p in 0..n {
                    let x = p as f64 * grid.dx();
                    let mut w: Vec<(usize, f64)> = (0..cells)
                        .map(|a| (a, ramp_weight(x, a, cells, width, side)))
                        .filter(|&(_, v)| v > 0.0)
                        .collect();
                    let total: f64 = w.iter().map(|&(_, v)| v).sum();
                    for e in &mut w {
                        e.1 /= total;
                    }
                    debug_assert!(w.len() <= 2 || cells <= 2);
                    let mut pair = [(0usize, 0.0f64); 2];
                    for (slot, e) in pair.iter_mut().zip(w) {
                        *slot = e;
                    }
                    weights.push(pair);
                }
                Ok(Self {
                    spec,
                    grid,
                    h_eff: std::f64::consts::SQRT_2 * delta,
                    kind: Kind::Volume {
                        cells,
                        width,
                        filter_x,
                        weights,
                    },
                })
            }
        }
    }

    pub fn spec(&self) -> &ObserverSpec {
        &self.spec
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Effective resolution `h`: `λ_{m+1}^{-1/2}` or the cell diameter.
    pub fn h_eff(&self) -> f64 {
        self.h_eff
    }

    /// `λ_{m+1}` for Fourier observers.
    pub fn lambda_next(&self) -> Option<f64> {
        match &self.kind {
            Kind::Fourier { lambda_next, .. } => *lambda_next,
            Kind::Volume { .. } => None,
        }
    }

    pub fn is_fourier(&self) -> bool {
        matches!(self.kind, Kind::Fourier { .. })
    }

    pub fn workspace(&self) -> ObsWorkspace {
        ObsWorkspace::new(&self.grid)
    }

    /// `I_h φ` for an unconstrained field.
    pub fn apply_vector(&self, phi: &VectorField, ws: &mut ObsWorkspace) -> Result<VectorField> {
        phi.grid().check_same(&self.grid)?;
        match &self.kind {
            Kind::Fourier { keep, .. } => {
                let mask = |v: &[Complex64]| {
                    v.iter()
                        .zip(keep)
                        .map(|(c, &k)| if k { *c } else { Complex64::default() })
                        .collect()
                };
                VectorField::new(self.grid, mask(&phi.u1), mask(&phi.u2))
            }
            Kind::Volume { .. } => {
                self.cell_means(phi, ws);
                let means = std::mem::take(&mut ws.cell);
                let out = self.recombine(&means, ws);
                ws.cell = means;
                Ok(out)
            }
        }
    }

    /// `I_h u` for a field.
    pub fn apply(&self, u: &SpectralField, ws: &mut ObsWorkspace) -> Result<VectorField> {
        self.apply_vector(&u.to_vector(), ws)
    }

    /// `P_σ I_h u`.
    pub fn observe_projected(&self, u: &SpectralField, ws: &mut ObsWorkspace) -> Result<SpectralField> {
        u.grid().check_same(&self.grid)?;
        match &self.kind {
            Kind::Fourier { keep, .. } => {
                let vort = u
                    .vorticity()
                    .iter()
                    .zip(keep)
                    .map(|(c, &k)| if k { *c } else { Complex64::default() })
                    .collect();
                SpectralField::from_vorticity(self.grid, vort)
            }
            Kind::Volume { .. } => Ok(self.apply(u, ws)?.project_leray()),
        }
    }

    /// Exact continuum cell means of both components, row-major `[b][a]`
    /// with `a` along x.
    fn cell_means(&self, phi: &VectorField, ws: &mut ObsWorkspace) {
        let Kind::Volume { cells, filter_x, .. } = &self.kind else {
            unreachable!()
        };
        let n = self.grid.n;
        for i1 in 0..n {
            for i2 in 0..n {
                let idx = i1 * n + i2;
                ws.buf[idx] = (phi.u1[idx] + I * phi.u2[idx]) * filter_x[i1] * filter_x[i2];
            }
        }
        ws.fft.inverse(&mut ws.buf);
        let s = n / cells;
        ws.cell.clear();
        for b in 0..*cells {
            for a in 0..*cells {
                ws.cell.push(ws.buf[(b * s) * n + a * s]);
            }
        }
    }

    /// `Σ_j c_j ψ_j` for per-cell complex-packed values `c_j = c1 + i·c2`.
    fn recombine(&self, values: &[Complex64], ws: &mut ObsWorkspace) -> VectorField {
        let Kind::Volume { cells, weights, .. } = &self.kind else {
            unreachable!()
        };
        let n = self.grid.n;
        for q in 0..n {
            for p in 0..n {
                let mut acc = Complex64::default();
                for &(b, wb) in &weights[q] {
                    if wb == 0.0 {
                        continue;
                    }
                    for &(a, wa) in &weights[p] {
                        if wa == 0.0 {
                            continue;
                        }
                        acc += values[b * cells + a] * (wa * wb);
                    }
                }
                ws.buf[q * n + p] = acc;
            }
        }
        ws.fft.forward(&mut ws.buf);
        let mut out = VectorField::zeros(self.grid);
        unpack_real_pair(&ws.buf, n, &mut out.u1, &mut out.u2);
        out
    }

    /// Cell-average observers only: number of cells per axis.
    pub fn cells_per_axis(&self) -> Option<usize> {
        match &self.kind {
            Kind::Volume { cells, .. } => Some(*cells),
            Kind::Fourier { .. } => None,
        }
    }

    /// Fourier observers only: retained pair count.
    pub fn mode_pairs(&self) -> Option<usize> {
        match &self.kind {
            Kind::Fourier { m, .. } => Some(*m),
            Kind::Volume { .. } => None,
        }
    }

    /// `ψ_j` for `j = (a, b)` sampled on the collocation grid, `[y][x]`.
    pub fn partition_function(&self, a: usize, b: usize) -> Option<Vec<f64>> {
        let Kind::Volume { weights, .. } = &self.kind else {
            return None;
        };
        let n = self.grid.n;
        let w1 = |p: usize, c: usize| -> f64 { weights[p].iter().filter(|e| e.0 == c && e.1 > 0.0).map(|e| e.1).sum() };
        let mut out = vec![0.0; n * n];
        for q in 0..n {
            for p in 0..n {
                out[q * n + p] = w1(p, a) * w1(q, b);
            }
        }
        Some(out)
    }

    /// Largest deviation of `Σ_j ψ_j` from 1 over the collocation points.
    pub fn partition_defect(&self) -> Option<f64> {
        let Kind::Volume { weights, .. } = &self.kind else {
            return None;
        };
        let n = self.grid.n;
        let mut worst: f64 = 0.0;
        for q in 0..n {
            let sy: f64 = weights[q].iter().map(|e| e.1).sum();
            for p in 0..n {
                let sx: f64 = weights[p].iter().map(|e| e.1).sum();
                let mut s = 0.0;
                for &(_, wb) in &weights[q] {
                    for &(_, wa) in &weights[p] {
                        s += wa * wb;
                    }
                }
                worst = worst.max((s - 1.0).abs()).max((sx * sy - 1.0).abs());
            }
        }
        Some(worst)
    }

    /// Largest number of enlarged cells whose supports meet a given enlarged
    /// cell (itself included).
    pub fn max_overlap(&self) -> Option<usize> {
        let Kind::Volume { cells, width, .. } = &self.kind else {
            return None;
        };
        let c = *cells as i64;
        // enlarged 1D supports of cells a and a+d intersect iff |d|·Δ < Δ(1 + width)
        let reach: Vec<i64> = (0..c)
            .filter(|&d| {
                let dd = d.min(c - d) as f64;
                dd < 1.0 + width
            })
            .collect();
        Some(reach.len() * reach.len())
    }

    /// `h · max_j max_x |∇ψ_j(x)|`, with gradients of the trigonometric
    /// interpolants of `ψ_j` evaluated at collocation points.
    pub fn measure_c0(&self) -> Option<f64> {
        let Kind::Volume { cells, weights, .. } = &self.kind else {
            return None;
        };
        let n = self.grid.n;
        let fft_f = FftPlanner::new().plan_fft_forward(n);
        let fft_i = FftPlanner::new().plan_fft_inverse(n);
        let mut worst: f64 = 0.0;
        // every ψ_j is a translate of ψ_0 up to renormalisation round-off
        for a in 0..*cells {
            let psi: Vec<f64> = (0..n)
                .map(|p| weights[p].iter().filter(|e| e.0 == a).map(|e| e.1).sum())
                .collect();
            let mut z: Vec<Complex64> = psi.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft_f.process(&mut z);
            for (i, c) in z.iter_mut().enumerate() {
                let k = if self.grid.is_nyquist(i) {
                    0.0
                } else {
                    self.grid.wavenumber(i) as f64 * self.grid.wavenumber_scale()
                };
                *c *= I * k / n as f64;
            }
            fft_i.process(&mut z);
            let dpsi: Vec<f64> = z.iter().map(|c| c.re).collect();
            let psi_max = psi.iter().cloned().fold(0.0, f64::max);
            let dpsi_max = dpsi.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for p in 0..n {
                for q in 0..n {
                    let gx = dpsi[p] * psi[q];
                    let gy = psi[p] * dpsi[q];
                    worst = worst.max((gx * gx + gy * gy).sqrt());
                }
            }
            debug_assert!(worst <= dpsi_max * psi_max * 2.0 + 1e-12);
        }
        Some(self.h_eff * worst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// Uniform on the largest axis-aligned box inside the radius-ε ball.
    #[default]
    UniformBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub epsilon: f64,
    pub seed: u64,
    #[serde(default)]
    pub distribution: NoiseDistribution,
}

impl NoiseModel {
    pub fn new(epsilon: f64, seed: u64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::InvalidInput(format!("epsilon must be ≥ 0, got {epsilon}")));
        }
        Ok(Self {
            epsilon,
            seed,
            distribution: NoiseDistribution::UniformBox,
        })
    }

    pub fn noiseless() -> Self {
        Self {
            epsilon: 0.0,
            seed: 0,
            distribution: NoiseDistribution::UniformBox,
        }
    }

    fn rng(&self, n: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(n);
        rng
    }

    /// Per-cell error vectors `ε_{n,j}` for `cells` cells, drawn in `j` order.
    pub fn cell_errors(&self, n: u64, cells: usize) -> Vec<[f64; 2]> {
        let mut rng = self.rng(n);
        let half = self.epsilon * std::f64::consts::FRAC_1_SQRT_2;
        (0..cells)
            .map(|_| {
                let a: f64 = rng.gen_range(-1.0..1.0);
                let b: f64 = rng.gen_range(-1.0..1.0);
                [half * a, half * b]
            })
            .collect()
    }

    /// Per-pair complex error vectors for `pairs` retained Fourier pairs.
    pub fn mode_errors(&self, n: u64, pairs: usize) -> Vec<[Complex64; 2]> {
        let mut rng = self.rng(n);
        let half = 0.5 * self.epsilon;
        (0..pairs)
            .map(|_| {
                let mut d = [0.0f64; 4];
                for x in &mut d {
                    *x = half * rng.gen_range(-1.0..1.0);
                }
                [Complex64::new(d[0], d[1]), Complex64::new(d[2], d[3])]
            })
            .collect()
    }
}

/// `η_n` for observation index `n`. For cell averages it is
/// `Σ_j ε_{n,j} ψ_j`; for Fourier observers each retained pair receives an
/// independent complex vector of modulus at most ε.
pub fn draw_noise(model: &NoiseModel, n: u64, op: &ObservationOperator, ws: &mut ObsWorkspace) -> VectorField {
    let grid = op.grid;
    if model.epsilon == 0.0 {
        return VectorField::zeros(grid);
    }
    match &op.kind {
        Kind::Volume { cells, .. } => {
            let errs = model.cell_errors(n, cells * cells);
            let packed: Vec<Complex64> = errs.iter().map(|e| Complex64::new(e[0], e[1])).collect();
            op.recombine(&packed, ws)
        }
        Kind::Fourier { pairs, .. } => {
            let errs = model.mode_errors(n, pairs.len());
            let mut out = VectorField::zeros(grid);
            for (&(p, q), e) in pairs.iter().zip(errs) {
                out.u1[p] = e[0];
                out.u2[p] = e[1];
                out.u1[q] = e[0].conj();
                out.u2[q] = e[1].conj();
            }
            out
        }
    }
}

/// Residuals below this fraction of `|φ|_{L²}` count as exact reproduction.
const ROUND_OFF: f64 = 1e-12;

fn ratio(num: f64, den: f64, scale: f64) -> f64 {
    if num <= ROUND_OFF * scale {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// `max |φ − I_h φ|_{L²} / (h ‖φ‖_{H¹})` over the corpus.
pub fn estimate_c0(op: &ObservationOperator, corpus: &[VectorField]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ws = op.workspace();
    let mut worst: f64 = 0.0;
    for phi in corpus {
        let resid = phi.sub(&op.apply_vector(phi, &mut ws)?)?.l2();
        worst = worst.max(ratio(resid, op.h_eff * phi.h1(), phi.l2()));
    }
    Ok(worst)
}

/// `max |I_h φ|_{L²} / |φ|_{L²}` over nonzero corpus members.
pub fn estimate_c1(op: &ObservationOperator, corpus: &[VectorField]) -> Result<f64> {
    let mut ws = op.workspace();
    let mut worst: Option<f64> = None;
    for phi in corpus {
        let den = phi.l2();
        if den == 0.0 {
            continue;
        }
        let r = op.apply_vector(phi, &mut ws)?.l2() / den;
        worst = Some(worst.map_or(r, |w: f64| w.max(r)));
    }
    worst.ok_or(Error::EmptyCorpus)
}

/// Noisy coarse observations `ũ(t_n) = P_σ(I_h u(t_n) + η_n)`.
#[derive(Debug, Clone)]
pub struct ObservationStream {
    pub times: Vec<f64>,
    pub observations: Vec<SpectralField>,
    pub kappa: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub spec: ObserverSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamManifest {
    pub format: String,
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub kappa: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub operator: ObserverSpec,
    pub snapshots: Vec<String>,
}

impl ObservationStream {
    pub fn new(
        times: Vec<f64>,
        observations: Vec<SpectralField>,
        kappa: f64,
        epsilon: f64,
        seed: u64,
        spec: ObserverSpec,
    ) -> Result<Self> {
        if times.len() != observations.len() {
            return Err(Error::InvalidInput("times and observations differ in length".into()));
        }
        let s = Self {
            times,
            observations,
            kappa,
            epsilon,
            seed,
            spec,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidInput(format!("kappa must be > 0, got {}", self.kappa)));
        }
        check_gaps(&self.times, self.kappa)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_gap(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut names = Vec::with_capacity(self.len());
        for (i, f) in self.observations.iter().enumerate() {
            let name = format!("obs_{i:06}.ndg2");
            crate::snapshot::write(&dir.join(&name), f)?;
            names.push(name);
        }
        let grid = self
            .observations
            .first()
            .map(|f| *f.grid())
            .ok_or_else(|| Error::InvalidInput("cannot save an empty stream".into()))?;
        let manifest = StreamManifest {
            format: "ndg-stream-1".into(),
            grid,
            times: self.times.clone(),
            kappa: self.kappa,
            epsilon: self.epsilon,
            seed: self.seed,
            operator: self.spec,
            snapshots: names,
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest.json");
        if !mpath.exists() {
            return Err(Error::MissingArtifact(mpath));
        }
        let manifest: StreamManifest = serde_json::from_str(&std::fs::read_to_string(&mpath)?)?;
        if manifest.snapshots.len() != manifest.times.len() {
            return Err(Error::Format("manifest lists mismatched snapshots and times".into()));
        }
        let observations = manifest
            .snapshots
            .iter()
            .map(|name| crate::snapshot::read_on(&dir.join(name), &manifest.grid))
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            manifest.times,
            observations,
            manifest.kappa,
            manifest.epsilon,
            manifest.seed,
            manifest.operator,
        )
    }
}

/// Strictly increasing times with gaps at most `kappa`.
pub fn check_gaps(times: &[f64], kappa: f64) -> Result<()> {
    for w in times.windows(2) {
        let gap = w[1] - w[0];
        if !(gap > 0.0) {
            return Err(Error::InvalidInput(format!(
                "observation times not increasing at {}",
                w[1]
            )));
        }
        if gap > kappa * (1.0 + 1e-12) {
            return Err(Error::StreamGap { t: w[0], gap, kappa });
        }
    }
    Ok(())
}

/// `ũ(t_n) = P_σ(I_h u(t_n) + η_n)` at each requested checkpoint time.
pub fn observe_trajectory(
    u: &Trajectory,
    times: &[f64],
    op: &ObservationOperator,
    model: &NoiseModel,
    kappa: f64,
) -> Result<ObservationStream> {
    let mut ws = op.workspace();
    let mut obs = Vec::with_capacity(times.len());
    for (n, &t) in times.iter().enumerate() {
        let i = u.times.partition_point(|&s| s < t);
        if u.times.get(i) != Some(&t) || !u.is_checkpoint[i] {
            return Err(Error::MissingCheckpoint { t });
        }
        obs.push(observe(&u.fields[i], n as u64, op, model, &mut ws)?);
    }
    ObservationStream::new(times.to_vec(), obs, kappa, model.epsilon, model.seed, *op.spec())
}

/// A single observation `P_σ(I_h u + η_n)`.
pub fn observe(
    u: &SpectralField,
    n: u64,
    op: &ObservationOperator,
    model: &NoiseModel,
    ws: &mut ObsWorkspace,
) -> Result<SpectralField> {
    let clean = op.observe_projected(u, ws)?;
    if model.epsilon == 0.0 {
        return Ok(clean);
    }
    let eta = draw_noise(model, n, op, ws).project_leray();
    clean.add(&eta)
}
