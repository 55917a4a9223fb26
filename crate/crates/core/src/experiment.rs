//! Declarative experiment configuration and the command implementations
//! behind the `ndg` binary.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nudging::{
    check_conditions_fourier, check_conditions_general, fit_contraction, run_twin, Bounds, ConditionReport,
    ContractionFit, NudgingParams, TwinOutcome, TwinSettings,
};
use crate::observers::{
    draw_noise, estimate_c0, estimate_c1, NoiseModel, ObservationOperator, ObserverSpec, VOLUME_OVERLAP_C1,
};
use crate::solver::{band_forcing, scaled_random_field, spin_up, Scheme, SolverConfig, SpinUpReport};
use crate::spectral::{random_smooth_field, GridSpec, SpectralField, VectorField};
use crate::statistics::{compare_series, is_decreasing_trend, ladder, AverageReport, Observable, ScalarSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(default = "default_side")]
    pub side: f64,
    #[serde(default = "default_dealias")]
    pub dealias_fraction: f64,
}

fn default_side() -> f64 {
    2.0 * PI
}

fn default_dealias() -> f64 {
    2.0 / 3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_nu")]
    pub nu: f64,
    pub dt: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
}

fn default_nu() -> f64 {
    1.0
}

fn default_scheme() -> Scheme {
    Scheme::ImexCnab2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    pub grashof: f64,
    #[serde(default = "default_kmin")]
    pub k_min: f64,
    #[serde(default = "default_kmax")]
    pub k_max: f64,
    pub seed: Option<u64>,
}

fn default_kmin() -> f64 {
    2.0
}

fn default_kmax() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinupConfig {
    pub duration: f64,
    #[serde(default = "default_min_viscous")]
    pub min_viscous_times: f64,
    pub seed: Option<u64>,
}

fn default_min_viscous() -> f64 {
    20.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObserverKind {
    Fourier,
    VolumeAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    pub kind: ObserverKind,
    /// Fourier: keep pairs with integer `|k|²` at most this.
    pub max_int_k2: Option<i64>,
    /// Fourier: explicit pair count (alternative to `max_int_k2`).
    pub m: Option<usize>,
    pub cells_per_axis: Option<usize>,
    #[serde(default = "default_width")]
    pub mollify_width: f64,
    pub kappa: Option<f64>,
    /// Alternative to `kappa`: the product `βκ`.
    pub beta_kappa: Option<f64>,
    #[serde(default)]
    pub epsilon: f64,
    pub seed: Option<u64>,
}

fn default_width() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NudgingConfig {
    pub beta: f64,
    #[serde(default = "default_safety")]
    pub safety_c: f64,
}

fn default_safety() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub t_end: f64,
    #[serde(default = "default_record")]
    pub record_every: usize,
    #[serde(default = "default_check")]
    pub check_every: usize,
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default = "default_v0_kmax")]
    pub v0_k_max: f64,
    pub v0_seed: Option<u64>,
    pub max_wall_seconds: Option<f64>,
}

fn default_record() -> usize {
    100
}

fn default_check() -> usize {
    1000
}

fn default_v0_kmax() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    /// Averaging window lengths, all starting at the run start.
    #[serde(default)]
    pub ladder: Vec<f64>,
    #[serde(default = "default_slack")]
    pub trend_slack: f64,
}

fn default_slack() -> f64 {
    0.1
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            ladder: Vec::new(),
            trend_slack: default_slack(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_corpus")]
    pub corpus_size: usize,
    #[serde(default = "default_draws")]
    pub noise_draws: u64,
    #[serde(default = "default_c0_cells")]
    pub c0_cells: Vec<usize>,
    #[serde(default = "default_noise_cells")]
    pub noise_cells: Vec<usize>,
    #[serde(default = "default_verify_eps")]
    pub epsilon: f64,
}

fn default_corpus() -> usize {
    100
}

fn default_draws() -> u64 {
    1000
}

fn default_c0_cells() -> Vec<usize> {
    vec![8, 16, 32]
}

fn default_noise_cells() -> Vec<usize> {
    vec![16, 32]
}

fn default_verify_eps() -> f64 {
    1e-3
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            corpus_size: default_corpus(),
            noise_draws: default_draws(),
            c0_cells: default_c0_cells(),
            noise_cells: default_noise_cells(),
            epsilon: default_verify_eps(),
        }
    }
}

/// Full experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    pub solver: SolverSection,
    pub forcing: ForcingConfig,
    pub spinup: SpinupConfig,
    pub observation: ObservationConfig,
    pub nudging: NudgingConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub stats: StatsConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

/// Seeds actually used by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub forcing: u64,
    pub spinup: u64,
    pub noise: u64,
    pub v0: u64,
}

/// Derived quantities recomputed from the config, never read from input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub grid: GridSpec,
    pub lambda1: f64,
    pub kappa: f64,
    pub observer: ObserverSpec,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic component seed from the master seed and a tag.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    tag.bytes().fold(splitmix(master), |acc, b| splitmix(acc ^ b as u64))
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Replaces the master seed and drops explicit component seeds so that
    /// all of them derive from it.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.forcing.seed = None;
        self.spinup.seed = None;
        self.observation.seed = None;
        self.run.v0_seed = None;
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let grid = GridSpec::new(self.grid.n, self.grid.side, self.grid.dealias_fraction)
            .map_err(|e| config_err(e.to_string()))?;
        let pos = |name: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(config_err(format!("{name} must be positive, got {x}")))
            }
        };
        let nonneg = |name: &str, x: f64| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(config_err(format!("{name} must be ≥ 0, got {x}")))
            }
        };
        pos("solver.nu", self.solver.nu)?;
        pos("solver.dt", self.solver.dt)?;
        nonneg("forcing.grashof", self.forcing.grashof)?;
        if !(self.forcing.k_max >= self.forcing.k_min && self.forcing.k_min >= 0.0) {
            return Err(config_err("forcing band must satisfy 0 ≤ k_min ≤ k_max"));
        }
        pos("spinup.duration", self.spinup.duration)?;
        pos("nudging.beta", self.nudging.beta).or_else(|e| if self.nudging.beta == 0.0 { Ok(()) } else { Err(e) })?;
        pos("nudging.safety_c", self.nudging.safety_c)?;
        nonneg("observation.epsilon", self.observation.epsilon)?;
        pos("run.t_end", self.run.t_end)?;
        let kappa = match (self.observation.kappa, self.observation.beta_kappa) {
            (Some(k), None) => k,
            (None, Some(bk)) => {
                if self.nudging.beta == 0.0 {
                    return Err(config_err("beta_kappa needs a nonzero beta"));
                }
                bk / self.nudging.beta
            }
            _ => {
                return Err(config_err(
                    "give exactly one of observation.kappa and observation.beta_kappa",
                ))
            }
        };
        pos("observation.kappa", kappa)?;
        let observer = match self.observation.kind {
            ObserverKind::Fourier => match (self.observation.m, self.observation.max_int_k2) {
                (Some(m), None) => ObserverSpec::Fourier { m },
                (None, Some(k2)) => ObserverSpec::fourier_cutoff(&grid, k2),
                _ => return Err(config_err("fourier observer needs exactly one of m and max_int_k2")),
            },
            ObserverKind::VolumeAverage => ObserverSpec::VolumeAverage {
                cells_per_axis: self
                    .observation
                    .cells_per_axis
                    .ok_or_else(|| config_err("volume_average observer needs cells_per_axis"))?,
                mollify_width: self.observation.mollify_width,
            },
        };
        ObservationOperator::new(observer, grid).map_err(|e| config_err(e.to_string()))?;
        let m = self.seed;
        let seeds = Seeds {
            master: m,
            forcing: self.forcing.seed.unwrap_or_else(|| derive_seed(m, "forcing")),
            spinup: self.spinup.seed.unwrap_or_else(|| derive_seed(m, "spinup")),
            noise: self.observation.seed.unwrap_or_else(|| derive_seed(m, "noise")),
            v0: self.run.v0_seed.unwrap_or_else(|| derive_seed(m, "v0")),
        };
        Ok(Resolved {
            config: self.clone(),
            seeds,
            grid,
            lambda1: grid.lambda1(),
            kappa,
            observer,
        })
    }
}

impl Resolved {
    pub fn solver_config(&self) -> Result<SolverConfig> {
        SolverConfig::new(
            self.config.solver.nu,
            self.config.solver.dt,
            self.config.solver.scheme,
            self.grid,
        )
    }

    pub fn forcing(&self) -> Result<SpectralField> {
        let f = &self.config.forcing;
        if f.grashof == 0.0 {
            return Ok(SpectralField::zeros(self.grid));
        }
        band_forcing(
            self.grid,
            f.grashof,
            self.config.solver.nu,
            f.k_min,
            f.k_max,
            self.seeds.forcing,
        )
    }

    pub fn operator(&self) -> Result<ObservationOperator> {
        ObservationOperator::new(self.observer, self.grid)
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.config.observation.epsilon, self.seeds.noise)
    }
}

/// Contents of `bounds.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsManifest {
    pub grashof: f64,
    pub lambda1: f64,
    pub nu: f64,
    pub m0_emp: f64,
    pub m1_emp: f64,
    pub nu_g: f64,
    pub spinup: SpinUpReport,
    pub seeds: Seeds,
    pub config: ExperimentConfig,
}

pub const REFERENCE_FILE: &str = "reference.ndg2";
pub const FORCING_FILE: &str = "forcing.ndg2";
pub const BOUNDS_FILE: &str = "bounds.json";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Spins up the reference state and writes it with its bounds manifest.
pub fn cmd_spinup(cfg: &ExperimentConfig, out: &Path) -> Result<BoundsManifest> {
    let r = cfg.resolve()?;
    std::fs::create_dir_all(out)?;
    let g = r.forcing()?;
    let scfg = r.solver_config()?;
    log::info!("spin-up: G = {}, duration {}", cfg.forcing.grashof, cfg.spinup.duration);
    let (state, report) = spin_up(
        &g,
        &scfg,
        cfg.spinup.duration,
        r.seeds.spinup,
        cfg.spinup.min_viscous_times,
    )?;
    crate::snapshot::write(&out.join(REFERENCE_FILE), &state)?;
    crate::snapshot::write(&out.join(FORCING_FILE), &g)?;
    let manifest = BoundsManifest {
        grashof: report.grashof,
        lambda1: r.lambda1,
        nu: cfg.solver.nu,
        m0_emp: report.m0_emp,
        m1_emp: report.m1_emp,
        nu_g: cfg.solver.nu * report.grashof,
        spinup: report,
        seeds: r.seeds,
        config: cfg.clone(),
    };
    write_json(&out.join(BOUNDS_FILE), &manifest)?;
    Ok(manifest)
}

/// Contents of `summary.json` written by a twin run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwinSummary {
    pub observer: ObserverSpec,
    pub params: NudgingParams,
    pub conditions: ConditionReport,
    /// Norm used for the fit: `l2` on the Fourier path, `h1` otherwise.
    pub fit_norm: String,
    pub fit: Option<ContractionFit>,
    pub theta_emp: Option<f64>,
    pub plateau_emp: Option<f64>,
    pub initial_error: f64,
    pub final_error: f64,
    pub limsup_proxy_l2: f64,
    pub limsup_proxy_h1: f64,
    pub e0_measured: f64,
    pub e1_measured: f64,
    pub max_v_h1: f64,
    pub uniform_bound: f64,
    pub observations: usize,
    pub completed: bool,
    pub diverged: Option<String>,
    pub structure_checks: usize,
    pub structure_failures: usize,
    pub wall_seconds: f64,
    pub seeds: Seeds,
    pub kappa: f64,
    pub lambda1: f64,
    pub config: ExperimentConfig,
}

fn load_reference(dir: &Path, grid: &GridSpec) -> Result<(SpectralField, SpectralField, BoundsManifest)> {
    let bounds: BoundsManifest = read_json(&dir.join(BOUNDS_FILE))?;
    let u0 = crate::snapshot::read_on(&dir.join(REFERENCE_FILE), grid)?;
    let g = crate::snapshot::read_on(&dir.join(FORCING_FILE), grid)?;
    Ok((u0, g, bounds))
}

/// A-priori noise bounds `(E0, E1)` implied by the noise model.
pub fn noise_bounds(op: &ObservationOperator, epsilon: f64) -> (f64, f64) {
    let grid = op.grid();
    let root_area = grid.area().sqrt();
    match op.spec() {
        ObserverSpec::Fourier { m } => {
            let e0 = epsilon * (2.0 * *m as f64).sqrt() * root_area;
            let kmax = op.lambda_next().unwrap_or(0.0).sqrt();
            (e0, e0 * kmax)
        }
        ObserverSpec::VolumeAverage { .. } => {
            let c0 = op.measure_c0().unwrap_or(0.0);
            let e1 = c0 * (2.0 * VOLUME_OVERLAP_C1 as f64).sqrt() * epsilon / op.h_eff() * root_area;
            (epsilon * root_area, e1)
        }
    }
}

/// Condition report for the path matching the observer kind.
pub fn conditions_for(
    op: &ObservationOperator,
    params: &NudgingParams,
    nu: f64,
    lambda1: f64,
) -> Result<ConditionReport> {
    match op.lambda_next() {
        Some(ln) => check_conditions_fourier(params, nu, lambda1, ln),
        None => {
            let c0 = op.measure_c0().unwrap_or(1.0);
            check_conditions_general(params, nu, lambda1, c0, op.h_eff())
        }
    }
}

/// Builds the summary of a finished twin run.
pub fn summarize(
    outcome: &TwinOutcome,
    op: &ObservationOperator,
    params: NudgingParams,
    conditions: ConditionReport,
    m1: f64,
    r: &Resolved,
) -> TwinSummary {
    let h1_path = !op.is_fourier();
    let series = if h1_path { &outcome.w_h1_obs } else { &outcome.w_l2_obs };
    let fit = fit_contraction(series).ok();
    TwinSummary {
        observer: *op.spec(),
        params,
        conditions,
        fit_norm: if h1_path { "h1" } else { "l2" }.into(),
        theta_emp: fit.and_then(|f| f.theta),
        plateau_emp: fit.map(|f| f.plateau),
        fit,
        initial_error: series.first().copied().unwrap_or(0.0),
        final_error: series.last().copied().unwrap_or(0.0),
        limsup_proxy_l2: outcome.diagnostics.limsup_proxy(false),
        limsup_proxy_h1: outcome.diagnostics.limsup_proxy(true),
        e0_measured: outcome.e0_measured,
        e1_measured: outcome.e1_measured,
        max_v_h1: outcome.max_v_h1,
        uniform_bound: 3.0 * (m1 + outcome.e1_measured),
        observations: outcome.w_l2_obs.len(),
        completed: outcome.completed,
        diverged: None,
        structure_checks: outcome.structure_checks,
        structure_failures: outcome.structure_failures,
        wall_seconds: outcome.wall_seconds,
        seeds: r.seeds,
        kappa: r.kappa,
        lambda1: r.lambda1,
        config: r.config.clone(),
    }
}

fn energy_csv(outcome: &TwinOutcome) -> String {
    let mut s = String::from("t,energy_u,energy_v\n");
    let e = &outcome.energy;
    for i in 0..e.t.len() {
        let _ = writeln!(s, "{:.17e},{:.17e},{:.17e}", e.t[i], e.energy_u[i], e.energy_v[i]);
    }
    s
}

/// Everything a twin run needs, assembled from a config and spin-up
/// artifacts.
pub struct TwinSetup {
    pub resolved: Resolved,
    pub bounds: BoundsManifest,
    pub u0: SpectralField,
    pub v0: SpectralField,
    pub g: SpectralField,
    pub op: ObservationOperator,
    pub noise: NoiseModel,
    pub solver: SolverConfig,
    pub settings: TwinSettings,
    pub params: NudgingParams,
    pub conditions: ConditionReport,
}

impl TwinSetup {
    pub fn new(cfg: &ExperimentConfig, reference_dir: &Path) -> Result<Self> {
        let r = cfg.resolve()?;
        let (u0, g, bounds) = load_reference(reference_dir, &r.grid)?;
        let op = r.operator()?;
        let noise = r.noise()?;
        let solver = r.solver_config()?;
        let h1_path = !op.is_fourier();
        let radius = if h1_path { bounds.m1_emp } else { bounds.m0_emp };
        let v0 = scaled_random_field(r.grid, 1.0, cfg.run.v0_k_max, r.seeds.v0, radius, h1_path);
        let (e0, e1) = noise_bounds(&op, noise.epsilon);
        let params = NudgingParams {
            beta: cfg.nudging.beta,
            kappa: r.kappa,
            observer: r.observer,
            epsilon: noise.epsilon,
            safety_c: cfg.nudging.safety_c,
            bounds: Bounds {
                m0: bounds.m0_emp,
                m1: bounds.m1_emp,
                e0,
                e1,
            },
        };
        let conditions = match conditions_for(&op, &params, cfg.solver.nu, r.lambda1) {
            Ok(c) => c,
            Err(_) => ConditionReport {
                conditions: Vec::new(),
                kappa_entries: Vec::new(),
                kappa_max: f64::NAN,
                beta_kappa: 0.0,
                overall: false,
            },
        };
        let settings = TwinSettings {
            t0: 0.0,
            t_end: cfg.run.t_end,
            kappa: r.kappa,
            beta: cfg.nudging.beta,
            record_every: cfg.run.record_every,
            check_every: cfg.run.check_every,
            snapshot_every: cfg.run.snapshot_every,
        };
        Ok(Self {
            resolved: r,
            bounds,
            u0,
            v0,
            g,
            op,
            noise,
            solver,
            settings,
            params,
            conditions,
        })
    }

    pub fn run(&self, deadline: Option<Duration>) -> Result<TwinOutcome> {
        run_twin(
            &self.u0,
            &self.v0,
            &self.g,
            &self.op,
            &self.noise,
            &self.solver,
            &self.settings,
            deadline,
        )
    }
}

/// Twin experiment against the spin-up artifacts in `reference_dir`,
/// writing diagnostics into `out`. Divergence is recorded in the summary
/// rather than returned as an error.
pub fn cmd_twin(cfg: &ExperimentConfig, reference_dir: &Path, out: &Path) -> Result<TwinSummary> {
    let setup = TwinSetup::new(cfg, reference_dir)?;
    std::fs::create_dir_all(out)?;
    let TwinSetup {
        resolved: r,
        bounds,
        op,
        params,
        conditions,
        ..
    } = &setup;
    let (r, params, conditions) = (r.clone(), *params, conditions.clone());
    let h1_path = !op.is_fourier();
    let deadline = cfg.run.max_wall_seconds.map(Duration::from_secs_f64);
    let summary = match setup.run(deadline) {
        Ok(outcome) => {
            outcome.diagnostics.write_csv(&out.join("diagnostics.csv"))?;
            std::fs::write(out.join("energy.csv"), energy_csv(&outcome))?;
            if !outcome.snapshots.is_empty() {
                let dir = out.join("snapshots");
                std::fs::create_dir_all(&dir)?;
                for (i, (_, u, v)) in outcome.snapshots.iter().enumerate() {
                    crate::snapshot::write(&dir.join(format!("u_{i:06}.ndg2")), u)?;
                    crate::snapshot::write(&dir.join(format!("v_{i:06}.ndg2")), v)?;
                }
            }
            if let (Some(u), Some(v)) = (&outcome.final_u, &outcome.final_v) {
                crate::snapshot::write(&out.join("u_final.ndg2"), u)?;
                crate::snapshot::write(&out.join("v_final.ndg2"), v)?;
            }
            summarize(&outcome, op, params, conditions, bounds.m1_emp, &r)
        }
        Err(e) if e.is_divergence() => {
            log::warn!("twin run diverged: {e}");
            TwinSummary {
                observer: r.observer,
                params,
                conditions,
                fit_norm: if h1_path { "h1" } else { "l2" }.into(),
                fit: None,
                theta_emp: None,
                plateau_emp: None,
                initial_error: f64::NAN,
                final_error: f64::NAN,
                limsup_proxy_l2: f64::NAN,
                limsup_proxy_h1: f64::NAN,
                e0_measured: f64::NAN,
                e1_measured: f64::NAN,
                max_v_h1: f64::NAN,
                uniform_bound: f64::NAN,
                observations: 0,
                completed: false,
                diverged: Some(e.to_string()),
                structure_checks: 0,
                structure_failures: 0,
                wall_seconds: 0.0,
                seeds: r.seeds,
                kappa: r.kappa,
                lambda1: r.lambda1,
                config: cfg.clone(),
            }
        }
        Err(e) => return Err(e),
    };
    write_json(&out.join("summary.json"), &summary)?;
    if summary.diverged.is_none() {
        if let Err(e) = cmd_stats(cfg, out, out) {
            log::warn!("no stats report: {e}");
        }
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Beta,
    Kappa,
    Epsilon,
    MOrH,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(Self::Beta),
            "kappa" => Ok(Self::Kappa),
            "epsilon" => Ok(Self::Epsilon),
            "m_or_h" | "m" | "h" => Ok(Self::MOrH),
            _ => Err(config_err(format!("unknown sweep axis {s:?}"))),
        }
    }
}

/// Copy of `cfg` with one parameter replaced.
pub fn apply_axis(cfg: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    match axis {
        SweepAxis::Beta => {
            c.observation.kappa = Some(cfg.resolve()?.kappa);
            c.observation.beta_kappa = None;
            c.nudging.beta = value;
        }
        SweepAxis::Kappa => {
            c.observation.kappa = Some(value);
            c.observation.beta_kappa = None;
        }
        SweepAxis::Epsilon => c.observation.epsilon = value,
        SweepAxis::MOrH => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(config_err(format!(
                    "m_or_h values must be nonnegative integers, got {value}"
                )));
            }
            match c.observation.kind {
                ObserverKind::Fourier => {
                    c.observation.m = None;
                    c.observation.max_int_k2 = Some(value as i64);
                }
                ObserverKind::VolumeAverage => c.observation.cells_per_axis = Some(value as usize),
            }
        }
    }
    c.resolve()?;
    Ok(c)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub theta_emp: Option<f64>,
    pub plateau_emp: Option<f64>,
    pub diverged: bool,
    pub conditions_satisfied: bool,
}

/// One twin run per value, concurrently, each in `out/sweep_<i>`.
pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    reference_dir: &Path,
    out: &Path,
    threads: usize,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(config_err("sweep needs at least one value"));
    }
    let configs = values
        .iter()
        .map(|&v| apply_axis(cfg, axis, v))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| config_err(e.to_string()))?;
    let results: Vec<Result<SweepRow>> = pool.install(|| {
        configs
            .par_iter()
            .zip(values.par_iter())
            .enumerate()
            .map(|(i, (c, &value))| {
                let dir = out.join(format!("sweep_{i:03}"));
                let s = cmd_twin(c, reference_dir, &dir)?;
                Ok(SweepRow {
                    value,
                    theta_emp: s.theta_emp,
                    plateau_emp: s.plateau_emp,
                    diverged: s.diverged.is_some(),
                    conditions_satisfied: s.conditions.overall,
                })
            })
            .collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("value,theta_emp,plateau_emp,diverged,conditions_satisfied\n");
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.17e}"));
    for r in &rows {
        let _ = writeln!(
            csv,
            "{:.17e},{},{},{},{}",
            r.value,
            opt(r.theta_emp),
            opt(r.plateau_emp),
            r.diverged,
            r.conditions_satisfied
        );
    }
    std::fs::write(out.join("sweep.csv"), csv)?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl CheckResult {
    fn le(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObserverVerification {
    pub c0_by_cells: Vec<(usize, f64)>,
    pub c1_by_cells: Vec<(usize, f64)>,
    pub c0_spread: f64,
    pub fourier_c0: f64,
    pub fourier_c1: f64,
    pub measured_c0_gradient: Vec<(usize, f64)>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
    pub seeds: Seeds,
    pub config: ExperimentConfig,
}

/// Corpus of random smooth fields, the same for every observer.
pub fn smooth_corpus(grid: GridSpec, size: usize, seed: u64) -> Vec<VectorField> {
    (0..size as u64)
        .map(|i| random_smooth_field(grid, derive_seed(seed, &format!("corpus{i}"))).to_vector())
        .collect()
}

/// Interpolant constants, partition-of-unity checks, and Monte Carlo noise
/// bounds on the configured grid.
pub fn cmd_verify_observers(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ObserverVerification> {
    let r = cfg.resolve()?;
    let v = &cfg.verify;
    let grid = r.grid;
    let corpus = smooth_corpus(grid, v.corpus_size, r.seeds.master);
    let mut checks = Vec::new();
    let mut c0s = Vec::new();
    let mut c1s = Vec::new();
    let mut grads = Vec::new();
    for &cells in &v.c0_cells {
        let op = ObservationOperator::new(
            ObserverSpec::VolumeAverage {
                cells_per_axis: cells,
                mollify_width: cfg.observation.mollify_width,
            },
            grid,
        )?;
        c0s.push((cells, estimate_c0(&op, &corpus)?));
        c1s.push((cells, estimate_c1(&op, &corpus)?));
        checks.push(CheckResult::le(
            format!("partition_of_unity_{cells}"),
            op.partition_defect().unwrap(),
            1e-12,
        ));
        checks.push(CheckResult::le(
            format!("overlap_{cells}"),
            op.max_overlap().unwrap() as f64,
            VOLUME_OVERLAP_C1 as f64,
        ));
    }
    let finite: Vec<f64> = c0s.iter().map(|x| x.1).collect();
    let hi = finite.iter().cloned().fold(0.0, f64::max);
    let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    checks.push(CheckResult::le("c0_finite", hi, f64::MAX));
    checks.push(CheckResult::le("c0_spread", spread, 2.0));

    let fourier = ObservationOperator::new(
        match r.observer {
            ObserverSpec::Fourier { m } => ObserverSpec::Fourier { m },
            _ => ObserverSpec::fourier_cutoff(&grid, (grid.dealias_cutoff() / 2).pow(2)),
        },
        grid,
    )?;
    let fc0 = estimate_c0(&fourier, &corpus)?;
    let fc1 = estimate_c1(&fourier, &corpus)?;
    checks.push(CheckResult::le("fourier_c0", fc0, 1.0));
    checks.push(CheckResult::le("fourier_c1", fc1, 1.0 + 1e-12));

    let eps = v.epsilon;
    let root_area = grid.area().sqrt();
    for &cells in &v.noise_cells {
        let op = ObservationOperator::new(
            ObserverSpec::VolumeAverage {
                cells_per_axis: cells,
                mollify_width: cfg.observation.mollify_width,
            },
            grid,
        )?;
        let c0 = op.measure_c0().unwrap();
        grads.push((cells, c0));
        let model = NoiseModel::new(eps, r.seeds.noise)?;
        let mut ws = op.workspace();
        let l2_bound = eps * root_area;
        let h1_bound = c0 * (2.0 * VOLUME_OVERLAP_C1 as f64).sqrt() * eps / op.h_eff() * root_area;
        let (mut viol_l2, mut viol_h1) = (0usize, 0usize);
        let (mut max_l2, mut max_h1) = (0.0f64, 0.0f64);
        for n in 0..v.noise_draws {
            let eta = draw_noise(&model, n, &op, &mut ws);
            let (a, b) = (eta.l2(), eta.h1());
            max_l2 = max_l2.max(a);
            max_h1 = max_h1.max(b);
            viol_l2 += (a > l2_bound) as usize;
            viol_h1 += (b > h1_bound) as usize;
        }
        checks.push(CheckResult::le(
            format!("noise_l2_violations_{cells}"),
            viol_l2 as f64,
            0.0,
        ));
        checks.push(CheckResult::le(
            format!("noise_h1_violations_{cells}"),
            viol_h1 as f64,
            0.0,
        ));
        checks.push(CheckResult::le(format!("noise_l2_max_{cells}"), max_l2, l2_bound));
        checks.push(CheckResult::le(format!("noise_h1_max_{cells}"), max_h1, h1_bound));
    }
    let passed = checks.iter().all(|c| c.passed);
    let report = ObserverVerification {
        c0_by_cells: c0s,
        c1_by_cells: c1s,
        c0_spread: spread,
        fourier_c0: fc0,
        fourier_c1: fc1,
        measured_c0_gradient: grads,
        checks,
        passed,
        seeds: r.seeds,
        config: cfg.clone(),
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("verify_observers.json"), &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsReport {
    pub energy: AverageReport,
    pub ladder_decreasing: bool,
    pub relative_diff: f64,
    pub seeds: Seeds,
    pub config: ExperimentConfig,
}

fn read_energy_csv(path: &Path) -> Result<(ScalarSeries, ScalarSeries)> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let (mut t, mut eu, mut ev) = (Vec::new(), Vec::new(), Vec::new());
    for line in text.lines().skip(1) {
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if cols.len() != 3 {
            return Err(Error::Format(format!("{}: expected 3 columns", path.display())));
        }
        t.push(cols[0]);
        eu.push(cols[1]);
        ev.push(cols[2]);
    }
    Ok((ScalarSeries::new(t.clone(), eu)?, ScalarSeries::new(t, ev)?))
}

fn snapshot_pairs(dir: &Path, grid: &GridSpec) -> Result<Vec<SpectralField>> {
    let mut fields = Vec::new();
    let snaps = dir.join("snapshots");
    if snaps.exists() {
        let mut names: Vec<PathBuf> = std::fs::read_dir(&snaps)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ndg2"))
            .collect();
        names.sort();
        for p in names {
            fields.push(crate::snapshot::read_on(&p, grid)?);
        }
    }
    for name in ["u_final.ndg2", "v_final.ndg2"] {
        let p = dir.join(name);
        if p.exists() {
            fields.push(crate::snapshot::read_on(&p, grid)?);
        }
    }
    Ok(fields)
}

/// Energy time-average comparison for a finished twin run in `twin_dir`.
pub fn cmd_stats(cfg: &ExperimentConfig, twin_dir: &Path, out: &Path) -> Result<StatsReport> {
    let r = cfg.resolve()?;
    let summary: TwinSummary = read_json(&twin_dir.join("summary.json"))?;
    let (su, sv) = read_energy_csv(&twin_dir.join("energy.csv"))?;
    let (t0, t1) = match (su.t.first(), su.t.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        _ => return Err(Error::InvalidInput("energy series too short".into())),
    };
    let mut obs = Observable::energy();
    let samples = snapshot_pairs(twin_dir, &r.grid)?;
    let lip = if samples.len() >= 2 {
        Some(obs.measure_lipschitz(&samples)?)
    } else {
        None
    };
    let e1 = if summary.e1_measured.is_finite() {
        summary.e1_measured
    } else {
        0.0
    };
    let mut report = compare_series("energy", &su, &sv, (t0, t1), lip, e1, r.lambda1, cfg.nudging.safety_c)?;
    let lengths: Vec<f64> = if cfg.stats.ladder.is_empty() {
        vec![0.25 * (t1 - t0), 0.5 * (t1 - t0), t1 - t0]
    } else {
        cfg.stats
            .ladder
            .iter()
            .cloned()
            .filter(|&l| t0 + l <= t1 * (1.0 + 1e-12))
            .map(|l| l.min(t1 - t0))
            .collect()
    };
    report.ladder = ladder(&su, &sv, t0, &lengths)?;
    let decreasing = is_decreasing_trend(&report.ladder, cfg.stats.trend_slack);
    let rel = if report.mean_u > 0.0 {
        report.diff / report.mean_u
    } else {
        0.0
    };
    let stats = StatsReport {
        energy: report,
        ladder_decreasing: decreasing,
        relative_diff: rel,
        seeds: r.seeds,
        config: cfg.clone(),
    };
    std::fs::create_dir_all(out)?;
    write_json(&out.join("stats.json"), &stats)?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SMALL: &str = r#"
seed = 7
[grid]
n = 16
[solver]
dt = 0.01
[forcing]
grashof = 5.0
[spinup]
duration = 20.0
[observation]
kind = "fourier"
max_int_k2 = 8
beta_kappa = 0.05
[nudging]
beta = 20.0
[run]
t_end = 0.2
record_every = 1
"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        let r = cfg.resolve().unwrap();
        assert!((r.kappa - 0.0025).abs() < 1e-15);
        assert_eq!(r.lambda1, 1.0);
        assert!(matches!(r.observer, ObserverSpec::Fourier { .. }));
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_unknown_and_invalid_fields() {
        let bad = SMALL.replace("seed = 7", "seed = 7\nbogus = 1");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = SMALL.replace("dt = 0.01", "dt = -0.01");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = SMALL.replace("beta_kappa = 0.05", "beta_kappa = 0.05\nkappa = 0.1");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = SMALL.replace("n = 16", "n = 15");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn seed_override_rederives_components() {
        let mut cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        cfg.forcing.seed = Some(5);
        let a = cfg.resolve().unwrap().seeds;
        assert_eq!(a.forcing, 5);
        cfg.override_seed(8);
        let b = cfg.resolve().unwrap().seeds;
        assert_eq!(b.forcing, derive_seed(8, "forcing"));
        assert_ne!(b.noise, b.v0);
    }

    #[test]
    fn sweep_axis_application() {
        let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        let c = apply_axis(&cfg, SweepAxis::Kappa, 0.001).unwrap();
        assert_eq!(c.resolve().unwrap().kappa, 0.001);
        let c = apply_axis(&cfg, SweepAxis::MOrH, 4.0).unwrap();
        assert_eq!(c.observation.max_int_k2, Some(4));
        assert!(apply_axis(&cfg, SweepAxis::MOrH, 2.5).is_err());
        assert_eq!("epsilon".parse::<SweepAxis>().unwrap(), SweepAxis::Epsilon);
        assert!("zeta".parse::<SweepAxis>().is_err());
    }
}
