//! Discrete-in-time nudging: interval-constant feedback forcing, theorem
//! condition checkers, error diagnostics, and contraction fits.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observers::{check_gaps, draw_noise, NoiseModel, ObservationOperator, ObservationStream, ObserverSpec};
use crate::solver::{Integrator, SolverConfig, Trajectory};
use crate::spectral::{LerayProject, SpectralField};

/// Attractor and noise bounds used by the condition checkers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Bounds {
    pub m0: f64,
    pub m1: f64,
    pub e0: f64,
    pub e1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NudgingParams {
    pub beta: f64,
    pub kappa: f64,
    pub observer: ObserverSpec,
    pub epsilon: f64,
    pub safety_c: f64,
    pub bounds: Bounds,
}

impl NudgingParams {
    pub fn beta_kappa(&self) -> f64 {
        self.beta * self.kappa
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

impl Condition {
    fn le(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            satisfied: lhs <= rhs,
        }
    }

    fn ge(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            satisfied: lhs >= rhs,
        }
    }
}

/// Advisory evaluation of theorem hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub conditions: Vec<Condition>,
    /// Every entry of the κ minimum, before the `c/β` prefactor.
    pub kappa_entries: Vec<f64>,
    pub kappa_max: f64,
    pub beta_kappa: f64,
    pub overall: bool,
}

impl ConditionReport {
    fn new(conditions: Vec<Condition>, kappa_entries: Vec<f64>, kappa_max: f64, beta_kappa: f64) -> Self {
        let overall = conditions.iter().all(|c| c.satisfied);
        Self {
            conditions,
            kappa_entries,
            kappa_max,
            beta_kappa,
            overall,
        }
    }

    pub fn get(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be positive, got {x}")))
    }
}

fn nonnegative(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be ≥ 0, got {x}")))
    }
}

fn quotient(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

fn check_params(p: &NudgingParams) -> Result<()> {
    positive("beta", p.beta)?;
    positive("kappa", p.kappa)?;
    positive("safety_c", p.safety_c)?;
    nonnegative("M0", p.bounds.m0)?;
    nonnegative("M1", p.bounds.m1)?;
    nonnegative("E0", p.bounds.e0)?;
    nonnegative("E1", p.bounds.e1)
}

/// Hypotheses of the Fourier-mode (H-norm) synchronization result.
pub fn check_conditions_fourier(p: &NudgingParams, nu: f64, lambda1: f64, lambda_next: f64) -> Result<ConditionReport> {
    check_params(p)?;
    positive("nu", nu)?;
    positive("lambda1", lambda1)?;
    positive("lambda_{m+1}", lambda_next)?;
    let Bounds { m0, m1, e0, .. } = p.bounds;
    let (c, beta) = (p.safety_c, p.beta);
    let nl = nu * lambda1;
    let entries = vec![
        1.0,
        quotient(nu, m0 + e0),
        quotient(nu * nu, (m0 + e0).powi(2)),
        quotient(nu.powf(1.5) * beta.sqrt(), m0 * m1),
        quotient(nu * nu * lambda1.sqrt(), m0 * m1),
        (nl / beta).cbrt(),
        (nl / beta).sqrt(),
        (nl / beta).powi(2),
    ];
    let kappa_max = c / beta * entries.iter().cloned().fold(f64::INFINITY, f64::min);
    let conditions = vec![
        Condition::ge("beta", beta, c * m1 * m1 / nu),
        Condition::ge("lambda_m_plus_1", lambda_next, 6.0 * beta / nu),
        Condition::le("kappa", p.kappa, kappa_max),
        Condition::le("beta_kappa", p.beta_kappa(), 0.5),
    ];
    Ok(ConditionReport::new(conditions, entries, kappa_max, p.beta_kappa()))
}

/// Hypotheses of the general-interpolant (V-norm) synchronization result.
pub fn check_conditions_general(p: &NudgingParams, nu: f64, lambda1: f64, c0: f64, h: f64) -> Result<ConditionReport> {
    check_params(p)?;
    positive("nu", nu)?;
    positive("lambda1", lambda1)?;
    positive("c0", c0)?;
    positive("h", h)?;
    let Bounds { m0, m1, e1, .. } = p.bounds;
    let (c, beta) = (p.safety_c, p.beta);
    let nl = nu * lambda1;
    let r = m1 + e1;
    let log_term = if r > 0.0 {
        1.0 + (r / (nu * lambda1.sqrt())).ln()
    } else {
        1.0
    };
    let entries = vec![
        1.0,
        quotient(nu.powf(1.5) * beta.sqrt(), m0 * m1),
        quotient(nu * nu * lambda1.sqrt(), m0 * m1),
        quotient(nu * nu * lambda1, r * r),
        (nl / beta).sqrt(),
        (nl / beta).powi(2),
    ];
    let kappa_max = c / beta * entries.iter().cloned().fold(f64::INFINITY, f64::min);
    let h_max = 1.0 / (2.0 * c0) * (nu / beta).sqrt();
    let conditions = vec![
        Condition::ge("beta", beta, c * r * r / nu * log_term),
        Condition::le("kappa", p.kappa, kappa_max),
        Condition::le("h", h, h_max),
        Condition::le("beta_kappa", p.beta_kappa(), 0.5),
    ];
    Ok(ConditionReport::new(conditions, entries, kappa_max, p.beta_kappa()))
}

/// `−β(P_σ I_h v − ũ)`.
pub fn feedback_forcing(
    v: &SpectralField,
    observed: &SpectralField,
    op: &ObservationOperator,
    beta: f64,
    ws: &mut crate::observers::ObsWorkspace,
) -> Result<SpectralField> {
    op.observe_projected(v, ws)?.lin_comb(-beta, observed, beta)
}

/// Runs the assimilation equation over the stream as a chain of NSE solves
/// with interval-constant feedback forcing.
pub fn assimilate(
    v0: &SpectralField,
    stream: &ObservationStream,
    g: &SpectralField,
    beta: f64,
    op: &ObservationOperator,
    cfg: &SolverConfig,
    t_end: f64,
) -> Result<Trajectory> {
    if stream.is_empty() {
        return Err(Error::InvalidInput("empty observation stream".into()));
    }
    stream.validate()?;
    let t0 = stream.times[0];
    if !(t_end > t0) {
        return Err(Error::InvalidInput(format!("t_end {t_end} must exceed t0 {t0}")));
    }
    let last = *stream.times.last().unwrap();
    let mut stops: Vec<f64> = stream.times.iter().cloned().filter(|&t| t <= t_end).collect();
    if t_end > last {
        check_gaps(&[last, t_end], stream.kappa)?;
    }
    if stops.last() != Some(&t_end) {
        stops.push(t_end);
    }
    let mut ws = op.workspace();
    let every = cfg.sample_every.max(1) as u64;
    let mut traj = Trajectory::new(cfg.sample_every);
    traj.push(t0, v0.clone(), true);
    let mut it = Integrator::new(*cfg, v0.clone(), t0)?;
    for (n, w) in stops.windows(2).enumerate() {
        let target = w[1];
        let extra = if beta == 0.0 {
            None
        } else {
            Some(feedback_forcing(
                it.state(),
                &stream.observations[n],
                op,
                beta,
                &mut ws,
            )?)
        };
        it.advance_to_with(target, g, extra.as_ref(), |s| {
            if s.steps_taken() % every == 0 && s.time() < target {
                traj.push(s.time(), s.state().clone(), false);
            }
        })?;
        let is_obs = stream.times.get(n + 1) == Some(&target);
        traj.push(target, it.state().clone(), is_obs);
    }
    Ok(traj)
}

/// One row of synchronization diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub t: f64,
    pub w_l2: f64,
    pub w_h1: f64,
    pub v_l2: f64,
    pub v_h1: f64,
    pub is_observation_time: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSeries {
    pub rows: Vec<DiagnosticRow>,
}

impl DiagnosticSeries {
    pub fn push(&mut self, t: f64, u: &SpectralField, v: &SpectralField, is_obs: bool) -> Result<()> {
        let w = v.sub(u)?;
        let (wn, vn) = (w.norms(), v.norms());
        self.rows.push(DiagnosticRow {
            t,
            w_l2: wn.l2,
            w_h1: wn.h1,
            v_l2: vn.l2,
            v_h1: vn.h1,
            is_observation_time: is_obs,
        });
        Ok(())
    }

    pub fn observation_rows(&self) -> impl Iterator<Item = &DiagnosticRow> {
        self.rows.iter().filter(|r| r.is_observation_time)
    }

    /// `|w(t_n)|_{L²}` at observation times.
    pub fn w_l2_at_observations(&self) -> Vec<f64> {
        self.observation_rows().map(|r| r.w_l2).collect()
    }

    /// `‖w(t_n)‖_{H¹}` at observation times.
    pub fn w_h1_at_observations(&self) -> Vec<f64> {
        self.observation_rows().map(|r| r.w_h1).collect()
    }

    pub fn max_v_h1(&self) -> f64 {
        self.rows.iter().map(|r| r.v_h1).fold(0.0, f64::max)
    }

    /// Largest error over rows with `t ≥ t_start`.
    pub fn max_after(&self, t_start: f64, h1: bool) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.t >= t_start)
            .map(|r| if h1 { r.w_h1 } else { r.w_l2 })
            .fold(0.0, f64::max)
    }

    /// Maximum error over the final quarter of the recorded span.
    pub fn limsup_proxy(&self, h1: bool) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => self.max_after(b.t - 0.25 * (b.t - a.t), h1),
            _ => 0.0,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,w_l2,w_h1,v_l2,v_h1,is_observation_time\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
                r.t, r.w_l2, r.w_h1, r.v_l2, r.v_h1, r.is_observation_time as u8
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// `w = v − u` diagnostics on the common sample times.
pub fn error_series(u: &Trajectory, v: &Trajectory) -> Result<DiagnosticSeries> {
    if u.times != v.times {
        return Err(Error::TimeGridMismatch(format!(
            "{} vs {} samples",
            u.times.len(),
            v.times.len()
        )));
    }
    let mut out = DiagnosticSeries::default();
    for i in 0..u.len() {
        let obs = u.is_checkpoint[i] && v.is_checkpoint[i];
        out.push(u.times[i], &u.fields[i], &v.fields[i], obs)?;
    }
    Ok(out)
}

/// Result of fitting `w_{n+1} = θ w_n + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionFit {
    /// `None` when the series is identically zero.
    pub theta: Option<f64>,
    pub intercept: f64,
    pub plateau: f64,
    pub converged: bool,
    pub points: usize,
}

/// Least-squares fit of `w_{n+1} = θ w_n + b` with residuals weighted by
/// `1/w_n²`, so every decade of a decaying series counts alike.
/// The plateau is the fixed point `b/(1 − θ)`.
pub fn fit_contraction(series: &[f64]) -> Result<ContractionFit> {
    if series.len() < 10 {
        return Err(Error::DegenerateSeries(format!(
            "need at least 10 points, got {}",
            series.len()
        )));
    }
    if series.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::DegenerateSeries("series must be finite and nonnegative".into()));
    }
    if series.iter().all(|&x| x == 0.0) {
        return Ok(ContractionFit {
            theta: None,
            intercept: 0.0,
            plateau: 0.0,
            converged: true,
            points: series.len(),
        });
    }
    // normal equations for y = θx + b with weights 1/x²
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut used = 0;
    for w in series.windows(2) {
        let (x, y) = (w[0], w[1]);
        if x == 0.0 {
            continue;
        }
        let wt = 1.0 / (x * x);
        sw += wt;
        sx += wt * x;
        sy += wt * y;
        sxx += wt * x * x;
        sxy += wt * x * y;
        used += 1;
    }
    let det = sw * sxx - sx * sx;
    if used < 2 || !(det > 1e-12 * sw * sxx) {
        return Err(Error::DegenerateSeries(
            "series does not vary enough to separate θ from b".into(),
        ));
    }
    let theta = (sw * sxy - sx * sy) / det;
    let b = (sxx * sy - sx * sxy) / det;
    let plateau = if theta < 1.0 { b / (1.0 - theta) } else { f64::INFINITY };
    Ok(ContractionFit {
        theta: Some(theta),
        intercept: b,
        plateau,
        converged: theta < 1.0,
        points: series.len(),
    })
}

/// Index of the first entry at or below `factor × min(series)`.
pub fn floor_index(series: &[f64], factor: f64) -> Option<usize> {
    let min = series.iter().cloned().fold(f64::INFINITY, f64::min);
    series.iter().position(|&x| x <= factor * min)
}

/// Coefficient of determination of the least-squares line through
/// `(t_i, log10 y_i)`, with the fitted slope.
pub fn log_linear_fit(t: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&a, &v)| (a, v.log10()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if stt == 0.0 || syy == 0.0 {
        return None;
    }
    let slope = sty / stt;
    Some((sty * sty / (stt * syy), slope))
}

/// Settings for a lock-step twin experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwinSettings {
    pub t0: f64,
    pub t_end: f64,
    pub kappa: f64,
    pub beta: f64,
    /// Record a diagnostics row every this many observations.
    pub record_every: usize,
    /// Run structure checks on both states every this many observations.
    pub check_every: usize,
    /// Keep `(t, u, v)` every this many observations; 0 keeps none.
    pub snapshot_every: usize,
}

/// Scalar time series of `(t, |u|²/2, |v|²/2)` recorded alongside the
/// diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub t: Vec<f64>,
    pub energy_u: Vec<f64>,
    pub energy_v: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwinOutcome {
    pub diagnostics: DiagnosticSeries,
    /// `|w(t_n)|_{L²}` at every observation time.
    pub w_l2_obs: Vec<f64>,
    /// `‖w(t_n)‖_{H¹}` at every observation time.
    pub w_h1_obs: Vec<f64>,
    pub obs_times: Vec<f64>,
    pub energy: EnergyRecord,
    pub e0_measured: f64,
    pub e1_measured: f64,
    pub max_v_h1: f64,
    pub structure_checks: usize,
    pub structure_failures: usize,
    pub t_reached: f64,
    pub completed: bool,
    pub wall_seconds: f64,
    #[serde(skip)]
    pub snapshots: Vec<(f64, SpectralField, SpectralField)>,
    #[serde(skip)]
    pub final_u: Option<SpectralField>,
    #[serde(skip)]
    pub final_v: Option<SpectralField>,
}

/// Integrates the reference `u` and the assimilated `v` in lock-step,
/// generating each observation `P_σ(I_h u(t_n) + η_n)` on the fly.
/// Observations sit at `t_n = t0 + nκ`. With a deadline the run stops
/// early and reports `completed = false`.
#[allow(clippy::too_many_arguments)]
pub fn run_twin(
    u0: &SpectralField,
    v0: &SpectralField,
    g: &SpectralField,
    op: &ObservationOperator,
    noise: &NoiseModel,
    cfg: &SolverConfig,
    settings: &TwinSettings,
    deadline: Option<Duration>,
) -> Result<TwinOutcome> {
    let TwinSettings {
        t0, t_end, kappa, beta, ..
    } = *settings;
    positive("kappa", kappa)?;
    nonnegative("beta", beta)?;
    if !(t_end > t0) {
        return Err(Error::InvalidInput(format!("t_end {t_end} must exceed t0 {t0}")));
    }
    let record_every = settings.record_every.max(1);
    let check_every = settings.check_every.max(1);
    let n_obs = ((t_end - t0) / kappa - 1e-9).ceil() as u64;
    let start = Instant::now();
    let mut ws = op.workspace();
    let mut u = Integrator::new(*cfg, u0.clone(), t0)?;
    let mut v = Integrator::new(*cfg, v0.clone(), t0)?;
    let mut out = TwinOutcome {
        diagnostics: DiagnosticSeries::default(),
        w_l2_obs: Vec::with_capacity(n_obs as usize + 1),
        w_h1_obs: Vec::with_capacity(n_obs as usize + 1),
        obs_times: Vec::with_capacity(n_obs as usize + 1),
        energy: EnergyRecord::default(),
        e0_measured: 0.0,
        e1_measured: 0.0,
        max_v_h1: 0.0,
        structure_checks: 0,
        structure_failures: 0,
        t_reached: t0,
        completed: false,
        wall_seconds: 0.0,
        snapshots: Vec::new(),
        final_u: None,
        final_v: None,
    };
    for n in 0..=n_obs {
        let t = if n == n_obs { t_end } else { t0 + n as f64 * kappa };
        let (us, vs) = (u.state(), v.state());
        let w = vs.sub(us)?;
        let (wn, vn) = (w.norms(), vs.norms());
        out.w_l2_obs.push(wn.l2);
        out.w_h1_obs.push(wn.h1);
        out.obs_times.push(t);
        out.max_v_h1 = out.max_v_h1.max(vn.h1);
        let last = n == n_obs;
        let stop = last || deadline.is_some_and(|limit| start.elapsed() > limit);
        if n % record_every as u64 == 0 || stop {
            out.diagnostics.rows.push(DiagnosticRow {
                t,
                w_l2: wn.l2,
                w_h1: wn.h1,
                v_l2: vn.l2,
                v_h1: vn.h1,
                is_observation_time: true,
            });
            out.energy.t.push(t);
            out.energy.energy_u.push(us.energy());
            out.energy.energy_v.push(0.5 * vn.l2 * vn.l2);
        }
        if settings.snapshot_every > 0 && n % settings.snapshot_every as u64 == 0 {
            out.snapshots.push((t, us.clone(), vs.clone()));
        }
        if n % check_every as u64 == 0 || stop {
            for s in [us, vs] {
                out.structure_checks += 1;
                if s.check_structure(1e-10).is_err() {
                    out.structure_failures += 1;
                }
            }
        }
        out.t_reached = t;
        if stop {
            out.completed = last;
            break;
        }
        let t_next = if n + 1 == n_obs {
            t_end
        } else {
            t0 + (n + 1) as f64 * kappa
        };
        let extra = if beta == 0.0 {
            None
        } else {
            let mut obs = op.observe_projected(us, &mut ws)?;
            if noise.epsilon > 0.0 {
                let eta = draw_noise(noise, n, op, &mut ws);
                out.e0_measured = out.e0_measured.max(eta.l2());
                out.e1_measured = out.e1_measured.max(eta.h1());
                obs = obs.add(&eta.project_leray())?;
            }
            Some(feedback_forcing(vs, &obs, op, beta, &mut ws)?)
        };
        u.advance_to(t_next, g, None)?;
        v.advance_to(t_next, g, extra.as_ref())?;
    }
    out.wall_seconds = start.elapsed().as_secs_f64();
    out.final_u = Some(u.into_state());
    out.final_v = Some(v.into_state());
    Ok(out)
}
