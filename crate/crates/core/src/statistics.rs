//! Time averages of observables and comparisons between trajectories.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::Trajectory;
use crate::spectral::SpectralField;

type Evaluator = Arc<dyn Fn(&SpectralField) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ObservableKind {
    Energy,
    Enstrophy,
    Dissipation {
        nu: f64,
    },
    /// `|ω̂(k)|/|k|`, the velocity amplitude of the mode `(k1, k2)`.
    ModeAmplitude {
        k1: i64,
        k2: i64,
    },
    Custom(Evaluator),
}

impl fmt::Debug for ObservableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Energy => write!(f, "Energy"),
            Self::Enstrophy => write!(f, "Enstrophy"),
            Self::Dissipation { nu } => write!(f, "Dissipation {{ nu: {nu} }}"),
            Self::ModeAmplitude { k1, k2 } => write!(f, "ModeAmplitude({k1}, {k2})"),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// A real functional of the velocity field.
#[derive(Debug, Clone)]
pub struct Observable {
    pub name: String,
    pub kind: ObservableKind,
    pub lipschitz_emp: Option<f64>,
}

impl Observable {
    pub fn new(name: impl Into<String>, kind: ObservableKind) -> Self {
        Self {
            name: name.into(),
            kind,
            lipschitz_emp: None,
        }
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(&SpectralField) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(name, ObservableKind::Custom(Arc::new(f)))
    }

    pub fn energy() -> Self {
        Self::new("energy", ObservableKind::Energy)
    }

    pub fn evaluate(&self, u: &SpectralField) -> f64 {
        match &self.kind {
            ObservableKind::Energy => u.energy(),
            ObservableKind::Enstrophy => u.enstrophy(),
            ObservableKind::Dissipation { nu } => nu * 2.0 * u.enstrophy(),
            ObservableKind::ModeAmplitude { k1, k2 } => {
                let g = u.grid();
                let (i1, i2) = (g.index_of(*k1), g.index_of(*k2));
                let k2 = g.k2(i1, i2);
                if k2 == 0.0 {
                    0.0
                } else {
                    u.vorticity()[i1 * g.n + i2].norm() / k2.sqrt()
                }
            }
            ObservableKind::Custom(f) => f(u),
        }
    }

    /// Records `max |Φ(a) − Φ(b)| / |a − b|_{L²}` over all distinct pairs of
    /// `samples`.
    pub fn measure_lipschitz(&mut self, samples: &[SpectralField]) -> Result<f64> {
        let vals: Vec<f64> = samples.iter().map(|s| self.evaluate(s)).collect();
        let mut worst: f64 = 0.0;
        for i in 0..samples.len() {
            for j in i + 1..samples.len() {
                let d = samples[i].sub(&samples[j])?.l2();
                if d > 0.0 {
                    worst = worst.max((vals[i] - vals[j]).abs() / d);
                }
            }
        }
        self.lipschitz_emp = Some(worst);
        Ok(worst)
    }
}

/// Energy, enstrophy, dissipation rate and the lowest mode amplitudes.
pub fn builtin_observables(nu: f64) -> Vec<Observable> {
    vec![
        Observable::energy(),
        Observable::new("enstrophy", ObservableKind::Enstrophy),
        Observable::new("dissipation", ObservableKind::Dissipation { nu }),
        Observable::new("mode_1_0", ObservableKind::ModeAmplitude { k1: 1, k2: 0 }),
        Observable::new("mode_0_1", ObservableKind::ModeAmplitude { k1: 0, k2: 1 }),
        Observable::new("mode_1_1", ObservableKind::ModeAmplitude { k1: 1, k2: 1 }),
    ]
}

/// Samples `(t_i, y_i)` with strictly increasing times.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalarSeries {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl ScalarSeries {
    pub fn new(t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if t.len() != y.len() {
            return Err(Error::InvalidInput("times and values differ in length".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("times must be strictly increasing".into()));
        }
        Ok(Self { t, y })
    }

    pub fn from_trajectory(traj: &Trajectory, obs: &Observable) -> Self {
        Self {
            t: traj.times.clone(),
            y: traj.fields.iter().map(|f| obs.evaluate(f)).collect(),
        }
    }

    fn value_at(&self, t: f64, i: usize) -> f64 {
        // t in [t_{i-1}, t_i]
        let (t0, t1) = (self.t[i - 1], self.t[i]);
        let s = (t - t0) / (t1 - t0);
        self.y[i - 1] + s * (self.y[i] - self.y[i - 1])
    }

    /// Trapezoidal mean over `[t0, t1]`, interpolating linearly at the
    /// window ends.
    pub fn time_average(&self, t0: f64, t1: f64) -> Result<f64> {
        let (start, end) = match (self.t.first(), self.t.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => {
                return Err(Error::WindowOutsideSpan {
                    t0,
                    t1,
                    start: f64::NAN,
                    end: f64::NAN,
                })
            }
        };
        if !(t1 > t0) || t0 < start || t1 > end {
            return Err(Error::WindowOutsideSpan { t0, t1, start, end });
        }
        let inside = self.t.iter().filter(|&&t| t >= t0 && t <= t1).count();
        if inside == 0 {
            return Err(Error::InvalidInput(format!("no samples inside [{t0}, {t1}]")));
        }
        let first = self.t.partition_point(|&t| t <= t0);
        let mut prev_t = t0;
        let mut prev_y = if first == 0 {
            self.y[0]
        } else if self.t[first - 1] == t0 {
            self.y[first - 1]
        } else {
            self.value_at(t0, first)
        };
        let mut acc = 0.0;
        let mut i = first;
        while i < self.t.len() && self.t[i] < t1 {
            acc += 0.5 * (self.t[i] - prev_t) * (self.y[i] + prev_y);
            prev_t = self.t[i];
            prev_y = self.y[i];
            i += 1;
        }
        let end_y = if self.t[i] == t1 {
            self.y[i]
        } else {
            self.value_at(t1, i)
        };
        acc += 0.5 * (t1 - prev_t) * (end_y + prev_y);
        Ok(acc / (t1 - t0))
    }
}

/// `(1/T) ∫ Φ(u(t)) dt` over the window by trapezoidal quadrature.
pub fn time_average(traj: &Trajectory, obs: &Observable, window: (f64, f64)) -> Result<f64> {
    ScalarSeries::from_trajectory(traj, obs).time_average(window.0, window.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub t_len: f64,
    pub diff: f64,
}

/// Time-average comparison between reference and assimilated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageReport {
    pub observable: String,
    pub window: (f64, f64),
    pub t_len: f64,
    pub mean_u: f64,
    pub mean_v: f64,
    pub diff: f64,
    pub bound: f64,
    pub within_bound: bool,
    pub lipschitz_emp: Option<f64>,
    pub e1: f64,
    pub ladder: Vec<LadderPoint>,
}

/// Compares precomputed observable series over one window. The bound is
/// `c · L_Φ · E1 / λ1^{1/2}`.
#[allow(clippy::too_many_arguments)]
pub fn compare_series(
    name: &str,
    u: &ScalarSeries,
    v: &ScalarSeries,
    window: (f64, f64),
    lipschitz: Option<f64>,
    e1: f64,
    lambda1: f64,
    safety_c: f64,
) -> Result<AverageReport> {
    let mean_u = u.time_average(window.0, window.1)?;
    let mean_v = v.time_average(window.0, window.1)?;
    let diff = (mean_v - mean_u).abs();
    let bound = safety_c * lipschitz.unwrap_or(f64::INFINITY) * e1 / lambda1.sqrt();
    let bound = if bound.is_nan() { 0.0 } else { bound };
    Ok(AverageReport {
        observable: name.to_string(),
        window,
        t_len: window.1 - window.0,
        mean_u,
        mean_v,
        diff,
        bound,
        within_bound: diff <= bound,
        lipschitz_emp: lipschitz,
        e1,
        ladder: Vec::new(),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn compare_averages(
    u: &Trajectory,
    v: &Trajectory,
    obs: &Observable,
    window: (f64, f64),
    e1: f64,
    lambda1: f64,
    safety_c: f64,
) -> Result<AverageReport> {
    let su = ScalarSeries::from_trajectory(u, obs);
    let sv = ScalarSeries::from_trajectory(v, obs);
    compare_series(&obs.name, &su, &sv, window, obs.lipschitz_emp, e1, lambda1, safety_c)
}

/// `|mean_v − mean_u|` over `[t0, t0 + T]` for each `T` in the ladder.
pub fn ladder(u: &ScalarSeries, v: &ScalarSeries, t0: f64, lengths: &[f64]) -> Result<Vec<LadderPoint>> {
    lengths
        .iter()
        .map(|&t_len| {
            let a = u.time_average(t0, t0 + t_len)?;
            let b = v.time_average(t0, t0 + t_len)?;
            Ok(LadderPoint {
                t_len,
                diff: (b - a).abs(),
            })
        })
        .collect()
}

/// Whether each ladder entry is at most `(1 + slack)` times the previous one.
pub fn is_decreasing_trend(points: &[LadderPoint], slack: f64) -> bool {
    points.windows(2).all(|w| w[1].diff <= (1.0 + slack) * w[0].diff)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
