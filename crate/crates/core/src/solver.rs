//! Time integration of `du/dt + νAu + B(u,u) = g + extra` in vorticity form.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{random_band_field, Advection, Complex64, GridSpec, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Crank–Nicolson on `νA`, variable-step Adams–Bashforth 2 on `B`.
    ImexCnab2,
    /// Backward Euler on `νA`, forward Euler on `B`.
    ImexEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub nu: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub grid: GridSpec,
    /// Store a trajectory sample every this many steps.
    pub sample_every: usize,
}

impl SolverConfig {
    pub fn new(nu: f64, dt: f64, scheme: Scheme, grid: GridSpec) -> Result<Self> {
        let cfg = Self {
            nu,
            dt,
            scheme,
            grid,
            sample_every: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_sample_every(mut self, every: usize) -> Self {
        self.sample_every = every.max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::InvalidInput(format!("viscosity must be > 0, got {}", self.nu)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be > 0, got {}", self.dt)));
        }
        Ok(())
    }

    fn implicit_weight(&self) -> f64 {
        match self.scheme {
            Scheme::ImexCnab2 => 0.5,
            Scheme::ImexEuler => 1.0,
        }
    }
}

/// Stateful integrator holding the multistep history.
#[derive(Debug, Clone)]
pub struct Integrator {
    cfg: SolverConfig,
    adv: Advection,
    state: SpectralField,
    t: f64,
    steps: u64,
    resolved: Vec<bool>,
    k2: Vec<f64>,
    n_cur: Vec<Complex64>,
    history: Option<(Vec<Complex64>, f64)>,
}

impl Integrator {
    pub fn new(cfg: SolverConfig, u0: SpectralField, t0: f64) -> Result<Self> {
        cfg.validate()?;
        u0.grid().check_same(&cfg.grid)?;
        let g = cfg.grid;
        let n = g.n;
        Ok(Self {
            cfg,
            adv: Advection::new(g),
            state: u0,
            t: t0,
            steps: 0,
            resolved: (0..g.len()).map(|i| g.is_resolved(i / n, i % n)).collect(),
            k2: (0..g.len()).map(|i| g.k2(i / n, i % n)).collect(),
            n_cur: vec![Complex64::default(); g.len()],
            history: None,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn state(&self) -> &SpectralField {
        &self.state
    }

    pub fn into_state(self) -> SpectralField {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    /// One step of length `h` with forcing `g + extra` held constant.
    pub fn step(&mut self, h: f64, g: &SpectralField, extra: Option<&SpectralField>) -> Result<()> {
        let grid = self.cfg.grid;
        g.grid().check_same(&grid)?;
        if let Some(e) = extra {
            e.grid().check_same(&grid)?;
        }
        let max_speed = self.adv.tendency(&self.state, &mut self.n_cur);
        if max_speed > 0.0 {
            let limit = 0.5 * grid.dx() / max_speed;
            if h > limit {
                return Err(Error::Cfl {
                    t: self.t,
                    dt: h,
                    limit,
                    max_speed,
                });
            }
        } else if !max_speed.is_finite() {
            return Err(Error::NonFinite { t: self.t });
        }

        let theta = self.cfg.implicit_weight();
        let nu = self.cfg.nu;
        let (c_cur, c_prev) = match (&self.history, self.cfg.scheme) {
            (Some((_, h_prev)), Scheme::ImexCnab2) => {
                let r = h / h_prev;
                (1.0 + 0.5 * r, -0.5 * r)
            }
            _ => (1.0, 0.0),
        };
        let prev = self.history.as_ref().map(|(v, _)| v.as_slice());
        let w = self.state.vorticity();
        let gw = g.vorticity();
        let ew = extra.map(|e| e.vorticity());
        let mut out = vec![Complex64::default(); grid.len()];
        let mut finite = true;
        for idx in 0..grid.len() {
            let lam = nu * self.k2[idx];
            let mut rhs = w[idx] * (1.0 - (1.0 - theta) * h * lam);
            if self.resolved[idx] {
                let mut f = gw[idx];
                if let Some(e) = ew {
                    f += e[idx];
                }
                let mut nl = self.n_cur[idx] * c_cur;
                if let Some(p) = prev {
                    nl += p[idx] * c_prev;
                }
                rhs += (f - nl) * h;
            }
            let v = rhs / (1.0 + theta * h * lam);
            finite &= v.re.is_finite() && v.im.is_finite();
            out[idx] = v;
        }
        if !finite {
            return Err(Error::NonFinite { t: self.t + h });
        }
        let old = std::mem::replace(&mut self.n_cur, vec![Complex64::default(); grid.len()]);
        self.history = Some((old, h));
        self.state = SpectralField::from_vorticity_unchecked(grid, out);
        self.t += h;
        self.steps += 1;
        Ok(())
    }

    /// Steps to exactly `t_target`, shortening steps uniformly so the last
    /// one lands on it. Returns the number of steps taken.
    pub fn advance_to(&mut self, t_target: f64, g: &SpectralField, extra: Option<&SpectralField>) -> Result<usize> {
        let rem = t_target - self.t;
        if rem < 0.0 {
            return Err(Error::InvalidInput(format!(
                "cannot integrate backwards from {} to {t_target}",
                self.t
            )));
        }
        if rem == 0.0 {
            return Ok(0);
        }
        let n = step_count(rem, self.cfg.dt);
        let h = rem / n as f64;
        for _ in 0..n - 1 {
            self.step(h, g, extra)?;
        }
        self.step(h, g, extra)?;
        self.t = t_target;
        Ok(n)
    }

    /// Steps to `t_target`, calling `on_step` after each step.
    pub fn advance_to_with(
        &mut self,
        t_target: f64,
        g: &SpectralField,
        extra: Option<&SpectralField>,
        mut on_step: impl FnMut(&Integrator),
    ) -> Result<usize> {
        let rem = t_target - self.t;
        if rem <= 0.0 {
            return self.advance_to(t_target, g, extra);
        }
        let n = step_count(rem, self.cfg.dt);
        let h = rem / n as f64;
        for i in 0..n {
            self.step(h, g, extra)?;
            if i + 1 == n {
                self.t = t_target;
            }
            on_step(self);
        }
        Ok(n)
    }
}

fn step_count(rem: f64, dt: f64) -> usize {
    ((rem / dt - 1e-9).ceil() as usize).max(1)
}

/// A single step from `state` with no multistep history (the bootstrap step
/// of CNAB2, or the IMEX Euler step).
pub fn step(
    state: &SpectralField,
    g: &SpectralField,
    extra: &SpectralField,
    cfg: &SolverConfig,
) -> Result<SpectralField> {
    let mut it = Integrator::new(*cfg, state.clone(), 0.0)?;
    it.step(cfg.dt, g, Some(extra))?;
    Ok(it.into_state())
}

/// Time-ordered samples of a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<SpectralField>,
    pub is_checkpoint: Vec<bool>,
    pub sample_every: usize,
}

impl Trajectory {
    pub fn new(sample_every: usize) -> Self {
        Self {
            times: Vec::new(),
            fields: Vec::new(),
            is_checkpoint: Vec::new(),
            sample_every,
        }
    }

    /// Appends a sample, merging with the last one if the time coincides.
    pub fn push(&mut self, t: f64, field: SpectralField, checkpoint: bool) {
        if let Some(&last) = self.times.last() {
            if last == t {
                *self.fields.last_mut().unwrap() = field;
                *self.is_checkpoint.last_mut().unwrap() |= checkpoint;
                return;
            }
            debug_assert!(t > last);
        }
        self.times.push(t);
        self.fields.push(field);
        self.is_checkpoint.push(checkpoint);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        Some((*self.times.first()?, *self.times.last()?))
    }

    /// Field stored at exactly time `t`.
    pub fn at(&self, t: f64) -> Option<&SpectralField> {
        let i = self.times.partition_point(|&s| s < t);
        (self.times.get(i) == Some(&t)).then(|| &self.fields[i])
    }

    pub fn last(&self) -> Option<&SpectralField> {
        self.fields.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,l2,h1,energy,enstrophy\n");
        for (t, f) in self.times.iter().zip(&self.fields) {
            let r = f.norms();
            let _ = writeln!(
                s,
                "{t:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                r.l2,
                r.h1,
                0.5 * r.l2 * r.l2,
                0.5 * r.h1 * r.h1
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Writes an NDG2 snapshot for every checkpoint sample, named by index.
    pub fn write_checkpoints(&self, dir: &Path, prefix: &str) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        let mut k = 0;
        for (f, &c) in self.fields.iter().zip(&self.is_checkpoint) {
            if c {
                let p = dir.join(format!("{prefix}{k:06}.ndg2"));
                crate::snapshot::write(&p, f)?;
                out.push(p);
                k += 1;
            }
        }
        Ok(out)
    }
}

/// Integrates from `t0` to `t1`, landing exactly on every checkpoint.
pub fn integrate(
    u0: &SpectralField,
    g: &SpectralField,
    t0: f64,
    t1: f64,
    cfg: &SolverConfig,
    checkpoints: &[f64],
) -> Result<Trajectory> {
    if !(t1 > t0) {
        return Err(Error::InvalidInput(format!("need t1 > t0, got [{t0}, {t1}]")));
    }
    let mut stops: Vec<f64> = Vec::with_capacity(checkpoints.len() + 1);
    for &c in checkpoints {
        if !(c >= t0 && c <= t1) {
            return Err(Error::InvalidInput(format!("checkpoint {c} outside [{t0}, {t1}]")));
        }
        stops.push(c);
    }
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    let is_cp = |t: f64, stops: &[f64]| stops.binary_search_by(|s| s.total_cmp(&t)).is_ok();

    let mut traj = Trajectory::new(cfg.sample_every);
    traj.push(t0, u0.clone(), is_cp(t0, &stops));
    let mut it = Integrator::new(*cfg, u0.clone(), t0)?;
    let every = cfg.sample_every.max(1) as u64;
    let mut targets = stops.clone();
    if targets.last() != Some(&t1) {
        targets.push(t1);
    }
    for &target in targets.iter().filter(|&&s| s > t0) {
        it.advance_to_with(target, g, None, |s| {
            if s.steps_taken() % every == 0 && s.time() < target {
                traj.push(s.time(), s.state().clone(), false);
            }
        })?;
        traj.push(target, it.state().clone(), is_cp(target, &stops));
    }
    Ok(traj)
}

/// `G = |g|_{L²} / (ν² λ1)`.
pub fn grashof(g: &SpectralField, nu: f64, lambda1: f64) -> Result<f64> {
    if !(nu > 0.0 && lambda1 > 0.0) {
        return Err(Error::InvalidInput("ν and λ1 must be positive".into()));
    }
    Ok(g.l2() / (nu * nu * lambda1))
}

/// `(a sin x cos y, −a cos x sin y)·e^{−2νt}` on the `2π`-periodic square.
pub fn taylor_green(amplitude: f64, t: f64, nu: f64, grid: GridSpec) -> Result<SpectralField> {
    if (grid.side - 2.0 * PI).abs() > 1e-12 * 2.0 * PI {
        return Err(Error::InvalidGrid(format!(
            "Taylor-Green fixture needs side 2π, got {}",
            grid.side
        )));
    }
    let n = grid.n;
    let a = amplitude * (-2.0 * nu * t).exp();
    let mut vort = vec![Complex64::default(); grid.len()];
    // ω = 2a sin x sin y
    for (k1, k2, s) in [(1i64, 1i64, -0.5), (1, -1, 0.5), (-1, 1, 0.5), (-1, -1, -0.5)] {
        vort[grid.index_of(k1) * n + grid.index_of(k2)] = Complex64::new(s * a, 0.0);
    }
    Ok(SpectralField::from_vorticity_unchecked(grid, vort))
}

/// Time-independent, mean-free forcing supported on integer shells
/// `kmin ≤ |k| ≤ kmax`, scaled to `|g|_{L²} = G ν² λ1`.
pub fn band_forcing(
    grid: GridSpec,
    grashof_target: f64,
    nu: f64,
    kmin: f64,
    kmax: f64,
    seed: u64,
) -> Result<SpectralField> {
    if grashof_target < 0.0 {
        return Err(Error::InvalidInput("Grashof target must be ≥ 0".into()));
    }
    let raw = random_band_field(grid, kmin, kmax, 0.0, seed);
    let norm = raw.l2();
    if norm == 0.0 {
        return Err(Error::InvalidInput(format!("forcing band [{kmin}, {kmax}] is empty")));
    }
    Ok(raw.scale(grashof_target * nu * nu * grid.lambda1() / norm))
}

/// Random field on the shells `kmin ≤ |k| ≤ kmax` rescaled to the given
/// norm (`|·|_{L²}` or `‖·‖_{H¹}`).
pub fn scaled_random_field(grid: GridSpec, kmin: f64, kmax: f64, seed: u64, target: f64, h1: bool) -> SpectralField {
    let raw = random_band_field(grid, kmin, kmax, 1.0, seed);
    let norm = if h1 { raw.h1() } else { raw.l2() };
    if norm == 0.0 || target == 0.0 {
        return SpectralField::zeros(grid);
    }
    raw.scale(target / norm)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpinUpReport {
    pub duration: f64,
    pub grashof: f64,
    pub m0_emp: f64,
    pub m1_emp: f64,
    pub final_l2: f64,
    pub final_h1: f64,
    pub steps: u64,
}

/// Long integration from a random initial state with `|u0|_{L²} = νG/2`
/// toward the attractor. Bounds are maxima over the final half of the run.
pub fn spin_up(
    g: &SpectralField,
    cfg: &SolverConfig,
    duration: f64,
    seed: u64,
    min_viscous_times: f64,
) -> Result<(SpectralField, SpinUpReport)> {
    let lambda1 = cfg.grid.lambda1();
    let required = min_viscous_times / (cfg.nu * lambda1);
    if duration < required * (1.0 - 1e-12) {
        return Err(Error::InvalidInput(format!(
            "spin-up duration {duration} is shorter than {min_viscous_times} viscous times ({required})"
        )));
    }
    let grashof = grashof(g, cfg.nu, lambda1)?;
    let u0 = scaled_random_field(cfg.grid, 1.0, 6.0, seed, 0.5 * cfg.nu * grashof, false);
    let mut it = Integrator::new(*cfg, u0, 0.0)?;
    let half = 0.5 * duration;
    let (mut m0, mut m1) = (0.0f64, 0.0f64);
    let mut track = |s: &Integrator| {
        if s.time() >= half {
            m0 = m0.max(s.state().l2());
            m1 = m1.max(s.state().h1());
        }
    };
    it.advance_to_with(half, g, None, |_| {})?;
    track(&it);
    it.advance_to_with(duration, g, None, &mut track)?;
    let steps = it.steps_taken();
    let state = it.into_state();
    let report = SpinUpReport {
        duration,
        grashof,
        m0_emp: m0,
        m1_emp: m1,
        final_l2: state.l2(),
        final_h1: state.h1(),
        steps,
    };
    Ok((state, report))
}
