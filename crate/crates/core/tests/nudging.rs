use ndg_core::nudging::{assimilate, error_series, fit_contraction, run_twin, TwinSettings};
use ndg_core::observers::{observe_trajectory, NoiseModel, ObservationOperator, ObservationStream, ObserverSpec};
use ndg_core::solver::{band_forcing, integrate, taylor_green, Scheme, SolverConfig};
use ndg_core::spectral::{random_smooth_field, GridSpec, SpectralField};

fn obs_times(t0: f64, kappa: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| t0 + i as f64 * kappa).collect()
}

#[test]
fn zero_gain_matches_plain_solver_bitwise() {
    let grid = GridSpec::periodic_2pi(32).unwrap();
    let cfg = SolverConfig::new(0.1, 1e-3, Scheme::ImexCnab2, grid).unwrap();
    let g = band_forcing(grid, 30.0, 0.1, 2.0, 4.0, 1).unwrap();
    let u0 = random_smooth_field(grid, 2);
    let v0 = random_smooth_field(grid, 3);
    let kappa = 0.0137;
    let times = obs_times(0.0, kappa, 20);
    let t_end = *times.last().unwrap();
    let u = integrate(&u0, &g, 0.0, t_end, &cfg, &times).unwrap();
    let op = ObservationOperator::new(ObserverSpec::fourier_cutoff(&grid, 8), grid).unwrap();
    let stream = observe_trajectory(&u, &times, &op, &NoiseModel::noiseless(), kappa).unwrap();
    let v = assimilate(&v0, &stream, &g, 0.0, &op, &cfg, t_end).unwrap();
    let plain = integrate(&v0, &g, 0.0, t_end, &cfg, &times).unwrap();
    assert_eq!(v.times, plain.times);
    for (a, b) in v.fields.iter().zip(&plain.fields) {
        assert_eq!(a.vorticity(), b.vorticity());
    }
}

#[test]
fn twin_zero_gain_matches_plain_solver_bitwise() {
    let grid = GridSpec::periodic_2pi(32).unwrap();
    let cfg = SolverConfig::new(0.1, 1e-3, Scheme::ImexCnab2, grid).unwrap();
    let g = band_forcing(grid, 30.0, 0.1, 2.0, 4.0, 1).unwrap();
    let u0 = random_smooth_field(grid, 2);
    let v0 = random_smooth_field(grid, 3);
    let op = ObservationOperator::new(ObserverSpec::fourier_cutoff(&grid, 8), grid).unwrap();
    let s = TwinSettings {
        t0: 0.0,
        t_end: 0.2,
        kappa: 0.01,
        beta: 0.0,
        record_every: 1,
        check_every: 1,
        snapshot_every: 0,
    };
    let out = run_twin(&u0, &v0, &g, &op, &NoiseModel::noiseless(), &cfg, &s, None).unwrap();
    let times = obs_times(0.0, 0.01, 20);
    let plain = integrate(&v0, &g, 0.0, 0.2, &cfg, &times).unwrap();
    assert_eq!(out.final_v.unwrap().vorticity(), plain.last().unwrap().vorticity());
}

#[test]
fn synchronized_start_is_a_fixed_point() {
    let grid = GridSpec::periodic_2pi(32).unwrap();
    let cfg = SolverConfig::new(0.1, 1e-3, Scheme::ImexCnab2, grid).unwrap();
    let g = band_forcing(grid, 30.0, 0.1, 2.0, 4.0, 5).unwrap();
    let u0 = random_smooth_field(grid, 6);
    let op = ObservationOperator::new(
        ObserverSpec::VolumeAverage {
            cells_per_axis: 8,
            mollify_width: 0.5,
        },
        grid,
    )
    .unwrap();
    let s = TwinSettings {
        t0: 0.0,
        t_end: 0.5,
        kappa: 0.005,
        beta: 20.0,
        record_every: 1,
        check_every: 1,
        snapshot_every: 0,
    };
    let out = run_twin(&u0, &u0, &g, &op, &NoiseModel::noiseless(), &cfg, &s, None).unwrap();
    let scale = out.final_u.as_ref().unwrap().l2();
    let worst = out.w_l2_obs.iter().cloned().fold(0.0, f64::max);
    assert!(worst <= 1e-8 * scale, "drift {worst}");
    assert_eq!(out.structure_failures, 0);
}

/// Reference and assimilated fields that are both multiples of the
/// Taylor-Green mode stay in that mode, so `w = a(t)·TG` with
/// `a' = −2νa − β a(t_n)` on each interval.
#[test]
fn single_mode_linear_oracle() {
    let grid = GridSpec::periodic_2pi(16).unwrap();
    let (nu, beta, kappa) = (0.5, 4.0, 0.05);
    let cfg = SolverConfig::new(nu, kappa / 100.0, Scheme::ImexCnab2, grid).unwrap();
    let zero = SpectralField::zeros(grid);
    let u0 = taylor_green(1.0, 0.0, nu, grid).unwrap();
    let v0 = taylor_green(3.0, 0.0, nu, grid).unwrap();
    let op = ObservationOperator::new(ObserverSpec::fourier_cutoff(&grid, 2), grid).unwrap();
    let n = 40;
    let s = TwinSettings {
        t0: 0.0,
        t_end: n as f64 * kappa,
        kappa,
        beta,
        record_every: 1,
        check_every: 1,
        snapshot_every: 0,
    };
    let out = run_twin(&u0, &v0, &zero, &op, &NoiseModel::noiseless(), &cfg, &s, None).unwrap();
    let unit = taylor_green(1.0, 0.0, nu, grid).unwrap().l2();
    let decay = (-2.0 * nu * kappa).exp();
    let gain = beta * (1.0 - decay) / (2.0 * nu);
    let mut a = 2.0f64;
    for (i, &w) in out.w_l2_obs.iter().enumerate() {
        let rel = (w - a.abs() * unit).abs() / (a.abs() * unit).max(1e-300);
        assert!(rel < 1e-5, "step {i}: {w} vs {}", a.abs() * unit);
        a = a * decay - gain * a;
    }
}

#[test]
fn nudging_synchronizes_small_problem() {
    let grid = GridSpec::periodic_2pi(32).unwrap();
    let nu = 0.1;
    let cfg = SolverConfig::new(nu, 2e-3, Scheme::ImexCnab2, grid).unwrap();
    let g = band_forcing(grid, 50.0, nu, 2.0, 4.0, 3).unwrap();
    let u0 = integrate(&random_smooth_field(grid, 1), &g, 0.0, 2.0, &cfg, &[])
        .unwrap()
        .last()
        .unwrap()
        .clone();
    let v0 = random_smooth_field(grid, 2).scale(u0.l2() / random_smooth_field(grid, 2).l2());
    let op = ObservationOperator::new(ObserverSpec::fourier_cutoff(&grid, 25), grid).unwrap();
    let s = TwinSettings {
        t0: 0.0,
        t_end: 3.0,
        kappa: 0.01,
        beta: 20.0,
        record_every: 10,
        check_every: 10,
        snapshot_every: 0,
    };
    let out = run_twin(&u0, &v0, &g, &op, &NoiseModel::noiseless(), &cfg, &s, None).unwrap();
    let first = out.w_l2_obs[0];
    let last = *out.w_l2_obs.last().unwrap();
    assert!(last < 1e-6 * first, "{first} -> {last}");
    let fit = fit_contraction(&out.w_l2_obs).unwrap();
    assert!(fit.theta.unwrap() < 1.0);
    assert_eq!(out.structure_failures, 0);
}

#[test]
fn stream_round_trip_reproduces_assimilation() {
    let grid = GridSpec::periodic_2pi(16).unwrap();
    let cfg = SolverConfig::new(0.2, 2e-3, Scheme::ImexCnab2, grid).unwrap();
    let g = band_forcing(grid, 20.0, 0.2, 1.0, 3.0, 1).unwrap();
    let u0 = random_smooth_field(grid, 4);
    let kappa = 0.02;
    let times = obs_times(0.0, kappa, 10);
    let u = integrate(&u0, &g, 0.0, 0.2, &cfg, &times).unwrap();
    let op = ObservationOperator::new(ObserverSpec::fourier_cutoff(&grid, 5), grid).unwrap();
    let noise = NoiseModel::new(1e-3, 17).unwrap();
    let stream = observe_trajectory(&u, &times, &op, &noise, kappa).unwrap();
    let dir = tempfile::tempdir().unwrap();
    stream.save(dir.path()).unwrap();
    let loaded = ObservationStream::load(dir.path()).unwrap();
    assert_eq!(loaded.times, stream.times);
    let v0 = SpectralField::zeros(grid);
    let a = assimilate(&v0, &stream, &g, 10.0, &op, &cfg, 0.2).unwrap();
    let b = assimilate(&v0, &loaded, &g, 10.0, &op, &cfg, 0.2).unwrap();
    let (fa, fb) = (a.last().unwrap(), b.last().unwrap());
    assert!(fa.sub(fb).unwrap().h1() <= 1e-13 * fa.h1());
    for (x, y) in loaded.observations.iter().zip(&stream.observations) {
        assert!(x.sub(y).unwrap().h1() <= 1e-14 * y.h1().max(1e-300));
    }
    let d = error_series(&u, &a).unwrap();
    assert_eq!(d.observation_rows().count(), times.len());
}
