use ndg_core::observers::{
    draw_noise, estimate_c0, estimate_c1, NoiseModel, ObservationOperator, ObserverSpec, VOLUME_OVERLAP_C1,
};
use ndg_core::spectral::{random_smooth_field, GridSpec, VectorField};

fn corpus(grid: GridSpec, n: u64) -> Vec<VectorField> {
    (0..n)
        .map(|s| random_smooth_field(grid, 1000 + s).to_vector())
        .collect()
}

fn volume(cells: usize, grid: GridSpec) -> ObservationOperator {
    ObservationOperator::new(
        ObserverSpec::VolumeAverage {
            cells_per_axis: cells,
            mollify_width: 0.5,
        },
        grid,
    )
    .unwrap()
}

#[test]
fn volume_constants_stable_across_resolution() {
    let grid = GridSpec::periodic_2pi(128).unwrap();
    let c = corpus(grid, 20);
    let c0: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&m| estimate_c0(&volume(m, grid), &c).unwrap())
        .collect();
    let hi = c0.iter().cloned().fold(0.0, f64::max);
    let lo = c0.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(hi.is_finite() && lo > 0.0);
    assert!(hi / lo < 2.0, "{c0:?}");
    for m in [8, 16] {
        assert!(estimate_c1(&volume(m, grid), &c).unwrap().is_finite());
    }
}

#[test]
fn fourier_projection_constants() {
    let grid = GridSpec::periodic_2pi(32).unwrap();
    let c = corpus(grid, 20);
    for k2 in [2, 10, 50] {
        let op = ObservationOperator::new(ObserverSpec::fourier_cutoff(&grid, k2), grid).unwrap();
        assert!(estimate_c0(&op, &c).unwrap() <= 1.0);
        assert!(estimate_c1(&op, &c).unwrap() <= 1.0 + 1e-12);
    }
}

#[test]
fn volume_noise_bounds_hold() {
    let grid = GridSpec::periodic_2pi(64).unwrap();
    let eps = 1e-2;
    let root_area = grid.area().sqrt();
    for cells in [8, 16] {
        let op = volume(cells, grid);
        let c0 = op.measure_c0().unwrap();
        let model = NoiseModel::new(eps, 3).unwrap();
        let mut ws = op.workspace();
        for n in 0..100 {
            let eta = draw_noise(&model, n, &op, &mut ws);
            assert!(eta.l2() <= eps * root_area);
            let h1_bound = c0 * (2.0 * VOLUME_OVERLAP_C1 as f64).sqrt() * eps / op.h_eff() * root_area;
            assert!(eta.h1() <= h1_bound);
        }
    }
}

#[test]
fn noise_is_reproducible_and_scales_with_epsilon() {
    let grid = GridSpec::periodic_2pi(32).unwrap();
    let op = volume(8, grid);
    let mut ws = op.workspace();
    let a = draw_noise(&NoiseModel::new(1e-3, 5).unwrap(), 7, &op, &mut ws);
    let b = draw_noise(&NoiseModel::new(1e-3, 5).unwrap(), 7, &op, &mut ws);
    let c = draw_noise(&NoiseModel::new(2e-3, 5).unwrap(), 7, &op, &mut ws);
    assert_eq!(a.u1, b.u1);
    assert!((c.l2() / a.l2() - 2.0).abs() < 1e-12);
    let d = draw_noise(&NoiseModel::new(1e-3, 5).unwrap(), 8, &op, &mut ws);
    assert_ne!(a.u1, d.u1);
}

#[test]
fn partition_of_unity_and_overlap() {
    let grid = GridSpec::periodic_2pi(64).unwrap();
    for cells in [4, 8, 16, 32] {
        let op = volume(cells, grid);
        assert!(op.partition_defect().unwrap() <= 1e-12);
        assert!(op.max_overlap().unwrap() <= VOLUME_OVERLAP_C1);
    }
}
