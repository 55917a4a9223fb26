//! Fourier–Galerkin representation of periodic, mean-free, divergence-free
//! vector fields and the operators acting on them.

mod fft;
mod field;
mod grid;
mod ops;

pub use fft::{unpack_real_pair, Fft2};
pub use field::{NormReport, SpectralField, VectorField};
pub use grid::{GridSpec, ModeOrdering, ModePair};
pub use ops::{
    bilinear, dealias, low_mode_project, project_leray, random_band_field, random_smooth_field, stokes_apply,
    Advection, LerayProject,
};
pub use rustfft::num_complex::Complex64;
