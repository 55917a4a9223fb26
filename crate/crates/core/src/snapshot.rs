//! NDG2 binary snapshots.
//!
//! Layout: magic `NDG2`, format version (u32 LE), points per axis (u32 LE),
//! domain side (f64 LE), then for each wavevector in row-major `(k1, k2)`
//! index order the interleaved `re û1, im û1, re û2, im û2` as f64 LE.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::{Complex64, GridSpec, LerayProject, SpectralField, VectorField};

pub const MAGIC: &[u8; 4] = b"NDG2";
pub const VERSION: u32 = 1;

pub fn encode_vector(field: &VectorField) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(20 + g.len() * 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.n as u32).to_le_bytes());
    out.extend_from_slice(&g.side.to_le_bytes());
    for (a, b) in field.u1.iter().zip(&field.u2) {
        for x in [a.re, a.im, b.re, b.im] {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn encode(field: &SpectralField) -> Vec<u8> {
    encode_vector(&field.to_vector())
}

/// Decodes raw coefficients. The dealiasing fraction is not part of the
/// format and is taken from `dealias_fraction`.
pub fn decode_vector(bytes: &[u8], dealias_fraction: f64) -> Result<VectorField> {
    if bytes.len() < 20 || &bytes[0..4] != MAGIC {
        return Err(Error::Format("missing NDG2 header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u32_at(8) as usize;
    let side = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let grid = GridSpec::new(n, side, dealias_fraction)?;
    let expected = 20 + grid.len() * 32;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload length {} does not match n={n} (expected {expected})",
            bytes.len()
        )));
    }
    let mut u1 = Vec::with_capacity(grid.len());
    let mut u2 = Vec::with_capacity(grid.len());
    for chunk in bytes[20..].chunks_exact(32) {
        let f = |o: usize| f64::from_le_bytes(chunk[o..o + 8].try_into().unwrap());
        u1.push(Complex64::new(f(0), f(8)));
        u2.push(Complex64::new(f(16), f(24)));
    }
    VectorField::new(grid, u1, u2)
}

/// Decodes and Leray-projects into a field.
pub fn decode(bytes: &[u8], dealias_fraction: f64) -> Result<SpectralField> {
    Ok(decode_vector(bytes, dealias_fraction)?.project_leray())
}

pub fn write(path: &Path, field: &SpectralField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode(field))?;
    w.flush()?;
    Ok(())
}

pub fn read(path: &Path, dealias_fraction: f64) -> Result<SpectralField> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode(&bytes, dealias_fraction)
}

/// Reads a snapshot and checks that it lives on `grid`.
pub fn read_on(path: &Path, grid: &GridSpec) -> Result<SpectralField> {
    let f = read(path, grid.dealias_fraction)?;
    f.grid().check_same(grid)?;
    Ok(f)
}
