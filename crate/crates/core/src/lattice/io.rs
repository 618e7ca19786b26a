//! Binary and CSV serialisation of lattice snapshots.
//!
//! A binary record is
//!
//! ```text
//! "PFLD" | version: u32 | axes: u32 | (points: u32, length: f64) per axis | samples: f64...
//! ```
//!
//! with every number little-endian and samples in row-major site order.
//! Complex lattices are written as two consecutive records (real part,
//! imaginary part).

use std::io::{Read, Write};
use std::sync::Arc;

use super::{ensure_same_grid, ComplexLattice, Grid, RealLattice, MAX_AXES};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PFLD";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_real<W: Write>(mut w: W, f: &RealLattice) -> Result<()> {
    let grid = f.grid();
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(grid.ndim() as u32).to_le_bytes())?;
    for a in grid.axes() {
        w.write_all(&(a.points as u32).to_le_bytes())?;
        w.write_all(&a.length.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(8 * f.values().len());
    for v in f.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Read one record, building a fresh grid from its header.
pub fn read_real<R: Read>(mut r: R) -> Result<RealLattice> {
    let axes = read_header(&mut r)?;
    let grid = Grid::new(&axes)?;
    read_samples(&mut r, &grid)
}

/// Read one record whose header must describe `grid`.
pub fn read_real_on<R: Read>(mut r: R, grid: &Arc<Grid>) -> Result<RealLattice> {
    let axes = read_header(&mut r)?;
    let found = Grid::new(&axes)?;
    ensure_same_grid(grid, &found)?;
    read_samples(&mut r, grid)
}

pub fn write_complex<W: Write>(mut w: W, f: &ComplexLattice) -> Result<()> {
    write_real(&mut w, &f.re())?;
    write_real(&mut w, &f.im())
}

pub fn read_complex<R: Read>(mut r: R) -> Result<ComplexLattice> {
    let re = read_real(&mut r)?;
    let im = read_real_on(&mut r, re.grid())?;
    ComplexLattice::from_parts(&re, &im)
}

/// Inspection export: one row per site with its coordinates and value.
/// Values are rounded to 17 significant digits.
pub fn write_csv<W: Write>(w: W, f: &RealLattice) -> Result<()> {
    let grid = f.grid();
    let n = grid.ndim();
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=n).map(|a| format!("x_{a}")).collect();
    header.push("value".into());
    out.write_record(&header)?;
    for (site, v) in f.values().iter().enumerate() {
        let x = grid.position(site);
        let mut row: Vec<String> = x[..n].iter().map(|c| fmt_f64(*c)).collect();
        row.push(fmt_f64(*v));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Float formatting shared by every CSV the crate writes.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn read_header<R: Read>(r: &mut R) -> Result<Vec<(usize, f64)>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let naxes = read_u32(r)? as usize;
    if naxes == 0 || naxes > MAX_AXES {
        return Err(Error::Format(format!("axis count {naxes} out of range")));
    }
    let mut axes = Vec::with_capacity(naxes);
    for _ in 0..naxes {
        let points = read_u32(r)? as usize;
        let length = read_f64(r)?;
        axes.push((points, length));
    }
    Ok(axes)
}

fn read_samples<R: Read>(r: &mut R, grid: &Arc<Grid>) -> Result<RealLattice> {
    let mut bytes = vec![0u8; 8 * grid.len()];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    RealLattice::from_vec(grid, data)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
