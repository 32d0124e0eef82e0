//! Binary field snapshots.
//!
//! Layout (all little-endian):
//!
//! ```text
//! bytes 0..8    magic "EPSIMFLD"
//! bytes 8..12   u32 format version
//! bytes 12..16  u32 field kind
//! u64           n
//! f64           R
//! n*n * (f64 re, f64 im)   coefficients in row-major FFT order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{SpectralField, TorusGrid};

pub const MAGIC: &[u8; 8] = b"EPSIMFLD";
pub const VERSION: u32 = 1;

/// What a snapshot holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Generic = 0,
    /// The complex unknown `U = Lambda g + i |nabla| h`.
    Unknown = 1,
    /// The profile `V = e^{it Lambda} U`.
    Profile = 2,
}

impl FieldKind {
    fn from_code(c: u32) -> Option<Self> {
        match c {
            0 => Some(FieldKind::Generic),
            1 => Some(FieldKind::Unknown),
            2 => Some(FieldKind::Profile),
            _ => None,
        }
    }
}

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::Snapshot { path: path.to_path_buf(), reason: reason.into() }
}

pub fn encode(kind: FieldKind, field: &SpectralField, out: &mut impl Write) -> std::io::Result<()> {
    let g = field.grid();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(kind as u32).to_le_bytes())?;
    out.write_all(&(g.n() as u64).to_le_bytes())?;
    out.write_all(&g.side().to_le_bytes())?;
    for c in field.coeffs() {
        out.write_all(&c.re.to_le_bytes())?;
        out.write_all(&c.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_field(path: &Path, kind: FieldKind, field: &SpectralField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode(kind, field, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Reads a snapshot. When `grid` is given and matches the stored metadata
/// it is reused, otherwise a fresh grid is built.
pub fn read_field(path: &Path, grid: Option<&TorusGrid>) -> Result<(FieldKind, SpectralField)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 32];
    r.read_exact(&mut head).map_err(|_| bad(path, "truncated header"))?;
    if &head[0..8] != MAGIC {
        return Err(bad(path, "bad magic"));
    }
    let version = u32::from_le_bytes(head[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(path, format!("unsupported version {version}")));
    }
    let code = u32::from_le_bytes(head[12..16].try_into().unwrap());
    let kind = FieldKind::from_code(code).ok_or_else(|| bad(path, format!("unknown kind {code}")))?;
    let n = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
    let side = f64::from_le_bytes(head[24..32].try_into().unwrap());
    let grid = match grid {
        Some(g) if g.n() == n && g.side() == side => g.clone(),
        _ => TorusGrid::new(side, n)?,
    };
    let mut raw = vec![0u8; 16 * grid.len()];
    r.read_exact(&mut raw).map_err(|_| bad(path, "truncated coefficient block"))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(bad(path, "trailing bytes"));
    }
    let coeffs = raw
        .chunks_exact(16)
        .map(|b| {
            Complex64::new(
                f64::from_le_bytes(b[0..8].try_into().unwrap()),
                f64::from_le_bytes(b[8..16].try_into().unwrap()),
            )
        })
        .collect();
    Ok((kind, SpectralField::from_coeffs(&grid, coeffs)?))
}
