//! Little-endian binary field files.
//!
//! Layout: `"DRFD"`, version `u32`, `n_dims` `u32`, `n_dims` counts as `u64`,
//! `n_dims` `(lower, upper)` pairs as `f64`, `n_dims` periodic flags as `u8`,
//! then the node values as `f64` in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::{Grid, ScalarField};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DRFD";
pub const VERSION: u32 = 1;

pub fn write_field_to<W: Write>(field: &ScalarField, mut w: W) -> Result<()> {
    let g = field.grid();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(g.n_dims() as u32).to_le_bytes())?;
    for &c in g.counts() {
        w.write_all(&(c as u64).to_le_bytes())?;
    }
    for d in 0..g.n_dims() {
        w.write_all(&g.lower()[d].to_le_bytes())?;
        w.write_all(&g.upper()[d].to_le_bytes())?;
    }
    for &p in g.periodic() {
        w.write_all(&[p as u8])?;
    }
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_field(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    let file = File::create(path)?;
    write_field_to(field, BufWriter::new(file))
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated file".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

pub fn read_field_from<R: Read>(mut r: R) -> Result<ScalarField> {
    let magic = read_array::<4, _>(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u32::from_le_bytes(read_array(&mut r)?) as usize;
    if n == 0 || n > 16 {
        return Err(Error::Format(format!("implausible dimension count {n}")));
    }
    let mut counts = Vec::with_capacity(n);
    for _ in 0..n {
        counts.push(u64::from_le_bytes(read_array(&mut r)?) as usize);
    }
    let mut bounds = Vec::with_capacity(n);
    for _ in 0..n {
        let lo = f64::from_le_bytes(read_array(&mut r)?);
        let hi = f64::from_le_bytes(read_array(&mut r)?);
        bounds.push((lo, hi));
    }
    let mut periodic = Vec::with_capacity(n);
    for _ in 0..n {
        periodic.push(read_array::<1, _>(&mut r)?[0] != 0);
    }
    let grid = Grid::new(&bounds, &counts, &periodic).map_err(|e| Error::Format(e.to_string()))?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        values.push(f64::from_le_bytes(read_array(&mut r)?));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after node values".into()));
    }
    ScalarField::new(Arc::new(grid), values)
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    let file = File::open(path)?;
    read_field_from(BufReader::new(file))
}
