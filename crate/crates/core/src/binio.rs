//! Little-endian read/write helpers shared by the binary file formats.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::io::{Read, Write};

pub fn write_magic<W: Write>(w: &mut W, magic: &[u8; 5]) -> Result<()> {
    w.write_all(magic)?;
    Ok(())
}

pub fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 5]) -> Result<()> {
    let mut buf = [0u8; 5];
    r.read_exact(&mut buf)
        .map_err(|_| Error::FormatError("truncated header".into()))?;
    if &buf != magic {
        return Err(Error::FormatError(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&buf),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_u32::<LittleEndian>(v)?;
    Ok(())
}

pub fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    r.read_u32::<LittleEndian>()
        .map_err(|_| Error::FormatError("truncated u32".into()))
}

pub fn write_f32<W: Write>(w: &mut W, v: f32) -> Result<()> {
    w.write_f32::<LittleEndian>(v)?;
    Ok(())
}

pub fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    r.read_f32::<LittleEndian>()
        .map_err(|_| Error::FormatError("truncated f32".into()))
}

pub fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_f64::<LittleEndian>(v)?;
    Ok(())
}

pub fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    r.read_f64::<LittleEndian>()
        .map_err(|_| Error::FormatError("truncated f64".into()))
}

/// Writes a matrix as row-major f64 entries (no dimension header).
pub fn write_matrix_body<W: Write>(w: &mut W, m: &Matrix) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            write_f64(w, m[(i, j)])?;
        }
    }
    Ok(())
}

/// Reads `rows`×`cols` row-major f64 entries.
pub fn read_matrix_body<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<Matrix> {
    let mut data = vec![0.0f64; rows * cols];
    for v in data.iter_mut() {
        *v = read_f64(r)?;
    }
    Ok(Matrix::from_row_slice(rows, cols, &data))
}
