//! Binary tensor file conventions.
//!
//! All files are little-endian with a fixed-rank shape header of unsigned
//! 64-bit integers followed by the payload:
//!
//! * matrix / token dump: `[rows][cols]` then row-major `f64`;
//! * stacked maps (per-frame grids, vision features): `[t][rows][cols]`
//!   then frame-major, row-major `f64`;
//! * raw video blob: `[frames][channels][height][width]` then one byte per
//!   value, frame-major; bytes map to `[0, 1]` by division with 255.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use vad_core::encoders::FrameTensor;
use vad_core::Matrix;

use crate::error::{PipelineError, Result};

fn write_u64s<W: Write>(w: &mut W, values: &[u64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

/// Writes a matrix as `[rows][cols]` + row-major floats.
pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_u64s(&mut w, &[m.rows() as u64, m.cols() as u64])?;
    write_f64s(&mut w, m.data())?;
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix`].
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let rows = read_u64(&mut r)? as usize;
    let cols = read_u64(&mut r)? as usize;
    let data = read_f64s(
        &mut r,
        rows.checked_mul(cols)
            .ok_or_else(|| PipelineError::data(format!("tensor shape {rows}x{cols} overflows")))?,
    )?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(PipelineError::data(format!(
            "trailing bytes after {rows}x{cols} matrix in {}",
            path.display()
        )));
    }
    Matrix::new(rows, cols, data)
        .map_err(|e| PipelineError::data(format!("{}: {e}", path.display())))
}

/// Writes a stack of equally shaped matrices as `[t][rows][cols]` + floats.
pub fn write_stack(path: &Path, frames: &[Matrix]) -> Result<()> {
    let first = frames
        .first()
        .ok_or_else(|| PipelineError::data("cannot write an empty stack"))?;
    if frames
        .iter()
        .any(|f| f.rows() != first.rows() || f.cols() != first.cols())
    {
        return Err(PipelineError::data("stack frames must share one shape"));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_u64s(
        &mut w,
        &[
            frames.len() as u64,
            first.rows() as u64,
            first.cols() as u64,
        ],
    )?;
    for f in frames {
        write_f64s(&mut w, f.data())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a stack written by [`write_stack`].
pub fn read_stack(path: &Path) -> Result<Vec<Matrix>> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let t = read_u64(&mut r)? as usize;
    let rows = read_u64(&mut r)? as usize;
    let cols = read_u64(&mut r)? as usize;
    let mut frames = Vec::with_capacity(t);
    for _ in 0..t {
        let data = read_f64s(&mut r, rows * cols)?;
        frames.push(
            Matrix::new(rows, cols, data)
                .map_err(|e| PipelineError::data(format!("{}: {e}", path.display())))?,
        );
    }
    Ok(frames)
}

/// Writes frames as a raw byte blob (`[t][c][h][w]` header + one byte per
/// value). Values are clamped to `[0, 1]` and quantized by rounding to 255ths.
pub fn write_video_blob(path: &Path, frames: &FrameTensor) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_u64s(
        &mut w,
        &[
            frames.frames as u64,
            frames.channels as u64,
            frames.height as u64,
            frames.width as u64,
        ],
    )?;
    let bytes: Vec<u8> = frames
        .data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Reads a raw video blob back into unit-interval floats.
pub fn read_video_blob(path: &Path) -> Result<FrameTensor> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let t = read_u64(&mut r)? as usize;
    let c = read_u64(&mut r)? as usize;
    let h = read_u64(&mut r)? as usize;
    let w = read_u64(&mut r)? as usize;
    let count = t
        .checked_mul(c)
        .and_then(|x| x.checked_mul(h))
        .and_then(|x| x.checked_mul(w))
        .ok_or_else(|| PipelineError::data("video blob shape overflows"))?;
    let mut bytes = vec![0u8; count];
    r.read_exact(&mut bytes)?;
    let data: Vec<f64> = bytes.iter().map(|&b| b as f64 / 255.0).collect();
    FrameTensor::new(t, c, h, w, data)
        .map_err(|e| PipelineError::data(format!("{}: {e}", path.display())))
}

/// Quantizes a unit-interval value exactly the way the blob writer does.
pub fn quantize_unit(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hex SHA-256 of a string.
pub fn sha256_str(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn matrix_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = Matrix::new(3, 2, vec![0.1, -2.5e-17, 3.0, 1.0 / 3.0, -0.0, 5e300]).unwrap();
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn matrix_rejects_trailing_bytes() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = Matrix::new(1, 1, vec![1.0]).unwrap();
        write_matrix(&path, &m).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.push(0);
        fs::write(&path, &bytes).unwrap();
        assert!(read_matrix(&path).is_err());
    }

    #[test]
    fn stack_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let frames = vec![
            Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            Matrix::new(2, 2, vec![-1.0, -2.0, -3.0, -4.0]).unwrap(),
        ];
        write_stack(&path, &frames).unwrap();
        assert_eq!(read_stack(&path).unwrap(), frames);
    }

    #[test]
    fn video_blob_round_trip_quantized() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("v.rawvid");
        let frames =
            FrameTensor::new(2, 1, 2, 3, (0..12).map(|i| i as f64 / 11.0).collect()).unwrap();
        write_video_blob(&path, &frames).unwrap();
        let back = read_video_blob(&path).unwrap();
        assert_eq!(back.frames, 2);
        assert_eq!(back.height, 2);
        assert_eq!(back.width, 3);
        for (a, b) in frames.data.iter().zip(&back.data) {
            assert_eq!(quantize_unit(*a), *b);
        }
    }

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_str(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
