//! Tensor persistence: the BCT1 binary format and CSV for 2-D tensors.
//!
//! BCT1 layout: magic `"BCT1"`, `u32` rank, `rank x u64` extents, then the
//! row-major little-endian `f64` payload. CSV files carry a header row and
//! use Rust's shortest round-trip float formatting, so rewriting the same
//! tensor reproduces the same bytes.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"BCT1";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), detail: detail.into() }
}

/// Writes a tensor in the BCT1 format.
pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut inner = || -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(tensor.rank() as u32).to_le_bytes())?;
        for &e in tensor.shape() {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    };
    inner().map_err(|e| io_err(path, e))
}

/// Reads a tensor in the BCT1 format.
pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != MAGIC {
        return Err(parse_err(path, "bad magic, expected BCT1"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(|e| io_err(path, e))?;
    let rank = u32::from_le_bytes(b4) as usize;
    if rank == 0 || rank > 8 {
        return Err(parse_err(path, format!("implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut b8 = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut b8).map_err(|e| io_err(path, e))?;
        shape.push(u64::from_le_bytes(b8) as usize);
    }
    let len: usize = shape.iter().product();
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut b8).map_err(|e| io_err(path, e))?;
        data.push(f64::from_le_bytes(b8));
    }
    Tensor::new(shape, data)
}

/// Writes a 2-D tensor as CSV with the given column names.
pub fn write_csv(path: &Path, tensor: &Tensor, columns: &[String]) -> Result<()> {
    if tensor.rank() != 2 {
        return Err(Error::shape("write_csv", format!("rank {} tensor", tensor.rank())));
    }
    let cols = tensor.shape()[1];
    if columns.len() != cols {
        return Err(Error::shape(
            "write_csv",
            format!("{} column names for {} columns", columns.len(), cols),
        ));
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut inner = || -> std::io::Result<()> {
        writeln!(w, "{}", columns.join(","))?;
        for r in 0..tensor.outer() {
            let row = tensor.slice(r);
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()
    };
    inner().map_err(|e| io_err(path, e))
}

/// Reads a CSV written by [`write_csv`]; returns the tensor and header names.
pub fn read_csv(path: &Path) -> Result<(Tensor, Vec<String>)> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| io_err(path, e))?,
        None => return Err(parse_err(path, "empty file")),
    };
    let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let cols = columns.len();
    let mut data = Vec::new();
    let mut rows = 0usize;
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0usize;
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                parse_err(path, format!("line {}: bad float {:?}", lineno + 2, field))
            })?;
            data.push(v);
            count += 1;
        }
        if count != cols {
            return Err(parse_err(
                path,
                format!("line {}: {} fields, expected {}", lineno + 2, count, cols),
            ));
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(path, "no data rows"));
    }
    Ok((Tensor::new(vec![rows, cols], data)?, columns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{draw_normal, SeededRng};

    #[test]
    fn tensor_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bct");
        let t = draw_normal(&mut SeededRng::new(5).stream("io", 0), &[3, 4, 2]);
        write_tensor(&path, &t).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.shape(), t.shape());
        assert_eq!(back.data(), t.data());
    }

    #[test]
    fn tensor_file_bytes_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.bct");
        let b = dir.path().join("b.bct");
        let t = draw_normal(&mut SeededRng::new(9).stream("io", 1), &[16]);
        write_tensor(&a, &t).unwrap();
        write_tensor(&b, &t).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bct");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(read_tensor(&path).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let t = Tensor::from_rows(&[vec![1.5, -2.0], vec![0.25, 1e-9]]).unwrap();
        write_csv(&path, &t, &["a".into(), "b".into()]).unwrap();
        let (back, cols) = read_csv(&path).unwrap();
        assert_eq!(cols, vec!["a".to_string(), "b".to_string()]);
        assert_eq!(back.data(), t.data());
    }
}
