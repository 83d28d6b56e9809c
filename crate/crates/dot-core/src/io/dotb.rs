//! Binary array container.
//!
//! Layout: magic `DOTB`, version byte (1), dtype byte (1 = f32, 2 = f64),
//! rank as little-endian u16, then one little-endian u32 per dimension,
//! followed by the row-major IEEE-754 little-endian payload.

use crate::{DotError, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"DOTB";
const VERSION: u8 = 1;

#[derive(Debug, Clone)]
pub enum DotbData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct DotbArray {
    pub dims: Vec<usize>,
    pub data: DotbData,
}

impl DotbArray {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Payload widened to f64 regardless of stored precision.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            DotbData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            DotbData::F64(v) => v.clone(),
        }
    }

    pub fn to_f32(&self) -> Vec<f32> {
        match &self.data {
            DotbData::F32(v) => v.clone(),
            DotbData::F64(v) => v.iter().map(|&x| x as f32).collect(),
        }
    }
}

fn write_header(out: &mut Vec<u8>, dtype: u8, dims: &[usize]) -> Result<()> {
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(dtype);
    let rank = u16::try_from(dims.len())
        .map_err(|_| DotError::Config(format!("rank {} exceeds u16", dims.len())))?;
    out.extend_from_slice(&rank.to_le_bytes());
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| DotError::Config(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    Ok(())
}

pub fn write_array_f64(path: &Path, dims: &[usize], values: &[f64]) -> Result<()> {
    assert_eq!(dims.iter().product::<usize>(), values.len());
    let mut buf = Vec::with_capacity(12 + 4 * dims.len() + 8 * values.len());
    write_header(&mut buf, 2, dims)?;
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &buf)
}

pub fn write_array_f32(path: &Path, dims: &[usize], values: &[f32]) -> Result<()> {
    assert_eq!(dims.iter().product::<usize>(), values.len());
    let mut buf = Vec::with_capacity(12 + 4 * dims.len() + 4 * values.len());
    write_header(&mut buf, 1, dims)?;
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &buf)
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| DotError::io(path.display().to_string(), e))?;
    f.write_all(bytes)
        .map_err(|e| DotError::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn read_array(path: &Path) -> Result<DotbArray> {
    let show = path.display().to_string();
    let mut f =
        std::fs::File::open(path).map_err(|e| DotError::io(show.clone(), e))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)
        .map_err(|e| DotError::io(show.clone(), e))?;
    if bytes.len() < 8 {
        return Err(DotError::format(show, "truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(DotError::format(show, "bad magic"));
    }
    if bytes[4] != VERSION {
        return Err(DotError::format(show, format!("unsupported version {}", bytes[4])));
    }
    let dtype = bytes[5];
    let rank = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let head = 8 + 4 * rank;
    if bytes.len() < head {
        return Err(DotError::format(show, "truncated dimension list"));
    }
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        let o = 8 + 4 * i;
        dims.push(u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize);
    }
    let count: usize = dims.iter().product();
    let payload = &bytes[head..];
    let data = match dtype {
        1 => {
            if payload.len() != 4 * count {
                return Err(DotError::format(show, "payload length mismatch"));
            }
            DotbData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            )
        }
        2 => {
            if payload.len() != 8 * count {
                return Err(DotError::format(show, "payload length mismatch"));
            }
            DotbData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| {
                        f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]])
                    })
                    .collect(),
            )
        }
        other => return Err(DotError::format(show, format!("unknown dtype {other}"))),
    };
    Ok(DotbArray { dims, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_f64_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.dotb");
        let values: Vec<f64> = (0..60).map(|i| (i as f64).sin() * 1e-7).collect();
        write_array_f64(&path, &[3, 4, 5], &values).unwrap();
        let back = read_array(&path).unwrap();
        assert_eq!(back.dims, vec![3, 4, 5]);
        match back.data {
            DotbData::F64(v) => assert_eq!(v, values),
            _ => panic!("wrong dtype"),
        }
        // writing again produces identical bytes
        let bytes1 = std::fs::read(&path).unwrap();
        write_array_f64(&path, &[3, 4, 5], &values).unwrap();
        assert_eq!(bytes1, std::fs::read(&path).unwrap());
    }

    #[test]
    fn rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.dotb");
        std::fs::write(&path, b"NOPE....").unwrap();
        assert!(read_array(&path).is_err());
        let good = dir.path().join("good.dotb");
        write_array_f32(&good, &[4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut bytes = std::fs::read(&good).unwrap();
        bytes.truncate(bytes.len() - 2);
        std::fs::write(&good, &bytes).unwrap();
        assert!(read_array(&good).is_err());
    }
}
