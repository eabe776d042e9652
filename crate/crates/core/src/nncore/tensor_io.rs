//! Raw tensor dump format: `TNSR`, version u32, four u32 dims, f32 payload,
//! all little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TNSR";
pub const TENSOR_FILE_VERSION: u32 = 1;

pub fn write_tensor(w: &mut impl Write, t: &Tensor<f32>) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&TENSOR_FILE_VERSION.to_le_bytes())?;
    for d in t.shape().dims() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.len() * 4);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_tensor(r: &mut impl Read) -> Result<Tensor<f32>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::Format(e.to_string()))?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<Tensor<f32>> {
    if bytes.len() < 24 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a TNSR file".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != TENSOR_FILE_VERSION {
        return Err(Error::Version { found: version, expected: TENSOR_FILE_VERSION });
    }
    let dims = [word(8) as usize, word(12) as usize, word(16) as usize, word(20) as usize];
    let n: usize = dims.iter().product();
    let payload = &bytes[24..];
    if payload.len() != n * 4 {
        return Err(Error::Format(format!("payload has {} bytes, dims need {}", payload.len(), n * 4)));
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Tensor::new(dims, data)
}

pub fn save_tensor(path: impl AsRef<Path>, t: &Tensor<f32>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_tensor(&mut buf, t).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
