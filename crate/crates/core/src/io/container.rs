//! Versioned binary tensor container shared by model and perceptual-network
//! weight files.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic        8 bytes  "HSEGTNSR"
//! version      u32
//! config hash  u64
//! count        u32
//! directory    count × { name: u16 len + utf-8, ndim: u8, dims: u32 × ndim, offset: u64 }
//! data         raw f32 values; offsets are in bytes from the start of this section
//! ```

use std::path::Path;

use super::bytes::{read_file, write_atomic, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"HSEGTNSR";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor<f32>,
}

pub fn encode(config_hash: u64, tensors: &[NamedTensor]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u64(config_hash);
    w.u32(tensors.len() as u32);
    let mut offset = 0u64;
    for t in tensors {
        w.u16(t.name.len() as u16);
        w.bytes(t.name.as_bytes());
        w.u8(t.tensor.ndim() as u8);
        for &d in t.tensor.shape() {
            w.u32(d as u32);
        }
        w.u64(offset);
        offset += 4 * t.tensor.numel() as u64;
    }
    for t in tensors {
        for &v in t.tensor.data() {
            w.f32(v);
        }
    }
    w.into_inner()
}

/// Parse a container. When `expected_hash` is given, a different stored hash
/// is a [`Error::ConfigMismatch`].
pub fn decode(bytes: &[u8], path: &Path, expected_hash: Option<u64>) -> Result<(u64, Vec<NamedTensor>)> {
    let mut r = ByteReader::new(bytes, path);
    if r.take(MAGIC.len())? != MAGIC {
        return Err(r.corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            supported: VERSION,
        });
    }
    let hash = r.u64()?;
    if let Some(expected) = expected_hash {
        if hash != expected {
            return Err(Error::ConfigMismatch {
                path: path.to_path_buf(),
                expected,
                found: hash,
            });
        }
    }
    let count = r.u32()? as usize;
    let mut dir = Vec::with_capacity(count.min(1 << 16));
    let mut expected_offset = 0u64;
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| r.corrupt("tensor name is not utf-8"))?;
        let ndim = r.u8()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let offset = r.u64()?;
        if offset != expected_offset {
            return Err(r.corrupt(format!("tensor {name}: offset {offset}, expected {expected_offset}")));
        }
        expected_offset += 4 * shape.iter().product::<usize>() as u64;
        dir.push((name, shape));
    }
    if r.remaining() as u64 != expected_offset {
        return Err(r.corrupt(format!(
            "data section holds {} bytes, directory describes {expected_offset}",
            r.remaining()
        )));
    }
    let mut out = Vec::with_capacity(dir.len());
    for (name, shape) in dir {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        out.push(NamedTensor {
            name,
            tensor: Tensor::new(shape, data)?,
        });
    }
    Ok((hash, out))
}

pub fn write(path: &Path, config_hash: u64, tensors: &[NamedTensor]) -> Result<()> {
    write_atomic(path, &encode(config_hash, tensors))
}

pub fn read(path: &Path, expected_hash: Option<u64>) -> Result<(u64, Vec<NamedTensor>)> {
    let bytes = read_file(path)?;
    decode(&bytes, path, expected_hash)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<NamedTensor> {
        vec![
            NamedTensor {
                name: "a.weight".into(),
                tensor: Tensor::from_fn(&[2, 3], |i| i as f32 * 0.1 - 0.2),
            },
            NamedTensor {
                name: "b".into(),
                tensor: Tensor::scalar(f32::MIN_POSITIVE),
            },
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let bytes = encode(77, &sample());
        let (hash, back) = decode(&bytes, Path::new("mem"), Some(77)).unwrap();
        assert_eq!(hash, 77);
        assert_eq!(back, sample());
    }

    #[test]
    fn distinct_failure_kinds() {
        let bytes = encode(77, &sample());
        let p = Path::new("mem");
        assert!(matches!(decode(&bytes, p, Some(78)), Err(Error::ConfigMismatch { .. })));
        assert!(matches!(decode(&bytes[..bytes.len() - 1], p, None), Err(Error::Corrupt { .. })));
        assert!(matches!(decode(&bytes[..10], p, None), Err(Error::Corrupt { .. })));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(decode(&v2, p, None), Err(Error::VersionMismatch { found: 2, .. })));
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(matches!(decode(&bad, p, None), Err(Error::Corrupt { .. })));
    }
}
