// SPDX-License-Identifier: MIT OR Apache-2.0

//! Binary dense-tensor container.
//!
//! Layout, little-endian throughout: magic `AENT`, version `u16`, dtype `u16`
//! (0 = f32, 1 = f64), ndim `u16`, `ndim` dims as `u64`, then the row-major
//! payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const MAGIC: &[u8; 4] = b"AENT";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u16 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u16) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            other => Err(Error::Format(format!("unknown dtype code {other}"))),
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn encode(tensor: &DenseTensor, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(10 + 8 * tensor.order() + dtype.width() * tensor.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dtype.code().to_le_bytes());
    out.extend_from_slice(&(tensor.order() as u16).to_le_bytes());
    for &d in tensor.dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &x in tensor.data() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&x.to_le_bytes()),
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format_err(format!("file truncated while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Decode a container; f32 payloads are widened to f64.
pub fn decode(bytes: &[u8]) -> Result<DenseTensor> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(format_err("bad magic, expected AENT"));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let dtype = Dtype::from_code(r.u16("dtype")?)?;
    let ndim = r.u16("ndim")? as usize;
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let d = r.u64("dims")?;
        dims.push(usize::try_from(d).map_err(|_| format_err(format!("dimension {d} too large")))?);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| format_err("element count overflows"))?;
    let expected = count.checked_mul(dtype.width()).ok_or_else(|| format_err("payload size overflows"))?;
    let payload = &bytes[r.pos..];
    if payload.len() != expected {
        return Err(format_err(format!("payload is {} bytes, dims {dims:?} need {expected}", payload.len())));
    }
    let data: Vec<f64> = match dtype {
        Dtype::F32 => {
            payload.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")))).collect()
        }
        Dtype::F64 => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect(),
    };
    DenseTensor::new(dims, data).map_err(|e| format_err(e.to_string()))
}

pub fn read(path: &Path) -> Result<DenseTensor> {
    decode(&fs::read(path)?)
}

pub fn write(path: &Path, tensor: &DenseTensor, dtype: Dtype) -> Result<()> {
    fs::write(path, encode(tensor, dtype))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let t = DenseTensor::identity(2).unwrap();
        let bytes = encode(&t, Dtype::F64);
        assert_eq!(&bytes[..4], b"AENT");
        assert_eq!(&bytes[4..10], &[1, 0, 1, 0, 2, 0]);
        assert_eq!(&bytes[10..26], &[2, 0, 0, 0, 0, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(bytes.len(), 26 + 32);
        assert_eq!(&bytes[26..34], &1.0f64.to_le_bytes());
    }

    #[test]
    fn rejects_malformed_input() {
        let t = DenseTensor::identity(2).unwrap();
        let mut bytes = encode(&t, Dtype::F64);
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));

        let mut bytes = encode(&t, Dtype::F64);
        bytes[6] = 9;
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));

        let bytes = encode(&t, Dtype::F64);
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(decode(&bytes[..7]), Err(Error::Format(_))));
    }

    #[test]
    fn f32_is_widened() {
        let t = DenseTensor::matrix(1, 2, vec![0.1, -2.5]).unwrap();
        let back = decode(&encode(&t, Dtype::F32)).unwrap();
        assert_eq!(back.data(), &[f64::from(0.1f32), -2.5]);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.aent");
        let t = DenseTensor::new(vec![2, 3, 2], (0..12).map(f64::from).collect()).unwrap();
        write(&path, &t, Dtype::F64).unwrap();
        assert_eq!(read(&path).unwrap(), t);
        assert!(matches!(read(&dir.path().join("missing")), Err(Error::Io(_))));
    }

    proptest! {
        #[test]
        fn f64_roundtrip_is_exact(dims in prop::collection::vec(1usize..5, 0..4), seed in any::<u64>()) {
            let n: usize = dims.iter().product();
            let data: Vec<f64> = (0..n).map(|k| f64::from_bits(seed.rotate_left(k as u32) & 0x3fff_ffff_ffff_ffff)).collect();
            let t = DenseTensor::new(dims, data).unwrap();
            prop_assert_eq!(decode(&encode(&t, Dtype::F64)).unwrap(), t);
        }
    }
}
