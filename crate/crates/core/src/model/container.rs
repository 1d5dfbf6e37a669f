//! Binary weights container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    4 bytes  "OVSW"
//! version  u32      1
//! count    u32      number of tensors
//! count × {
//!   name_len u32, name (UTF-8, name_len bytes)
//!   ndim     u32, dims (u64 × ndim)
//!   data     f32 × Π dims, row-major
//! }
//! crc32    u32      CRC-32 (IEEE) of every preceding byte
//! ```

use std::path::Path;

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"OVSW";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::validation(format!(
                "tensor shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            shape,
            data,
        })
    }
}

pub fn encode(tensors: &[Tensor]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        buf.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(t.name.as_bytes());
        buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Container("unexpected end of payload".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Tensor>> {
    if bytes.len() < 16 {
        return Err(Error::Container("checksum mismatch: file too short".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Container("bad magic".into()));
    }
    let (payload, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    if crc32fast::hash(payload) != stored {
        return Err(Error::Container("checksum mismatch".into()));
    }
    let mut r = Reader { bytes: payload, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Container(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Container("tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Container(format!("tensor '{name}' shape overflows")))?;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Container("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(Tensor { name, shape, data });
    }
    if r.pos != payload.len() {
        return Err(Error::Container("trailing bytes after last tensor".into()));
    }
    Ok(out)
}

pub fn write_weights(path: &Path, tensors: &[Tensor]) -> Result<()> {
    std::fs::write(path, encode(tensors))?;
    Ok(())
}

pub fn read_weights(path: &Path) -> Result<Vec<Tensor>> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_round_trip() {
        assert_eq!(decode(&encode(&[])).unwrap(), vec![]);
    }

    #[test]
    fn single_tensor_bit_exact() {
        let t = Tensor::new("w", vec![2, 2], vec![1.5, -0.0, f32::MIN_POSITIVE, 3.25e-7]).unwrap();
        let back = decode(&encode(std::slice::from_ref(&t))).unwrap();
        assert_eq!(back.len(), 1);
        for (a, b) in t.data.iter().zip(&back[0].data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back[0].shape, vec![2, 2]);
    }

    #[test]
    fn truncated_is_checksum_error() {
        let t = Tensor::new("w", vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let bytes = encode(&[t]);
        let err = decode(&bytes[..bytes.len() - 5]).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode(&[]);
        bytes[0] = b'X';
        assert!(decode(&bytes).unwrap_err().to_string().contains("magic"));

        let mut bytes = encode(&[]);
        bytes[4] = 9;
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(decode(&bytes).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(Tensor::new("w", vec![2, 3], vec![0.0; 5]).is_err());
    }
}
