//! Binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    b"RDCK"
//! version  u32
//! meta     u32 length + UTF-8 bytes (free-form, typically JSON)
//! dtype    u32 length + ASCII ("f32" | "f64")
//! count    u32
//! count ×  { name: u32 length + UTF-8, rank: u32, dims: rank × u64, data: raw LE elements }
//! ```

use crate::scalar::Scalar;

use super::{ParamStore, Tensor};

pub const MAGIC: &[u8; 4] = b"RDCK";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {VERSION})")]
    Version(u32),
    #[error("checkpoint holds {found} data, expected {expected}")]
    Dtype { expected: &'static str, found: String },
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after checkpoint")]
    Trailing(usize),
    #[error("invalid UTF-8 in checkpoint")]
    Utf8,
    #[error("checkpoint mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

pub fn encode<T: Scalar>(meta: &str, store: &ParamStore<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + store.num_scalars() * T::BYTES);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_str(&mut out, meta);
    put_str(&mut out, T::DTYPE);
    put_u32(&mut out, store.len() as u32);
    for (name, t) in store.iter() {
        put_str(&mut out, name);
        put_u32(&mut out, t.shape().len() as u32);
        for d in t.shape() {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in t.data() {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or(CheckpointError::Truncated(self.buf.len()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CheckpointError::Utf8)
    }
}

/// Parses a container; nothing is returned unless the whole buffer is valid.
pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<(String, ParamStore<T>), CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let meta = r.string()?;
    let dtype = r.string()?;
    if dtype != T::DTYPE {
        return Err(CheckpointError::Dtype {
            expected: T::DTYPE,
            found: dtype,
        });
    }
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let len = shape.iter().try_fold(1usize, |a, d| a.checked_mul(*d));
        let len = len.ok_or_else(|| CheckpointError::Mismatch(format!("shape {shape:?} overflows")))?;
        let raw = r.take(len.checked_mul(T::BYTES).ok_or(CheckpointError::Truncated(bytes.len()))?)?;
        let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        let tensor = Tensor::new(shape, data).map_err(|e| CheckpointError::Mismatch(e.to_string()))?;
        if store.find(&name).is_some() {
            return Err(CheckpointError::Mismatch(format!("duplicate tensor {name}")));
        }
        store.add(name, tensor);
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Trailing(bytes.len() - r.pos));
    }
    Ok((meta, store))
}
