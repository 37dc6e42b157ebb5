//! Binary checkpoint container.
//!
//! ```text
//! "SGAN"  u32 version  [u8; 32] config digest  u32 count
//! count x { u32 name_len  name  u32 n  u32 c  u32 h  u32 w  f64 x n*c*h*w }
//! ```
//!
//! Little-endian throughout. Integers that do not fit an f64 mantissa
//! (RNG seeds and positions) are split into 32-bit halves by the caller.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"SGAN";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub digest: [u8; 32],
    pub tensors: Vec<(String, Tensor)>,
}

pub fn digest(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Parse {
                what: "checkpoint",
                offset: self.pos,
                msg: format!("truncated while reading {what}"),
            }),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }
}

impl Checkpoint {
    pub fn new(digest: [u8; 32]) -> Self {
        Checkpoint {
            digest,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::invalid("checkpoint", format!("missing tensor {name:?}")))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.digest);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            for d in t.shape().dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Parse {
                what: "checkpoint",
                offset: 0,
                msg: "bad magic, not a checkpoint file".into(),
            });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Parse {
                what: "checkpoint",
                offset: 4,
                msg: format!("format version {version}, this build reads {VERSION}"),
            });
        }
        let digest: [u8; 32] = r.take(32, "digest")?.try_into().expect("32 bytes");
        let count = r.u32("tensor count")?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let len = r.u32("name length")? as usize;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| Error::Parse {
                    what: "checkpoint",
                    offset: at,
                    msg: "tensor name is not UTF-8".into(),
                })?
                .to_string();
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = r.u32("dims")? as usize;
            }
            let shape = Shape::from(dims);
            let raw = r.take(shape.numel() * 8, "tensor data")?;
            let data = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            tensors.push((name, Tensor::from_vec(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Parse {
                what: "checkpoint",
                offset: r.pos,
                msg: "trailing bytes".into(),
            });
        }
        Ok(Checkpoint { digest, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.encode()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::decode(&bytes)
    }
}

/// Splits a `u64` into two exactly representable f64 halves (low, high).
pub fn split_u64(v: u64) -> [f64; 2] {
    [(v & 0xffff_ffff) as f64, (v >> 32) as f64]
}

pub fn join_u64(lo: f64, hi: f64) -> u64 {
    (lo as u64) | ((hi as u64) << 32)
}
