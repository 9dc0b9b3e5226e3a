//! Versioned binary file of named 32-bit tensors.
//!
//! ```text
//! "SKCK"                 magic
//! version                u16 LE
//! manifest length        u32 LE, then UTF-8 manifest (JSON metadata)
//! tensor count           u32 LE
//! per tensor:            u16 name length, name, u8 rank, rank × u32 dims,
//!                        product(dims) × f32 LE
//! SHA-256                32 bytes over everything above
//! ```

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"SKCK";
pub const VERSION: u16 = 1;

pub fn encode(manifest: &str, params: &ParamSet<f32>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    out.extend_from_slice(manifest.as_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::Checkpoint(format!("tensor name too long: {name}")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let (h, t) = self.buf.split_at(n);
        self.buf = t;
        Ok(h)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
}

/// Returns the manifest and tensors after verifying the checksum.
pub fn decode(bytes: &[u8]) -> Result<(String, ParamSet<f32>)> {
    if bytes.len() < 32 {
        return Err(Error::Checkpoint("truncated checkpoint".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic, expected SKCK".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mlen = r.u32()? as usize;
    let manifest = String::from_utf8(r.take(mlen)?.to_vec())
        .map_err(|_| Error::Checkpoint("manifest is not UTF-8".into()))?;
    let count = r.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let nlen = r.u16()? as usize;
        let name = String::from_utf8(r.take(nlen)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = r.take(1)?[0] as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push(name, Tensor { shape, data });
    }
    if !r.buf.is_empty() {
        return Err(Error::Checkpoint("trailing bytes after tensors".into()));
    }
    Ok((manifest, params))
}

pub fn save(path: impl AsRef<Path>, manifest: &str, params: &ParamSet<f32>) -> Result<()> {
    std::fs::write(path, encode(manifest, params)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(String, ParamSet<f32>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamSet<f32> {
        let mut p = ParamSet::new();
        p.push("a.w", Tensor::new(&[2, 3], vec![1.0, -2.5, 3.25, 0.0, -0.0, 1e-30]).unwrap());
        p.push("a.b", Tensor::new(&[3], vec![f32::MAX, f32::MIN_POSITIVE, 7.0]).unwrap());
        p
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let bytes = encode(r#"{"arch":"mlp"}"#, &sample()).unwrap();
        let (m, p) = decode(&bytes).unwrap();
        assert_eq!(m, r#"{"arch":"mlp"}"#);
        assert_eq!(p.checksum(), sample().checksum());
        assert_eq!(p.names(), vec!["a.w", "a.b"]);
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = encode("{}", &sample()).unwrap();
        bytes[20] ^= 1;
        assert!(matches!(decode(&bytes), Err(Error::Checkpoint(m)) if m.contains("checksum")));
        assert!(decode(&[0u8; 10]).is_err());
    }
}
