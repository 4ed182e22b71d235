//! Versioned binary tensor container.
//!
//! ```text
//! magic (4 bytes) | version u32 | record count u64 |
//!   { name length u32 | name | rank u32 | dims u64 * rank | f64 payload }* |
//! SHA-256 of everything above (32 bytes)
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TECK";
pub const MEL_MAGIC: &[u8; 4] = b"MEL1";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(magic: &[u8; 4], records: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for (name, t) in records {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated record".into()))?;
        let s = &self.buf[self.pos..end];
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

pub fn decode(magic: &[u8; 4], bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    if bytes.len() < 4 + 4 + 8 + 32 {
        return Err(Error::Checkpoint("file too short".into()));
    }
    let (body, footer) = bytes.split_at(bytes.len() - 32);
    if &body[..4] != magic {
        return Err(Error::Checkpoint(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&body[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if Sha256::digest(body).as_slice() != footer {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    let count = r.u64()?;
    let mut out = Vec::new();
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = String::from_utf8(r.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let len = len.ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflows")))?;
        let payload = r.take(len.checked_mul(8).ok_or_else(|| Error::Checkpoint("payload overflows".into()))?)?;
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes after last record".into()));
    }
    Ok(out)
}

pub fn write_container(path: &Path, magic: &[u8; 4], records: &[(String, Tensor)]) -> Result<()> {
    fs::write(path, encode(magic, records))?;
    Ok(())
}

pub fn read_container(path: &Path, magic: &[u8; 4]) -> Result<Vec<(String, Tensor)>> {
    decode(magic, &fs::read(path)?)
}

/// Saves every parameter and buffer, in name order.
pub fn save_params(path: &Path, store: &ParamStore) -> Result<()> {
    let records: Vec<(String, Tensor)> = store.iter().map(|(n, t, _)| (n.to_string(), t.clone())).collect();
    write_container(path, CHECKPOINT_MAGIC, &records)
}

/// Overwrites the values of `store` from a checkpoint. The checkpoint must
/// hold exactly the store's names with matching shapes.
pub fn load_params(path: &Path, store: &mut ParamStore) -> Result<()> {
    let records = read_container(path, CHECKPOINT_MAGIC)?;
    if records.len() != store.len() {
        return Err(Error::Checkpoint(format!("checkpoint has {} tensors, model expects {}", records.len(), store.len())));
    }
    for (name, t) in records {
        if !store.contains(&name) {
            return Err(Error::Checkpoint(format!("unexpected tensor {name}")));
        }
        store.set(&name, t)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<(String, Tensor)> {
        vec![
            ("a/kernel".into(), Tensor::matrix(2, 3, vec![1.0, -2.0, 3.5, 0.0, f64::MIN_POSITIVE, 1e300]).unwrap()),
            ("b".into(), Tensor::scalar(-0.25)),
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        let bytes = encode(CHECKPOINT_MAGIC, &sample());
        assert_eq!(&bytes[..4], b"TECK");
        assert_eq!(decode(CHECKPOINT_MAGIC, &bytes).unwrap(), sample());
    }

    #[test]
    fn rejects_unknown_version_corruption_and_magic() {
        let mut bytes = encode(CHECKPOINT_MAGIC, &sample());
        assert!(decode(MEL_MAGIC, &bytes).is_err());
        bytes[4] = 9;
        assert!(matches!(decode(CHECKPOINT_MAGIC, &bytes), Err(Error::UnsupportedVersion(9))));
        let mut bytes = encode(CHECKPOINT_MAGIC, &sample());
        let n = bytes.len();
        bytes[n - 40] ^= 1;
        assert!(decode(CHECKPOINT_MAGIC, &bytes).is_err());
    }

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.teck");
        let mut store = ParamStore::new();
        store.insert("w", Tensor::row(vec![1.0, 2.0])).unwrap();
        store.insert_buffer("m", Tensor::row(vec![0.5])).unwrap();
        save_params(&path, &store).unwrap();
        let mut other = ParamStore::new();
        other.insert("w", Tensor::zeros(&[1, 2])).unwrap();
        other.insert_buffer("m", Tensor::zeros(&[1, 1])).unwrap();
        load_params(&path, &mut other).unwrap();
        assert_eq!(other.get("w").unwrap().data(), &[1.0, 2.0]);
        assert_eq!(other.get("m").unwrap().data(), &[0.5]);
    }
}
