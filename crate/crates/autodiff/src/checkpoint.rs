//! Binary parameter files: `WVHX`, u32 version, then records of
//! u32 name length, UTF-8 name, u32 rank, u32 dims and little-endian f64
//! values, read until the end of input. All integers are little-endian.

use std::path::Path;

use wavehax_core::io::atomic_write;
use wavehax_core::{Error, Result};

use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"WVHX";
pub const VERSION: u32 = 1;
const MAX_NAME: usize = 4096;
const MAX_RANK: usize = 8;

pub fn encode<'a>(entries: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format("checkpoint", format!("truncated {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(Error::format(
            "checkpoint",
            format!("unsupported version {version}"),
        ));
    }
    let mut out: Vec<(String, Tensor)> = Vec::new();
    while r.remaining() > 0 {
        let len = r.u32("name length")?;
        if len == 0 || len > MAX_NAME {
            return Err(Error::format("checkpoint", format!("bad name length {len}")));
        }
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::format("checkpoint", "name is not UTF-8"))?
            .to_string();
        if out.iter().any(|(n, _)| *n == name) {
            return Err(Error::format("checkpoint", format!("duplicate record `{name}`")));
        }
        let rank = r.u32("rank")?;
        if rank > MAX_RANK {
            return Err(Error::format("checkpoint", format!("rank {rank} too large")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")?);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&c| c.checked_mul(8).is_some_and(|b| b <= r.remaining()))
            .ok_or_else(|| Error::format("checkpoint", format!("`{name}` overruns the file")))?;
        let data: Vec<f64> = r
            .take(count * 8, "values")?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

pub fn save(path: &Path, stores: &[(&str, &ParamStore)]) -> Result<()> {
    let named: Vec<(String, &Tensor)> = stores
        .iter()
        .flat_map(|(prefix, s)| s.named().map(move |(n, t)| (format!("{prefix}{n}"), t)))
        .collect();
    atomic_write(path, &encode(named.iter().map(|(n, t)| (n.as_str(), *t))))
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>> {
    decode(&std::fs::read(path)?)
}

/// Fill every parameter of `store` from the records named `prefix + name`.
pub fn restore(store: &mut ParamStore, records: &[(String, Tensor)], prefix: &str) -> Result<()> {
    let names: Vec<String> = store.named().map(|(n, _)| n.to_string()).collect();
    for name in names {
        let full = format!("{prefix}{name}");
        let (_, t) = records
            .iter()
            .find(|(n, _)| *n == full)
            .ok_or_else(|| Error::invalid(format!("checkpoint lacks `{full}`")))?;
        store.set(&name, t.clone())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let a = Tensor::new(vec![2, 1, 3], vec![1.0, -2.5, 3.0, 0.0, f64::MIN_POSITIVE, 7.0]).unwrap();
        let b = Tensor::scalar(0.125);
        let bytes = encode([("gen.w", &a), ("disc.b", &b)]);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, vec![("gen.w".to_string(), a), ("disc.b".to_string(), b)]);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(decode(&encode(std::iter::empty())).unwrap().is_empty());
    }

    #[test]
    fn corrupt_inputs_fail() {
        let t = Tensor::from_vec(vec![1.0, 2.0]);
        let bytes = encode([("w", &t)]);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"WVHY\x01\0\0\0").is_err());
        assert!(decode(b"WVHX\x02\0\0\0").is_err());
        let mut huge = b"WVHX\x01\0\0\0\x01\0\0\0w\x02\0\0\0".to_vec();
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode(&huge).is_err());
    }
}
