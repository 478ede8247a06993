//! Named learnable tensors with Adam state, and the MCK1 checkpoint layout:
//!
//! ```text
//! "MCK1" | u32 version | u32 n_entries
//!   per entry: u32 name_len | name bytes | u32 rank | u32 dims[rank] | f64 values
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use super::Tensor4;
use crate::error::{invalid, shape_err, Error, Result};

const MAGIC: &[u8; 4] = b"MCK1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: Tensor4,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor4) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|e| e.name == name) {
            return invalid(format!("duplicate parameter name `{name}`"));
        }
        let n = tensor.len();
        self.entries.push(ParamEntry { name, tensor, adam_m: vec![0.0; n], adam_v: vec![0.0; n] });
        Ok(())
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor4> {
        self.entries.iter().find(|e| e.name == name).map(|e| &e.tensor)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    /// Total number of scalars.
    pub fn n_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    /// True when names, shapes and values match exactly (optimizer state ignored).
    pub fn same_values(&self, other: &ParamStore) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.tensor.dims() == b.tensor.dims() && a.tensor.values() == b.tensor.values())
    }

    pub fn reset_optimizer(&mut self) {
        for e in &mut self.entries {
            e.adam_m.iter_mut().for_each(|v| *v = 0.0);
            e.adam_v.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn to_mck1(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.n_scalars() * 8 + self.entries.len() * 40);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&4u32.to_le_bytes());
            for d in e.tensor.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in e.tensor.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses MCK1 bytes. Tensors of rank below 4 are left-padded with unit dims.
    pub fn from_mck1(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}, expected \"MCK1\"", String::from_utf8_lossy(magic))));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported MCK1 version {version}")));
        }
        let n = r.u32()?;
        let mut store = ParamStore::new();
        for _ in 0..n {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Format("entry name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            if rank > 4 {
                return Err(Error::Format(format!("entry `{name}` has rank {rank} > 4")));
            }
            let mut dims = [1usize; 4];
            for k in 0..rank {
                dims[4 - rank + k] = r.u32()? as usize;
            }
            let count = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("entry `{name}` dims overflow")))?;
            let raw = r.take(count.checked_mul(8).ok_or_else(|| Error::Format("entry too large".into()))?)?;
            let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            store.push(name, Tensor4::from_vec(dims, values)?).map_err(|e| Error::Format(e.to_string()))?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after last entry", bytes.len() - r.pos)));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_mck1())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ParamStore::from_mck1(&std::fs::read(path)?)
    }

    /// Copies values from `other`, which must have identical names and shapes.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return shape_err(format!("parameter count {} vs {}", self.entries.len(), other.entries.len()));
        }
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            if a.name != b.name || a.tensor.dims() != b.tensor.dims() {
                return shape_err(format!("parameter `{}` {:?} vs `{}` {:?}", a.name, a.tensor.dims(), b.name, b.tensor.dims()));
            }
            a.tensor = b.tensor.clone();
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated checkpoint at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.push("a.weight", Tensor4::from_vec([2, 1, 1, 2], vec![1.0, -2.0, 0.5, 1e-300]).unwrap()).unwrap();
        s.push("a.bias", Tensor4::from_vec([1, 2, 1, 1], vec![0.0, 3.25]).unwrap()).unwrap();
        s
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = store();
        assert!(s.push("a.bias", Tensor4::zeros([1, 1, 1, 1])).is_err());
    }

    #[test]
    fn mck1_round_trip() {
        let s = store();
        let bytes = s.to_mck1();
        assert_eq!(&bytes[..4], b"MCK1");
        let back = ParamStore::from_mck1(&bytes).unwrap();
        assert!(back.same_values(&s));
        assert_eq!(back.to_mck1(), bytes);
    }

    #[test]
    fn mck1_layout_is_exact() {
        let mut s = ParamStore::new();
        s.push("b", Tensor4::from_vec([1, 1, 1, 1], vec![2.0]).unwrap()).unwrap();
        let mut expect = b"MCK1".to_vec();
        for v in [1u32, 1, 1] {
            expect.extend_from_slice(&v.to_le_bytes());
        }
        expect.push(b'b');
        for v in [4u32, 1, 1, 1, 1] {
            expect.extend_from_slice(&v.to_le_bytes());
        }
        expect.extend_from_slice(&2.0f64.to_le_bytes());
        assert_eq!(s.to_mck1(), expect);
    }

    #[test]
    fn lower_rank_entries_are_padded() {
        let mut b = b"MCK1".to_vec();
        for v in [1u32, 1, 1] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.push(b'v');
        for v in [1u32, 3] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for v in [1.0f64, 2.0, 3.0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        let s = ParamStore::from_mck1(&b).unwrap();
        assert_eq!(s.get("v").unwrap().dims(), [1, 1, 1, 3]);
    }

    #[test]
    fn truncated_and_bad_magic_rejected() {
        let bytes = store().to_mck1();
        assert!(ParamStore::from_mck1(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ParamStore::from_mck1(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(ParamStore::from_mck1(&long).is_err());
    }
}
