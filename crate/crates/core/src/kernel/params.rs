//! Named parameter collections and their on-disk record format.
//!
//! Record layout (all integers little-endian `u32`):
//!
//! ```text
//! magic "LDPB" | version | n_tags | (key, value)* | n_entries | (name, rows, cols)* | f64 LE payload
//! ```
//!
//! Strings are length-prefixed UTF-8. The payload concatenates every entry's
//! row-major data in header order.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const FORMAT_MAGIC: &[u8; 4] = b"LDPB";
pub const FORMAT_VERSION: u32 = 1;

/// Anything that owns an ordered, fixed set of named parameter tensors.
pub trait Parameterized: Clone {
    fn tensors(&self) -> Vec<(String, &Matrix)>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (_, m) in self.tensors() {
            out.extend_from_slice(m.data());
        }
        out
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.num_params();
        if flat.len() != expected {
            return Err(Error::dim("load_flat", expected, flat.len()));
        }
        let mut offset = 0;
        for m in self.tensors_mut() {
            let n = m.len();
            m.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for m in z.tensors_mut() {
            m.fill(0.0);
        }
        z
    }

    fn zero(&mut self) {
        for m in self.tensors_mut() {
            m.fill(0.0);
        }
    }

    /// `self += alpha * other`, tensor by tensor.
    fn accumulate(&mut self, alpha: f64, other: &Self) {
        let src: Vec<Matrix> = other.tensors().into_iter().map(|(_, m)| m.clone()).collect();
        for (dst, s) in self.tensors_mut().into_iter().zip(&src) {
            dst.axpy(alpha, s);
        }
    }

    fn scale_all(&mut self, alpha: f64) {
        for m in self.tensors_mut() {
            m.scale(alpha);
        }
    }

    fn to_bundle(&self) -> ParamBundle {
        ParamBundle {
            tags: BTreeMap::new(),
            entries: self
                .tensors()
                .into_iter()
                .map(|(n, m)| (n, m.clone()))
                .collect(),
        }
    }

    /// Overwrites parameters from a bundle with the same names and shapes.
    fn load_bundle(&mut self, bundle: &ParamBundle) -> Result<()> {
        let names: Vec<(String, (usize, usize))> = self
            .tensors()
            .into_iter()
            .map(|(n, m)| (n, m.shape()))
            .collect();
        if names.len() != bundle.entries.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, bundle has {}",
                names.len(),
                bundle.entries.len()
            )));
        }
        for ((name, shape), (bname, bm)) in names.iter().zip(&bundle.entries) {
            if name != bname || *shape != bm.shape() {
                return Err(Error::Format(format!(
                    "tensor {name} {}x{} does not match bundle entry {bname} {}",
                    shape.0,
                    shape.1,
                    bm.shape_str()
                )));
            }
        }
        for (dst, (_, src)) in self.tensors_mut().into_iter().zip(&bundle.entries) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}

/// Named ordered tensors plus free-form string tags (bank id, dimension, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBundle {
    pub tags: BTreeMap<String, String>,
    pub entries: Vec<(String, Matrix)>,
}

impl ParamBundle {
    pub fn with_tag(mut self, key: &str, value: impl ToString) -> Self {
        self.tags.insert(key.to_string(), value.to_string());
        self
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|(_, m)| m.data().iter().copied())
            .collect()
    }

    /// Rebuilds a bundle of identical names/shapes from a flat vector.
    pub fn unflatten(&self, flat: &[f64]) -> Result<Self> {
        let total: usize = self.entries.iter().map(|(_, m)| m.len()).sum();
        if flat.len() != total {
            return Err(Error::dim("unflatten", total, flat.len()));
        }
        let mut offset = 0;
        let entries = self
            .entries
            .iter()
            .map(|(n, m)| {
                let d = flat[offset..offset + m.len()].to_vec();
                offset += m.len();
                (n.clone(), Matrix::from_vec(m.rows(), m.cols(), d).expect("shape"))
            })
            .collect();
        Ok(Self {
            tags: self.tags.clone(),
            entries,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(FORMAT_MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.tags.len() as u32).to_le_bytes())?;
        for (k, v) in &self.tags {
            write_str(&mut w, k)?;
            write_str(&mut w, v)?;
        }
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, m) in &self.entries {
            write_str(&mut w, name)?;
            w.write_all(&(m.rows() as u32).to_le_bytes())?;
            w.write_all(&(m.cols() as u32).to_le_bytes())?;
        }
        for (_, m) in &self.entries {
            for v in m.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != FORMAT_MAGIC {
            return Err(Error::Format("not a parameter bundle (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported bundle version {version}")));
        }
        let n_tags = read_u32(&mut r)?;
        let mut tags = BTreeMap::new();
        for _ in 0..n_tags {
            let k = read_str(&mut r)?;
            let v = read_str(&mut r)?;
            tags.insert(k, v);
        }
        let n = read_u32(&mut r)? as usize;
        let mut header = Vec::with_capacity(n);
        for _ in 0..n {
            let name = read_str(&mut r)?;
            let rows = read_u32(&mut r)? as usize;
            let cols = read_u32(&mut r)? as usize;
            header.push((name, rows, cols));
        }
        let mut entries = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for (name, rows, cols) in header {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            entries.push((name, Matrix::from_vec(rows, cols, data)?));
        }
        Ok(Self { tags, entries })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let n = read_u32(r)? as usize;
    if n > 1 << 20 {
        return Err(Error::Format(format!("string length {n} out of range")));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bundle_from(values: &[f64], split: usize) -> ParamBundle {
        let split = split.min(values.len());
        ParamBundle {
            tags: BTreeMap::new(),
            entries: vec![
                ("a".into(), Matrix::column(&values[..split])),
                ("b".into(), Matrix::from_vec(1, values.len() - split, values[split..].to_vec()).unwrap()),
            ],
        }
        .with_tag("bank", 3)
    }

    proptest! {
        #[test]
        fn flatten_unflatten_is_bit_exact(values in prop::collection::vec(proptest::num::f64::ANY, 1..40), split in 0usize..40) {
            let b = bundle_from(&values, split);
            let back = b.unflatten(&b.flatten()).unwrap();
            prop_assert_eq!(b.to_bytes(), back.to_bytes());
        }

        #[test]
        fn serialization_round_trips_bit_exact(values in prop::collection::vec(proptest::num::f64::NORMAL, 1..40), split in 0usize..40) {
            let b = bundle_from(&values, split);
            let bytes = b.to_bytes();
            let back = ParamBundle::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            prop_assert_eq!(back.tags.get("bank").map(String::as_str), Some("3"));
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(ParamBundle::from_bytes(b"XXXX").is_err());
        let b = bundle_from(&[1.0, 2.0, 3.0], 1);
        let bytes = b.to_bytes();
        assert!(ParamBundle::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
