//! Named-tensor parameter files.
//!
//! Layout, all integers little-endian:
//! `b"SCPF"`, `u32` version, `u32` entry count, then per entry a `u32` name
//! length, the UTF-8 name, a `u32` rank, `rank` × `u64` dimensions and the
//! row-major `f64` values. Values are stored as raw bits, so a round trip is
//! bit-exact (NaN payloads included).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Activation, Linear, Mlp, Tensor};
use crate::{Error, Result};

pub const PARAMS_MAGIC: [u8; 4] = *b"SCPF";
pub const PARAMS_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamFile {
    entries: Vec<(String, Tensor)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::contract(format!("parameter file truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl ParamFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds a tensor; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::contract(format!("duplicate parameter {name:?}")));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::contract(format!("parameter {name:?} missing from file")))
    }

    /// Stores every layer of `mlp` as `{prefix}.{l}.weight` and `{prefix}.{l}.bias`.
    pub fn insert_mlp(&mut self, prefix: &str, mlp: &Mlp) -> Result<()> {
        for (l, layer) in mlp.layers().iter().enumerate() {
            self.insert(format!("{prefix}.{l}.weight"), layer.weight.clone())?;
            self.insert(format!("{prefix}.{l}.bias"), layer.bias.clone())?;
        }
        Ok(())
    }

    /// Rebuilds an MLP stored by [`ParamFile::insert_mlp`]; the layer count is
    /// read from the file, the activations are supplied by the caller.
    pub fn mlp(&self, prefix: &str, hidden: Activation, output: Activation) -> Result<Mlp> {
        let mut layers = Vec::new();
        while let Some(weight) = self.get(&format!("{prefix}.{}.weight", layers.len())) {
            let bias = self.require(&format!("{prefix}.{}.bias", layers.len()))?;
            layers.push(Linear {
                weight: weight.clone(),
                bias: bias.clone(),
            });
        }
        if layers.is_empty() {
            return Err(Error::contract(format!("no layers stored under {prefix:?}")));
        }
        Mlp::from_layers(layers, hidden, output)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&PARAMS_MAGIC);
        out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != PARAMS_MAGIC {
            return Err(Error::contract("not a parameter file (bad magic)"));
        }
        let version = r.u32()?;
        if version != PARAMS_VERSION {
            return Err(Error::contract(format!("unsupported parameter file version {version}")));
        }
        let count = r.u32()?;
        let mut file = ParamFile::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = core::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::contract("parameter name is not UTF-8"))?
                .to_string();
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(usize::try_from(r.u64()?).map_err(|_| Error::contract("dimension overflows usize"))?);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::contract("tensor size overflows"))?;
            if numel.checked_mul(8).map_or(true, |b| b > bytes.len() - r.pos) {
                return Err(Error::contract(format!("parameter file truncated in {name:?}")));
            }
            let data = r
                .take(numel * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().expect("8 bytes"))))
                .collect();
            file.insert(name, Tensor::new(shape, data)?)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::contract("trailing bytes after parameter file"));
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use alloc::vec;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut f = ParamFile::new();
        let odd = vec![0.1, -0.0, f64::MIN_POSITIVE / 3.0, 1e308, f64::from_bits(0x7ff8_0000_0000_1234), -7.25];
        f.insert("a", Tensor::new(vec![2, 3], odd.clone()).unwrap()).unwrap();
        f.insert("scalar", Tensor::scalar(3.5)).unwrap();
        f.insert("empty", Tensor::zeros(&[0, 4])).unwrap();
        let back = ParamFile::from_bytes(&f.to_bytes()).unwrap();
        assert_eq!(back.len(), 3);
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.require("a").unwrap()), odd.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(back.require("a").unwrap().shape(), &[2, 3]);
        assert_eq!(back.require("empty").unwrap().shape(), &[0, 4]);
        assert_eq!(back.to_bytes(), f.to_bytes());
    }

    #[test]
    fn mlp_round_trip() {
        let mlp = Mlp::new(&[3, 5, 2], Activation::Tanh, Activation::Identity, &mut rng_for(1, &[]));
        let mut f = ParamFile::new();
        f.insert_mlp("net", &mlp).unwrap();
        let back = ParamFile::from_bytes(&f.to_bytes()).unwrap();
        assert_eq!(back.mlp("net", Activation::Tanh, Activation::Identity).unwrap(), mlp);
        assert!(back.mlp("other", Activation::Tanh, Activation::Identity).is_err());
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let mut f = ParamFile::new();
        f.insert("w", Tensor::filled(&[2, 2], 1.0)).unwrap();
        let bytes = f.to_bytes();
        assert!(ParamFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(ParamFile::from_bytes(b"NOPE").is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(ParamFile::from_bytes(&wrong_version).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(ParamFile::from_bytes(&extra).is_err());
        assert!(f.insert("w", Tensor::scalar(0.0)).is_err());
    }
}
