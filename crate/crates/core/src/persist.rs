//! Versioned binary container for trained models.
//!
//! All integers and floats are **little-endian**; matrices are stored
//! row-major. Layout of version 1:
//!
//! | field        | type            | notes                                   |
//! |--------------|-----------------|-----------------------------------------|
//! | magic        | 8 bytes         | ASCII `NAEMODEL`                        |
//! | version      | u32             | `1`                                     |
//! | kind         | u32             | 0 = NAE, 1 = NAE decoder, 2 = NMF basis |
//! | depth        | u32             | L (number of decoder layers); 0 for NMF |
//! | n_sizes      | u32             |                                         |
//! | layer sizes  | u32 × n_sizes   | input first                             |
//! | seed         | u64             | training seed                           |
//! | lambda       | f64             | sparsity weight used in training        |
//! | iterations   | u64             | iterations actually run                 |
//! | final_cost   | f64             | objective at the returned weights       |
//! | n_matrices   | u32             |                                         |
//! | per matrix   | u32 rows, u32 cols, f64 × rows·cols                       |
//!
//! Files must end exactly after the last matrix. Because floats are written
//! as their IEEE-754 bit patterns, `load(save(m))` is bitwise exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 8] = b"NAEMODEL";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum PayloadKind {
    Autoencoder = 0,
    Decoder = 1,
    NmfBasis = 2,
}

impl PayloadKind {
    fn from_u32(v: u32) -> Result<Self> {
        match v {
            0 => Ok(Self::Autoencoder),
            1 => Ok(Self::Decoder),
            2 => Ok(Self::NmfBasis),
            other => Err(Error::ModelFormat(format!("unknown payload kind {other}"))),
        }
    }
}

/// Raw, format-level view of a model file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub kind: PayloadKind,
    pub depth: u32,
    pub layer_sizes: Vec<usize>,
    pub seed: u64,
    pub lambda: f64,
    pub iterations: u64,
    pub final_cost: f64,
    pub matrices: Vec<Matrix>,
}

impl ModelFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.kind as u32).to_le_bytes());
        out.extend_from_slice(&self.depth.to_le_bytes());
        out.extend_from_slice(&(self.layer_sizes.len() as u32).to_le_bytes());
        for &s in &self.layer_sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.lambda.to_le_bytes());
        out.extend_from_slice(&self.iterations.to_le_bytes());
        out.extend_from_slice(&self.final_cost.to_le_bytes());
        out.extend_from_slice(&(self.matrices.len() as u32).to_le_bytes());
        for m in &self.matrices {
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::ModelFormat("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let kind = PayloadKind::from_u32(r.u32()?)?;
        let depth = r.u32()?;
        let n_sizes = r.u32()? as usize;
        let layer_sizes = (0..n_sizes)
            .map(|_| r.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let seed = r.u64()?;
        let lambda = r.f64()?;
        let iterations = r.u64()?;
        let final_cost = r.f64()?;
        let n_mats = r.u32()? as usize;
        let mut matrices = Vec::with_capacity(n_mats);
        for _ in 0..n_mats {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let count = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::ModelFormat("matrix too large".into()))?;
            if count.saturating_mul(8) > r.remaining() {
                return Err(Error::ModelFormat("truncated matrix data".into()));
            }
            let data = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            matrices.push(Matrix::from_vec(rows, cols, data)?);
        }
        if r.remaining() != 0 {
            return Err(Error::ModelFormat(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self {
            kind,
            depth,
            layer_sizes,
            seed,
            lambda,
            iterations,
            final_cost,
            matrices,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::ModelFormat("unexpected end of file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ModelFile {
        ModelFile {
            kind: PayloadKind::Decoder,
            depth: 1,
            layer_sizes: vec![3, 2],
            seed: 42,
            lambda: 0.1,
            iterations: 7,
            final_cost: 1.25,
            matrices: vec![Matrix::from_rows(&[[1.0, -2.0], [0.5, 3.0], [-0.0, 1e-300]])],
        }
    }

    #[test]
    fn header_is_little_endian() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..8], b"NAEMODEL");
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[1, 0, 0, 0]);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        assert!(ModelFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(ModelFile::from_bytes(&extra).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(ModelFile::from_bytes(&bad).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(values in prop::collection::vec(any::<f64>(), 6), seed: u64, lambda: f64) {
            let file = ModelFile {
                kind: PayloadKind::Autoencoder,
                depth: 1,
                layer_sizes: vec![3, 2, 3],
                seed,
                lambda,
                iterations: 3,
                final_cost: -0.0,
                matrices: vec![Matrix::from_vec(2, 3, values).unwrap()],
            };
            let back = ModelFile::from_bytes(&file.to_bytes()).unwrap();
            prop_assert_eq!(back.to_bytes(), file.to_bytes());
            let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back.matrices[0]), bits(&file.matrices[0]));
            prop_assert_eq!(back.lambda.to_bits(), lambda.to_bits());
        }
    }
}
