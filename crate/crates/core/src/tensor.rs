//! Dense row-major `f64` tensors and the `MTF1` binary container.
//!
//! Layout on disk (all little-endian):
//!
//! ```text
//! b"MTF1" | rank: u32 | dims: [u32; rank] | data: [f64; product(dims)]
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array3, Array4, ArrayView2};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MTF1";
pub const MAX_RANK: usize = 4;

/// A dense tensor of rank 1 to 4, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(Error::InvalidTensor(format!(
                "rank {} outside 1..={MAX_RANK}",
                dims.len()
            )));
        }
        if let Some(axis) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidTensor(format!("dimension {axis} is zero")));
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::DimMismatch(format!(
                "dims {dims:?} imply {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let len = dims.iter().product();
        Tensor::new(dims, vec![0.0; len])
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.dims == other.dims
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn from_array2(a: ArrayView2<'_, f64>) -> Result<Self> {
        let (r, c) = a.dim();
        Tensor::new(vec![r, c], a.iter().copied().collect())
    }

    pub fn from_array3(a: &Array3<f64>) -> Result<Self> {
        let (x, y, z) = a.dim();
        Tensor::new(vec![x, y, z], a.iter().copied().collect())
    }

    pub fn from_array4(a: &Array4<f64>) -> Result<Self> {
        let (c, x, y, z) = a.dim();
        Tensor::new(vec![c, x, y, z], a.iter().copied().collect())
    }

    fn expect_rank(&self, rank: usize) -> Result<()> {
        if self.rank() != rank {
            return Err(Error::DimMismatch(format!(
                "expected rank {rank}, tensor has dims {:?}",
                self.dims
            )));
        }
        Ok(())
    }

    pub fn to_array2(&self) -> Result<Array2<f64>> {
        self.expect_rank(2)?;
        Ok(Array2::from_shape_vec((self.dims[0], self.dims[1]), self.data.clone())
            .expect("shape checked at construction"))
    }

    pub fn to_array3(&self) -> Result<Array3<f64>> {
        self.expect_rank(3)?;
        let d = &self.dims;
        Ok(Array3::from_shape_vec((d[0], d[1], d[2]), self.data.clone())
            .expect("shape checked at construction"))
    }

    pub fn to_array4(&self) -> Result<Array4<f64>> {
        self.expect_rank(4)?;
        let d = &self.dims;
        Ok(Array4::from_shape_vec((d[0], d[1], d[2], d[3]), self.data.clone())
            .expect("shape checked at construction"))
    }

    /// Serializes to the `MTF1` byte layout. Rejects NaN and infinities.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if let Some(index) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let mut out = Vec::with_capacity(8 + 4 * self.rank() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.rank() as u32).to_le_bytes());
        for &d in &self.dims {
            let d = u32::try_from(d).map_err(|_| {
                Error::InvalidTensor(format!("dimension {d} does not fit in u32"))
            })?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Truncated {
                expected: 8,
                found: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if &magic != MAGIC {
            return Err(Error::BadMagic { found: magic });
        }
        let read_u32 = |offset: usize| -> Result<u32> {
            bytes
                .get(offset..offset + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or(Error::Truncated {
                    expected: offset + 4,
                    found: bytes.len(),
                })
        };
        let rank = read_u32(4)? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::InvalidTensor(format!("rank {rank} outside 1..={MAX_RANK}")));
        }
        let dims = (0..rank)
            .map(|i| read_u32(8 + 4 * i).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let header = 8 + 4 * rank;
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::DimMismatch(format!("dims {dims:?} overflow")))?;
        if count == 0 {
            return Err(Error::DimMismatch(format!("dims {dims:?} contain a zero")));
        }
        let expected = header + 8 * count;
        if bytes.len() < expected {
            return Err(Error::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::DimMismatch(format!(
                "dims {dims:?} imply {expected} bytes, file has {}",
                bytes.len()
            )));
        }
        let data = bytes[header..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(dims, data)
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn save_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let bytes = t.to_bytes()?;
    write_atomic(path.as_ref(), &bytes)
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eye.mtf");
        let t = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        save_tensor(&t, &path).unwrap();
        assert!(load_tensor(&path).unwrap().bit_eq(&t));
    }

    #[test]
    fn vector_file_is_36_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.mtf");
        let t = Tensor::new(vec![3], vec![1.5, -2.0, 0.0]).unwrap();
        save_tensor(&t, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 36);
        assert_eq!(&bytes[..4], b"MTF1");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..20], &1.5f64.to_le_bytes());
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(
            Tensor::new(vec![0], vec![]),
            Err(Error::InvalidTensor(_))
        ));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = Tensor::new(vec![1], vec![2.0]).unwrap().to_bytes().unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(Tensor::from_bytes(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.mtf");
        let t = Tensor::new(vec![2, 3], (0..6).map(f64::from).collect()).unwrap();
        save_tensor(&t, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        let err = load_tensor(&path).unwrap_err();
        assert!(matches!(err, Error::Truncated { .. }));
        assert_ne!(err.code(), Error::BadMagic { found: *b"XXXX" }.code());
    }

    #[test]
    fn trailing_bytes_are_a_dims_mismatch() {
        let mut bytes = Tensor::new(vec![1], vec![2.0]).unwrap().to_bytes().unwrap();
        bytes.extend_from_slice(&[0; 8]);
        assert!(matches!(Tensor::from_bytes(&bytes), Err(Error::DimMismatch(_))));
    }

    #[test]
    fn non_finite_rejected_on_save() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.mtf");
        let t = Tensor::new(vec![2], vec![1.0, f64::NAN]).unwrap();
        assert!(matches!(save_tensor(&t, &path), Err(Error::NonFinite { index: 1 })));
        assert!(!path.exists());
    }

    #[test]
    fn little_endian_regardless_of_host() {
        let bytes = Tensor::new(vec![1], vec![1.0]).unwrap().to_bytes().unwrap();
        assert_eq!(&bytes[12..], &[0, 0, 0, 0, 0, 0, 0xf0, 0x3f]);
    }

    fn arb_tensor() -> impl Strategy<Value = Tensor> {
        prop::collection::vec(1usize..5, 1..=4).prop_flat_map(|dims| {
            let n: usize = dims.iter().product();
            prop::collection::vec(
                prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL,
                n,
            )
            .prop_map(move |data| Tensor::new(dims.clone(), data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn bytes_round_trip_bitwise(t in arb_tensor()) {
            let back = Tensor::from_bytes(&t.to_bytes().unwrap()).unwrap();
            prop_assert!(back.bit_eq(&t));
        }
    }
}
