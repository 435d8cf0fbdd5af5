//! GSTM tensor file format.
//!
//! Layout: magic bytes `GSTM`, u32 version (=1), u32 ndim, ndim x u64 dims,
//! then the row-major f32 little-endian payload. Spectrograms, filterbanks
//! and feature matrices all travel in this container.

use crate::error::{Error, Result};
use ndarray::Array2;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const GSTM_MAGIC: [u8; 4] = *b"GSTM";
pub const GSTM_VERSION: u32 = 1;

/// An n-dimensional f32 tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::invalid_argument(format!(
                "tensor dims {:?} imply {} elements, got {}",
                dims,
                n,
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn from_matrix(m: &Array2<f64>) -> Self {
        Tensor {
            dims: vec![m.nrows(), m.ncols()],
            data: m.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<Array2<f64>> {
        if self.dims.len() != 2 {
            return Err(Error::format(format!(
                "expected 2-d tensor, got {} dims",
                self.dims.len()
            )));
        }
        let (r, c) = (self.dims[0], self.dims[1]);
        Array2::from_shape_vec((r, c), self.data.iter().map(|&v| v as f64).collect())
            .map_err(|e| Error::format(e.to_string()))
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&GSTM_MAGIC)?;
        w.write_all(&GSTM_VERSION.to_le_bytes())?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for &d in &self.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != GSTM_MAGIC {
            return Err(Error::format("bad magic, not a GSTM file"));
        }
        let version = read_u32(r)?;
        if version != GSTM_VERSION {
            return Err(Error::format(format!("unsupported GSTM version {version}")));
        }
        let ndim = read_u32(r)? as usize;
        if ndim > 8 {
            return Err(Error::format(format!("implausible ndim {ndim}")));
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(read_u64(r)? as usize);
        }
        let n: usize = dims.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Tensor { dims, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read(&mut r)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Save a matrix as GSTM, writing to a temp file and renaming so a failed
/// write never leaves partial output.
pub fn save_matrix_atomic(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("gstm.tmp");
    Tensor::from_matrix(m).save(&tmp)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    Tensor::load(path)?.to_matrix()
}
