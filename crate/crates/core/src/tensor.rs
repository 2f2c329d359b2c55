//! The channel-major latent container and the NZT1 float file format.
//!
//! NZT1 layout: magic `4E 5A 54 31`, one `u8` giving the number of
//! dimensions, that many little-endian `u32` extents, then the little-endian
//! `f32` payload in row-major order. Nothing else: no compression, no
//! metadata, no trailing bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const NZT_MAGIC: [u8; 4] = *b"NZT1";

/// Extent of a latent tensor: channels, height, width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidShape(format!(
                "({channels},{height},{width}) has a zero extent"
            )));
        }
        channels
            .checked_mul(height)
            .and_then(|n| n.checked_mul(width))
            .ok_or(Error::DimensionOverflow)?;
        Ok(Self { channels, height, width })
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.channels * self.plane()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.channels, self.height, self.width]
    }

    /// Flat offset of `(c, y, x)`.
    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        c * self.plane() + y * self.width + x
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// A `C×H×W` tensor of finite reals, stored as `f64`.
///
/// Houses the carrier noise, intermediate ODE states and generated samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl LatentTensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::LengthMismatch { left: shape.len(), right: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self { shape, data: vec![0.0; shape.len()] }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize) -> f64) -> Result<Self> {
        Self::new(shape, (0..shape.len()).map(&mut f).collect())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.shape.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let p = self.shape.plane();
        &mut self.data[c * p..(c + 1) * p]
    }

    /// Elementwise map. Fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.expect_shape(other.shape)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn expect_shape(&self, shape: Shape) -> Result<()> {
        if self.shape != shape {
            return Err(Error::ShapeMismatch { expected: shape.dims(), actual: self.shape.dims() });
        }
        Ok(())
    }

    /// Rounds every element through `f32`, the precision of the stored carrier.
    pub fn to_f32_precision(&self) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|&v| v as f32 as f64).collect() }
    }

    pub fn to_nzt(&self) -> Result<NztTensor> {
        NztTensor::from_f64(self.shape.dims(), &self.data)
    }

    pub fn from_nzt(t: &NztTensor) -> Result<Self> {
        if t.dims.len() != 3 {
            return Err(Error::InvalidShape(format!("expected 3 dims, found {}", t.dims.len())));
        }
        let shape = Shape::new(t.dims[0], t.dims[1], t.dims[2])?;
        Self::new(shape, t.data.iter().map(|&v| v as f64).collect())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_nzt()?.write(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_nzt(&NztTensor::read(path)?)
    }
}

/// A raw NZT1 tensor of arbitrary rank.
#[derive(Debug, Clone, PartialEq)]
pub struct NztTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl NztTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > u8::MAX as usize {
            return Err(Error::InvalidShape(format!("rank {} not in 1..=255", dims.len())));
        }
        if dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::DimensionOverflow);
        }
        let n = element_count(&dims)?;
        if n != data.len() {
            return Err(Error::LengthMismatch { left: n, right: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { dims, data })
    }

    pub fn from_f64(dims: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(&NZT_MAGIC);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || bytes[..4] != NZT_MAGIC {
            return Err(Error::BadMagic);
        }
        let ndim = *bytes.get(4).ok_or(Error::Truncated { expected: 5, found: bytes.len() })? as usize;
        let header_len = 5 + 4 * ndim;
        if bytes.len() < header_len {
            return Err(Error::Truncated { expected: header_len, found: bytes.len() });
        }
        let dims: Vec<usize> = bytes[5..header_len]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        let n = element_count(&dims)?;
        let expected = n
            .checked_mul(4)
            .and_then(|b| b.checked_add(header_len))
            .ok_or(Error::DimensionOverflow)?;
        if bytes.len() != expected {
            return Err(Error::Truncated { expected, found: bytes.len() });
        }
        let data = bytes[header_len..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(dims, data)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

fn element_count(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::InvalidShape(format!("{dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(Error::DimensionOverflow)
}
