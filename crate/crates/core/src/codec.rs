//! Image storage: 8-bit quantization with PNG files, or lossless `f32`
//! storage in the NZT1 container.

use std::path::Path;

use image::{ColorType, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::{LatentTensor, Shape};

/// How a generated sample is stored between sender and receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuantMode {
    Float32,
    Uint8,
}

impl QuantMode {
    /// Applies the storage round trip to a sample in `[-1, 1]`.
    pub fn apply(self, x: &LatentTensor) -> LatentTensor {
        match self {
            QuantMode::Float32 => x.to_f32_precision(),
            QuantMode::Uint8 => dequantize_u8(&quantize_u8(x)),
        }
    }

    /// Picks the mode from a file extension: `.png` or `.nzt`.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("png") => Ok(QuantMode::Uint8),
            Some("nzt") => Ok(QuantMode::Float32),
            _ => Err(Error::Image(format!("unsupported image extension: {}", path.display()))),
        }
    }
}

/// 8-bit image in channel-major layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByteTensor {
    pub shape: Shape,
    pub data: Vec<u8>,
}

/// `u = clamp(round((x + 1) · 127.5), 0, 255)`, rounding half away from zero.
pub fn quantize_value(x: f64) -> u8 {
    ((x + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

pub fn dequantize_value(u: u8) -> f64 {
    u as f64 / 127.5 - 1.0
}

pub fn quantize_u8(x: &LatentTensor) -> ByteTensor {
    ByteTensor { shape: x.shape(), data: x.data().iter().map(|&v| quantize_value(v)).collect() }
}

pub fn dequantize_u8(q: &ByteTensor) -> LatentTensor {
    LatentTensor::new(q.shape, q.data.iter().map(|&u| dequantize_value(u)).collect())
        .expect("dequantized values are finite")
}

pub fn write_png(q: &ByteTensor, path: impl AsRef<Path>) -> Result<()> {
    let s = q.shape;
    if s.channels != 3 {
        return Err(Error::ExpectedRgb(s.channels));
    }
    let (w, h) = (dim_u32(s.width)?, dim_u32(s.height)?);
    let plane = s.plane();
    let img = RgbImage::from_fn(w, h, |x, y| {
        let p = y as usize * s.width + x as usize;
        image::Rgb([q.data[p], q.data[plane + p], q.data[2 * plane + p]])
    });
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| Error::Image(e.to_string()))
}

pub fn read_png(path: impl AsRef<Path>) -> Result<ByteTensor> {
    let img = ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| Error::Image(e.to_string()))?;
    match img.color() {
        ColorType::Rgb8 => {}
        other => return Err(Error::ExpectedRgb(other.channel_count() as usize)),
    }
    let rgb = img.into_rgb8();
    let shape = Shape::new(3, rgb.height() as usize, rgb.width() as usize)?;
    let plane = shape.plane();
    let mut data = vec![0u8; shape.len()];
    for (p, px) in rgb.pixels().enumerate() {
        for c in 0..3 {
            data[c * plane + p] = px[c];
        }
    }
    Ok(ByteTensor { shape, data })
}

pub fn write_float(x: &LatentTensor, path: impl AsRef<Path>) -> Result<()> {
    x.write(path)
}

pub fn read_float(path: impl AsRef<Path>) -> Result<LatentTensor> {
    LatentTensor::read(path)
}

/// Stores a sample by extension: `.png` quantizes, `.nzt` keeps `f32`.
pub fn save_image(x: &LatentTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match QuantMode::from_path(path)? {
        QuantMode::Uint8 => write_png(&quantize_u8(x), path),
        QuantMode::Float32 => write_float(x, path),
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<LatentTensor> {
    let path = path.as_ref();
    match QuantMode::from_path(path)? {
        QuantMode::Uint8 => Ok(dequantize_u8(&read_png(path)?)),
        QuantMode::Float32 => read_float(path),
    }
}

fn dim_u32(d: usize) -> Result<u32> {
    u32::try_from(d).map_err(|_| Error::DimensionOverflow)
}
