//! Bit payloads and their text file format.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Unpacks `count` bits from `bytes`, most significant bit first.
pub fn pack_bits(bytes: &[u8], count: usize) -> Result<Vec<u8>> {
    let available = bytes.len() * 8;
    if count > available {
        return Err(Error::PayloadUnderflow { requested: count, available });
    }
    Ok((0..count).map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1).collect())
}

/// Packs bits into octets, most significant bit first, zero-padding the tail.
pub fn unpack_bits(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| chunk.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b & 1) << (7 - i))))
        .collect()
}

/// A secret payload laid out over `channels_used` carrier channels of a
/// `width × height` image, `bits_per_element` bits per carrier element.
///
/// Bit `k` of carrier element `(c, p)` (channel `c`, flat pixel `p`) lives at
/// `bits[(c * width * height + p) * bits_per_element + k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    bits: Vec<u8>,
    width: usize,
    height: usize,
    bits_per_element: usize,
    channels_used: usize,
}

impl Message {
    pub fn new(
        bits: Vec<u8>,
        width: usize,
        height: usize,
        bits_per_element: usize,
        channels_used: usize,
    ) -> Result<Self> {
        if bits_per_element == 0 || width == 0 || height == 0 {
            return Err(Error::InvalidShape("message dimensions must be positive".into()));
        }
        let expected = bits_per_element * channels_used * width * height;
        if bits.len() != expected {
            return Err(Error::LengthMismatch { left: expected, right: bits.len() });
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidParameter("bits must be 0 or 1".into()));
        }
        Ok(Self { bits, width, height, bits_per_element, channels_used })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn into_bits(self) -> Vec<u8> {
        self.bits
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits_per_element(&self) -> usize {
        self.bits_per_element
    }

    pub fn channels_used(&self) -> usize {
        self.channels_used
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Payload in bits per pixel.
    pub fn bpp(&self) -> f64 {
        self.bits.len() as f64 / (self.width * self.height) as f64
    }

    /// The bits of carrier channel `c`.
    pub fn channel_bits(&self, c: usize) -> &[u8] {
        let n = self.width * self.height * self.bits_per_element;
        &self.bits[c * n..(c + 1) * n]
    }
}

/// Reads a `.bits` file: ASCII `0`/`1` characters, whitespace ignored.
pub fn read_bits_file(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_bits(&fs::read_to_string(path)?)
}

pub fn parse_bits(text: &str) -> Result<Vec<u8>> {
    text.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(Error::InvalidParameter(format!("unexpected character {other:?} in bit file"))),
        })
        .collect()
}

/// Writes bits as ASCII `0`/`1`, 64 per line.
pub fn write_bits_file(path: impl AsRef<Path>, bits: &[u8]) -> Result<()> {
    let mut text = String::with_capacity(bits.len() + bits.len() / 64 + 1);
    for line in bits.chunks(64) {
        text.extend(line.iter().map(|&b| if b == 0 { '0' } else { '1' }));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}
