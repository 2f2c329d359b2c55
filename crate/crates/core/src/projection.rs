//! Message projections: invertible maps between payload bits and carrier
//! noise values, plus the channel layout that places them in a latent.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::key::{Codebook, ProjectionKind, StegoKey, MULTI_CHANNEL_COPIES};
use crate::message::Message;
use crate::rng::{Purpose, StegoRng};
use crate::tensor::LatentTensor;

/// MN: keep the magnitude of `z`, set the sign from the bit.
pub fn project_mn(z: &[f64], bits: &[u8]) -> Result<Vec<f64>> {
    same_len(z.len(), bits.len())?;
    Ok(z.iter().zip(bits).map(|(&v, &b)| if b == 1 { v.abs() } else { -v.abs() }).collect())
}

/// Sign decoder shared by MN, MB and multi-channel. Exact zero decodes as 0.
pub fn invert_sign(z: &[f64]) -> Vec<u8> {
    z.iter().map(|&v| u8::from(v > 0.0)).collect()
}

/// MB: `1 → +1`, `0 → −1`.
pub fn project_mb(bits: &[u8]) -> Vec<f64> {
    bits.iter().map(|&b| 2.0 * b as f64 - 1.0).collect()
}

/// MC: `0 → 0`, `1 → ±√2` with a random sign from `rng`.
pub fn project_mc(bits: &[u8], rng: &mut StegoRng) -> Vec<f64> {
    bits.iter()
        .map(|&b| if b == 1 { rng.sign() * SQRT_2 } else { 0.0 })
        .collect()
}

pub const MC_THRESHOLD: f64 = SQRT_2 / 2.0;

pub fn invert_mc(z: &[f64]) -> Vec<u8> {
    z.iter().map(|&v| u8::from(v.abs() > MC_THRESHOLD)).collect()
}

/// Codeword ladder for `b`-bit symbols, indexed by symbol value.
///
/// For `b = 2` the order is `00, 01, 10, 11 → −3, −1, 3, 1` (over √5).
/// Wider symbols use the ascending ladder `(2k + 1 − 2^b) / √((4^b − 1)/3)`.
/// Every ladder has zero mean and unit variance over uniform symbols.
pub fn multibit_levels(b: u8) -> Result<Vec<f64>> {
    if b < 2 {
        return Err(Error::InvalidParameter(format!("multibits needs at least 2 bits, got {b}")));
    }
    if b > 16 {
        return Err(Error::InvalidParameter(format!("multibits supports at most 16 bits, got {b}")));
    }
    if b == 2 {
        let s = 5f64.sqrt();
        return Ok(vec![-3.0 / s, -1.0 / s, 3.0 / s, 1.0 / s]);
    }
    let count = 1usize << b;
    let scale = (((count * count) as f64 - 1.0) / 3.0).sqrt();
    Ok((0..count).map(|k| (2.0 * k as f64 + 1.0 - count as f64) / scale).collect())
}

/// Nearest-codeword decoder for one ladder.
#[derive(Debug, Clone)]
pub struct MultiBitDecoder {
    bits: u8,
    levels: Vec<f64>,
    /// Symbols in ascending order of their codeword.
    sorted_symbols: Vec<usize>,
    /// Midpoints between consecutive sorted codewords.
    boundaries: Vec<f64>,
}

impl MultiBitDecoder {
    pub fn new(b: u8) -> Result<Self> {
        let levels = multibit_levels(b)?;
        let mut sorted_symbols: Vec<usize> = (0..levels.len()).collect();
        sorted_symbols.sort_by(|&i, &j| levels[i].total_cmp(&levels[j]));
        let boundaries = sorted_symbols
            .windows(2)
            .map(|w| 0.5 * (levels[w[0]] + levels[w[1]]))
            .collect();
        Ok(Self { bits: b, levels, sorted_symbols, boundaries })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Symbol whose codeword is nearest `v`; ties go to the smaller codeword.
    pub fn symbol(&self, v: f64) -> usize {
        self.sorted_symbols[self.boundaries.partition_point(|&t| t < v)]
    }

    /// Smallest distance from any codeword to a decision boundary.
    pub fn margin(&self) -> f64 {
        self.boundaries
            .iter()
            .enumerate()
            .map(|(i, &t)| t - self.levels[self.sorted_symbols[i]])
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn project_multibits(bits: &[u8], b: u8) -> Result<Vec<f64>> {
    let levels = multibit_levels(b)?;
    let b = b as usize;
    if !bits.len().is_multiple_of(b) {
        return Err(Error::LengthMismatch { left: bits.len(), right: bits.len() / b * b });
    }
    Ok(bits
        .chunks_exact(b)
        .map(|sym| levels[sym.iter().fold(0usize, |acc, &bit| (acc << 1) | bit as usize)])
        .collect())
}

pub fn invert_multibits(z: &[f64], b: u8) -> Result<Vec<u8>> {
    let decoder = MultiBitDecoder::new(b)?;
    let b = b as usize;
    let mut out = Vec::with_capacity(z.len() * b);
    for &v in z {
        let sym = decoder.symbol(v);
        out.extend((0..b).rev().map(|k| ((sym >> k) & 1) as u8));
    }
    Ok(out)
}

/// Replicates a one-bit-per-pixel payload into three channels, flipping the
/// sign wherever the codebook is 0.
pub fn project_multichannel(bits: &[u8], codebook: &Codebook) -> Result<[Vec<f64>; MULTI_CHANNEL_COPIES]> {
    same_len(codebook.height() * codebook.width(), bits.len())?;
    Ok(std::array::from_fn(|c| {
        bits.iter()
            .zip(codebook.plane(c))
            .map(|(&m, &k)| (2.0 * m as f64 - 1.0) * (2.0 * k as f64 - 1.0))
            .collect()
    }))
}

/// Undoes the codebook sign flips and takes a 2-of-3 vote per pixel.
pub fn invert_multichannel(planes: [&[f64]; MULTI_CHANNEL_COPIES], codebook: &Codebook) -> Result<Vec<u8>> {
    let n = codebook.height() * codebook.width();
    for p in &planes {
        same_len(n, p.len())?;
    }
    Ok((0..n)
        .map(|i| {
            let votes: usize = (0..MULTI_CHANNEL_COPIES)
                .map(|c| {
                    let flip = if codebook.plane(c)[i] == 1 { 1.0 } else { -1.0 };
                    usize::from(planes[c][i] * flip > 0.0)
                })
                .sum();
            u8::from(2 * votes > MULTI_CHANNEL_COPIES)
        })
        .collect())
}

/// Distance from the nearest codeword to its decision boundary.
pub fn decision_margin(kind: ProjectionKind) -> Result<f64> {
    match kind {
        ProjectionKind::Mn => Ok(0.0),
        ProjectionKind::Mb | ProjectionKind::MultiChannel => Ok(1.0),
        ProjectionKind::Mc => Ok(MC_THRESHOLD),
        ProjectionKind::MultiBits(b) => Ok(MultiBitDecoder::new(b)?.margin()),
    }
}

/// Bits a key can carry in a latent of the given shape at full capacity.
pub fn capacity(kind: ProjectionKind, channels: usize, height: usize, width: usize) -> usize {
    kind.max_message_channels(channels) * kind.bits_per_element() * height * width
}

/// Builds the full carrier latent: message channels are projected, all other
/// channels keep the fresh standard-normal draws of `noise`.
///
/// `noise` must come from the sender's noise stream; MN reuses its
/// magnitudes. MC signs are drawn from the key's MC stream for item `index`.
pub fn embed_into_channels(
    noise: &LatentTensor,
    message: &Message,
    key: &StegoKey,
    index: u32,
) -> Result<LatentTensor> {
    let shape = noise.shape();
    let kind = key.projection();
    if message.width() != shape.width || message.height() != shape.height {
        return Err(Error::ShapeMismatch {
            expected: vec![shape.height, shape.width],
            actual: vec![message.height(), message.width()],
        });
    }
    if message.bits_per_element() != kind.bits_per_element() {
        return Err(Error::InvalidParameter(format!(
            "message has {} bits per element, projection {kind} needs {}",
            message.bits_per_element(),
            kind.bits_per_element()
        )));
    }
    let max = kind.max_message_channels(shape.channels);
    if message.channels_used() > max {
        return Err(Error::Capacity(format!(
            "{} message channels requested, projection {kind} on {} channels allows {max}",
            message.channels_used(),
            shape.channels
        )));
    }

    let mut out = noise.clone().into_data();
    let plane = shape.plane();
    let mut mc_rng = StegoRng::for_item(key.seed(), Purpose::McSign, index);
    match kind {
        ProjectionKind::MultiChannel => {
            if message.channels_used() == 1 {
                let codebook = key.codebook().ok_or(Error::MissingCodebook)?;
                check_codebook(codebook, shape.height, shape.width)?;
                let planes = project_multichannel(message.channel_bits(0), codebook)?;
                for (c, values) in planes.iter().enumerate() {
                    out[c * plane..(c + 1) * plane].copy_from_slice(values);
                }
            }
        }
        _ => {
            for c in 0..message.channels_used() {
                let bits = message.channel_bits(c);
                let dst = &mut out[c * plane..(c + 1) * plane];
                let values = match kind {
                    ProjectionKind::Mn => project_mn(dst, bits)?,
                    ProjectionKind::Mb => project_mb(bits),
                    ProjectionKind::Mc => project_mc(bits, &mut mc_rng),
                    ProjectionKind::MultiBits(b) => project_multibits(bits, b)?,
                    ProjectionKind::MultiChannel => unreachable!(),
                };
                dst.copy_from_slice(&values);
            }
        }
    }
    LatentTensor::new(shape, out)
}

/// Recovers the payload from the first `channels_used` message channels of
/// an extracted latent.
pub fn extract_from_channels(z: &LatentTensor, key: &StegoKey, channels_used: usize) -> Result<Message> {
    let shape = z.shape();
    let kind = key.projection();
    let max = kind.max_message_channels(shape.channels);
    if channels_used > max {
        return Err(Error::Capacity(format!(
            "{channels_used} message channels requested, projection {kind} on {} channels allows {max}",
            shape.channels
        )));
    }
    let mut bits = Vec::with_capacity(channels_used * shape.plane() * kind.bits_per_element());
    match kind {
        ProjectionKind::MultiChannel => {
            if channels_used == 1 {
                let codebook = key.codebook().ok_or(Error::MissingCodebook)?;
                check_codebook(codebook, shape.height, shape.width)?;
                bits = invert_multichannel([z.channel(0), z.channel(1), z.channel(2)], codebook)?;
            }
        }
        _ => {
            for c in 0..channels_used {
                let plane = z.channel(c);
                match kind {
                    ProjectionKind::Mn | ProjectionKind::Mb => bits.extend(invert_sign(plane)),
                    ProjectionKind::Mc => bits.extend(invert_mc(plane)),
                    ProjectionKind::MultiBits(b) => bits.extend(invert_multibits(plane, b)?),
                    ProjectionKind::MultiChannel => unreachable!(),
                }
            }
        }
    }
    Message::new(bits, shape.width, shape.height, kind.bits_per_element(), channels_used)
}

fn check_codebook(codebook: &Codebook, height: usize, width: usize) -> Result<()> {
    if codebook.height() != height || codebook.width() != width {
        return Err(Error::ShapeMismatch {
            expected: vec![MULTI_CHANNEL_COPIES, height, width],
            actual: vec![MULTI_CHANNEL_COPIES, codebook.height(), codebook.width()],
        });
    }
    Ok(())
}

fn same_len(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::ShapeMismatch { expected: vec![left], actual: vec![right] });
    }
    Ok(())
}
