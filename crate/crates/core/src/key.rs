use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::{Purpose, StegoRng};
use crate::tensor::{LatentTensor, NztTensor, Shape};

/// Which message projection maps bits into carrier noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProjectionKind {
    /// Message to noise: sign of fresh Gaussian noise.
    Mn,
    /// Message to binary: ±1.
    Mb,
    /// Message to centered binary: 0 or ±√2.
    Mc,
    /// Several bits per element on a zero-mean, unit-variance ladder.
    MultiBits(u8),
    /// One-bit payload replicated over three codebook-masked channels.
    MultiChannel,
}

/// Number of channels a multi-channel payload is replicated into.
pub const MULTI_CHANNEL_COPIES: usize = 3;

impl ProjectionKind {
    pub fn bits_per_element(self) -> usize {
        match self {
            ProjectionKind::MultiBits(b) => b as usize,
            _ => 1,
        }
    }

    /// Maximum number of message channels for a model with `channels` channels.
    pub fn max_message_channels(self, channels: usize) -> usize {
        match self {
            ProjectionKind::MultiChannel => usize::from(channels >= MULTI_CHANNEL_COPIES),
            _ => channels,
        }
    }

    pub fn needs_codebook(self) -> bool {
        matches!(self, ProjectionKind::MultiChannel)
    }
}

impl fmt::Display for ProjectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProjectionKind::Mn => f.write_str("mn"),
            ProjectionKind::Mb => f.write_str("mb"),
            ProjectionKind::Mc => f.write_str("mc"),
            ProjectionKind::MultiBits(b) => write!(f, "multibits{b}"),
            ProjectionKind::MultiChannel => f.write_str("multichannel"),
        }
    }
}

impl FromStr for ProjectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let kind = match lower.as_str() {
            "mn" => ProjectionKind::Mn,
            "mb" => ProjectionKind::Mb,
            "mc" => ProjectionKind::Mc,
            "multichannel" | "multi-channel" => ProjectionKind::MultiChannel,
            other => {
                let b = other
                    .strip_prefix("multibits")
                    .map(|rest| rest.trim_start_matches(['(', ':', '-']).trim_end_matches(')'))
                    .and_then(|n| n.parse::<u8>().ok())
                    .ok_or_else(|| Error::InvalidKey(format!("unknown projection {s:?}")))?;
                if !(2..=8).contains(&b) {
                    return Err(Error::InvalidParameter(format!("multibits needs 2..=8 bits, got {b}")));
                }
                ProjectionKind::MultiBits(b)
            }
        };
        Ok(kind)
    }
}

/// Binary mask `C ∈ {0,1}^{3×H×W}` shared by sender and receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    height: usize,
    width: usize,
    bits: Vec<u8>,
}

impl Codebook {
    pub fn new(height: usize, width: usize, bits: Vec<u8>) -> Result<Self> {
        let n = MULTI_CHANNEL_COPIES * height * width;
        if bits.len() != n {
            return Err(Error::LengthMismatch { left: n, right: bits.len() });
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidParameter("codebook entries must be 0 or 1".into()));
        }
        Ok(Self { height, width, bits })
    }

    /// Bernoulli(½) codebook from the codebook stream of `seed`, item `index`.
    pub fn generate(height: usize, width: usize, seed: u64, index: u32) -> Self {
        let mut rng = StegoRng::for_item(seed, Purpose::Codebook, index);
        let bits = rng.bits(MULTI_CHANNEL_COPIES * height * width);
        Self { height, width, bits }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Mask of copy `c`, one entry per pixel.
    pub fn plane(&self, c: usize) -> &[u8] {
        let p = self.height * self.width;
        &self.bits[c * p..(c + 1) * p]
    }

    pub fn to_tensor(&self) -> LatentTensor {
        let shape = Shape { channels: MULTI_CHANNEL_COPIES, height: self.height, width: self.width };
        LatentTensor::new(shape, self.bits.iter().map(|&b| b as f64).collect())
            .expect("codebook values are finite")
    }

    pub fn from_tensor(t: &LatentTensor) -> Result<Self> {
        let s = t.shape();
        if s.channels != MULTI_CHANNEL_COPIES {
            return Err(Error::InvalidShape(format!("codebook must have 3 channels, found {}", s.channels)));
        }
        let bits = t
            .data()
            .iter()
            .map(|&v| match v {
                0.0 => Ok(0),
                1.0 => Ok(1),
                v => Err(Error::InvalidParameter(format!("codebook value {v} is not 0.0 or 1.0"))),
            })
            .collect::<Result<_>>()?;
        Self::new(s.height, s.width, bits)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_tensor().write(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensor(&LatentTensor::from_nzt(&NztTensor::read(path)?)?)
    }
}

/// Everything both parties share beyond the model and schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StegoKey {
    projection: ProjectionKind,
    seed: u64,
    codebook: Option<Codebook>,
}

impl StegoKey {
    pub fn new(projection: ProjectionKind, seed: u64, codebook: Option<Codebook>) -> Result<Self> {
        match (projection.needs_codebook(), codebook.is_some()) {
            (true, false) => Err(Error::MissingCodebook),
            (false, true) => Err(Error::InvalidKey(format!("projection {projection} takes no codebook"))),
            _ => Ok(Self { projection, seed, codebook }),
        }
    }

    /// Key for any projection; multi-channel keys get the codebook derived
    /// from `seed`.
    pub fn with_seeded_codebook(projection: ProjectionKind, seed: u64, height: usize, width: usize) -> Self {
        let codebook = projection.needs_codebook().then(|| Codebook::generate(height, width, seed, 0));
        Self { projection, seed, codebook }
    }

    pub fn projection(&self) -> ProjectionKind {
        self.projection
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn codebook(&self) -> Option<&Codebook> {
        self.codebook.as_ref()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_codebook(&self, codebook: Codebook) -> Result<Self> {
        Self::new(self.projection, self.seed, Some(codebook))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codebook_iff_multichannel() {
        let cb = Codebook::generate(4, 4, 1, 0);
        assert!(matches!(StegoKey::new(ProjectionKind::MultiChannel, 1, None), Err(Error::MissingCodebook)));
        assert!(StegoKey::new(ProjectionKind::Mb, 1, Some(cb.clone())).is_err());
        assert!(StegoKey::new(ProjectionKind::MultiChannel, 1, Some(cb)).is_ok());
        assert!(StegoKey::new(ProjectionKind::Mc, 1, None).is_ok());
    }

    #[test]
    fn parse_projection_names() {
        assert_eq!("MB".parse::<ProjectionKind>().unwrap(), ProjectionKind::Mb);
        assert_eq!("multibits(3)".parse::<ProjectionKind>().unwrap(), ProjectionKind::MultiBits(3));
        assert_eq!("multibits2".parse::<ProjectionKind>().unwrap(), ProjectionKind::MultiBits(2));
        assert!("multibits1".parse::<ProjectionKind>().is_err());
        assert!("xyz".parse::<ProjectionKind>().is_err());
        for k in [ProjectionKind::Mn, ProjectionKind::MultiBits(4), ProjectionKind::MultiChannel] {
            assert_eq!(k.to_string().parse::<ProjectionKind>().unwrap(), k);
        }
    }

    #[test]
    fn codebook_tensor_round_trip() {
        let cb = Codebook::generate(5, 3, 9, 2);
        assert_eq!(Codebook::from_tensor(&cb.to_tensor()).unwrap(), cb);
        let bad = cb.to_tensor().map(|v| v * 0.5).unwrap();
        assert!(Codebook::from_tensor(&bad).is_err());
    }
}
