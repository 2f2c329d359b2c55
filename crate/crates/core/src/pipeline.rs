//! The hide / extract procedure: project the payload into carrier noise,
//! integrate the ODE to a sample, and invert it on the receiving side.

use crate::codec::QuantMode;
use crate::error::{Error, Result};
use crate::key::{Codebook, ProjectionKind, StegoKey};
use crate::message::Message;
use crate::metrics::hamming;
use crate::parallel::{try_map_indexed, Execution};
use crate::projection::{capacity, embed_into_channels, extract_from_channels};
use crate::rng::{Purpose, StegoRng};
use crate::sampler::{heun_forward, heun_inverse, ScoreModel};
use crate::schedule::SigmaSchedule;
use crate::tensor::{LatentTensor, Shape};

/// A model, its integration grid and conditioning: what both parties must
/// share besides the [`StegoKey`].
#[derive(Debug, Clone)]
pub struct StegoCodec<M> {
    pub model: M,
    pub schedule: SigmaSchedule,
    pub context: Option<String>,
}

impl<M: ScoreModel> StegoCodec<M> {
    pub fn new(model: M, schedule: SigmaSchedule) -> Self {
        Self { model, schedule, context: None }
    }

    pub fn with_context(mut self, context: impl Into<String>) -> Self {
        self.context = Some(context.into());
        self
    }

    pub fn shape(&self) -> Shape {
        self.model.shape()
    }

    /// Fresh standard-normal noise for image `index` of `seed`.
    pub fn fresh_noise(&self, seed: u64, index: u32) -> LatentTensor {
        let shape = self.shape();
        let mut rng = StegoRng::for_item(seed, Purpose::Noise, index);
        LatentTensor::new(shape, rng.normals(shape.len())).expect("normal draws are finite")
    }

    /// The projected carrier `z_m` for image `index`.
    pub fn carrier(&self, message: &Message, key: &StegoKey, index: u32) -> Result<LatentTensor> {
        let noise = self.fresh_noise(key.seed(), index);
        embed_into_channels(&noise, message, key, index)
    }

    pub fn generate(&self, z: &LatentTensor) -> Result<LatentTensor> {
        heun_forward(z, &self.schedule, &self.model, self.context.as_deref())
    }

    pub fn recover_noise(&self, x0: &LatentTensor) -> Result<LatentTensor> {
        heun_inverse(x0, &self.schedule, &self.model, self.context.as_deref())
    }

    pub fn hide(&self, message: &Message, key: &StegoKey, index: u32) -> Result<LatentTensor> {
        self.generate(&self.carrier(message, key, index)?)
    }

    pub fn extract(&self, x0: &LatentTensor, key: &StegoKey, channels_used: usize) -> Result<Message> {
        extract_from_channels(&self.recover_noise(x0)?, key, channels_used)
    }
}

/// One batch experiment: `images` carriers with uniform random payloads,
/// stored through `quant`, then extracted.
#[derive(Debug, Clone)]
pub struct Trial {
    pub projection: ProjectionKind,
    /// Message channels; `None` uses the projection's full capacity.
    pub channels_used: Option<usize>,
    pub quant: QuantMode,
    pub images: usize,
    pub seed: u64,
    /// Multi-channel only: draw a new codebook for every image.
    pub rotate_codebook: bool,
}

impl Trial {
    pub fn new(projection: ProjectionKind, quant: QuantMode, images: usize, seed: u64) -> Self {
        Self { projection, channels_used: None, quant, images, seed, rotate_codebook: false }
    }

    pub fn channels(mut self, channels: usize) -> Self {
        self.channels_used = Some(channels);
        self
    }

    /// Key used for image `index`.
    pub fn key_for(&self, shape: Shape, index: u32) -> Result<StegoKey> {
        let codebook = self.projection.needs_codebook().then(|| {
            let item = if self.rotate_codebook { index } else { 0 };
            Codebook::generate(shape.height, shape.width, self.seed, item)
        });
        StegoKey::new(self.projection, self.seed, codebook)
    }

    /// Random payload for image `index`.
    pub fn message_for(&self, shape: Shape, index: u32) -> Result<Message> {
        let channels = self.resolved_channels(shape)?;
        let b = self.projection.bits_per_element();
        let n = channels * b * shape.plane();
        let bits = StegoRng::for_item(self.seed, Purpose::Payload, index).bits(n);
        Message::new(bits, shape.width, shape.height, b, channels)
    }

    fn resolved_channels(&self, shape: Shape) -> Result<usize> {
        let max = self.projection.max_message_channels(shape.channels);
        let channels = self.channels_used.unwrap_or(max);
        if channels > max || max == 0 {
            return Err(Error::Capacity(format!(
                "{} cannot carry {channels} channels on a {shape} model",
                self.projection
            )));
        }
        Ok(channels)
    }
}

#[derive(Debug, Clone)]
pub struct ImageOutcome {
    pub bits: usize,
    pub errors: usize,
    /// Carrier minus recovered noise, elementwise.
    pub noise_error: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrialReport {
    pub images: Vec<ImageOutcome>,
}

impl TrialReport {
    pub fn bits(&self) -> usize {
        self.images.iter().map(|o| o.bits).sum()
    }

    pub fn errors(&self) -> usize {
        self.images.iter().map(|o| o.errors).sum()
    }

    pub fn accuracy(&self) -> f64 {
        1.0 - self.errors() as f64 / self.bits() as f64
    }

    pub fn noise_errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.images.iter().flat_map(|o| o.noise_error.iter().copied())
    }

    pub fn max_abs_noise_error(&self) -> f64 {
        self.noise_errors().map(f64::abs).fold(0.0, f64::max)
    }
}

impl<M: ScoreModel> StegoCodec<M> {
    /// Hides, stores and extracts one trial image.
    pub fn run_image(&self, trial: &Trial, index: u32) -> Result<ImageOutcome> {
        let shape = self.shape();
        let key = trial.key_for(shape, index)?;
        let message = trial.message_for(shape, index)?;
        let z = self.carrier(&message, &key, index)?;
        let x0 = self.generate(&z)?;
        let stored = trial.quant.apply(&x0);
        let z_rec = self.recover_noise(&stored)?;
        let decoded = extract_from_channels(&z_rec, &key, message.channels_used())?;
        let errors = hamming(message.bits(), decoded.bits())?;
        let bits = message.len();
        let noise_error = z.data().iter().zip(z_rec.data()).map(|(a, b)| a - b).collect();
        Ok(ImageOutcome { bits, errors, noise_error })
    }

    pub fn run_trial(&self, trial: &Trial, exec: Execution) -> Result<TrialReport> {
        let images = try_map_indexed(trial.images, exec, |i| self.run_image(trial, i as u32))?;
        Ok(TrialReport { images })
    }
}

/// Full-capacity payload size for `kind` on `shape`.
pub fn full_capacity(kind: ProjectionKind, shape: Shape) -> usize {
    capacity(kind, shape.channels, shape.height, shape.width)
}
