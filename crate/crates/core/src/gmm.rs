//! Exact denoiser for an isotropic Gaussian mixture.
//!
//! With data `p_0 = Σ_k w_k N(μ_k, s_k² I)`, the noisy marginal at level σ is
//! `Σ_k w_k N(μ_k, (s_k² + σ²) I)` and the posterior mean is
//! `D(x; σ) = Σ_k γ_k(x) (s_k² x + σ² μ_k) / (s_k² + σ²)`.
//!
//! On-disk fixture: one NZT1 tensor of shape `(K, C + 1, H, W)`. Plane 0 of
//! component `k` holds its weight at offset 0 and its standard deviation at
//! offset 1 (the rest zero); planes `1..=C` hold its mean.

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{Purpose, StegoRng};
use crate::sampler::ScoreModel;
use crate::tensor::{LatentTensor, NztTensor, Shape};

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: LatentTensor,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixtureModel {
    shape: Shape,
    components: Vec<MixtureComponent>,
    log_weights: Vec<f64>,
}

/// Per-component standard deviations of the desk fixture.
pub const DESK_STDS: [f64; 4] = [0.005, 0.007, 0.01, 0.014];
/// Means are drawn uniformly from `[-DESK_MEAN_RANGE, DESK_MEAN_RANGE]`.
pub const DESK_MEAN_RANGE: f64 = 0.6;
pub const DESK_SEED: u64 = 20_231_017;

impl GaussianMixtureModel {
    pub fn new(shape: Shape, components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("mixture components"));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, expected 1")));
        }
        for (k, c) in components.iter().enumerate() {
            if c.weight.is_nan() || c.weight <= 0.0 || !c.std.is_finite() || c.std <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "component {k}: weight {} and std {} must be positive",
                    c.weight, c.std
                )));
            }
            c.mean.expect_shape(shape)?;
        }
        let log_weights = components.iter().map(|c| c.weight.ln()).collect();
        Ok(Self { shape, components, log_weights })
    }

    /// Single component `N(0, s² I)`.
    pub fn isotropic(shape: Shape, std: f64) -> Result<Self> {
        Self::new(shape, vec![MixtureComponent { weight: 1.0, mean: LatentTensor::zeros(shape), std }])
    }

    /// The checked-in desk-scale "dataset": four equally weighted components
    /// with seeded uniform means and the stds in [`DESK_STDS`].
    pub fn desk_fixture(shape: Shape, seed: u64) -> Self {
        let mut rng = StegoRng::new(seed, Purpose::Aux);
        let weight = 1.0 / DESK_STDS.len() as f64;
        let components = DESK_STDS
            .iter()
            .map(|&std| {
                let mean = LatentTensor::from_fn(shape, |_| DESK_MEAN_RANGE * (2.0 * rng.uniform() - 1.0))
                    .expect("finite means");
                MixtureComponent { weight, mean, std }
            })
            .collect();
        Self::new(shape, components).expect("valid fixture")
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    /// Posterior component probabilities at `(x, σ)`, via log-sum-exp.
    pub fn responsibilities(&self, x: &[f64], sigma: f64) -> Vec<f64> {
        let d = x.len() as f64;
        let mut logits: Vec<f64> = self
            .components
            .iter()
            .zip(&self.log_weights)
            .map(|(c, lw)| {
                let var = c.std * c.std + sigma * sigma;
                let dist2: f64 = x.iter().zip(c.mean.data()).map(|(a, m)| (a - m) * (a - m)).sum();
                lw - 0.5 * dist2 / var - 0.5 * d * var.ln()
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in &mut logits {
            *l = (*l - max).exp();
            total += *l;
        }
        logits.iter_mut().for_each(|l| *l /= total);
        logits
    }

    pub fn denoise_slice(&self, x: &[f64], sigma: f64) -> Vec<f64> {
        if sigma == 0.0 {
            return x.to_vec();
        }
        let gamma = self.responsibilities(x, sigma);
        let s2 = sigma * sigma;
        let mut out = vec![0.0; x.len()];
        for (c, g) in self.components.iter().zip(gamma) {
            if g == 0.0 {
                continue;
            }
            let v = c.std * c.std;
            let a = g * v / (v + s2);
            let b = g * s2 / (v + s2);
            for ((o, xi), mi) in out.iter_mut().zip(x).zip(c.mean.data()) {
                *o += a * xi + b * mi;
            }
        }
        out
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.shape.len()];
        for c in &self.components {
            for (o, m) in out.iter_mut().zip(c.mean.data()) {
                *o += c.weight * m;
            }
        }
        out
    }

    /// Exact draw from the clean data distribution.
    pub fn sample(&self, rng: &mut StegoRng) -> LatentTensor {
        let u = rng.uniform();
        let mut acc = 0.0;
        let comp = self
            .components
            .iter()
            .find(|c| {
                acc += c.weight;
                u < acc
            })
            .unwrap_or_else(|| self.components.last().expect("non-empty"));
        let data = comp.mean.data().iter().map(|m| m + comp.std * rng.normal()).collect();
        LatentTensor::new(self.shape, data).expect("finite sample")
    }

    pub fn to_nzt(&self) -> Result<NztTensor> {
        let s = self.shape;
        if s.plane() < 2 {
            return Err(Error::InvalidShape("fixture needs at least 2 pixels per plane".into()));
        }
        let mut data = Vec::with_capacity(self.components.len() * (s.channels + 1) * s.plane());
        for c in &self.components {
            let mut params = vec![0.0; s.plane()];
            params[0] = c.weight;
            params[1] = c.std;
            data.extend(params);
            data.extend_from_slice(c.mean.data());
        }
        NztTensor::from_f64(vec![self.components.len(), s.channels + 1, s.height, s.width], &data)
    }

    /// Loads a fixture; weights are renormalized after the `f32` round trip.
    pub fn from_nzt(t: &NztTensor) -> Result<Self> {
        let [k, c1, h, w] = t.dims[..] else {
            return Err(Error::InvalidShape(format!("mixture fixture needs 4 dims, found {:?}", t.dims)));
        };
        if c1 < 2 {
            return Err(Error::InvalidShape("mixture fixture needs at least one data channel".into()));
        }
        let shape = Shape::new(c1 - 1, h, w)?;
        let block = c1 * h * w;
        let values = t.to_f64();
        let mut components: Vec<MixtureComponent> = values
            .chunks_exact(block)
            .take(k)
            .map(|chunk| {
                Ok(MixtureComponent {
                    weight: chunk[0],
                    std: chunk[1],
                    mean: LatentTensor::new(shape, chunk[h * w..].to_vec())?,
                })
            })
            .collect::<Result<_>>()?;
        let total: f64 = components.iter().map(|c| c.weight).sum();
        for c in &mut components {
            c.weight /= total;
        }
        Self::new(shape, components)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_nzt(&NztTensor::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_nzt()?.write(path)
    }
}

impl ScoreModel for GaussianMixtureModel {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn denoise(&self, x: &LatentTensor, sigma: f64, _context: Option<&str>) -> Result<LatentTensor> {
        x.expect_shape(self.shape)?;
        if sigma.is_nan() || sigma < 0.0 {
            return Err(Error::InvalidParameter(format!("sigma must be non-negative, got {sigma}")));
        }
        LatentTensor::new(self.shape, self.denoise_slice(x.data(), sigma))
    }
}
