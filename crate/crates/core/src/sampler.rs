//! Deterministic Heun integration of the probability-flow ODE in the
//! variance-exploding σ parameterization, `dx/dσ = (x − D(x; σ)) / σ`.

use crate::error::{Error, Result};
use crate::schedule::SigmaSchedule;
use crate::tensor::{LatentTensor, Shape};

/// A denoiser `D(x; σ)`: the posterior mean of clean data given a noisy
/// observation at noise level σ. The score is `(D − x) / σ²`.
///
/// Implementations must be safe to call from several threads at once; a
/// model that cannot serve concurrent requests serializes internally.
pub trait ScoreModel: Send + Sync {
    fn shape(&self) -> Shape;

    /// `context` carries conditioning (prompt, guidance scale) opaquely.
    fn denoise(&self, x: &LatentTensor, sigma: f64, context: Option<&str>) -> Result<LatentTensor>;
}

impl<M: ScoreModel + ?Sized> ScoreModel for &M {
    fn shape(&self) -> Shape {
        (**self).shape()
    }

    fn denoise(&self, x: &LatentTensor, sigma: f64, context: Option<&str>) -> Result<LatentTensor> {
        (**self).denoise(x, sigma, context)
    }
}

impl<M: ScoreModel + ?Sized> ScoreModel for Box<M> {
    fn shape(&self) -> Shape {
        (**self).shape()
    }

    fn denoise(&self, x: &LatentTensor, sigma: f64, context: Option<&str>) -> Result<LatentTensor> {
        (**self).denoise(x, sigma, context)
    }
}

struct Drift<'a, M: ?Sized> {
    model: &'a M,
    shape: Shape,
    context: Option<&'a str>,
}

impl<M: ScoreModel + ?Sized> Drift<'_, M> {
    /// `(x − D(x; σ)) / σ`
    fn eval(&self, x: &[f64], sigma: f64, step: usize) -> Result<Vec<f64>> {
        let state = LatentTensor::new(self.shape, x.to_vec()).map_err(|_| Error::Diverged { step, sigma })?;
        let denoised = self.model.denoise(&state, sigma, self.context).map_err(|e| match e {
            Error::NonFinite(_) => Error::Diverged { step, sigma },
            other => other,
        })?;
        denoised.expect_shape(self.shape)?;
        Ok(x.iter().zip(denoised.data()).map(|(xi, di)| (xi - di) / sigma).collect())
    }

    /// One Heun step from `from` to `to` (both positive).
    fn heun(&self, x: &[f64], from: f64, to: f64, step: usize) -> Result<Vec<f64>> {
        let h = to - from;
        let d = self.eval(x, from, step)?;
        let predicted: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + h * di).collect();
        let d2 = self.eval(&predicted, to, step)?;
        Ok(x.iter()
            .zip(d.iter().zip(&d2))
            .map(|(xi, (a, b))| xi + h * 0.5 * (a + b))
            .collect())
    }
}

fn check_model(model: &(impl ScoreModel + ?Sized), t: &LatentTensor) -> Result<Shape> {
    let shape = model.shape();
    t.expect_shape(shape)?;
    Ok(shape)
}

fn finish(shape: Shape, x: Vec<f64>, step: usize, sigma: f64) -> Result<LatentTensor> {
    LatentTensor::new(shape, x).map_err(|_| Error::Diverged { step, sigma })
}

/// Noise → sample. Starts at `x = σ_max · z` and walks the grid with Heun
/// steps; the last step to σ = 0 is plain Euler. Makes `2N − 1` denoiser
/// calls.
pub fn heun_forward(
    z: &LatentTensor,
    schedule: &SigmaSchedule,
    model: &(impl ScoreModel + ?Sized),
    context: Option<&str>,
) -> Result<LatentTensor> {
    let shape = check_model(model, z)?;
    let drift = Drift { model, shape, context };
    let sigmas = schedule.sigmas();
    let mut x: Vec<f64> = z.data().iter().map(|v| v * sigmas[0]).collect();
    for (step, w) in sigmas.windows(2).enumerate() {
        let (from, to) = (w[0], w[1]);
        x = if to > 0.0 {
            drift.heun(&x, from, to, step)?
        } else {
            let d = drift.eval(&x, from, step)?;
            x.iter().zip(&d).map(|(xi, di)| xi + (to - from) * di).collect()
        };
    }
    finish(shape, x, schedule.steps(), 0.0)
}

/// Sample → noise, the approximate inverse of [`heun_forward`].
///
/// The final Euler step of the forward pass is undone first with one
/// explicit step at σ_min (`x ← x + σ_min · d(x, σ_min)`), then Heun steps
/// run the reversed grid σ_min → σ_max and the result is divided by σ_max.
/// Makes `2N − 1` denoiser calls, like the forward pass.
pub fn heun_inverse(
    x0: &LatentTensor,
    schedule: &SigmaSchedule,
    model: &(impl ScoreModel + ?Sized),
    context: Option<&str>,
) -> Result<LatentTensor> {
    let shape = check_model(model, x0)?;
    let drift = Drift { model, shape, context };
    let n = schedule.steps();
    let sigmas = &schedule.sigmas()[..n];
    let sigma_min = sigmas[n - 1];

    let d = drift.eval(x0.data(), sigma_min, n - 1)?;
    let mut x: Vec<f64> = x0.data().iter().zip(&d).map(|(xi, di)| xi + sigma_min * di).collect();
    for (k, w) in sigmas.windows(2).rev().enumerate() {
        x = drift.heun(&x, w[1], w[0], n - 2 - k)?;
    }
    let sigma_max = sigmas[0];
    let z = x.into_iter().map(|v| v / sigma_max).collect();
    finish(shape, z, 0, sigma_max)
}
