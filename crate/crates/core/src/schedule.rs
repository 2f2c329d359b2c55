use crate::error::{Error, Result};

pub const DEFAULT_SIGMA_MAX: f64 = 80.0;
pub const DEFAULT_SIGMA_MIN: f64 = 0.002;
pub const DEFAULT_RHO: f64 = 7.0;
pub const DEFAULT_STEPS: usize = 40;

/// The ρ-spaced noise grid `σ_0 = σ_max > … > σ_{N−1} = σ_min > σ_N = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSchedule {
    sigma_max: f64,
    sigma_min: f64,
    rho: f64,
    sigmas: Vec<f64>,
}

impl SigmaSchedule {
    /// `σ_i = (σ_max^{1/ρ} + i/(N−1) · (σ_min^{1/ρ} − σ_max^{1/ρ}))^ρ` for
    /// `i < N`, then a terminal zero. Both endpoints are stored exactly.
    pub fn new(sigma_max: f64, sigma_min: f64, rho: f64, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 steps, got {steps}")));
        }
        if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < sigma_min < sigma_max, got {sigma_min} and {sigma_max}"
            )));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
        }
        let hi = sigma_max.powf(1.0 / rho);
        let lo = sigma_min.powf(1.0 / rho);
        let last = (steps - 1) as f64;
        let mut sigmas: Vec<f64> = (0..steps)
            .map(|i| (hi + i as f64 / last * (lo - hi)).powf(rho))
            .collect();
        sigmas[0] = sigma_max;
        sigmas[steps - 1] = sigma_min;
        sigmas.push(0.0);
        if sigmas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter("schedule is not strictly decreasing".into()));
        }
        Ok(Self { sigma_max, sigma_min, rho, sigmas })
    }

    pub fn with_steps(steps: usize) -> Result<Self> {
        Self::new(DEFAULT_SIGMA_MAX, DEFAULT_SIGMA_MIN, DEFAULT_RHO, steps)
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Number of integration steps `N`.
    pub fn steps(&self) -> usize {
        self.sigmas.len() - 1
    }

    /// All `N + 1` noise levels including the terminal zero.
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
}

impl Default for SigmaSchedule {
    fn default() -> Self {
        Self::with_steps(DEFAULT_STEPS).expect("default schedule is valid")
    }
}
