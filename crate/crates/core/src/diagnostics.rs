//! Pre-flight checks that carrier noise still looks like i.i.d. standard
//! normal draws (zero mean, unit variance, no second-order dependence), and
//! the noise-recovery error histogram.

use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::LatentTensor;

pub const MIN_ELEMENTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verdict {
    Pass,
    Warn,
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Warn => "warn",
            Verdict::Fail => "fail",
        })
    }
}

/// Standardized-statistic gates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gates {
    pub warn: f64,
    pub fail: f64,
}

impl Default for Gates {
    fn default() -> Self {
        Self { warn: 3.0, fail: 5.0 }
    }
}

impl Gates {
    pub fn judge(&self, standardized: f64) -> Verdict {
        let a = standardized.abs();
        if a.is_nan() || a > self.fail {
            Verdict::Fail
        } else if a > self.warn {
            Verdict::Warn
        } else {
            Verdict::Pass
        }
    }
}

/// One Pearson correlation over a set of element pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub label: String,
    pub r: f64,
    pub pairs: usize,
}

impl Correlation {
    /// `r · √pairs`, approximately standard normal under independence.
    pub fn standardized(&self) -> f64 {
        self.r * (self.pairs as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseReport {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    /// `mean · √n`
    pub mean_z: f64,
    /// `(var − 1) · √(n/2)`
    pub var_stat: f64,
    pub correlations: Vec<Correlation>,
    pub mean_verdict: Verdict,
    pub variance_verdict: Verdict,
    pub independence_verdict: Verdict,
}

impl CollapseReport {
    /// Largest `|r|` over all pairings.
    pub fn max_abs_corr(&self) -> f64 {
        self.correlations.iter().map(|c| c.r.abs()).fold(0.0, f64::max)
    }

    /// Largest `|r| · √pairs`.
    pub fn max_corr_stat(&self) -> f64 {
        self.correlations.iter().map(|c| c.standardized().abs()).fold(0.0, f64::max)
    }

    pub fn verdict(&self) -> Verdict {
        self.mean_verdict.max(self.variance_verdict).max(self.independence_verdict)
    }

    /// `key=value` lines.
    pub fn to_lines(&self) -> Vec<String> {
        vec![
            format!("n={}", self.n),
            format!("mean_z={:.6}", self.mean_z),
            format!("var_stat={:.6}", self.var_stat),
            format!("max_abs_corr={:.6}", self.max_abs_corr()),
            format!("corr_stat={:.6}", self.max_corr_stat()),
            format!("mean_verdict={}", self.mean_verdict),
            format!("variance_verdict={}", self.variance_verdict),
            format!("independence_verdict={}", self.independence_verdict),
            format!("collapse_verdict={}", self.verdict()),
        ]
    }
}

fn pearson(pairs: impl Iterator<Item = (f64, f64)> + Clone) -> (f64, usize) {
    let (mut n, mut sa, mut sb) = (0usize, 0.0, 0.0);
    for (a, b) in pairs.clone() {
        n += 1;
        sa += a;
        sb += b;
    }
    if n < 2 {
        return (0.0, n);
    }
    let (ma, mb) = (sa / n as f64, sb / n as f64);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (a, b) in pairs {
        cov += (a - ma) * (b - mb);
        va += (a - ma) * (a - ma);
        vb += (b - mb) * (b - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        // A constant sequence is perfectly dependent on itself.
        return (if va == vb { 1.0 } else { 0.0 }, n);
    }
    (cov / (va * vb).sqrt(), n)
}

pub fn check_collapse(z: &LatentTensor) -> Result<CollapseReport> {
    check_collapse_with(z, Gates::default())
}

/// Mean, variance and independence statistics of a carrier.
///
/// Independence is judged on every channel pair and on lag-1 horizontal and
/// vertical neighbours, each via `|r| · √pairs` against the same gates.
pub fn check_collapse_with(z: &LatentTensor, gates: Gates) -> Result<CollapseReport> {
    let n = z.len();
    if n < MIN_ELEMENTS {
        return Err(Error::TooSmall(n));
    }
    let data = z.data();
    let mean = data.iter().sum::<f64>() / n as f64;
    let variance = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let mean_z = mean * (n as f64).sqrt();
    let var_stat = (variance - 1.0) * (n as f64 / 2.0).sqrt();

    let s = z.shape();
    let (h, w) = (s.height, s.width);
    let mut correlations = Vec::new();
    for a in 0..s.channels {
        for b in a + 1..s.channels {
            let pairs = z.channel(a).iter().copied().zip(z.channel(b).iter().copied());
            let (r, count) = pearson(pairs);
            correlations.push(Correlation { label: format!("channel_{a}_{b}"), r, pairs: count });
        }
    }
    if w > 1 {
        let horizontal = (0..s.channels).flat_map(move |c| {
            (0..h).flat_map(move |y| (0..w - 1).map(move |x| (s.index(c, y, x), s.index(c, y, x + 1))))
        });
        let (r, count) = pearson(horizontal.map(|(i, j)| (data[i], data[j])));
        correlations.push(Correlation { label: "lag1_horizontal".into(), r, pairs: count });
    }
    if h > 1 {
        let vertical = (0..s.channels).flat_map(move |c| {
            (0..h - 1).flat_map(move |y| (0..w).map(move |x| (s.index(c, y, x), s.index(c, y + 1, x))))
        });
        let (r, count) = pearson(vertical.map(|(i, j)| (data[i], data[j])));
        correlations.push(Correlation { label: "lag1_vertical".into(), r, pairs: count });
    }

    let independence_verdict = correlations
        .iter()
        .map(|c| gates.judge(c.standardized()))
        .max()
        .unwrap_or(Verdict::Pass);
    Ok(CollapseReport {
        n,
        mean,
        variance,
        mean_z,
        var_stat,
        mean_verdict: gates.judge(mean_z),
        variance_verdict: gates.judge(var_stat),
        independence_verdict,
        correlations,
    })
}

/// Equal-width histogram of `z − z′` over `[min, max]` of the differences.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorHistogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub std: f64,
    pub max_abs: f64,
}

impl ErrorHistogram {
    pub fn from_differences(diffs: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParameter("need at least one bin".into()));
        }
        if diffs.is_empty() {
            return Err(Error::Empty("differences"));
        }
        let n = diffs.len() as f64;
        let lo = diffs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = diffs.iter().sum::<f64>() / n;
        let std = (diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n).sqrt();
        let max_abs = diffs.iter().map(|d| d.abs()).fold(0.0, f64::max);
        let mut counts = vec![0usize; bins];
        let width = (hi - lo) / bins as f64;
        for &d in diffs {
            let k = if width > 0.0 { (((d - lo) / width) as usize).min(bins - 1) } else { 0 };
            counts[k] += 1;
        }
        Ok(Self { lo, hi, counts, mean, std, max_abs })
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.bin_width()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn summary_lines(&self) -> Vec<String> {
        vec![
            format!("mean={:.6e}", self.mean),
            format!("std={:.6e}", self.std),
            format!("max_abs={:.6e}", self.max_abs),
        ]
    }

    /// Two-column text: bin center, count.
    pub fn to_text(&self) -> String {
        self.counts
            .iter()
            .enumerate()
            .map(|(k, c)| format!("{:.6e} {c}\n", self.bin_center(k)))
            .collect()
    }
}

pub fn error_histogram(z: &LatentTensor, recovered: &LatentTensor, bins: usize) -> Result<ErrorHistogram> {
    recovered.expect_shape(z.shape())?;
    let diffs: Vec<f64> = z.data().iter().zip(recovered.data()).map(|(a, b)| a - b).collect();
    ErrorHistogram::from_differences(&diffs, bins)
}
