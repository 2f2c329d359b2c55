//! Evaluation metrics: message accuracy, steganalysis detection error,
//! Fréchet distance between feature sets, and payload size in bpp.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::message::Message;
use crate::tensor::LatentTensor;

/// Number of positions where the two bit strings differ.
pub fn hamming(a: &[u8], b: &[u8]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// `1 − hamming(m, m′) / len(m)`.
pub fn accuracy(m: &[u8], recovered: &[u8]) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::Empty("message"));
    }
    Ok(1.0 - hamming(m, recovered)? as f64 / m.len() as f64)
}

pub fn bits_per_pixel(m: &Message) -> f64 {
    m.bpp()
}

/// Steganalyzer outputs; higher means "more likely stego".
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub stego: Vec<f64>,
    pub cover: Vec<f64>,
}

impl ScoreSet {
    pub fn new(stego: Vec<f64>, cover: Vec<f64>) -> Result<Self> {
        if stego.is_empty() {
            return Err(Error::Empty("stego scores"));
        }
        if cover.is_empty() {
            return Err(Error::Empty("cover scores"));
        }
        if stego.iter().chain(&cover).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("scores must be finite".into()));
        }
        Ok(Self { stego, cover })
    }
}

/// `min_t ½ (P_FA(t) + P_MD(t))` over every threshold at a score value (and
/// the trivial all-cover threshold), for both orientations of the rule.
pub fn detection_error(s: &ScoreSet) -> Result<f64> {
    if s.stego.is_empty() || s.cover.is_empty() {
        return Err(Error::Empty("score set"));
    }
    let mut stego = s.stego.clone();
    let mut cover = s.cover.clone();
    stego.sort_by(f64::total_cmp);
    cover.sort_by(f64::total_cmp);
    let (ns, nc) = (stego.len() as f64, cover.len() as f64);

    let mut thresholds: Vec<f64> = stego.iter().chain(&cover).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    // Predicting nothing as stego (or everything, flipped) scores exactly ½.
    let mut best: f64 = 0.5;
    for &t in &thresholds {
        let stego_below = stego.partition_point(|&v| v < t) as f64;
        let cover_below = cover.partition_point(|&v| v < t) as f64;
        let stego_le = stego.partition_point(|&v| v <= t) as f64;
        let cover_le = cover.partition_point(|&v| v <= t) as f64;

        // stego iff score >= t
        let upper = 0.5 * ((nc - cover_below) / nc + stego_below / ns);
        // stego iff score <= t
        let lower = 0.5 * (cover_le / nc + (ns - stego_le) / ns);
        best = best.min(upper).min(lower);
    }
    Ok(best)
}

/// `n × d` feature matrix, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureSet {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rows * dim != data.len() {
            return Err(Error::LengthMismatch { left: rows * dim, right: data.len() });
        }
        if dim == 0 {
            return Err(Error::Empty("feature dimension"));
        }
        if rows < dim + 1 {
            return Err(Error::InvalidParameter(format!(
                "{rows} samples cannot estimate a {dim}-dimensional covariance"
            )));
        }
        Ok(Self { rows, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidShape("ragged feature rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for i in 0..self.rows {
            for (j, v) in self.row(i).iter().enumerate() {
                m[j] += v;
            }
        }
        m / self.rows as f64
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let centered = DMatrix::from_fn(self.rows, self.dim, |i, j| self.data[i * self.dim + j] - mean[j]);
        (centered.transpose() * &centered) / (self.rows as f64 - 1.0)
    }
}

/// Symmetric PSD square root by eigendecomposition; negative eigenvalues
/// (round-off) are clipped to zero.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `‖μ_a − μ_b‖² + Tr(Σ_a + Σ_b − 2 (Σ_a Σ_b)^{½})`.
///
/// The trace of the cross term is `Σ √λ` over the eigenvalues of the
/// symmetric matrix `Σ_a^{½} Σ_b Σ_a^{½}`.
pub fn frechet_distance(a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::ShapeMismatch { expected: vec![a.dim], actual: vec![b.dim] });
    }
    let diff = a.mean() - b.mean();
    let (ca, cb) = (a.covariance(), b.covariance());
    let root_a = psd_sqrt(&ca);
    let inner = &root_a * &cb * &root_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    // Round-off leaves eigenvalues of order -1e-10 * trace; they count as zero.
    let cross: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum();
    Ok((diff.norm_squared() + ca.trace() + cb.trace() - 2.0 * cross).max(0.0))
}

/// Number of hand features per channel.
pub const FEATURES_PER_CHANNEL: usize = 5;

/// Per channel: mean, variance, lag-1 horizontal and vertical
/// autocorrelation, and mean squared 4-neighbour Laplacian residual.
pub fn image_features(x: &LatentTensor) -> Vec<f64> {
    let s = x.shape();
    let (h, w) = (s.height, s.width);
    let mut out = Vec::with_capacity(s.channels * FEATURES_PER_CHANNEL);
    for c in 0..s.channels {
        let p = x.channel(c);
        let n = p.len() as f64;
        let mean = p.iter().sum::<f64>() / n;
        let var = p.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let lag = |dx: usize, dy: usize| {
            if var <= 0.0 || dx >= w || dy >= h {
                return 0.0;
            }
            let mut acc = 0.0;
            let mut count = 0usize;
            for y in 0..h - dy {
                for xx in 0..w - dx {
                    acc += (p[y * w + xx] - mean) * (p[(y + dy) * w + xx + dx] - mean);
                    count += 1;
                }
            }
            acc / count as f64 / var
        };
        let mut residual = 0.0;
        let mut count = 0usize;
        for y in 1..h.saturating_sub(1) {
            for xx in 1..w.saturating_sub(1) {
                let i = y * w + xx;
                let r = 4.0 * p[i] - p[i - 1] - p[i + 1] - p[i - w] - p[i + w];
                residual += r * r;
                count += 1;
            }
        }
        let residual = if count > 0 { residual / count as f64 } else { 0.0 };
        out.extend([mean, var, lag(1, 0), lag(0, 1), residual]);
    }
    out
}

/// Fisher linear discriminant over [`image_features`].
#[derive(Debug, Clone)]
pub struct LinearSteganalyzer {
    weights: DVector<f64>,
    offset: f64,
}

pub const MIN_TRAINING_IMAGES: usize = 20;

impl LinearSteganalyzer {
    pub fn train(stego: &[LatentTensor], cover: &[LatentTensor]) -> Result<Self> {
        if stego.len() < MIN_TRAINING_IMAGES || cover.len() < MIN_TRAINING_IMAGES {
            return Err(Error::InvalidParameter(format!(
                "need at least {MIN_TRAINING_IMAGES} images per class, got {} stego and {} cover",
                stego.len(),
                cover.len()
            )));
        }
        let fs: Vec<Vec<f64>> = stego.iter().map(image_features).collect();
        let fc: Vec<Vec<f64>> = cover.iter().map(image_features).collect();
        let dim = fs[0].len();
        let mean_of = |rows: &[Vec<f64>]| {
            let mut m = DVector::zeros(dim);
            for r in rows {
                m += DVector::from_column_slice(r);
            }
            m / rows.len() as f64
        };
        let (ms, mc) = (mean_of(&fs), mean_of(&fc));
        let mut scatter = DMatrix::zeros(dim, dim);
        for (rows, m) in [(&fs, &ms), (&fc, &mc)] {
            for r in rows.iter() {
                let d = DVector::from_column_slice(r) - m;
                scatter += &d * d.transpose();
            }
        }
        scatter /= (fs.len() + fc.len() - 2) as f64;
        let delta = &ms - &mc;
        let weights = match scatter.clone().cholesky() {
            Some(ch) => ch.solve(&delta),
            None => {
                let ridge = 1e-6 * scatter.trace().max(f64::MIN_POSITIVE);
                let regularized = scatter + DMatrix::identity(dim, dim) * ridge;
                match regularized.clone().cholesky() {
                    Some(ch) => ch.solve(&delta),
                    None => regularized
                        .pseudo_inverse(1e-12)
                        .map_err(|e| Error::InvalidParameter(e.to_string()))?
                        * &delta,
                }
            }
        };
        let offset = -0.5 * weights.dot(&(&ms + &mc));
        Ok(Self { weights, offset })
    }

    pub fn score(&self, x: &LatentTensor) -> f64 {
        self.weights.dot(&DVector::from_vec(image_features(x))) + self.offset
    }

    pub fn score_sets(&self, stego: &[LatentTensor], cover: &[LatentTensor]) -> Result<ScoreSet> {
        ScoreSet::new(
            stego.iter().map(|x| self.score(x)).collect(),
            cover.iter().map(|x| self.score(x)).collect(),
        )
    }
}
