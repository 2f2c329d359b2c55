use noisecoder::gmm::{DESK_SEED, DESK_STDS};
use noisecoder::{GaussianMixtureModel, Purpose, ScoreModel, Shape, StegoRng};
use proptest::prelude::*;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/gmm_desk.nzt");

fn small() -> GaussianMixtureModel {
    // Wide components so that responsibilities actually vary with x.
    let shape = Shape::new(2, 3, 3).unwrap();
    let desk = GaussianMixtureModel::desk_fixture(shape, 5);
    let comps = desk
        .components()
        .iter()
        .zip([0.3, 0.5, 0.4, 0.6])
        .map(|(c, std)| noisecoder::gmm::MixtureComponent { std, ..c.clone() })
        .collect();
    GaussianMixtureModel::new(shape, comps).unwrap()
}

#[test]
fn checked_in_fixture_matches_generator() {
    let loaded = GaussianMixtureModel::load(FIXTURE).unwrap();
    let shape = Shape::new(3, 16, 16).unwrap();
    assert_eq!(loaded.shape(), shape);
    let fresh = GaussianMixtureModel::desk_fixture(shape, DESK_SEED);
    for ((a, b), std) in loaded.components().iter().zip(fresh.components()).zip(DESK_STDS) {
        assert!((a.std - std).abs() <= 1e-6 * std);
        assert!((a.weight - 0.25).abs() <= 1e-12);
        let diff = a.mean.max_abs_diff(&b.mean).unwrap();
        assert!(diff <= 1e-7, "{diff}");
    }
    assert!(loaded.components().iter().all(|c| c.mean.data().iter().all(|m| m.abs() <= 0.6)));
}

#[test]
fn jacobian_vector_product_matches_central_differences() {
    let g = small();
    let n = g.shape().len();
    let mut rng = StegoRng::new(9, Purpose::Aux);
    let h = 1e-5;
    for probe in 0..20 {
        let sigma = [0.05, 0.3, 1.0, 4.0][probe % 4];
        let x = rng.normals(n);
        let v = rng.normals(n);
        let plus: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let minus: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        let (dp, dm) = (g.denoise_slice(&plus, sigma), g.denoise_slice(&minus, sigma));
        let fd: Vec<f64> = dp.iter().zip(&dm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        // Analytic JVP: Σγ_k a_k v + Σ γ_k (m_k − D)(∇ log γ_k · v), with
        // a_k = s_k²/(s_k²+σ²), m_k the component posterior mean and
        // ∇ log γ_k = −(x − μ_k)/(s_k²+σ²) + Σ_j γ_j (x − μ_j)/(s_j²+σ²).
        let gamma = g.responsibilities(&x, sigma);
        let d = g.denoise_slice(&x, sigma);
        let comps = g.components();
        let grad_dot: Vec<f64> = comps
            .iter()
            .map(|c| {
                let t = c.std * c.std + sigma * sigma;
                -x.iter().zip(c.mean.data()).zip(&v).map(|((xi, mi), vi)| (xi - mi) * vi).sum::<f64>() / t
            })
            .collect();
        let avg: f64 = gamma.iter().zip(&grad_dot).map(|(g, d)| g * d).sum();
        let mut jvp = vec![0.0; n];
        for ((c, gk), gd) in comps.iter().zip(&gamma).zip(&grad_dot) {
            let t = c.std * c.std + sigma * sigma;
            let a = c.std * c.std / t;
            for i in 0..n {
                let m = (c.std * c.std * x[i] + sigma * sigma * c.mean.data()[i]) / t;
                jvp[i] += gk * (a * v[i] + (m - d[i]) * (gd - avg));
            }
        }
        let scale = jvp.iter().fold(0.0f64, |m, j| m.max(j.abs())).max(1e-12);
        let err = jvp.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err / scale <= 1e-5, "probe {probe}: relative {}", err / scale);
    }
}

#[test]
fn asymptotics() {
    let g = GaussianMixtureModel::load(FIXTURE).unwrap();
    let mut rng = StegoRng::new(3, Purpose::Aux);
    let x = rng.normals(g.shape().len());
    let near = g.denoise_slice(&x, 1e-6);
    let dev = near.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(dev <= 1e-6, "small sigma deviation {dev}");
    let far = g.denoise_slice(&x, 1e6);
    let dev = far.iter().zip(g.mean()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(dev <= 1e-6, "large sigma deviation {dev}");
    assert_eq!(g.denoise_slice(&x, 0.0), x);
}

#[test]
fn no_overflow_at_sigma_max_scale() {
    let g = GaussianMixtureModel::load(FIXTURE).unwrap();
    let x = vec![400.0; g.shape().len()];
    for sigma in [80.0, 1.0, 0.002] {
        assert!(g.denoise_slice(&x, sigma).iter().all(|v| v.is_finite()));
        let r = g.responsibilities(&x, sigma);
        assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

proptest! {
    #[test]
    fn responsibilities_sum_to_one(seed in any::<u64>(), sigma in 1e-4f64..100.0, scale in 0.01f64..50.0) {
        let g = small();
        let x: Vec<f64> = StegoRng::new(seed, Purpose::Aux).normals(g.shape().len()).iter().map(|v| v * scale).collect();
        let r = g.responsibilities(&x, sigma);
        prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(r.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
}
