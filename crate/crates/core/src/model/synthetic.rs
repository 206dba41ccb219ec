use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::data::{Dataset, SparseVector};
use super::loss::LossKind;
use crate::error::ModelError;

/// Gaussian design with a planted coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_features: usize,
    pub n_samples: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub kind: LossKind,
    /// Fraction of planted coefficients that are nonzero.
    pub density: f64,
    /// Probability of flipping each classification label.
    pub label_flip: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_features: 20,
            n_samples: 300,
            noise_std: 0.1,
            seed: 0,
            kind: LossKind::LinearRegression,
            density: 0.5,
            label_flip: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub truth: DVector<f64>,
}

pub fn synthetic_dataset(cfg: &SyntheticConfig) -> Result<SyntheticData, ModelError> {
    if cfg.n_features == 0 || cfg.n_samples == 0 {
        return Err(ModelError::Invalid("synthetic data needs n_features, n_samples >= 1".into()));
    }
    if !(cfg.noise_std >= 0.0) || !(0.0..=1.0).contains(&cfg.density) || !(0.0..=1.0).contains(&cfg.label_flip) {
        return Err(ModelError::Invalid(format!(
            "noise_std {} must be >= 0; density {} and label_flip {} must lie in [0, 1]",
            cfg.noise_std, cfg.density, cfg.label_flip
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let truth = DVector::from_fn(cfg.n_features, |_, _| {
        let t: f64 = StandardNormal.sample(&mut rng);
        if rng.random::<f64>() < cfg.density { t } else { 0.0 }
    });

    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut labels = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let row: Vec<f64> = (0..cfg.n_features).map(|_| StandardNormal.sample(&mut rng)).collect();
        let clean: f64 = row.iter().zip(truth.iter()).map(|(a, t)| a * t).sum();
        let noise: f64 = StandardNormal.sample(&mut rng);
        let y = clean + cfg.noise_std * noise;
        let label = match cfg.kind {
            LossKind::LinearRegression => y,
            LossKind::LogisticRegression => {
                let b = if y >= 0.0 { 1.0 } else { -1.0 };
                if rng.random::<f64>() < cfg.label_flip { -b } else { b }
            }
        };
        samples.push(SparseVector::from_dense(&row));
        labels.push(label);
    }
    let dataset = Dataset::new(samples, labels, cfg.n_features)?;
    Ok(SyntheticData { dataset, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_shaped() {
        let cfg = SyntheticConfig { n_features: 5, n_samples: 12, seed: 3, ..Default::default() };
        let a = synthetic_dataset(&cfg).unwrap();
        assert_eq!(a, synthetic_dataset(&cfg).unwrap());
        assert_eq!(a.dataset.n_samples(), 12);
        assert_eq!(a.dataset.n_features, 5);
    }

    #[test]
    fn logistic_labels_are_binary() {
        let cfg = SyntheticConfig {
            kind: LossKind::LogisticRegression,
            label_flip: 0.2,
            ..Default::default()
        };
        synthetic_dataset(&cfg).unwrap().dataset.check_binary_labels().unwrap();
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SyntheticConfig { noise_std: -1.0, ..Default::default() };
        assert!(synthetic_dataset(&cfg).is_err());
    }
}
