use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Label, Split};
use crate::error::{MsvddError, Result};
use crate::scalar::Scalar;

/// Centers of the two regular clusters.
pub const CLUSTER_CENTERS: [[f64; 2]; 2] = [[-2.0, -2.0], [2.0, 2.0]];

/// Two planar Gaussian clusters plus anomalies in an annulus of radius
/// `[3 sigma_k, 5 sigma_k]` around a randomly chosen cluster `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Fraction of each split replaced by anomalies.
    pub noise_level: f64,
    #[serde(default = "default_sigmas")]
    pub cluster_sigmas: (f64, f64),
    #[serde(default)]
    pub seed: u64,
}

fn default_sigmas() -> (f64, f64) {
    (0.5, 0.6)
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_train: 100,
            n_val: 66,
            n_test: 166,
            noise_level: 0.1,
            cluster_sigmas: default_sigmas(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(MsvddError::input("split sizes must be positive"));
        }
        if !(self.noise_level > 0.0 && self.noise_level < 0.5) {
            return Err(MsvddError::input(format!(
                "noise level must lie in (0, 0.5), got {}",
                self.noise_level
            )));
        }
        let (a, b) = self.cluster_sigmas;
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(MsvddError::input("cluster standard deviations must be positive"));
        }
        Ok(())
    }

    pub fn sigma(&self, k: usize) -> f64 {
        if k == 0 {
            self.cluster_sigmas.0
        } else {
            self.cluster_sigmas.1
        }
    }

    /// Anomalies in a split of `count` points.
    pub fn outliers_in(&self, count: usize) -> usize {
        (self.noise_level * count as f64).round() as usize
    }
}

/// Generates the train, validation and test splits, in that order.
pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<Dataset<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    for (split, count) in [
        (Split::Train, spec.n_train),
        (Split::Validation, spec.n_val),
        (Split::Test, spec.n_test),
    ] {
        let outliers = spec.outliers_in(count);
        let mut rows: Vec<(Vec<f64>, Label)> = Vec::with_capacity(count);
        for i in 0..count - outliers {
            let k = i % 2;
            let normal = Normal::new(0.0, spec.sigma(k)).expect("positive sigma");
            let c = CLUSTER_CENTERS[k];
            rows.push((
                vec![c[0] + normal.sample(&mut rng), c[1] + normal.sample(&mut rng)],
                Label::Regular,
            ));
        }
        for _ in 0..outliers {
            let k = rng.gen_range(0..2);
            let s = spec.sigma(k);
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let radius = rng.gen_range(3.0 * s..=5.0 * s);
            let c = CLUSTER_CENTERS[k];
            rows.push((
                vec![c[0] + radius * angle.cos(), c[1] + radius * angle.sin()],
                Label::Outlier,
            ));
        }
        rows.shuffle(&mut rng);
        for (x, l) in rows {
            points.push(x.into_iter().map(T::lit).collect());
            labels.push(l);
            splits.push(split);
        }
    }
    Ok(Dataset {
        points,
        labels: Some(labels),
        split: Some(splits),
        classes: None,
        provenance: serde_json::to_string(spec)?,
    })
}
