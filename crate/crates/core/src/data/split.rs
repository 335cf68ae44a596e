use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Label, Split};
use crate::error::{MsvddError, Result};
use crate::scalar::Scalar;

/// Where the anomalies of a real-data split come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalySource {
    /// Points of these raw classes.
    Classes(Vec<i64>),
    /// Uniform draws from the bounding box of the regular points (class 0).
    UniformBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealProtocol {
    pub regular: Vec<i64>,
    pub anomalies: AnomalySource,
}

impl RealProtocol {
    /// All three classes regular; anomalies drawn uniformly in the data box.
    pub fn iris() -> Self {
        Self {
            regular: vec![1, 2, 3],
            anomalies: AnomalySource::UniformBox,
        }
    }

    pub fn ionosphere() -> Self {
        Self {
            regular: vec![1],
            anomalies: AnomalySource::Classes(vec![-1]),
        }
    }

    pub fn segment() -> Self {
        Self {
            regular: vec![1, 2, 3],
            anomalies: AnomalySource::Classes(vec![4, 5, 6, 7]),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "iris" => Some(Self::iris()),
            "ionosphere" => Some(Self::ionosphere()),
            "segment" => Some(Self::segment()),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.regular.is_empty() {
            return Err(MsvddError::input("protocol needs at least one regular class"));
        }
        if let AnomalySource::Classes(a) = &self.anomalies {
            if a.is_empty() {
                return Err(MsvddError::input("protocol needs at least one anomaly class"));
            }
            if a.iter().any(|c| self.regular.contains(c)) {
                return Err(MsvddError::input("anomaly classes overlap the regular classes"));
            }
        }
        Ok(())
    }
}

/// Sizes `(round(f0 n), round(f1 n), rest)`.
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(*f >= 0.0)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(MsvddError::input(format!(
            "split fractions must be nonnegative and sum to 1, got ({a}, {b}, {c})"
        )));
    }
    let train = (a * n as f64).round() as usize;
    let val = ((b * n as f64).round() as usize).min(n - train.min(n));
    Ok((train.min(n), val, n - train.min(n) - val))
}

/// Splits the regular classes into train/validation/test and appends
/// anomalies to each split so that they make up `anomaly_fraction` of it
/// (`round(f s / (1 - f))` anomalies for `s` regular points).
pub fn split_real<T: Scalar>(
    ds: &Dataset<T>,
    protocol: &RealProtocol,
    fractions: (f64, f64, f64),
    anomaly_fraction: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    protocol.validate()?;
    let classes = ds
        .classes
        .as_ref()
        .ok_or_else(|| MsvddError::input("dataset has no class labels"))?;
    if !(0.0..1.0).contains(&anomaly_fraction) {
        return Err(MsvddError::input(format!(
            "anomaly fraction must lie in [0, 1), got {anomaly_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut regular: Vec<usize> = (0..ds.len())
        .filter(|&i| protocol.regular.contains(&classes[i]))
        .collect();
    if regular.is_empty() {
        return Err(MsvddError::input("no points belong to the regular classes"));
    }
    regular.shuffle(&mut rng);
    let (n_train, n_val, n_test) = split_sizes(regular.len(), fractions)?;
    let per_split = |s: usize| (anomaly_fraction * s as f64 / (1.0 - anomaly_fraction)).round() as usize;
    let wanted = [per_split(n_train), per_split(n_val), per_split(n_test)];

    let mut anomaly_pool: Vec<(Vec<T>, i64)> = match &protocol.anomalies {
        AnomalySource::Classes(set) => {
            let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| set.contains(&classes[i])).collect();
            let total: usize = wanted.iter().sum();
            if idx.len() < total {
                return Err(MsvddError::input(format!(
                    "{total} anomalies requested but only {} are available",
                    idx.len()
                )));
            }
            idx.shuffle(&mut rng);
            idx.into_iter()
                .take(total)
                .map(|i| (ds.points[i].clone(), classes[i]))
                .collect()
        }
        AnomalySource::UniformBox => {
            let d = ds.dim();
            let mut lo = vec![T::infinity(); d];
            let mut hi = vec![T::neg_infinity(); d];
            for &i in &regular {
                for k in 0..d {
                    lo[k] = lo[k].min(ds.points[i][k]);
                    hi[k] = hi[k].max(ds.points[i][k]);
                }
            }
            (0..wanted.iter().sum::<usize>())
                .map(|_| {
                    let x = (0..d)
                        .map(|k| {
                            let u: f64 = rng.gen();
                            lo[k] + T::lit(u) * (hi[k] - lo[k])
                        })
                        .collect();
                    (x, 0)
                })
                .collect()
        }
    };
    anomaly_pool.reverse();

    let mut out = Dataset {
        points: Vec::new(),
        labels: Some(Vec::new()),
        split: Some(Vec::new()),
        classes: Some(Vec::new()),
        provenance: format!("{} split seed {seed}", ds.provenance),
    };
    let bounds = [0, n_train, n_train + n_val, n_train + n_val + n_test];
    for (s, split) in Split::ALL.iter().enumerate() {
        let mut push = |x: Vec<T>, class: i64, label: Label| {
            out.points.push(x);
            out.classes.as_mut().expect("set").push(class);
            out.labels.as_mut().expect("set").push(label);
            out.split.as_mut().expect("set").push(*split);
        };
        for &i in &regular[bounds[s]..bounds[s + 1]] {
            push(ds.points[i].clone(), classes[i], Label::Regular);
        }
        for _ in 0..wanted[s] {
            let (x, c) = anomaly_pool.pop().expect("pool sized to demand");
            push(x, c, Label::Outlier);
        }
    }
    Ok(out)
}
