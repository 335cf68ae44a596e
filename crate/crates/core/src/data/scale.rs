use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{MsvddError, Result};
use crate::scalar::Scalar;

/// Per-feature affine map sending the training range `[min, max]` to
/// `[-1, 1]`. Constant features map to 0. Values outside the training range
/// are extrapolated, not clipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct UnitBoxScaler<T> {
    pub min: Vec<T>,
    pub max: Vec<T>,
}

impl<T: Scalar> UnitBoxScaler<T> {
    pub fn fit(points: &[Vec<T>]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| MsvddError::input("cannot fit a scaler on an empty training set"))?;
        let mut min = first.clone();
        let mut max = first.clone();
        for x in points {
            if x.len() != min.len() {
                return Err(MsvddError::input("points have inconsistent dimensions"));
            }
            for (k, &v) in x.iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let two = T::lit(2.0);
        x.iter()
            .enumerate()
            .map(|(k, &v)| {
                let span = self.max[k] - self.min[k];
                if span > T::zero() {
                    two * ((v - self.min[k]) / span) - T::one()
                } else {
                    T::zero()
                }
            })
            .collect()
    }

    pub fn transform(&self, ds: &Dataset<T>) -> Result<Dataset<T>> {
        if !ds.is_empty() && ds.dim() != self.min.len() {
            return Err(MsvddError::input(format!(
                "dataset has dimension {}, scaler expects {}",
                ds.dim(),
                self.min.len()
            )));
        }
        let mut out = ds.clone();
        out.points = ds.points.iter().map(|x| self.apply(x)).collect();
        Ok(out)
    }
}

/// Fits the scaler on `train` and applies it to `train` and every dataset in
/// `others`.
pub fn scale_to_unit_box<T: Scalar>(
    train: &Dataset<T>,
    others: &[&Dataset<T>],
) -> Result<(Dataset<T>, Vec<Dataset<T>>, UnitBoxScaler<T>)> {
    let scaler = UnitBoxScaler::fit(&train.points)?;
    let scaled_train = scaler.transform(train)?;
    let rest = others.iter().map(|d| scaler.transform(d)).collect::<Result<Vec<_>>>()?;
    Ok((scaled_train, rest, scaler))
}
