//! Decision rule, anomaly scores and AUC-ROC.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{MsvddError, Result};
use crate::kernel::{check_points, eval_unchecked, KernelSpec};
use crate::multisphere::MsvddSolution;
use crate::scalar::Scalar;
use crate::svdd::SvddSolution;

/// Points scoring at most this are regular.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Regular,
    Outlier,
}

/// One sphere expressed over its support: `sum_a alpha_a phi(x_a)` and `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct SphereModel<T> {
    /// Indices into the training points.
    pub support: Vec<usize>,
    pub alpha: Vec<T>,
    pub radius_sq: T,
    /// `alpha^T K alpha` over the support.
    pub center_norm_sq: T,
}

/// Trained multisphere rule with the training points it refers to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct DetectionModel<T> {
    pub kernel: KernelSpec<T>,
    pub train: Vec<Vec<T>>,
    pub spheres: Vec<SphereModel<T>>,
}

impl<T: Scalar> DetectionModel<T> {
    pub fn new(kernel: KernelSpec<T>, train: Vec<Vec<T>>, spheres: &[SvddSolution<T>]) -> Result<Self> {
        kernel.validate()?;
        check_points(&train)?;
        let n = train.len();
        let mut out = Vec::with_capacity(spheres.len());
        for s in spheres {
            if s.members.iter().any(|&i| i >= n) || s.members.len() != s.alpha.len() {
                return Err(MsvddError::input("sphere refers to points outside the training set"));
            }
            let (support, alpha): (Vec<usize>, Vec<T>) = s
                .members
                .iter()
                .zip(&s.alpha)
                .filter(|(_, &a)| a != T::zero())
                .map(|(&i, &a)| (i, a))
                .unzip();
            let mut norm = T::zero();
            for (a, &i) in alpha.iter().zip(&support) {
                for (b, &k) in alpha.iter().zip(&support) {
                    norm += *a * *b * eval_unchecked(&kernel, &train[i], &train[k]);
                }
            }
            out.push(SphereModel {
                support,
                alpha,
                radius_sq: s.radius_sq,
                center_norm_sq: norm,
            });
        }
        if out.is_empty() {
            return Err(MsvddError::input("model needs at least one sphere"));
        }
        Ok(Self {
            kernel,
            train,
            spheres: out,
        })
    }

    pub fn from_solution(kernel: KernelSpec<T>, train: Vec<Vec<T>>, solution: &MsvddSolution<T>) -> Result<Self> {
        Self::new(kernel, train, &solution.spheres)
    }

    pub fn dim(&self) -> usize {
        self.train.first().map_or(0, Vec::len)
    }

    fn check(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(MsvddError::input(format!(
                "point has dimension {}, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `d_j^2(x) - R_j` for every sphere.
    pub fn excesses(&self, x: &[T]) -> Result<Vec<T>> {
        self.check(x)?;
        let kxx = eval_unchecked(&self.kernel, x, x);
        Ok(self
            .spheres
            .iter()
            .map(|s| {
                let cross = s.support.iter().zip(&s.alpha).fold(T::zero(), |acc, (&i, &a)| {
                    acc + a * eval_unchecked(&self.kernel, x, &self.train[i])
                });
                kxx - T::lit(2.0) * cross + s.center_norm_sq - s.radius_sq
            })
            .collect())
    }

    /// Center coordinates of each sphere for the linear kernel.
    pub fn linear_centers(&self) -> Option<Vec<Vec<T>>> {
        if !self.kernel.is_linear() {
            return None;
        }
        Some(
            self.spheres
                .iter()
                .map(|s| {
                    let mut c = vec![T::zero(); self.dim()];
                    for (&i, &a) in s.support.iter().zip(&s.alpha) {
                        for (ck, &xk) in c.iter_mut().zip(&self.train[i]) {
                            *ck += a * xk;
                        }
                    }
                    c
                })
                .collect(),
        )
    }
}

/// `min_j (d_j^2(x) - R_j)`; nonpositive inside some sphere.
pub fn anomaly_score<T: Scalar>(model: &DetectionModel<T>, x: &[T]) -> Result<T> {
    Ok(model.excesses(x)?.into_iter().fold(T::infinity(), T::min))
}

pub fn anomaly_scores<T: Scalar>(model: &DetectionModel<T>, xs: &[Vec<T>]) -> Result<Vec<T>> {
    xs.iter().map(|x| anomaly_score(model, x)).collect()
}

pub fn decide<T: Scalar>(score: T) -> Decision {
    if score <= T::lit(BOUNDARY_TOLERANCE) {
        Decision::Regular
    } else {
        Decision::Outlier
    }
}

pub fn classify<T: Scalar>(model: &DetectionModel<T>, x: &[T]) -> Result<Decision> {
    anomaly_score(model, x).map(decide)
}

/// Score of the same rule computed from explicit centers:
/// `min_j (||x - c_j||^2 - R_j)`.
pub fn euclidean_score<T: Scalar>(centers: &[Vec<T>], radii_sq: &[T], x: &[T]) -> Result<T> {
    if centers.len() != radii_sq.len() || centers.is_empty() {
        return Err(MsvddError::input("need one radius per center"));
    }
    let mut best = T::infinity();
    for (c, &r) in centers.iter().zip(radii_sq) {
        if c.len() != x.len() {
            return Err(MsvddError::input("point and center dimensions differ"));
        }
        let d: T = c.iter().zip(x).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
        best = best.min(d - r);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    pub auc: f64,
    /// Starts at (0, 0) with threshold `+inf` and ends at (1, 1).
    pub curve: Vec<RocPoint>,
}

impl RocResult {
    /// Trapezoidal area under the emitted curve.
    pub fn trapezoid_area(&self) -> f64 {
        self.curve
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }

    /// CSV with columns `threshold,fpr,tpr`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["threshold", "fpr", "tpr"])?;
        for p in &self.curve {
            w.serialize((p.threshold, p.fpr, p.tpr))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mann-Whitney AUC with average ranks for ties; outliers are the positive
/// class and are expected to score higher.
pub fn auc_roc<T: Scalar>(scores: &[T], labels: &[Label]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(MsvddError::input("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MsvddError::input("scores contain NaN"));
    }
    let pos = labels.iter().filter(|l| l.is_outlier()).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MsvddError::UndefinedMetric(
            "AUC needs both regular and outlier labels".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("no NaN"));

    // Ascending pass: average ranks over tie groups.
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        let avg = (start + end) as f64 / 2.0 + 1.0;
        let p = order[start..=end].iter().filter(|&&i| labels[i].is_outlier()).count();
        rank_sum_pos += avg * p as f64;
        start = end + 1;
    }
    let (pf, nf) = (pos as f64, neg as f64);
    let auc = (rank_sum_pos - pf * (pf + 1.0) / 2.0) / (pf * nf);

    // Descending thresholds for the curve; one point per distinct score.
    let mut curve = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = order.len();
    while k > 0 {
        let s = scores[order[k - 1]];
        while k > 0 && scores[order[k - 1]] == s {
            if labels[order[k - 1]].is_outlier() {
                tp += 1;
            } else {
                fp += 1;
            }
            k -= 1;
        }
        curve.push(RocPoint {
            threshold: s.as_f64(),
            fpr: fp as f64 / nf,
            tpr: tp as f64 / pf,
        });
    }
    Ok(RocResult { auc, curve })
}
