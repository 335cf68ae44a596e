//! Datasets: synthetic generation, libSVM input, scaling and splitting.

mod libsvm;
mod scale;
mod split;
mod synthetic;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MsvddError, Result};
use crate::scalar::Scalar;

pub use libsvm::{parse_libsvm, parse_libsvm_with, read_libsvm, to_libsvm};
pub use scale::{scale_to_unit_box, UnitBoxScaler};
pub use split::{split_real, split_sizes, AnomalySource, RealProtocol};
pub use synthetic::{generate_synthetic, SyntheticSpec, CLUSTER_CENTERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Regular,
    Outlier,
}

impl Label {
    pub fn is_outlier(self) -> bool {
        self == Label::Outlier
    }

    fn as_str(self) -> &'static str {
        match self {
            Label::Regular => "regular",
            Label::Outlier => "outlier",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "regular" => Some(Label::Regular),
            "outlier" => Some(Label::Outlier),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "validation" | "val" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Points with optional regular/outlier labels, split tags and raw class
/// labels (libSVM input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct Dataset<T> {
    pub points: Vec<Vec<T>>,
    pub labels: Option<Vec<Label>>,
    pub split: Option<Vec<Split>>,
    pub classes: Option<Vec<i64>>,
    pub provenance: String,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(points: Vec<Vec<T>>) -> Result<Self> {
        let ds = Self {
            points,
            labels: None,
            split: None,
            classes: None,
            provenance: String::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if let Some(i) = self.points.iter().position(|x| x.len() != d) {
            return Err(MsvddError::input(format!(
                "point {i} has dimension {}, expected {d}",
                self.points[i].len()
            )));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MsvddError::input("dataset contains non-finite values"));
        }
        let n = self.len();
        let ok = self.labels.as_ref().is_none_or(|v| v.len() == n)
            && self.split.as_ref().is_none_or(|v| v.len() == n)
            && self.classes.as_ref().is_none_or(|v| v.len() == n);
        if !ok {
            return Err(MsvddError::input(
                "label, split and class vectors must have one entry per point",
            ));
        }
        Ok(())
    }

    pub fn outlier_count(&self) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|x| x.is_outlier()).count())
    }

    /// Rows tagged with `split`, in order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        match &self.split {
            Some(tags) => (0..self.len()).filter(|&i| tags[i] == split).collect(),
            None => Vec::new(),
        }
    }

    pub fn select(&self, rows: &[usize]) -> Dataset<T> {
        Dataset {
            points: rows.iter().map(|&i| self.points[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| rows.iter().map(|&i| l[i]).collect()),
            split: self.split.as_ref().map(|s| rows.iter().map(|&i| s[i]).collect()),
            classes: self.classes.as_ref().map(|c| rows.iter().map(|&i| c[i]).collect()),
            provenance: self.provenance.clone(),
        }
    }

    pub fn subset(&self, split: Split) -> Dataset<T> {
        self.select(&self.indices(split))
    }

    /// Writes `x1,...,xd,label,split` rows with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim()).map(|k| format!("x{k}")).collect();
        header.push("label".into());
        header.push("split".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.points[i].iter().map(|v| v.to_string()).collect();
            row.push(self.labels.as_ref().map_or("", |l| l[i].as_str()).to_string());
            row.push(self.split.as_ref().map_or("", |s| s[i].as_str()).to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset<T>> {
        let mut r = csv::Reader::from_reader(reader);
        let d = r.headers()?.iter().filter(|h| h.starts_with('x')).count();
        let mut points = Vec::new();
        let mut labels = Vec::new();
        let mut splits = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            let bad = |m: String| MsvddError::Parse { line, message: m };
            if rec.len() != d + 2 {
                return Err(bad(format!("expected {} fields, found {}", d + 2, rec.len())));
            }
            let x = (0..d)
                .map(|j| {
                    rec[j]
                        .parse::<f64>()
                        .map(T::lit)
                        .map_err(|e| bad(format!("field {}: {e}", j + 1)))
                })
                .collect::<Result<Vec<T>>>()?;
            points.push(x);
            labels.push(match &rec[d] {
                "" => None,
                s => Some(Label::parse(s).ok_or_else(|| bad(format!("unknown label {s:?}")))?),
            });
            splits.push(match &rec[d + 1] {
                "" => None,
                s => Some(Split::parse(s).ok_or_else(|| bad(format!("unknown split {s:?}")))?),
            });
        }
        let ds = Dataset {
            points,
            labels: labels.into_iter().collect(),
            split: splits.into_iter().collect(),
            classes: None,
            provenance: "csv".into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset<T>> {
        Dataset::read_csv(std::fs::File::open(path)?)
    }
}
