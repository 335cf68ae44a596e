use std::fmt::Write as _;
use std::path::Path;

use super::Dataset;
use crate::error::{MsvddError, Result};
use crate::scalar::Scalar;

/// Parses libSVM text (`label idx:val ...`, 1-based indices) with strictly
/// increasing indices required.
pub fn parse_libsvm<T: Scalar>(text: &str) -> Result<Dataset<T>> {
    parse_libsvm_with(text, true)
}

/// As [`parse_libsvm`]; with `strict = false` indices may appear in any
/// order (duplicates are still rejected).
pub fn parse_libsvm_with<T: Scalar>(text: &str, strict: bool) -> Result<Dataset<T>> {
    let mut rows: Vec<Vec<(usize, T)>> = Vec::new();
    let mut classes = Vec::new();
    let mut dim = 0;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let bad = |m: String| MsvddError::Parse { line, message: m };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("nonempty line");
        classes.push(parse_class(label_tok).ok_or_else(|| bad(format!("invalid label {label_tok:?}")))?);
        let mut feats: Vec<(usize, T)> = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| bad(format!("expected index:value, found {tok:?}")))?;
            let idx: usize = idx.parse().map_err(|_| bad(format!("invalid index {idx:?}")))?;
            if idx == 0 {
                return Err(bad("indices are 1-based".into()));
            }
            let val: f64 = val.parse().map_err(|_| bad(format!("invalid value {val:?}")))?;
            if !val.is_finite() {
                return Err(bad(format!("non-finite value {val}")));
            }
            if strict {
                if let Some(&(prev, _)) = feats.last() {
                    if idx <= prev {
                        return Err(bad(format!("index {idx} does not increase after {prev}")));
                    }
                }
            }
            feats.push((idx, T::lit(val)));
        }
        if !strict {
            feats.sort_by_key(|&(i, _)| i);
            if let Some(w) = feats.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(bad(format!("duplicate index {}", w[0].0)));
            }
        }
        dim = dim.max(feats.last().map_or(0, |&(i, _)| i));
        rows.push(feats);
    }
    let points = rows
        .into_iter()
        .map(|feats| {
            let mut x = vec![T::zero(); dim];
            for (i, v) in feats {
                x[i - 1] = v;
            }
            x
        })
        .collect();
    Ok(Dataset {
        points,
        labels: None,
        split: None,
        classes: Some(classes),
        provenance: "libsvm".into(),
    })
}

fn parse_class(tok: &str) -> Option<i64> {
    if let Ok(v) = tok.trim_start_matches('+').parse::<i64>() {
        return Some(v);
    }
    let v: f64 = tok.parse().ok()?;
    (v.fract() == 0.0 && v.abs() < 9e15).then_some(v as i64)
}

pub fn read_libsvm<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let mut ds = parse_libsvm(&std::fs::read_to_string(path)?)?;
    ds.provenance = format!("libsvm:{}", path.display());
    Ok(ds)
}

/// Serializes nonzero entries in libSVM form. Rows without class labels
/// are written with label 0.
pub fn to_libsvm<T: Scalar>(ds: &Dataset<T>) -> String {
    let mut out = String::new();
    for (i, x) in ds.points.iter().enumerate() {
        let class = ds.classes.as_ref().map_or(0, |c| c[i]);
        let _ = write!(out, "{class}");
        for (j, v) in x.iter().enumerate() {
            if *v != T::zero() {
                let _ = write!(out, " {}:{}", j + 1, v);
            }
        }
        out.push('\n');
    }
    out
}
