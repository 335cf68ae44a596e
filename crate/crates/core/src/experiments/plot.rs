use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ensure_dir, mean_std, CvReport, GapReport, Instance, Model, RunRecord};
use crate::detection::DetectionModel;
use crate::error::Result;
use crate::kernel::KernelSpec;
use crate::multisphere::{MsvddSolution, SolveStatus};

/// Inputs for the CSV bundle; absent parts are skipped.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlotInputs<'a> {
    /// Instance, kernel and trained solution for the scatter/sphere files.
    pub scatter: Option<(&'a Instance, KernelSpec<f64>, &'a MsvddSolution<f64>)>,
    pub cv: Option<&'a CvReport>,
    pub gap: Option<&'a GapReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub model: Model,
    pub time_s: f64,
    /// Fraction of the model's runs solved within `time_s`.
    pub fraction: f64,
}

/// Solve-time performance profile: for each model, the fraction of runs
/// that finished (without error or time limit) within each observed time.
pub fn performance_profile(runs: &[RunRecord]) -> Vec<ProfilePoint> {
    let mut by_model: BTreeMap<Model, (usize, Vec<f64>)> = BTreeMap::new();
    for r in runs {
        let entry = by_model.entry(r.model).or_default();
        entry.0 += 1;
        let finished = r.error.is_none() && r.status != Some(SolveStatus::TimeLimitIncumbent);
        if finished {
            entry.1.push(r.elapsed);
        }
    }
    let mut out = Vec::new();
    for (model, (total, mut times)) in by_model {
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        for (k, t) in times.iter().enumerate() {
            out.push(ProfilePoint {
                model,
                time_s: *t,
                fraction: (k + 1) as f64 / total as f64,
            });
        }
    }
    out
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Writes the plot-ready CSV files into `dir` and returns their paths:
/// `scatter.csv` and `spheres.csv` (data and fitted spheres),
/// `performance_profile.csv`, `auc_curve.csv` (one row per model, anomaly
/// level, p, kernel and parameter) and `gap_auc.csv`.
pub fn emit_plot_data(inputs: &PlotInputs<'_>, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();

    if let Some((inst, kernel, sol)) = inputs.scatter {
        let d = inst.train.dim();
        let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        header.extend(strings(&["label", "split", "sphere"]));
        let mut rows = Vec::new();
        let sphere_of = &sol.assignment.sphere_of;
        for (name, ds) in [
            ("train", &inst.train),
            ("validation", &inst.validation),
            ("test", &inst.test),
        ] {
            for (i, x) in ds.points.iter().enumerate() {
                let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
                let label = ds
                    .labels
                    .as_ref()
                    .map_or("", |l| if l[i].is_outlier() { "outlier" } else { "regular" });
                row.push(label.to_string());
                row.push(name.to_string());
                let sphere = if name == "train" {
                    sphere_of
                        .get(i)
                        .copied()
                        .flatten()
                        .map_or(String::new(), |j| j.to_string())
                } else {
                    String::new()
                };
                row.push(sphere);
                rows.push(row);
            }
        }
        let path = dir.join("scatter.csv");
        write_rows(&path, &header, &rows)?;
        written.push(path);

        let model = DetectionModel::from_solution(kernel, inst.train.points.clone(), sol)?;
        let centers = model.linear_centers();
        let mut header = strings(&["sphere", "radius_sq", "members", "support"]);
        header.extend((1..=d).map(|k| format!("c{k}")));
        let mut rows = Vec::new();
        for (j, s) in model.spheres.iter().enumerate() {
            let support = s
                .support
                .iter()
                .zip(&s.alpha)
                .map(|(i, a)| format!("{i}:{a}"))
                .collect::<Vec<_>>()
                .join(";");
            let mut row = vec![
                j.to_string(),
                s.radius_sq.to_string(),
                sol.spheres[j].members.len().to_string(),
                support,
            ];
            match &centers {
                Some(c) => row.extend(c[j].iter().map(|v| v.to_string())),
                None => row.extend((0..d).map(|_| String::new())),
            }
            rows.push(row);
        }
        let path = dir.join("spheres.csv");
        write_rows(&path, &header, &rows)?;
        written.push(path);
    }

    if let Some(cv) = inputs.cv {
        let rows: Vec<Vec<String>> = performance_profile(&cv.runs)
            .into_iter()
            .map(|p| vec![p.model.name().to_string(), p.time_s.to_string(), p.fraction.to_string()])
            .collect();
        let path = dir.join("performance_profile.csv");
        write_rows(&path, &strings(&["model", "time_s", "fraction"]), &rows)?;
        written.push(path);

        let mut groups: BTreeMap<(Model, usize, usize, usize, usize), Vec<&RunRecord>> = BTreeMap::new();
        let cfg = &cv.config;
        let pos = |v: f64, grid: &[f64]| grid.iter().position(|&g| g == v).unwrap_or(usize::MAX);
        for r in &cv.runs {
            let params = match r.model {
                Model::Exact => &cfg.c_grid,
                Model::Heuristic => &cfg.nu_grid,
            };
            let key = (
                r.model,
                pos(r.anomaly, &cfg.anomaly_levels),
                cfg.p_grid.iter().position(|&p| p == r.p).unwrap_or(usize::MAX),
                cfg.kernels.iter().position(|k| *k == r.kernel).unwrap_or(usize::MAX),
                pos(r.param, params),
            );
            groups.entry(key).or_default().push(r);
        }
        let mut rows = Vec::new();
        for runs in groups.values() {
            let first = runs[0];
            let val: Vec<f64> = runs.iter().filter_map(|r| r.val_auc).collect();
            let test: Vec<f64> = runs.iter().filter_map(|r| r.test_auc).collect();
            let fmt = |v: f64| if v.is_nan() { String::new() } else { v.to_string() };
            rows.push(vec![
                first.model.name().to_string(),
                first.anomaly.to_string(),
                first.p.to_string(),
                first.kernel.label(),
                first.param.to_string(),
                fmt(mean_std(&val).0),
                fmt(mean_std(&test).0),
                fmt(mean_std(&test).1),
                test.len().to_string(),
            ]);
        }
        let path = dir.join("auc_curve.csv");
        write_rows(
            &path,
            &strings(&[
                "model",
                "anomaly",
                "p",
                "kernel",
                "param",
                "val_auc_mean",
                "test_auc_mean",
                "test_auc_std",
                "n",
            ]),
            &rows,
        )?;
        written.push(path);
    }

    if let Some(gap) = inputs.gap {
        let rows: Vec<Vec<String>> = gap
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.run_id.clone(),
                    r.incumbent.to_string(),
                    r.gap.to_string(),
                    r.test_auc.map_or(String::new(), |v| v.to_string()),
                    r.bound_reference.to_string(),
                ]
            })
            .collect();
        let path = dir.join("gap_auc.csv");
        write_rows(
            &path,
            &strings(&["run_id", "incumbent", "gap", "test_auc", "bound_reference"]),
            &rows,
        )?;
        written.push(path);
    }
    Ok(written)
}
