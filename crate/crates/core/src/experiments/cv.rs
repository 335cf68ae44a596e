use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    ensure_dir, evaluate_auc, mean_std, run_pool, train_cell, Cell, ExperimentConfig, Instance, Model, RunSettings,
};
use crate::error::Result;
use crate::kernel::KernelSpec;
use crate::multisphere::SolveStatus;

/// One solver invocation of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub model: Model,
    pub anomaly: f64,
    pub seed: u64,
    pub p: usize,
    pub param: f64,
    pub kernel: KernelSpec<f64>,
    pub n_train: usize,
    pub status: Option<SolveStatus>,
    pub objective: Option<f64>,
    pub lower_bound: Option<f64>,
    pub node_count: usize,
    pub val_auc: Option<f64>,
    pub test_auc: Option<f64>,
    pub error: Option<String>,
    /// Wall-clock seconds of the solve.
    pub elapsed: f64,
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none() && self.val_auc.is_some() && self.test_auc.is_some()
    }
}

/// One report line: model x anomaly level x p, with the selected parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub model: Model,
    pub anomaly: f64,
    pub p: usize,
    pub kernel: Option<KernelSpec<f64>>,
    /// Selected `C` (exact) or `nu` (heuristic).
    pub param: Option<f64>,
    /// `p / (nu N)` for heuristic rows.
    pub implied_c: Option<f64>,
    pub val_auc_mean: Option<f64>,
    pub test_auc_mean: Option<f64>,
    pub test_auc_std: Option<f64>,
    pub n_seeds: usize,
    pub run_ids: Vec<String>,
    pub failed_runs: usize,
    pub winner: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub config: ExperimentConfig,
    pub rows: Vec<CvRow>,
    pub runs: Vec<RunRecord>,
}

fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for model in cfg.mode.models() {
        let params = match model {
            Model::Exact => &cfg.c_grid,
            Model::Heuristic => &cfg.nu_grid,
        };
        for &p in &cfg.p_grid {
            for &kernel in &cfg.kernels {
                for &param in params {
                    out.push(Cell {
                        model,
                        p,
                        param,
                        kernel,
                    });
                }
            }
        }
    }
    out
}

struct Job<'a> {
    run_id: String,
    anomaly: f64,
    seed: u64,
    cell: Cell,
    instance: &'a Result<Instance>,
}

fn execute(job: &Job<'_>, cfg: &ExperimentConfig) -> RunRecord {
    let mut rec = RunRecord {
        run_id: job.run_id.clone(),
        model: job.cell.model,
        anomaly: job.anomaly,
        seed: job.seed,
        p: job.cell.p,
        param: job.cell.param,
        kernel: job.cell.kernel,
        n_train: 0,
        status: None,
        objective: None,
        lower_bound: None,
        node_count: 0,
        val_auc: None,
        test_auc: None,
        error: None,
        elapsed: 0.0,
    };
    let inst = match job.instance {
        Ok(inst) => inst,
        Err(e) => {
            rec.error = Some(format!("instance: {e}"));
            return rec;
        }
    };
    rec.n_train = inst.train.len();
    let start = Instant::now();
    let solved = train_cell(&job.cell, &inst.train, &RunSettings::from_config(cfg, job.seed));
    rec.elapsed = start.elapsed().as_secs_f64();
    let sol = match solved {
        Ok(s) => s,
        Err(e) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    rec.status = Some(sol.status);
    rec.objective = Some(sol.objective);
    rec.lower_bound = Some(sol.lower_bound);
    rec.node_count = sol.node_count;
    let auc = |ds| evaluate_auc(job.cell.kernel, &inst.train, &sol, ds);
    match (auc(&inst.validation), auc(&inst.test)) {
        (Ok(v), Ok(t)) => {
            rec.val_auc = Some(v);
            rec.test_auc = Some(t);
        }
        (Err(e), _) | (_, Err(e)) => rec.error = Some(format!("evaluation: {e}")),
    }
    rec
}

/// Trains every grid cell for every anomaly level and seed, selects the
/// parameters with the best mean validation AUC per (model, anomaly level,
/// p) and reports the test AUC of that selection over the seeds.
///
/// Failed runs are recorded in the report and skipped during selection.
pub fn run_cross_validation(cfg: &ExperimentConfig) -> Result<CvReport> {
    cfg.validate()?;
    let grid = cells(cfg);
    let mut instances = Vec::new();
    for &level in &cfg.anomaly_levels {
        for &seed in &cfg.seeds {
            instances.push((level, seed, cfg.instance(level, seed)));
        }
    }
    let mut jobs = Vec::new();
    for (level, seed, inst) in &instances {
        for cell in &grid {
            jobs.push(Job {
                run_id: format!("run-{:05}", jobs.len()),
                anomaly: *level,
                seed: *seed,
                cell: *cell,
                instance: inst,
            });
        }
    }
    let runs = run_pool(&jobs, cfg.workers, |job| {
        let rec = execute(job, cfg);
        log::info!(
            "{} {} a={} seed={} p={} param={} {}: {}",
            rec.run_id,
            rec.model.name(),
            rec.anomaly,
            rec.seed,
            rec.p,
            rec.param,
            rec.kernel.label(),
            rec.error.as_deref().unwrap_or("ok")
        );
        rec
    });
    let rows = select_rows(cfg, &runs);
    Ok(CvReport {
        config: cfg.clone(),
        rows,
        runs,
    })
}

fn select_rows(cfg: &ExperimentConfig, runs: &[RunRecord]) -> Vec<CvRow> {
    let mut rows = Vec::new();
    for &level in &cfg.anomaly_levels {
        for &p in &cfg.p_grid {
            let first = rows.len();
            for model in cfg.mode.models() {
                rows.push(select_row(cfg, runs, model, level, p));
            }
            let best = rows[first..]
                .iter()
                .filter_map(|r| r.test_auc_mean)
                .fold(f64::NEG_INFINITY, f64::max);
            for r in &mut rows[first..] {
                r.winner = r.test_auc_mean == Some(best);
            }
        }
    }
    rows
}

fn select_row(cfg: &ExperimentConfig, runs: &[RunRecord], model: Model, level: f64, p: usize) -> CvRow {
    let params = match model {
        Model::Exact => &cfg.c_grid,
        Model::Heuristic => &cfg.nu_grid,
    };
    let in_row: Vec<&RunRecord> = runs
        .iter()
        .filter(|r| r.model == model && r.anomaly == level && r.p == p)
        .collect();
    let failed_runs = in_row.iter().filter(|r| !r.succeeded()).count();
    let mut best: Option<(f64, KernelSpec<f64>, f64)> = None;
    for &kernel in &cfg.kernels {
        for &param in params {
            let vals: Vec<f64> = in_row
                .iter()
                .filter(|r| r.kernel == kernel && r.param == param && r.succeeded())
                .filter_map(|r| r.val_auc)
                .collect();
            if vals.is_empty() {
                continue;
            }
            let (mean, _) = mean_std(&vals);
            if best.is_none_or(|(m, _, _)| mean > m) {
                best = Some((mean, kernel, param));
            }
        }
    }
    let Some((val_mean, kernel, param)) = best else {
        return CvRow {
            model,
            anomaly: level,
            p,
            kernel: None,
            param: None,
            implied_c: None,
            val_auc_mean: None,
            test_auc_mean: None,
            test_auc_std: None,
            n_seeds: 0,
            run_ids: Vec::new(),
            failed_runs,
            winner: false,
        };
    };
    let chosen: Vec<&&RunRecord> = in_row
        .iter()
        .filter(|r| r.kernel == kernel && r.param == param && r.succeeded())
        .collect();
    let tests: Vec<f64> = chosen.iter().filter_map(|r| r.test_auc).collect();
    let (test_mean, test_std) = mean_std(&tests);
    let implied_c = match model {
        Model::Heuristic => chosen.first().map(|r| p as f64 / (param * r.n_train as f64)),
        Model::Exact => None,
    };
    CvRow {
        model,
        anomaly: level,
        p,
        kernel: Some(kernel),
        param: Some(param),
        implied_c,
        val_auc_mean: Some(val_mean),
        test_auc_mean: Some(test_mean),
        test_auc_std: Some(test_std),
        n_seeds: tests.len(),
        run_ids: chosen.iter().map(|r| r.run_id.clone()).collect(),
        failed_runs,
        winner: false,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

impl CvReport {
    pub fn row(&self, model: Model, anomaly: f64, p: usize) -> Option<&CvRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.anomaly == anomaly && r.p == p)
    }

    /// For every seed, the successful run with the best validation AUC
    /// (earliest grid cell on ties).
    pub fn per_seed_selection(&self, model: Model, anomaly: f64, p: usize) -> Vec<&RunRecord> {
        let mut out = Vec::new();
        for &seed in &self.config.seeds {
            let best = self
                .runs
                .iter()
                .filter(|r| r.model == model && r.anomaly == anomaly && r.p == p && r.seed == seed && r.succeeded())
                .fold(None::<&RunRecord>, |acc, r| match acc {
                    Some(a) if a.val_auc >= r.val_auc => Some(a),
                    _ => Some(r),
                });
            out.extend(best);
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "model",
            "anomaly",
            "p",
            "kernel",
            "param",
            "implied_c",
            "val_auc_mean",
            "test_auc_mean",
            "test_auc_std",
            "n_seeds",
            "failed_runs",
            "winner",
            "run_ids",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.model.name().to_string(),
                r.anomaly.to_string(),
                r.p.to_string(),
                r.kernel.map_or(String::new(), |k| k.label()),
                fmt_opt(r.param),
                fmt_opt(r.implied_c),
                fmt_opt(r.val_auc_mean),
                fmt_opt(r.test_auc_mean),
                fmt_opt(r.test_auc_std),
                r.n_seeds.to_string(),
                r.failed_runs.to_string(),
                r.winner.to_string(),
                r.run_ids.join(";"),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Plain-text table, one line per row, winners marked with `*`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:>7} {:>3} {:<10} {:>8} {:>9} {:>18}",
            "model", "anomaly", "p", "kernel", "param", "implied_C", "test AUC"
        );
        for r in &self.rows {
            let auc = match (r.test_auc_mean, r.test_auc_std) {
                (Some(m), Some(sd)) => format!("{m:.4} ± {sd:.4}{}", if r.winner { " *" } else { "" }),
                _ => "failed".to_string(),
            };
            let _ = writeln!(
                s,
                "{:<10} {:>6.1}% {:>3} {:<10} {:>8} {:>9} {:>18}",
                r.model.name(),
                r.anomaly * 100.0,
                r.p,
                r.kernel.map_or("-".to_string(), |k| k.label()),
                r.param.map_or("-".to_string(), |v| v.to_string()),
                r.implied_c.map_or("-".to_string(), |v| format!("{v:.4}")),
                auc
            );
        }
        s
    }

    /// Writes `config.json`, `runs.jsonl`, `cv_report.csv`, `cv_report.txt`
    /// and `cv_report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        self.config.save(dir.join("config.json"))?;
        let mut runs = std::io::BufWriter::new(std::fs::File::create(dir.join("runs.jsonl"))?);
        for r in &self.runs {
            serde_json::to_writer(&mut runs, r)?;
            runs.write_all(b"\n")?;
        }
        runs.flush()?;
        std::fs::write(dir.join("cv_report.csv"), self.to_csv()?)?;
        std::fs::write(dir.join("cv_report.txt"), self.to_text())?;
        std::fs::write(dir.join("cv_report.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
