use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{ensure_dir, evaluate_auc, run_pool, train_cell, Cell, ExperimentConfig, Model, RunSettings};
use crate::error::{MsvddError, Result};
use crate::kernel::{gram, KernelSpec};
use crate::multisphere::{evaluate_assignment, SolveStatus};

/// One incumbent of one exact solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub run_id: String,
    pub anomaly: f64,
    pub seed: u64,
    pub p: usize,
    pub c: f64,
    pub kernel: KernelSpec<f64>,
    /// Position in the incumbent log.
    pub incumbent: usize,
    pub wall_time_s: f64,
    pub objective: f64,
    /// Final objective (optimal runs) or proven lower bound (time limit).
    pub reference: f64,
    /// `(objective - reference) / objective`.
    pub gap: f64,
    pub test_auc: Option<f64>,
    pub status: SolveStatus,
    /// True when `reference` is a lower bound rather than the optimum.
    pub bound_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRun {
    pub run_id: String,
    pub status: Option<SolveStatus>,
    pub objective: Option<f64>,
    pub lower_bound: Option<f64>,
    pub elapsed: f64,
    pub incumbents: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub config: ExperimentConfig,
    pub rows: Vec<GapRow>,
    pub runs: Vec<GapRun>,
}

/// Relative gap of an incumbent value against a reference value.
pub fn relative_gap(incumbent: f64, reference: f64) -> f64 {
    if incumbent == 0.0 {
        0.0
    } else {
        (incumbent - reference) / incumbent
    }
}

struct Job {
    run_id: String,
    anomaly: f64,
    seed: u64,
    cell: Cell,
}

fn execute(job: &Job, cfg: &ExperimentConfig) -> (GapRun, Vec<GapRow>) {
    let mut run = GapRun {
        run_id: job.run_id.clone(),
        status: None,
        objective: None,
        lower_bound: None,
        elapsed: 0.0,
        incumbents: 0,
        error: None,
    };
    let result = (|| -> Result<Vec<GapRow>> {
        let inst = cfg.instance(job.anomaly, job.seed)?;
        let start = Instant::now();
        let sol = train_cell(&job.cell, &inst.train, &RunSettings::from_config(cfg, job.seed))?;
        run.elapsed = start.elapsed().as_secs_f64();
        run.status = Some(sol.status);
        run.objective = Some(sol.objective);
        run.lower_bound = Some(sol.lower_bound);
        run.incumbents = sol.incumbent_log.len();
        let optimal = sol.status == SolveStatus::Optimal;
        let reference = if optimal { sol.objective } else { sol.lower_bound };
        let g = gram(&job.cell.kernel, &inst.train.points)?;
        let mut rows = Vec::new();
        for (k, rec) in sol.incumbent_log.iter().enumerate() {
            let test_auc = match evaluate_assignment(&g, &rec.assignment, job.cell.p, job.cell.param, cfg.cardinality)?
            {
                Some(model) => evaluate_auc(job.cell.kernel, &inst.train, &model, &inst.test).ok(),
                None => None,
            };
            rows.push(GapRow {
                run_id: job.run_id.clone(),
                anomaly: job.anomaly,
                seed: job.seed,
                p: job.cell.p,
                c: job.cell.param,
                kernel: job.cell.kernel,
                incumbent: k,
                wall_time_s: rec.wall_time,
                objective: rec.objective,
                reference,
                gap: relative_gap(rec.objective, reference),
                test_auc,
                status: sol.status,
                bound_reference: !optimal,
            });
        }
        Ok(rows)
    })();
    match result {
        Ok(rows) => (run, rows),
        Err(e) => {
            run.error = Some(e.to_string());
            (run, Vec::new())
        }
    }
}

/// Solves every exact grid cell and reports each incumbent with its gap to
/// the final optimum (or, after a time limit, to the proven lower bound)
/// and the test AUC of the rule it induces.
pub fn run_gap_study(cfg: &ExperimentConfig) -> Result<GapReport> {
    cfg.validate()?;
    if !cfg.mode.models().contains(&Model::Exact) {
        return Err(MsvddError::input("the gap study needs mode \"exact\" or \"both\""));
    }
    let mut jobs = Vec::new();
    for &anomaly in &cfg.anomaly_levels {
        for &seed in &cfg.seeds {
            for &p in &cfg.p_grid {
                for &kernel in &cfg.kernels {
                    for &c in &cfg.c_grid {
                        jobs.push(Job {
                            run_id: format!("gap-{:05}", jobs.len()),
                            anomaly,
                            seed,
                            cell: Cell {
                                model: Model::Exact,
                                p,
                                param: c,
                                kernel,
                            },
                        });
                    }
                }
            }
        }
    }
    let results = run_pool(&jobs, cfg.workers, |job| execute(job, cfg));
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for (run, r) in results {
        runs.push(run);
        rows.extend(r);
    }
    Ok(GapReport {
        config: cfg.clone(),
        rows,
        runs,
    })
}

impl GapReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "run_id",
            "anomaly",
            "seed",
            "p",
            "C",
            "kernel",
            "incumbent",
            "wall_time_s",
            "objective",
            "reference",
            "gap",
            "test_auc",
            "status",
            "bound_reference",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.run_id.clone(),
                r.anomaly.to_string(),
                r.seed.to_string(),
                r.p.to_string(),
                r.c.to_string(),
                r.kernel.label(),
                r.incumbent.to_string(),
                r.wall_time_s.to_string(),
                r.objective.to_string(),
                r.reference.to_string(),
                r.gap.to_string(),
                r.test_auc.map_or(String::new(), |v| v.to_string()),
                serde_json::to_value(r.status)?.as_str().unwrap_or_default().to_string(),
                r.bound_reference.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes `config.json`, `gap.csv` and `gap_report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        self.config.save(dir.join("config.json"))?;
        std::fs::write(dir.join("gap.csv"), self.to_csv()?)?;
        std::fs::write(dir.join("gap_report.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
