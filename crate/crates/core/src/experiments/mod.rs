//! Experiment driver: parameter grids, cross-validation, incumbent-gap
//! studies and CSV output for external plotting.

mod cv;
mod gap;
mod plot;

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, read_libsvm, scale_to_unit_box, split_real, Dataset, Label, RealProtocol, Split, SyntheticSpec,
};
use crate::detection::{anomaly_scores, auc_roc, DetectionModel};
use crate::error::{MsvddError, Result};
use crate::heuristic::{solve_heuristic, HeuristicConfig};
use crate::kernel::{gram, KernelSpec};
use crate::multisphere::{solve_exact, MsvddProblem, MsvddSolution, SolveStatus};

pub use cv::{run_cross_validation, CvReport, CvRow, RunRecord};
pub use gap::{relative_gap, run_gap_study, GapReport, GapRow, GapRun};
pub use plot::{emit_plot_data, performance_profile, PlotInputs, ProfilePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Heuristic,
    Both,
}

impl Mode {
    pub fn models(self) -> Vec<Model> {
        match self {
            Mode::Exact => vec![Model::Exact],
            Mode::Heuristic => vec![Model::Heuristic],
            Mode::Both => vec![Model::Exact, Model::Heuristic],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Exact,
    Heuristic,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Exact => "exact",
            Model::Heuristic => "heuristic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    Synthetic {
        n_train: usize,
        n_val: usize,
        n_test: usize,
        #[serde(default = "default_sigmas")]
        cluster_sigmas: (f64, f64),
    },
    Libsvm {
        path: PathBuf,
        protocol: RealProtocol,
        #[serde(default = "default_fractions")]
        fractions: (f64, f64, f64),
    },
}

fn default_sigmas() -> (f64, f64) {
    (0.5, 0.6)
}

fn default_fractions() -> (f64, f64, f64) {
    (0.3, 0.2, 0.5)
}

fn default_restarts() -> usize {
    5
}

fn default_max_iters() -> usize {
    200
}

fn default_workers() -> usize {
    1
}

fn default_true() -> bool {
    true
}

/// Full description of a study. Every run writes the resolved config next
/// to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub p_grid: Vec<usize>,
    pub c_grid: Vec<f64>,
    pub nu_grid: Vec<f64>,
    pub kernels: Vec<KernelSpec<f64>>,
    pub dataset: DatasetSource,
    pub anomaly_levels: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Per exact solve, in seconds.
    #[serde(default)]
    pub time_limit: Option<f64>,
    /// Grid cells processed concurrently.
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_true")]
    pub cardinality: bool,
    #[serde(default = "default_restarts")]
    pub heuristic_restarts: usize,
    #[serde(default = "default_max_iters")]
    pub heuristic_max_iters: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    /// Desk-scale synthetic study: 60/40/100 points, linear kernel.
    fn default() -> Self {
        Self {
            mode: Mode::Both,
            p_grid: vec![1, 2, 3],
            c_grid: vec![0.1, 0.15, 0.2, 0.25, 0.4, 0.8],
            nu_grid: vec![0.025, 0.05, 0.075, 0.1, 0.15, 0.2],
            kernels: vec![KernelSpec::Linear],
            dataset: DatasetSource::Synthetic {
                n_train: 60,
                n_val: 40,
                n_test: 100,
                cluster_sigmas: default_sigmas(),
            },
            anomaly_levels: vec![0.05, 0.1, 0.15, 0.2],
            seeds: vec![0, 1, 2, 3, 4],
            time_limit: None,
            workers: 1,
            cardinality: true,
            heuristic_restarts: default_restarts(),
            heuristic_max_iters: default_max_iters(),
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// The `sigma^2` grid used for RBF kernels.
    pub const SIGMA2_GRID: [f64; 4] = [0.05, 0.1, 0.25, 0.5];

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(MsvddError::input(m.to_string()));
        if self.p_grid.is_empty() || self.seeds.is_empty() || self.kernels.is_empty() || self.anomaly_levels.is_empty()
        {
            return fail("p grid, kernels, anomaly levels and seeds must be nonempty");
        }
        if self.p_grid.contains(&0) {
            return fail("p values must be at least 1");
        }
        let models = self.mode.models();
        if models.contains(&Model::Exact)
            && (self.c_grid.is_empty() || self.c_grid.iter().any(|&c| !(c > 0.0 && c.is_finite())))
        {
            return fail("C grid must be nonempty with positive entries");
        }
        if models.contains(&Model::Heuristic)
            && (self.nu_grid.is_empty() || self.nu_grid.iter().any(|&v| !(v > 0.0 && v <= 1.0)))
        {
            return fail("nu grid must be nonempty with entries in (0, 1]");
        }
        for k in &self.kernels {
            k.validate()?;
        }
        if self.anomaly_levels.iter().any(|&a| !(0.0..0.5).contains(&a)) {
            return fail("anomaly levels must lie in [0, 0.5)");
        }
        if let Some(t) = self.time_limit {
            if !(t > 0.0) {
                return fail("time limit must be positive");
            }
        }
        if self.workers == 0 {
            return fail("workers must be at least 1");
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn time_limit_duration(&self) -> Option<Duration> {
        self.time_limit.map(Duration::from_secs_f64)
    }

    /// Train/validation/test data for one anomaly level and seed, scaled to
    /// the unit box for libSVM sources.
    pub fn instance(&self, level: f64, seed: u64) -> Result<Instance> {
        match &self.dataset {
            DatasetSource::Synthetic {
                n_train,
                n_val,
                n_test,
                cluster_sigmas,
            } => {
                let ds = generate_synthetic(&SyntheticSpec {
                    n_train: *n_train,
                    n_val: *n_val,
                    n_test: *n_test,
                    noise_level: level,
                    cluster_sigmas: *cluster_sigmas,
                    seed,
                })?;
                Ok(Instance::from_dataset(&ds))
            }
            DatasetSource::Libsvm {
                path,
                protocol,
                fractions,
            } => {
                let raw = read_libsvm::<f64>(path)?;
                let ds = split_real(&raw, protocol, *fractions, level, seed)?;
                let inst = Instance::from_dataset(&ds);
                let (train, rest, _) = scale_to_unit_box(&inst.train, &[&inst.validation, &inst.test])?;
                let mut it = rest.into_iter();
                Ok(Instance {
                    train,
                    validation: it.next().expect("two datasets"),
                    test: it.next().expect("two datasets"),
                })
            }
        }
    }
}

/// One generated or split problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub train: Dataset<f64>,
    pub validation: Dataset<f64>,
    pub test: Dataset<f64>,
}

impl Instance {
    pub fn from_dataset(ds: &Dataset<f64>) -> Self {
        Self {
            train: ds.subset(Split::Train),
            validation: ds.subset(Split::Validation),
            test: ds.subset(Split::Test),
        }
    }
}

/// Model hyperparameters of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub model: Model,
    pub p: usize,
    /// `C` for the exact model, `nu` for the heuristic.
    pub param: f64,
    pub kernel: KernelSpec<f64>,
}

/// Solver settings shared by all cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub time_limit: Option<Duration>,
    pub cardinality: bool,
    pub heuristic_restarts: usize,
    pub heuristic_max_iters: usize,
    pub seed: u64,
}

impl RunSettings {
    pub fn from_config(cfg: &ExperimentConfig, seed: u64) -> Self {
        Self {
            time_limit: cfg.time_limit_duration(),
            cardinality: cfg.cardinality,
            heuristic_restarts: cfg.heuristic_restarts,
            heuristic_max_iters: cfg.heuristic_max_iters,
            seed,
        }
    }
}

/// Fits one cell on `train`.
pub fn train_cell(cell: &Cell, train: &Dataset<f64>, settings: &RunSettings) -> Result<MsvddSolution<f64>> {
    let g = gram(&cell.kernel, &train.points)?;
    match cell.model {
        Model::Exact => {
            let sol = solve_exact(
                &MsvddProblem::new(&g, cell.p, cell.param)
                    .with_cardinality(settings.cardinality)
                    .with_time_limit(settings.time_limit)
                    .with_seed(settings.seed),
            )?;
            if sol.status == SolveStatus::Infeasible {
                return Err(MsvddError::input(format!(
                    "p = {} spheres of at least ceil(1/C) points do not fit in {} points (C = {})",
                    cell.p,
                    train.len(),
                    cell.param
                )));
            }
            Ok(sol)
        }
        Model::Heuristic => {
            let cfg = HeuristicConfig {
                p: cell.p,
                nu: cell.param,
                max_iters: settings.heuristic_max_iters,
                restarts: settings.heuristic_restarts,
                seed: settings.seed,
            };
            Ok(solve_heuristic(&g, &cfg)?.solution)
        }
    }
}

/// Test AUC of the rule defined by `solution` on `ds`.
pub fn evaluate_auc(
    kernel: KernelSpec<f64>,
    train: &Dataset<f64>,
    solution: &MsvddSolution<f64>,
    ds: &Dataset<f64>,
) -> Result<f64> {
    let model = DetectionModel::from_solution(kernel, train.points.clone(), solution)?;
    let scores = anomaly_scores(&model, &ds.points)?;
    let labels: Vec<Label> = ds
        .labels
        .clone()
        .ok_or_else(|| MsvddError::input("evaluation data has no labels"))?;
    Ok(auc_roc(&scores, &labels)?.auc)
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `jobs` on up to `workers` threads, keeping results in job order.
pub(crate) fn run_pool<J: Sync, R: Send>(jobs: &[J], workers: usize, f: impl Fn(&J) -> R + Sync) -> Vec<R> {
    if workers <= 1 || jobs.len() <= 1 {
        return jobs.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<R>>> = jobs.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let r = f(&jobs[i]);
                *slots[i].lock().expect("slot poisoned") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot poisoned").expect("job finished"))
        .collect()
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}
