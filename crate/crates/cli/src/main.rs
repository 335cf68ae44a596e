use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use msvdd::data::{generate_synthetic, read_libsvm, scale_to_unit_box, split_real, RealProtocol, SyntheticSpec};
use msvdd::experiments::{
    emit_plot_data, evaluate_auc, run_cross_validation, run_gap_study, train_cell, Cell, CvReport, ExperimentConfig,
    GapReport, Instance, Mode, Model, PlotInputs, RunSettings,
};
use msvdd::{Dataset, KernelSpec, MsvddError, SolveStatus};

const EXIT_INPUT: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_TIME_LIMIT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "msvdd",
    version,
    about = "Exact multisphere SVDD: solve, cross-validate and study incumbents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-cluster dataset with anomalies.
    Generate(GenerateArgs),
    /// Train one model and print its solution.
    Solve(SolveArgs),
    /// Cross-validate over the parameter grid.
    Cv(StudyArgs),
    /// Log incumbents and optimality gaps of exact solves.
    Gap(StudyArgs),
    /// Emit plot-ready CSV files.
    Plotdata(PlotArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 60)]
    n_train: usize,
    #[arg(long, default_value_t = 40)]
    n_val: usize,
    #[arg(long, default_value_t = 100)]
    n_test: usize,
    /// Fraction of each split replaced by anomalies.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; the spec is written next to it as JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Exact,
    Heuristic,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Heuristic => Mode::Heuristic,
            ModeArg::Both => Mode::Both,
        }
    }
}

/// Model flags shared by all subcommands; lists are comma separated.
#[derive(Args, Default)]
struct ModelFlags {
    #[arg(long, value_delimiter = ',')]
    p: Vec<usize>,
    #[arg(long = "C", value_delimiter = ',')]
    c: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    nu: Vec<f64>,
    #[arg(long, value_enum)]
    kernel: Option<KernelKind>,
    #[arg(long, value_delimiter = ',')]
    sigma2: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Seconds per exact solve.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    cardinality: Option<Switch>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

impl ModelFlags {
    fn kernels(&self) -> anyhow::Result<Option<Vec<KernelSpec<f64>>>> {
        let kind = match (self.kernel, self.sigma2.is_empty()) {
            (None, true) => return Ok(None),
            (None, false) | (Some(KernelKind::Rbf), _) => KernelKind::Rbf,
            (Some(KernelKind::Linear), _) => KernelKind::Linear,
        };
        if kind == KernelKind::Linear {
            if !self.sigma2.is_empty() {
                bail!(MsvddError::Input("--sigma2 applies to the rbf kernel only".into()));
            }
            return Ok(Some(vec![KernelSpec::Linear]));
        }
        let grid: &[f64] = if self.sigma2.is_empty() {
            &ExperimentConfig::SIGMA2_GRID
        } else {
            &self.sigma2
        };
        Ok(Some(
            grid.iter().map(|&s| KernelSpec::rbf(s)).collect::<Result<_, _>>()?,
        ))
    }

    fn apply(&self, cfg: &mut ExperimentConfig) -> anyhow::Result<()> {
        if !self.p.is_empty() {
            cfg.p_grid = self.p.clone();
        }
        if !self.c.is_empty() {
            cfg.c_grid = self.c.clone();
        }
        if !self.nu.is_empty() {
            cfg.nu_grid = self.nu.clone();
        }
        if let Some(k) = self.kernels()? {
            cfg.kernels = k;
        }
        if !self.seed.is_empty() {
            cfg.seeds = self.seed.clone();
        }
        if let Some(t) = self.time_limit {
            cfg.time_limit = Some(t);
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(c) = self.cardinality {
            cfg.cardinality = c == Switch::On;
        }
        if let Some(m) = self.mode {
            cfg.mode = m.into();
        }
        Ok(())
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Dataset CSV (as written by `generate`); trains on its train split.
    #[arg(long, conflicts_with = "libsvm")]
    data: Option<PathBuf>,
    /// libSVM file split with `--protocol`.
    #[arg(long)]
    libsvm: Option<PathBuf>,
    #[arg(long, default_value = "ionosphere")]
    protocol: String,
    /// Anomaly fraction for libSVM or generated data.
    #[arg(long, default_value_t = 0.1)]
    anomaly: f64,
    /// Solution JSON output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    /// Experiment config (JSON); defaults to the built-in desk-scale study.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long, value_delimiter = ',')]
    anomaly: Vec<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[command(flatten)]
    study: StudyArgs,
    /// Directory holding `cv_report.json` and/or `gap_report.json`.
    #[arg(long)]
    from: Option<PathBuf>,
}

fn load_config(args: &StudyArgs) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    args.model.apply(&mut cfg)?;
    if !args.anomaly.is_empty() {
        cfg.anomaly_levels = args.anomaly.clone();
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("msvdd_out"));
    cfg.out_dir = Some(out.clone());
    cfg.validate()?;
    Ok((cfg, out))
}

fn single<T: Copy>(values: &[T], name: &str, default: Option<T>) -> anyhow::Result<T> {
    match (values, default) {
        ([v], _) => Ok(*v),
        ([], Some(d)) => Ok(d),
        ([], None) => bail!(MsvddError::Input(format!("--{name} is required"))),
        _ => bail!(MsvddError::Input(format!("--{name} takes a single value here"))),
    }
}

fn solve_instance(args: &SolveArgs) -> anyhow::Result<Instance> {
    let seed = single(&args.model.seed, "seed", Some(0))?;
    if let Some(path) = &args.data {
        let ds = Dataset::load_csv(path).with_context(|| format!("reading {}", path.display()))?;
        if ds.split.is_none() {
            return Ok(Instance {
                train: ds,
                validation: Dataset::new(Vec::new())?,
                test: Dataset::new(Vec::new())?,
            });
        }
        return Ok(Instance::from_dataset(&ds));
    }
    if let Some(path) = &args.libsvm {
        let protocol = RealProtocol::by_name(&args.protocol)
            .ok_or_else(|| MsvddError::Input(format!("unknown protocol {:?}", args.protocol)))?;
        let raw = read_libsvm::<f64>(path)?;
        let inst = Instance::from_dataset(&split_real(&raw, &protocol, (0.3, 0.2, 0.5), args.anomaly, seed)?);
        let (train, rest, _) = scale_to_unit_box(&inst.train, &[&inst.validation, &inst.test])?;
        let mut rest = rest.into_iter();
        return Ok(Instance {
            train,
            validation: rest.next().expect("two datasets"),
            test: rest.next().expect("two datasets"),
        });
    }
    let ds = generate_synthetic(&SyntheticSpec {
        n_train: 60,
        n_val: 40,
        n_test: 100,
        noise_level: args.anomaly,
        seed,
        ..SyntheticSpec::default()
    })?;
    Ok(Instance::from_dataset(&ds))
}

fn cmd_generate(args: &GenerateArgs) -> anyhow::Result<u8> {
    let spec = SyntheticSpec {
        n_train: args.n_train,
        n_val: args.n_val,
        n_test: args.n_test,
        noise_level: args.noise,
        seed: args.seed,
        ..SyntheticSpec::default()
    };
    let ds: Dataset = generate_synthetic(&spec)?;
    ds.save_csv(&args.out)?;
    let spec_path = args.out.with_extension("json");
    std::fs::write(&spec_path, serde_json::to_string_pretty(&spec)?)?;
    println!(
        "wrote {} points ({} anomalies) to {} and the spec to {}",
        ds.len(),
        ds.outlier_count(),
        args.out.display(),
        spec_path.display()
    );
    Ok(0)
}

fn cmd_solve(args: &SolveArgs) -> anyhow::Result<u8> {
    let flags = &args.model;
    let inst = solve_instance(args)?;
    let mode = match flags.mode {
        Some(ModeArg::Both) => bail!(MsvddError::Input(
            "solve trains a single model; use --mode exact or heuristic".into()
        )),
        Some(m) => Mode::from(m),
        None if flags.c.is_empty() && !flags.nu.is_empty() => Mode::Heuristic,
        None => Mode::Exact,
    };
    let model = mode.models()[0];
    let param = match model {
        Model::Exact => single(&flags.c, "C", None)?,
        Model::Heuristic => single(&flags.nu, "nu", None)?,
    };
    let kernel = flags.kernels()?.unwrap_or_else(|| vec![KernelSpec::Linear]);
    let kernel = single(&kernel, "sigma2", None)?;
    let cell = Cell {
        model,
        p: single(&flags.p, "p", None)?,
        param,
        kernel,
    };
    let seed = single(&flags.seed, "seed", Some(0))?;
    let settings = RunSettings {
        time_limit: flags.time_limit.map(Duration::from_secs_f64),
        cardinality: flags.cardinality != Some(Switch::Off),
        heuristic_restarts: 5,
        heuristic_max_iters: 200,
        seed,
    };
    let sol = train_cell(&cell, &inst.train, &settings)?;
    eprintln!("model      {}", model.name());
    eprintln!("status     {:?}", sol.status);
    eprintln!("objective  {}", sol.objective);
    eprintln!("bound      {}", sol.lower_bound);
    eprintln!("nodes      {}", sol.node_count);
    eprintln!("elapsed    {:.3}s", sol.elapsed);
    for (j, s) in sol.spheres.iter().enumerate() {
        eprintln!(
            "sphere {j}   members {} radius_sq {} outliers {}",
            s.members.len(),
            s.radius_sq,
            s.strict_outliers(1e-6)
        );
    }
    if inst.test.labels.is_some() && !inst.test.is_empty() {
        match evaluate_auc(kernel, &inst.train, &sol, &inst.test) {
            Ok(auc) => eprintln!("test AUC   {auc:.4}"),
            Err(e) => eprintln!("test AUC   unavailable: {e}"),
        }
    }
    let json = serde_json::to_string_pretty(&sol)?;
    if let Some(out) = &args.out {
        std::fs::write(out, &json)?;
    }
    println!("{json}");
    Ok(if sol.status == SolveStatus::TimeLimitIncumbent {
        EXIT_TIME_LIMIT
    } else {
        0
    })
}

fn cmd_cv(args: &StudyArgs) -> anyhow::Result<u8> {
    let (cfg, out) = load_config(args)?;
    let report = run_cross_validation(&cfg)?;
    report.write(&out)?;
    print!("{}", report.to_text());
    let failed = report.runs.iter().filter(|r| !r.succeeded()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed; see runs.jsonl", report.runs.len());
    }
    Ok(0)
}

fn cmd_gap(args: &StudyArgs) -> anyhow::Result<u8> {
    let (cfg, out) = load_config(args)?;
    let report = run_gap_study(&cfg)?;
    report.write(&out)?;
    println!(
        "{} incumbents from {} solves written to {}",
        report.rows.len(),
        report.runs.len(),
        out.join("gap.csv").display()
    );
    let limited = report
        .runs
        .iter()
        .any(|r| r.status == Some(SolveStatus::TimeLimitIncumbent));
    if limited {
        eprintln!("some solves hit the time limit; their gaps are measured against the lower bound");
    }
    Ok(if limited { EXIT_TIME_LIMIT } else { 0 })
}

fn read_optional(path: &Path) -> anyhow::Result<Option<String>> {
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(std::fs::read_to_string(path)?))
}

fn cmd_plotdata(args: &PlotArgs) -> anyhow::Result<u8> {
    let (cfg, out) = load_config(&args.study)?;
    let (cv, gap): (Option<CvReport>, Option<GapReport>) = match &args.from {
        Some(dir) => {
            let cv = read_optional(&dir.join("cv_report.json"))?
                .map(|t| serde_json::from_str(&t).map_err(MsvddError::from))
                .transpose()?;
            let gap = read_optional(&dir.join("gap_report.json"))?
                .map(|t| serde_json::from_str(&t).map_err(MsvddError::from))
                .transpose()?;
            (cv, gap)
        }
        None => (None, None),
    };
    let inst = cfg.instance(cfg.anomaly_levels[0], cfg.seeds[0])?;
    let model = cfg.mode.models()[0];
    let cell = Cell {
        model,
        p: cfg.p_grid[0],
        param: match model {
            Model::Exact => cfg.c_grid[0],
            Model::Heuristic => cfg.nu_grid[0],
        },
        kernel: cfg.kernels[0],
    };
    let sol = train_cell(&cell, &inst.train, &RunSettings::from_config(&cfg, cfg.seeds[0]))?;
    let inputs = PlotInputs {
        scatter: Some((&inst, cell.kernel, &sol)),
        cv: cv.as_ref(),
        gap: gap.as_ref(),
    };
    for path in emit_plot_data(&inputs, &out)? {
        println!("{}", path.display());
    }
    cfg.save(out.join("config.json"))?;
    Ok(0)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<MsvddError>() {
        Some(MsvddError::Convergence { .. } | MsvddError::InfeasibleSubproblem { .. }) => EXIT_SOLVER,
        Some(_) => EXIT_INPUT,
        None if err.downcast_ref::<std::io::Error>().is_some() => EXIT_INPUT,
        None => EXIT_SOLVER,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Gap(a) => cmd_gap(a),
        Command::Plotdata(a) => cmd_plotdata(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
