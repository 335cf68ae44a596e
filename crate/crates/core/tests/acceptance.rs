//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (no libtest harness) so the lines are always
//! printed; exits nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use msvdd::data::{generate_synthetic, parse_libsvm, scale_to_unit_box, Dataset as Ds, Split, SyntheticSpec};
use msvdd::detection::{anomaly_score, euclidean_score, DetectionModel};
use msvdd::experiments::{run_cross_validation, run_gap_study, DatasetSource, ExperimentConfig, Mode, Model};
use msvdd::heuristic::{solve_heuristic, HeuristicConfig};
use msvdd::multisphere::{deltas_dual, deltas_primal, evaluate_assignment, verify_bigm_feasibility};
use msvdd::scalar::{max_outliers, min_members};
use msvdd::{gram, solve_exact, solve_svdd, EuclideanSpace, KernelSpec, MsvddProblem, Solution, SolveStatus};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Solved {
    inst: common::Instance,
    exact: Solution,
    oracle: Option<f64>,
}

fn criterion_1(solved: &[Solved], elapsed: Duration) -> Outcome {
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for (k, s) in solved.iter().enumerate() {
        match s.oracle {
            Some(opt) => {
                let diff = (s.exact.objective - opt).abs();
                worst = worst.max(diff);
                if diff > 1e-6 || s.exact.status != SolveStatus::Optimal {
                    failures.push(format!("#{k}: exact {} vs oracle {opt}", s.exact.objective));
                }
            }
            None => failures.push(format!("#{k}: oracle found no feasible labeling")),
        }
    }
    let budget = elapsed < Duration::from_secs(300);
    outcome(
        failures.is_empty() && budget,
        format!(
            "{} instances, max |exact - enumeration| = {worst:.2e} (tol 1e-6), {:.1}s (budget 300s){}",
            solved.len(),
            elapsed.as_secs_f64(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {}", failures.join(", "))
            }
        ),
    )
}

fn kkt_violation(sphere: &msvdd::Sphere, tol: f64) -> Option<String> {
    let c = sphere.c;
    let r = sphere.radius_sq;
    for ((&i, &a), &d) in sphere.members.iter().zip(&sphere.alpha).zip(&sphere.distances_sq) {
        let bad = if a <= 1e-8 {
            d > r + tol
        } else if a >= c - 1e-8 {
            d < r - tol
        } else {
            (d - r).abs() > tol
        };
        if bad {
            return Some(format!("point {i}: alpha {a:.3e}, d^2 - R = {:.3e}", d - r));
        }
    }
    None
}

fn criterion_2() -> (Outcome, Vec<msvdd::Sphere>) {
    let mut rng = common::rng(202);
    let mut worst_gap = 0.0f64;
    let mut failures = Vec::new();
    let mut spheres = Vec::new();
    for k in 0..100 {
        let n = rng.gen_range(5..=30);
        let d = rng.gen_range(1..=4);
        let pts = common::random_points(&mut rng, n, d);
        let kernel = if k % 2 == 0 {
            KernelSpec::Linear
        } else {
            KernelSpec::rbf(rng.gen_range(0.2..4.0)).unwrap()
        };
        let g = gram(&kernel, &pts).unwrap();
        let c = rng.gen_range((1.0 / n as f64)..=1.0);
        let members: Vec<usize> = (0..n).collect();
        let s = solve_svdd(&g, &members, c).unwrap();
        let gap = (s.dual_objective - s.objective).abs();
        worst_gap = worst_gap.max(gap);
        if gap > 1e-6 {
            failures.push(format!("#{k}: gap {gap:.2e}"));
        }
        if let Some(v) = kkt_violation(&s, 1e-6) {
            failures.push(format!("#{k}: KKT {v}"));
        }
        spheres.push(s);
    }
    (
        outcome(
            failures.is_empty(),
            format!(
                "100 solves, max |dual - primal| = {worst_gap:.2e}, KKT complementarity at 1e-6{}",
                if failures.is_empty() {
                    String::new()
                } else {
                    format!("; {}", failures.join(", "))
                }
            ),
        ),
        spheres,
    )
}

fn criterion_3() -> Outcome {
    let mut rng = common::rng(303);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let n = rng.gen_range(6..=25);
        let pts = common::random_points(&mut rng, n, 2);
        let kernel = if k % 2 == 0 {
            KernelSpec::Linear
        } else {
            KernelSpec::rbf(1.0).unwrap()
        };
        let g = gram(&kernel, &pts).unwrap();
        let c = [0.2, 0.35, 0.5, 1.0][k % 4];
        let exact = solve_exact(&MsvddProblem::new(&g, 1, c)).unwrap();
        let members: Vec<usize> = (0..n).collect();
        let direct = solve_svdd(&g, &members, c).unwrap();
        worst = worst.max((exact.objective - direct.objective).abs());
    }
    outcome(
        worst <= 1e-6,
        format!("20 instances, max |p=1 exact - single SVDD| = {worst:.2e} (tol 1e-6)"),
    )
}

fn canonical(sol: &Solution) -> Vec<&msvdd::Sphere> {
    let mut s: Vec<&msvdd::Sphere> = sol.spheres.iter().collect();
    s.sort_by_key(|sp| sp.members[0]);
    s
}

fn criterion_4() -> Outcome {
    let mut rng = common::rng(404);
    let (mut d_obj, mut d_rad, mut d_score) = (0.0f64, 0.0f64, 0.0f64);
    let mut mismatch = Vec::new();
    let mut count = 0;
    for k in 0..20 {
        let n = rng.gen_range(8..=12);
        let pts = common::blobs(&mut rng, n);
        let p = 1 + k % 2;
        let c = [0.25, 0.5, 1.0][k % 3];
        if p * min_members(c) > n {
            continue;
        }
        let g = gram(&KernelSpec::Linear, &pts).unwrap();
        let e = EuclideanSpace::new(pts.clone()).unwrap();
        let via_kernel = solve_exact(&MsvddProblem::new(&g, p, c)).unwrap();
        let via_points = solve_exact(&MsvddProblem::new(&e, p, c)).unwrap();
        count += 1;
        d_obj = d_obj.max((via_kernel.objective - via_points.objective).abs());
        let (a, b) = (canonical(&via_kernel), canonical(&via_points));
        if a.iter().map(|s| &s.members).ne(b.iter().map(|s| &s.members)) {
            mismatch.push(k);
            continue;
        }
        for (sa, sb) in a.iter().zip(&b) {
            d_rad = d_rad.max((sa.radius_sq - sb.radius_sq).abs());
        }
        let model = DetectionModel::from_solution(KernelSpec::Linear, pts.clone(), &via_kernel).unwrap();
        let centers: Vec<Vec<f64>> = via_points
            .spheres
            .iter()
            .map(|s| e.center(&s.members, &s.alpha))
            .collect();
        let radii: Vec<f64> = via_points.spheres.iter().map(|s| s.radius_sq).collect();
        for _ in 0..25 {
            let x = vec![rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
            let s1 = anomaly_score(&model, &x).unwrap();
            let s2 = euclidean_score(&centers, &radii, &x).unwrap();
            d_score = d_score.max((s1 - s2).abs());
        }
    }
    let pass = mismatch.is_empty() && d_obj <= 1e-9 && d_rad <= 1e-9 && d_score <= 1e-9;
    outcome(
        pass,
        format!(
            "{count} instances, max diffs: objective {d_obj:.2e}, radius {d_rad:.2e}, score {d_score:.2e} (tol 1e-9){}",
            if mismatch.is_empty() {
                String::new()
            } else {
                format!("; assignments differ on {mismatch:?}")
            }
        ),
    )
}

fn criterion_5(solved: &[Solved]) -> Outcome {
    let mut checked = 0;
    let mut failures = Vec::new();
    for (k, s) in solved.iter().enumerate() {
        if s.exact.status != SolveStatus::Optimal {
            continue;
        }
        checked += 1;
        let sol = &s.exact;
        if sol.spheres.len() != s.inst.p || sol.spheres.iter().any(|sp| sp.members.is_empty()) {
            failures.push(format!("#{k}: empty sphere"));
        }
        if sol.spheres.iter().any(|sp| sp.radius_sq < 0.0) {
            failures.push(format!("#{k}: negative radius"));
        }
        for perm in common::all_permutations(s.inst.p) {
            let r = sol.relabel(&perm).unwrap();
            if (r.objective - sol.objective).abs() > 1e-12 {
                failures.push(format!("#{k}: relabel {perm:?} changes objective"));
            }
        }
        if !verify_bigm_feasibility(&s.inst.gram, sol, &deltas_dual(&s.inst.gram, s.inst.c)) {
            failures.push(format!("#{k}: big-M (kernel constants) violated"));
        }
        if s.inst.kernel.is_linear()
            && !verify_bigm_feasibility(&s.inst.gram, sol, &deltas_primal(&s.inst.points).unwrap())
        {
            failures.push(format!("#{k}: big-M (primal constants) violated"));
        }
    }
    outcome(
        failures.is_empty() && checked > 0,
        format!(
            "{checked} optimal solutions: nonempty spheres, R >= 0, all label permutations, big-M feasibility{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {}", failures.join(", "))
            }
        ),
    )
}

fn criterion_6(solved: &[Solved], singles: &[msvdd::Sphere]) -> Outcome {
    let mut total = 0;
    let mut failures = Vec::new();
    let spheres = solved.iter().flat_map(|s| s.exact.spheres.iter()).chain(singles.iter());
    for sp in spheres {
        total += 1;
        let count = sp.strict_outliers(1e-6);
        if count > max_outliers(sp.c) {
            failures.push(format!("{count} > floor(1/{})", sp.c));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{total} spheres, strict outliers <= floor(1/C) at 1e-6{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {}", failures.join(", "))
            }
        ),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        mode: Mode::Both,
        p_grid: vec![2],
        anomaly_levels: vec![0.1],
        seeds: (0..5).collect(),
        kernels: vec![KernelSpec::Linear],
        time_limit: Some(60.0),
        ..ExperimentConfig::default()
    };
    let report = match run_cross_validation(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("cross-validation failed: {e}")),
    };
    let exact = report.per_seed_selection(Model::Exact, 0.1, 2);
    let heur = report.per_seed_selection(Model::Heuristic, 0.1, 2);
    if exact.len() != 5 || heur.len() != 5 {
        return outcome(false, "missing per-seed selections");
    }
    let e: Vec<f64> = exact.iter().map(|r| r.test_auc.unwrap()).collect();
    let h: Vec<f64> = heur.iter().map(|r| r.test_auc.unwrap()).collect();
    let wins = e.iter().zip(&h).filter(|(a, b)| a >= b).count();
    let mean = e.iter().sum::<f64>() / 5.0;
    let elapsed = start.elapsed();
    let pass = wins >= 4 && mean >= 0.90 && elapsed < Duration::from_secs(1800);
    outcome(
        pass,
        format!(
            "exact >= heuristic on {wins}/5 seeds (need 4), exact mean test AUC {mean:.4} (need 0.90); exact {e:.4?} vs heuristic {h:.4?}; {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let spec = SyntheticSpec {
        n_train: 60,
        n_val: 40,
        n_test: 100,
        noise_level: 0.1,
        seed: 8,
        ..SyntheticSpec::default()
    };
    let ds: Ds<f64> = generate_synthetic(&spec).unwrap();
    let train = ds.subset(Split::Train);
    let g = gram(&KernelSpec::Linear, &train.points).unwrap();
    let mut counts = Vec::new();
    for c in [0.1, 0.2, 0.4, 0.8] {
        let sol = solve_exact(&MsvddProblem::new(&g, 2, c)).unwrap();
        counts.push(sol.training_outliers(1e-6));
    }
    let inversions = counts.windows(2).filter(|w| w[1] > w[0]).count();
    outcome(
        inversions <= 1,
        format!("outliers at C = 0.1, 0.2, 0.4, 0.8: {counts:?}, {inversions} inversions (allowed 1)"),
    )
}

fn criterion_9(solved: &[Solved]) -> Outcome {
    let mut failures = Vec::new();
    let mut max_iters = 0;
    let mut compared = 0;
    for (k, s) in solved.iter().enumerate() {
        let n = s.inst.points.len();
        let nu = (s.inst.p as f64 / (s.inst.c * n as f64)).min(1.0);
        for seed in 0..3 {
            let cfg = HeuristicConfig {
                p: s.inst.p,
                nu,
                max_iters: 200,
                restarts: 1,
                seed,
            };
            let run = solve_heuristic(&s.inst.gram, &cfg).unwrap();
            max_iters = max_iters.max(run.iterations);
            if run.iterations > 200 {
                failures.push(format!("#{k}: {} iterations", run.iterations));
            }
            if run.trace.windows(2).any(|w| w[1] > w[0] + 1e-9) {
                failures.push(format!("#{k}: objective increased"));
            }
            let under_c = evaluate_assignment(&s.inst.gram, &run.solution.assignment, s.inst.p, s.inst.c, true)
                .unwrap()
                .map_or(f64::INFINITY, |e| e.objective);
            compared += 1;
            if under_c < s.exact.objective - 1e-6 {
                failures.push(format!("#{k}: heuristic {under_c} below exact {}", s.exact.objective));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{compared} heuristic runs: traces nonincreasing (1e-9), max {max_iters} iterations (cap 200), never below the exact optimum{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }
        ),
    )
}

fn criterion_10() -> Outcome {
    let cfg = ExperimentConfig {
        mode: Mode::Exact,
        p_grid: vec![2, 3],
        c_grid: vec![0.2, 0.4],
        kernels: vec![KernelSpec::Linear, KernelSpec::rbf(0.5).unwrap()],
        dataset: DatasetSource::Synthetic {
            n_train: 30,
            n_val: 20,
            n_test: 50,
            cluster_sigmas: (0.5, 0.6),
        },
        anomaly_levels: vec![0.1],
        seeds: vec![0, 1],
        time_limit: Some(30.0),
        ..ExperimentConfig::default()
    };
    let report = match run_gap_study(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("gap study failed: {e}")),
    };
    let csv = report.to_csv().unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (c_run, c_obj, c_ref, c_gap, c_status) = (
        col("run_id"),
        col("objective"),
        col("reference"),
        col("gap"),
        col("status"),
    );
    let mut failures = Vec::new();
    let mut rows = 0;
    let mut last: Option<(String, f64, f64, String)> = None;
    let mut finals = Vec::new();
    for rec in reader.records() {
        let rec = rec.unwrap();
        rows += 1;
        let run = rec[c_run].to_string();
        let obj: f64 = rec[c_obj].parse().unwrap();
        let reference: f64 = rec[c_ref].parse().unwrap();
        let gap: f64 = rec[c_gap].parse().unwrap();
        let recomputed = (obj - reference) / obj;
        if (gap - recomputed).abs() > 1e-12 {
            failures.push(format!("{run}: gap {gap} vs {recomputed}"));
        }
        if let Some((prev_run, prev_obj, prev_gap, status)) = &last {
            if *prev_run == run {
                if obj >= *prev_obj {
                    failures.push(format!("{run}: incumbents not strictly decreasing"));
                }
            } else {
                finals.push((prev_run.clone(), *prev_gap, status.clone()));
            }
        }
        last = Some((run, obj, gap, rec[c_status].to_string()));
    }
    finals.extend(last.map(|(r, _, g, s)| (r, g, s)));
    for (run, gap, status) in &finals {
        if status == "optimal" && *gap != 0.0 {
            failures.push(format!("{run}: final gap {gap} on optimal run"));
        }
    }
    let optimal = finals.iter().filter(|f| f.2 == "optimal").count();
    outcome(
        failures.is_empty() && rows > 0,
        format!(
            "{} solves, {rows} incumbents, {optimal} optimal with final gap 0, gap column recomputed to 1e-12{}",
            report.runs.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {}", failures.join(", "))
            }
        ),
    )
}

fn criterion_11() -> Outcome {
    let mut failures = Vec::new();
    let fixtures: [(&str, Vec<Vec<f64>>, Vec<i64>); 3] = [
        ("1 1:0.5 3:-1\n", vec![vec![0.5, 0.0, -1.0]], vec![1]),
        ("2\n", vec![vec![]], vec![2]),
        (
            "1 4:2.5\n-1 1:1 2:-0.25\n",
            vec![vec![0.0, 0.0, 0.0, 2.5], vec![1.0, -0.25, 0.0, 0.0]],
            vec![1, -1],
        ),
    ];
    for (text, points, classes) in &fixtures {
        match parse_libsvm::<f64>(text) {
            Ok(ds) if ds.points == *points && ds.classes.as_ref() == Some(classes) => {}
            other => failures.push(format!("fixture {text:?}: {other:?}")),
        }
    }
    let file = include_str!("fixtures/small.libsvm");
    let ds = parse_libsvm::<f64>(file).unwrap();
    if ds.len() != 6 || ds.dim() != 5 || ds.points[2] != vec![0.0, 0.0, 0.0, 0.0, 0.0] || ds.points[4][4] != 7.5 {
        failures.push("small.libsvm parsed incorrectly".into());
    }
    let (scaled, _, _) = scale_to_unit_box(&ds, &[]).unwrap();
    for k in 0..ds.dim() {
        let col: Vec<f64> = ds.points.iter().map(|x| x[k]).collect();
        let distinct = col.iter().any(|&v| v != col[0]);
        let s: Vec<f64> = scaled.points.iter().map(|x| x[k]).collect();
        let (lo, hi) = s
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if distinct && (lo != -1.0 || hi != 1.0) {
            failures.push(format!("column {k} scaled to [{lo}, {hi}]"));
        }
        if !distinct && s.iter().any(|&v| v != 0.0) {
            failures.push(format!("constant column {k} not mapped to 0"));
        }
    }
    for noise in [0.05, 0.1, 0.15, 0.2] {
        let spec = SyntheticSpec {
            noise_level: noise,
            seed: 11,
            ..SyntheticSpec::default()
        };
        let a: Ds<f64> = generate_synthetic(&spec).unwrap();
        let b: Ds<f64> = generate_synthetic(&spec).unwrap();
        let bits = |d: &Ds<f64>| d.points.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        if bits(&a) != bits(&b) || a.labels != b.labels {
            failures.push(format!("noise {noise}: not reproducible"));
        }
        for (split, n) in [(Split::Train, 100), (Split::Validation, 66), (Split::Test, 166)] {
            let part = a.subset(split);
            if part.len() != n || part.outlier_count() != (noise * n as f64).round() as usize {
                failures.push(format!("noise {noise} {split:?}: {} anomalies", part.outlier_count()));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "libSVM fixtures, unit-box extremes, synthetic reproducibility and anomaly counts{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {}", failures.join(", "))
            }
        ),
    )
}

fn main() {
    let start = Instant::now();
    let instances = common::oracle_instances(30, 101);
    let mut solved = Vec::new();
    for inst in instances {
        let exact = solve_exact(&MsvddProblem::new(&inst.gram, inst.p, inst.c)).unwrap();
        let oracle = common::enumerate_optimum(&inst.gram, inst.p, inst.c, min_members(inst.c)).map(|o| o.0);
        solved.push(Solved { inst, exact, oracle });
    }
    let c1_time = start.elapsed();

    let (c2, singles) = criterion_2();
    let results = [
        (1, criterion_1(&solved, c1_time)),
        (2, c2),
        (3, criterion_3()),
        (4, criterion_4()),
        (5, criterion_5(&solved)),
        (6, criterion_6(&solved, &singles)),
        (7, criterion_7()),
        (8, criterion_8()),
        (9, criterion_9(&solved)),
        (10, criterion_10()),
        (11, criterion_11()),
    ];
    let mut failed = 0;
    for (id, o) in &results {
        println!(
            "criterion {id:>2}: {} - {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.1}s)",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
