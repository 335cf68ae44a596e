mod common;

use msvdd::heuristic::reassign;
use msvdd::{
    evaluate_assignment, gram, solve_exact, solve_heuristic, solve_svdd, HeuristicConfig, KernelSpec, MsvddProblem,
};
use msvdd::{SolveStatus, Sphere};
use proptest::prelude::*;

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len() && (0..a.len()).all(|i| (0..a.len()).all(|k| (a[i] == a[k]) == (b[i] == b[k])))
}

#[test]
fn one_cluster_is_plain_svdd() {
    let pts = common::random_points(&mut common::rng(21), 12, 2);
    let g = gram(&KernelSpec::Linear, &pts).unwrap();
    let run = solve_heuristic(&g, &HeuristicConfig::new(1, 0.25)).unwrap();
    let members: Vec<usize> = (0..12).collect();
    let direct = solve_svdd(&g, &members, 1.0 / (0.25 * 12.0)).unwrap();
    assert!((run.solution.objective - direct.objective).abs() < 1e-9);
    assert_eq!(run.solution.status, SolveStatus::Heuristic);
}

#[test]
fn separated_clusters_found_from_any_seed() {
    let pts: Vec<Vec<f64>> = [0.0, 0.1, 0.2, 10.0, 10.1, 10.2].iter().map(|&x| vec![x]).collect();
    let g = gram(&KernelSpec::Linear, &pts).unwrap();
    let exact = solve_exact(&MsvddProblem::new(&g, 2, 1.0)).unwrap();
    let want = exact.assignment.labels().unwrap();
    for seed in 0..10 {
        let cfg = HeuristicConfig {
            seed,
            restarts: 5,
            ..HeuristicConfig::new(2, 0.1)
        };
        let run = solve_heuristic(&g, &cfg).unwrap();
        assert!(
            same_partition(&run.solution.assignment.labels().unwrap(), &want),
            "seed {seed}"
        );
    }
}

#[test]
fn single_start_can_stall_on_a_boundary_point() {
    // Seed 2 starts from a partition whose big sphere has point 0 exactly
    // on its boundary: excess 0 there versus 0.0075 in the small sphere, so
    // the reassignment rule keeps it and the run stops after one step.
    let pts: Vec<Vec<f64>> = [0.0, 0.1, 0.2, 10.0, 10.1, 10.2].iter().map(|&x| vec![x]).collect();
    let g = gram(&KernelSpec::Linear, &pts).unwrap();
    let cfg = HeuristicConfig {
        seed: 2,
        ..HeuristicConfig::new(2, 0.1)
    };
    let run = solve_heuristic(&g, &cfg).unwrap();
    assert!(run.converged);
    assert!(same_partition(
        &run.solution.assignment.labels().unwrap(),
        &[0, 1, 1, 0, 0, 0]
    ));
}

#[test]
fn penalties_follow_cluster_sizes() {
    let pts = common::blobs(&mut common::rng(22), 20);
    let g = gram(&KernelSpec::Linear, &pts).unwrap();
    let run = solve_heuristic(&g, &HeuristicConfig::new(2, 0.2)).unwrap();
    let counts = run.solution.assignment.counts(2);
    for (k, &ck) in run.cluster_c.iter().enumerate() {
        assert!((ck - 1.0 / (0.2 * counts[k] as f64)).abs() < 1e-12);
    }
}

#[test]
fn objective_trace_never_increases() {
    let pts = common::blobs(&mut common::rng(23), 25);
    let g = gram(&KernelSpec::rbf(0.5).unwrap(), &pts).unwrap();
    for seed in 0..20 {
        let cfg = HeuristicConfig {
            seed,
            ..HeuristicConfig::new(3, 0.1)
        };
        let run = solve_heuristic(&g, &cfg).unwrap();
        assert!(run.trace.windows(2).all(|w| w[1] <= w[0] + 1e-9), "seed {seed}");
        assert!(run.iterations <= cfg.max_iters);
    }
}

#[test]
fn reassignment_rules() {
    // Sphere 0 spans [-1, 1], sphere 1 spans [0.5, 2.5].
    let xs = [-1.0, 1.0, 0.5, 2.5, 0.9, -0.5, 4.0, -2.6];
    let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let g = gram(&KernelSpec::Linear, &pts).unwrap();
    let spheres: Vec<Sphere> = vec![
        solve_svdd(&g, &[0, 1], 1.0).unwrap(),
        solve_svdd(&g, &[2, 3], 1.0).unwrap(),
    ];
    assert!((spheres[0].radius_sq - 1.0).abs() < 1e-9);
    assert!((spheres[1].radius_sq - 1.0).abs() < 1e-9);
    let labels = reassign(&g, &spheres).labels().unwrap();
    // 0.9 lies in both; the center at 1.5 is nearer than the one at 0.
    assert_eq!(labels[4], 1);
    assert_eq!(labels[5], 0);
    // Excess 15 vs 5.25, and 5.76 vs 15.81.
    assert_eq!(labels[6], 1);
    assert_eq!(labels[7], 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn never_beats_the_exact_optimum(seed in 0u64..500, p in 1usize..=2) {
        let pts = common::blobs(&mut common::rng(seed), 9);
        let g = gram(&KernelSpec::Linear, &pts).unwrap();
        let c = 0.5;
        let exact = solve_exact(&MsvddProblem::new(&g, p, c)).unwrap();
        let nu = (p as f64 / (c * 9.0)).min(1.0);
        let run = solve_heuristic(&g, &HeuristicConfig { seed, ..HeuristicConfig::new(p, nu) }).unwrap();
        if let Some(sol) = evaluate_assignment(&g, &run.solution.assignment, p, c, true).unwrap() {
            prop_assert!(sol.objective >= exact.objective - 1e-6);
        }
    }
}
