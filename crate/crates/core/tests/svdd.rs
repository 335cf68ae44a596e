mod common;

use msvdd::svdd::svdd_objective_monotone_check;
use msvdd::{feature_distance_sq, gram, recover_radius, solve_sphere, solve_svdd, KernelSpec, SvddSolver};
use proptest::prelude::*;

/// Minimum over `R >= 0` of `R + C sum max(0, d - R)`; the optimum sits at
/// 0 or at one of the `d` values.
fn best_radius_value(d: &[f64], c: f64) -> f64 {
    std::iter::once(0.0)
        .chain(d.iter().copied())
        .map(|r| r + c * d.iter().map(|&di| (di - r).max(0.0)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// 1-D SVDD by scanning the center over `[min, max]` with the given step.
fn brute_force_1d(xs: &[f64], c: f64, step: f64) -> f64 {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let steps = ((hi - lo) / step).ceil() as usize;
    (0..=steps)
        .map(|k| {
            let center = (lo + k as f64 * step).min(hi);
            let d: Vec<f64> = xs.iter().map(|x| (x - center).powi(2)).collect();
            best_radius_value(&d, c)
        })
        .fold(f64::INFINITY, f64::min)
}

fn column(xs: &[f64]) -> Vec<Vec<f64>> {
    xs.iter().map(|&x| vec![x]).collect()
}

#[test]
fn three_point_line_matches_brute_force() {
    let xs = [0.0, 1.0, 10.0];
    let g = gram(&KernelSpec::Linear, &column(&xs)).unwrap();
    let s = solve_svdd(&g, &[0, 1, 2], 0.4).unwrap();
    let oracle = brute_force_1d(&xs, 0.4, 1e-4);
    assert!((s.objective - oracle).abs() < 1e-4, "{} vs {oracle}", s.objective);
}

#[test]
fn hard_margin_is_the_enclosing_interval() {
    // With C = 1 no point may stay outside: the sphere is the smallest
    // interval around the data.
    let xs = [-1.0, 0.3, 2.5, 4.0];
    let g = gram(&KernelSpec::Linear, &column(&xs)).unwrap();
    let s = solve_svdd(&g, &[0, 1, 2, 3], 1.0).unwrap();
    assert!((s.objective - 6.25).abs() < 1e-6);
    assert!((s.radius_sq - 6.25).abs() < 1e-6);
    assert!(s.errors.iter().all(|&e| e < 1e-6));
}

#[test]
fn recover_radius_hand_examples() {
    let (r, xi) = recover_radius(&[4.0, 4.0, 4.0], 1.0);
    assert_eq!((r, xi), (4.0, vec![0.0; 3]));
    let (r, xi) = recover_radius(&[9.0], 1.0);
    assert_eq!((r, xi), (0.0, vec![9.0]));
    let (r, xi) = recover_radius(&[1.0, 100.0], 0.6);
    assert_eq!((r, xi), (1.0, vec![0.0, 99.0]));
}

#[test]
fn infeasible_penalty_is_rejected_and_fallback_used() {
    let pts = common::random_points(&mut common::rng(1), 4, 2);
    let g = gram(&KernelSpec::Linear, &pts).unwrap();
    assert!(solve_svdd(&g, &[0, 1, 2, 3], 0.2).is_err());
    let s = solve_sphere(&SvddSolver::default(), &g, &[0, 1, 2, 3], 0.2, None).unwrap();
    assert!(s.centroid_fallback);
    assert_eq!(s.radius_sq, 0.0);
    let centroid_cost: f64 = (0..4)
        .map(|i| {
            let cx = pts.iter().map(|p| p[0]).sum::<f64>() / 4.0;
            let cy = pts.iter().map(|p| p[1]).sum::<f64>() / 4.0;
            (pts[i][0] - cx).powi(2) + (pts[i][1] - cy).powi(2)
        })
        .sum();
    assert!((s.objective - 0.2 * centroid_cost).abs() < 1e-9);
}

#[test]
fn single_precision_tracks_double_precision() {
    let pts = common::blobs(&mut common::rng(7), 15);
    let pts32: Vec<Vec<f32>> = pts.iter().map(|p| p.iter().map(|&v| v as f32).collect()).collect();
    let members: Vec<usize> = (0..15).collect();
    let s64 = solve_svdd(&gram(&KernelSpec::Linear, &pts).unwrap(), &members, 0.3).unwrap();
    let s32 = solve_svdd(&gram(&KernelSpec::Linear, &pts32).unwrap(), &members, 0.3f32).unwrap();
    assert!((s64.objective - s32.objective as f64).abs() < 1e-3 * s64.objective.max(1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solution_invariants(
        pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 2..14),
        c_frac in 0.0f64..1.0,
        rbf in any::<bool>(),
    ) {
        let n = pts.len();
        let c = 1.0 / n as f64 + c_frac * (1.0 - 1.0 / n as f64);
        let kernel = if rbf { KernelSpec::rbf(1.5).unwrap() } else { KernelSpec::Linear };
        let g = gram(&kernel, &pts).unwrap();
        let members: Vec<usize> = (0..n).collect();
        let s = solve_svdd(&g, &members, c).unwrap();
        let total: f64 = s.alpha.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-8);
        prop_assert!(s.alpha.iter().all(|&a| a >= 0.0 && a <= c + 1e-10));
        let penalty: f64 = s.errors.iter().sum();
        prop_assert!((s.objective - (s.radius_sq + c * penalty)).abs() < 1e-8);
        let dense = s.dense_alpha(n);
        for (a, &i) in members.iter().enumerate() {
            let d2 = feature_distance_sq(&g, i, &dense).unwrap();
            prop_assert!((s.errors[a] - (d2 - s.radius_sq).max(0.0)).abs() < 1e-7);
        }
        prop_assert!(s.dual_objective <= s.objective + 1e-9);
        prop_assert!(s.objective - s.dual_objective < 1e-6);
    }

    #[test]
    fn one_dimensional_oracle(xs in prop::collection::vec(-5.0f64..5.0, 1..7), c_frac in 0.0f64..1.0) {
        let n = xs.len();
        let c = 1.0 / n as f64 + c_frac * (1.0 - 1.0 / n as f64);
        let g = gram(&KernelSpec::Linear, &column(&xs)).unwrap();
        let members: Vec<usize> = (0..n).collect();
        let s = solve_svdd(&g, &members, c).unwrap();
        let oracle = brute_force_1d(&xs, c, 1e-3);
        // The scan is an upper bound. Moving the center by step/2 changes
        // each squared distance by at most step * spread (spread <= 10),
        // and at most max(1, C n) of them count.
        prop_assert!(s.objective <= oracle + 1e-7);
        prop_assert!(oracle - s.objective <= 0.5e-3 * 2.0 * 10.0 * (c * n as f64).max(1.0) + 1e-7);
    }

    #[test]
    fn adding_a_point_never_lowers_the_objective(
        pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 3..10),
        c in 0.5f64..1.0,
    ) {
        let g = gram(&KernelSpec::Linear, &pts).unwrap();
        let members: Vec<usize> = (0..pts.len() - 1).collect();
        prop_assert!(svdd_objective_monotone_check(&g, &members, pts.len() - 1, c).unwrap());
    }
}
