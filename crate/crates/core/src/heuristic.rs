//! Alternating location-allocation baseline (ClusterSVDD style).
//!
//! Starts from a random partition into `p` clusters, fits one SVDD per
//! cluster, moves every point to the sphere with the smallest boundary
//! excess, and repeats until the assignment stops changing.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MsvddError, Result};
use crate::kernel::FeatureSpace;
use crate::multisphere::{total_objective, Assignment, MsvddSolution, SolveStatus};
use crate::scalar::{min_members, Scalar};
use crate::svdd::{solve_sphere, SvddSolution, SvddSolver};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct HeuristicConfig<T> {
    pub p: usize,
    /// Assumed outlier fraction per cluster; cluster `k` uses `C_k = 1 / (nu N_k)`.
    pub nu: T,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl<T: Scalar> HeuristicConfig<T> {
    pub fn new(p: usize, nu: T) -> Self {
        Self {
            p,
            nu,
            max_iters: 200,
            restarts: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > T::zero() && self.nu <= T::one()) {
            return Err(MsvddError::input(format!("nu must lie in (0, 1], got {}", self.nu)));
        }
        if self.max_iters == 0 {
            return Err(MsvddError::input("max_iters must be at least 1"));
        }
        if self.p == 0 {
            return Err(MsvddError::input("p must be at least 1"));
        }
        Ok(())
    }
}

/// How the per-sphere penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyRule<T> {
    /// `C_k = 1 / (nu N_k)` with `N_k` the current cluster size.
    PerCluster { nu: T },
    /// One global `C`; with `enforce_cardinality` clusters are topped up to
    /// `ceil(1/C)` members after each reassignment.
    Global { c: T, enforce_cardinality: bool },
}

impl<T: Scalar> PenaltyRule<T> {
    fn penalty(&self, size: usize) -> T {
        match *self {
            PenaltyRule::PerCluster { nu } => T::one() / (nu * T::lit(size as f64)),
            PenaltyRule::Global { c, .. } => c,
        }
    }

    fn required_members(&self) -> usize {
        match *self {
            PenaltyRule::PerCluster { .. } => 1,
            PenaltyRule::Global { c, enforce_cardinality } => {
                if enforce_cardinality {
                    min_members(c)
                } else {
                    1
                }
            }
        }
    }
}

/// Outcome of the alternating heuristic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct HeuristicRun<T> {
    /// Best restart; `objective` is the heuristic's own objective
    /// `sum_k R_k + sum_k C_k sum_{i in k} xi_i`.
    pub solution: MsvddSolution<T>,
    /// Penalty used for each sphere.
    pub cluster_c: Vec<T>,
    /// Objective after every accepted iteration of the best restart.
    pub trace: Vec<T>,
    pub iterations: usize,
    /// True when the run stopped because the assignment repeated.
    pub converged: bool,
    pub restart: usize,
}

/// Runs the ClusterSVDD-style heuristic with `C_k = 1 / (nu N_k)`.
pub fn solve_heuristic<T: Scalar, S: FeatureSpace<T> + ?Sized>(
    space: &S,
    config: &HeuristicConfig<T>,
) -> Result<HeuristicRun<T>> {
    config.validate()?;
    alternate(
        space,
        config.p,
        PenaltyRule::PerCluster { nu: config.nu },
        config.max_iters,
        config.restarts.max(1),
        config.seed,
    )
}

/// Moves every point to the sphere with the smallest excess
/// `max(0, d^2 - R_j)`; ties go to the nearer center, then the lower label.
pub fn reassign<T: Scalar, S: FeatureSpace<T> + ?Sized>(space: &S, spheres: &[SvddSolution<T>]) -> Assignment {
    let d2 = all_distances(space, spheres);
    let labels: Vec<usize> = (0..space.len()).map(|i| best_sphere(spheres, &d2, i)).collect();
    Assignment::from_labels(&labels)
}

fn all_distances<T: Scalar, S: FeatureSpace<T> + ?Sized>(space: &S, spheres: &[SvddSolution<T>]) -> Vec<Vec<T>> {
    let all: Vec<usize> = (0..space.len()).collect();
    spheres
        .iter()
        .map(|s| {
            if s.members.is_empty() {
                vec![T::infinity(); all.len()]
            } else {
                space.distances_sq(&s.members, &s.alpha, &all)
            }
        })
        .collect()
}

fn best_sphere<T: Scalar>(spheres: &[SvddSolution<T>], d2: &[Vec<T>], i: usize) -> usize {
    let mut best = 0;
    let mut key = (T::infinity(), T::infinity());
    for (j, s) in spheres.iter().enumerate() {
        let d = d2[j][i];
        let excess = (d - s.radius_sq).max(T::zero());
        if excess < key.0 || (excess == key.0 && d < key.1) {
            key = (excess, d);
            best = j;
        }
    }
    best
}

struct Iterate<T> {
    labels: Vec<usize>,
    spheres: Vec<SvddSolution<T>>,
    objective: T,
}

fn fit<T: Scalar, S: FeatureSpace<T> + ?Sized>(
    solver: &SvddSolver<T>,
    space: &S,
    p: usize,
    labels: &[usize],
    rule: &PenaltyRule<T>,
) -> Result<Iterate<T>> {
    let members = Assignment::from_labels(labels).members(p);
    let spheres = members
        .iter()
        .map(|m| solve_sphere(solver, space, m, rule.penalty(m.len()), None))
        .collect::<Result<Vec<_>>>()?;
    let objective = total_objective(&spheres);
    Ok(Iterate {
        labels: labels.to_vec(),
        spheres,
        objective,
    })
}

/// Refills clusters below `need` members, taking from the largest cluster the
/// point that is cheapest to move (largest current error first for empty
/// clusters).
fn repair<T: Scalar>(labels: &mut [usize], p: usize, need: usize, current: &Iterate<T>, d2: &[Vec<T>]) {
    let n = labels.len();
    let mut xi = vec![T::zero(); n];
    for s in &current.spheres {
        for (&i, &e) in s.members.iter().zip(&s.errors) {
            xi[i] = e;
        }
    }
    loop {
        let mut counts = vec![0usize; p];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(target) = (0..p).find(|&j| counts[j] < need) else {
            break;
        };
        let donors: Vec<usize> = (0..n).filter(|&i| counts[labels[i]] > need).collect();
        if donors.is_empty() {
            break;
        }
        let pick = if counts[target] == 0 {
            // Reseed an empty cluster with the worst-fitting point.
            *donors
                .iter()
                .max_by(|&&a, &&b| {
                    xi[a]
                        .partial_cmp(&xi[b])
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(b.cmp(&a))
                })
                .expect("donors nonempty")
        } else {
            let r = current.spheres[target].radius_sq;
            *donors
                .iter()
                .min_by(|&&a, &&b| {
                    let ea = d2[target][a] - r;
                    let eb = d2[target][b] - r;
                    ea.partial_cmp(&eb).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
                })
                .expect("donors nonempty")
        };
        labels[pick] = target;
    }
}

fn initial_partition(n: usize, p: usize, need: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut labels = vec![0; n];
    let seeded = (p * need).min(n);
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = if rank < seeded { rank % p } else { rng.gen_range(0..p) };
    }
    labels
}

/// Location-allocation loop shared by the baseline and the exact solver's
/// root incumbent.
///
/// Iterations whose objective would increase are rejected and end the run,
/// so the recorded trace is nonincreasing.
pub fn alternate<T: Scalar, S: FeatureSpace<T> + ?Sized>(
    space: &S,
    p: usize,
    rule: PenaltyRule<T>,
    max_iters: usize,
    restarts: usize,
    seed: u64,
) -> Result<HeuristicRun<T>> {
    let n = space.len();
    if p == 0 || p > n {
        return Err(MsvddError::input(format!("need 1 <= p <= n, got p = {p}, n = {n}")));
    }
    let need = rule.required_members();
    if p * need > n {
        return Err(MsvddError::input(format!(
            "{p} clusters of at least {need} points do not fit in {n} points"
        )));
    }
    let solver = SvddSolver::default();
    let mut best: Option<HeuristicRun<T>> = None;
    for restart in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(restart as u64));
        let labels = initial_partition(n, p, need, &mut rng);
        let mut current = fit(&solver, space, p, &labels, &rule)?;
        let mut trace = vec![current.objective];
        let mut converged = false;
        let mut iterations = 1;
        while iterations < max_iters {
            let d2 = all_distances(space, &current.spheres);
            let mut next: Vec<usize> = (0..n).map(|i| best_sphere(&current.spheres, &d2, i)).collect();
            repair(&mut next, p, need, &current, &d2);
            if next == current.labels {
                converged = true;
                break;
            }
            let candidate = fit(&solver, space, p, &next, &rule)?;
            iterations += 1;
            let slack = T::lit(1e-12) * current.objective.abs().max(T::one());
            if candidate.objective > current.objective + slack {
                log::debug!(
                    "restart {restart}: rejecting iteration {iterations} ({} > {})",
                    candidate.objective,
                    current.objective
                );
                break;
            }
            trace.push(candidate.objective);
            current = candidate;
        }
        let cluster_c = current.spheres.iter().map(|s| s.c).collect::<Vec<_>>();
        let implied_c = match rule {
            PenaltyRule::PerCluster { nu } => T::lit(p as f64) / (nu * T::lit(n as f64)),
            PenaltyRule::Global { c, .. } => c,
        };
        let objective = current.objective;
        let run = HeuristicRun {
            solution: MsvddSolution {
                assignment: Assignment::from_labels(&current.labels),
                lower_bound: objective,
                objective,
                spheres: current.spheres,
                status: SolveStatus::Heuristic,
                c: implied_c,
                node_count: 0,
                incumbent_log: Vec::new(),
                elapsed: 0.0,
            },
            cluster_c,
            trace,
            iterations,
            converged,
            restart,
        };
        if best
            .as_ref()
            .is_none_or(|b| run.solution.objective < b.solution.objective)
        {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
