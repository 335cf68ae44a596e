//! Multisphere SVDD: problem and solution types, assignment evaluation and
//! the exact branch-and-bound solver.

mod bnb;
mod delta;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{MsvddError, Result};
use crate::kernel::FeatureSpace;
use crate::scalar::{min_members, Scalar};
use crate::svdd::{solve_sphere, SvddSolution, SvddSolver};

pub use bnb::{branch, branch_point, child_spheres, insertion_increment, lower_bound, solve_exact};
pub use delta::{
    compute_delta_dual, compute_delta_dual_literal, compute_delta_primal, deltas_dual, deltas_primal,
    verify_bigm_feasibility,
};

/// Point-to-sphere assignment; `None` marks an unassigned point.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pub sphere_of: Vec<Option<usize>>,
}

impl Assignment {
    pub fn unassigned(n: usize) -> Self {
        Self {
            sphere_of: vec![None; n],
        }
    }

    pub fn from_labels(labels: &[usize]) -> Self {
        Self {
            sphere_of: labels.iter().map(|&j| Some(j)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.sphere_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sphere_of.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.sphere_of.iter().all(Option::is_some)
    }

    /// Labels of a complete assignment.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.sphere_of.iter().copied().collect()
    }

    pub fn unassigned_points(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.sphere_of[i].is_none()).collect()
    }

    /// Members of each of the `p` spheres, in increasing index order.
    pub fn members(&self, p: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); p];
        for (i, s) in self.sphere_of.iter().enumerate() {
            if let Some(j) = *s {
                if j < p {
                    out[j].push(i);
                }
            }
        }
        out
    }

    pub fn counts(&self, p: usize) -> Vec<usize> {
        let mut out = vec![0; p];
        for j in self.sphere_of.iter().flatten() {
            if *j < p {
                out[*j] += 1;
            }
        }
        out
    }

    /// Applies the label permutation `j -> perm[j]`.
    pub fn relabel(&self, perm: &[usize]) -> Assignment {
        Assignment {
            sphere_of: self.sphere_of.iter().map(|s| s.map(|j| perm[j])).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Search exhausted; the incumbent is globally optimal.
    Optimal,
    /// Time limit hit; best incumbent with its proven lower bound.
    TimeLimitIncumbent,
    /// No assignment satisfies the cardinality requirements.
    Infeasible,
    /// Produced by the alternating heuristic; no optimality claim.
    Heuristic,
}

/// One improvement of the incumbent during the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct IncumbentRecord<T> {
    pub objective: T,
    /// Seconds since the start of the solve.
    pub wall_time: f64,
    pub assignment: Assignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct MsvddSolution<T> {
    pub assignment: Assignment,
    pub spheres: Vec<SvddSolution<T>>,
    /// `sum_j R_j + C sum_i xi_i`.
    pub objective: T,
    /// Proven lower bound on the optimum (equal to `objective` for
    /// heuristic runs, where it carries no certificate).
    pub lower_bound: T,
    pub status: SolveStatus,
    pub c: T,
    pub node_count: usize,
    pub incumbent_log: Vec<IncumbentRecord<T>>,
    /// Wall-clock seconds.
    pub elapsed: f64,
}

impl<T: Scalar> MsvddSolution<T> {
    pub fn p(&self) -> usize {
        self.spheres.len()
    }

    /// Relative gap `(objective - lower_bound) / objective`, zero when the
    /// objective is zero and the bound matches it.
    pub fn relative_gap(&self) -> T {
        let diff = (self.objective - self.lower_bound).max(T::zero());
        if self.objective.abs() <= T::epsilon() {
            diff
        } else {
            diff / self.objective.abs()
        }
    }

    /// Swaps sphere labels according to `perm` (sphere `j` becomes `perm[j]`).
    pub fn relabel(&self, perm: &[usize]) -> Result<MsvddSolution<T>> {
        let p = self.p();
        let mut seen = vec![false; p];
        if perm.len() != p || perm.iter().any(|&j| j >= p || std::mem::replace(&mut seen[j], true)) {
            return Err(MsvddError::input("relabel expects a permutation of the sphere labels"));
        }
        let mut spheres = self.spheres.clone();
        for (j, s) in self.spheres.iter().enumerate() {
            spheres[perm[j]] = s.clone();
        }
        let mut out = self.clone();
        out.assignment = self.assignment.relabel(perm);
        out.objective = total_objective(&spheres);
        out.spheres = spheres;
        Ok(out)
    }

    /// Errors `xi_i` indexed by point.
    pub fn errors(&self) -> Vec<T> {
        let mut xi = vec![T::zero(); self.assignment.len()];
        for s in &self.spheres {
            for (&i, &e) in s.members.iter().zip(&s.errors) {
                xi[i] = e;
            }
        }
        xi
    }

    /// Training points strictly outside their assigned sphere.
    pub fn training_outliers(&self, tol: T) -> usize {
        self.spheres.iter().map(|s| s.strict_outliers(tol)).sum()
    }
}

/// Sum of per-sphere objectives in a canonical (sorted) order, so the total
/// does not depend on how the spheres are labelled.
pub fn total_objective<T: Scalar>(spheres: &[SvddSolution<T>]) -> T {
    let mut parts: Vec<T> = spheres.iter().map(|s| s.objective).collect();
    parts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    parts.into_iter().fold(T::zero(), |acc, v| acc + v)
}

/// Exact problem definition.
#[derive(Debug, Clone)]
pub struct MsvddProblem<'a, T: Scalar, S: ?Sized> {
    pub space: &'a S,
    pub p: usize,
    pub c: T,
    /// Require `C * |S_j| >= 1` for every sphere (default on).
    pub enforce_cardinality: bool,
    pub time_limit: Option<Duration>,
    pub seed: u64,
    /// Threads servicing the node queue. With one worker the search, and
    /// hence the incumbent log, is deterministic.
    pub workers: usize,
    /// Restarts of the alternating heuristic used for the root incumbent.
    pub heuristic_restarts: usize,
    pub solver: SvddSolver<T>,
}

impl<'a, T: Scalar, S: FeatureSpace<T> + ?Sized> MsvddProblem<'a, T, S> {
    pub fn new(space: &'a S, p: usize, c: T) -> Self {
        Self {
            space,
            p,
            c,
            enforce_cardinality: true,
            time_limit: None,
            seed: 0,
            workers: 1,
            heuristic_restarts: 5,
            solver: SvddSolver::default(),
        }
    }

    pub fn with_cardinality(mut self, on: bool) -> Self {
        self.enforce_cardinality = on;
        self
    }

    pub fn with_time_limit(mut self, limit: Option<Duration>) -> Self {
        self.time_limit = limit;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn n(&self) -> usize {
        self.space.len()
    }

    /// Minimum number of members per sphere at a leaf.
    pub fn required_members(&self) -> usize {
        if self.enforce_cardinality {
            min_members(self.c)
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(MsvddError::input("p must be at least 1"));
        }
        if self.p > self.n() {
            return Err(MsvddError::input(format!(
                "p = {} exceeds the number of points {}",
                self.p,
                self.n()
            )));
        }
        if !(self.c > T::zero()) || !self.c.is_finite() {
            return Err(MsvddError::input(format!("C must be positive, got {}", self.c)));
        }
        Ok(())
    }

    /// Whether the cardinality requirements can be met at all.
    pub fn is_feasible(&self) -> bool {
        self.p.saturating_mul(self.required_members()) <= self.n()
    }
}

/// Solves every sphere of a complete assignment with the common `c`.
///
/// Returns `None` when the assignment is not feasible: a sphere is empty, or
/// (with `enforce_cardinality`) has fewer than `ceil(1/C)` members.
pub fn evaluate_assignment<T: Scalar, S: FeatureSpace<T> + ?Sized>(
    space: &S,
    assignment: &Assignment,
    p: usize,
    c: T,
    enforce_cardinality: bool,
) -> Result<Option<MsvddSolution<T>>> {
    if assignment.len() != space.len() || !assignment.is_complete() {
        return Err(MsvddError::input("assignment must be complete and cover every point"));
    }
    if assignment.sphere_of.iter().flatten().any(|&j| j >= p) {
        return Err(MsvddError::input("assignment uses a sphere label >= p"));
    }
    let need = if enforce_cardinality { min_members(c) } else { 1 };
    let members = assignment.members(p);
    if members.iter().any(|m| m.len() < need) {
        return Ok(None);
    }
    let solver = SvddSolver::default();
    let spheres = members
        .iter()
        .map(|m| solve_sphere(&solver, space, m, c, None))
        .collect::<Result<Vec<_>>>()?;
    let objective = total_objective(&spheres);
    let lower_bound = spheres.iter().map(|s| s.dual_objective).sum();
    Ok(Some(MsvddSolution {
        assignment: assignment.clone(),
        spheres,
        objective,
        lower_bound,
        status: SolveStatus::Heuristic,
        c,
        node_count: 0,
        incumbent_log: Vec::new(),
        elapsed: 0.0,
    }))
}
