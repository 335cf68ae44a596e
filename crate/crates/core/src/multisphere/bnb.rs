//! Best-first branch-and-bound over partial assignments.
//!
//! A node fixes the sphere of some points. Its bound is the sum of the dual
//! values of the spheres over the points fixed so far: every completion only
//! adds points, and a sphere's optimum never decreases when points are added.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::error::{MsvddError, Result};
use crate::heuristic::{alternate, PenaltyRule};
use crate::kernel::FeatureSpace;
use crate::multisphere::{
    evaluate_assignment, total_objective, Assignment, IncumbentRecord, MsvddProblem, MsvddSolution, SolveStatus,
};
use crate::scalar::{min_members, Scalar};
use crate::svdd::{solve_sphere, SvddSolution, SvddSolver};

type Sphere<T> = Option<Arc<SvddSolution<T>>>;

/// Guaranteed rise of a sphere's optimum when one point at squared distance
/// `d2` from its current center joins it.
///
/// Obtained by moving weight `t` of the current dual solution onto the new
/// point and maximizing over `t`, so it never exceeds the true increase.
pub fn insertion_increment<T: Scalar>(sphere: &SvddSolution<T>, d2: T) -> T {
    if !(d2 > T::zero()) {
        return T::zero();
    }
    let c = sphere.c;
    if sphere.centroid_fallback {
        let s = c * T::lit(sphere.members.len() as f64);
        let t = c.min(T::one() - s);
        if !(t > T::zero()) {
            return T::zero();
        }
        return s * t / (s + t) * d2;
    }
    let v = sphere.dual_objective;
    if d2 <= v {
        return T::zero();
    }
    let t = ((d2 - v) / (T::lit(2.0) * d2)).min(c.min(T::one()));
    (t * (d2 - v) - t * t * d2).max(T::zero())
}

/// Children of a node: one per nonempty sphere plus the first empty sphere.
/// Empty spheres are interchangeable, so the others would only repeat the
/// same subtree under a different labelling.
pub fn child_spheres(counts: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = (0..counts.len()).filter(|&j| counts[j] > 0).collect();
    if let Some(e) = counts.iter().position(|&c| c == 0) {
        out.push(e);
        out.sort_unstable();
    }
    out
}

fn solve_node_spheres<T: Scalar, S: FeatureSpace<T> + ?Sized>(
    solver: &SvddSolver<T>,
    space: &S,
    node: &Assignment,
    p: usize,
    c: T,
) -> Result<Vec<Sphere<T>>> {
    node.members(p)
        .into_iter()
        .map(|m| {
            if m.is_empty() {
                Ok(None)
            } else {
                solve_with_retry(solver, space, &m, c, None).map(|s| Some(Arc::new(s)))
            }
        })
        .collect()
}

/// Sum of the sphere dual values of a partial assignment.
pub fn lower_bound<T: Scalar, S: FeatureSpace<T> + ?Sized>(space: &S, node: &Assignment, p: usize, c: T) -> Result<T> {
    check_node(space, node, p)?;
    let spheres = solve_node_spheres(&SvddSolver::default(), space, node, p, c)?;
    Ok(bound_of(&spheres))
}

/// Point to branch on next: the unassigned point with the largest difference
/// between its second-cheapest and cheapest insertion, ties to the lowest
/// index. `None` for a complete assignment.
pub fn branch_point<T: Scalar, S: FeatureSpace<T> + ?Sized>(
    space: &S,
    node: &Assignment,
    p: usize,
    c: T,
) -> Result<Option<usize>> {
    check_node(space, node, p)?;
    let unassigned = node.unassigned_points();
    if unassigned.is_empty() {
        return Ok(None);
    }
    let spheres = solve_node_spheres(&SvddSolver::default(), space, node, p, c)?;
    let costs = insertion_costs(space, &spheres, &unassigned);
    Ok(Some(unassigned[select(&costs).0]))
}

/// Child assignments of `node` (empty for a complete assignment).
pub fn branch<T: Scalar, S: FeatureSpace<T> + ?Sized>(
    space: &S,
    node: &Assignment,
    p: usize,
    c: T,
) -> Result<Vec<Assignment>> {
    let Some(i) = branch_point(space, node, p, c)? else {
        return Ok(Vec::new());
    };
    Ok(child_spheres(&node.counts(p))
        .into_iter()
        .map(|j| {
            let mut child = node.clone();
            child.sphere_of[i] = Some(j);
            child
        })
        .collect())
}

fn check_node<T: Scalar, S: FeatureSpace<T> + ?Sized>(space: &S, node: &Assignment, p: usize) -> Result<()> {
    if node.len() != space.len() {
        return Err(MsvddError::input("assignment length does not match the data"));
    }
    if node.sphere_of.iter().flatten().any(|&j| j >= p) {
        return Err(MsvddError::input("assignment uses a sphere label >= p"));
    }
    Ok(())
}

fn bound_of<T: Scalar>(spheres: &[Sphere<T>]) -> T {
    let mut parts: Vec<T> = spheres.iter().flatten().map(|s| s.dual_objective).collect();
    parts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    parts.into_iter().fold(T::zero(), |acc, v| acc + v)
}

/// `costs[u]` lists the insertion increments of unassigned point `u` for
/// every admissible sphere: each nonempty sphere, plus zero for an empty one.
fn insertion_costs<T: Scalar, S: FeatureSpace<T> + ?Sized>(
    space: &S,
    spheres: &[Sphere<T>],
    unassigned: &[usize],
) -> Vec<Vec<T>> {
    let mut costs = vec![Vec::with_capacity(spheres.len()); unassigned.len()];
    for s in spheres.iter().flatten() {
        let d2 = space.distances_sq(&s.members, &s.alpha, unassigned);
        for (u, d) in d2.into_iter().enumerate() {
            costs[u].push(insertion_increment(s, d));
        }
    }
    if spheres.iter().any(Option::is_none) {
        for c in costs.iter_mut() {
            c.push(T::zero());
        }
    }
    costs
}

/// Returns (position of the branching point, largest guaranteed increase
/// over all unassigned points).
fn select<T: Scalar>(costs: &[Vec<T>]) -> (usize, T) {
    let mut best = 0;
    let mut best_score = T::neg_infinity();
    let mut forced = T::zero();
    for (u, c) in costs.iter().enumerate() {
        let mut lo = T::infinity();
        let mut second = T::infinity();
        for &v in c {
            if v < lo {
                second = lo;
                lo = v;
            } else if v < second {
                second = v;
            }
        }
        if lo.is_finite() {
            forced = forced.max(lo);
        }
        let score = if second.is_finite() { second - lo } else { T::zero() };
        if score > best_score {
            best_score = score;
            best = u;
        }
    }
    (best, forced)
}

fn solve_with_retry<T: Scalar, S: FeatureSpace<T> + ?Sized>(
    solver: &SvddSolver<T>,
    space: &S,
    members: &[usize],
    c: T,
    warm: Option<&[T]>,
) -> Result<SvddSolution<T>> {
    match solve_sphere(solver, space, members, c, warm) {
        Err(MsvddError::Convergence { .. }) if warm.is_some() => solve_sphere(solver, space, members, c, None),
        other => other,
    }
}

struct Node<T> {
    assignment: Assignment,
    spheres: Vec<Sphere<T>>,
    bound: T,
    depth: usize,
    seq: u64,
}

impl<T: Scalar> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Node<T> {}

impl<T: Scalar> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Node<T> {
    // BinaryHeap pops the maximum: smallest bound, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Incumbent<T> {
    objective: T,
    spheres: Vec<SvddSolution<T>>,
    assignment: Assignment,
}

struct State<T> {
    heap: BinaryHeap<Node<T>>,
    incumbent: Option<Incumbent<T>>,
    log: Vec<IncumbentRecord<T>>,
    active: usize,
    nodes: usize,
    seq: u64,
    /// Smallest bound among discarded nodes.
    pruned: T,
    timed_out: bool,
    error: Option<MsvddError>,
}

impl<T: Scalar> State<T> {
    fn incumbent_value(&self) -> T {
        self.incumbent.as_ref().map_or(T::infinity(), |i| i.objective)
    }

    fn offer(&mut self, candidate: Incumbent<T>, start: Instant) {
        if candidate.objective < self.incumbent_value() {
            self.log.push(IncumbentRecord {
                objective: candidate.objective,
                wall_time: start.elapsed().as_secs_f64(),
                assignment: candidate.assignment.clone(),
            });
            self.incumbent = Some(candidate);
        }
    }

    fn push(&mut self, mut node: Node<T>) {
        node.seq = self.seq;
        self.seq += 1;
        self.heap.push(node);
    }
}

fn prune_slack<T: Scalar>(incumbent: T) -> T {
    if incumbent.is_finite() {
        T::lit(1e-9) * incumbent.abs().max(T::one())
    } else {
        T::zero()
    }
}

struct Expansion<T> {
    children: Vec<Node<T>>,
    leaves: Vec<Incumbent<T>>,
    pruned: Option<T>,
}

struct Search<'a, T: Scalar, S: ?Sized> {
    space: &'a S,
    solver: SvddSolver<T>,
    p: usize,
    c: T,
    need: usize,
}

impl<'a, T: Scalar, S: FeatureSpace<T> + ?Sized> Search<'a, T, S> {
    fn expand(&self, node: Node<T>, incumbent: T) -> Result<Expansion<T>> {
        let mut out = Expansion {
            children: Vec::new(),
            leaves: Vec::new(),
            pruned: None,
        };
        let cutoff = incumbent - prune_slack(incumbent);
        if node.bound >= cutoff {
            out.pruned = Some(node.bound);
            return Ok(out);
        }
        let unassigned = node.assignment.unassigned_points();
        let costs = insertion_costs(self.space, &node.spheres, &unassigned);
        let (pos, forced) = select(&costs);
        let strengthened = node.bound + forced;
        if strengthened >= cutoff {
            out.pruned = Some(strengthened);
            return Ok(out);
        }
        let point = unassigned[pos];
        let remaining = unassigned.len() - 1;
        let counts = node.assignment.counts(self.p);
        for j in child_spheres(&counts) {
            let deficit: usize = counts
                .iter()
                .enumerate()
                .map(|(l, &n)| {
                    let n = if l == j { n + 1 } else { n };
                    self.need.saturating_sub(n)
                })
                .sum();
            if deficit > remaining {
                continue;
            }
            let (members, warm) = match &node.spheres[j] {
                Some(s) => {
                    let mut m = s.members.clone();
                    m.push(point);
                    let warm = if s.centroid_fallback {
                        None
                    } else {
                        let mut w = s.alpha.clone();
                        w.push(T::zero());
                        Some(w)
                    };
                    (m, warm)
                }
                None => (vec![point], None),
            };
            let sphere = solve_with_retry(&self.solver, self.space, &members, self.c, warm.as_deref())?;
            let mut spheres = node.spheres.clone();
            spheres[j] = Some(Arc::new(sphere));
            let mut assignment = node.assignment.clone();
            assignment.sphere_of[point] = Some(j);
            if remaining == 0 {
                let spheres: Vec<SvddSolution<T>> = spheres
                    .into_iter()
                    .map(|s| s.map(|a| (*a).clone()).expect("leaf spheres are nonempty"))
                    .collect();
                out.leaves.push(Incumbent {
                    objective: total_objective(&spheres),
                    spheres,
                    assignment,
                });
            } else {
                let bound = bound_of(&spheres);
                out.children.push(Node {
                    assignment,
                    spheres,
                    bound,
                    depth: node.depth + 1,
                    seq: 0,
                });
            }
        }
        Ok(out)
    }

    fn worker(&self, shared: &(Mutex<State<T>>, Condvar), start: Instant, limit: Option<Duration>) {
        let (lock, cv) = shared;
        loop {
            let (node, incumbent) = {
                let mut st = lock.lock().expect("search state poisoned");
                loop {
                    if st.error.is_some() || st.timed_out {
                        return;
                    }
                    if limit.is_some_and(|l| start.elapsed() >= l) {
                        st.timed_out = true;
                        cv.notify_all();
                        return;
                    }
                    if let Some(node) = st.heap.pop() {
                        st.active += 1;
                        st.nodes += 1;
                        let inc = st.incumbent_value();
                        break (node, inc);
                    }
                    if st.active == 0 {
                        cv.notify_all();
                        return;
                    }
                    st = cv
                        .wait_timeout(st, Duration::from_millis(20))
                        .expect("search state poisoned")
                        .0;
                }
            };
            let result = self.expand(node, incumbent);
            let mut st = lock.lock().expect("search state poisoned");
            st.active -= 1;
            match result {
                Ok(exp) => {
                    if let Some(b) = exp.pruned {
                        st.pruned = st.pruned.min(b);
                    }
                    for leaf in exp.leaves {
                        st.offer(leaf, start);
                    }
                    let inc = st.incumbent_value();
                    let cutoff = inc - prune_slack(inc);
                    for child in exp.children {
                        if child.bound < cutoff {
                            st.push(child);
                        } else {
                            st.pruned = st.pruned.min(child.bound);
                        }
                    }
                }
                Err(e) => st.error = Some(e),
            }
            cv.notify_all();
        }
    }
}

fn root_incumbent<T: Scalar, S: FeatureSpace<T> + ?Sized>(
    problem: &MsvddProblem<'_, T, S>,
) -> Result<Option<Incumbent<T>>> {
    let run = match alternate(
        problem.space,
        problem.p,
        PenaltyRule::Global {
            c: problem.c,
            enforce_cardinality: problem.enforce_cardinality,
        },
        100,
        problem.heuristic_restarts,
        problem.seed,
    ) {
        Ok(run) => run,
        Err(MsvddError::Convergence { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let evaluated = evaluate_assignment(
        problem.space,
        &run.solution.assignment,
        problem.p,
        problem.c,
        problem.enforce_cardinality,
    )?;
    Ok(evaluated.map(|s| Incumbent {
        objective: s.objective,
        spheres: s.spheres,
        assignment: s.assignment,
    }))
}

/// Solves the multisphere problem to global optimality (or until the time
/// limit), returning the incumbent, its lower bound and the incumbent log.
pub fn solve_exact<T: Scalar, S: FeatureSpace<T> + ?Sized>(
    problem: &MsvddProblem<'_, T, S>,
) -> Result<MsvddSolution<T>> {
    problem.validate()?;
    let start = Instant::now();
    let n = problem.n();
    let p = problem.p;
    if !problem.is_feasible() {
        return Ok(MsvddSolution {
            assignment: Assignment::unassigned(n),
            spheres: Vec::new(),
            objective: T::infinity(),
            lower_bound: T::infinity(),
            status: SolveStatus::Infeasible,
            c: problem.c,
            node_count: 0,
            incumbent_log: Vec::new(),
            elapsed: start.elapsed().as_secs_f64(),
        });
    }
    let need = if problem.enforce_cardinality {
        min_members(problem.c)
    } else {
        1
    };
    let search = Search {
        space: problem.space,
        solver: problem.solver,
        p,
        c: problem.c,
        need,
    };
    let mut state = State {
        heap: BinaryHeap::new(),
        incumbent: None,
        log: Vec::new(),
        active: 0,
        nodes: 0,
        seq: 0,
        pruned: T::infinity(),
        timed_out: false,
        error: None,
    };
    if let Some(inc) = root_incumbent(problem)? {
        state.offer(inc, start);
    }
    state.push(Node {
        assignment: Assignment::unassigned(n),
        spheres: vec![None; p],
        bound: T::zero(),
        depth: 0,
        seq: 0,
    });
    let shared = (Mutex::new(state), Condvar::new());
    let limit = problem.time_limit;
    if problem.workers <= 1 {
        search.worker(&shared, start, limit);
    } else {
        std::thread::scope(|scope| {
            for _ in 0..problem.workers {
                scope.spawn(|| search.worker(&shared, start, limit));
            }
        });
    }
    let state = shared.0.into_inner().expect("search state poisoned");
    if let Some(e) = state.error {
        return Err(e);
    }
    let open = state.heap.iter().map(|node| node.bound).fold(T::infinity(), T::min);
    let Some(incumbent) = state.incumbent else {
        return Err(MsvddError::input(
            "search ended without a feasible assignment before the time limit",
        ));
    };
    let status = if state.timed_out && !state.heap.is_empty() {
        SolveStatus::TimeLimitIncumbent
    } else {
        SolveStatus::Optimal
    };
    let lower_bound = incumbent.objective.min(state.pruned).min(open);
    Ok(MsvddSolution {
        assignment: incumbent.assignment,
        spheres: incumbent.spheres,
        objective: incumbent.objective,
        lower_bound,
        status,
        c: problem.c,
        node_count: state.nodes,
        incumbent_log: state.log,
        elapsed: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gram, KernelSpec};

    #[test]
    fn orbit_children() {
        assert_eq!(child_spheres(&[0, 0, 0]), vec![0]);
        assert_eq!(child_spheres(&[2, 0, 0]), vec![0, 1]);
        assert_eq!(child_spheres(&[2, 0, 1]), vec![0, 1, 2]);
        assert_eq!(child_spheres(&[1, 3]), vec![0, 1]);
    }

    #[test]
    fn increment_is_a_valid_lower_estimate() {
        let pts: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0], vec![0.4], vec![3.0]];
        let g = gram(&KernelSpec::Linear, &pts).unwrap();
        let solver = SvddSolver::default();
        for c in [0.3, 0.5, 1.0] {
            let base = solve_sphere(&solver, &g, &[0, 1, 2], c, None).unwrap();
            let d2 = g.distances_sq(&base.members, &base.alpha, &[3])[0];
            let grown = solve_sphere(&solver, &g, &[0, 1, 2, 3], c, None).unwrap();
            let inc = insertion_increment(&base, d2);
            assert!(inc >= 0.0);
            assert!(base.dual_objective + inc <= grown.objective + 1e-9, "c {c}");
        }
        // Centroid regime: C m < 1 before and after.
        let base = solve_sphere(&solver, &g, &[0, 1], 0.2, None).unwrap();
        let d2 = g.distances_sq(&base.members, &base.alpha, &[3])[0];
        let grown = solve_sphere(&solver, &g, &[0, 1, 3], 0.2, None).unwrap();
        let inc = insertion_increment(&base, d2);
        assert!((base.objective + inc - grown.objective).abs() < 1e-12);
    }

    #[test]
    fn bound_and_branching_on_partial_nodes() {
        let pts: Vec<Vec<f64>> = [0.0, 0.2, 5.0, 5.3, 2.5].iter().map(|&x| vec![x]).collect();
        let g = gram(&KernelSpec::Linear, &pts).unwrap();
        let root = Assignment::unassigned(5);
        assert_eq!(lower_bound(&g, &root, 2, 0.5).unwrap(), 0.0);
        let mut node = root.clone();
        node.sphere_of[0] = Some(0);
        node.sphere_of[1] = Some(0);
        node.sphere_of[2] = Some(1);
        node.sphere_of[3] = Some(1);
        let b = lower_bound(&g, &node, 2, 0.5).unwrap();
        assert!((b - (0.01 + 0.0225)).abs() < 1e-8, "{b}");
        assert_eq!(branch_point(&g, &node, 2, 0.5).unwrap(), Some(4));
        let kids = branch(&g, &node, 2, 0.5).unwrap();
        assert_eq!(kids.len(), 2);
        assert!(branch(&g, &Assignment::from_labels(&[0, 0, 1, 1, 1]), 2, 0.5)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn solves_two_separated_groups() {
        let pts: Vec<Vec<f64>> = [0.0, 0.2, 0.4, 5.0, 5.3, 5.6].iter().map(|&x| vec![x]).collect();
        let g = gram(&KernelSpec::Linear, &pts).unwrap();
        let sol = solve_exact(&MsvddProblem::new(&g, 2, 0.5)).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let l = sol.assignment.labels().unwrap();
        assert!(l[0] == l[1] && l[1] == l[2] && l[3] == l[4] && l[4] == l[5] && l[0] != l[3]);
        assert!((sol.objective - (0.04 + 0.09)).abs() < 1e-7, "{}", sol.objective);
        assert!(sol.lower_bound <= sol.objective);
        for w in sol.incumbent_log.windows(2) {
            assert!(w[1].objective < w[0].objective);
        }
    }

    #[test]
    fn infeasible_cardinality_is_reported() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let g = gram(&KernelSpec::Linear, &pts).unwrap();
        let sol = solve_exact(&MsvddProblem::new(&g, 2, 0.25)).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(solve_exact(&MsvddProblem::new(&g, 6, 0.5)).is_err());
        assert!(solve_exact(&MsvddProblem::new(&g, 0, 0.5)).is_err());
    }

    #[test]
    fn parallel_workers_agree() {
        let pts: Vec<Vec<f64>> = [0.0, 0.3, 1.1, 4.0, 4.2, 6.0, 6.5, 9.0]
            .iter()
            .map(|&x| vec![x, (x * 1.7f64).sin()])
            .collect();
        let g = gram(&KernelSpec::rbf(2.0).unwrap(), &pts).unwrap();
        let one = solve_exact(&MsvddProblem::new(&g, 3, 0.5)).unwrap();
        let four = solve_exact(&MsvddProblem::new(&g, 3, 0.5).with_workers(4)).unwrap();
        assert!((one.objective - four.objective).abs() < 1e-7);
    }
}
