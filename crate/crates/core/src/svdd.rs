//! Single-sphere SVDD.
//!
//! The sphere subproblem is solved through its dual, a concave QP over the
//! capped simplex `{alpha : sum alpha = 1, 0 <= alpha_a <= C}`:
//!
//! ```text
//! max  sum_a alpha_a K_aa - sum_a sum_b alpha_a alpha_b K_ab
//! ```
//!
//! The solver runs projected-gradient ascent with exact projections and a
//! backtracking step, and periodically re-solves the equality-constrained
//! problem on the current free set. Every iterate is dual feasible, so the
//! dual value is always a valid lower bound; the primal value is recovered
//! from the induced center with [`recover_radius`] and the run stops once the
//! two agree to the configured gap.

use serde::{Deserialize, Serialize};

use crate::error::{MsvddError, Result};
use crate::kernel::FeatureSpace;
use crate::scalar::{max_outliers, Scalar, Tolerances};

/// Solution of one sphere subproblem.
///
/// All per-point vectors are aligned with `members`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct SvddSolution<T> {
    pub members: Vec<usize>,
    /// Center weights: the center is `sum_a alpha_a phi(x_{members[a]})`.
    pub alpha: Vec<T>,
    /// Squared radius `R`.
    pub radius_sq: T,
    /// Errors `xi_a = max(0, d_a^2 - R)`.
    pub errors: Vec<T>,
    /// Squared feature-space distances of the members to the center.
    pub distances_sq: Vec<T>,
    /// Primal value `R + C * sum xi`.
    pub objective: T,
    /// Dual value at `alpha`; a certified lower bound on the optimum.
    pub dual_objective: T,
    pub c: T,
    /// Global indices with `0 < alpha < C`.
    pub support_free: Vec<usize>,
    /// Global indices with `alpha = C`.
    pub support_bound: Vec<usize>,
    pub iterations: usize,
    /// Set when `C * |members| < 1`: the radius is pinned at zero and the
    /// center is the centroid. Only produced by [`solve_sphere`].
    pub centroid_fallback: bool,
}

impl<T: Scalar> SvddSolution<T> {
    /// Duality gap `objective - dual_objective`.
    pub fn gap(&self) -> T {
        self.objective - self.dual_objective
    }

    /// Alpha scattered over `n` global indices.
    pub fn dense_alpha(&self, n: usize) -> Vec<T> {
        let mut out = vec![T::zero(); n];
        for (&i, &a) in self.members.iter().zip(&self.alpha) {
            out[i] = a;
        }
        out
    }

    /// Number of members strictly outside the sphere (`d^2 > R + tol`).
    pub fn strict_outliers(&self, tol: T) -> usize {
        self.distances_sq.iter().filter(|&&d| d > self.radius_sq + tol).count()
    }
}

/// Minimizes `g(R) = R + C * sum_i max(0, d_i - R)` over `R >= 0`.
///
/// Returns the smallest minimizer together with the errors
/// `xi_i = max(0, d_i - R)`. `g` is convex and piecewise linear with slope
/// `1 - C * #{d_i > R}`, so the smallest minimizer is the `(k+1)`-th largest
/// distance with `k = floor(1/C)`, or zero when fewer points exist.
pub fn recover_radius<T: Scalar>(distances_sq: &[T], c: T) -> (T, Vec<T>) {
    let k = max_outliers(c);
    let radius = if k >= distances_sq.len() {
        T::zero()
    } else {
        let mut sorted = distances_sq.to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        sorted[k].max(T::zero())
    };
    let errors = distances_sq.iter().map(|&d| (d - radius).max(T::zero())).collect();
    (radius, errors)
}

/// Value of `R + C * sum xi`.
pub fn primal_value<T: Scalar>(radius_sq: T, errors: &[T], c: T) -> T {
    radius_sq + c * errors.iter().copied().sum::<T>()
}

/// Euclidean projection of `y` onto `{x : sum x = total, 0 <= x_a <= cap}`.
///
/// Returns `None` when the set is empty (`cap * len < total`).
pub fn project_capped_simplex<T: Scalar>(y: &[T], cap: T, total: T) -> Option<Vec<T>> {
    let m = y.len();
    if m == 0 || cap * T::lit(m as f64) < total * (T::one() - T::epsilon() * T::lit(4.0)) {
        return None;
    }
    let mass = |tau: T| -> T { y.iter().map(|&v| (v - tau).max(T::zero()).min(cap)).sum::<T>() };
    let mut breaks: Vec<T> = y.iter().flat_map(|&v| [v - cap, v]).collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    // mass is nonincreasing in tau; find lo with mass(breaks[lo]) >= total > mass(breaks[lo+1]).
    let (mut lo, mut hi) = (0usize, breaks.len() - 1);
    if mass(breaks[lo]) <= total {
        lo = 0;
        hi = 0;
    }
    while hi > lo + 1 {
        let mid = (lo + hi) / 2;
        if mass(breaks[mid]) >= total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = if hi == lo {
        breaks[lo]
    } else {
        let (a, b) = (breaks[lo], breaks[hi]);
        let (ma, mb) = (mass(a), mass(b));
        if ma == mb {
            a
        } else {
            a + (ma - total) * (b - a) / (ma - mb)
        }
    };
    let mut x: Vec<T> = y.iter().map(|&v| (v - tau).max(T::zero()).min(cap)).collect();
    let residual = total - x.iter().copied().sum::<T>();
    if residual != T::zero() {
        // Spread the rounding residual over coordinates with room to move.
        let room: Vec<usize> = (0..m)
            .filter(|&a| {
                if residual > T::zero() {
                    x[a] < cap
                } else {
                    x[a] > T::zero()
                }
            })
            .collect();
        if !room.is_empty() {
            let share = residual / T::lit(room.len() as f64);
            for a in room {
                x[a] = (x[a] + share).max(T::zero()).min(cap);
            }
        }
    }
    Some(x)
}

/// Options for the sphere subsolver.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions<T> {
    pub tolerances: Tolerances<T>,
    /// Re-solve on the free set every this many iterations.
    pub polish_every: usize,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::for_scalar(),
            polish_every: 8,
        }
    }
}

struct DualQp<T> {
    m: usize,
    q: Vec<T>,
    diag: Vec<T>,
    cap: T,
}

impl<T: Scalar> DualQp<T> {
    fn new<S: FeatureSpace<T> + ?Sized>(space: &S, members: &[usize], cap: T) -> Self {
        let m = members.len();
        let mut q = vec![T::zero(); m * m];
        for a in 0..m {
            for b in a..m {
                let v = space.inner(members[a], members[b]);
                q[a * m + b] = v;
                q[b * m + a] = v;
            }
        }
        let diag = (0..m).map(|a| q[a * m + a]).collect();
        Self { m, q, diag, cap }
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        (0..self.m)
            .map(|a| {
                self.q[a * self.m..(a + 1) * self.m]
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&v, &w)| acc + v * w)
            })
            .collect()
    }

    /// Dual value given `x` and `Qx`.
    fn value(&self, x: &[T], qx: &[T]) -> T {
        x.iter()
            .zip(&self.diag)
            .zip(qx)
            .fold(T::zero(), |acc, ((&w, &d), &v)| acc + w * (d - v))
    }

    /// Squared distances of the members to the center `sum x_a phi_a`.
    fn distances(&self, x: &[T], qx: &[T]) -> Vec<T> {
        let quad = x.iter().zip(qx).fold(T::zero(), |acc, (&w, &v)| acc + w * v);
        let two = T::lit(2.0);
        self.diag
            .iter()
            .zip(qx)
            .map(|(&d, &v)| (d - two * v + quad).max(T::zero()))
            .collect()
    }

    /// Maximizes the dual on the face fixed by the current free set.
    fn polish(&self, x: &[T], tol: T) -> Option<Vec<T>> {
        let free: Vec<usize> = (0..self.m).filter(|&a| x[a] > tol && x[a] < self.cap - tol).collect();
        if free.is_empty() {
            return None;
        }
        let upper: Vec<usize> = (0..self.m).filter(|&a| x[a] >= self.cap - tol).collect();
        let f = free.len();
        let dim = f + 1;
        let two = T::lit(2.0);
        let mut mat = vec![T::zero(); dim * dim];
        let mut rhs = vec![T::zero(); dim];
        for (r, &a) in free.iter().enumerate() {
            for (s, &b) in free.iter().enumerate() {
                mat[r * dim + s] = two * self.q[a * self.m + b];
            }
            mat[r * dim + f] = T::one();
            mat[f * dim + r] = T::one();
            let coupling = upper.iter().fold(T::zero(), |acc, &u| acc + self.q[a * self.m + u]);
            rhs[r] = self.diag[a] - two * self.cap * coupling;
        }
        rhs[f] = T::one() - self.cap * T::lit(upper.len() as f64);
        let sol = solve_dense(dim, &mut mat, &mut rhs)?;
        let slack = T::lit(1e-9).max(T::epsilon() * T::lit(64.0));
        let mut out = vec![T::zero(); self.m];
        for &u in &upper {
            out[u] = self.cap;
        }
        for (r, &a) in free.iter().enumerate() {
            let v = sol[r];
            if !v.is_finite() || v < -slack || v > self.cap + slack {
                return None;
            }
            out[a] = v;
        }
        project_capped_simplex(&out, self.cap, T::one())
    }
}

/// Gaussian elimination with partial pivoting; `None` on a (near) singular pivot.
fn solve_dense<T: Scalar>(dim: usize, a: &mut [T], b: &mut [T]) -> Option<Vec<T>> {
    let scale = a.iter().fold(T::zero(), |m, &v| m.max(v.abs())).max(T::one());
    let eps = scale * T::epsilon() * T::lit(1e3);
    for col in 0..dim {
        let pivot = (col..dim).max_by(|&r, &s| {
            a[r * dim + col]
                .abs()
                .partial_cmp(&a[s * dim + col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot * dim + col].abs() <= eps {
            return None;
        }
        if pivot != col {
            for k in 0..dim {
                a.swap(pivot * dim + k, col * dim + k);
            }
            b.swap(pivot, col);
        }
        let p = a[col * dim + col];
        for r in (col + 1)..dim {
            let factor = a[r * dim + col] / p;
            if factor == T::zero() {
                continue;
            }
            for k in col..dim {
                let v = a[col * dim + k];
                a[r * dim + k] -= factor * v;
            }
            let v = b[col];
            b[r] -= factor * v;
        }
    }
    let mut x = vec![T::zero(); dim];
    for r in (0..dim).rev() {
        let mut s = b[r];
        for k in (r + 1)..dim {
            s -= a[r * dim + k] * x[k];
        }
        x[r] = s / a[r * dim + r];
    }
    Some(x)
}

/// Projected-gradient solver for the single-sphere dual.
#[derive(Debug, Clone, Copy)]
pub struct SvddSolver<T> {
    pub options: SolverOptions<T>,
}

impl<T: Scalar> Default for SvddSolver<T> {
    fn default() -> Self {
        Self {
            options: SolverOptions::default(),
        }
    }
}

impl<T: Scalar> SvddSolver<T> {
    pub fn new(options: SolverOptions<T>) -> Self {
        Self { options }
    }

    /// Solves the sphere over `members` with penalty `c`.
    ///
    /// `warm`, when given, is an initial alpha aligned with `members`; it is
    /// projected onto the capped simplex and replaced by the uniform start if
    /// that fails.
    pub fn solve<S: FeatureSpace<T> + ?Sized>(
        &self,
        space: &S,
        members: &[usize],
        c: T,
        warm: Option<&[T]>,
    ) -> Result<SvddSolution<T>> {
        validate_members(space.len(), members)?;
        if !(c > T::zero()) || !c.is_finite() {
            return Err(MsvddError::input(format!("C must be positive, got {c}")));
        }
        let m = members.len();
        let product = c * T::lit(m as f64);
        if product < T::one() - T::lit(1e-12) {
            return Err(MsvddError::InfeasibleSubproblem {
                members: m,
                product: product.as_f64(),
            });
        }
        let tol = self.options.tolerances;
        let qp = DualQp::new(space, members, c);
        let uniform = || vec![(T::one() / T::lit(m as f64)).min(c); m];
        let mut alpha = warm
            .filter(|w| w.len() == m && w.iter().all(|v| v.is_finite()))
            .and_then(|w| project_capped_simplex(w, c, T::one()))
            .or_else(|| project_capped_simplex(&uniform(), c, T::one()))
            .unwrap_or_else(uniform);

        let mut qa = qp.apply(&alpha);
        let mut value = qp.value(&alpha, &qa);
        let scale =
            qp.q.chunks(m)
                .map(|row| row.iter().fold(T::zero(), |s, v| s + v.abs()))
                .fold(T::zero(), T::max);
        let mut step = if scale > T::zero() {
            T::one() / (T::lit(2.0) * scale)
        } else {
            T::one()
        };
        let support_tol = tol.feasibility * c.min(T::one());

        let mut iterations = 0;
        let mut stalled = 0;
        loop {
            let d2 = qp.distances(&alpha, &qa);
            let (r, xi) = recover_radius(&d2, c);
            let primal = primal_value(r, &xi, c);
            let gap = primal - value;
            let target = tol.duality_gap * primal.abs().max(T::one());
            if gap <= target {
                break;
            }
            if iterations >= tol.max_iterations || stalled >= 50 {
                if gap <= tol.objective * primal.abs().max(T::one()) {
                    log::debug!("sphere solve stopped at gap {gap} after {iterations} iterations");
                    break;
                }
                return Err(MsvddError::Convergence {
                    iterations,
                    gap: gap.as_f64(),
                    best_alpha: alpha.iter().map(|v| v.as_f64()).collect(),
                });
            }
            if iterations % self.options.polish_every == 0 {
                if let Some(cand) = qp.polish(&alpha, support_tol) {
                    let qc = qp.apply(&cand);
                    let vc = qp.value(&cand, &qc);
                    if vc > value {
                        alpha = cand;
                        qa = qc;
                        value = vc;
                        iterations += 1;
                        continue;
                    }
                }
            }
            let grad: Vec<T> = qp.diag.iter().zip(&qa).map(|(&d, &v)| d - T::lit(2.0) * v).collect();
            let mut accepted = false;
            for _ in 0..60 {
                let y: Vec<T> = alpha.iter().zip(&grad).map(|(&a, &g)| a + step * g).collect();
                let Some(cand) = project_capped_simplex(&y, c, T::one()) else {
                    break;
                };
                let qc = qp.apply(&cand);
                let vc = qp.value(&cand, &qc);
                let (lin, sq) =
                    alpha
                        .iter()
                        .zip(&cand)
                        .zip(&grad)
                        .fold((T::zero(), T::zero()), |(l, s), ((&a, &b), &g)| {
                            let diff = b - a;
                            (l + g * diff, s + diff * diff)
                        });
                if sq == T::zero() {
                    break;
                }
                if vc >= value + lin - sq / (T::lit(2.0) * step) {
                    if vc <= value {
                        stalled += 1;
                    } else {
                        stalled = 0;
                    }
                    if vc >= value {
                        alpha = cand;
                        qa = qc;
                        value = vc;
                    }
                    accepted = true;
                    step *= T::lit(1.5);
                    break;
                }
                step *= T::lit(0.5);
            }
            if !accepted {
                stalled += 1;
                step = if scale > T::zero() {
                    T::one() / (T::lit(2.0) * scale)
                } else {
                    T::one()
                };
            }
            iterations += 1;
        }

        Ok(finish(space, members, c, alpha, value, iterations, support_tol, false))
    }
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Scalar, S: FeatureSpace<T> + ?Sized>(
    space: &S,
    members: &[usize],
    c: T,
    alpha: Vec<T>,
    dual_objective: T,
    iterations: usize,
    support_tol: T,
    centroid_fallback: bool,
) -> SvddSolution<T> {
    let distances_sq = space.distances_sq(members, &alpha, members);
    let (radius_sq, errors) = if centroid_fallback {
        (T::zero(), distances_sq.clone())
    } else {
        recover_radius(&distances_sq, c)
    };
    let objective = primal_value(radius_sq, &errors, c);
    let mut support_free = Vec::new();
    let mut support_bound = Vec::new();
    if !centroid_fallback {
        for (&i, &a) in members.iter().zip(&alpha) {
            if a >= c - support_tol {
                support_bound.push(i);
            } else if a > support_tol {
                support_free.push(i);
            }
        }
    }
    SvddSolution {
        members: members.to_vec(),
        alpha,
        radius_sq,
        errors,
        distances_sq,
        objective,
        dual_objective,
        c,
        support_free,
        support_bound,
        iterations,
        centroid_fallback,
    }
}

fn validate_members(n: usize, members: &[usize]) -> Result<()> {
    if members.is_empty() {
        return Err(MsvddError::input("sphere has no members"));
    }
    if let Some(&bad) = members.iter().find(|&&i| i >= n) {
        return Err(MsvddError::input(format!("member index {bad} out of range")));
    }
    Ok(())
}

/// Solves the classical single-sphere SVDD over `members`.
///
/// Requires `C * |members| >= 1`; otherwise the capped simplex is empty and
/// an [`MsvddError::InfeasibleSubproblem`] is returned.
pub fn solve_svdd<T: Scalar, S: FeatureSpace<T> + ?Sized>(
    space: &S,
    members: &[usize],
    c: T,
) -> Result<SvddSolution<T>> {
    SvddSolver::default().solve(space, members, c, None)
}

/// Sphere subproblem with `R >= 0` kept explicitly.
///
/// Agrees with [`solve_svdd`] when `C * |members| >= 1`. For smaller spheres
/// the optimum pins `R = 0` and places the center at the centroid, with
/// objective `C * sum ||phi(x) - centroid||^2`. Monotone in the member set,
/// so it lower-bounds every superset's sphere objective.
pub fn solve_sphere<T: Scalar, S: FeatureSpace<T> + ?Sized>(
    solver: &SvddSolver<T>,
    space: &S,
    members: &[usize],
    c: T,
    warm: Option<&[T]>,
) -> Result<SvddSolution<T>> {
    validate_members(space.len(), members)?;
    let m = members.len();
    if c * T::lit(m as f64) >= T::one() - T::lit(1e-12) {
        return solver.solve(space, members, c, warm);
    }
    let qp = DualQp::new(space, members, c);
    let alpha = vec![T::one() / T::lit(m as f64); m];
    let qa = qp.apply(&alpha);
    let dual = c * qp.distances(&alpha, &qa).into_iter().sum::<T>();
    let tol = solver.options.tolerances.feasibility;
    Ok(finish(space, members, c, alpha, dual, 0, tol, true))
}

/// Whether adding `extra` to `members` does not lower the sphere objective
/// (beyond `1e-7`). Always expected to hold.
pub fn svdd_objective_monotone_check<T: Scalar, S: FeatureSpace<T> + ?Sized>(
    space: &S,
    members: &[usize],
    extra: usize,
    c: T,
) -> Result<bool> {
    if members.contains(&extra) {
        return Err(MsvddError::input(format!("{extra} is already a member")));
    }
    let base = solve_svdd(space, members, c)?;
    let mut grown = members.to_vec();
    grown.push(extra);
    let bigger = solve_svdd(space, &grown, c)?;
    Ok(bigger.objective >= base.objective - T::lit(1e-7))
}
