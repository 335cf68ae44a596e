//! Big-M constants and a certificate check against the mixed-integer
//! formulation with constraints
//! `||phi(x_i) - c_j||^2 <= R_j + xi_i + Delta_i (1 - z_ij)`.
//!
//! The branch-and-bound never forms these constraints; the constants are only
//! used to confirm that its solutions are feasible for the big-M model.

use crate::error::{MsvddError, Result};
use crate::kernel::{squared_distance, FeatureSpace, GramMatrix};
use crate::multisphere::MsvddSolution;
use crate::scalar::Scalar;

/// `max_k ||x_i - x_k||^2`.
pub fn compute_delta_primal<T: Scalar>(points: &[Vec<T>], i: usize) -> Result<T> {
    let xi = points
        .get(i)
        .ok_or_else(|| MsvddError::input(format!("index {i} out of range")))?;
    Ok(points.iter().map(|x| squared_distance(xi, x)).fold(T::zero(), T::max))
}

pub fn deltas_primal<T: Scalar>(points: &[Vec<T>]) -> Result<Vec<T>> {
    (0..points.len()).map(|i| compute_delta_primal(points, i)).collect()
}

fn penalty_weight<T: Scalar>(k: T, c: T) -> T {
    if k < T::zero() {
        c
    } else {
        T::zero()
    }
}

/// Kernel big-M constant
/// `K_ii - 2 sum_k pi_ik K_ik + sum_k sum_l (C - pi_kl)^2 K_kl`,
/// with `pi_ik = C` when `K_ik < 0` and `0` otherwise.
///
/// Each term bounds its counterpart in
/// `||phi(x_i) - sum_k alpha_k phi(x_k)||^2` for any `0 <= alpha <= C`:
/// negative cross terms contribute at most `2 C |K_ik|`, and the quadratic
/// term is at most `C^2` times the sum of the nonnegative entries.
pub fn compute_delta_dual<T: Scalar>(gram: &GramMatrix<T>, c: T, i: usize) -> T {
    let n = gram.n();
    let two = T::lit(2.0);
    let linear = (0..n).fold(T::zero(), |acc, k| {
        let kik = gram.get(i, k);
        acc + penalty_weight(kik, c) * kik
    });
    gram.get(i, i) - two * linear + quadratic_term(gram, c)
}

/// The same constant with the linear term added rather than subtracted:
/// `K_ii + 2 sum_k pi_ik K_ik + sum_k sum_l (C - pi_kl)^2 K_kl`.
///
/// When some `K_ik < 0` this is smaller than [`compute_delta_dual`] and can
/// fall below the largest attainable feature distance, so it is kept for
/// comparison only.
pub fn compute_delta_dual_literal<T: Scalar>(gram: &GramMatrix<T>, c: T, i: usize) -> T {
    let n = gram.n();
    let two = T::lit(2.0);
    let linear = (0..n).fold(T::zero(), |acc, k| {
        let kik = gram.get(i, k);
        acc + penalty_weight(kik, c) * kik
    });
    gram.get(i, i) + two * linear + quadratic_term(gram, c)
}

fn quadratic_term<T: Scalar>(gram: &GramMatrix<T>, c: T) -> T {
    let n = gram.n();
    let mut total = T::zero();
    for k in 0..n {
        for l in 0..n {
            let kkl = gram.get(k, l);
            let w = c - penalty_weight(kkl, c);
            total += w * w * kkl;
        }
    }
    total
}

pub fn deltas_dual<T: Scalar>(gram: &GramMatrix<T>, c: T) -> Vec<T> {
    let quad = quadratic_term(gram, c);
    let two = T::lit(2.0);
    (0..gram.n())
        .map(|i| {
            let linear = (0..gram.n()).fold(T::zero(), |acc, k| {
                let kik = gram.get(i, k);
                acc + penalty_weight(kik, c) * kik
            });
            gram.get(i, i) - two * linear + quad
        })
        .collect()
}

/// Checks every big-M constraint of a complete solution at tolerance `1e-6`,
/// together with `sum_j z_ij = 1`, `xi >= 0`, `sum_i alpha_ij = 1` and
/// `0 <= alpha_ij <= C z_ij` for spheres solved through the dual.
pub fn verify_bigm_feasibility<T: Scalar, S: FeatureSpace<T> + ?Sized>(
    space: &S,
    solution: &MsvddSolution<T>,
    deltas: &[T],
) -> bool {
    let n = space.len();
    let tol = T::lit(1e-6);
    if deltas.len() != n || solution.assignment.len() != n || !solution.assignment.is_complete() {
        return false;
    }
    let xi = solution.errors();
    if xi.iter().any(|&e| e < -tol) {
        return false;
    }
    let all: Vec<usize> = (0..n).collect();
    for (j, sphere) in solution.spheres.iter().enumerate() {
        if sphere.members.is_empty() {
            continue;
        }
        if !sphere.centroid_fallback {
            let total: T = sphere.alpha.iter().copied().sum();
            if (total - T::one()).abs() > tol {
                return false;
            }
            if sphere.alpha.iter().any(|&a| a < -tol || a > solution.c + tol) {
                return false;
            }
        }
        if sphere
            .members
            .iter()
            .any(|&i| solution.assignment.sphere_of[i] != Some(j))
        {
            return false;
        }
        let d2 = space.distances_sq(&sphere.members, &sphere.alpha, &all);
        for i in 0..n {
            let z = if solution.assignment.sphere_of[i] == Some(j) {
                T::one()
            } else {
                T::zero()
            };
            let rhs = sphere.radius_sq + xi[i] + deltas[i] * (T::one() - z);
            if d2[i] > rhs + tol {
                return false;
            }
        }
    }
    true
}
