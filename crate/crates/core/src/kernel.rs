//! Kernel functions, Gram matrices and feature-space distances.
//!
//! Every solver in the crate reads geometry through the [`FeatureSpace`]
//! trait. [`GramMatrix`] implements it with kernel expansions only (the
//! feature map is never materialized); [`EuclideanSpace`] implements it with
//! explicit centers in input space and serves as the direct route for the
//! linear kernel.

use serde::{Deserialize, Serialize};

use crate::error::{MsvddError, Result};
use crate::scalar::{Scalar, Tolerances};

/// Kernel choice.
///
/// The RBF kernel uses `K(x, y) = exp(-||x - y||^2 / sigma_squared)`, i.e. the
/// grid value is the denominator itself, without a factor of two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[serde(bound(deserialize = "T: Scalar"))]
pub enum KernelSpec<T> {
    Linear,
    Rbf { sigma_squared: T },
}

impl<T: Scalar> KernelSpec<T> {
    pub fn rbf(sigma_squared: T) -> Result<Self> {
        if !(sigma_squared > T::zero()) || !sigma_squared.is_finite() {
            return Err(MsvddError::input(format!(
                "RBF sigma^2 must be positive and finite, got {sigma_squared}"
            )));
        }
        Ok(KernelSpec::Rbf { sigma_squared })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { sigma_squared } => Self::rbf(sigma_squared).map(|_| ()),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, KernelSpec::Linear)
    }

    /// Short label used in reports, e.g. `linear` or `rbf(0.25)`.
    pub fn label(&self) -> String {
        match self {
            KernelSpec::Linear => "linear".to_string(),
            KernelSpec::Rbf { sigma_squared } => format!("rbf({sigma_squared})"),
        }
    }
}

/// Evaluates the kernel on two points of equal dimension.
pub fn eval_kernel<T: Scalar>(spec: &KernelSpec<T>, x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(MsvddError::input(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Ok(eval_unchecked(spec, x, y))
}

#[inline]
pub(crate) fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

#[inline]
pub(crate) fn squared_distance<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| {
        let d = a - b;
        acc + d * d
    })
}

#[inline]
pub(crate) fn eval_unchecked<T: Scalar>(spec: &KernelSpec<T>, x: &[T], y: &[T]) -> T {
    match *spec {
        KernelSpec::Linear => dot(x, y),
        KernelSpec::Rbf { sigma_squared } => (-squared_distance(x, y) / sigma_squared).exp(),
    }
}

pub(crate) fn check_points<T: Scalar>(points: &[Vec<T>]) -> Result<usize> {
    let first = points.first().ok_or_else(|| MsvddError::input("empty point list"))?;
    let d = first.len();
    if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| p.len() != d) {
        return Err(MsvddError::input(format!(
            "point {i} has dimension {}, expected {d}",
            p.len()
        )));
    }
    Ok(d)
}

/// Geometry of a finite point set in some (possibly implicit) feature space.
pub trait FeatureSpace<T: Scalar>: Sync {
    /// Number of points.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inner product `<phi(x_i), phi(x_k)>`.
    fn inner(&self, i: usize, k: usize) -> T;

    /// Squared distances `||phi(x_t) - sum_a w_a phi(x_{m_a})||^2` for every
    /// `t` in `targets`, where `m = members`.
    fn distances_sq(&self, members: &[usize], weights: &[T], targets: &[usize]) -> Vec<T>;
}

/// Symmetric Gram matrix of a point set under a kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct GramMatrix<T> {
    n: usize,
    values: Vec<T>,
    spec: KernelSpec<T>,
}

/// Builds the Gram matrix of `points` under `spec`.
pub fn gram<T: Scalar>(spec: &KernelSpec<T>, points: &[Vec<T>]) -> Result<GramMatrix<T>> {
    spec.validate()?;
    check_points(points)?;
    let n = points.len();
    let mut values = vec![T::zero(); n * n];
    for i in 0..n {
        for k in i..n {
            let v = eval_unchecked(spec, &points[i], &points[k]);
            values[i * n + k] = v;
            values[k * n + i] = v;
        }
    }
    Ok(GramMatrix { n, values, spec: *spec })
}

impl<T: Scalar> GramMatrix<T> {
    /// Wraps a precomputed matrix; `values` is row-major `n x n`.
    pub fn from_values(spec: KernelSpec<T>, n: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n * n || n == 0 {
            return Err(MsvddError::input(format!(
                "expected a nonempty {n}x{n} matrix, got {} values",
                values.len()
            )));
        }
        for i in 0..n {
            for k in 0..i {
                if values[i * n + k] != values[k * n + i] {
                    return Err(MsvddError::input(format!("matrix not symmetric at ({i},{k})")));
                }
            }
        }
        Ok(Self { n, values, spec })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spec(&self) -> &KernelSpec<T> {
        &self.spec
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> T {
        self.values[i * self.n + k]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Restriction of the matrix to `indices` (in that order).
    pub fn submatrix(&self, indices: &[usize]) -> GramMatrix<T> {
        let m = indices.len();
        let mut values = Vec::with_capacity(m * m);
        for &i in indices {
            for &k in indices {
                values.push(self.get(i, k));
            }
        }
        GramMatrix {
            n: m,
            values,
            spec: self.spec,
        }
    }
}

fn clamp_distance<T: Scalar>(v: T, tol: T) -> T {
    if v < T::zero() && v >= -tol {
        T::zero()
    } else {
        v
    }
}

impl<T: Scalar> FeatureSpace<T> for GramMatrix<T> {
    fn len(&self) -> usize {
        self.n
    }

    fn inner(&self, i: usize, k: usize) -> T {
        self.get(i, k)
    }

    fn distances_sq(&self, members: &[usize], weights: &[T], targets: &[usize]) -> Vec<T> {
        let tol = Tolerances::<T>::for_scalar().clamp;
        let mut quad = T::zero();
        for (&a, &wa) in members.iter().zip(weights) {
            let row = self.row(a);
            let s = members
                .iter()
                .zip(weights)
                .fold(T::zero(), |acc, (&b, &wb)| acc + wb * row[b]);
            quad += wa * s;
        }
        targets
            .iter()
            .map(|&t| {
                let row = self.row(t);
                let cross = members
                    .iter()
                    .zip(weights)
                    .fold(T::zero(), |acc, (&b, &wb)| acc + wb * row[b]);
                let two = T::one() + T::one();
                clamp_distance(row[t] - two * cross + quad, tol)
            })
            .collect()
    }
}

/// `||phi(x_i) - sum_k alpha_k phi(x_k)||^2` from Gram entries only.
///
/// `alpha` ranges over all `n` points and must sum to one.
pub fn feature_distance_sq<T: Scalar>(gram: &GramMatrix<T>, i: usize, alpha: &[T]) -> Result<T> {
    if alpha.len() != gram.n() {
        return Err(MsvddError::input(format!(
            "alpha has length {}, expected {}",
            alpha.len(),
            gram.n()
        )));
    }
    if i >= gram.n() {
        return Err(MsvddError::input(format!("index {i} out of range")));
    }
    let total: T = alpha.iter().copied().sum();
    if (total - T::one()).abs() > T::lit(1e-8).max(T::epsilon() * T::lit(16.0)) {
        return Err(MsvddError::input(format!("alpha must sum to 1, sums to {total}")));
    }
    let (members, weights): (Vec<usize>, Vec<T>) = alpha
        .iter()
        .enumerate()
        .filter(|(_, &a)| a != T::zero())
        .map(|(k, &a)| (k, a))
        .unzip();
    Ok(gram.distances_sq(&members, &weights, &[i])[0])
}

/// Explicit points with the Euclidean inner product.
///
/// Distances are taken against the explicit center `sum_a w_a x_a`, which is
/// the input-space counterpart of a linear-kernel [`GramMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanSpace<T> {
    points: Vec<Vec<T>>,
}

impl<T: Scalar> EuclideanSpace<T> {
    pub fn new(points: Vec<Vec<T>>) -> Result<Self> {
        check_points(&points)?;
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn center(&self, members: &[usize], weights: &[T]) -> Vec<T> {
        let d = self.points[0].len();
        let mut c = vec![T::zero(); d];
        for (&a, &w) in members.iter().zip(weights) {
            for (ck, &xk) in c.iter_mut().zip(&self.points[a]) {
                *ck += w * xk;
            }
        }
        c
    }
}

impl<T: Scalar> FeatureSpace<T> for EuclideanSpace<T> {
    fn len(&self) -> usize {
        self.points.len()
    }

    fn inner(&self, i: usize, k: usize) -> T {
        dot(&self.points[i], &self.points[k])
    }

    fn distances_sq(&self, members: &[usize], weights: &[T], targets: &[usize]) -> Vec<T> {
        let c = self.center(members, weights);
        targets.iter().map(|&t| squared_distance(&self.points[t], &c)).collect()
    }
}
