//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All solvers are written against [`Scalar`] so the same code runs in `f64`
//! (the default used by the CLI and the experiment pipeline) and `f32`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type usable by the solvers: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Numerical tolerances used across the solvers.
///
/// The `f64` values are the reference ones; [`Tolerances::for_scalar`] widens
/// them for single precision where the reference values sit below machine
/// epsilon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    /// Primal/dual feasibility (capped simplex membership, constraint checks).
    pub feasibility: T,
    /// Relative duality gap that terminates the sphere subsolver.
    pub duality_gap: T,
    /// Objective comparisons between solvers and oracles.
    pub objective: T,
    /// Negative squared distances above `-clamp` are rounded to zero.
    pub clamp: T,
    /// Iteration cap for the sphere subsolver.
    pub max_iterations: usize,
}

impl<T: Scalar> Tolerances<T> {
    pub fn for_scalar() -> Self {
        if T::epsilon() > T::lit(1e-10) {
            Self {
                feasibility: T::lit(1e-4),
                duality_gap: T::lit(1e-5),
                objective: T::lit(1e-3),
                clamp: T::lit(1e-5),
                max_iterations: 50_000,
            }
        } else {
            Self {
                feasibility: T::lit(1e-7),
                duality_gap: T::lit(1e-8),
                objective: T::lit(1e-6),
                clamp: T::lit(1e-9),
                max_iterations: 50_000,
            }
        }
    }
}

impl<T: Scalar> Default for Tolerances<T> {
    fn default() -> Self {
        Self::for_scalar()
    }
}

/// Minimum number of members a sphere needs so that `C * members >= 1`.
///
/// This is the integer form of the cardinality constraint; a small slack
/// absorbs the rounding of values such as `1.0 / 0.1`.
pub fn min_members<T: Scalar>(c: T) -> usize {
    let inv = T::one() / c;
    let slack = T::lit(1e-9) * inv.max(T::one());
    let k = (inv - slack).ceil();
    k.to_usize().unwrap_or(usize::MAX).max(1)
}

/// Largest integer `k` with `C * k <= 1` (up to rounding slack).
pub fn max_outliers<T: Scalar>(c: T) -> usize {
    let inv = T::one() / c;
    let slack = T::lit(1e-9) * inv.max(T::one());
    (inv + slack).floor().to_usize().unwrap_or(usize::MAX)
}
