//! Exact multisphere support vector data description.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod detection;
pub mod error;
pub mod experiments;
pub mod heuristic;
pub mod kernel;
pub mod multisphere;
pub mod scalar;
pub mod svdd;

pub use error::{MsvddError, Result};
pub use heuristic::{solve_heuristic, HeuristicConfig, HeuristicRun};
pub use kernel::{eval_kernel, feature_distance_sq, gram, EuclideanSpace, FeatureSpace, GramMatrix, KernelSpec};
pub use multisphere::{evaluate_assignment, solve_exact, Assignment, MsvddProblem, MsvddSolution, SolveStatus};
pub use scalar::{Scalar, Tolerances};
pub use svdd::{recover_radius, solve_sphere, solve_svdd, SvddSolution, SvddSolver};

pub type Gram = GramMatrix<f64>;
pub type Gram32 = GramMatrix<f32>;
pub type Sphere = SvddSolution<f64>;
pub type Sphere32 = SvddSolution<f32>;
pub type Solution = MsvddSolution<f64>;
pub type Solution32 = MsvddSolution<f32>;
pub type Dataset = data::Dataset<f64>;
pub type Model = detection::DetectionModel<f64>;
