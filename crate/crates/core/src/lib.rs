//! Weak positivity, dilations and lifts for kernels with values in an ordered *-space.
//!
//! A kernel `k: X x X -> Z` is a table of elements of `Z` (complex scalars or
//! Hermitian `d x d` matrices). The modules build on each other:
//!
//! - [`zspace`]: the ordered space `Z`, its cone and gramians.
//! - [`algebra`]: finite *-semigroups and their actions on points.
//! - [`kernels`]: kernel tables, Hermiticity, invariance and positivity verdicts.
//! - [`dilation`]: Kolmogorov decomposition, the induced *-representation and bound constants.
//! - [`repkernel`]: the reproducing kernel space realising a decomposition.
//! - [`lifts`]: operator kernels on modules and semigroup maps lifted to ordinary kernels.
//! - [`problem`] and [`cli`]: problem files, task pipelines, reports and exit codes.

pub mod algebra;
pub mod cli;
pub mod dilation;
pub mod json;
pub mod kernels;
pub mod lifts;
pub mod linalg;
pub mod problem;
pub mod repkernel;
pub mod zspace;

pub use algebra::{Action, AlgebraError, StarSemigroup};
pub use dilation::{
    bound_constant, build_kolmogorov, build_representation, BoundEstimate, BoundForm, DilationError,
    KolmogorovDecomposition, StarRepresentation,
};
pub use kernels::{weak_positivity, Kernel, KernelError, PositivityStatus, PositivityVerdict, Witness};
pub use lifts::{LiftError, OperatorKernel, SemigroupMapT, VEModuleH};
pub use problem::{run_problem, run_problem_json, Command, ProblemError, ProblemFile, Report};
pub use repkernel::{build_rk, RKSpace, RkError};
pub use zspace::{GramTensor, ZElement, ZSpace};
