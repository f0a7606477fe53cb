//! Higher-order secant updates for approximating `p`-th derivative tensors,
//! with the symmetric tensor algebra they need, iterate generators and
//! diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod diagnostics;
pub mod error;
pub mod iterates;
pub mod linalg;
pub mod random;
pub mod secant;
pub mod suites;
pub mod tensor;

pub use calculus::{rosenbrock, PolynomialOracle, QuadratureSpec, Rosenbrock, TestFunction};
pub use diagnostics::{run_experiment, DiagnosticsRecord, Experiment};
pub use error::{Error, Result};
pub use iterates::{IterateTrace, Provenance};
pub use secant::{hosu_update_explicit, SkipPolicy, StepData, UpdateState, WeightRule};
pub use tensor::{DenseTensor, Permutation, SymTensor};
