//! Mixed-variable Bayesian optimization over simulated expert knowledge.
//!
//! The pipeline encodes expert knowledge about a recipe as conditional
//! quality distributions ([`expert`]), simulates a dataset from them, fits
//! an ε-SVR surrogate by cross-validated grid search ([`svr`]), and then
//! optimizes the surrogate with GP-based Bayesian optimization
//! ([`optimizer`]), benchmarking it against random search and a fixed expert
//! recipe ([`harness`]).

pub mod acquisition;
pub mod error;
pub mod exec;
pub mod expert;
pub mod gp;
pub mod harness;
pub mod optim;
pub mod optimizer;
pub mod seed;
pub mod space;
pub mod svr;

pub use error::{Error, Result};
pub use space::{LatentLayout, LatentVector, Point, SearchSpace, Value, VarKind, VariableSpec};
