//! Order selection for nested model families with penalized likelihood,
//! with BEKK-GARCH and Markov-chain families.

pub mod bekk;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod markov;
pub mod matrix;
pub mod nested;
pub mod seed;

pub use error::{FitError, ModelError, OrderError, PenaltyError, SelectionError};
pub use nested::{
    select_order, CandidateFit, Consistency, FitStatus, NestedModelFamily, OrderIndex, PenaltyRule,
    SelectionReport,
};
