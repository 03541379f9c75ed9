//! FDR threshold procedures as functionals of the p-value CDF: finite-sample
//! step-up engine, asymptotic thresholds and limit laws, fixed-point maps
//! between one- and two-stage adaptive procedures, and a seeded Monte Carlo
//! engine.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Golden values are pasted at full oracle precision.
#![cfg_attr(test, allow(clippy::excessive_precision))]

pub mod asymptotics;
pub mod ecdf;
pub mod error;
pub mod fixedpoint;
pub mod model;
pub mod normal;
pub mod procedures;
pub mod simulation;
pub mod stats;

pub use ecdf::LabeledSample;
pub use error::{Error, Result};
pub use model::{AlternativeModel, Family, MixtureModel};
pub use procedures::{ProcedureName, ProcedureSpec, RejectionCurve};
