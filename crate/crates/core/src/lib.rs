//! Discontinuity tests at a loan-limit threshold in event-study panels.
//!
//! The crate covers amount rounding and conforming/jumbo classification,
//! kernel-weighted least squares with absorbed fixed effects and two-way
//! clustered covariance, the event-study, curve and gap estimators, a
//! Monte Carlo study of misclassification bias, a panel-integrity linter and
//! a synthetic panel generator.

pub mod classify;
pub mod error;
pub mod estimators;
pub mod fe;
pub mod io;
pub mod kernel;
pub mod model;
pub mod montecarlo;
pub mod rng;
pub mod synth;
pub mod validator;

pub use classify::{classify, is_conforming, misclassification_share, round_hmda, ClassificationScheme};
pub use error::{Error, Result};
pub use kernel::{kernel_value, panel_weights, WeightVector};
pub use model::{
    log_distance, tau_name, xi_name, CalendarEntry, Dimension, DropReason, DroppedCoefficient, EstimateSet,
    EventCalendar, EventPanel, KernelFamily, KernelSpec, LoanRecord, ModelSpec, Outcome,
};
