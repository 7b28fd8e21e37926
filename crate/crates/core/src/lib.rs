//! Diffusions on manifolds with time-dependent metrics.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod damped;
pub mod error;
pub mod field;
pub mod coupling;
pub mod frame_sde;
pub mod geometry;
pub mod inequalities;
pub mod gradient;
pub mod harness;
pub mod noise;
pub mod quadrature;
pub mod stats;

pub use error::{Error, Result};
pub use field::ScalarField;
pub use geometry::{CurvatureBound, DriftField, FlowKind, FramePoint, MetricFlow, ScaleFn};
pub use harness::{run_experiment, ExperimentConfig, ReportBundle};
pub use inequalities::Verdict;
pub use noise::NoiseStream;
pub use stats::{Estimate, McConfig, VectorEstimate};
