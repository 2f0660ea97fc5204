//! Learning-guided fuzzing of quadrotor control-parameter ranges.
//!
//! The crate is organized along the pipeline:
//!
//! * [`paramspec`]: parameter tables and configuration arithmetic
//! * [`simkernel`]: quadrotor plant, cascaded controller, mission runner
//! * [`monitor`]: unstable-state detectors and the pre-arm check
//! * [`flightlog`]: log campaigns, log files, segmentation
//! * [`predictor`]: recurrent state-change predictor (surrogate)
//! * [`search`]: mean-shift sampling and differential-evolution search
//! * [`guideline`]: Pareto-optimal range guidelines
//! * [`pipeline`]: stage orchestration and reports

pub mod error;
pub mod flightlog;
pub mod guideline;
pub mod monitor;
pub mod paramspec;
pub mod pipeline;
pub mod predictor;
pub mod rng;
pub mod search;
pub mod simkernel;

pub use error::{Error, Result};
pub use paramspec::{Configuration, ParameterSpec, ParameterTable};
