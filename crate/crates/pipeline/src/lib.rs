//! Experiment orchestration on top of `lsmo-core`: test-function runs,
//! planar-arm motion planning runs, homotopy labelling, scene-change
//! adaptation and result tables. Every run is reproducible from its config
//! seed; wall-clock timings are logged, never written to artifacts.

pub mod adapt;
pub mod config;
pub mod error;
pub mod homotopy;
pub mod output;
pub mod planar;
pub mod records;
pub mod seeds;
pub mod sweep;
pub mod tables;
pub mod testfunc;

pub use error::{PipelineError, Result};
