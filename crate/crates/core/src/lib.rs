//! Core numerics for learning the solution manifold of an optimization problem.
//!
//! The crate is organised bottom-up:
//!
//! * [`testfuncs`] – the synthetic 2-D objectives whose optima form curves.
//! * [`world`] – planar revolute arm, circular obstacles and the trajectory cost.
//! * [`trajectory`] – residual trajectory primitives, the smoothness metric and
//!   the Gaussian proposal over trajectories.
//! * [`generative`] – the importance-weighted, capacity-regularised VAE.
//! * [`refine`] – CHOMP projection and cross-entropy refinement.

pub mod error;
pub mod generative;
pub mod refine;
pub mod testfuncs;
pub mod trajectory;
pub mod world;

pub use error::{Error, Result};
