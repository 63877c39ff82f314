//! Diffusion RLS over adaptive networks with cyclostationary colored inputs.
//!
//! The crate simulates adapt-then-combine diffusion RLS and non-cooperative
//! RLS on a network of nodes observing a common linear model, and iterates
//! the deterministic recursions that predict the mean weight error and the
//! network mean-square deviation of DRLS over time.
//!
//! * [`network`]: topologies, left-stochastic combination matrices, noise levels
//! * [`signals`]: periodic-variance AR(1) regressors and their covariances
//! * [`filters`]: RLS and DRLS state machines
//! * [`theory`]: transient mean and mean-square models
//! * [`harness`]: Monte Carlo ensembles and curve comparison
//! * [`cli`]: configuration files and result serialization

pub mod cli;
pub mod error;
pub mod filters;
pub mod harness;
pub mod network;
pub mod scenario;
pub mod signals;
pub mod theory;

pub use error::{Error, Result};
pub use scenario::{PhiInit, Scenario};
