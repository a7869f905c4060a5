//! Multi-agent Q-learning auction simulator with an experiment harness.
//!
//! The library is organized as a pipeline:
//!
//! * [`auction`] — bid grids, first/second-price settlement, counterfactual
//!   action values.
//! * [`agent`] — tabular Q-learning bidders with epsilon-greedy or Boltzmann
//!   exploration and synchronous (counterfactual) or asynchronous updates.
//! * [`trial`] — one simulated market run to convergence, plus its summary
//!   outcomes.
//! * [`experiment`] — many trials under randomized configurations, written
//!   to a stable CSV schema.
//! * [`stats`] — summaries, OLS with HC1 robust errors, and interacted
//!   treatment-effect estimates over experiment datasets.
//!
//! Everything is deterministic given the seeds in play: a trial is a pure
//! function of its [`trial::TrialConfig`], and an experiment is a pure
//! function of its master seed regardless of thread count.

pub mod agent;
pub mod auction;
pub mod error;
pub mod experiment;
pub mod stats;
pub mod trial;

pub use error::{Error, Result};
