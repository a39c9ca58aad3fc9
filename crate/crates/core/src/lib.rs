//! Multivariate Brenier distribution functions and the pivotal two-sample
//! Wasserstein permutation test built on them.
//!
//! The pooled sample is matched onto a deterministic grid in the unit ball by an exact
//! optimal assignment ([`bdf::fit_ebdf`]); the test statistic is the W2 distance between
//! the images of the two samples, and its null law depends only on the grid and the
//! sample sizes ([`hypothesis::resample_null`]).

pub mod bdf;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod hypothesis;
pub mod io;
pub mod points;
pub mod rng;
pub mod transport;

pub use error::{Error, Result};
pub use grid::{generate_ball_grid, BallGrid, GridMethod};
pub use points::Point;
