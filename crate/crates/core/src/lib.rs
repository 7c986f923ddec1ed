//! Budget-constrained binary labeling with a crowd of unreliable workers.
//!
//! Tasks carry a latent quality `q` and workers a reliability `p`; a worker
//! answers +1 with probability `q p + (1-q)(1-p)`. The crate simulates such
//! crowds, infers labels by message passing, spectral estimation or MAP
//! alternating maximization, schedules queries adaptively by estimated task
//! difficulty, and evaluates closed-form error bounds.

pub mod adaptive;
pub mod altmin;
pub mod assign;
pub mod cli;
pub mod error;
pub mod model;
pub mod mp;
pub mod spectral;
pub mod synth;
pub mod theory;

pub use error::{Error, Result};
