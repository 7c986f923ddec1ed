//! Synthetic workers and their answers under the generalized Dawid-Skene
//! response model.

use rand::Rng;

use crate::error::Result;
use crate::model::{Task, WorkerPrior};

/// A worker with reliability `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Worker {
    pub id: usize,
    pub p: f64,
}

pub fn sample_worker<R: Rng + ?Sized>(prior: &WorkerPrior, id: usize, rng: &mut R) -> Result<Worker> {
    Ok(Worker { id, p: prior.sample(rng)? })
}

/// Probability that `worker` answers +1 on `task`: `q p + (1-q)(1-p)`.
pub fn prob_positive(q: f64, p: f64) -> f64 {
    q * p + (1.0 - q) * (1.0 - p)
}

/// Draws one answer in `{-1, +1}`.
pub fn respond<R: Rng + ?Sized>(task: &Task, worker: &Worker, rng: &mut R) -> i8 {
    let u: f64 = rng.random();
    if u < prob_positive(task.q, worker.p) {
        1
    } else {
        -1
    }
}
