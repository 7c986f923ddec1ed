//! Iterative message passing on a response graph.
//!
//! Task-to-worker messages `x` and worker-to-task messages `y` live on edges.
//! One iteration is
//!
//! ```text
//! x_{i->j} = sum over edges e' at task i other than (i,j) of A_{e'} y_{e'}
//! y_{j->i} = sum over edges e' at worker j other than (i,j) of A_{e'} x_{e'}
//! ```
//!
//! and the score of task `i` after `k_max` iterations is
//! `sum_j A_ij y^{(k_max-1)}_{j->i}`. Exclusion is by edge identity, so two
//! parallel edges between the same pair still exchange messages.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::assign::ResponseGraph;
use crate::error::{Error, Result};

/// How the worker-to-task messages are seeded.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Independent `N(1, 1)` draws.
    Gaussian,
    /// All ones.
    Ones,
    /// Explicit per-edge values.
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpConfig {
    pub k_max: usize,
    pub init: Init,
    /// Divide `y` by its largest magnitude after every iteration. Keeps the
    /// numbers bounded for large `k_max`; the score scale then no longer
    /// matches unscaled thresholds.
    pub rescale: bool,
}

impl MpConfig {
    pub fn new(k_max: usize) -> Self {
        MpConfig { k_max, init: Init::Gaussian, rescale: false }
    }
}

fn initial_messages<R: Rng + ?Sized>(g: &ResponseGraph, init: &Init, rng: &mut R) -> Result<Vec<f64>> {
    match init {
        Init::Gaussian => Ok((0..g.num_edges())
            .map(|_| 1.0 + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect()),
        Init::Ones => Ok(vec![1.0; g.num_edges()]),
        Init::Given(v) => {
            if v.len() != g.num_edges() {
                return Err(Error::InvalidArgument(format!(
                    "init has {} entries for {} edges",
                    v.len(),
                    g.num_edges()
                )));
            }
            Ok(v.clone())
        }
    }
}

/// Task-side update: `x_e = sum_{e' at task(e), e' != e} A_{e'} y_{e'}`.
pub fn task_update(g: &ResponseGraph, y: &[f64], x: &mut [f64]) {
    for adj in &g.task_edges {
        let s: f64 = adj.iter().map(|&e| g.edges[e].answer as f64 * y[e]).sum();
        for &e in adj {
            x[e] = s - g.edges[e].answer as f64 * y[e];
        }
    }
}

/// Worker-side update: `y_e = sum_{e' at worker(e), e' != e} A_{e'} x_{e'}`.
pub fn worker_update(g: &ResponseGraph, x: &[f64], y: &mut [f64]) {
    for adj in &g.worker_edges {
        let s: f64 = adj.iter().map(|&e| g.edges[e].answer as f64 * x[e]).sum();
        for &e in adj {
            y[e] = s - g.edges[e].answer as f64 * x[e];
        }
    }
}

/// Both updates computed from the same old messages.
pub fn jacobi_sweep(g: &ResponseGraph, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut nx = vec![0.0; x.len()];
    let mut ny = vec![0.0; y.len()];
    task_update(g, y, &mut nx);
    worker_update(g, x, &mut ny);
    (nx, ny)
}

/// `sum_j A_ij y_{j->i}` for every task.
pub fn aggregate(g: &ResponseGraph, y: &[f64]) -> Vec<f64> {
    g.task_edges
        .iter()
        .map(|adj| adj.iter().map(|&e| g.edges[e].answer as f64 * y[e]).sum())
        .collect()
}

/// Per-iteration messages: entry `k` holds `(x^{(k)}, y^{(k)})`, with
/// `x^{(0)}` all zero.
pub fn message_trace<R: Rng + ?Sized>(g: &ResponseGraph, cfg: &MpConfig, rng: &mut R) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let y0 = initial_messages(g, &cfg.init, rng)?;
    let mut out = vec![(vec![0.0; y0.len()], y0)];
    for _ in 1..cfg.k_max {
        let (_, y_prev) = out.last().unwrap();
        let mut x = vec![0.0; y_prev.len()];
        task_update(g, y_prev, &mut x);
        let mut y = vec![0.0; x.len()];
        worker_update(g, &x, &mut y);
        if cfg.rescale {
            rescale(&mut y);
        }
        out.push((x, y));
    }
    Ok(out)
}

fn rescale(y: &mut [f64]) {
    let m = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        y.iter_mut().for_each(|v| *v /= m);
    }
}

/// Task scores after `k_max` iterations. `k_max = 1` is a weighted vote on
/// the initial messages.
pub fn message_passing<R: Rng + ?Sized>(g: &ResponseGraph, cfg: &MpConfig, rng: &mut R) -> Result<Vec<f64>> {
    if cfg.k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be at least 1".into()));
    }
    let mut y = initial_messages(g, &cfg.init, rng)?;
    let mut x = vec![0.0; y.len()];
    for _ in 1..cfg.k_max {
        task_update(g, &y, &mut x);
        worker_update(g, &x, &mut y);
        if cfg.rescale {
            rescale(&mut y);
        }
    }
    Ok(aggregate(g, &y))
}

/// Outcome for one task after thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Positive,
    Negative,
    Defer,
}

impl Decision {
    pub fn label(self) -> Option<i8> {
        match self {
            Decision::Positive => Some(1),
            Decision::Negative => Some(-1),
            Decision::Defer => None,
        }
    }
}

/// Classifies `|x| > threshold` by sign and defers the rest. With a zero
/// threshold every task is classified and an exact zero score is a coin flip.
pub fn decide<R: Rng + ?Sized>(scores: &[f64], threshold: f64, rng: &mut R) -> Vec<Decision> {
    scores.iter().map(|&x| decide_one(x, threshold, rng)).collect()
}

pub fn decide_one<R: Rng + ?Sized>(x: f64, threshold: f64, rng: &mut R) -> Decision {
    if x > threshold {
        Decision::Positive
    } else if x < -threshold {
        Decision::Negative
    } else if threshold <= 0.0 {
        if rng.random::<bool>() {
            Decision::Positive
        } else {
            Decision::Negative
        }
    } else {
        Decision::Defer
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::{collect, regular_random_graph, BudgetLedger, BudgetMode, Edge};
    use crate::model::{Task, WorkerPrior};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_graph(m: usize, ell: usize, r: usize, seed: u64) -> ResponseGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = regular_random_graph(m, ell, r, &mut rng).unwrap();
        let tasks: Vec<Task> = (0..m).map(|id| Task { id, q: if id % 3 == 0 { 0.2 } else { 0.9 } }).collect();
        let mut l = BudgetLedger::new(usize::MAX, BudgetMode::Hard);
        collect(&shape, &tasks, &WorkerPrior::spammer_hammer(0.4), &mut rng, &mut l).unwrap().0
    }

    /// Direct evaluation of the update rules from node-pair sums.
    fn oracle_scores(g: &ResponseGraph, y0: &[f64], k_max: usize) -> Vec<f64> {
        let mut y = y0.to_vec();
        for _ in 1..k_max {
            let x: Vec<f64> = (0..g.edges.len())
                .map(|e| {
                    (0..g.edges.len())
                        .filter(|&f| f != e && g.edges[f].task == g.edges[e].task)
                        .map(|f| g.edges[f].answer as f64 * y[f])
                        .sum()
                })
                .collect();
            y = (0..g.edges.len())
                .map(|e| {
                    (0..g.edges.len())
                        .filter(|&f| f != e && g.edges[f].worker == g.edges[e].worker)
                        .map(|f| g.edges[f].answer as f64 * x[f])
                        .sum()
                })
                .collect();
        }
        (0..g.m)
            .map(|i| (0..g.edges.len()).filter(|&f| g.edges[f].task == i).map(|f| g.edges[f].answer as f64 * y[f]).sum())
            .collect()
    }

    #[test]
    fn unanimous_single_task() {
        let edges = vec![Edge { task: 0, worker: 0, answer: 1 }; 3];
        let g = ResponseGraph::new(1, 1, edges).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = MpConfig { k_max: 1, init: Init::Ones, rescale: false };
        assert_eq!(message_passing(&g, &cfg, &mut rng).unwrap(), vec![3.0]);
    }

    #[test]
    fn two_iterations_by_hand() {
        // Task 0 answered by workers 0 and 1; task 1 by worker 1 only.
        let edges = vec![
            Edge { task: 0, worker: 0, answer: 1 },
            Edge { task: 0, worker: 1, answer: -1 },
            Edge { task: 1, worker: 1, answer: 1 },
        ];
        let g = ResponseGraph::new(2, 2, edges).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = MpConfig { k_max: 2, init: Init::Ones, rescale: false };
        // x: e0 = A1*y1 = -1, e1 = A0*y0 = 1, e2 = 0 (no other edge at task 1).
        // y: e0 = 0 (worker 0 has one edge), e1 = A2*x2 = 0, e2 = A1*x1 = -1.
        // scores: task 0 = 1*0 + (-1)*0 = 0, task 1 = 1*(-1) = -1.
        assert_eq!(message_passing(&g, &cfg, &mut rng).unwrap(), vec![0.0, -1.0]);
    }

    #[test]
    fn matches_oracle_on_random_graphs() {
        for seed in 0..5 {
            let g = random_graph(20, 3, 4, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y0: Vec<f64> = (0..g.num_edges()).map(|_| rng.random::<f64>() - 0.3).collect();
            for k in 1..5 {
                let cfg = MpConfig { k_max: k, init: Init::Given(y0.clone()), rescale: false };
                let got = message_passing(&g, &cfg, &mut rng).unwrap();
                let want = oracle_scores(&g, &y0, k);
                for (a, b) in got.iter().zip(&want) {
                    assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
                }
            }
        }
    }

    #[test]
    fn rescale_preserves_signs() {
        let g = random_graph(30, 4, 4, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let plain = message_passing(&g, &MpConfig { k_max: 4, init: Init::Ones, rescale: false }, &mut rng).unwrap();
        let scaled = message_passing(&g, &MpConfig { k_max: 4, init: Init::Ones, rescale: true }, &mut rng).unwrap();
        for (a, b) in plain.iter().zip(&scaled) {
            assert_eq!(a.signum(), b.signum());
        }
    }

    #[test]
    fn zero_threshold_coin_flip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = decide(&vec![0.0; 2000], 0.0, &mut rng);
        let pos = d.iter().filter(|&&x| x == Decision::Positive).count();
        assert!(d.iter().all(|&x| x != Decision::Defer));
        assert!((900..1100).contains(&pos));
        assert_eq!(decide(&[2.0, -2.0, 1.0], 1.0, &mut rng), vec![Decision::Positive, Decision::Negative, Decision::Defer]);
    }

    proptest! {
        #[test]
        fn scores_are_linear_in_init(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0, k in 1usize..5) {
            let g = random_graph(15, 3, 3, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u: Vec<f64> = (0..g.num_edges()).map(|_| rng.random::<f64>()).collect();
            let v: Vec<f64> = (0..g.num_edges()).map(|_| rng.random::<f64>()).collect();
            let w: Vec<f64> = u.iter().zip(&v).map(|(p, q)| a * p + b * q).collect();
            let run = |init: Vec<f64>, rng: &mut ChaCha8Rng| {
                message_passing(&g, &MpConfig { k_max: k, init: Init::Given(init), rescale: false }, rng).unwrap()
            };
            let su = run(u, &mut rng);
            let sv = run(v, &mut rng);
            let sw = run(w, &mut rng);
            for i in 0..g.m {
                let want = a * su[i] + b * sv[i];
                prop_assert!((sw[i] - want).abs() <= 1e-9 * (1.0 + want.abs()));
            }
        }
    }
}
