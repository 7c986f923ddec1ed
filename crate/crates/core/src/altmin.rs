//! MAP estimation of task and worker parameters by alternating maximization.
//!
//! Given task qualities `q` the log-posterior separates over workers, and
//! given worker reliabilities `p` it separates over tasks; each block is a
//! sum of concave one-dimensional functions, maximized here by golden-section
//! search. Labels are `sign(2q - 1)`.

use rand::Rng;

use crate::adaptive::{LabelingResult, RoundTrace};
use crate::assign::{collect, regular_random_graph, BudgetLedger, BudgetMode, ResponseGraph};
use crate::error::Result;
use crate::model::{TaskPool, WorkerPrior};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltMinConfig {
    /// Beta shape `(alpha, beta)` of the task-quality prior.
    pub task_shape: (f64, f64),
    /// Beta shape `(alpha, beta)` of the worker-reliability prior.
    pub worker_shape: (f64, f64),
    /// Parameters live in `[eps, 1 - eps]`.
    pub eps: f64,
    /// Stop when a sweep improves the log-posterior by less than this.
    pub tol: f64,
    pub max_sweeps: usize,
    pub golden_tol: f64,
    pub golden_max_iter: usize,
}

impl Default for AltMinConfig {
    fn default() -> Self {
        AltMinConfig {
            task_shape: (1.0, 1.0),
            worker_shape: (1.0, 1.0),
            eps: 1e-6,
            tol: 1e-8,
            max_sweeps: 100,
            golden_tol: 1e-10,
            golden_max_iter: 200,
        }
    }
}

/// Log-likelihood of one answer: `log(q p + (1-q)(1-p))` for +1 and
/// `log((1-q) p + q (1-p))` for -1.
pub fn g(answer: i8, q: f64, p: f64) -> f64 {
    if answer > 0 {
        (q * p + (1.0 - q) * (1.0 - p)).ln()
    } else {
        ((1.0 - q) * p + q * (1.0 - p)).ln()
    }
}

fn log_beta_kernel(x: f64, (a, b): (f64, f64)) -> f64 {
    let mut s = 0.0;
    if a != 1.0 {
        s += (a - 1.0) * x.ln();
    }
    if b != 1.0 {
        s += (b - 1.0) * (1.0 - x).ln();
    }
    s
}

/// Unnormalized log-posterior of `(q, p)` given the answers.
pub fn log_posterior(graph: &ResponseGraph, q: &[f64], p: &[f64], cfg: &AltMinConfig) -> f64 {
    let lik: f64 = graph.edges.iter().map(|e| g(e.answer, q[e.task], p[e.worker])).sum();
    let tp: f64 = q.iter().map(|&x| log_beta_kernel(x, cfg.task_shape)).sum();
    let wp: f64 = p.iter().map(|&x| log_beta_kernel(x, cfg.worker_shape)).sum();
    lik + tp + wp
}

/// Result of a golden-section search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenResult {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// Maximizes a unimodal `f` on `[lo, hi]`. The endpoints are also evaluated
/// so that a maximum on the boundary is returned exactly.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> GoldenResult {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut it = 0;
    while b - a > tol && it < max_iter {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        it += 1;
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for x in [lo, hi] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    GoldenResult { x: best.0, fx: best.1, iterations: it }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AltMinResult {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub labels: Vec<i8>,
    /// Log-posterior after the initial worker step and after every sweep.
    pub trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Block update: maximize each node's parameter given the other side.
/// `own_edges[v]` lists the edges at node `v`; `other(e)` is the opposite
/// endpoint's current value. A coordinate only moves when that does not
/// lower its objective.
fn block_step(
    graph: &ResponseGraph,
    vals: &mut [f64],
    own_edges: &[Vec<usize>],
    other: &dyn Fn(usize) -> f64,
    task_side: bool,
    shape: (f64, f64),
    cfg: &AltMinConfig,
) {
    for (v, adj) in own_edges.iter().enumerate() {
        let obj = |x: f64| -> f64 {
            let lik: f64 = adj
                .iter()
                .map(|&e| {
                    let o = other(e);
                    if task_side {
                        g(graph.edges[e].answer, x, o)
                    } else {
                        g(graph.edges[e].answer, o, x)
                    }
                })
                .sum();
            lik + log_beta_kernel(x, shape)
        };
        let cur = obj(vals[v]);
        let best = golden_section_max(obj, cfg.eps, 1.0 - cfg.eps, cfg.golden_tol, cfg.golden_max_iter);
        if best.fx >= cur {
            vals[v] = best.x;
        }
    }
}

pub fn alt_min<R: Rng + ?Sized>(graph: &ResponseGraph, cfg: &AltMinConfig, rng: &mut R) -> Result<AltMinResult> {
    graph.check_connected_nodes()?;
    let clamp = |x: f64| x.clamp(cfg.eps, 1.0 - cfg.eps);
    let mut q: Vec<f64> = graph
        .task_edges
        .iter()
        .map(|adj| clamp(adj.iter().filter(|&&e| graph.edges[e].answer > 0).count() as f64 / adj.len() as f64))
        .collect();
    let mut p = vec![0.5; graph.n];

    let worker_step = |q: &[f64], p: &mut [f64]| {
        block_step(graph, p, &graph.worker_edges, &|e| q[graph.edges[e].task], false, cfg.worker_shape, cfg)
    };
    let task_step = |q: &mut [f64], p: &[f64]| {
        block_step(graph, q, &graph.task_edges, &|e| p[graph.edges[e].worker], true, cfg.task_shape, cfg)
    };

    worker_step(&q, &mut p);
    let mut trace = vec![log_posterior(graph, &q, &p, cfg)];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        task_step(&mut q, &p);
        worker_step(&q, &mut p);
        sweeps += 1;
        let lp = log_posterior(graph, &q, &p, cfg);
        let gain = lp - trace[trace.len() - 1];
        trace.push(lp);
        if gain < cfg.tol {
            converged = true;
            break;
        }
    }
    let labels = q
        .iter()
        .map(|&x| {
            if x > 0.5 {
                1
            } else if x < 0.5 {
                -1
            } else if rng.random::<bool>() {
                1
            } else {
                -1
            }
        })
        .collect();
    Ok(AltMinResult { q, p, labels, trace, sweeps, converged })
}

/// Alternating maximization on a fresh `(ell, ell)` graph over the whole
/// pool, reported as a single round. The trace's `k` column holds the
/// number of sweeps.
pub fn run_altmin<R: Rng + ?Sized>(
    pool: &TaskPool,
    prior: &WorkerPrior,
    ell: usize,
    cfg: &AltMinConfig,
    rng: &mut R,
) -> Result<LabelingResult> {
    let m = pool.len();
    let r = ell.min(m * ell);
    let shape = regular_random_graph(m, ell, r, rng)?;
    let mut ledger = BudgetLedger::new(m * ell, BudgetMode::Hard);
    let (g, _) = collect(&shape, &pool.tasks, prior, rng, &mut ledger)?;
    let res = alt_min(&g, cfg, rng)?;
    let pos = res.labels.iter().filter(|&&l| l > 0).count();
    let trace = RoundTrace {
        t: 1,
        u: 1,
        m_remaining: m,
        ell,
        r,
        k: res.sweeps,
        rho2: f64::NAN,
        threshold: 0.0,
        classified_pos: pos,
        classified_neg: m - pos,
        deferred: 0,
        budget_cum: ledger.spent,
    };
    Ok(LabelingResult { labeled_at: vec![Some((1, 1)); m], labels: res.labels, spent: ledger.spent, traces: vec![trace] })
}
