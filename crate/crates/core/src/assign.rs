//! Task-to-worker assignment graphs, answer collection and budget accounting.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Task, WorkerPrior};
use crate::synth::{respond, sample_worker, Worker};

/// A random `(ell, r)` bipartite multigraph over `m` tasks and `n = ceil(m ell / r)`
/// workers, produced by a uniform matching of half-edges. Worker `n - 1`
/// takes whatever remainder is left when `r` does not divide `m ell`.
/// Parallel edges are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphShape {
    pub m: usize,
    pub n: usize,
    pub ell: usize,
    pub r: usize,
    /// `(task, worker)` pairs, local indices.
    pub edges: Vec<(usize, usize)>,
}

pub fn regular_random_graph<R: Rng + ?Sized>(m: usize, ell: usize, r: usize, rng: &mut R) -> Result<GraphShape> {
    if m == 0 || ell == 0 || r == 0 {
        return Err(Error::InvalidDegrees(format!("m = {m}, ell = {ell}, r = {r} must be positive")));
    }
    let total = m * ell;
    if r > total {
        return Err(Error::InvalidDegrees(format!("r = {r} exceeds m * ell = {total}")));
    }
    let n = total.div_ceil(r);
    let mut stubs: Vec<usize> = (0..m).flat_map(|i| std::iter::repeat_n(i, ell)).collect();
    stubs.shuffle(rng);
    let edges = stubs.into_iter().enumerate().map(|(s, i)| (i, s / r)).collect();
    Ok(GraphShape { m, n, ell, r, edges })
}

/// One collected answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub task: usize,
    pub worker: usize,
    pub answer: i8,
}

/// Answers on a bipartite multigraph with adjacency lists of edge indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseGraph {
    pub m: usize,
    pub n: usize,
    pub edges: Vec<Edge>,
    pub task_edges: Vec<Vec<usize>>,
    pub worker_edges: Vec<Vec<usize>>,
    /// Nominal `(ell, r)` when the graph came from a regular design.
    pub design: Option<(usize, usize)>,
}

impl ResponseGraph {
    pub fn new(m: usize, n: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut task_edges = vec![Vec::new(); m];
        let mut worker_edges = vec![Vec::new(); n];
        for (e, edge) in edges.iter().enumerate() {
            if edge.task >= m || edge.worker >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({}, {}) outside {m} x {n}",
                    edge.task, edge.worker
                )));
            }
            if edge.answer != 1 && edge.answer != -1 {
                return Err(Error::InvalidArgument(format!("answer {} is not +-1", edge.answer)));
            }
            task_edges[edge.task].push(e);
            worker_edges[edge.worker].push(e);
        }
        Ok(ResponseGraph { m, n, edges, task_edges, worker_edges, design: None })
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Nominal degrees, falling back to the maximum observed degrees.
    pub fn degrees(&self) -> (usize, usize) {
        self.design.unwrap_or_else(|| {
            (
                self.task_edges.iter().map(Vec::len).max().unwrap_or(0),
                self.worker_edges.iter().map(Vec::len).max().unwrap_or(0),
            )
        })
    }

    pub fn check_connected_nodes(&self) -> Result<()> {
        if let Some(i) = self.task_edges.iter().position(Vec::is_empty) {
            return Err(Error::IsolatedNode(format!("task {i}")));
        }
        if let Some(j) = self.worker_edges.iter().position(Vec::is_empty) {
            return Err(Error::IsolatedNode(format!("worker {j}")));
        }
        Ok(())
    }

    /// Writes `task_id,worker_id,answer` rows after a schema line.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = w;
        writeln!(w, "#schema=1")?;
        let mut cw = csv::Writer::from_writer(w);
        cw.write_record(["task_id", "worker_id", "answer"])?;
        for e in &self.edges {
            cw.write_record([e.task.to_string(), e.worker.to_string(), e.answer.to_string()])?;
        }
        cw.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`ResponseGraph::write_csv`]; node counts
    /// are one past the largest ids seen.
    pub fn read_csv<Rd: BufRead>(r: Rd) -> Result<Self> {
        let body: String = r
            .lines()
            .filter(|l| !l.as_ref().map(|s| s.starts_with('#')).unwrap_or(false))
            .collect::<std::io::Result<Vec<_>>>()?
            .join("\n");
        let mut cr = csv::Reader::from_reader(body.as_bytes());
        let mut edges = Vec::new();
        for rec in cr.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<i64> {
                rec.get(k)
                    .ok_or_else(|| Error::InvalidArgument(format!("row has fewer than {} fields", k + 1)))?
                    .trim()
                    .parse::<i64>()
                    .map_err(|e| Error::InvalidArgument(e.to_string()))
            };
            let (t, w, a) = (parse(0)?, parse(1)?, parse(2)?);
            if t < 0 || w < 0 {
                return Err(Error::InvalidArgument("negative id".into()));
            }
            edges.push(Edge { task: t as usize, worker: w as usize, answer: a as i8 });
        }
        let m = edges.iter().map(|e| e.task + 1).max().unwrap_or(0);
        let n = edges.iter().map(|e| e.worker + 1).max().unwrap_or(0);
        ResponseGraph::new(m, n, edges)
    }
}

/// Whether the ledger refuses charges beyond the allowance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetMode {
    /// Spending never exceeds the allowance.
    Hard,
    /// Spending is only tracked; the allowance holds in expectation.
    Expectation,
}

/// Running count of task-worker queries against an allowance `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetLedger {
    pub allowed: usize,
    pub spent: usize,
    pub mode: BudgetMode,
}

impl BudgetLedger {
    pub fn new(allowed: usize, mode: BudgetMode) -> Self {
        BudgetLedger { allowed, spent: 0, mode }
    }

    pub fn remaining(&self) -> usize {
        self.allowed.saturating_sub(self.spent)
    }

    pub fn can_afford(&self, n: usize) -> bool {
        self.mode == BudgetMode::Expectation || n <= self.remaining()
    }

    pub fn charge(&mut self, n: usize) -> Result<()> {
        if !self.can_afford(n) {
            return Err(Error::BudgetExhausted { requested: n, remaining: self.remaining() });
        }
        self.spent += n;
        Ok(())
    }
}

/// Hires `shape.n` fresh workers, asks each of them its assigned tasks, and
/// charges the ledger for every edge. `tasks[i]` is the task at local index `i`.
/// Returns the response graph and the hired workers.
pub fn collect<R: Rng + ?Sized>(
    shape: &GraphShape,
    tasks: &[Task],
    prior: &WorkerPrior,
    rng: &mut R,
    ledger: &mut BudgetLedger,
) -> Result<(ResponseGraph, Vec<Worker>)> {
    if tasks.len() != shape.m {
        return Err(Error::InvalidArgument(format!(
            "shape has {} tasks but {} were supplied",
            shape.m,
            tasks.len()
        )));
    }
    ledger.charge(shape.edges.len())?;
    let workers = (0..shape.n).map(|j| sample_worker(prior, j, rng)).collect::<Result<Vec<_>>>()?;
    let edges = shape
        .edges
        .iter()
        .map(|&(i, j)| Edge { task: i, worker: j, answer: respond(&tasks[i], &workers[j], rng) })
        .collect();
    let mut g = ResponseGraph::new(shape.m, shape.n, edges)?;
    g.design = Some((shape.ell, shape.r));
    Ok((g, workers))
}
