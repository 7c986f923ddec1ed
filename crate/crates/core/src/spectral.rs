//! Non-backtracking operator of a response graph, its spectrum, the spectral
//! estimate of the mean task difficulty, and the detectability barrier.
//!
//! The operator acts on the stacked message vector `(x, y)` of length `2|E|`
//! and reproduces one simultaneous message-passing update:
//! `B (x, y) = (X y, Y x)`. Being bipartite in this sense, its nonzero
//! eigenvalues are the square roots `±sqrt(nu)` of the eigenvalues `nu` of
//! the `|E| x |E|` product `X Y`, which is what the dense mode diagonalizes.

use ndarray::Array2;
use ndarray_linalg::Eig;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assign::ResponseGraph;
use crate::error::{Error, Result};

const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITER: usize = 100_000;

/// Sparse non-backtracking operator. Rows `0..|E|` give task-to-worker
/// messages, rows `|E|..2|E|` worker-to-task messages.
#[derive(Debug, Clone, PartialEq)]
pub struct NonBacktracking {
    pub num_edges: usize,
    /// `x_rows[e]`: `(e', A_{e'})` with `x_e = sum A_{e'} y_{e'}`.
    pub x_rows: Vec<Vec<(usize, f64)>>,
    /// `y_rows[e]`: `(e', A_{e'})` with `y_e = sum A_{e'} x_{e'}`.
    pub y_rows: Vec<Vec<(usize, f64)>>,
    pub ell: usize,
    pub r: usize,
}

pub fn build_nonbacktracking(g: &ResponseGraph) -> NonBacktracking {
    let rows = |adj: &Vec<Vec<usize>>, node_of: &dyn Fn(usize) -> usize| -> Vec<Vec<(usize, f64)>> {
        (0..g.num_edges())
            .map(|e| {
                adj[node_of(e)]
                    .iter()
                    .filter(|&&f| f != e)
                    .map(|&f| (f, g.edges[f].answer as f64))
                    .collect()
            })
            .collect()
    };
    let (ell, r) = g.degrees();
    NonBacktracking {
        num_edges: g.num_edges(),
        x_rows: rows(&g.task_edges, &|e| g.edges[e].task),
        y_rows: rows(&g.worker_edges, &|e| g.edges[e].worker),
        ell,
        r,
    }
}

fn spmv(rows: &[Vec<(usize, f64)>], v: &[f64]) -> Vec<f64> {
    rows.iter().map(|row| row.iter().map(|&(c, a)| a * v[c]).sum()).collect()
}

impl NonBacktracking {
    pub fn dim(&self) -> usize {
        2 * self.num_edges
    }

    /// `B v` for `v = (x, y)`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let (x, y) = v.split_at(self.num_edges);
        let mut out = spmv(&self.x_rows, y);
        out.extend(spmv(&self.y_rows, x));
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let e = self.num_edges;
        let mut b = Array2::zeros((2 * e, 2 * e));
        for (i, row) in self.x_rows.iter().enumerate() {
            for &(c, a) in row {
                b[[i, e + c]] += a;
            }
        }
        for (i, row) in self.y_rows.iter().enumerate() {
            for &(c, a) in row {
                b[[e + i, c]] += a;
            }
        }
        b
    }

    /// Dense `X Y`, the top-left block of `B^2`.
    pub fn squared_block(&self) -> Array2<f64> {
        let e = self.num_edges;
        let mut out = Array2::zeros((e, e));
        for (i, row) in self.x_rows.iter().enumerate() {
            for &(mid, a) in row {
                for &(c, b) in &self.y_rows[mid] {
                    out[[i, c]] += a * b;
                }
            }
        }
        out
    }
}

/// How to compute the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumMode {
    /// All eigenvalues via the `|E| x |E|` product block.
    Dense,
    /// All eigenvalues by diagonalizing the full `2|E| x 2|E|` matrix. Only
    /// practical for small graphs; kept as a cross-check.
    DenseDirect,
    /// Leading eigenvalue pair by power iteration on `B^2`.
    TopPower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Eigenvalues sorted by decreasing modulus. Only the leading pair in
    /// power mode.
    pub eigenvalues: Vec<Complex64>,
    /// Modulus of the leading eigenvalue.
    pub top: f64,
    /// Largest modulus after removing the leading pair; `None` in power mode.
    pub bulk_radius: Option<f64>,
    /// `sqrt((ell-1)(r-1) rho2 sigma2)`.
    pub predicted_top: f64,
    /// `((ell-1)(r-1))^{1/4}`.
    pub predicted_radius: f64,
    pub barrier: BarrierCheck,
}

impl SpectrumReport {
    /// Fraction of eigenvalues beyond the leading pair with modulus at most `radius`.
    pub fn fraction_within(&self, radius: f64) -> f64 {
        let rest = &self.eigenvalues[2.min(self.eigenvalues.len())..];
        if rest.is_empty() {
            return 1.0;
        }
        rest.iter().filter(|z| z.norm() <= radius).count() as f64 / rest.len() as f64
    }
}

fn eigvals(a: Array2<f64>) -> Result<Vec<Complex64>> {
    let (vals, _) = a.eig().map_err(|e| Error::Linalg(e.to_string()))?;
    Ok(vals.to_vec())
}

fn sort_by_modulus(v: &mut [Complex64]) {
    v.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.re.total_cmp(&a.re)).then(b.im.total_cmp(&a.im)));
}

pub fn spectrum(b: &NonBacktracking, mode: SpectrumMode, rho2: f64, sigma2: f64) -> Result<SpectrumReport> {
    let (lh, rh) = ((b.ell as f64 - 1.0).max(0.0), (b.r as f64 - 1.0).max(0.0));
    let barrier = barrier_check(b.ell, b.r, rho2, sigma2);
    let predicted_top = (lh * rh * rho2 * sigma2).sqrt();
    let predicted_radius = (lh * rh).powf(0.25);
    let mut eigenvalues = match mode {
        SpectrumMode::Dense => {
            let nu = eigvals(b.squared_block())?;
            nu.iter().flat_map(|z| {
                let s = z.sqrt();
                [s, -s]
            })
            .collect()
        }
        SpectrumMode::DenseDirect => eigvals(b.to_dense())?,
        SpectrumMode::TopPower => {
            let nu = top_of_square(b)?;
            let s = Complex64::new(nu, 0.0).sqrt();
            vec![s, -s]
        }
    };
    sort_by_modulus(&mut eigenvalues);
    let top = eigenvalues.first().map(|z| z.norm()).unwrap_or(0.0);
    let bulk_radius = match mode {
        SpectrumMode::TopPower => None,
        _ => Some(eigenvalues.get(2).map(|z| z.norm()).unwrap_or(0.0)),
    };
    Ok(SpectrumReport { eigenvalues, top, bulk_radius, predicted_top, predicted_radius, barrier })
}

/// Leading eigenvalue of `X Y` by power iteration. A negative value means
/// the leading pair of `B` is imaginary.
fn top_of_square(b: &NonBacktracking) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..b.num_edges).map(|_| rng.random::<f64>() + 0.5).collect();
    normalize(&mut v);
    let mut prev = f64::NAN;
    for _ in 0..POWER_MAX_ITER {
        let w = spmv(&b.x_rows, &spmv(&b.y_rows, &v));
        let rq: f64 = w.iter().zip(&v).map(|(a, c)| a * c).sum();
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let est = norm.copysign(rq);
        if (est - prev).abs() <= POWER_TOL * est.abs() {
            return Ok(est);
        }
        prev = est;
        v = w.into_iter().map(|a| a / norm).collect();
    }
    Err(Error::NoConvergence { iterations: POWER_MAX_ITER })
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|a| *a /= n);
    }
}

/// Detectability margin `(ell-1)(r-1) rho^4 sigma^4`; spectral and
/// message-passing inference beat chance only when it exceeds 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierCheck {
    pub margin: f64,
    pub above: bool,
}

pub fn barrier_check(ell: usize, r: usize, rho2: f64, sigma2: f64) -> BarrierCheck {
    let margin = (ell as f64 - 1.0) * (r as f64 - 1.0) * (rho2 * sigma2).powi(2);
    BarrierCheck { margin, above: margin > 1.0 }
}

/// Spectral estimate of the mean task difficulty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rho2Estimate {
    /// `(sigma_1 / sqrt(ell r sigma2))^2`, unclamped.
    pub raw: f64,
    /// `raw` clamped to `[0, 1]`.
    pub clamped: f64,
    /// Largest singular value of the task-by-worker answer matrix.
    pub sigma1: f64,
}

/// Estimates `rho2` from the leading singular value of the answer matrix
/// (parallel answers summed), using nominal degrees `(ell, r)` and the
/// crowd's `sigma2`.
pub fn estimate_rho2(g: &ResponseGraph, ell: usize, r: usize, sigma2: f64) -> Result<Rho2Estimate> {
    if ell == 0 || r == 0 || !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!("ell = {ell}, r = {r}, sigma2 = {sigma2}")));
    }
    let s1 = top_singular_value(g)?;
    let raw = s1 * s1 / (ell as f64 * r as f64 * sigma2);
    Ok(Rho2Estimate { raw, clamped: raw.clamp(0.0, 1.0), sigma1: s1 })
}

/// Largest singular value of the `m x n` answer matrix by power iteration
/// on `A^T A`, stopping at relative change `1e-8`.
pub fn top_singular_value(g: &ResponseGraph) -> Result<f64> {
    if g.num_edges() == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x51e9);
    let mut v: Vec<f64> = (0..g.n).map(|_| rng.random::<f64>() + 0.5).collect();
    normalize(&mut v);
    let mut u = vec![0.0; g.m];
    let mut prev = f64::NAN;
    for _ in 0..POWER_MAX_ITER {
        u.iter_mut().for_each(|a| *a = 0.0);
        for e in &g.edges {
            u[e.task] += e.answer as f64 * v[e.worker];
        }
        let s2: f64 = u.iter().map(|a| a * a).sum();
        let mut w = vec![0.0; g.n];
        for e in &g.edges {
            w[e.worker] += e.answer as f64 * u[e.task];
        }
        if (s2 - prev).abs() <= POWER_TOL * s2 {
            return Ok(s2.sqrt());
        }
        prev = s2;
        let n = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n == 0.0 {
            return Ok(0.0);
        }
        v = w.into_iter().map(|a| a / n).collect();
    }
    Err(Error::NoConvergence { iterations: POWER_MAX_ITER })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::{collect, regular_random_graph, BudgetLedger, BudgetMode, Edge};
    use crate::model::{Task, WorkerPrior};
    use crate::mp::{jacobi_sweep, message_trace, Init, MpConfig};
    use ndarray_linalg::SVD;

    fn graph(m: usize, ell: usize, r: usize, s2: f64, seed: u64) -> ResponseGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = regular_random_graph(m, ell, r, &mut rng).unwrap();
        let qs = [0.6, 0.8, 1.0, 0.0];
        let tasks: Vec<Task> = (0..m).map(|id| Task { id, q: qs[id % 4] }).collect();
        let mut l = BudgetLedger::new(usize::MAX, BudgetMode::Hard);
        collect(&shape, &tasks, &WorkerPrior::spammer_hammer(s2), &mut rng, &mut l).unwrap().0
    }

    #[test]
    fn operator_is_one_jacobi_sweep() {
        let g = graph(12, 3, 4, 0.5, 1);
        let b = build_nonbacktracking(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..b.dim()).map(|_| rng.random::<f64>() - 0.5).collect();
        let (x, y) = v.split_at(b.num_edges);
        let (nx, ny) = jacobi_sweep(&g, x, y);
        let bv = b.apply(&v);
        // The sweep sums a node's messages once and subtracts the own edge,
        // so agreement is up to rounding.
        for (a, c) in bv.iter().zip(nx.iter().chain(&ny)) {
            assert!((a - c).abs() < 1e-12);
        }
        let dense = b.to_dense();
        let dv = dense.dot(&ndarray::Array1::from(v.clone()));
        for (a, c) in dv.iter().zip(&bv) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn message_passing_is_power_of_operator() {
        // y^{(k)} equals the y block of B^{2k} (0, y0).
        let g = graph(30, 4, 3, 0.4, 3);
        let b = build_nonbacktracking(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y0: Vec<f64> = (0..b.num_edges).map(|_| rng.random::<f64>()).collect();
        let trace = message_trace(&g, &MpConfig { k_max: 4, init: Init::Given(y0.clone()), rescale: false }, &mut rng).unwrap();
        let mut v = vec![0.0; b.num_edges];
        v.extend(&y0);
        for (x, y) in trace.iter().skip(1) {
            v = b.apply(&v);
            for (a, c) in v[..b.num_edges].iter().zip(x) {
                assert!((a - c).abs() <= 1e-9 * (1.0 + c.abs()));
            }
            v = b.apply(&v);
            for (a, c) in v[b.num_edges..].iter().zip(y) {
                assert!((a - c).abs() <= 1e-9 * (1.0 + c.abs()));
            }
        }
    }

    #[test]
    fn rows_exclude_own_edge() {
        let g = graph(20, 5, 5, 0.3, 5);
        let b = build_nonbacktracking(&g);
        for e in 0..b.num_edges {
            assert_eq!(b.x_rows[e].len(), 4);
            assert!(b.x_rows[e].iter().all(|&(f, _)| f != e));
            assert_eq!(b.y_rows[e].len(), 4);
        }
    }

    fn sorted_pairs(mut v: Vec<Complex64>) -> Vec<(f64, f64)> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v.into_iter().map(|z| (z.re, z.im)).collect()
    }

    #[test]
    fn reduced_spectrum_matches_direct() {
        for seed in 0..3 {
            let g = graph(24, 3, 3, 0.5, seed);
            let b = build_nonbacktracking(&g);
            let red = spectrum(&b, SpectrumMode::Dense, 0.5, 0.5).unwrap();
            let dir = spectrum(&b, SpectrumMode::DenseDirect, 0.5, 0.5).unwrap();
            assert_eq!(red.eigenvalues.len(), b.dim());
            assert!((red.top - dir.top).abs() < 1e-8);
            // Match each direct eigenvalue to its nearest reduced one.
            let r = sorted_pairs(red.eigenvalues.clone());
            for z in dir.eigenvalues {
                let best = r.iter().map(|&(a, c)| ((a - z.re).powi(2) + (c - z.im).powi(2)).sqrt()).fold(f64::INFINITY, f64::min);
                assert!(best < 1e-5, "unmatched eigenvalue {z}");
            }
        }
    }

    #[test]
    fn power_mode_finds_leading_pair() {
        let g = graph(200, 8, 8, 1.0, 9);
        let b = build_nonbacktracking(&g);
        let dense = spectrum(&b, SpectrumMode::Dense, 0.5, 1.0).unwrap();
        let pow = spectrum(&b, SpectrumMode::TopPower, 0.5, 1.0).unwrap();
        assert!((dense.top - pow.top).abs() < 1e-5 * dense.top);
        assert_eq!(pow.bulk_radius, None);
    }

    #[test]
    fn barrier_examples() {
        let rho2 = 1.4 / 3.0;
        let below = barrier_check(11, 11, rho2, 0.2);
        assert!((below.margin - 100.0 * (0.2 * rho2).powi(2)).abs() < 1e-12);
        assert!(!below.above);
        assert!(barrier_check(12, 12, rho2, 0.2).above);
        let b = barrier_check(15, 15, rho2, 0.3);
        assert!((b.margin - 196.0 * (0.3 * rho2).powi(2)).abs() < 1e-12);
        // Exactly at the barrier is not above it.
        assert!(!barrier_check(5, 5, 0.5, 0.5).above);
    }

    #[test]
    fn single_worker_unanimous() {
        let edges = (0..4).map(|i| Edge { task: i, worker: 0, answer: 1 }).collect();
        let g = ResponseGraph::new(4, 1, edges).unwrap();
        let est = estimate_rho2(&g, 1, 4, 1.0).unwrap();
        assert!((est.raw - 1.0).abs() < 1e-10);
        assert!((est.sigma1 - 2.0).abs() < 1e-10);
    }

    #[test]
    fn power_singular_value_matches_svd() {
        for seed in 0..4 {
            let g = graph(60, 6, 5, 0.3, seed);
            let mut a = Array2::<f64>::zeros((g.m, g.n));
            for e in &g.edges {
                a[[e.task, e.worker]] += e.answer as f64;
            }
            let (_, s, _) = a.svd(false, false).unwrap();
            let got = top_singular_value(&g).unwrap();
            assert!((got - s[0]).abs() < 1e-5 * s[0], "{got} vs {}", s[0]);
            let est = estimate_rho2(&g, 6, 5, 0.3).unwrap();
            assert!((est.raw - s[0] * s[0] / 9.0).abs() < 1e-4 * est.raw);
            assert_eq!(est.clamped, est.raw.clamp(0.0, 1.0));
        }
    }
}
