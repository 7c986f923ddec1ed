//! Multi-round adaptive labeling.
//!
//! Round `t` targets tasks of quantized difficulty `lambda_t`: every still
//! unlabeled task receives `ell_t` fresh answers, message passing scores the
//! round's graph, and tasks whose score clears the round threshold are
//! labeled. Easy tasks leave early, so the remaining budget concentrates on
//! the hard ones. The final round uses a zero threshold and labels everything.

use rand::Rng;

use crate::assign::{collect, regular_random_graph, BudgetLedger, BudgetMode, Edge, ResponseGraph};
use crate::error::{Error, Result};
use crate::model::{crowd_stats, ceil_tol, QuantizedPrior, TaskPool, WorkerPrior};
use crate::mp::{decide_one, message_passing, Decision, Init, MpConfig};
use crate::spectral::estimate_rho2;
use crate::theory::k_for;

/// Per-round schedule entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundPlan {
    /// Quantized difficulty targeted by the round.
    pub lambda: f64,
    /// Answers per task in each sub-round.
    pub ell: usize,
    /// Fixed worker degree; `None` means `min(ell, |M|)` at issue time.
    pub r: Option<usize>,
    /// Number of sub-rounds.
    pub s: usize,
}

/// How the per-round budgets are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanScaling {
    /// `ell_t = ceil(C_delta lambda_hat gamma / (m lambda_t))`; meets the
    /// budget in expectation with a large margin.
    Theory,
    /// Replaces `C_delta` by the constant that makes the nominal schedule
    /// (half of a round's target group leaving per sub-round) spend exactly
    /// `gamma`.
    ExhaustBudget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptivePlan {
    pub m: usize,
    pub budget: usize,
    /// Constant multiplying `lambda_hat gamma / (m lambda_t)`.
    pub scale: f64,
    pub lambda_hat: f64,
    pub rounds: Vec<RoundPlan>,
}

impl AdaptivePlan {
    /// A single round with fixed degrees: the non-adaptive design.
    pub fn single(m: usize, ell: usize, r: usize) -> Self {
        AdaptivePlan {
            m,
            budget: m * ell,
            scale: 1.0,
            lambda_hat: f64::NAN,
            rounds: vec![RoundPlan { lambda: f64::NAN, ell, r: Some(r), s: 1 }],
        }
    }
}

fn sub_rounds(qp: &QuantizedPrior) -> Vec<usize> {
    let t = qp.bins.len();
    (0..t)
        .map(|a| {
            if a + 1 == t {
                1
            } else {
                let v = ceil_tol((2.0 * qp.bins[a].mass / qp.bins[a + 1].mass).log2());
                v.max(0.0) as usize
            }
        })
        .collect()
}

pub fn make_plan(m: usize, budget: usize, qp: &QuantizedPrior) -> Result<AdaptivePlan> {
    make_plan_scaled(m, budget, qp, PlanScaling::Theory)
}

pub fn make_plan_scaled(m: usize, budget: usize, qp: &QuantizedPrior, scaling: PlanScaling) -> Result<AdaptivePlan> {
    if m == 0 {
        return Err(Error::EmptyPool);
    }
    if budget < m {
        return Err(Error::InfeasibleBudget { budget, reason: format!("fewer queries than the {m} tasks") });
    }
    let s = sub_rounds(qp);
    let gpt = budget as f64 / m as f64;
    let scale = match scaling {
        PlanScaling::Theory => qp.c_delta,
        PlanScaling::ExhaustBudget => {
            // Nominal fraction of tasks present in sub-round u of round t.
            let mut per_unit = 0.0;
            for (t, bin) in qp.bins.iter().enumerate() {
                let later: f64 = qp.bins[t + 1..].iter().map(|b| b.mass).sum();
                for u in 0..s[t] {
                    per_unit += (later + bin.mass * 0.5f64.powi(u as i32)) / bin.lambda;
                }
            }
            1.0 / (qp.lambda_hat * per_unit)
        }
    };
    let raw_last = scale * qp.lambda_hat * gpt / qp.bins[qp.bins.len() - 1].lambda;
    if raw_last < 1.0 {
        return Err(Error::InfeasibleBudget {
            budget,
            reason: format!("hardest round gets {raw_last:.3} < 1 answers per task"),
        });
    }
    let rounds = qp
        .bins
        .iter()
        .zip(&s)
        .map(|(b, &s)| {
            let raw = scale * qp.lambda_hat * gpt / b.lambda;
            RoundPlan { lambda: b.lambda, ell: (ceil_tol(raw) as usize).max(2), r: None, s }
        })
        .collect();
    Ok(AdaptivePlan { m, budget, scale, lambda_hat: qp.lambda_hat, rounds })
}

/// Classification threshold `sqrt(lambda_t) mu ell ((ell-1)(r-1) rho2 sigma2)^{k-1}`.
#[allow(clippy::too_many_arguments)]
pub fn threshold(lambda_t: f64, mu: f64, ell: usize, r: usize, rho2: f64, sigma2: f64, k: usize) -> f64 {
    let g = (ell as f64 - 1.0) * (r as f64 - 1.0) * rho2 * sigma2;
    lambda_t.sqrt() * mu * ell as f64 * g.powi(k as i32 - 1)
}

/// Source of the mean difficulty of the remaining tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoMode {
    /// Exact average over the remaining pool.
    Oracle,
    /// Spectral estimate from the sub-round's answers, clamped to `[0, 1]`.
    Estimated,
}

/// Which answers the final round scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinalRound {
    /// Every answer collected so far for the still unlabeled tasks.
    AllResponses,
    /// Every answer collected so far on any task, including tasks already
    /// labeled; scores are read off for the unlabeled ones.
    AllResponsesAllTasks,
    /// Only the final round's own answers.
    Fresh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig {
    pub rho_mode: RhoMode,
    pub final_round: FinalRound,
    pub budget_mode: BudgetMode,
    /// In hard-cap mode, let the final round spend everything that is left.
    pub fill_final_round: bool,
    pub init: Init,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            rho_mode: RhoMode::Estimated,
            final_round: FinalRound::AllResponses,
            budget_mode: BudgetMode::Hard,
            fill_final_round: true,
            init: Init::Gaussian,
        }
    }
}

/// One sub-round's summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTrace {
    pub t: usize,
    pub u: usize,
    pub m_remaining: usize,
    pub ell: usize,
    pub r: usize,
    pub k: usize,
    pub rho2: f64,
    pub threshold: f64,
    pub classified_pos: usize,
    pub classified_neg: usize,
    pub deferred: usize,
    pub budget_cum: usize,
}

impl RoundTrace {
    pub const HEADER: [&'static str; 12] = [
        "t", "u", "m_remaining", "ell", "r", "k", "rho2", "threshold", "classified_pos", "classified_neg", "deferred",
        "budget_cum",
    ];

    pub fn record(&self) -> [String; 12] {
        [
            self.t.to_string(),
            self.u.to_string(),
            self.m_remaining.to_string(),
            self.ell.to_string(),
            self.r.to_string(),
            self.k.to_string(),
            format!("{:.10e}", self.rho2),
            format!("{:.10e}", self.threshold),
            self.classified_pos.to_string(),
            self.classified_neg.to_string(),
            self.deferred.to_string(),
            self.budget_cum.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelingResult {
    /// Estimated label per task, indexed like the pool.
    pub labels: Vec<i8>,
    /// `(t, u)` of the sub-round that labeled each task; `None` when the
    /// budget ran out first and the label came from the latest score.
    pub labeled_at: Vec<Option<(usize, usize)>>,
    pub spent: usize,
    pub traces: Vec<RoundTrace>,
}

impl LabelingResult {
    pub fn error_rate(&self, pool: &TaskPool) -> f64 {
        error_rate(&self.labels, pool)
    }
}

/// Fraction of tasks whose label differs from the truth.
pub fn error_rate(labels: &[i8], pool: &TaskPool) -> f64 {
    let wrong = labels.iter().zip(&pool.tasks).filter(|(l, t)| **l != t.truth()).count();
    wrong as f64 / pool.len() as f64
}

/// Error rate restricted to tasks of each difficulty, as `(lambda, count, errors)`.
pub fn error_by_difficulty(labels: &[i8], pool: &TaskPool) -> Vec<(f64, usize, usize)> {
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for (l, t) in labels.iter().zip(&pool.tasks) {
        let d = t.difficulty();
        let idx = match groups.iter().position(|g| (g.0 - d).abs() <= 1e-12) {
            Some(i) => i,
            None => {
                groups.push((d, 0, 0));
                groups.len() - 1
            }
        };
        groups[idx].1 += 1;
        if *l != t.truth() {
            groups[idx].2 += 1;
        }
    }
    groups.sort_by(|a, b| b.0.total_cmp(&a.0));
    groups
}

pub fn run_adaptive<R: Rng + ?Sized>(
    pool: &TaskPool,
    prior: &WorkerPrior,
    plan: &AdaptivePlan,
    cfg: &AdaptiveConfig,
    rng: &mut R,
) -> Result<LabelingResult> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let crowd = crowd_stats(prior)?;
    let mut ledger = BudgetLedger::new(plan.budget, cfg.budget_mode);
    let mut remaining: Vec<usize> = (0..pool.len()).collect();
    let mut labels = vec![0i8; pool.len()];
    let mut labeled_at = vec![None; pool.len()];
    let mut last_score = vec![0.0f64; pool.len()];
    // Global answers: (task, worker, answer) with globally unique worker ids.
    let mut history: Vec<Edge> = Vec::new();
    let mut next_worker = 0usize;
    let mut traces = Vec::new();
    let last_round = plan.rounds.len() - 1;

    'rounds: for (t, round) in plan.rounds.iter().enumerate() {
        for u in 0..round.s {
            if remaining.is_empty() {
                break 'rounds;
            }
            let mm = remaining.len();
            let mut is_final = t == last_round;
            let mut ell = round.ell;
            if cfg.budget_mode == BudgetMode::Hard {
                let afford = ledger.remaining() / mm;
                if is_final && cfg.fill_final_round {
                    ell = ell.max(afford);
                }
                if afford < ell {
                    ell = afford;
                    is_final = true;
                }
                if ell == 0 {
                    break 'rounds;
                }
            }
            let r = round.r.unwrap_or(ell.min(mm)).min(mm * ell);
            let shape = regular_random_graph(mm, ell, r, rng)?;
            let tasks: Vec<_> = remaining.iter().map(|&i| pool.tasks[i]).collect();
            let (g, _) = collect(&shape, &tasks, prior, rng, &mut ledger)?;
            for e in &g.edges {
                history.push(Edge { task: remaining[e.task], worker: next_worker + e.worker, answer: e.answer });
            }
            next_worker += g.n;

            let k = k_for(mm) as usize;
            let mp_cfg = MpConfig { k_max: k, init: cfg.init.clone(), rescale: false };
            let scores = if is_final && cfg.final_round == FinalRound::AllResponses {
                message_passing(&union_graph(&history, &remaining), &mp_cfg, rng)?
            } else if is_final && cfg.final_round == FinalRound::AllResponsesAllTasks {
                let all: Vec<usize> = (0..pool.len()).collect();
                let full = message_passing(&union_graph(&history, &all), &mp_cfg, rng)?;
                remaining.iter().map(|&i| full[i]).collect()
            } else {
                message_passing(&g, &mp_cfg, rng)?
            };
            let rho2 = match cfg.rho_mode {
                RhoMode::Oracle => remaining.iter().map(|&i| pool.tasks[i].difficulty()).sum::<f64>() / mm as f64,
                RhoMode::Estimated => estimate_rho2(&g, ell, r, crowd.sigma2)?.clamped,
            };
            let thr = if is_final { 0.0 } else { threshold(round.lambda, crowd.mu, ell, r, rho2, crowd.sigma2, k) };

            let (mut pos, mut neg) = (0, 0);
            let mut still = Vec::with_capacity(mm);
            for (local, &i) in remaining.iter().enumerate() {
                last_score[i] = scores[local];
                match decide_one(scores[local], thr, rng) {
                    Decision::Positive => {
                        labels[i] = 1;
                        labeled_at[i] = Some((t + 1, u + 1));
                        pos += 1;
                    }
                    Decision::Negative => {
                        labels[i] = -1;
                        labeled_at[i] = Some((t + 1, u + 1));
                        neg += 1;
                    }
                    Decision::Defer => still.push(i),
                }
            }
            traces.push(RoundTrace {
                t: t + 1,
                u: u + 1,
                m_remaining: mm,
                ell,
                r,
                k,
                rho2,
                threshold: thr,
                classified_pos: pos,
                classified_neg: neg,
                deferred: still.len(),
                budget_cum: ledger.spent,
            });
            remaining = still;
            if is_final {
                break 'rounds;
            }
        }
    }
    // Budget ran out before everything was labeled.
    for &i in &remaining {
        labels[i] = decide_one(last_score[i], 0.0, rng).label().unwrap();
    }
    Ok(LabelingResult { labels, labeled_at, spent: ledger.spent, traces })
}

/// Graph of every recorded answer on the given tasks, reindexed locally.
fn union_graph(history: &[Edge], tasks: &[usize]) -> ResponseGraph {
    let max_task = history.iter().map(|e| e.task).max().unwrap_or(0);
    let mut local = vec![usize::MAX; max_task + 1];
    for (l, &i) in tasks.iter().enumerate() {
        local[i] = l;
    }
    let mut worker_map = std::collections::HashMap::new();
    let mut edges = Vec::new();
    for e in history {
        if e.task <= max_task && local[e.task] != usize::MAX {
            let n = worker_map.len();
            let w = *worker_map.entry(e.worker).or_insert(n);
            edges.push(Edge { task: local[e.task], worker: w, answer: e.answer });
        }
    }
    ResponseGraph::new(tasks.len(), worker_map.len(), edges).expect("indices are in range by construction")
}

/// Non-adaptive labeling: one `(ell, r)` graph, message passing, sign.
/// Same code path as [`run_adaptive`] with a single round.
pub fn run_nonadaptive<R: Rng + ?Sized>(
    pool: &TaskPool,
    prior: &WorkerPrior,
    ell: usize,
    r: usize,
    rng: &mut R,
) -> Result<LabelingResult> {
    let plan = AdaptivePlan::single(pool.len(), ell, r);
    let cfg = AdaptiveConfig { rho_mode: RhoMode::Oracle, final_round: FinalRound::Fresh, ..Default::default() };
    run_adaptive(pool, prior, &plan, &cfg, rng)
}

/// Per-task sign of the answer sum; ties broken by a fair coin.
pub fn majority_vote<R: Rng + ?Sized>(g: &ResponseGraph, rng: &mut R) -> Result<Vec<i8>> {
    g.task_edges
        .iter()
        .enumerate()
        .map(|(i, adj)| {
            if adj.is_empty() {
                return Err(Error::NoAnswers { task: i });
            }
            let s: i64 = adj.iter().map(|&e| g.edges[e].answer as i64).sum();
            Ok(match s.signum() {
                1 => 1,
                -1 => -1,
                _ => {
                    if rng.random::<bool>() {
                        1
                    } else {
                        -1
                    }
                }
            })
        })
        .collect()
}

/// Majority voting on a fresh `(ell, ell)` graph over the whole pool.
pub fn run_majority<R: Rng + ?Sized>(pool: &TaskPool, prior: &WorkerPrior, ell: usize, rng: &mut R) -> Result<LabelingResult> {
    let shape = regular_random_graph(pool.len(), ell, ell.min(pool.len() * ell), rng)?;
    let mut ledger = BudgetLedger::new(pool.len() * ell, BudgetMode::Hard);
    let (g, _) = collect(&shape, &pool.tasks, prior, rng, &mut ledger)?;
    let labels = majority_vote(&g, rng)?;
    Ok(LabelingResult { labeled_at: vec![Some((1, 1)); labels.len()], labels, spent: ledger.spent, traces: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{quantize, sample_tasks, TaskPrior};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn three_level_prior() -> TaskPrior {
        TaskPrior::symmetric_from_difficulties(&[(1.0, 1.0 / 3.0), (0.25, 1.0 / 3.0), (1.0 / 16.0, 1.0 / 3.0)]).unwrap()
    }

    #[test]
    fn single_bin_plan() {
        let qp = quantize(&TaskPrior::new(vec![(0.9, 1.0)]).unwrap());
        let plan = make_plan(100, 3000, &qp).unwrap();
        assert_eq!(plan.rounds.len(), 1);
        assert_eq!(plan.rounds[0].s, 1);
        assert_eq!(plan.rounds[0].ell, 6); // ceil(30 / 5)
    }

    #[test]
    fn sub_round_counts() {
        let qp = quantize(&TaskPrior::new(vec![(0.9, 0.4), (0.8, 0.4), (0.6, 0.2)]).unwrap());
        let plan = make_plan(1000, 1_000_000, &qp).unwrap();
        assert_eq!(plan.rounds.iter().map(|r| r.s).collect::<Vec<_>>(), vec![3, 1]);
        let qp = quantize(&TaskPrior::new(vec![(0.9, 0.1), (0.6, 0.9)]).unwrap());
        let plan = make_plan(1000, 1_000_000, &qp).unwrap();
        assert_eq!(plan.rounds[0].s, 0);
    }

    #[test]
    fn plan_budgets_double_per_round() {
        let qp = quantize(&three_level_prior());
        let plan = make_plan(1800, 1800 * 180, &qp).unwrap();
        // 0.2 * (1/7) * 180 / lambda_t, rounded up.
        assert_eq!(plan.rounds.iter().map(|r| r.ell).collect::<Vec<_>>(), vec![6, 21, 83]);
        let ex = make_plan_scaled(1800, 1800 * 180, &qp, PlanScaling::ExhaustBudget).unwrap();
        assert!((ex.scale - 7.0 / 9.0).abs() < 1e-12);
        assert_eq!(ex.rounds.iter().map(|r| r.ell).collect::<Vec<_>>(), vec![20, 80, 320]);
        for w in plan.rounds.windows(2) {
            assert!(w[1].ell >= 2 * w[0].ell - 1);
        }
    }

    #[test]
    fn infeasible_budget() {
        let qp = quantize(&three_level_prior());
        assert!(matches!(make_plan(100, 50, &qp), Err(Error::InfeasibleBudget { .. })));
        // 0.2 * (1/7) * 2 * 16 < 1
        assert!(matches!(make_plan(100, 200, &qp), Err(Error::InfeasibleBudget { .. })));
    }

    #[test]
    fn threshold_formula() {
        assert_eq!(threshold(0.25, 0.3, 6, 6, 0.5, 0.3, 1), 0.5 * 0.3 * 6.0);
        let x = threshold(1.0, 0.3, 20, 20, 0.4375, 0.3, 3);
        assert!((x - 0.3 * 20.0 * (361.0f64 * 0.4375 * 0.3).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn nonadaptive_is_single_round_adaptive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pool = sample_tasks(&three_level_prior(), 200, &mut rng).unwrap();
        let wp = WorkerPrior::spammer_hammer(0.3);
        let a = run_nonadaptive(&pool, &wp, 10, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let plan = AdaptivePlan::single(200, 10, 10);
        let cfg = AdaptiveConfig { rho_mode: RhoMode::Oracle, final_round: FinalRound::Fresh, ..Default::default() };
        let b = run_adaptive(&pool, &wp, &plan, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.spent, 2000);
        assert_eq!(a.traces.len(), 1);
    }

    #[test]
    fn hard_cap_is_respected() {
        let qp = quantize(&three_level_prior());
        let wp = WorkerPrior::spammer_hammer(0.3);
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pool = sample_tasks(&three_level_prior(), 300, &mut rng).unwrap();
            let plan = make_plan_scaled(300, 300 * 60, &qp, PlanScaling::ExhaustBudget).unwrap();
            let res = run_adaptive(&pool, &wp, &plan, &AdaptiveConfig::default(), &mut rng).unwrap();
            assert!(res.spent <= plan.budget);
            assert!(res.labels.iter().all(|&l| l == 1 || l == -1));
            let mut prev = 0;
            for tr in &res.traces {
                assert!(tr.budget_cum >= prev);
                prev = tr.budget_cum;
                assert_eq!(tr.classified_pos + tr.classified_neg + tr.deferred, tr.m_remaining);
            }
            assert_eq!(res.traces.last().unwrap().threshold, 0.0);
        }
    }

    #[test]
    fn perfect_crowd_labels_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pool = sample_tasks(&TaskPrior::new(vec![(1.0, 0.5), (0.0, 0.5)]).unwrap(), 100, &mut rng).unwrap();
        let wp = WorkerPrior::Discrete(vec![(1.0, 1.0)]);
        let res = run_nonadaptive(&pool, &wp, 5, 5, &mut rng).unwrap();
        assert_eq!(res.error_rate(&pool), 0.0);
        let mv = run_majority(&pool, &wp, 3, &mut rng).unwrap();
        assert_eq!(mv.error_rate(&pool), 0.0);
    }

    #[test]
    fn majority_tie_and_empty() {
        let g = ResponseGraph::new(
            2,
            2,
            vec![Edge { task: 0, worker: 0, answer: 1 }, Edge { task: 0, worker: 1, answer: -1 }],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(majority_vote(&g, &mut rng), Err(Error::NoAnswers { task: 1 }));
        let g = ResponseGraph::new(1, 2, g.edges.clone()).unwrap();
        let n = 1000;
        let pos = (0..n).filter(|_| majority_vote(&g, &mut rng).unwrap()[0] == 1).count();
        assert!((400..600).contains(&pos));
    }

    #[test]
    fn union_graph_keeps_only_open_tasks() {
        let hist = vec![
            Edge { task: 0, worker: 0, answer: 1 },
            Edge { task: 1, worker: 0, answer: -1 },
            Edge { task: 2, worker: 5, answer: 1 },
            Edge { task: 1, worker: 7, answer: 1 },
        ];
        let g = union_graph(&hist, &[2, 1]);
        assert_eq!((g.m, g.n), (2, 3));
        assert_eq!(g.task_edges[1].len(), 2);
        assert_eq!(g.task_edges[0].len(), 1);
    }
}
