//! Crowd and task priors, their summary statistics, and the dyadic
//! quantization of task difficulty used to schedule adaptive rounds.

use rand::Rng;

use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-9;

/// Distribution over worker reliability `p`, the probability that a worker
/// answers a perfectly clear task correctly.
#[derive(Debug, Clone, PartialEq)]
pub enum WorkerPrior {
    /// Finite support `(p, mass)`.
    Discrete(Vec<(f64, f64)>),
    /// Hammers with reliability `(1 + a) / 2` with probability `sigma2 / a^2`,
    /// spammers with reliability 1/2 otherwise.
    SpammerHammer { sigma2: f64, hammer_quality: f64 },
}

impl WorkerPrior {
    pub fn spammer_hammer(sigma2: f64) -> Self {
        WorkerPrior::SpammerHammer { sigma2, hammer_quality: 1.0 }
    }

    /// Support points `(p, mass)` after validation.
    pub fn support(&self) -> Result<Vec<(f64, f64)>> {
        match self {
            WorkerPrior::Discrete(s) => {
                validate_support(s, "worker")?;
                Ok(s.clone())
            }
            &WorkerPrior::SpammerHammer { sigma2, hammer_quality: a } => {
                if !(a > 0.0 && a <= 1.0) {
                    return Err(Error::InvalidPrior(format!(
                        "hammer quality {a} outside (0, 1]"
                    )));
                }
                if !(0.0..=a * a).contains(&sigma2) {
                    return Err(Error::InvalidPrior(format!(
                        "sigma2 {sigma2} outside [0, {}]",
                        a * a
                    )));
                }
                let h = sigma2 / (a * a);
                Ok(vec![((1.0 + a) / 2.0, h), (0.5, 1.0 - h)])
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        Ok(sample_discrete(&self.support()?, rng))
    }
}

/// Distribution over task quality `q`; `q > 1/2` means the true label is +1.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskPrior {
    support: Vec<(f64, f64)>,
}

impl TaskPrior {
    /// Builds a prior from `(q, mass)` pairs. A point at `q = 1/2` is rejected.
    pub fn new(support: Vec<(f64, f64)>) -> Result<Self> {
        validate_support(&support, "task")?;
        if support.iter().any(|&(q, m)| m > 0.0 && q == 0.5) {
            return Err(Error::DegenerateTask);
        }
        Ok(TaskPrior { support })
    }

    /// Builds a label-balanced prior from `(lambda, mass)` pairs: each
    /// difficulty contributes `q = (1 ± sqrt(lambda)) / 2` with half its mass.
    pub fn symmetric_from_difficulties(difficulties: &[(f64, f64)]) -> Result<Self> {
        let mut support = Vec::with_capacity(2 * difficulties.len());
        for &(lambda, mass) in difficulties {
            if !(lambda > 0.0 && lambda <= 1.0) {
                return Err(Error::InvalidPrior(format!(
                    "difficulty {lambda} outside (0, 1]"
                )));
            }
            let s = lambda.sqrt();
            support.push(((1.0 + s) / 2.0, mass / 2.0));
            support.push(((1.0 - s) / 2.0, mass / 2.0));
        }
        TaskPrior::new(support)
    }

    pub fn support(&self) -> &[(f64, f64)] {
        &self.support
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_discrete(&self.support, rng)
    }

    /// Difficulty support `(lambda, mass)` with equal lambdas merged, sorted
    /// by decreasing lambda.
    pub fn difficulty_support(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for &(q, m) in &self.support {
            if m <= 0.0 {
                continue;
            }
            let l = difficulty(q);
            match out.iter_mut().find(|(x, _)| (*x - l).abs() <= 1e-12 * l.max(1e-300)) {
                Some(e) => e.1 += m,
                None => out.push((l, m)),
            }
        }
        out.sort_by(|a, b| b.0.total_cmp(&a.0));
        out
    }
}

/// `(2q - 1)^2`.
pub fn difficulty(q: f64) -> f64 {
    let d = 2.0 * q - 1.0;
    d * d
}

fn validate_support(s: &[(f64, f64)], what: &str) -> Result<()> {
    if s.is_empty() {
        return Err(Error::InvalidPrior(format!("{what} support is empty")));
    }
    let mut total = 0.0;
    for &(x, m) in s {
        if !(0.0..=1.0).contains(&x) || !x.is_finite() {
            return Err(Error::InvalidPrior(format!("{what} value {x} outside [0, 1]")));
        }
        if !(m >= 0.0) || !m.is_finite() {
            return Err(Error::InvalidPrior(format!("{what} mass {m} is negative")));
        }
        total += m;
    }
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidPrior(format!("{what} masses sum to {total}")));
    }
    Ok(())
}

fn sample_discrete<R: Rng + ?Sized>(s: &[(f64, f64)], rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(x, m) in s {
        acc += m;
        if u < acc {
            return x;
        }
    }
    // Rounding slack: return the last point with positive mass.
    s.iter().rev().find(|(_, m)| *m > 0.0).map(|(x, _)| *x).unwrap_or(s[0].0)
}

/// Crowd statistics: `mu = E[2p-1]`, `sigma2 = E[(2p-1)^2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrowdStats {
    pub mu: f64,
    pub sigma2: f64,
}

pub fn crowd_stats(prior: &WorkerPrior) -> Result<CrowdStats> {
    let s = prior.support()?;
    let mu: f64 = s.iter().map(|&(p, m)| m * (2.0 * p - 1.0)).sum();
    let sigma2: f64 = s.iter().map(|&(p, m)| m * difficulty(p)).sum();
    if !(mu > 0.0) {
        return Err(Error::NonPositiveMu { mu });
    }
    Ok(CrowdStats { mu, sigma2 })
}

/// Task statistics: harmonic-mean difficulty `lambda`, mean difficulty
/// `rho2`, and the extreme difficulties on the support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskStats {
    pub lambda: f64,
    pub rho2: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

pub fn task_stats(prior: &TaskPrior) -> TaskStats {
    let d = prior.difficulty_support();
    let inv: f64 = d.iter().map(|&(l, m)| m / l).sum();
    let rho2: f64 = d.iter().map(|&(l, m)| m * l).sum();
    TaskStats {
        lambda: 1.0 / inv,
        rho2,
        lambda_min: d.last().map(|x| x.0).unwrap_or(f64::NAN),
        lambda_max: d.first().map(|x| x.0).unwrap_or(f64::NAN),
    }
}

/// One dyadic difficulty bin: representative `lambda` (the bin's upper end) and mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub lambda: f64,
    pub mass: f64,
}

/// Task difficulty quantized onto dyadic bins below `lambda_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedPrior {
    /// Non-empty bins, hardest last. `bins[t].lambda = lambda_max / 2^{a-1}`
    /// for the original bin index `a`.
    pub bins: Vec<Bin>,
    /// Number of dyadic bins before empty ones were dropped.
    pub raw_bins: usize,
    /// `(sum_a mass_a / lambda_a)^{-1}`.
    pub lambda_hat: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `1 / (4 + ceil(log2(2 delta_max / delta_min)))`.
    pub c_delta: f64,
    /// `log2(2 delta_max / delta_min) * log2(2 lambda_max / lambda_min)`.
    pub c1: f64,
}

/// Index (1-based) of the dyadic bin `(lmax / 2^a, lmax / 2^{a-1}]` holding `l`.
fn bin_index(l: f64, lmax: f64) -> usize {
    let r = (lmax / l).log2();
    let rr = r.round();
    let r = if (r - rr).abs() < 1e-9 { rr } else { r };
    r.floor() as usize + 1
}

pub fn quantize(prior: &TaskPrior) -> QuantizedPrior {
    let d = prior.difficulty_support();
    let lmax = d[0].0;
    let lmin = d[d.len() - 1].0;
    let raw_bins = 1 + ceil_tol((lmax / lmin).log2()) as usize;
    let mut mass = vec![0.0; raw_bins];
    for &(l, m) in &d {
        let a = bin_index(l, lmax).min(raw_bins);
        mass[a - 1] += m;
    }
    let bins: Vec<Bin> = mass
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(i, &m)| Bin { lambda: lmax / 2f64.powi(i as i32), mass: m })
        .collect();
    let lambda_hat = 1.0 / bins.iter().map(|b| b.mass / b.lambda).sum::<f64>();
    let delta_min = bins.iter().map(|b| b.mass).fold(f64::INFINITY, f64::min);
    let delta_max = bins.iter().map(|b| b.mass).fold(0.0, f64::max);
    let dr = (2.0 * delta_max / delta_min).log2();
    QuantizedPrior {
        raw_bins,
        lambda_hat,
        delta_min,
        delta_max,
        lambda_min: lmin,
        lambda_max: lmax,
        c_delta: 1.0 / (4.0 + ceil_tol(dr)),
        c1: dr * (2.0 * lmax / lmin).log2(),
        bins,
    }
}

/// Ceiling that treats values within 1e-9 of an integer as that integer.
pub(crate) fn ceil_tol(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x.ceil()
    }
}

/// A task with latent quality `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Task {
    pub id: usize,
    pub q: f64,
}

impl Task {
    pub fn truth(&self) -> i8 {
        if self.q > 0.5 {
            1
        } else {
            -1
        }
    }

    pub fn difficulty(&self) -> f64 {
        difficulty(self.q)
    }
}

/// Tasks drawn i.i.d. from a task prior.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskPool {
    pub tasks: Vec<Task>,
}

impl TaskPool {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Empirical `(1/m) sum_i (2 q_i - 1)^2`.
    pub fn mean_difficulty(&self) -> f64 {
        self.tasks.iter().map(Task::difficulty).sum::<f64>() / self.tasks.len() as f64
    }

    pub fn truths(&self) -> Vec<i8> {
        self.tasks.iter().map(Task::truth).collect()
    }
}

pub fn sample_tasks<R: Rng + ?Sized>(prior: &TaskPrior, m: usize, rng: &mut R) -> Result<TaskPool> {
    if m == 0 {
        return Err(Error::EmptyPool);
    }
    let tasks = (0..m).map(|id| Task { id, q: prior.sample(rng) }).collect();
    Ok(TaskPool { tasks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn two_point_crowd() {
        let s = crowd_stats(&WorkerPrior::Discrete(vec![(0.9, 0.5), (0.6, 0.5)])).unwrap();
        assert!(close(s.mu, 0.5));
        assert!(close(s.sigma2, 0.34));
    }

    #[test]
    fn spammer_hammer_moments_coincide() {
        for s2 in [0.1, 0.2, 0.3, 1.0] {
            let s = crowd_stats(&WorkerPrior::spammer_hammer(s2)).unwrap();
            assert!(close(s.mu, s2));
            assert!(close(s.sigma2, s2));
        }
    }

    #[test]
    fn adversarial_crowd_rejected() {
        let r = crowd_stats(&WorkerPrior::Discrete(vec![(0.3, 0.5), (0.6, 0.5)]));
        assert!(matches!(r, Err(Error::NonPositiveMu { .. })));
        let r = crowd_stats(&WorkerPrior::Discrete(vec![(0.5, 1.0)]));
        assert!(matches!(r, Err(Error::NonPositiveMu { .. })));
    }

    #[test]
    fn half_quality_task_rejected() {
        assert_eq!(TaskPrior::new(vec![(0.5, 1.0)]), Err(Error::DegenerateTask));
    }

    #[test]
    fn three_level_difficulties() {
        let p = TaskPrior::symmetric_from_difficulties(&[
            (1.0, 1.0 / 3.0),
            (0.25, 1.0 / 3.0),
            (1.0 / 16.0, 1.0 / 3.0),
        ])
        .unwrap();
        let s = task_stats(&p);
        assert!(close(s.lambda, 1.0 / 7.0));
        assert!(close(s.rho2, (1.0 + 0.25 + 1.0 / 16.0) / 3.0));
        assert!(close(s.lambda_min, 1.0 / 16.0));
        let q = quantize(&p);
        assert_eq!(q.bins.len(), 3);
        assert!(close(q.lambda_hat, 1.0 / 7.0));
        assert!(close(q.c_delta, 0.2));
        assert!(close(q.c1, 5.0));
    }

    #[test]
    fn quantize_drops_empty_bins() {
        let p = TaskPrior::new(vec![(0.9, 0.4), (0.8, 0.4), (0.6, 0.2)]).unwrap();
        let q = quantize(&p);
        assert_eq!(q.raw_bins, 5);
        assert_eq!(q.bins.len(), 2);
        assert!(close(q.bins[0].lambda, 0.64));
        assert!(close(q.bins[0].mass, 0.8));
        assert!(close(q.bins[1].lambda, 0.04));
        assert!(close(q.bins[1].mass, 0.2));
    }

    #[test]
    fn empty_pool_rejected() {
        let p = TaskPrior::new(vec![(1.0, 1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_tasks(&p, 0, &mut rng), Err(Error::EmptyPool));
    }

    /// Brute-force bin assignment by scanning dyadic intervals.
    fn oracle_bin(l: f64, lmax: f64, nbins: usize) -> usize {
        for a in 1..=nbins {
            let hi = lmax / 2f64.powi(a as i32 - 1);
            let lo = lmax / 2f64.powi(a as i32);
            if l > lo * (1.0 + 1e-12) && l <= hi * (1.0 + 1e-12) {
                return a;
            }
        }
        nbins
    }

    fn prior_strategy() -> impl Strategy<Value = TaskPrior> {
        prop::collection::vec((0.51f64..1.0, 0.05f64..1.0), 1..6).prop_map(|v| {
            let total: f64 = v.iter().map(|x| x.1).sum();
            TaskPrior::new(v.into_iter().map(|(q, m)| (q, m / total)).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn quantization_invariants(p in prior_strategy()) {
            let s = task_stats(&p);
            let q = quantize(&p);
            prop_assert!((q.bins.iter().map(|b| b.mass).sum::<f64>() - 1.0).abs() < 1e-9);
            // Difficulties are rounded up to their bin's top, so lambda <= lambda_hat <= 2 lambda.
            prop_assert!(q.lambda_hat >= s.lambda * (1.0 - 1e-9));
            prop_assert!(q.lambda_hat <= 2.0 * s.lambda * (1.0 + 1e-9));
            prop_assert!(q.bins.windows(2).all(|w| w[0].lambda > w[1].lambda));
            prop_assert!(q.raw_bins == 1 + ((s.lambda_max / s.lambda_min).log2() - 1e-9).ceil().max(0.0) as usize);
            // Each support point sits in the oracle's bin.
            for &(l, m) in &p.difficulty_support() {
                let a = oracle_bin(l, s.lambda_max, q.raw_bins);
                let rep = s.lambda_max / 2f64.powi(a as i32 - 1);
                let bin = q.bins.iter().find(|b| (b.lambda - rep).abs() < 1e-12).unwrap();
                prop_assert!(bin.mass >= m - 1e-12);
                prop_assert!(rep >= l * (1.0 - 1e-12) && rep < 2.0 * l * (1.0 + 1e-12));
            }
        }

        #[test]
        fn stats_bounds(p in prior_strategy()) {
            let s = task_stats(&p);
            prop_assert!(s.lambda <= s.rho2 * (1.0 + 1e-12));
            prop_assert!(s.lambda_min <= s.lambda * (1.0 + 1e-12));
            prop_assert!(s.rho2 <= s.lambda_max * (1.0 + 1e-12));
        }
    }
}
