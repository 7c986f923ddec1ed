//! Closed-form error bounds, density-evolution moments and budget allocation.

use crate::error::{Error, Result};
use crate::model::QuantizedPrior;

/// Constant in the minimax lower bounds.
pub const C_PRIME: f64 = 1.0 / 0.27;

/// Graph degrees and crowd/task moments entering the message-passing analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpParams {
    pub ell: f64,
    pub r: f64,
    pub mu: f64,
    pub sigma2: f64,
    pub rho2: f64,
}

impl MpParams {
    pub fn ell_hat(&self) -> f64 {
        self.ell - 1.0
    }

    pub fn r_hat(&self) -> f64 {
        self.r - 1.0
    }

    /// Per-iteration growth of the signal-to-noise ratio,
    /// `(ell-1)(r-1) rho^4 sigma^4`.
    pub fn snr_growth(&self) -> f64 {
        self.ell_hat() * self.r_hat() * (self.rho2 * self.sigma2).powi(2)
    }

    fn check_degrees(&self) -> Result<()> {
        if !(self.ell > 1.0 && self.r > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "degrees ({}, {}) must exceed 1",
                self.ell, self.r
            )));
        }
        if !(self.rho2 > 0.0 && self.sigma2 > 0.0) {
            return Err(Error::InvalidArgument("rho2 and sigma2 must be positive".into()));
        }
        Ok(())
    }
}

/// A bound evaluated both as the raw expression and clipped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundValue {
    pub raw: f64,
    pub capped: f64,
}

impl BoundValue {
    fn new(raw: f64) -> Self {
        BoundValue { raw, capped: raw.clamp(0.0, 1.0) }
    }
}

/// Effective variance after `k` iterations:
/// `2 sigma^2 / (mu^2 c^{k-1}) + 3 (1 + 1/(r_hat rho^2 sigma^2)) (1 - c^{-(k-1)}) / (1 - 1/c)`
/// with `c = ell_hat r_hat rho^4 sigma^4`.
pub fn sigma_k2(p: &MpParams, k: u32) -> Result<f64> {
    p.check_degrees()?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let c = p.snr_growth();
    if (c - 1.0).abs() < 1e-12 {
        return Err(Error::SingularGeometricRatio);
    }
    let inv = c.powi(-(k as i32 - 1));
    let noise = 3.0 * (1.0 + 1.0 / (p.r_hat() * p.rho2 * p.sigma2));
    Ok(2.0 * p.sigma2 / (p.mu * p.mu) * inv + noise * (1.0 - inv) / (1.0 - 1.0 / c))
}

/// Limit of [`sigma_k2`] as `k` grows, defined above the barrier `c > 1`.
pub fn sigma_inf2(p: &MpParams) -> Result<f64> {
    p.check_degrees()?;
    let c = p.snr_growth();
    if c <= 1.0 {
        return Err(Error::ConditionsViolated(vec![format!("snr growth {c} <= 1")]));
    }
    Ok(3.0 * (1.0 + 1.0 / (p.r_hat() * p.rho2 * p.sigma2)) * c / (c - 1.0))
}

/// Error bound for a task of difficulty `lambda_i` after `k` iterations on a
/// random `(ell, r)` graph over `m` tasks:
/// `exp(-ell sigma^2 lambda_i / (2 sigma_k^2)) + 3 ell r (ell_hat r_hat)^{2k-2} / m`.
pub fn mp_error_bound(p: &MpParams, lambda_i: f64, k: u32, m: usize) -> Result<BoundValue> {
    let mut bad = Vec::new();
    if !(p.mu > 0.0) {
        bad.push(format!("mu = {} is not positive", p.mu));
    }
    if !(p.snr_growth() > 1.0) {
        bad.push(format!("snr growth {} <= 1", p.snr_growth()));
    }
    if !(p.r_hat() * p.rho2 > 1.0) {
        bad.push(format!("r_hat rho2 = {} <= 1", p.r_hat() * p.rho2));
    }
    if !bad.is_empty() {
        return Err(Error::ConditionsViolated(bad));
    }
    let s = sigma_k2(p, k)?;
    let tail = (-p.ell * p.sigma2 * lambda_i / (2.0 * s)).exp();
    let tree = tree_failure_prob(p.ell, p.r, k, m).raw;
    Ok(BoundValue::new(tail + tree))
}

/// Probability bound that the depth-`2k-1` neighborhood of a task is not a
/// tree: `((ell-1)(r-1))^{2k-2} * 3 ell r / m`.
pub fn tree_failure_prob(ell: f64, r: f64, k: u32, m: usize) -> BoundValue {
    let g = ((ell - 1.0) * (r - 1.0)).powi(2 * k as i32 - 2);
    BoundValue::new(g * 3.0 * ell * r / m as f64)
}

/// Adaptive upper bound `C1 exp(-(C_delta / 4) (gamma/m) lambda sigma^2)`.
pub fn adaptive_upper_bound(gamma_per_task: f64, lambda: f64, sigma2: f64, c_delta: f64, c1: f64) -> BoundValue {
    BoundValue::new(c1 * (-(c_delta / 4.0) * gamma_per_task * lambda * sigma2).exp())
}

/// Minimax lower bound for any adaptive scheme,
/// `(1/4) exp(-C' (gamma/m) lambda sigma^2)`.
pub fn adaptive_lower_bound(gamma_per_task: f64, lambda: f64, sigma2: f64, c_prime: f64) -> Result<BoundValue> {
    if !(sigma2 > 0.0 && sigma2 < 1.0) {
        return Err(Error::ConditionsViolated(vec![format!("sigma2 = {sigma2} outside (0, 1)")]));
    }
    Ok(BoundValue::new(0.25 * (-c_prime * gamma_per_task * lambda * sigma2).exp()))
}

/// Lower bound for a task of difficulty `lambda_i` under any non-adaptive
/// scheme with `ell` queries per task, `exp(-C' (ell sigma^2 lambda_i + 1))`.
pub fn nonadaptive_lower_bound(ell: f64, sigma2: f64, lambda_i: f64, c_prime: f64) -> Result<BoundValue> {
    if !(lambda_i > 0.0 && lambda_i < 1.0) {
        return Err(Error::ConditionsViolated(vec![format!("lambda_i = {lambda_i} outside (0, 1)")]));
    }
    Ok(BoundValue::new((-c_prime * (ell * sigma2 * lambda_i + 1.0)).exp()))
}

/// Mean and variance of the decision variable for a task of quality `q`
/// after `k` iterations, Gaussian-initialized, on a locally tree-like graph.
pub fn density_evolution(q: f64, p: &MpParams, k: u32) -> Result<(f64, f64)> {
    p.check_degrees()?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let (lh, rh) = (p.ell_hat(), p.r_hat());
    let (mu, s2, rho2) = (p.mu, p.sigma2, p.rho2);
    let sq = 2.0 * q - 1.0;
    let km = (k - 1) as i32;
    let d = lh * rh * rho2 * s2;
    let mean = sq * mu * p.ell * d.powi(km);
    let c = lh * rh * rho2 * rho2 * s2 * s2;
    let geo = if (c - 1.0).abs() < 1e-12 {
        km as f64
    } else {
        (1.0 - c.powi(-km)) / (c - 1.0)
    };
    let inner = rho2 - sq * sq + rho2 * lh * (1.0 - rho2 * s2) * (1.0 + rh * rho2 * s2) * geo;
    let var = mu * mu * p.ell * d.powi(2 * km) * inner + p.ell * (2.0 - mu * mu * rho2) * (lh * rh).powi(km);
    Ok((mean, var))
}

/// Per-bin query counts minimizing the summed exponential error proxy
/// `sum_a (delta_a / 2) exp(-C' lambda_a sigma^2 ell_a)` under
/// `sum_a delta_a ell_a = gamma / m`. Natural logarithms.
pub fn optimal_allocation(qp: &QuantizedPrior, gamma_per_task: f64, sigma2: f64, c_prime: f64) -> Vec<f64> {
    let lam = qp.lambda_hat;
    qp.bins
        .iter()
        .map(|a| {
            let cross: f64 = qp
                .bins
                .iter()
                .filter(|b| b.lambda != a.lambda)
                .map(|b| b.mass / b.lambda * (a.lambda / b.lambda).ln())
                .sum();
            lam / a.lambda * gamma_per_task + lam / (a.lambda * c_prime * sigma2) * cross
        })
        .collect()
}

/// Which closed-form curve to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curve {
    AdaptiveLower,
    AdaptiveUpper,
    NonadaptiveLower,
    MpBound,
}

impl Curve {
    pub const NAMES: [&'static str; 4] = ["lower", "upper", "nonadaptive", "mp"];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Curve::AdaptiveLower),
            "upper" => Ok(Curve::AdaptiveUpper),
            "nonadaptive" => Ok(Curve::NonadaptiveLower),
            "mp" => Ok(Curve::MpBound),
            other => Err(Error::InvalidArgument(format!(
                "unknown curve '{other}'; valid names: {}",
                Curve::NAMES.join(", ")
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Curve::AdaptiveLower => "lower",
            Curve::AdaptiveUpper => "upper",
            Curve::NonadaptiveLower => "nonadaptive",
            Curve::MpBound => "mp",
        }
    }
}

/// Inputs shared by the sampled curves.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveInputs {
    pub lambda: f64,
    pub lambda_min: f64,
    pub mu: f64,
    pub sigma2: f64,
    pub rho2: f64,
    pub c_delta: f64,
    pub c1: f64,
    pub c_prime: f64,
    /// Task count for the tree-failure term of the message-passing bound.
    pub m: usize,
}

/// One curve sampled on a grid of queries per task. Points where a bound's
/// preconditions fail are returned as `None`.
pub fn sample_curve(curve: Curve, inp: &CurveInputs, grid: &[f64]) -> Vec<(f64, Option<BoundValue>)> {
    grid.iter()
        .map(|&x| {
            let v = match curve {
                Curve::AdaptiveLower => adaptive_lower_bound(x, inp.lambda, inp.sigma2, inp.c_prime).ok(),
                Curve::AdaptiveUpper => Some(adaptive_upper_bound(x, inp.lambda, inp.sigma2, inp.c_delta, inp.c1)),
                Curve::NonadaptiveLower => nonadaptive_lower_bound(x, inp.sigma2, inp.lambda_min, inp.c_prime).ok(),
                Curve::MpBound => {
                    let p = MpParams { ell: x, r: x, mu: inp.mu, sigma2: inp.sigma2, rho2: inp.rho2 };
                    let k = k_for(inp.m);
                    mp_error_bound(&p, inp.lambda_min, k, inp.m).ok()
                }
            };
            (x, v)
        })
        .collect()
}

/// Default iteration count `max(1, ceil(sqrt(ln m)))`.
pub fn k_for(m: usize) -> u32 {
    if m <= 1 {
        return 1;
    }
    ((m as f64).ln().sqrt().ceil() as u32).max(1)
}
