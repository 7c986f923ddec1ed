//! Scenario files.
//!
//! A scenario is a TOML document with four tables:
//!
//! ```toml
//! [scenario]
//! id = "three_levels"
//! kind = "labeling"            # or "spectrum"
//! m = 1800
//! seeds = [0, 1, 2]
//! output = "results/three_levels.csv"
//! plot = true                  # emit <output stem>.plot.py
//! traces = true                # emit <output stem>.traces.csv
//! per_difficulty = true        # emit <output stem>.difficulty.csv
//!
//! [workers]
//! kind = "spammer_hammer"      # or "discrete" with support = [[p, mass], ...]
//! sigma2 = 0.3
//!
//! [tasks]
//! kind = "difficulties"        # label-balanced; or "qualities" with [q, mass]
//! support = [[1.0, 1.0], [0.25, 1.0], [0.0625, 1.0]]
//!
//! [labeling]
//! algorithms = ["adaptive", "nonadaptive", "majority", "altmin"]
//! budgets = [60, 120, 180]
//! rho_mode = "estimated"       # or "oracle"
//! final_round = "all_responses"
//! plan_scaling = "exhaust"     # or "theory"
//! budget_mode = "hard"         # or "expectation"
//! ```
//!
//! A `spectrum` scenario replaces `[labeling]` by
//! `[spectrum] degrees = [15, 5]` and `mode = "dense"`. Masses in `support`
//! lists are relative weights and are normalized on load.

use std::path::PathBuf;

use serde::Deserialize;

use crate::adaptive::{FinalRound, PlanScaling, RhoMode};
use crate::assign::BudgetMode;
use crate::error::{Error, Result};
use crate::model::{TaskPrior, WorkerPrior};
use crate::spectral::SpectrumMode;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub workers: WorkerSpec,
    pub tasks: TaskSpec,
    pub labeling: Option<LabelingSpec>,
    pub spectrum: Option<SpectrumSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Labeling,
    Spectrum,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub kind: ScenarioKind,
    pub m: usize,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    #[serde(default)]
    pub plot: bool,
    #[serde(default)]
    pub traces: bool,
    #[serde(default)]
    pub per_difficulty: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkerSpec {
    SpammerHammer {
        sigma2: f64,
        #[serde(default = "one")]
        hammer_quality: f64,
    },
    Discrete {
        support: Vec<(f64, f64)>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    /// `(lambda, weight)`; each difficulty is split evenly between the two labels.
    Difficulties { support: Vec<(f64, f64)> },
    /// `(q, weight)`.
    Qualities { support: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Adaptive,
    Nonadaptive,
    Majority,
    Altmin,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Adaptive => "adaptive",
            Algorithm::Nonadaptive => "nonadaptive",
            Algorithm::Majority => "majority",
            Algorithm::Altmin => "altmin",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoModeSpec {
    Oracle,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalRoundSpec {
    AllResponses,
    AllResponsesAllTasks,
    Fresh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingSpec {
    Theory,
    Exhaust,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetModeSpec {
    Hard,
    Expectation,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelingSpec {
    pub algorithms: Vec<Algorithm>,
    /// Queries per task, `gamma / m`.
    pub budgets: Vec<usize>,
    #[serde(default = "default_rho")]
    pub rho_mode: RhoModeSpec,
    #[serde(default = "default_final")]
    pub final_round: FinalRoundSpec,
    #[serde(default = "default_scaling")]
    pub plan_scaling: ScalingSpec,
    #[serde(default = "default_budget_mode")]
    pub budget_mode: BudgetModeSpec,
}

fn default_rho() -> RhoModeSpec {
    RhoModeSpec::Estimated
}
fn default_final() -> FinalRoundSpec {
    FinalRoundSpec::AllResponses
}
fn default_scaling() -> ScalingSpec {
    ScalingSpec::Exhaust
}
fn default_budget_mode() -> BudgetModeSpec {
    BudgetModeSpec::Hard
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumModeSpec {
    Dense,
    DenseDirect,
    TopPower,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSpec {
    /// Task degree `ell`; worker degree equals it.
    pub degrees: Vec<usize>,
    #[serde(default = "default_spectrum_mode")]
    pub mode: SpectrumModeSpec,
}

fn default_spectrum_mode() -> SpectrumModeSpec {
    SpectrumModeSpec::Dense
}

impl From<RhoModeSpec> for RhoMode {
    fn from(s: RhoModeSpec) -> Self {
        match s {
            RhoModeSpec::Oracle => RhoMode::Oracle,
            RhoModeSpec::Estimated => RhoMode::Estimated,
        }
    }
}

impl From<FinalRoundSpec> for FinalRound {
    fn from(s: FinalRoundSpec) -> Self {
        match s {
            FinalRoundSpec::AllResponses => FinalRound::AllResponses,
            FinalRoundSpec::AllResponsesAllTasks => FinalRound::AllResponsesAllTasks,
            FinalRoundSpec::Fresh => FinalRound::Fresh,
        }
    }
}

impl From<ScalingSpec> for PlanScaling {
    fn from(s: ScalingSpec) -> Self {
        match s {
            ScalingSpec::Theory => PlanScaling::Theory,
            ScalingSpec::Exhaust => PlanScaling::ExhaustBudget,
        }
    }
}

impl From<BudgetModeSpec> for BudgetMode {
    fn from(s: BudgetModeSpec) -> Self {
        match s {
            BudgetModeSpec::Hard => BudgetMode::Hard,
            BudgetModeSpec::Expectation => BudgetMode::Expectation,
        }
    }
}

impl From<SpectrumModeSpec> for SpectrumMode {
    fn from(s: SpectrumModeSpec) -> Self {
        match s {
            SpectrumModeSpec::Dense => SpectrumMode::Dense,
            SpectrumModeSpec::DenseDirect => SpectrumMode::DenseDirect,
            SpectrumModeSpec::TopPower => SpectrumMode::TopPower,
        }
    }
}

fn normalized(support: &[(f64, f64)], field: &str) -> Result<Vec<(f64, f64)>> {
    let total: f64 = support.iter().map(|&(_, w)| w).sum();
    if support.is_empty() || !(total > 0.0) || support.iter().any(|&(_, w)| !(w >= 0.0)) {
        return Err(Error::Config(format!("{field}: weights must be nonnegative with a positive sum")));
    }
    Ok(support.iter().map(|&(x, w)| (x, w / total)).collect())
}

impl WorkerSpec {
    pub fn prior(&self) -> Result<WorkerPrior> {
        let prior = match self {
            &WorkerSpec::SpammerHammer { sigma2, hammer_quality } => {
                WorkerPrior::SpammerHammer { sigma2, hammer_quality }
            }
            WorkerSpec::Discrete { support } => WorkerPrior::Discrete(normalized(support, "workers.support")?),
        };
        prior.support().map_err(|e| Error::Config(format!("workers: {e}")))?;
        Ok(prior)
    }
}

impl TaskSpec {
    pub fn prior(&self) -> Result<TaskPrior> {
        match self {
            TaskSpec::Difficulties { support } => {
                TaskPrior::symmetric_from_difficulties(&normalized(support, "tasks.support")?)
            }
            TaskSpec::Qualities { support } => TaskPrior::new(normalized(support, "tasks.support")?),
        }
        .map_err(|e| Error::Config(format!("tasks: {e}")))
    }
}

impl ScenarioConfig {
    /// Parses and validates a scenario. Syntax errors carry the line and
    /// column reported by the TOML reader; semantic errors name the field.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        if s.seeds.is_empty() {
            return Err(Error::Config("scenario.seeds: seed list is empty".into()));
        }
        if s.m == 0 {
            return Err(Error::Config("scenario.m: must be positive".into()));
        }
        self.workers.prior()?;
        self.tasks.prior()?;
        match s.kind {
            ScenarioKind::Labeling => {
                let l = self
                    .labeling
                    .as_ref()
                    .ok_or_else(|| Error::Config("labeling scenario needs a [labeling] table".into()))?;
                if l.algorithms.is_empty() {
                    return Err(Error::Config("labeling.algorithms: list is empty".into()));
                }
                if l.budgets.is_empty() || l.budgets.contains(&0) {
                    return Err(Error::Config("labeling.budgets: need at least one positive entry".into()));
                }
            }
            ScenarioKind::Spectrum => {
                let sp = self
                    .spectrum
                    .as_ref()
                    .ok_or_else(|| Error::Config("spectrum scenario needs a [spectrum] table".into()))?;
                if sp.degrees.is_empty() || sp.degrees.iter().any(|&d| d < 2) {
                    return Err(Error::Config("spectrum.degrees: need entries of at least 2".into()));
                }
            }
        }
        Ok(())
    }
}
