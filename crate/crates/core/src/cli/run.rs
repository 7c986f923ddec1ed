//! Scenario execution and CSV output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Algorithm, LabelingSpec, ScenarioConfig, ScenarioKind, SpectrumSpec};
use super::plot;
use crate::adaptive::{
    error_by_difficulty, make_plan_scaled, run_adaptive, run_majority, run_nonadaptive, AdaptiveConfig, LabelingResult,
    RoundTrace,
};
use crate::altmin::{run_altmin, AltMinConfig};
use crate::assign::{collect, regular_random_graph, BudgetLedger, BudgetMode};
use crate::error::{Error, Result};
use crate::model::{quantize, sample_tasks, task_stats, crowd_stats, TaskPool, TaskPrior, WorkerPrior};
use crate::spectral::{build_nonbacktracking, spectrum, SpectrumMode, SpectrumReport};

pub const SCHEMA_LINE: &str = "#schema=1";

/// One (budget, seed, algorithm) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub budget_per_task: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub outcome: std::result::Result<RowOutcome, String>,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowOutcome {
    pub error_rate: f64,
    pub spent: usize,
    pub traces: Vec<RoundTrace>,
    pub by_difficulty: Vec<(f64, usize, usize)>,
}

/// Files written by a run and whether every row succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub written: Vec<PathBuf>,
    pub rows: usize,
    pub failed: usize,
}

fn companion(output: &Path, suffix: &str) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    output.with_file_name(format!("{stem}.{suffix}"))
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{SCHEMA_LINE}")?;
    Ok(csv::Writer::from_writer(f))
}

/// Seeds the stream for one row so results do not depend on execution order.
fn row_rng(seed: u64, budget: usize, alg: Algorithm) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((budget as u64) << 8) | (alg as u64 + 1));
    rng
}

fn pool_for(prior: &TaskPrior, m: usize, seed: u64) -> Result<TaskPool> {
    sample_tasks(prior, m, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn run_row(
    lab: &LabelingSpec,
    pool: &TaskPool,
    tp: &TaskPrior,
    wp: &WorkerPrior,
    budget: usize,
    seed: u64,
    alg: Algorithm,
) -> Result<LabelingResult> {
    let m = pool.len();
    let mut rng = row_rng(seed, budget, alg);
    match alg {
        Algorithm::Adaptive => {
            let plan = make_plan_scaled(m, m * budget, &quantize(tp), lab.plan_scaling.into())?;
            let cfg = AdaptiveConfig {
                rho_mode: lab.rho_mode.into(),
                final_round: lab.final_round.into(),
                budget_mode: lab.budget_mode.into(),
                ..Default::default()
            };
            run_adaptive(pool, wp, &plan, &cfg, &mut rng)
        }
        Algorithm::Nonadaptive => run_nonadaptive(pool, wp, budget, budget, &mut rng),
        Algorithm::Majority => run_majority(pool, wp, budget, &mut rng),
        Algorithm::Altmin => run_altmin(pool, wp, budget, &AltMinConfig::default(), &mut rng),
    }
}

/// Runs every (budget, seed, algorithm) row. Rows are independent; a failed
/// row is recorded and the sweep continues.
pub fn labeling_rows(cfg: &ScenarioConfig, lab: &LabelingSpec, jobs: usize) -> Result<Vec<ResultRow>> {
    let tp = cfg.tasks.prior()?;
    let wp = cfg.workers.prior()?;
    let m = cfg.scenario.m;
    let mut jobs_list = Vec::new();
    for &b in &lab.budgets {
        for &s in &cfg.scenario.seeds {
            for &a in &lab.algorithms {
                jobs_list.push((b, s, a));
            }
        }
    }
    let work = |&(b, s, a): &(usize, u64, Algorithm)| {
        let start = Instant::now();
        let outcome = pool_for(&tp, m, s).and_then(|pool| {
            let res = run_row(lab, &pool, &tp, &wp, b, s, a)?;
            Ok(RowOutcome {
                error_rate: res.error_rate(&pool),
                spent: res.spent,
                by_difficulty: error_by_difficulty(&res.labels, &pool),
                traces: res.traces,
            })
        });
        ResultRow {
            scenario: cfg.scenario.id.clone(),
            budget_per_task: b,
            seed: s,
            algorithm: a,
            outcome: outcome.map_err(|e| e.to_string()),
            runtime_secs: start.elapsed().as_secs_f64(),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(pool.install(|| jobs_list.par_iter().map(work).collect()))
}

fn fmt(x: f64) -> String {
    format!("{x:.10e}")
}

pub fn write_labeling(cfg: &ScenarioConfig, rows: &[ResultRow]) -> Result<Vec<PathBuf>> {
    let out = &cfg.scenario.output;
    let mut written = vec![out.clone()];
    let mut w = writer(out)?;
    w.write_record(["scenario", "budget_per_task", "seed", "algorithm", "status", "error_rate", "budget_spent", "message"])?;
    for r in rows {
        let (status, err, spent, msg) = match &r.outcome {
            Ok(o) => ("ok", fmt(o.error_rate), o.spent.to_string(), String::new()),
            Err(e) => ("failed", String::new(), String::new(), e.clone()),
        };
        w.write_record([
            r.scenario.as_str(),
            &r.budget_per_task.to_string(),
            &r.seed.to_string(),
            r.algorithm.name(),
            status,
            &err,
            &spent,
            &msg,
        ])?;
    }
    w.flush()?;

    // Wall-clock time varies run to run; keeping it out of the main file
    // leaves that file reproducible byte for byte.
    let timing = companion(out, "timing.csv");
    let mut w = writer(&timing)?;
    w.write_record(["budget_per_task", "seed", "algorithm", "runtime_secs"])?;
    for r in rows {
        w.write_record([r.budget_per_task.to_string(), r.seed.to_string(), r.algorithm.name().into(), format!("{:.6}", r.runtime_secs)])?;
    }
    w.flush()?;
    written.push(timing);

    if cfg.scenario.traces {
        let path = companion(out, "traces.csv");
        let mut w = writer(&path)?;
        let mut header = vec!["budget_per_task", "seed", "algorithm"];
        header.extend(RoundTrace::HEADER);
        w.write_record(&header)?;
        for r in rows {
            if let Ok(o) = &r.outcome {
                for t in &o.traces {
                    let mut rec = vec![r.budget_per_task.to_string(), r.seed.to_string(), r.algorithm.name().to_string()];
                    rec.extend(t.record());
                    w.write_record(&rec)?;
                }
            }
        }
        w.flush()?;
        written.push(path);
    }

    if cfg.scenario.per_difficulty {
        let path = companion(out, "difficulty.csv");
        let mut w = writer(&path)?;
        w.write_record(["budget_per_task", "seed", "algorithm", "lambda", "count", "errors"])?;
        for r in rows {
            if let Ok(o) = &r.outcome {
                for &(l, c, e) in &o.by_difficulty {
                    w.write_record([r.budget_per_task.to_string(), r.seed.to_string(), r.algorithm.name().into(), fmt(l), c.to_string(), e.to_string()])?;
                }
            }
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

/// Spectrum of one sampled instance.
pub fn spectrum_instance(
    tp: &TaskPrior,
    wp: &WorkerPrior,
    m: usize,
    ell: usize,
    seed: u64,
    mode: SpectrumMode,
) -> Result<SpectrumReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = sample_tasks(tp, m, &mut rng)?;
    let shape = regular_random_graph(m, ell, ell, &mut rng)?;
    let mut ledger = BudgetLedger::new(m * ell, BudgetMode::Hard);
    let (g, _) = collect(&shape, &pool.tasks, wp, &mut rng, &mut ledger)?;
    let b = build_nonbacktracking(&g);
    spectrum(&b, mode, task_stats(tp).rho2, crowd_stats(wp)?.sigma2)
}

/// Runs the spectrum scenario; returns the files written and the number of
/// failed instances.
pub fn run_spectrum(cfg: &ScenarioConfig, sp: &SpectrumSpec, jobs: usize) -> Result<(Vec<PathBuf>, usize, usize)> {
    let tp = cfg.tasks.prior()?;
    let wp = cfg.workers.prior()?;
    let mut cases = Vec::new();
    for &d in &sp.degrees {
        for &s in &cfg.scenario.seeds {
            cases.push((d, s));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let reports: Vec<Result<SpectrumReport>> = pool.install(|| {
        cases
            .par_iter()
            .map(|&(d, s)| spectrum_instance(&tp, &wp, cfg.scenario.m, d, s, sp.mode.into()))
            .collect()
    });

    let out = &cfg.scenario.output;
    let mut w = writer(out)?;
    w.write_record(["scenario", "ell", "seed", "re", "im"])?;
    let summary_path = companion(out, "summary.csv");
    let mut sw = writer(&summary_path)?;
    sw.write_record([
        "scenario", "ell", "seed", "status", "top_re", "top_im", "top_modulus", "bulk_radius", "predicted_top",
        "predicted_radius", "barrier_margin", "fraction_within_1.1_radius", "message",
    ])?;
    let mut failed = 0;
    for (&(d, s), rep) in cases.iter().zip(&reports) {
        let id = cfg.scenario.id.as_str();
        match rep {
            Ok(r) => {
                for z in &r.eigenvalues {
                    w.write_record([id, &d.to_string(), &s.to_string(), &fmt(z.re), &fmt(z.im)])?;
                }
                let top = r.eigenvalues[0];
                sw.write_record([
                    id.to_string(),
                    d.to_string(),
                    s.to_string(),
                    "ok".into(),
                    fmt(top.re),
                    fmt(top.im),
                    fmt(r.top),
                    r.bulk_radius.map(fmt).unwrap_or_default(),
                    fmt(r.predicted_top),
                    fmt(r.predicted_radius),
                    fmt(r.barrier.margin),
                    r.bulk_radius.map(|_| fmt(r.fraction_within(1.1 * r.predicted_radius))).unwrap_or_default(),
                    String::new(),
                ])?;
            }
            Err(e) => {
                failed += 1;
                let mut rec = vec![id.to_string(), d.to_string(), s.to_string(), "failed".into()];
                rec.extend(std::iter::repeat_n(String::new(), 8));
                rec.push(e.to_string());
                sw.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    sw.flush()?;
    Ok((vec![out.clone(), summary_path], cases.len(), failed))
}

/// Loads and executes a scenario file.
pub fn run(config_path: &Path, jobs: usize, emit_plot: bool) -> Result<RunSummary> {
    let cfg = ScenarioConfig::load(config_path)?;
    run_config(&cfg, jobs, emit_plot)
}

pub fn run_config(cfg: &ScenarioConfig, jobs: usize, emit_plot: bool) -> Result<RunSummary> {
    let (mut written, rows, failed) = match cfg.scenario.kind {
        ScenarioKind::Labeling => {
            let lab = cfg.labeling.as_ref().expect("validated");
            let rows = labeling_rows(cfg, lab, jobs)?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            (write_labeling(cfg, &rows)?, rows.len(), failed)
        }
        ScenarioKind::Spectrum => run_spectrum(cfg, cfg.spectrum.as_ref().expect("validated"), jobs)?,
    };
    if emit_plot && cfg.scenario.plot {
        let path = companion(&cfg.scenario.output, "plot.py");
        std::fs::write(&path, plot::script(cfg))?;
        written.push(path);
    }
    Ok(RunSummary { written, rows, failed })
}
