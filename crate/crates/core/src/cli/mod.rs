//! Command-line harness: scenario sweeps, bound curves, spectra and the
//! spectral difficulty estimate.

pub mod config;
pub mod plot;
pub mod run;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::assign::ResponseGraph;
use crate::error::{Error, Result};
use crate::model::{crowd_stats, quantize, task_stats, TaskPrior, WorkerPrior};
use crate::spectral::{estimate_rho2, SpectrumMode};
use crate::theory::{sample_curve, Curve, CurveInputs, C_PRIME};

#[derive(Debug, Parser)]
#[command(name = "crowdlab", version, about = "Budget-constrained crowdsourced labeling experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute a scenario file and write its CSVs.
    Run {
        config: PathBuf,
        /// Rows executed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Skip the plot script even if the scenario asks for one.
        #[arg(long)]
        no_plot: bool,
    },
    /// Sample closed-form error bounds on a grid of queries per task.
    Bounds(BoundsArgs),
    /// Eigenvalues of the non-backtracking operator of one sampled instance.
    Spectrum(SpectrumArgs),
    /// Spectral estimate of the mean task difficulty from an answer CSV.
    EstimateRho {
        /// CSV of `task_id,worker_id,answer` rows.
        #[arg(long)]
        graph: PathBuf,
        /// Crowd quality `E[(2p-1)^2]`.
        #[arg(long)]
        sigma2: f64,
        /// Nominal task degree; defaults to the largest observed.
        #[arg(long)]
        ell: Option<usize>,
        /// Nominal worker degree; defaults to the largest observed.
        #[arg(long)]
        r: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Curve to sample (lower, upper, nonadaptive, mp); repeatable.
    #[arg(long = "curve")]
    pub curves: Vec<String>,
    /// Shorthand for `--curve lower`.
    #[arg(long)]
    pub lower: bool,
    /// Shorthand for `--curve upper`.
    #[arg(long)]
    pub upper: bool,
    /// Shorthand for `--curve nonadaptive`.
    #[arg(long)]
    pub nonadaptive: bool,
    /// Shorthand for `--curve mp`.
    #[arg(long)]
    pub mp: bool,
    /// Spammer-hammer crowd quality.
    #[arg(long)]
    pub sigma2: f64,
    /// Task difficulties `lambda`, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub difficulties: Vec<f64>,
    /// Relative weights of the difficulties; equal when omitted.
    #[arg(long, value_delimiter = ',')]
    pub weights: Vec<f64>,
    /// Queries per task, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub grid: Vec<f64>,
    /// Task count, used by the message-passing bound.
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    #[arg(long, default_value_t = C_PRIME)]
    pub c_prime: f64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Dense,
    DenseDirect,
    TopPower,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub m: usize,
    /// Task and worker degree.
    #[arg(long)]
    pub ell: usize,
    #[arg(long)]
    pub sigma2: f64,
    /// Task qualities `q`, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub qualities: Vec<f64>,
    /// Relative weights of the qualities; equal when omitted.
    #[arg(long, value_delimiter = ',')]
    pub weights: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "dense")]
    pub mode: ModeArg,
    /// Eigenvalue CSV; standard output when omitted. The summary goes to stderr.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn weighted(points: &[f64], weights: &[f64]) -> Result<Vec<(f64, f64)>> {
    let w: Vec<f64> = if weights.is_empty() { vec![1.0; points.len()] } else { weights.to_vec() };
    if w.len() != points.len() {
        return Err(Error::InvalidArgument(format!("{} weights for {} points", w.len(), points.len())));
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || w.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be nonnegative with a positive sum".into()));
    }
    Ok(points.iter().zip(&w).map(|(&p, &x)| (p, x / total)).collect())
}

/// CSV writer on a file or stdout, schema line already written.
fn sink(out: &Option<PathBuf>) -> Result<csv::Writer<Box<dyn Write>>> {
    let mut w: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    writeln!(w, "{}", run::SCHEMA_LINE)?;
    Ok(csv::Writer::from_writer(w))
}

pub fn bounds(args: &BoundsArgs) -> Result<()> {
    let mut curves = Vec::new();
    for name in &args.curves {
        curves.push(Curve::parse(name)?);
    }
    for (on, c) in [
        (args.lower, Curve::AdaptiveLower),
        (args.upper, Curve::AdaptiveUpper),
        (args.nonadaptive, Curve::NonadaptiveLower),
        (args.mp, Curve::MpBound),
    ] {
        if on && !curves.contains(&c) {
            curves.push(c);
        }
    }
    if curves.is_empty() {
        return Err(Error::InvalidArgument(format!("no curve requested; valid names: {}", Curve::NAMES.join(", "))));
    }
    let tp = TaskPrior::symmetric_from_difficulties(&weighted(&args.difficulties, &args.weights)?)?;
    let crowd = crowd_stats(&WorkerPrior::spammer_hammer(args.sigma2))?;
    let ts = task_stats(&tp);
    let qp = quantize(&tp);
    let inp = CurveInputs {
        lambda: ts.lambda,
        lambda_min: ts.lambda_min,
        mu: crowd.mu,
        sigma2: crowd.sigma2,
        rho2: ts.rho2,
        c_delta: qp.c_delta,
        c1: qp.c1,
        c_prime: args.c_prime,
        m: args.m,
    };
    let mut w = sink(&args.out)?;
    w.write_record(["curve", "budget_per_task", "bound_raw", "bound", "valid", "c_prime"])?;
    for c in curves {
        for (x, v) in sample_curve(c, &inp, &args.grid) {
            let (raw, capped, valid) = match v {
                Some(b) => (format!("{:.10e}", b.raw), format!("{:.10e}", b.capped), "true"),
                None => (String::new(), String::new(), "false"),
            };
            w.write_record([c.name().to_string(), x.to_string(), raw, capped, valid.into(), args.c_prime.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn spectrum_cmd(args: &SpectrumArgs) -> Result<()> {
    let tp = TaskPrior::new(weighted(&args.qualities, &args.weights)?)?;
    let wp = WorkerPrior::spammer_hammer(args.sigma2);
    let mode = match args.mode {
        ModeArg::Dense => SpectrumMode::Dense,
        ModeArg::DenseDirect => SpectrumMode::DenseDirect,
        ModeArg::TopPower => SpectrumMode::TopPower,
    };
    let rep = run::spectrum_instance(&tp, &wp, args.m, args.ell, args.seed, mode)?;
    let mut w = sink(&args.out)?;
    w.write_record(["re", "im"])?;
    for z in &rep.eigenvalues {
        w.write_record([format!("{:.10e}", z.re), format!("{:.10e}", z.im)])?;
    }
    w.flush()?;
    eprintln!(
        "top {:.4} (predicted {:.4}), bulk {}, predicted radius {:.4}, barrier margin {:.4}",
        rep.top,
        rep.predicted_top,
        rep.bulk_radius.map(|b| format!("{b:.4}")).unwrap_or_else(|| "n/a".into()),
        rep.predicted_radius,
        rep.barrier.margin,
    );
    Ok(())
}

pub fn estimate_rho_cmd(graph: &PathBuf, sigma2: f64, ell: Option<usize>, r: Option<usize>) -> Result<()> {
    let f = std::fs::File::open(graph).map_err(|e| Error::Io(format!("{}: {e}", graph.display())))?;
    let g = ResponseGraph::read_csv(std::io::BufReader::new(f))?;
    let (dl, dr) = g.degrees();
    let est = estimate_rho2(&g, ell.unwrap_or(dl), r.unwrap_or(dr), sigma2)?;
    println!("{}", run::SCHEMA_LINE);
    println!("rho2_raw,rho2,sigma1");
    println!("{:.10e},{:.10e},{:.10e}", est.raw, est.clamped, est.sigma1);
    Ok(())
}

/// Parses `args` and executes; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let res = match &cli.command {
        Command::Run { config, jobs, no_plot } => run::run(config, *jobs, !no_plot).map(|s| {
            for p in &s.written {
                eprintln!("wrote {}", p.display());
            }
            if s.failed > 0 {
                eprintln!("{} of {} rows failed", s.failed, s.rows);
            }
            s.failed
        }),
        Command::Bounds(a) => bounds(a).map(|_| 0),
        Command::Spectrum(a) => spectrum_cmd(a).map(|_| 0),
        Command::EstimateRho { graph, sigma2, ell, r } => estimate_rho_cmd(graph, *sigma2, *ell, *r).map(|_| 0),
    };
    match res {
        Ok(0) => 0,
        Ok(_) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
