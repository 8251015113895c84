//! `mflang`: runs one experiment from a JSON config and writes its report.
//!
//! Exit codes: 0 when every pass flag holds, 2 when any fails, 1 on errors
//! (including bad usage).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use mflang_core::experiments::{emit_report, run};
use mflang_core::{parse_config, ExperimentKind, ExperimentReport};

const OUT_ENV: &str = "MFLANG_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "mflang",
    version,
    about = "Mean-field Langevin dynamics experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Over-damped synchronous coupling contraction.
    Contraction(RunArgs),
    /// Over-damped propagation of chaos over an n sweep.
    Poc(RunArgs),
    /// Kinetic coupling contraction of E[Q].
    KineticContraction(RunArgs),
    /// Kinetic propagation of chaos over an n sweep.
    KineticPoc(RunArgs),
    /// Picard iteration of the Gibbs map on a grid.
    FixedPoint(RunArgs),
    /// Kinetic constant selection only.
    KineticConstants(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; falls back to the config, then $MFLANG_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn split(&self) -> (ExperimentKind, &RunArgs) {
        match self {
            Command::Contraction(a) => (ExperimentKind::Contraction, a),
            Command::Poc(a) => (ExperimentKind::Poc, a),
            Command::KineticContraction(a) => (ExperimentKind::KineticContraction, a),
            Command::KineticPoc(a) => (ExperimentKind::KineticPoc, a),
            Command::FixedPoint(a) => (ExperimentKind::FixedPoint, a),
            Command::KineticConstants(a) => (ExperimentKind::KineticConstants, a),
        }
    }
}

fn print_report(report: &ExperimentReport, out: &std::path::Path) {
    if let Some(k) = &report.kinetic_constants {
        println!("eta = {}", k.eta);
        println!("eta0 = {}", k.eta0);
        println!("b window = ({}, {})", k.window.0, k.window.1);
        if k.feasible {
            println!("b = {}  C = {}", k.b, k.rate_c);
        }
    }
    if let Some(r) = report.fitted_rate {
        println!("fitted rate = {r}");
    }
    if let Some(b) = report.theoretical_rate_bound {
        println!("rate bound = {b}");
    }
    for row in &report.poc_table {
        println!(
            "n = {}: sup gap = {}, delta_d = {}, ratio = {}",
            row.n, row.sup_gap, row.delta_d, row.ratio
        );
    }
    if let Some(s) = report.fitted_scaling_slope {
        println!(
            "scaling slope = {s} (delta_d slope {})",
            report.expected_scaling_slope.unwrap_or(f64::NAN)
        );
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    for t in &report.tests {
        println!("{}", t.summary_line());
    }
    println!(
        "{}: {} ({})",
        report.experiment,
        if report.passed() { "PASS" } else { "FAIL" },
        out.display()
    );
}

fn execute(cmd: &Command) -> anyhow::Result<bool> {
    let (kind, args) = cmd.split();
    let mut config =
        parse_config(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    if config.experiment != kind {
        bail!(
            "{} declares experiment `{}` but the subcommand is `{kind}`",
            args.config.display(),
            config.experiment
        );
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("mflang-out").join(kind.name()));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = args.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build().context("building the worker pool")?;
    let report = pool.install(|| run(&config))?;
    emit_report(&report, &out)?;
    print_report(&report, &out);
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
