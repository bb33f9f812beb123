//! `ezone` command-line driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ezone_core::config::RunConfig;
use ezone_core::pipeline;
use ezone_core::synth::SynthSpec;
use ezone_core::{Error, ErrorKind};

#[derive(Parser, Debug)]
#[command(name = "ezone", version, about = "Spatial extreme-precipitation risk zoning")]
struct Cli {
    /// key=value configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory of <year>.csv / <year>.bin inputs (default: synthetic data).
    #[arg(long, global = true)]
    input: Option<PathBuf>,

    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Tail quantile level in (0, 1).
    #[arg(long, global = true)]
    tau: Option<f64>,

    /// Nearest neighbours per node.
    #[arg(long, global = true)]
    k: Option<usize>,

    /// Number of risk zones.
    #[arg(long, global = true)]
    zones: Option<usize>,

    /// augmented | embedding_only
    #[arg(long = "cluster-input", global = true)]
    cluster_input: Option<String>,

    /// Extra key=value overrides, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Write a synthetic dataset (one CSV per year plus planted labels).
    Synth,
    /// Compute per-node features for every year.
    Features,
    /// Run the full per-year zoning.
    Zone,
    /// Cross-year diagnostics from the per-year outputs in --out.
    Temporal,
    /// Baseline comparison from the per-year outputs in --out.
    Compare,
    /// zone, temporal and compare in one go.
    All,
}

fn build_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &cli.input {
        cfg.input = Some(p.clone());
    }
    if let Some(p) = &cli.out {
        cfg.out = p.clone();
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.tau {
        cfg.tau = v;
    }
    if let Some(v) = cli.k {
        cfg.k_neighbors = v;
    }
    if let Some(v) = cli.zones {
        cfg.k_c = v;
    }
    if let Some(v) = &cli.cluster_input {
        cfg.set("cluster_input", v)?;
    }
    for item in &cli.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{item}'")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

/// Reports per-year failures and turns the first one into the run's error.
fn first_failure(failures: Vec<Error>) -> Result<(), Error> {
    match failures.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn run(cmd: Command, cfg: &RunConfig) -> Result<(), Error> {
    match cmd {
        Command::Synth => {
            let spec = SynthSpec::from_settings(&cfg.synth, cfg.seed);
            pipeline::write_synth(&cfg.out, &spec)?;
            println!("wrote {} synthetic years to {}", spec.n_years, cfg.out.display());
            Ok(())
        }
        Command::Features => {
            let years = pipeline::resolve_years(cfg)?;
            for year in years {
                let data = pipeline::load_year(cfg, year)?;
                let f = pipeline::run_features(cfg, &data)?;
                pipeline::write_features(&cfg.out.join(year.to_string()), &f)?;
                println!("{year}: {} nodes, {} dropped", f.records.len(), f.dropped.len());
            }
            Ok(())
        }
        Command::Zone => {
            let (done, failures) = pipeline::run_years(cfg, &cfg.out)?;
            for s in &done {
                println!("{}: zoned {} nodes", s.year, s.node_index.len());
            }
            first_failure(failures)
        }
        Command::Temporal => {
            let years = pipeline::load_year_summaries(&cfg.out, cfg.d_z)?;
            let report = pipeline::run_temporal(cfg, &years)?;
            pipeline::write_temporal(&cfg.out.join("temporal"), cfg, &report)?;
            for (pair, d) in &report.diagnostics {
                println!(
                    "{pair}: mean distance {:.4}, significant {:.3}",
                    d.summary.mean, d.prop_significant
                );
            }
            Ok(())
        }
        Command::Compare => {
            let years = pipeline::load_year_summaries(&cfg.out, cfg.d_z)?;
            let report = pipeline::run_compare(cfg, &years)?;
            pipeline::write_compare(&cfg.out.join("comparison"), cfg, &report)?;
            print_comparison(&report.rows);
            Ok(())
        }
        Command::All => {
            let summary = pipeline::run_all(cfg)?;
            println!("completed years: {:?}", summary.completed);
            if let Some(c) = &summary.comparison {
                print_comparison(&c.rows);
            }
            first_failure(summary.failures)
        }
    }
}

fn print_comparison(rows: &[ezone_core::baselines::ComparisonRow]) {
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
    println!("{:<16} {:>10} {:>10} {:>10}", "model", "precision", "recall", "ari");
    for r in rows {
        println!(
            "{:<16} {:>10} {:>10} {:>10}",
            r.model,
            fmt(r.mean_precision),
            fmt(r.mean_recall),
            fmt(r.mean_ari)
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = build_config(&cli).and_then(|cfg| run(cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
