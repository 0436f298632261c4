use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use composite_opt::harness::{self, config::ExperimentConfig, metrics};
use composite_opt::parallel;

#[derive(Parser)]
#[command(name = "composite-opt", version, about = "Regularized Gauss-Newton style training on composite objectives")]
struct Cli {
    /// Worker threads (defaults to COMPOSITE_OPT_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and write metrics.csv and summary.json to the configured output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the `output` key.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print constant estimates and the stacked-system rank at the initial weights.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print ‖Q(w⁰)‖₂ for the two-point linear net with ⌈1/ε⌉ hidden neurons.
    Qscale {
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.05, 0.025])]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the configured first-order baseline; output goes to `<output>/baseline`.
    Baseline {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &Path) -> anyhow::Result<(ExperimentConfig, BTreeMap<String, String>)> {
    ExperimentConfig::from_file(path).with_context(|| format!("reading config {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { config, output } => {
            let (mut cfg, _) = load(&config)?;
            if let Some(dir) = output {
                cfg.output_path = dir;
            }
            let out = harness::run_experiment(&cfg)?;
            let s = &out.summary;
            println!("iterations   {} / {}", s.iterations_run, s.horizon);
            println!("termination  {:?}", s.termination);
            println!("final gap    {:.6e}", s.final_gap);
            match (&s.audit, &s.audit_skipped) {
                (Some(a), _) => println!(
                    "audit        avg gap {:.6e} <= bound {:.6e}: {}",
                    a.lhs_avg_gap,
                    a.rhs_bound,
                    if a.satisfied { "yes" } else { "no" }
                ),
                (None, Some(reason)) => println!("audit        skipped ({reason})"),
                (None, None) => {}
            }
            println!("output       {}", out.output_dir.display());
            Ok(if out.success() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Check { config } => {
            let (cfg, _) = load(&config)?;
            let report = harness::check_experiment(&cfg)?;
            if report.stacked_rank < report.stacked_rows {
                eprintln!(
                    "warning: stacked system has rank {} < {} rows; exact interpolation directions may not exist",
                    report.stacked_rank, report.stacked_rows
                );
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Qscale { eps, seed } => {
            let rows = harness::q_norm_scaling_experiment(&eps, seed)?;
            println!("eps,hidden,q_norm,ratio");
            let mut prev: Option<f64> = None;
            for row in rows {
                let ratio = prev.map(|p| format!("{:.6}", row.q_norm / p)).unwrap_or_default();
                println!("{},{},{:.10e},{}", row.eps, row.hidden, row.q_norm, ratio);
                prev = Some(row.q_norm);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Baseline { config } => {
            let (cfg, echo) = load(&config)?;
            let start = std::time::Instant::now();
            let result = harness::run_baseline(&cfg)?;
            let dir = cfg.output_path.join("baseline");
            let summary = metrics::RunSummary {
                config: echo,
                horizon: cfg.baseline.map(|b| b.iters()).unwrap_or(0),
                iterations_run: result.records.len(),
                termination: if result.diverged {
                    composite_opt::Termination::NonFinite { t: result.records.len() }
                } else {
                    composite_opt::Termination::Completed
                },
                final_gap: result.final_gap,
                estimates: Default::default(),
                audit: None,
                audit_skipped: Some("baseline optimizer".into()),
                complexity_constant: None,
                certificates_satisfied: true,
                wall_clock_seconds: start.elapsed().as_secs_f64(),
            };
            metrics::emit_metrics(&dir, &result.records, &summary)?;
            println!("final gap {:.6e}{}", result.final_gap, if result.diverged { " (diverged)" } else { "" });
            println!("output    {}", dir.display());
            Ok(if result.diverged { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads;
    match parallel::with_threads(threads, || run(cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
