//! `fslice` runs the checks of an experiment config and writes their tables.

mod checks;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use fslice::Error;
use log::info;

use crate::checks::Runner;
use crate::config::{CheckKind, Experiment};
use crate::report::{write_json, write_text, CheckSummary, RunSummary};

#[derive(Parser, Debug)]
#[command(name = "fslice", version, about = "Time-sliced propagator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for tables and the summary [default: "out"].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Run even when a grid undersamples the kernel.
    #[arg(long, global = true)]
    force_sampling: bool,
    /// Largest admissible slice length.
    #[arg(long, global = true)]
    rho_star: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Every check listed in the config.
    Run,
    Propagate,
    Converge,
    GaugeCheck,
    Spin,
    Exchange,
    Phimap,
    Hessian,
    Audit,
    Consistency,
}

impl Command {
    fn check(self) -> Option<CheckKind> {
        Some(match self {
            Self::Run => return None,
            Self::Propagate => CheckKind::Propagate,
            Self::Converge => CheckKind::Converge,
            Self::GaugeCheck => CheckKind::Gauge,
            Self::Spin => CheckKind::Spin,
            Self::Exchange => CheckKind::Exchange,
            Self::Phimap => CheckKind::Phimap,
            Self::Hessian => CheckKind::Hessian,
            Self::Audit => CheckKind::Audit,
            Self::Consistency => CheckKind::Consistency,
        })
    }
}

/// Errors that stem from the input rather than from a failed check.
fn is_config_error(e: &anyhow::Error) -> bool {
    match e.downcast_ref::<Error>() {
        Some(Error::Input(_) | Error::Dimension { .. } | Error::Sampling(_)) => true,
        Some(_) => false,
        None => true,
    }
}

enum Failure {
    Config(anyhow::Error),
    Check,
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let path = cli.config.as_deref().context("--config is required").map_err(Failure::Config)?;
    let exp = Experiment::load(path).map_err(Failure::Config)?;
    let checks = match cli.command.check() {
        Some(kind) => {
            exp.requirements(kind).map_err(Failure::Config)?;
            vec![kind]
        }
        None => exp.config.checks.clone(),
    };
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("building the worker pool")
            .map_err(Failure::Config)?;
    }
    let out = cli.out.clone().or_else(|| exp.config.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(Failure::Config)?;

    let runner = Runner::new(&exp, cli.rho_star, cli.force_sampling);
    let mut summary = RunSummary {
        config_hash: exp.hash.clone(),
        field_hash: exp.fields.hash(),
        seed: exp.config.seed,
        passed: true,
        checks: Vec::new(),
    };
    for kind in checks {
        info!("running {}", kind.name());
        let entry = match runner.run(kind) {
            Ok(outcome) => {
                let mut tables = Vec::new();
                for t in &outcome.tables {
                    let file = format!("{}.csv", t.name);
                    write_text(&out, &file, &t.render(kind.tag(), &exp.hash)).map_err(Failure::Config)?;
                    tables.push(file);
                }
                for (name, state) in &outcome.snapshots {
                    let file = format!("{name}.fslc");
                    state.save(out.join(&file)).map_err(|e| Failure::Config(e.into()))?;
                    tables.push(file);
                }
                CheckSummary {
                    check: kind.name().into(),
                    tag: kind.tag().into(),
                    passed: outcome.passed,
                    detail: outcome.detail,
                    metrics: outcome.metrics,
                    tables,
                }
            }
            Err(e) if is_config_error(&e) => return Err(Failure::Config(e)),
            Err(e) => CheckSummary {
                check: kind.name().into(),
                tag: kind.tag().into(),
                passed: false,
                detail: format!("{e:#}"),
                metrics: Default::default(),
                tables: Vec::new(),
            },
        };
        let status = if entry.passed { "PASS" } else { "FAIL" };
        println!("{status} {} [{}]: {}", entry.check, entry.tag, entry.detail);
        summary.passed &= entry.passed;
        summary.checks.push(entry);
    }
    write_json(&out, "summary.json", &summary).map_err(Failure::Config)?;
    if summary.passed {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
