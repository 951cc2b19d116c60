//! Argument parsing and dispatch for the `aloq` binary.

use std::path::{Path, PathBuf};

use aloq::acquisition::DirectConfig;
use aloq::aloq_loop::{ChainSizes, Variant};
use aloq::harness::{aggregate, run_experiment, runtime_report, ExperimentSpec};
use aloq::AloqError;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const OUT_DIR_ENV: &str = "ALOQ_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "aloq", version, about = "Robust policy search with significant rare events")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a task under one or more variants and seeds.
    Run(RunArgs),
    /// Median and quartiles of the oracle value across seeds.
    Aggregate(DirArgs),
    /// Median per-step wall time for each variant.
    Runtime(DirArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ChainProfile {
    Standard,
    Reduced,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// fsre1, fsre2, arm-collision, arm-breakage or arm-torque.
    #[arg(long)]
    pub task: String,
    /// Comma-separated variants: aloq, rq-aloq, unwarped, one-step, naive.
    #[arg(long, default_value = "aloq", value_delimiter = ',')]
    pub variant: Vec<String>,
    /// Seed list such as `0,3,7` or a half-open range such as `0..10`.
    #[arg(long, default_value = "0")]
    pub seeds: String,
    /// Total simulator calls per run.
    #[arg(long)]
    pub budget: usize,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, env = OUT_DIR_ENV, default_value = "results")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Initial design size; defaults to 4 * (d_pi + d_theta).
    #[arg(long)]
    pub init_size: Option<usize>,
    /// Monte Carlo nodes for continuous environments.
    #[arg(long)]
    pub mc_count: Option<usize>,
    #[arg(long, value_enum, default_value = "standard")]
    pub chain: ChainProfile,
    /// Objective evaluations per DIRECT search.
    #[arg(long, default_value_t = 500)]
    pub direct_budget: usize,
    /// Leave wall times out so reruns produce identical files.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct DirArgs {
    #[arg(long, env = OUT_DIR_ENV, default_value = "results")]
    pub out: PathBuf,
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>, AloqError> {
    let bad = || AloqError::Config(format!("cannot read seeds from `{s}`"));
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        (a..b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

/// 2 for configuration problems, 3 for numerical failures.
pub fn exit_code(err: &AloqError) -> u8 {
    match err {
        e if e.is_numerical() => 3,
        AloqError::Config(_) | AloqError::Unknown { .. } | AloqError::Domain(_) | AloqError::Io(_) => 2,
        _ => 1,
    }
}

pub fn spec_from_args(a: &RunArgs) -> Result<ExperimentSpec, AloqError> {
    let variants = a.variant.iter().map(|v| v.parse()).collect::<Result<Vec<Variant>, _>>()?;
    let chain = match a.chain {
        ChainProfile::Standard => ChainSizes::STANDARD,
        ChainProfile::Reduced => ChainSizes::REDUCED,
    };
    if a.direct_budget == 0 {
        return Err(AloqError::Config("--direct-budget must be at least 1".into()));
    }
    Ok(ExperimentSpec {
        kappa: a.kappa,
        init_size: a.init_size,
        mc_count: a.mc_count,
        chain,
        direct: DirectConfig { budget: a.direct_budget, ..DirectConfig::default() },
        jobs: a.jobs,
        timing: !a.no_timing,
        ..ExperimentSpec::new(&a.task, variants, parse_seeds(&a.seeds)?, a.budget, &a.out)
    })
}

fn check_dir(dir: &Path) -> Result<(), AloqError> {
    if !dir.is_dir() {
        return Err(AloqError::Config(format!("result directory {} does not exist", dir.display())));
    }
    Ok(())
}

/// Executes a parsed command, returning what should go to stdout.
pub fn execute(cli: &Cli) -> Result<String, AloqError> {
    match &cli.command {
        Command::Run(a) => {
            let spec = spec_from_args(a)?;
            let paths = run_experiment(&spec)?;
            Ok(paths.iter().map(|p| format!("{}\n", p.display())).collect())
        }
        Command::Aggregate(d) => {
            check_dir(&d.out)?;
            let summary = aggregate(&d.out)?;
            summary.write_curves(&d.out.join("summary_curves.csv"))?;
            let mut out = String::new();
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            for m in &summary.missing {
                eprintln!("missing: {m}");
            }
            out.push_str("task & variant & Q1 & Q2 & Q3\n");
            out.push_str(&summary.quartile_table());
            Ok(out)
        }
        Command::Runtime(d) => {
            check_dir(&d.out)?;
            let mut out = String::from("task,variant,call,median_wall_ms\n");
            let mut trends = String::new();
            for s in runtime_report(&d.out)? {
                for (call, ms) in &s.points {
                    out.push_str(&format!("{},{},{call},{ms:.3}\n", s.task, s.variant));
                }
                trends.push_str(&format!(
                    "# {} {} rank correlation with call index: {:.3}\n",
                    s.task,
                    s.variant,
                    s.trend()
                ));
            }
            std::fs::write(d.out.join("runtime.csv"), &out)?;
            Ok(out + &trends)
        }
    }
}
