mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context as _, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use commands::{Context, Outcome};
use config::{
    BsdeArgs, DiagramArgs, ErgodicArgs, ExtractArgs, IsometryArgs, Merge, NsArgs, Overrides, ProjectArgs,
    ReduceArgs, SimulateArgs, SEED_ENV,
};

const SCHEMA: &str = "chaoskit/1";

/// Chaos kernels, dyadic permutation groups and invariance checks for Lévy functionals.
#[derive(Parser)]
#[command(name = "chaoskit", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Lévy model JSON, replacing the model of the config file.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Overrides the environment variable and the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    level: Option<u32>,
    #[arg(long, global = true)]
    samples: Option<u64>,
    /// Directory for reports and path dumps.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Lifts the level and sample-count guards.
    #[arg(long, global = true)]
    force: bool,
    /// Writes simulated paths as CSV.
    #[arg(long, global = true)]
    dump_paths: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Draws grid paths and checks their first two moments.
    Simulate(SimulateArgs),
    /// Compares kernel pullbacks with permuted paths.
    VerifyDiagram(DiagramArgs),
    /// Monte Carlo check of the isometry of multiple integrals.
    Isometry(IsometryArgs),
    /// Estimates chaos kernels of a path functional.
    Extract(ExtractArgs),
    /// Orbit projection of a kernel onto the invariant kernels of a group.
    Project(ProjectArgs),
    /// Orbit projection followed by cuboid averaging on a partition.
    Reduce(ReduceArgs),
    /// Finite-resolution locally-ergodic check of a cell set.
    CheckErgodic(ErgodicArgs),
    /// Orthogonal-polynomial transform of a symmetric kernel.
    NsTransform(NsArgs),
    /// Picard iteration for an affine backward equation.
    Bsde(BsdeArgs),
    /// Runs the full acceptance battery.
    Suite,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::VerifyDiagram(_) => "verify-diagram",
            Command::Isometry(_) => "isometry",
            Command::Extract(_) => "extract",
            Command::Project(_) => "project",
            Command::Reduce(_) => "reduce",
            Command::CheckErgodic(_) => "check-ergodic",
            Command::NsTransform(_) => "ns-transform",
            Command::Bsde(_) => "bsde",
            Command::Suite => "suite",
        }
    }

    /// Fills unset flags from the matching config block.
    fn merged(self, c: &config::RunConfig) -> Command {
        match self {
            Command::Simulate(a) => Command::Simulate(a.merge(&c.simulate)),
            Command::VerifyDiagram(a) => Command::VerifyDiagram(a.merge(&c.verify_diagram)),
            Command::Isometry(a) => Command::Isometry(a.merge(&c.isometry)),
            Command::Extract(a) => Command::Extract(a.merge(&c.extract)),
            Command::Project(a) => Command::Project(a.merge(&c.project)),
            Command::Reduce(a) => Command::Reduce(a.merge(&c.reduce)),
            Command::CheckErgodic(a) => Command::CheckErgodic(a.merge(&c.check_ergodic)),
            Command::NsTransform(a) => Command::NsTransform(a.merge(&c.ns_transform)),
            Command::Bsde(a) => Command::Bsde(a.merge(&c.bsde)),
            Command::Suite => Command::Suite,
        }
    }
}

#[derive(Serialize)]
struct Report<'a> {
    schema: &'static str,
    command: &'static str,
    version: &'static str,
    config_hash: String,
    seed: u64,
    passed: bool,
    summary: &'a str,
    result: &'a serde_json::Value,
    elapsed_secs: f64,
}

fn dispatch(command: &Command, ctx: &Context) -> Result<Outcome> {
    match command {
        Command::Simulate(a) => commands::simulate(ctx, a),
        Command::VerifyDiagram(a) => commands::verify_diagram_cmd(ctx, a),
        Command::Isometry(a) => commands::isometry(ctx, a),
        Command::Extract(a) => commands::extract(ctx, a),
        Command::Project(a) => commands::project(ctx, a),
        Command::Reduce(a) => commands::reduce(ctx, a),
        Command::CheckErgodic(a) => commands::check_ergodic(ctx, a),
        Command::NsTransform(a) => commands::ns(ctx, a),
        Command::Bsde(a) => commands::bsde(ctx, a),
        Command::Suite => commands::suite(ctx),
    }
}

fn run(cli: Cli) -> Result<bool> {
    let overrides = Overrides {
        model: cli.model.clone(),
        seed: cli.seed,
        level: cli.level,
        samples: cli.samples,
        force: cli.force,
    };
    let config = config::resolve(cli.config.as_deref(), &overrides, std::env::var(SEED_ENV).ok())?;
    let command = cli.command.merged(&config);
    let resolved = serde_json::json!({ "config": config, "command": command });
    let config_hash = hex::encode(Sha256::digest(serde_json::to_string(&resolved)?.as_bytes()));

    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let seed = config.seed;
    let ctx = Context {
        config,
        out: cli.out.clone(),
        dump_paths: cli.dump_paths,
    };
    let start = Instant::now();
    let outcome = dispatch(&command, &ctx)?;
    let report = Report {
        schema: SCHEMA,
        command: command.name(),
        version: env!("CARGO_PKG_VERSION"),
        config_hash,
        seed,
        passed: outcome.passed,
        summary: &outcome.summary,
        result: &outcome.result,
        elapsed_secs: start.elapsed().as_secs_f64(),
    };
    let file = cli.out.join(format!("{}.json", command.name()));
    std::fs::write(&file, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", file.display()))?;
    println!(
        "{}: {} ({})",
        command.name(),
        if outcome.passed { "pass" } else { "FAIL" },
        outcome.summary
    );
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
