#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod manifest;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{AnalyzeInput, PathInput, PlanInput};
use crate::config::{parse_run, Overrides};
use crate::error::{CliError, CliResult, EXIT_USAGE};

/// Iso-level tool-path planning on triangle meshes.
#[derive(Parser, Debug)]
#[command(name = "isolevel", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize a scalar field on a mesh.
    Plan(PlanArgs),
    /// Extract a tool path from a planned field.
    Path(PathArgs),
    /// Measure a field and its tool path.
    Analyze(AnalyzeArgs),
    /// Print mesh statistics as JSON.
    MeshInfo(MeshInfoArgs),
}

#[derive(Args, Debug)]
struct SolverFlags {
    /// Cutter curvature (1/radius).
    #[arg(long)]
    kappa_c: Option<f64>,
    /// Weight of the curvature term.
    #[arg(long)]
    lambda: Option<f64>,
    /// Scallop height.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    eps_g: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    max_inner: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    /// Fixed-order reductions and no timestamps.
    #[arg(long, value_name = "BOOL")]
    deterministic: Option<bool>,
}

#[derive(Args, Debug)]
struct PlanArgs {
    mesh: PathBuf,
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["direction", "contour"])]
    mode: Option<String>,
    /// Boundary loop seeded in direction mode.
    #[arg(long)]
    boundary_loop: Option<usize>,
    /// Seed only part of the loop.
    #[arg(long, value_name = "START:LEN", value_parser = parse_run)]
    seed_run: Option<[usize; 2]>,
    #[command(flatten)]
    solver: SolverFlags,
    /// Output root.
    #[arg(short, long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PathArgs {
    /// `field.json` written by `plan`.
    field: PathBuf,
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, value_parser = ["iso-scallop", "adaptive"])]
    schedule: Option<String>,
    #[arg(long)]
    chord_tol: Option<f64>,
    #[arg(long)]
    clearance: Option<f64>,
    #[arg(long)]
    feed: Option<f64>,
    /// Output root; defaults to the one holding the plan.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    field: PathBuf,
    /// `path.json` written by `path`.
    path: PathBuf,
    /// Also compare against the Laplacian baseline field.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    oracle_pairs: Option<usize>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MeshInfoArgs {
    mesh: PathBuf,
    #[arg(long, default_value_t = 1e-9)]
    weld_tolerance: f64,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Plan(a) => {
            let s = a.solver;
            let mut o = Overrides::default();
            o.string("mode", a.mode)
                .int("boundary_loop", a.boundary_loop)
                .run("seed_run", a.seed_run)
                .float("kappa_c", s.kappa_c)
                .float("lambda", s.lambda)
                .float("h", s.h)
                .float("eps_g", s.eps_g)
                .int("max_outer", s.max_outer)
                .int("max_inner", s.max_inner)
                .float("grad_tol", s.grad_tol)
                .boolean("deterministic_reduction", s.deterministic);
            let out = commands::plan(PlanInput {
                mesh: a.mesh,
                config: a.config,
                overrides: o,
                out: a.out,
            })?;
            println!("{}", out.display());
        }
        Command::Path(a) => {
            let mut o = Overrides::default();
            o.float("h", a.h)
                .string("schedule", a.schedule)
                .float("chord_tol", a.chord_tol)
                .float("clearance", a.clearance)
                .float("feed", a.feed);
            let out = commands::path(PathInput {
                field: a.field,
                config: a.config,
                overrides: o,
                out: a.out,
            })?;
            println!("{}", out.display());
        }
        Command::Analyze(a) => {
            let mut o = Overrides::default();
            o.int("oracle_pairs", a.oracle_pairs);
            let out = commands::analyze(AnalyzeInput {
                field: a.field,
                path: a.path,
                baseline: a.baseline,
                overrides: o,
                out: a.out,
            })?;
            println!("{}", out.display());
        }
        Command::MeshInfo(a) => {
            let info = commands::mesh_info(&a.mesh, a.weld_tolerance)?;
            println!("{}", serde_json::to_string_pretty(&info)?);
        }
    }
    Ok(())
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.line());
    ExitCode::from(e.exit as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let msg = first.trim_start_matches("error: ");
            return fail(&CliError::new("E_USAGE", EXIT_USAGE, msg));
        }
    };
    std::panic::set_hook(Box::new(|_| {}));
    match catch_unwind(AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => fail(&e),
        Err(panic) => {
            let what = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(&CliError::internal(what))
        }
    }
}
