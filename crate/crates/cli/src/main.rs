use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use homfield::solver::PrecondKind;
use homfield_cli::config;
use homfield_cli::run::{execute, Command, RunOptions, SolverOverrides};

#[derive(Parser)]
#[command(name = "homfield", version, about = "Angle-resolved two-photon correlations from volume-integral solves")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve both modes and write every requested output.
    Run(Common),
    /// Write only the correlation maps.
    Sweep(Common),
    /// Compare VIE and Mie g² maps for a single-sphere scene.
    OracleCheck(Common),
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Solve cache directory (default: OUT/cache).
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Relative residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// none, diagonal or block.
    #[arg(long)]
    precond: Option<PrecondKind>,
    /// Block counts per axis for the block preconditioner, as NX,NY,NZ.
    #[arg(long, value_parser = parse_blocks)]
    blocks: Option<[usize; 3]>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Fixed reduction order so repeated runs are bit-identical.
    #[arg(long)]
    deterministic: bool,
}

fn parse_blocks(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|p: Vec<usize>| format!("expected three block counts NX,NY,NZ, got {}", p.len()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Run(a) => (Command::Run, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::OracleCheck(a) => (Command::OracleCheck, a),
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let scenario = match config::load(&args.config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions {
        out: args.out,
        cache_dir: args.cache,
        solver: SolverOverrides {
            tol: args.tol,
            max_iter: args.max_iter,
            precond: args.precond,
            blocks: args.blocks,
            deterministic: args.deterministic,
        },
        config_path: Some(args.config),
    };
    match execute(cmd, &scenario, &opts) {
        Ok(summary) => {
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            if let Some(l2) = summary.oracle_l2 {
                println!("g2 relative L2 (vie vs mie): {l2:.6}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
