use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use naim_cli::output::{write_error, write_report};
use naim_cli::{CliError, Command, RunConfig, Runner};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    SlowManifold,
    Fibers,
    Lyapunov,
    BundleIso,
    Linearize,
    NormalForm,
    Pendulum,
    CheckRates,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::SlowManifold => Command::SlowManifold,
            Sub::Fibers => Command::Fibers,
            Sub::Lyapunov => Command::Lyapunov,
            Sub::BundleIso => Command::BundleIso,
            Sub::Linearize => Command::Linearize,
            Sub::NormalForm => Command::NormalForm,
            Sub::Pendulum => Command::Pendulum,
            Sub::CheckRates => Command::CheckRates,
        }
    }
}

/// Slow manifolds, stable fibers, Lyapunov bundles and global linearization.
#[derive(Debug, Parser)]
#[command(name = "naim", version)]
struct Args {
    /// Subcommand to run.
    #[arg(value_enum)]
    command: Sub,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`; default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for batch work.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for all sampling (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Progress on stderr.
    #[arg(long)]
    verbose: bool,
}

fn load(args: &Args) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn fail(out: &Path, command: Command, hash: Option<String>, err: CliError) -> ExitCode {
    if let Err(e) = write_error(out, command.name(), hash.as_deref(), &err) {
        eprintln!("naim: cannot write the error record: {e}");
    }
    eprintln!("naim {command}: {err}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = Command::from(args.command);
    let cfg = match load(&args) {
        Ok(cfg) => cfg,
        Err(e) => return fail(args.out.as_deref().unwrap_or(Path::new("out")), command, None, e),
    };
    let out = args.out.clone().or_else(|| cfg.output.dir.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&out, command, Some(cfg.hash()), CliError::Config(format!("cannot use {n} threads: {e}")));
        }
    }
    let result = Runner::new(&cfg, args.verbose).run(command).and_then(|r| write_report(&out, &r, &cfg));
    match result {
        Ok(()) => {
            // a record from an earlier failed run would contradict these artifacts
            let _ = std::fs::remove_file(out.join("error.json"));
            if args.verbose {
                eprintln!("[naim] {command}: artifacts in {}", out.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&out, command, Some(cfg.hash()), e),
    }
}
