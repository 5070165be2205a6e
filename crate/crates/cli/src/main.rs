use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dpbench_cli::commands::{cmd_check, cmd_report, cmd_run, cmd_tune};
use dpbench_cli::config::BenchConfig;
use dpbench_cli::suites::{SuiteOptions, SUITES};
use dpbench_cli::CliError;

#[derive(Parser)]
#[command(name = "dpbench", version, about = "Benchmark differentially private range-query algorithms")]
struct Cli {
    /// Output directory; falls back to the config's `output`, then $DPBENCH_OUT.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark grid.
    Run {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// desk-1d, desk-2d, full-1d or full-2d.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Learn a parameter table from the config's [tune] section.
    Tune {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a property suite: budget, exchangeability or consistency.
    Check {
        suite: String,
        #[arg(long, default_value_t = 200)]
        trials: usize,
    },
    /// Turn a summary CSV into plot-ready CSVs.
    Report { summary: PathBuf },
}

fn output_dir(flag: Option<PathBuf>, cfg: Option<&BenchConfig>) -> PathBuf {
    flag.or_else(|| cfg.and_then(|c| c.output.clone()))
        .or_else(|| std::env::var_os("DPBENCH_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("dpbench-out"))
}

fn load(config: &Path, seed: Option<u64>) -> Result<BenchConfig, CliError> {
    let mut cfg = BenchConfig::from_path(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {n} workers: {e}")))?;
    }
    match cli.command {
        Command::Run { config, preset } => {
            let (mut cfg, base) = match (config, preset) {
                (Some(path), _) => {
                    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                    (load(&path, None)?, base)
                }
                (None, Some(name)) => (BenchConfig::preset(&name)?, PathBuf::new()),
                (None, None) => unreachable!("clap requires one of them"),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let out = output_dir(cli.out, Some(&cfg));
            let result = cmd_run(&cfg, &base, &out)?;
            println!(
                "wrote {} files to {} ({} summary rows, {} failed runs)",
                result.files.len(),
                out.display(),
                result.summary.len(),
                result.failures
            );
        }
        Command::Tune { config } => {
            let cfg = load(&config, cli.seed)?;
            let out = output_dir(cli.out, Some(&cfg));
            let path = cmd_tune(&cfg, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Check { suite, trials } => {
            if !SUITES.contains(&suite.as_str()) {
                return Err(CliError::Config(format!("unknown suite {suite:?}; choose one of {}", SUITES.join(", "))));
            }
            let opts = SuiteOptions {
                trials,
                seed: cli.seed.unwrap_or(2014),
            };
            let out = output_dir(cli.out, None);
            let (rows, path) = cmd_check(&suite, &opts, &out)?;
            let mut failed = Vec::new();
            for r in &rows {
                let verdict = if r.pass { "pass" } else { "fail" };
                println!(
                    "{:<10} {:<6} expected {:<6?} got {:<4} [{:.4e} {:.4e} {:.4e}]",
                    r.algorithm, r.domain, r.expected, verdict, r.stat_a, r.stat_b, r.stat_c
                );
                if !r.ok() {
                    failed.push(format!("{} on {}", r.algorithm, r.domain));
                }
            }
            println!("wrote {}", path.display());
            if !failed.is_empty() {
                return Err(CliError::Property(failed.join(", ")));
            }
        }
        Command::Report { summary } => {
            let out = output_dir(cli.out, None);
            for p in cmd_report(&summary, &out)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dpbench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
