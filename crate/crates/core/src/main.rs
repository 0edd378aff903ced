use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reflexive::cli::{self, BackendConfig, CliError, RunConfig};
use reflexive::kernel::AblationMask;
use reflexive::tasks::Split;

#[derive(Parser)]
#[command(name = "reflexive", version, about = "Self-improving agent runtime")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in task name (game24) or a JSONL dataset path.
    #[arg(long)]
    task: Option<String>,
    /// `live` or `scripted:PATH`.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    cycles: Option<usize>,
    /// Comma-separated capabilities to disable.
    #[arg(long)]
    mask: Option<String>,
    #[arg(long)]
    constrained: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    plot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run independent self-improvement runs.
    Evolve(Common),
    /// Score one policy on a split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "cot")]
        policy: String,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Print a trace step by step.
    Replay { trace: PathBuf },
    /// Run one batch per mask. Masks are separated by `;`, `full` means none.
    Ablate(Common),
    /// Summarize saved results.json files.
    Report {
        results: Vec<PathBuf>,
        /// Write an SVG of the progression curves here.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

fn config(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(task) = &c.task {
        cfg.task = match task.as_str() {
            "game24" => reflexive::cli::TaskConfig::default(),
            path => {
                let (scorer, val_n, test_n, repeats) = match &cfg.task {
                    reflexive::cli::TaskConfig::Dataset {
                        scorer,
                        val_n,
                        test_n,
                        repeats,
                        ..
                    } => (*scorer, *val_n, *test_n, *repeats),
                    _ => {
                        return Err(CliError::Config(
                            "--task with a dataset path needs a dataset config".into(),
                        ))
                    }
                };
                reflexive::cli::TaskConfig::Dataset {
                    path: path.into(),
                    scorer,
                    val_n,
                    test_n,
                    repeats,
                }
            }
        };
    }
    if let Some(backend) = &c.backend {
        cfg.backend = match backend.split_once(':') {
            Some(("scripted", path)) => BackendConfig::Scripted {
                script: path.into(),
            },
            None if backend == "live" => match cfg.backend {
                live @ BackendConfig::Live { .. } => live,
                _ => BackendConfig::default(),
            },
            _ => return Err(CliError::Config(format!("unknown backend {backend:?}"))),
        };
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(runs) = c.runs {
        cfg.budget.runs = runs;
    }
    if let Some(cycles) = c.cycles {
        cfg.budget.max_cycles = cycles;
    }
    if let Some(mask) = &c.mask {
        cfg.ablation = mask.parse().map_err(CliError::Config)?;
    }
    cfg.constrained |= c.constrained;
    cfg.plot |= c.plot;
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    if let Some(workers) = c.workers {
        cfg.workers = workers;
    }
    Ok(cfg)
}

fn masks(spec: Option<&str>) -> Result<Vec<AblationMask>, CliError> {
    match spec {
        None => Ok(AblationMask::canonical()),
        Some(s) => s
            .split(';')
            .map(|m| match m.trim() {
                "full" | "" => Ok(AblationMask::none()),
                m => m.parse().map_err(CliError::Config),
            })
            .collect(),
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Evolve(c) => {
            let outcome = cli::cmd_evolve(&config(&c)?)?;
            print!("{}", outcome.report.render_text());
            Ok(outcome.exit_code)
        }
        Command::Eval {
            common,
            policy,
            split,
        } => {
            let outcome = cli::cmd_eval(&config(&common)?, &policy, split)?;
            print!("{}", outcome.render());
            Ok(0)
        }
        Command::Replay { trace } => {
            print!("{}", cli::cmd_replay(&trace)?);
            Ok(0)
        }
        Command::Ablate(mut c) => {
            let masks = masks(c.mask.take().as_deref())?;
            print!("{}", cli::cmd_ablate(&config(&c)?, &masks)?.render());
            Ok(0)
        }
        Command::Report { results, plot } => {
            print!("{}", cli::cmd_report(&results, plot.as_deref())?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
