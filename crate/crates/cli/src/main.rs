use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pnp_cli::commands;
use pnp_cli::config::{ExperimentConfig, IoConfig, ADAPTER_ENV};
use pnp_core::apps::{Task, TaskConfig};
use pnp_core::metrics::format_psnr;

#[derive(Parser)]
#[command(
    name = "pnp",
    version,
    about = "Preconditioned plug-and-play ADMM image restoration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize an observation (and mask) from io.truth.
    Degrade {
        #[arg(short, long)]
        config: PathBuf,
        /// Overrides task.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Restore io.observation into io.output_dir.
    Restore {
        #[arg(short, long)]
        config: PathBuf,
        /// External adapter command line; overrides the config and PNP_ADAPTER.
        #[arg(long)]
        adapter: Option<String>,
    },
    /// Print PSNR (dB) and MSE of TEST against REFERENCE as CSV.
    Eval { reference: PathBuf, test: PathBuf },
    /// Convert a trace CSV into a gnuplot-ready data file.
    TracePlot {
        trace: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Degrade and restore many ground-truth images in parallel.
    Batch {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        adapter: Option<String>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Print a configuration file with the defaults for a task.
    Template {
        #[arg(value_enum)]
        task: TaskKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskKind {
    Completion,
    Interpolation,
    Demosaic,
    Poisson,
}

fn template(kind: TaskKind) -> ExperimentConfig {
    let problem = match kind {
        TaskKind::Completion => Task::Completion { rate: 0.2 },
        TaskKind::Interpolation => Task::Interpolation { factor: 2 },
        TaskKind::Demosaic => Task::Demosaic {
            cfa: Default::default(),
            sigma_noise: 0.0,
        },
        TaskKind::Poisson => Task::Poisson {
            peak: 255.0 / 8.0,
            anscombe_init: None,
        },
    };
    let raw_obs = matches!(kind, TaskKind::Poisson);
    let mut config = ExperimentConfig::new(TaskConfig::new(problem));
    config.io = IoConfig {
        truth: Some("truth.png".into()),
        observation: Some(
            if raw_obs {
                "observation.pnpf"
            } else {
                "observation.png"
            }
            .into(),
        ),
        mask: (!raw_obs).then(|| "mask.png".into()),
        reference: None,
        output_dir: Some("out".into()),
    };
    config
}

fn adapter_env() -> Option<String> {
    std::env::var(ADAPTER_ENV).ok()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Degrade { config, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.task.seed = seed;
            }
            let s = commands::degrade(&cfg)?;
            match s.known {
                Some(k) => println!("seed={} known={k}/{}", s.seed, s.entries),
                None => println!("seed={}", s.seed),
            }
        }
        Command::Restore { config, adapter } => {
            let cfg = ExperimentConfig::load(&config)?;
            let env = adapter_env();
            let r = commands::restore(&cfg, adapter.as_deref(), env.as_deref())?;
            println!("iterations={}", r.trace.len());
            if let (Some(init), Some(out)) = (r.init_psnr, r.psnr) {
                println!("init_psnr_db={}", format_psnr(init));
                println!("psnr_db={}", format_psnr(out));
            }
        }
        Command::Eval { reference, test } => {
            print!("{}", commands::eval(&reference, &test)?.csv());
        }
        Command::TracePlot { trace, output } => {
            let rows = commands::read_trace(&trace)?;
            match output {
                Some(path) => {
                    let file = fs::File::create(&path)
                        .with_context(|| format!("creating {}", path.display()))?;
                    commands::trace_plot(&rows, io::BufWriter::new(file))?;
                }
                None => commands::trace_plot(&rows, io::stdout().lock())?,
            }
        }
        Command::Batch {
            config,
            out_dir,
            adapter,
            jobs,
            inputs,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let env = adapter_env();
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.unwrap_or(0))
                .build()?;
            let records = pool.install(|| {
                commands::batch(&cfg, &inputs, &out_dir, adapter.as_deref(), env.as_deref())
            })?;
            let mut out = io::stdout().lock();
            for r in records {
                writeln!(
                    out,
                    "{} {} -> {} dB",
                    r.input,
                    format_psnr(r.init_psnr),
                    format_psnr(r.psnr)
                )?;
            }
        }
        Command::Template { task } => print!("{}", template(task).to_toml()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
