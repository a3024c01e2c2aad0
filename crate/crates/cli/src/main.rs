use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fawp::channels::write_channels;
use fawp::harness::{
    emit, format_csv, format_oracle, run_experiment, run_oracle, run_tune, ExperimentConfig,
};
use fawp::{exec, Execution, FawpError};

/// Seeded Monte-Carlo experiments for finite-alphabet WF precoding.
#[derive(Debug, Parser)]
#[command(name = "fawp", version)]
struct Cli {
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap the number of worker threads (1 runs sequentially).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write its result rows.
    Run {
        config: PathBuf,
        /// Output path (overrides `output` in the config; `-` for stdout).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Grid-search FBS schedules per the config's [tune] section.
    Tune {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare FBS and FAWP-WF with brute force per the [oracle] section.
    Oracle { config: PathBuf },
    /// Write the experiment's channel realizations to a text file.
    ChannelExport {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn load(path: &Path, seed: Option<u64>) -> fawp::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> fawp::Result<()> {
    let execution = match cli.threads {
        Some(1) => Execution::Sequential,
        _ => Execution::Parallel,
    };
    let threads = cli.threads;
    match cli.command {
        Command::Run { config, output } => {
            let cfg = load(&config, cli.seed)?;
            let rows = exec::with_threads(threads, || run_experiment(&cfg, execution))??;
            let out = output.or_else(|| cfg.output.as_ref().map(|p| cfg.resolve(p)));
            match out {
                Some(p) if p.as_os_str() != "-" => {
                    emit(&rows, &p)?;
                    eprintln!("wrote {} rows to {}", rows.len(), p.display());
                }
                _ => print!("{}", format_csv(&rows)),
            }
        }
        Command::Tune { config, output } => {
            let cfg = load(&config, cli.seed)?;
            let (r, path) = exec::with_threads(threads, || run_tune(&cfg, execution))??;
            let path = output.unwrap_or(path);
            if let Some(dir) = path.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir)?;
                }
            }
            r.params.save(&path)?;
            eprintln!(
                "best of {} candidates: mean MSE {:.6}; wrote {}",
                r.evaluated,
                r.score,
                path.display()
            );
        }
        Command::Oracle { config } => {
            let cfg = load(&config, cli.seed)?;
            let rows = exec::with_threads(threads, || run_oracle(&cfg, execution))??;
            print!("{}", format_oracle(&rows));
            let near = rows.iter().filter(|r| r.fbs_ratio() <= 1.05).count();
            eprintln!("FBS within 5% of optimum on {near}/{} instances", rows.len());
        }
        Command::ChannelExport { config, output } => {
            let cfg = load(&config, cli.seed)?;
            if cfg.channel_file.is_some() {
                return Err(FawpError::Config(
                    "config already reads channels from a file".into(),
                ));
            }
            let source = cfg.channel_source()?;
            let recs = (0..cfg.num_channels)
                .map(|i| source.record(i))
                .collect::<fawp::Result<Vec<_>>>()?;
            write_channels(&output, &recs)?;
            eprintln!("wrote {} channels to {}", recs.len(), output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
