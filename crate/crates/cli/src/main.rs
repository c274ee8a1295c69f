use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use lattice_relax::experiment::{
    emit_plots, load_rows, run_noise_sweep, run_sample_sweep, save_rows, significance_report, write_report, Dimension,
    ExperimentConfig, PlotParams,
};

#[derive(Parser)]
#[command(name = "lattice-relax", version, about = "Recurrent refinement sweeps on synthetic shape segmentation")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report hits-over-misses precision and recall.
    #[arg(long, global = true)]
    paper_literal_metrics: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Noise,
    Samples,
}

#[derive(Subcommand)]
enum Command {
    /// Runs a sweep and writes results.csv.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
        /// TOML config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Welch-test model comparison per cell.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Comma-separated dimensions to average: noise, samples, iteration, class.
        #[arg(long, default_value = "")]
        avg: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grouped bar chart of mean IoU plus a legend.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Config supplying model colors.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring thread pool")?;
    }

    match cli.command {
        Command::Sweep { kind, config, out } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            cfg.literal_metrics |= cli.paper_literal_metrics;
            cfg.validate()?;
            fs::create_dir_all(&out)?;
            let rows = match kind {
                SweepKind::Noise => run_noise_sweep(&cfg)?,
                SweepKind::Samples => run_sample_sweep(&cfg)?,
            };
            let path = out.join("results.csv");
            save_rows(&rows, &path)?;
            fs::write(out.join("config.toml"), cfg.to_toml()?)?;
            info!("wrote {} rows to {}", rows.len(), path.display());
        }
        Command::Report { input, avg, out } => {
            let rows = load_rows(&input).with_context(|| format!("reading {}", input.display()))?;
            let dims = Dimension::parse_list(&avg)?;
            let cells = significance_report(&rows, &dims)?;
            let mut f = fs::File::create(&out)?;
            write_report(&cells, &mut f)?;
            info!("wrote {} report cells to {}", cells.len(), out.display());
        }
        Command::Plot { input, out, config } => {
            let rows = load_rows(&input).with_context(|| format!("reading {}", input.display()))?;
            let params = match config {
                Some(p) => load_config(Some(&p))?.plot,
                None => PlotParams::default(),
            };
            for path in emit_plots(&rows, &out, &params)? {
                info!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}
