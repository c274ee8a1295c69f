use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;
use log::info;

use lattice_relax::rng;
use lattice_relax::shapes::{corrupt, generate_dataset, save_dataset, NoiseSpec};

/// Writes a synthetic polygon segmentation dataset.
#[derive(Parser)]
#[command(name = "shapes-gen", version)]
struct Args {
    /// Number of instances.
    #[arg(long)]
    n: usize,
    /// Canvas size as HxW.
    #[arg(long, default_value = "64x64")]
    size: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gaussian noise standard deviation added to the images.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (h, w) = s.split_once(['x', 'X']).with_context(|| format!("size {s:?} is not HxW"))?;
    Ok((h.trim().parse()?, w.trim().parse()?))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let (h, w) = parse_size(&args.size)?;
    if args.n == 0 {
        bail!("--n must be positive");
    }
    let mut instances = generate_dataset(args.n, h, w, args.seed)?;
    if args.noise > 0.0 {
        for (i, inst) in instances.iter_mut().enumerate() {
            let mut r = rng::stream(args.seed, &[u64::MAX, i as u64]);
            inst.image = corrupt(&inst.image, NoiseSpec { epsilon: args.noise }, &mut r)?;
        }
    }
    save_dataset(&instances, &args.out)?;
    info!("wrote {} instances to {}", instances.len(), args.out.display());
    Ok(())
}
