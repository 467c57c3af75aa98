use std::path::PathBuf;

use ebm_recon::bayes::{estimate_with_streams, UncertaintyConfig};
use ebm_recon::forward::Split;
use ebm_recon::posterior::PosteriorModel;
use ebm_recon::rng::{rng_for, tag};
use ebm_recon::sampler::{SamplerConfig, Variant};

use super::{load_dataset, load_network};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{write_bytes, write_tensor, write_text, OutDir};

const KEYS: &[&str] = &[
    "data",
    "checkpoint",
    "out",
    "split",
    "limit",
    "n_samples",
    "epsilon",
    "n_steps",
    "variant",
    "seed",
    "lambda_tilde",
];

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Network checkpoint (net.dpn1).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory: mmse_NNNN / var_NNNN maps and summary.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// train | val | test [default: test]
    #[arg(long)]
    split: Option<String>,
    /// Only the first N images of the split [default: all]
    #[arg(long)]
    limit: Option<usize>,
    /// Independent chains per image [default: 100]
    #[arg(long)]
    n_samples: Option<usize>,
    /// Langevin noise scale [default: 1e-3]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Steps per chain [default: 500]
    #[arg(long)]
    n_steps: Option<usize>,
    /// standard | scaled [default: scaled]
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Regularization of the SENSE center of the chain starts [default: 1e-2]
    #[arg(long)]
    lambda_tilde: Option<f64>,
}

pub fn run(a: Args, file: &RunConfig, force: bool) -> Result<(), CliError> {
    file.check_keys(KEYS)?;
    let d = UncertaintyConfig::default();
    let variant: Variant = file
        .pick(a.variant.clone(), "variant", d.sampler.variant.name().to_string())?
        .parse()
        .map_err(CliError::config)?;
    let cfg = UncertaintyConfig {
        sampler: SamplerConfig {
            epsilon: file.pick(a.epsilon, "epsilon", d.sampler.epsilon)?,
            n_steps: file.pick(a.n_steps, "n_steps", d.sampler.n_steps)?,
            variant,
            seed: file.pick(a.seed, "seed", d.sampler.seed)?,
        },
        n_samples: file.pick(a.n_samples, "n_samples", d.n_samples)?,
        lambda_tilde: file.pick(a.lambda_tilde, "lambda_tilde", d.lambda_tilde)?,
    };
    cfg.validate().map_err(CliError::config)?;
    let split: Split = file
        .pick(a.split.clone(), "split", "test".to_string())?
        .parse()
        .map_err(CliError::config)?;
    let limit: Option<usize> = file.pick_opt(a.limit, "limit")?;
    let data_dir: PathBuf = file.require(a.data.clone(), "data")?;
    let ckpt: PathBuf = file.require(a.checkpoint.clone(), "checkpoint")?;
    let out = OutDir::check(file.require(a.out.clone(), "out")?, force)?;

    let ds = load_dataset(&data_dir)?;
    let net = load_network(&ckpt)?;
    let all = ds.split(split);
    let samples = &all[..limit.unwrap_or(all.len()).min(all.len())];

    out.create("")?;
    let seed = cfg.sampler.seed;
    let mut summary = String::from("id,nSamples,dropped,meanVariance\n");
    for (i, s) in samples.iter().enumerate() {
        let m = PosteriorModel::new(&ds.op, &net, &s.kspace)?;
        let r = estimate_with_streams(&m, &cfg, |c| rng_for(seed, &[tag::UNCERTAINTY, i as u64, c as u64]))?;
        let dir = out.path();
        write_tensor(&dir.join(format!("mmse_{i:04}.dpn1")), &r.mmse.to_tensor())?;
        write_tensor(&dir.join(format!("var_{i:04}.dpn1")), &r.variance.to_tensor())?;
        let mag = r.mmse.magnitude();
        write_bytes(&dir.join(format!("mmse_{i:04}.pgm")), &mag.to_pgm16(mag.max()))?;
        write_bytes(
            &dir.join(format!("var_{i:04}.pgm")),
            &r.variance.to_pgm16(r.variance.max()),
        )?;
        summary.push_str(&format!("{i},{},{},{}\n", r.n_samples, r.dropped, r.variance.mean()));
        eprintln!(
            "image {i}: {} chains, {} dropped, mean variance {:.3e}",
            r.n_samples,
            r.dropped,
            r.variance.mean()
        );
    }
    write_text(&out.path().join("summary.csv"), &summary)?;
    Ok(())
}
