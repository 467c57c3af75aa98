use std::path::PathBuf;

use ebm_recon::energy::{InitConfig, NetConfig};
use ebm_recon::trainer::{train_observed, AdamConfig, TrainConfig, TrainState};

use super::load_dataset;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{write_text, OutDir};

const KEYS: &[&str] = &[
    "data",
    "out",
    "resume",
    "epochs",
    "batch_size",
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "epsilon",
    "mcmc_steps",
    "lambda_tilde",
    "smoothing_std",
    "init_gain",
    "head_bias_init",
    "seed",
    "checkpoint_every",
    "layers",
    "width",
    "slope",
];

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Dataset directory written by gen-data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory: net.dpn1, state.dpn1, train_log.csv, epochs.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training state (state.dpn1) to continue from; `epochs` is the total.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Total epochs [default: 20]
    #[arg(long)]
    epochs: Option<usize>,
    /// [default: 8]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate [default: 1e-4]
    #[arg(long)]
    lr: Option<f64>,
    /// [default: 0.9]
    #[arg(long)]
    beta1: Option<f64>,
    /// [default: 0.999]
    #[arg(long)]
    beta2: Option<f64>,
    /// Adam denominator guard [default: 1e-8]
    #[arg(long)]
    adam_eps: Option<f64>,
    /// Langevin noise scale of the fake chains [default: 1e-3]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Langevin steps per fake sample [default: 30]
    #[arg(long)]
    mcmc_steps: Option<usize>,
    /// Regularization of the SENSE chain start [default: 1e-2]
    #[arg(long)]
    lambda_tilde: Option<f64>,
    /// Noise std added to true samples [default: 2·epsilon]
    #[arg(long)]
    smoothing_std: Option<f64>,
    /// Multiplier on the He std of the initial kernels [default: 1]
    #[arg(long)]
    init_gain: Option<f64>,
    /// Initial head bias [default: 0]
    #[arg(long)]
    head_bias_init: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep a training state every N epochs under checkpoints/ (0: never) [default: 0]
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Convolution layers [default: 5, or the resumed network's]
    #[arg(long)]
    layers: Option<usize>,
    /// Channels per convolution [default: 64, or the resumed network's]
    #[arg(long)]
    width: Option<usize>,
    /// Leaky ReLU negative slope [default: 0.01]
    #[arg(long)]
    slope: Option<f64>,
}

fn config(a: &Args, file: &RunConfig, base: &NetConfig) -> Result<TrainConfig, CliError> {
    let d = TrainConfig::default();
    let layers = file.pick(a.layers, "layers", base.channels.len())?;
    let width = file.pick(a.width, "width", base.channels[0])?;
    let epsilon = file.pick(a.epsilon, "epsilon", d.epsilon)?;
    let cfg = TrainConfig {
        net: NetConfig {
            channels: vec![width; layers],
            slope: file.pick(a.slope, "slope", base.slope)?,
        },
        init: InitConfig {
            kernel_gain: file.pick(a.init_gain, "init_gain", d.init.kernel_gain)?,
            head_bias: file.pick(a.head_bias_init, "head_bias_init", d.init.head_bias)?,
        },
        epochs: file.pick(a.epochs, "epochs", d.epochs)?,
        batch_size: file.pick(a.batch_size, "batch_size", d.batch_size)?,
        adam: AdamConfig {
            lr: file.pick(a.lr, "lr", d.adam.lr)?,
            beta1: file.pick(a.beta1, "beta1", d.adam.beta1)?,
            beta2: file.pick(a.beta2, "beta2", d.adam.beta2)?,
            eps: file.pick(a.adam_eps, "adam_eps", d.adam.eps)?,
        },
        epsilon,
        mcmc_steps: file.pick(a.mcmc_steps, "mcmc_steps", d.mcmc_steps)?,
        lambda_tilde: file.pick(a.lambda_tilde, "lambda_tilde", d.lambda_tilde)?,
        smoothing_std: file.pick(a.smoothing_std, "smoothing_std", 2.0 * epsilon)?,
        seed: file.pick(a.seed, "seed", d.seed)?,
        checkpoint_every: file.pick(a.checkpoint_every, "checkpoint_every", d.checkpoint_every)?,
    };
    cfg.validate().map_err(CliError::config)?;
    Ok(cfg)
}

pub fn run(a: Args, file: &RunConfig, force: bool) -> Result<(), CliError> {
    file.check_keys(KEYS)?;
    // Settings are checked against defaults first so that a bad flag fails
    // before any file is read.
    config(&a, file, &NetConfig::default())?;
    let data_dir: PathBuf = file.require(a.data.clone(), "data")?;
    let out = OutDir::check(file.require(a.out.clone(), "out")?, force)?;
    let resume_path: Option<PathBuf> = file.pick_opt(a.resume.clone(), "resume")?;

    let resume = match &resume_path {
        Some(p) if !p.is_file() => return Err(CliError::Data(format!("training state {} not found", p.display()))),
        Some(p) => Some(TrainState::load(p)?),
        None => None,
    };
    let base = resume
        .as_ref()
        .map_or_else(NetConfig::default, |s| s.net.config().clone());
    let cfg = config(&a, file, &base)?;
    if let Some(s) = &resume {
        if s.epochs_done > cfg.epochs {
            return Err(CliError::Config(format!(
                "resumed state has {} epochs, more than the requested total {}",
                s.epochs_done, cfg.epochs
            )));
        }
    }
    let ds = load_dataset(&data_dir)?;

    out.create("")?;
    let ckpt_dir = if cfg.checkpoint_every > 0 {
        Some(out.create("checkpoints")?)
    } else {
        None
    };
    let state = train_observed(&ds, &cfg, resume, ckpt_dir.as_deref(), |st| {
        if let Some(e) = st.log.epochs().last() {
            eprintln!(
                "epoch {}/{}  loss {:.6}  E+ {:.6}  E- {:.6}  gap {:.6}  |grad| {:.4}  {:.1}s",
                e.epoch,
                cfg.epochs,
                e.loss,
                e.mean_energy_true,
                e.mean_energy_fake,
                e.energy_gap(),
                e.grad_norm,
                e.wall_ms / 1e3
            );
        }
    })?;
    state.net.save(&out.path().join("net.dpn1"))?;
    state.save(&out.path().join("state.dpn1"))?;
    write_text(&out.path().join("train_log.csv"), &state.log.steps_csv())?;
    write_text(&out.path().join("epochs.csv"), &state.log.epochs_csv())?;
    Ok(())
}
