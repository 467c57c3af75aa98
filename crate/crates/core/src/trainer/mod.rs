//! Contrastive maximum-likelihood training of the energy network.
//!
//! Each step lowers the energy of (slightly smoothed) training images and
//! raises the energy of fake samples drawn from the current posterior. Fake
//! chains start at the regularized least-squares reconstruction and run a
//! fixed number of scaled Langevin steps; only their end points enter the
//! loss, so nothing along the chain is kept for differentiation.

mod adam;
mod state;

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use state::{EpochSummary, StepRecord, TrainLog, TrainState};

use crate::energy::{EnergyNetwork, InitConfig, NetConfig, Params};
use crate::error::{Error, Result};
use crate::forward::{Dataset, ForwardOperator, Measurements};
use crate::numerics::ComplexImage;
use crate::posterior::PosteriorModel;
use crate::rng::{rng_for, tag};
use crate::sampler::{sample_posterior_with, SamplerConfig, Variant};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub net: NetConfig,
    /// Used only when training starts from scratch.
    pub init: InitConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Langevin step scale for fake samples.
    pub epsilon: f64,
    pub mcmc_steps: usize,
    /// Regularization of the least-squares chain start.
    pub lambda_tilde: f64,
    /// Per-component std of the noise added to true samples.
    pub smoothing_std: f64,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0: never).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let epsilon = 1e-3;
        TrainConfig {
            net: NetConfig::default(),
            init: InitConfig::default(),
            epochs: 20,
            batch_size: 8,
            adam: AdamConfig::default(),
            epsilon,
            mcmc_steps: 30,
            lambda_tilde: 1e-2,
            smoothing_std: 2.0 * epsilon,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.init.validate()?;
        self.adam.validate()?;
        self.sampler().validate()?;
        if self.mcmc_steps == 0 {
            return Err(Error::invalid("mcmc_steps must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.lambda_tilde > 0.0) || !self.lambda_tilde.is_finite() {
            return Err(Error::invalid(format!(
                "lambda_tilde must be positive, got {}",
                self.lambda_tilde
            )));
        }
        if !(self.smoothing_std >= 0.0) || !self.smoothing_std.is_finite() {
            return Err(Error::invalid(format!(
                "smoothing_std must be nonnegative, got {}",
                self.smoothing_std
            )));
        }
        Ok(())
    }

    /// Sampler settings of the fake chains. The seed is unused: every chain
    /// gets its own stream.
    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            epsilon: self.epsilon,
            n_steps: self.mcmc_steps,
            variant: Variant::Scaled,
            seed: self.seed,
        }
    }
}

/// Loss value, batch mean energies and the parameter gradient of the loss.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub loss: f64,
    pub mean_energy_true: f64,
    pub mean_energy_fake: f64,
    pub grad: Params,
}

fn check_batches(true_batch: &[ComplexImage], fake_batch: &[ComplexImage]) -> Result<()> {
    if true_batch.is_empty() || fake_batch.is_empty() {
        return Err(Error::invalid("contrastive loss needs nonempty true and fake batches"));
    }
    Ok(())
}

/// `mean E(x⁺) − mean E(x⁻)`
pub fn contrastive_loss(net: &EnergyNetwork, true_batch: &[ComplexImage], fake_batch: &[ComplexImage]) -> Result<f64> {
    check_batches(true_batch, fake_batch)?;
    let mean = |batch: &[ComplexImage]| -> Result<f64> {
        let mut s = 0.0;
        for x in batch {
            s += net.energy(x)?;
        }
        Ok(s / batch.len() as f64)
    };
    Ok(mean(true_batch)? - mean(fake_batch)?)
}

pub fn loss_and_grad(
    net: &EnergyNetwork,
    true_batch: &[ComplexImage],
    fake_batch: &[ComplexImage],
) -> Result<LossEval> {
    check_batches(true_batch, fake_batch)?;
    let mut grad = net.params().zeros_like();
    let wt = 1.0 / true_batch.len() as f64;
    let wf = 1.0 / fake_batch.len() as f64;
    let mut et = 0.0;
    for x in true_batch {
        et += net.accumulate_grad_theta(x, wt, &mut grad)?;
    }
    let mut ef = 0.0;
    for x in fake_batch {
        ef += net.accumulate_grad_theta(x, -wf, &mut grad)?;
    }
    let (mean_energy_true, mean_energy_fake) = (et * wt, ef * wf);
    Ok(LossEval {
        loss: mean_energy_true - mean_energy_fake,
        mean_energy_true,
        mean_energy_fake,
        grad,
    })
}

/// `mean ∇_θE(x⁺) − mean ∇_θE(x⁻)`, the exact gradient of [`contrastive_loss`].
pub fn loss_grad_theta(
    net: &EnergyNetwork,
    true_batch: &[ComplexImage],
    fake_batch: &[ComplexImage],
) -> Result<Params> {
    Ok(loss_and_grad(net, true_batch, fake_batch)?.grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedSample {
    /// Position in the batch.
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct FakeBatch {
    pub samples: Vec<ComplexImage>,
    pub dropped: Vec<DroppedSample>,
}

/// Fake samples for `batch`: each chain starts at the regularized
/// least-squares solution and runs `cfg.mcmc_steps` scaled Langevin steps.
/// Chain `i` draws noise from the stream `(cfg.seed, stream…, i)`.
/// `mcmc_steps = 0` returns the chain starts.
pub fn make_fake_batch(
    net: &EnergyNetwork,
    op: &ForwardOperator,
    batch: &[&Measurements],
    cfg: &TrainConfig,
    stream: &[u64],
) -> Result<FakeBatch> {
    let starts = batch
        .iter()
        .map(|b| op.sense_init(b, cfg.lambda_tilde))
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<u64> = (0..batch.len() as u64).collect();
    let starts: Vec<&ComplexImage> = starts.iter().collect();
    run_chains(net, op, &starts, batch, cfg, stream, &ids)
}

fn run_chains(
    net: &EnergyNetwork,
    op: &ForwardOperator,
    starts: &[&ComplexImage],
    batch: &[&Measurements],
    cfg: &TrainConfig,
    stream: &[u64],
    ids: &[u64],
) -> Result<FakeBatch> {
    if batch.is_empty() {
        return Err(Error::invalid("fake batch needs at least one measurement set"));
    }
    let sampler = cfg.sampler();
    let mut out = FakeBatch {
        samples: Vec::with_capacity(batch.len()),
        dropped: Vec::new(),
    };
    for (i, (b, x0)) in batch.iter().zip(starts).enumerate() {
        let mut tags = vec![tag::CHAIN];
        tags.extend_from_slice(stream);
        tags.push(ids[i]);
        let mut rng = rng_for(cfg.seed, &tags);
        let m = PosteriorModel::new(op, net, b)?;
        match sample_posterior_with(&m, x0, &sampler, &mut rng) {
            Ok((x, _)) => out.samples.push(x),
            Err(e @ Error::Divergence { .. }) => out.dropped.push(DroppedSample {
                index: i,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    if 2 * out.dropped.len() > batch.len() {
        return Err(Error::Divergence {
            step: sampler.n_steps,
            reason: format!(
                "{} of {} fake chains diverged (first: {})",
                out.dropped.len(),
                batch.len(),
                out.dropped[0].reason
            ),
        });
    }
    Ok(out)
}

/// Trains from a fresh network initialized from `cfg.seed`.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainState> {
    train_with(dataset, cfg, None, None)
}

/// Trains up to `cfg.epochs` total epochs, continuing from `resume` if given.
/// With a checkpoint directory, the full training state is written to
/// `state_epochNNNN.dpn1` every `cfg.checkpoint_every` epochs.
///
/// All randomness is keyed by (seed, epoch, sample index), so a resumed run
/// reproduces the uninterrupted one exactly.
pub fn train_with(
    dataset: &Dataset,
    cfg: &TrainConfig,
    resume: Option<TrainState>,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainState> {
    train_observed(dataset, cfg, resume, checkpoint_dir, |_| {})
}

/// As [`train_with`], calling `on_epoch` after every completed epoch.
pub fn train_observed(
    dataset: &Dataset,
    cfg: &TrainConfig,
    resume: Option<TrainState>,
    checkpoint_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&TrainState),
) -> Result<TrainState> {
    cfg.validate()?;
    let data = &dataset.train;
    if data.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let mut state = match resume {
        Some(s) => {
            if s.net.config() != &cfg.net {
                return Err(Error::CheckpointIncompatible(
                    "resumed network does not match the configured architecture".into(),
                ));
            }
            s
        }
        None => TrainState::new(EnergyNetwork::init_with(cfg.net.clone(), cfg.seed, &cfg.init)?),
    };
    let op = &dataset.op;
    let starts = data
        .iter()
        .map(|s| op.sense_init(&s.kspace, cfg.lambda_tilde))
        .collect::<Result<Vec<_>>>()?;

    let mut global_step = state.log.steps.last().map_or(0, |r| r.step);
    for epoch in state.epochs_done + 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng_for(cfg.seed, &[tag::SHUFFLE, epoch as u64]));
        for chunk in order.chunks(cfg.batch_size) {
            global_step += 1;
            let t0 = Instant::now();
            let true_batch: Vec<ComplexImage> = chunk
                .iter()
                .map(|&i| {
                    let mut x = data[i].image.clone();
                    let mut rng = rng_for(cfg.seed, &[tag::SMOOTHING, epoch as u64, i as u64]);
                    x.add_gaussian_noise(cfg.smoothing_std, &mut rng);
                    x
                })
                .collect();
            let b: Vec<&Measurements> = chunk.iter().map(|&i| &data[i].kspace).collect();
            let x0: Vec<&ComplexImage> = chunk.iter().map(|&i| &starts[i]).collect();
            let ids: Vec<u64> = chunk.iter().map(|&i| i as u64).collect();
            let fake = run_chains(&state.net, op, &x0, &b, cfg, &[epoch as u64], &ids).map_err(|e| match e {
                Error::Divergence { reason, .. } => Error::Divergence {
                    step: global_step,
                    reason: format!("epoch {epoch}: {reason}"),
                },
                other => other,
            })?;
            let eval = loss_and_grad(&state.net, &true_batch, &fake.samples)?;
            let grad_norm = eval.grad.norm();
            adam_step(&mut state.adam, &mut state.net, &eval.grad, &cfg.adam)?;
            state.log.steps.push(StepRecord {
                epoch,
                step: global_step,
                loss: eval.loss,
                mean_energy_true: eval.mean_energy_true,
                mean_energy_fake: eval.mean_energy_fake,
                grad_norm,
                wall_ms: t0.elapsed().as_secs_f64() * 1e3,
                dropped: fake.dropped.len(),
            });
        }
        state.epochs_done = epoch;
        if let Some(dir) = checkpoint_dir {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                state.save(&dir.join(format!("state_epoch{epoch:04}.dpn1")))?;
            }
        }
        on_epoch(&state);
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{gen_phantoms, DatasetSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            net: NetConfig::with_width(2, 3),
            epochs: 1,
            batch_size: 2,
            mcmc_steps: 3,
            ..Default::default()
        }
    }

    fn tiny_dataset() -> Dataset {
        gen_phantoms(&DatasetSpec {
            n_train: 4,
            n_val: 1,
            n_test: 1,
            shape: (8, 8),
            n_coils: 2,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn identical_batches_give_zero_loss_and_gradient() {
        let net = EnergyNetwork::init(NetConfig::with_width(2, 3), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch: Vec<_> = (0..3).map(|_| ComplexImage::random_normal(6, 6, &mut rng)).collect();
        let e = loss_and_grad(&net, &batch, &batch).unwrap();
        assert_eq!(e.loss, 0.0);
        assert!(e.grad.norm() < 1e-12 * (1.0 + net.grad_theta(&batch[0]).unwrap().norm()));
    }

    #[test]
    fn zero_network_loss_is_zero() {
        let net = EnergyNetwork::zeros(NetConfig::with_width(2, 3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = vec![ComplexImage::random_normal(5, 5, &mut rng)];
        let b = vec![ComplexImage::random_normal(5, 5, &mut rng); 2];
        assert_eq!(contrastive_loss(&net, &a, &b).unwrap(), 0.0);
    }

    #[test]
    fn empty_batches_rejected() {
        let net = EnergyNetwork::zeros(NetConfig::with_width(1, 1)).unwrap();
        let a = vec![ComplexImage::zeros(3, 3)];
        assert!(contrastive_loss(&net, &a, &[]).is_err());
        assert!(loss_grad_theta(&net, &[], &a).is_err());
    }

    #[test]
    fn duplicating_fakes_leaves_gradient_unchanged() {
        let net = EnergyNetwork::init(NetConfig::with_width(2, 4), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t: Vec<_> = (0..2).map(|_| ComplexImage::random_normal(6, 6, &mut rng)).collect();
        let f: Vec<_> = (0..3).map(|_| ComplexImage::random_normal(6, 6, &mut rng)).collect();
        let f2: Vec<_> = f.iter().flat_map(|x| [x.clone(), x.clone()]).collect();
        let g1 = loss_grad_theta(&net, &t, &f).unwrap();
        let mut g2 = loss_grad_theta(&net, &t, &f2).unwrap();
        g2.axpy(-1.0, &g1);
        assert!(g2.norm() <= 1e-12 * g1.norm().max(1.0));
    }

    #[test]
    fn zero_step_fake_batch_is_sense() {
        let ds = tiny_dataset();
        let net = EnergyNetwork::init(NetConfig::with_width(2, 3), 0).unwrap();
        let mut cfg = tiny_cfg();
        cfg.mcmc_steps = 0;
        let b: Vec<&Measurements> = ds.train.iter().map(|s| &s.kspace).collect();
        let fake = make_fake_batch(&net, &ds.op, &b, &cfg, &[0]).unwrap();
        for (x, s) in fake.samples.iter().zip(&ds.train) {
            assert_eq!(x, &ds.op.sense_init(&s.kspace, cfg.lambda_tilde).unwrap());
        }
    }

    #[test]
    fn fake_batch_is_reproducible() {
        let ds = tiny_dataset();
        let net = EnergyNetwork::init(NetConfig::with_width(2, 3), 0).unwrap();
        let cfg = tiny_cfg();
        let b: Vec<&Measurements> = ds.train.iter().map(|s| &s.kspace).collect();
        let a = make_fake_batch(&net, &ds.op, &b, &cfg, &[4]).unwrap();
        let c = make_fake_batch(&net, &ds.op, &b, &cfg, &[4]).unwrap();
        assert_eq!(a.samples, c.samples);
        let d = make_fake_batch(&net, &ds.op, &b, &cfg, &[5]).unwrap();
        assert_ne!(a.samples, d.samples);
    }

    #[test]
    fn one_epoch_smoke_run_writes_loadable_checkpoint() {
        let ds = tiny_dataset();
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            checkpoint_every: 1,
            ..tiny_cfg()
        };
        let state = train_with(&ds, &cfg, None, Some(dir.path())).unwrap();
        assert_eq!(state.epochs_done, 1);
        assert_eq!(state.log.steps.len(), 2);
        let back = TrainState::load(&dir.path().join("state_epoch0001.dpn1")).unwrap();
        assert_eq!(back.net, state.net);
        assert_eq!(back.adam, state.adam);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let ds = tiny_dataset();
        let full = train(
            &ds,
            &TrainConfig {
                epochs: 3,
                ..tiny_cfg()
            },
        )
        .unwrap();
        let half = train(
            &ds,
            &TrainConfig {
                epochs: 1,
                ..tiny_cfg()
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.dpn1");
        half.save(&path).unwrap();
        let resumed = train_with(
            &ds,
            &TrainConfig {
                epochs: 3,
                ..tiny_cfg()
            },
            Some(TrainState::load(&path).unwrap()),
            None,
        )
        .unwrap();
        assert_eq!(resumed.net, full.net);
        assert_eq!(resumed.adam, full.adam);
        let strip = |l: &TrainLog| -> Vec<(usize, usize, u64, u64)> {
            l.steps
                .iter()
                .map(|r| (r.epoch, r.step, r.loss.to_bits(), r.grad_norm.to_bits()))
                .collect()
        };
        assert_eq!(strip(&resumed.log), strip(&full.log));
    }

    #[test]
    fn invalid_config_rejected() {
        for cfg in [
            TrainConfig {
                mcmc_steps: 0,
                ..tiny_cfg()
            },
            TrainConfig {
                batch_size: 0,
                ..tiny_cfg()
            },
            TrainConfig {
                lambda_tilde: 0.0,
                ..tiny_cfg()
            },
            TrainConfig {
                epsilon: -1.0,
                ..tiny_cfg()
            },
            TrainConfig {
                init: InitConfig {
                    kernel_gain: 0.0,
                    head_bias: 0.0,
                },
                ..tiny_cfg()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
