use std::fs;
use std::path::Path;

use super::AdamState;
use crate::energy::{
    config_from_header, config_header, params_from_container, params_to_tensors, EnergyNetwork, Params,
};
use crate::error::{Error, Result};
use crate::numerics::dpn1::{self, Container, Tensor};

const KIND: &str = "train-state";
const VERSION: &str = "1";
const LOG_COLUMNS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based.
    pub epoch: usize,
    /// 1-based, counted across epochs.
    pub step: usize,
    pub loss: f64,
    pub mean_energy_true: f64,
    pub mean_energy_fake: f64,
    pub grad_norm: f64,
    pub wall_ms: f64,
    /// Fake chains dropped for divergence.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub steps: usize,
    pub loss: f64,
    pub mean_energy_true: f64,
    pub mean_energy_fake: f64,
    pub grad_norm: f64,
    pub wall_ms: f64,
}

impl EpochSummary {
    /// `|mean E(x⁺) − mean E(x⁻)|` over the epoch.
    pub fn energy_gap(&self) -> f64 {
        (self.mean_energy_true - self.mean_energy_fake).abs()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
}

impl TrainLog {
    /// Step records averaged per epoch (wall time summed).
    pub fn epochs(&self) -> Vec<EpochSummary> {
        let mut out: Vec<EpochSummary> = Vec::new();
        for r in &self.steps {
            if out.last().is_none_or(|e| e.epoch != r.epoch) {
                out.push(EpochSummary {
                    epoch: r.epoch,
                    steps: 0,
                    loss: 0.0,
                    mean_energy_true: 0.0,
                    mean_energy_fake: 0.0,
                    grad_norm: 0.0,
                    wall_ms: 0.0,
                });
            }
            let e = out.last_mut().unwrap();
            e.steps += 1;
            e.loss += r.loss;
            e.mean_energy_true += r.mean_energy_true;
            e.mean_energy_fake += r.mean_energy_fake;
            e.grad_norm += r.grad_norm;
            e.wall_ms += r.wall_ms;
        }
        for e in &mut out {
            let n = e.steps as f64;
            e.loss /= n;
            e.mean_energy_true /= n;
            e.mean_energy_fake /= n;
            e.grad_norm /= n;
        }
        out
    }

    pub fn steps_csv(&self) -> String {
        let mut s = String::from("epoch,step,loss,meanEnergyTrue,meanEnergyFake,gradNorm,wallMs\n");
        for r in &self.steps {
            s.push_str(&format!(
                "{},{},{},{},{},{},{:.3}\n",
                r.epoch, r.step, r.loss, r.mean_energy_true, r.mean_energy_fake, r.grad_norm, r.wall_ms
            ));
        }
        s
    }

    /// Same columns as [`TrainLog::steps_csv`]; `step` holds the number of
    /// steps in the epoch.
    pub fn epochs_csv(&self) -> String {
        let mut s = String::from("epoch,step,loss,meanEnergyTrue,meanEnergyFake,gradNorm,wallMs\n");
        for e in self.epochs() {
            s.push_str(&format!(
                "{},{},{},{},{},{},{:.3}\n",
                e.epoch, e.steps, e.loss, e.mean_energy_true, e.mean_energy_fake, e.grad_norm, e.wall_ms
            ));
        }
        s
    }

    fn to_tensor(&self) -> Tensor {
        let mut v = Vec::with_capacity(self.steps.len() * LOG_COLUMNS);
        for r in &self.steps {
            v.extend_from_slice(&[
                r.epoch as f64,
                r.step as f64,
                r.loss,
                r.mean_energy_true,
                r.mean_energy_fake,
                r.grad_norm,
                r.wall_ms,
                r.dropped as f64,
            ]);
        }
        Tensor::f64(vec![self.steps.len(), LOG_COLUMNS], v).expect("row layout")
    }

    fn from_tensor(t: &Tensor) -> Result<Self> {
        let bad = || Error::CheckpointIncompatible("malformed training log tensor".into());
        let v = t.as_f64().ok_or_else(bad)?;
        if t.dims.len() != 2 || t.dims[1] != LOG_COLUMNS {
            return Err(bad());
        }
        let steps = v
            .chunks_exact(LOG_COLUMNS)
            .map(|r| StepRecord {
                epoch: r[0] as usize,
                step: r[1] as usize,
                loss: r[2],
                mean_energy_true: r[3],
                mean_energy_fake: r[4],
                grad_norm: r[5],
                wall_ms: r[6],
                dropped: r[7] as usize,
            })
            .collect();
        Ok(TrainLog { steps })
    }
}

/// Everything needed to continue training bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub net: EnergyNetwork,
    pub adam: AdamState,
    pub epochs_done: usize,
    pub log: TrainLog,
}

impl TrainState {
    pub fn new(net: EnergyNetwork) -> Self {
        let adam = AdamState::new(net.params());
        TrainState {
            net,
            adam,
            epochs_done: 0,
            log: TrainLog::default(),
        }
    }

    pub fn to_container(&self) -> Container {
        let mut header = vec![
            ("kind".to_string(), KIND.to_string()),
            ("version".to_string(), VERSION.to_string()),
            ("epochs_done".to_string(), self.epochs_done.to_string()),
            ("adam_t".to_string(), self.adam.t.to_string()),
        ];
        header.extend(
            config_header(self.net.config())
                .into_iter()
                .map(|(k, v)| (format!("net.{k}"), v)),
        );
        let mut tensors = Vec::new();
        for (prefix, p) in [
            ("net.", self.net.params()),
            ("adam.m.", &self.adam.m),
            ("adam.v.", &self.adam.v),
        ] {
            tensors.extend(
                params_to_tensors(p)
                    .into_iter()
                    .map(|(n, t)| (format!("{prefix}{n}"), t)),
            );
        }
        tensors.push(("log.steps".to_string(), self.log.to_tensor()));
        Container { header, tensors }
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let get = |k: &str| {
            c.header_value(k)
                .ok_or_else(|| Error::CheckpointIncompatible(format!("header lacks {k}")))
        };
        if get("kind")? != KIND {
            return Err(Error::CheckpointIncompatible(format!(
                "not a training state (kind {})",
                get("kind")?
            )));
        }
        if get("version")? != VERSION {
            return Err(Error::CheckpointIncompatible(format!(
                "unsupported training state version {}",
                get("version")?
            )));
        }
        let parse = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| Error::CheckpointIncompatible(format!("bad {k}")))
        };
        let net_header = Container {
            header: c
                .header
                .iter()
                .filter_map(|(k, v)| k.strip_prefix("net.").map(|k| (k.to_string(), v.clone())))
                .collect(),
            tensors: Vec::new(),
        };
        let cfg = config_from_header(&net_header)?;
        let layout = Params::zeros(&cfg);
        let net = EnergyNetwork::from_params(cfg, params_from_container(&layout, c, "net.")?)?;
        let adam = AdamState {
            m: params_from_container(&layout, c, "adam.m.")?,
            v: params_from_container(&layout, c, "adam.v.")?,
            t: parse("adam_t")?,
        };
        let log = TrainLog::from_tensor(
            c.tensor("log.steps")
                .ok_or_else(|| Error::CheckpointIncompatible("missing training log".into()))?,
        )?;
        Ok(TrainState {
            net,
            adam,
            epochs_done: parse("epochs_done")? as usize,
            log,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        dpn1::write_atomic(path, &self.to_container().to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let c = Container::from_bytes(&bytes)
            .map_err(|r| Error::CheckpointIncompatible(format!("{}: {r}", path.display())))?;
        Self::from_container(&c)
    }
}
