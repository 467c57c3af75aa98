use std::fs;
use std::path::Path;

use super::{EnergyNetwork, NetConfig, Params};
use crate::error::{Error, Result};
use crate::numerics::dpn1::{self, Container, Tensor};

const KIND: &str = "energy-network";
const VERSION: &str = "1";

pub fn params_to_tensors(params: &Params) -> Vec<(String, Tensor)> {
    params
        .names()
        .into_iter()
        .zip(params.dims())
        .zip(params.tensors())
        .map(|((name, dims), values)| (name, Tensor::f64(dims, values.to_vec()).expect("layout is consistent")))
        .collect()
}

/// Fills a parameter layout from named tensors, failing on any missing or
/// misshapen entry.
pub fn params_from_container(layout: &Params, c: &Container, prefix: &str) -> Result<Params> {
    let mut out = layout.clone();
    let names = out.names();
    let dims = out.dims();
    for ((name, want), slot) in names.iter().zip(&dims).zip(out.tensors_mut()) {
        let key = format!("{prefix}{name}");
        let t = c
            .tensor(&key)
            .ok_or_else(|| Error::CheckpointIncompatible(format!("missing tensor {key}")))?;
        if &t.dims != want {
            return Err(Error::CheckpointIncompatible(format!(
                "tensor {key} has dims {:?}, expected {want:?}",
                t.dims
            )));
        }
        let values = t
            .as_f64()
            .ok_or_else(|| Error::CheckpointIncompatible(format!("tensor {key} is not f64")))?;
        slot.copy_from_slice(values);
    }
    Ok(out)
}

pub fn config_header(cfg: &NetConfig) -> Vec<(String, String)> {
    let channels: Vec<String> = cfg.channels.iter().map(|c| c.to_string()).collect();
    vec![
        ("kind".into(), KIND.into()),
        ("version".into(), VERSION.into()),
        ("layers".into(), cfg.channels.len().to_string()),
        ("in_channels".into(), super::INPUT_CHANNELS.to_string()),
        ("kernel".into(), "3".into()),
        ("channels".into(), channels.join(",")),
        ("slope".into(), cfg.slope.to_string()),
    ]
}

pub fn config_from_header(c: &Container) -> Result<NetConfig> {
    let get = |k: &str| {
        c.header_value(k)
            .ok_or_else(|| Error::CheckpointIncompatible(format!("header lacks {k}")))
    };
    if get("kind")? != KIND {
        return Err(Error::CheckpointIncompatible(format!(
            "not an energy network checkpoint (kind {})",
            get("kind")?
        )));
    }
    if get("version")? != VERSION {
        return Err(Error::CheckpointIncompatible(format!(
            "unsupported checkpoint version {}",
            get("version")?
        )));
    }
    if get("in_channels")? != "2" || get("kernel")? != "3" {
        return Err(Error::CheckpointIncompatible(
            "unsupported input channels or kernel size".into(),
        ));
    }
    let channels = get("channels")?
        .split(',')
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::CheckpointIncompatible("bad channel list".into()))?;
    let layers: usize = get("layers")?
        .parse()
        .map_err(|_| Error::CheckpointIncompatible("bad layer count".into()))?;
    if layers != channels.len() {
        return Err(Error::CheckpointIncompatible(
            "layer count disagrees with channel list".into(),
        ));
    }
    let slope: f64 = get("slope")?
        .parse()
        .map_err(|_| Error::CheckpointIncompatible("bad activation slope".into()))?;
    let cfg = NetConfig { channels, slope };
    cfg.validate()
        .map_err(|e| Error::CheckpointIncompatible(e.to_string()))?;
    Ok(cfg)
}

impl EnergyNetwork {
    pub fn to_container(&self) -> Container {
        Container {
            header: config_header(self.config()),
            tensors: params_to_tensors(self.params()),
        }
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let cfg = config_from_header(c)?;
        let params = params_from_container(&Params::zeros(&cfg), c, "")?;
        EnergyNetwork::from_params(cfg, params)
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
