pub mod evaluate;
pub mod gen_data;
pub mod reconstruct;
pub mod sample;
pub mod train;

use std::path::Path;

use ebm_recon::energy::EnergyNetwork;
use ebm_recon::forward::{Dataset, MANIFEST};

use crate::error::CliError;

pub fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    if !dir.join(MANIFEST).is_file() {
        return Err(CliError::Data(format!("{} has no dataset manifest", dir.display())));
    }
    Ok(Dataset::load(dir)?)
}

pub fn load_network(path: &Path) -> Result<EnergyNetwork, CliError> {
    if !path.is_file() {
        return Err(CliError::Data(format!("checkpoint {} not found", path.display())));
    }
    Ok(EnergyNetwork::load(path)?)
}
