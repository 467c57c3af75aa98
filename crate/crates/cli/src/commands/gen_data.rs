use std::path::PathBuf;

use ebm_recon::forward::{gen_phantoms, DatasetSpec};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::OutDir;

const KEYS: &[&str] = &[
    "out",
    "n_train",
    "n_val",
    "n_test",
    "height",
    "width",
    "n_coils",
    "acceleration",
    "noise_std",
    "seed",
];

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Dataset directory to create.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training images [default: 200]
    #[arg(long)]
    n_train: Option<usize>,
    /// Validation images [default: 10]
    #[arg(long)]
    n_val: Option<usize>,
    /// Held-out test images [default: 20]
    #[arg(long)]
    n_test: Option<usize>,
    /// Image rows [default: 32]
    #[arg(long)]
    height: Option<usize>,
    /// Image columns, the undersampled direction [default: 32]
    #[arg(long)]
    width: Option<usize>,
    /// Receiver coils [default: 4]
    #[arg(long)]
    n_coils: Option<usize>,
    /// Undersampling factor of the column mask [default: 4]
    #[arg(long)]
    acceleration: Option<f64>,
    /// Std of the real and of the imaginary k-space noise [default: 0.01]
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn spec(a: &Args, file: &RunConfig) -> Result<DatasetSpec, CliError> {
    let d = DatasetSpec::default();
    let spec = DatasetSpec {
        n_train: file.pick(a.n_train, "n_train", d.n_train)?,
        n_val: file.pick(a.n_val, "n_val", d.n_val)?,
        n_test: file.pick(a.n_test, "n_test", d.n_test)?,
        shape: (
            file.pick(a.height, "height", d.shape.0)?,
            file.pick(a.width, "width", d.shape.1)?,
        ),
        n_coils: file.pick(a.n_coils, "n_coils", d.n_coils)?,
        acceleration: file.pick(a.acceleration, "acceleration", d.acceleration)?,
        noise_std: file.pick(a.noise_std, "noise_std", d.noise_std)?,
        seed: file.pick(a.seed, "seed", d.seed)?,
    };
    spec.validate().map_err(CliError::config)?;
    Ok(spec)
}

pub fn run(a: Args, file: &RunConfig, force: bool) -> Result<(), CliError> {
    file.check_keys(KEYS)?;
    let spec = spec(&a, file)?;
    let out = OutDir::check(file.require(a.out.clone(), "out")?, force)?;
    let ds = gen_phantoms(&spec)?;
    out.create("")?;
    ds.write(out.path())?;
    eprintln!(
        "wrote {} train / {} val / {} test images ({}x{}, {} coils, {} of {} columns sampled) to {}",
        spec.n_train,
        spec.n_val,
        spec.n_test,
        spec.shape.0,
        spec.shape.1,
        spec.n_coils,
        ds.op.mask().sampled_columns(),
        spec.shape.1,
        out.path().display()
    );
    Ok(())
}
