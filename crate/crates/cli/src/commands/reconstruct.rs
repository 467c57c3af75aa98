use std::path::PathBuf;

use ebm_recon::forward::Split;
use ebm_recon::map::{map_estimate, MapConfig};
use ebm_recon::posterior::{PosteriorModel, ZeroPrior};

use super::{load_dataset, load_network};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{image_name, write_bytes, write_tensor, write_text, OutDir};

const KEYS: &[&str] = &[
    "data",
    "checkpoint",
    "out",
    "method",
    "split",
    "lambda_tilde",
    "beta",
    "max_iters",
    "rel_tol",
    "max_backtracks",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sense,
    Deepen,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sense => "sense",
            Method::Deepen => "deepen",
        }
    }
}

/// `sense`, `deepen` or `both`.
fn parse_methods(s: &str) -> Result<Vec<Method>, CliError> {
    match s {
        "sense" => Ok(vec![Method::Sense]),
        "deepen" => Ok(vec![Method::Deepen]),
        "both" => Ok(vec![Method::Sense, Method::Deepen]),
        other => Err(CliError::Config(format!(
            "unknown method {other:?} (expected sense, deepen or both)"
        ))),
    }
}

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Network checkpoint (net.dpn1); required for deepen.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory; one subdirectory per method.
    #[arg(long)]
    out: Option<PathBuf>,
    /// sense | deepen | both [default: deepen]
    #[arg(long)]
    method: Option<String>,
    /// train | val | test [default: test]
    #[arg(long)]
    split: Option<String>,
    /// SENSE regularization, also the MAP start [default: 1e-2]
    #[arg(long)]
    lambda_tilde: Option<f64>,
    /// Line-search shrink and sufficient-decrease factor [default: 0.5]
    #[arg(long)]
    beta: Option<f64>,
    /// [default: 500]
    #[arg(long)]
    max_iters: Option<usize>,
    /// Stop when the relative cost change falls to this [default: 1e-6]
    #[arg(long)]
    rel_tol: Option<f64>,
    /// [default: 50]
    #[arg(long)]
    max_backtracks: Option<usize>,
}

pub fn run(a: Args, file: &RunConfig, force: bool) -> Result<(), CliError> {
    file.check_keys(KEYS)?;
    let d = MapConfig::default();
    let map_cfg = MapConfig {
        beta: file.pick(a.beta, "beta", d.beta)?,
        max_iters: file.pick(a.max_iters, "max_iters", d.max_iters)?,
        rel_tol: file.pick(a.rel_tol, "rel_tol", d.rel_tol)?,
        max_backtracks: file.pick(a.max_backtracks, "max_backtracks", d.max_backtracks)?,
    };
    map_cfg.validate().map_err(CliError::config)?;
    let lambda: f64 = file.pick(a.lambda_tilde, "lambda_tilde", 1e-2)?;
    if lambda.is_nan() || lambda <= 0.0 || !lambda.is_finite() {
        return Err(CliError::Config(format!("lambda_tilde must be positive, got {lambda}")));
    }
    let methods = parse_methods(&file.pick(a.method.clone(), "method", "deepen".to_string())?)?;
    let split: Split = file
        .pick(a.split.clone(), "split", "test".to_string())?
        .parse()
        .map_err(CliError::config)?;
    let data_dir: PathBuf = file.require(a.data.clone(), "data")?;
    let ckpt: Option<PathBuf> = file.pick_opt(a.checkpoint.clone(), "checkpoint")?;
    if methods.contains(&Method::Deepen) && ckpt.is_none() {
        return Err(CliError::Config("method deepen needs --checkpoint".into()));
    }
    let out = OutDir::check(file.require(a.out.clone(), "out")?, force)?;

    let ds = load_dataset(&data_dir)?;
    let net = ckpt.as_deref().map(load_network).transpose()?;
    let samples = ds.split(split);
    let starts = samples
        .iter()
        .map(|s| ds.op.sense_init(&s.kspace, lambda))
        .collect::<Result<Vec<_>, _>>()?;

    for method in methods {
        let dir = out.create(method.name())?;
        let mut report = match method {
            Method::Sense => String::from("id,dataTerm\n"),
            Method::Deepen => String::from("id,iterations,converged,startCost,finalCost,monotone\n"),
        };
        for (i, (s, x0)) in samples.iter().zip(&starts).enumerate() {
            let estimate = match method {
                Method::Sense => {
                    let m = PosteriorModel::new(&ds.op, &ZeroPrior, &s.kspace)?;
                    report.push_str(&format!("{i},{}\n", m.data_term(x0)?));
                    x0.clone()
                }
                Method::Deepen => {
                    let net = net.as_ref().expect("checked above");
                    let m = PosteriorModel::new(&ds.op, net, &s.kspace)?;
                    let r = map_estimate(&m, x0, &map_cfg)?;
                    if !r.is_monotone() {
                        return Err(CliError::Numerical(format!("image {i}: MAP cost increased")));
                    }
                    report.push_str(&format!(
                        "{i},{},{},{},{},{}\n",
                        r.iterations,
                        r.converged,
                        r.cost_trajectory[0],
                        r.final_cost(),
                        r.is_monotone()
                    ));
                    write_text(&dir.join(format!("traj_{i:04}.csv")), &r.trajectory_csv())?;
                    r.estimate
                }
            };
            write_tensor(&dir.join(image_name(i, "dpn1")), &estimate.to_tensor())?;
            let mag = estimate.magnitude();
            write_bytes(&dir.join(image_name(i, "pgm")), &mag.to_pgm16(mag.max()))?;
        }
        write_text(&dir.join("report.csv"), &report)?;
        eprintln!(
            "{}: {} images of the {} split -> {}",
            method.name(),
            samples.len(),
            split.name(),
            dir.display()
        );
    }
    Ok(())
}
