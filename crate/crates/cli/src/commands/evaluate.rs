use std::path::{Path, PathBuf};

use ebm_recon::forward::Split;
use ebm_recon::metrics::{psnr, ssim};
use ebm_recon::numerics::dpn1;
use ebm_recon::numerics::ComplexImage;

use super::load_dataset;
use super::reconstruct::Method;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{image_name, write_text, OutDir};

const KEYS: &[&str] = &["data", "recon", "samples", "split", "out"];

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory of `reconstruct`.
    #[arg(long)]
    recon: Option<PathBuf>,
    /// Output directory of `sample`; adds mean variance to the deepen rows.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Split the reconstructions were made from [default: test]
    #[arg(long)]
    split: Option<String>,
    /// Output directory for metrics.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Row {
    id: usize,
    psnr: f64,
    ssim: f64,
    mean_variance: Option<f64>,
}

fn load_estimate(path: &Path) -> Result<ComplexImage, CliError> {
    if !path.is_file() {
        return Err(CliError::Data(format!("missing reconstruction {}", path.display())));
    }
    Ok(ComplexImage::from_tensor(&dpn1::load_tensor(path)?)?)
}

fn mean_variance(dir: &Path, i: usize) -> Result<Option<f64>, CliError> {
    let path = dir.join(format!("var_{i:04}.dpn1"));
    if !path.is_file() {
        return Ok(None);
    }
    let t = dpn1::load_tensor(&path)?;
    let v = t
        .as_f64()
        .ok_or_else(|| CliError::Data(format!("{} is not a real variance map", path.display())))?;
    Ok(Some(v.iter().sum::<f64>() / v.len().max(1) as f64))
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn run(a: Args, file: &RunConfig, force: bool) -> Result<(), CliError> {
    file.check_keys(KEYS)?;
    let split: Split = file
        .pick(a.split.clone(), "split", "test".to_string())?
        .parse()
        .map_err(CliError::config)?;
    let data_dir: PathBuf = file.require(a.data.clone(), "data")?;
    let recon: PathBuf = file.require(a.recon.clone(), "recon")?;
    let samples: Option<PathBuf> = file.pick_opt(a.samples.clone(), "samples")?;
    let out = OutDir::check(file.require(a.out.clone(), "out")?, force)?;

    let ds = load_dataset(&data_dir)?;
    let truth = ds.split(split);
    let methods: Vec<Method> = [Method::Sense, Method::Deepen]
        .into_iter()
        .filter(|m| recon.join(m.name()).is_dir())
        .collect();
    if methods.is_empty() {
        return Err(CliError::Data(format!(
            "no sense/ or deepen/ reconstructions under {}",
            recon.display()
        )));
    }
    if let Some(s) = &samples {
        if !s.is_dir() {
            return Err(CliError::Data(format!("sample directory {} not found", s.display())));
        }
    }

    let mut csv = String::from("method,id,psnr,ssim,meanVariance\n");
    let mut means = Vec::new();
    for method in &methods {
        let dir = recon.join(method.name());
        let mut rows = Vec::with_capacity(truth.len());
        for (i, s) in truth.iter().enumerate() {
            let est = load_estimate(&dir.join(image_name(i, "dpn1")))?;
            est.check_shape(s.image.shape(), "reconstruction")?;
            let mean_variance = match (&samples, method) {
                (Some(d), Method::Deepen) => mean_variance(d, i)?,
                _ => None,
            };
            rows.push(Row {
                id: i,
                psnr: psnr(&s.image, &est)?,
                ssim: ssim(&s.image, &est)?,
                mean_variance,
            });
        }
        for r in &rows {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                method.name(),
                r.id,
                r.psnr,
                r.ssim,
                opt(r.mean_variance)
            ));
        }
        let n = rows.len().max(1) as f64;
        let variances: Vec<f64> = rows.iter().filter_map(|r| r.mean_variance).collect();
        let mv = (!variances.is_empty()).then(|| variances.iter().sum::<f64>() / variances.len() as f64);
        means.push((
            method.name(),
            rows.iter().map(|r| r.psnr).sum::<f64>() / n,
            rows.iter().map(|r| r.ssim).sum::<f64>() / n,
            mv,
        ));
    }
    for (name, p, s, v) in &means {
        csv.push_str(&format!("{name},mean,{p},{s},{}\n", opt(*v)));
    }
    out.create("")?;
    write_text(&out.path().join("metrics.csv"), &csv)?;
    println!("{:<8} {:>10} {:>8}", "method", "PSNR [dB]", "SSIM");
    for (name, p, s, _) in &means {
        println!("{name:<8} {p:>10.3} {s:>8.4}");
    }
    Ok(())
}
