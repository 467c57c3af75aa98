//! Posterior mean and per-pixel variance from independent Langevin chains.
//!
//! Each chain starts from `x̂ + s·z`, where `x̂` is the regularized
//! least-squares reconstruction, `s` its RMS magnitude and `z` complex white
//! noise, and keeps only its final state. Means and variances are folded in
//! chain order with Welford's update, so identical chains give exactly zero
//! variance.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{ComplexImage, RealImage};
use crate::posterior::{PosteriorModel, Prior};
use crate::rng::{rng_for, tag};
use crate::sampler::{sample_posterior_with, SamplerConfig, Variant};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyConfig {
    pub sampler: SamplerConfig,
    pub n_samples: usize,
    /// Regularization of the least-squares center of the chain starts.
    pub lambda_tilde: f64,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        UncertaintyConfig {
            sampler: SamplerConfig {
                epsilon: 1e-3,
                n_steps: 500,
                variant: Variant::Scaled,
                seed: 0,
            },
            n_samples: 100,
            lambda_tilde: 1e-2,
        }
    }
}

impl UncertaintyConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if self.n_samples < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 samples for a variance, got {}",
                self.n_samples
            )));
        }
        if !(self.lambda_tilde > 0.0) || !self.lambda_tilde.is_finite() {
            return Err(Error::invalid(format!(
                "lambda_tilde must be positive, got {}",
                self.lambda_tilde
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct UncertaintyReport {
    pub mmse: ComplexImage,
    /// `var(Re) + var(Im)` per pixel, unbiased.
    pub variance: RealImage,
    /// Surviving chains.
    pub n_samples: usize,
    pub dropped: usize,
}

/// Running per-pixel mean and sum of squared deviations.
#[derive(Debug, Clone)]
pub struct Welford {
    n: usize,
    mean: Vec<Complex64>,
    m2: Vec<f64>,
    shape: (usize, usize),
}

impl Welford {
    pub fn new(shape: (usize, usize)) -> Self {
        Welford {
            n: 0,
            mean: vec![Complex64::new(0.0, 0.0); shape.0 * shape.1],
            m2: vec![0.0; shape.0 * shape.1],
            shape,
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, x: &ComplexImage) {
        debug_assert_eq!(x.shape(), self.shape);
        self.n += 1;
        let inv = 1.0 / self.n as f64;
        for ((mu, m2), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x.data()) {
            let d = v - *mu;
            *mu += d * inv;
            let d2 = v - *mu;
            *m2 += d.re * d2.re + d.im * d2.im;
        }
    }

    pub fn mean(&self) -> ComplexImage {
        ComplexImage::from_vec(self.shape.0, self.shape.1, self.mean.clone()).expect("shape")
    }

    /// Unbiased `var(Re) + var(Im)`; zero with fewer than two samples.
    pub fn variance(&self) -> RealImage {
        let denom = self.n.saturating_sub(1).max(1) as f64;
        RealImage {
            height: self.shape.0,
            width: self.shape.1,
            data: self.m2.iter().map(|v| (v / denom).max(0.0)).collect(),
        }
    }
}

/// Runs `cfg.n_samples` chains with independent streams derived from
/// `cfg.sampler.seed`.
pub fn estimate_mmse_uncertainty<P: Prior + ?Sized>(
    m: &PosteriorModel<'_, P>,
    cfg: &UncertaintyConfig,
) -> Result<UncertaintyReport> {
    let seed = cfg.sampler.seed;
    estimate_with_streams(m, cfg, |i| rng_for(seed, &[tag::UNCERTAINTY, i as u64]))
}

/// As [`estimate_mmse_uncertainty`] with caller-chosen per-chain streams; each
/// stream draws the chain's start and then its Langevin noise.
pub fn estimate_with_streams<P: Prior + ?Sized>(
    m: &PosteriorModel<'_, P>,
    cfg: &UncertaintyConfig,
    stream: impl Fn(usize) -> ChaCha8Rng,
) -> Result<UncertaintyReport> {
    cfg.validate()?;
    let center = m.op().sense_init(m.measurements(), cfg.lambda_tilde)?;
    let spread = center.rms();
    let mut acc = Welford::new(m.image_shape());
    let mut dropped = 0;
    let mut first_failure = None;
    for i in 0..cfg.n_samples {
        let mut rng = stream(i);
        let mut x0 = center.clone();
        x0.add_gaussian_noise(spread, &mut rng);
        match sample_posterior_with(m, &x0, &cfg.sampler, &mut rng) {
            Ok((x, _)) => acc.push(&x),
            Err(e @ Error::Divergence { .. }) => {
                dropped += 1;
                first_failure.get_or_insert(e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    if acc.count() < 2 {
        return Err(Error::Divergence {
            step: cfg.sampler.n_steps,
            reason: format!(
                "only {} of {} chains survived ({})",
                acc.count(),
                cfg.n_samples,
                first_failure.unwrap_or_default()
            ),
        });
    }
    Ok(UncertaintyReport {
        mmse: acc.mean(),
        variance: acc.variance(),
        n_samples: acc.count(),
        dropped,
    })
}
