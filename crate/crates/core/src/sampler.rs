//! Unadjusted Langevin sampling of the posterior.
//!
//! Two updates share one noise model (independent unit-variance real and
//! imaginary parts):
//!
//! * standard: `x − (ε²/2)·∇L(x) + ε·z`, which targets `exp(−L)` as ε → 0;
//! * scaled:   `x − ∇L(x) + ε·z`, the drift-dominated variant used to draw
//!   fake samples during training.
//!
//! There is no Metropolis correction, so the standard chain carries an O(ε)
//! bias in its stationary law.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::ComplexImage;
use crate::posterior::{PosteriorModel, Prior};
use crate::rng::{rng_for, tag};

/// Chains whose cost exceeds this are declared diverged.
pub const DIVERGENCE_COST: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Standard,
    Scaled,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::Scaled => "scaled",
        }
    }

    /// Multiplier on the gradient for step size `epsilon`.
    pub fn drift(self, epsilon: f64) -> f64 {
        match self {
            Variant::Standard => 0.5 * epsilon * epsilon,
            Variant::Scaled => 1.0,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Variant::Standard),
            "scaled" => Ok(Variant::Scaled),
            other => Err(Error::Config(format!(
                "unknown sampler variant {other:?} (expected standard or scaled)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub epsilon: f64,
    pub n_steps: usize,
    pub variant: Variant,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            epsilon: 1e-3,
            n_steps: 30,
            variant: Variant::Scaled,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    /// `n_steps = 0` is allowed and means "return the start point".
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid(format!(
                "Langevin step epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Per-step cost and gradient norm, both evaluated at the state the step
/// started from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryStats {
    pub costs: Vec<f64>,
    pub grad_norms: Vec<f64>,
}

impl TrajectoryStats {
    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,cost,gradNorm\n");
        for (k, (c, g)) in self.costs.iter().zip(&self.grad_norms).enumerate() {
            out.push_str(&format!("{k},{c},{g}\n"));
        }
        out
    }
}

fn check_state(cost: f64, x: &ComplexImage, step: usize) -> Result<()> {
    if !cost.is_finite() || !x.is_finite() {
        return Err(Error::Divergence {
            step,
            reason: "non-finite state".into(),
        });
    }
    if cost > DIVERGENCE_COST {
        return Err(Error::Divergence {
            step,
            reason: format!("cost {cost:e} exceeds {DIVERGENCE_COST:e}"),
        });
    }
    Ok(())
}

/// One update from `x` given its gradient; `step` only labels errors.
fn advance<R: Rng + ?Sized>(
    x: &ComplexImage,
    grad: &ComplexImage,
    drift: f64,
    epsilon: f64,
    rng: &mut R,
    step: usize,
) -> Result<ComplexImage> {
    let mut next = x.clone();
    next.axpy(-drift, grad);
    next.add_gaussian_noise(epsilon, rng);
    if !next.is_finite() {
        return Err(Error::Divergence {
            step,
            reason: "non-finite state after update".into(),
        });
    }
    Ok(next)
}

fn single_step<P: Prior + ?Sized, R: Rng + ?Sized>(
    m: &PosteriorModel<'_, P>,
    x: &ComplexImage,
    epsilon: f64,
    variant: Variant,
    rng: &mut R,
) -> Result<ComplexImage> {
    SamplerConfig {
        epsilon,
        n_steps: 1,
        variant,
        seed: 0,
    }
    .validate()?;
    let g = m.grad(x)?;
    advance(x, &g, variant.drift(epsilon), epsilon, rng, 0)
}

/// `x − (ε²/2)·∇L(x) + ε·z`
pub fn langevin_step_standard<P: Prior + ?Sized, R: Rng + ?Sized>(
    m: &PosteriorModel<'_, P>,
    x: &ComplexImage,
    epsilon: f64,
    rng: &mut R,
) -> Result<ComplexImage> {
    single_step(m, x, epsilon, Variant::Standard, rng)
}

/// `x − ∇L(x) + ε·z`
pub fn langevin_step_scaled<P: Prior + ?Sized, R: Rng + ?Sized>(
    m: &PosteriorModel<'_, P>,
    x: &ComplexImage,
    epsilon: f64,
    rng: &mut R,
) -> Result<ComplexImage> {
    single_step(m, x, epsilon, Variant::Scaled, rng)
}

/// Runs `cfg.n_steps` updates from `x0` with the stream for `cfg.seed`.
/// Only the current state is kept; the trajectory is summarized in the stats.
pub fn sample_posterior<P: Prior + ?Sized>(
    m: &PosteriorModel<'_, P>,
    x0: &ComplexImage,
    cfg: &SamplerConfig,
) -> Result<(ComplexImage, TrajectoryStats)> {
    let mut rng = rng_for(cfg.seed, &[tag::CHAIN]);
    sample_posterior_with(m, x0, cfg, &mut rng)
}

/// As [`sample_posterior`], drawing noise from a caller-provided stream
/// (`cfg.seed` is ignored).
pub fn sample_posterior_with<P: Prior + ?Sized, R: Rng + ?Sized>(
    m: &PosteriorModel<'_, P>,
    x0: &ComplexImage,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<(ComplexImage, TrajectoryStats)> {
    cfg.validate()?;
    x0.check_shape(m.image_shape(), "chain start")?;
    let drift = cfg.variant.drift(cfg.epsilon);
    let mut stats = TrajectoryStats {
        costs: Vec::with_capacity(cfg.n_steps),
        grad_norms: Vec::with_capacity(cfg.n_steps),
    };
    let mut x = x0.clone();
    for step in 0..cfg.n_steps {
        let (cost, g) = m.cost_and_grad(&x)?;
        check_state(cost, &x, step)?;
        stats.costs.push(cost);
        stats.grad_norms.push(g.norm());
        x = advance(&x, &g, drift, cfg.epsilon, rng, step)?;
    }
    Ok((x, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{make_coil_maps, ForwardOperator, Measurements, SamplingMask};
    use crate::posterior::{QuadraticPrior, ZeroPrior};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_op(n: usize) -> ForwardOperator {
        ForwardOperator::new(SamplingMask::full(n, n), make_coil_maps((n, n), 1).unwrap()).unwrap()
    }

    #[test]
    fn vanishing_step_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let op = identity_op(8);
        let x = ComplexImage::random_normal(8, 8, &mut rng);
        let b = op.apply(&ComplexImage::random_normal(8, 8, &mut rng)).unwrap();
        let m = PosteriorModel::new(&op, &ZeroPrior, &b).unwrap();
        let y = langevin_step_standard(&m, &x, 1e-12, &mut rng).unwrap();
        assert!(y.sub(&x).norm() < 1e-9);
    }

    #[test]
    fn zero_gradient_gives_random_walk_with_std_epsilon() {
        let op = identity_op(16);
        let x = ComplexImage::random_normal(16, 16, &mut ChaCha8Rng::seed_from_u64(1));
        let b = op.apply(&x).unwrap();
        let m = PosteriorModel::new(&op, &ZeroPrior, &b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let eps = 0.3;
        let (mut s, mut s2, mut n) = (0.0, 0.0, 0.0);
        for _ in 0..40 {
            let y = langevin_step_standard(&m, &x, eps, &mut rng).unwrap();
            for d in y.sub(&x).data() {
                for v in [d.re, d.im] {
                    s += v;
                    s2 += v * v;
                    n += 1.0;
                }
            }
        }
        let std = (s2 / n - (s / n).powi(2)).sqrt();
        assert!((std - eps).abs() < 0.02 * eps, "std {std}");
    }

    #[test]
    fn variants_differ_only_in_drift_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let op = identity_op(8);
        let b = op.apply(&ComplexImage::random_normal(8, 8, &mut rng)).unwrap();
        let prior = QuadraticPrior { weight: 0.7 };
        let m = PosteriorModel::new(&op, &prior, &b).unwrap();
        let x = ComplexImage::random_normal(8, 8, &mut rng);
        let eps = 0.05;
        let a = langevin_step_standard(&m, &x, eps, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let c = langevin_step_scaled(&m, &x, eps, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let expect = m.grad(&x).unwrap().scaled(1.0 - 0.5 * eps * eps);
        assert!(a.sub(&c).sub(&expect).norm() < 1e-12 * expect.norm());
    }

    #[test]
    fn scaled_step_fixed_point_is_least_squares_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let op = identity_op(8);
        let xs = ComplexImage::random_normal(8, 8, &mut rng);
        let b = op.apply(&xs).unwrap();
        let m = PosteriorModel::new(&op, &ZeroPrior, &b).unwrap();
        // Averaging many noisy steps from the solution recovers it.
        let mut acc = ComplexImage::zeros(8, 8);
        let n = 2000;
        for _ in 0..n {
            acc.axpy(1.0 / n as f64, &langevin_step_scaled(&m, &xs, 1e-3, &mut rng).unwrap());
        }
        assert!(acc.sub(&xs).norm() < 1e-3 * xs.norm());
        assert!(m.grad(&xs).unwrap().norm() < 1e-12);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let op = identity_op(8);
        let b = op.apply(&ComplexImage::random_normal(8, 8, &mut rng)).unwrap();
        let m = PosteriorModel::new(&op, &ZeroPrior, &b).unwrap();
        let x0 = ComplexImage::zeros(8, 8);
        for variant in [Variant::Standard, Variant::Scaled] {
            let cfg = SamplerConfig {
                epsilon: 0.01,
                n_steps: 20,
                variant,
                seed: 17,
            };
            let (a, sa) = sample_posterior(&m, &x0, &cfg).unwrap();
            let (c, sc) = sample_posterior(&m, &x0, &cfg).unwrap();
            assert_eq!(a, c);
            assert_eq!(sa, sc);
        }
    }

    #[test]
    fn empty_chain_returns_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let op = identity_op(4);
        let b = Measurements::zeros(1, (4, 4));
        let m = PosteriorModel::new(&op, &ZeroPrior, &b).unwrap();
        let x0 = ComplexImage::random_normal(4, 4, &mut rng);
        let cfg = SamplerConfig {
            n_steps: 0,
            ..Default::default()
        };
        let (x, stats) = sample_posterior(&m, &x0, &cfg).unwrap();
        assert_eq!(x, x0);
        assert!(stats.is_empty());
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let op = identity_op(4);
        let b = Measurements::zeros(1, (4, 4));
        // Curvature 11 with unit drift overshoots by a factor 10 per step.
        let prior = QuadraticPrior { weight: 10.0 };
        let m = PosteriorModel::new(&op, &prior, &b).unwrap();
        let x0 = ComplexImage::from_fn(4, 4, |_, _| num_complex::Complex64::new(1.0, 0.0));
        let cfg = SamplerConfig {
            epsilon: 1e-3,
            n_steps: 100,
            variant: Variant::Scaled,
            seed: 0,
        };
        match sample_posterior(&m, &x0, &cfg) {
            Err(Error::Divergence { step, .. }) => assert!(step > 3 && step < 20, "step {step}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn stats_csv_layout() {
        let stats = TrajectoryStats {
            costs: vec![2.5, 1.0],
            grad_norms: vec![0.5, 0.25],
        };
        assert_eq!(stats.to_csv(), "step,cost,gradNorm\n0,2.5,0.5\n1,1,0.25\n");
    }

    #[test]
    fn invalid_epsilon_rejected() {
        let op = identity_op(4);
        let b = Measurements::zeros(1, (4, 4));
        let m = PosteriorModel::new(&op, &ZeroPrior, &b).unwrap();
        let x = ComplexImage::zeros(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(langevin_step_scaled(&m, &x, 0.0, &mut rng).is_err());
        assert!(langevin_step_standard(&m, &x, f64::NAN, &mut rng).is_err());
    }
}
