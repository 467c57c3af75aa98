use super::ComplexImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    pub max_iters: usize,
    /// Stop once `‖A x − rhs‖ / ‖rhs‖` falls to this value.
    pub tolerance: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            max_iters: 1000,
            tolerance: 1e-8,
        }
    }
}

impl CgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::invalid("CG max_iters must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("CG tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: ComplexImage,
    pub iterations: usize,
    /// Relative residual after each iteration.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

/// Conjugate gradient for a Hermitian positive definite map given only by its
/// action. Starts from zero. If the tolerance is not met within `max_iters`
/// the iterate with the smallest residual is returned.
pub fn conjugate_gradient<F>(apply: F, rhs: &ComplexImage, cfg: &CgConfig) -> Result<CgOutcome>
where
    F: Fn(&ComplexImage) -> Result<ComplexImage>,
{
    cfg.validate()?;
    if !rhs.is_finite() {
        return Err(Error::NumericalBreakdown {
            iteration: 0,
            reason: "right-hand side is not finite".into(),
        });
    }
    let (h, w) = rhs.shape();
    let rhs_norm = rhs.norm();
    let mut x = ComplexImage::zeros(h, w);
    if rhs_norm == 0.0 {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            residuals: Vec::new(),
            converged: true,
        });
    }

    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rs = r.norm_sqr();
    let mut residuals = Vec::new();
    let mut best: Option<(f64, ComplexImage)> = None;

    for it in 1..=cfg.max_iters {
        let ap = apply(&p)?;
        ap.check_shape((h, w), "normal-operator output")?;
        let curvature = p.real_dot(&ap);
        if !curvature.is_finite() || curvature <= 0.0 {
            return Err(Error::NumericalBreakdown {
                iteration: it,
                reason: format!("search direction curvature {curvature:e} (operator not positive definite?)"),
            });
        }
        let alpha = rs / curvature;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rs_new = r.norm_sqr();
        if !rs_new.is_finite() || !x.is_finite() {
            return Err(Error::NumericalBreakdown {
                iteration: it,
                reason: "non-finite iterate".into(),
            });
        }
        let rel = rs_new.sqrt() / rhs_norm;
        residuals.push(rel);
        if rel <= cfg.tolerance {
            return Ok(CgOutcome {
                solution: x,
                iterations: it,
                residuals,
                converged: true,
            });
        }
        if best.as_ref().is_none_or(|(b, _)| rel < *b) {
            best = Some((rel, x.clone()));
        }
        let beta = rs_new / rs;
        rs = rs_new;
        let mut next = r.clone();
        next.axpy(beta, &p);
        p = next;
    }

    let solution = best.map(|(_, b)| b).unwrap_or(x);
    Ok(CgOutcome {
        solution,
        iterations: cfg.max_iters,
        residuals,
        converged: false,
    })
}
