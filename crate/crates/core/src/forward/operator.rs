use num_complex::Complex64;

use super::SamplingMask;
use crate::error::{Error, Result};
use crate::numerics::{conjugate_gradient, CgConfig, ComplexImage, Fft2};

/// Per-coil k-space planes.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    coils: Vec<ComplexImage>,
}

impl Measurements {
    pub fn new(coils: Vec<ComplexImage>) -> Result<Self> {
        let first = coils
            .first()
            .ok_or_else(|| Error::invalid("measurements need at least one coil"))?;
        let shape = first.shape();
        for c in &coils {
            c.check_shape(shape, "coil plane")?;
        }
        Ok(Measurements { coils })
    }

    pub fn zeros(n_coils: usize, shape: (usize, usize)) -> Self {
        Measurements {
            coils: (0..n_coils).map(|_| ComplexImage::zeros(shape.0, shape.1)).collect(),
        }
    }

    pub fn coils(&self) -> &[ComplexImage] {
        &self.coils
    }

    pub fn coils_mut(&mut self) -> &mut [ComplexImage] {
        &mut self.coils
    }

    pub fn into_coils(self) -> Vec<ComplexImage> {
        self.coils
    }

    pub fn n_coils(&self) -> usize {
        self.coils.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.coils[0].shape()
    }

    pub fn dot(&self, other: &Measurements) -> Complex64 {
        self.coils.iter().zip(&other.coils).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coils.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn sub(&self, other: &Measurements) -> Measurements {
        Measurements {
            coils: self.coils.iter().zip(&other.coils).map(|(a, b)| a.sub(b)).collect(),
        }
    }

    pub fn add(&self, other: &Measurements) -> Measurements {
        Measurements {
            coils: self.coils.iter().zip(&other.coils).map(|(a, b)| a.add(b)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coils.iter().all(|c| c.is_finite())
    }
}

/// `A = S F C`: coil weighting, centered unitary FFT, column sampling.
#[derive(Debug, Clone)]
pub struct ForwardOperator {
    mask: SamplingMask,
    coil_maps: Vec<ComplexImage>,
    fft: Fft2,
}

impl ForwardOperator {
    pub fn new(mask: SamplingMask, coil_maps: Vec<ComplexImage>) -> Result<Self> {
        let shape = mask.shape();
        if coil_maps.is_empty() {
            return Err(Error::invalid("forward operator needs at least one coil map"));
        }
        for m in &coil_maps {
            m.check_shape(shape, "coil map")?;
            if !m.is_finite() {
                return Err(Error::invalid("coil map has non-finite entries"));
            }
        }
        for p in 0..shape.0 * shape.1 {
            let s: f64 = coil_maps.iter().map(|m| m.data()[p].norm_sqr()).sum();
            if s <= 0.0 {
                return Err(Error::invalid(format!(
                    "coil maps vanish at pixel ({}, {})",
                    p / shape.1,
                    p % shape.1
                )));
            }
        }
        let fft = Fft2::new(shape.0, shape.1)?;
        Ok(ForwardOperator { mask, coil_maps, fft })
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn coil_maps(&self) -> &[ComplexImage] {
        &self.coil_maps
    }

    pub fn n_coils(&self) -> usize {
        self.coil_maps.len()
    }

    pub fn image_shape(&self) -> (usize, usize) {
        self.mask.shape()
    }

    /// Zeroes unsampled columns in place.
    fn apply_mask(&self, plane: &mut ComplexImage) {
        let w = plane.width();
        let cols = self.mask.columns();
        for row in plane.data_mut().chunks_exact_mut(w) {
            for (v, &keep) in row.iter_mut().zip(cols) {
                if !keep {
                    *v = Complex64::new(0.0, 0.0);
                }
            }
        }
    }

    pub fn apply(&self, x: &ComplexImage) -> Result<Measurements> {
        x.check_shape(self.image_shape(), "image")?;
        let coils = self
            .coil_maps
            .iter()
            .map(|c| {
                let mut k = self.fft.forward(&c.mul(x))?;
                self.apply_mask(&mut k);
                Ok(k)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Measurements { coils })
    }

    pub fn adjoint(&self, y: &Measurements) -> Result<ComplexImage> {
        if y.n_coils() != self.n_coils() {
            return Err(Error::invalid(format!(
                "expected {} coil planes, got {}",
                self.n_coils(),
                y.n_coils()
            )));
        }
        let (h, w) = self.image_shape();
        let mut out = ComplexImage::zeros(h, w);
        for (c, plane) in self.coil_maps.iter().zip(y.coils()) {
            plane.check_shape((h, w), "coil plane")?;
            let mut masked = plane.clone();
            self.apply_mask(&mut masked);
            let img = self.fft.inverse(&masked)?;
            for ((o, cv), iv) in out.data_mut().iter_mut().zip(c.data()).zip(img.data()) {
                *o += cv.conj() * iv;
            }
        }
        Ok(out)
    }

    /// `AᴴA x`
    pub fn normal(&self, x: &ComplexImage) -> Result<ComplexImage> {
        self.adjoint(&self.apply(x)?)
    }

    /// Regularized least squares `(AᴴA + λ̃I)⁻¹ Aᴴ b`, solved matrix-free by CG
    /// to a relative residual of 1e-8. Also serves as the SENSE baseline.
    pub fn sense_init(&self, b: &Measurements, lambda: f64) -> Result<ComplexImage> {
        // A residual of 1e-8 alone lets the solution error grow by the
        // condition number (≈ 1/λ); solve tighter so the solution itself is
        // accurate to that level for the usual λ.
        let cfg = CgConfig {
            tolerance: 1e-10,
            ..CgConfig::default()
        };
        self.sense_init_with(b, lambda, &cfg)
    }

    pub fn sense_init_with(&self, b: &Measurements, lambda: f64, cfg: &CgConfig) -> Result<ComplexImage> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!(
                "regularization weight must be positive, got {lambda}"
            )));
        }
        let rhs = self.adjoint(b)?;
        let out = conjugate_gradient(
            |v| {
                let mut n = self.normal(v)?;
                n.axpy(lambda, v);
                Ok(n)
            },
            &rhs,
            cfg,
        )?;
        Ok(out.solution)
    }
}
