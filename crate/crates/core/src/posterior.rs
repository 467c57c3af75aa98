//! Negative log posterior `L(x) = ½‖Ax − b‖² + E(x)` (normalizer dropped) and
//! its gradient `Aᴴ(Ax − b) + ∇ₓE(x)`.

use crate::energy::EnergyNetwork;
use crate::error::{Error, Result};
use crate::forward::{ForwardOperator, Measurements};
use crate::numerics::ComplexImage;

/// A differentiable prior energy on images.
pub trait Prior: Sync {
    fn energy(&self, x: &ComplexImage) -> Result<f64>;
    fn energy_and_grad(&self, x: &ComplexImage) -> Result<(f64, ComplexImage)>;
}

impl Prior for EnergyNetwork {
    fn energy(&self, x: &ComplexImage) -> Result<f64> {
        EnergyNetwork::energy(self, x)
    }

    fn energy_and_grad(&self, x: &ComplexImage) -> Result<(f64, ComplexImage)> {
        self.energy_and_grad_x(x)
    }
}

/// `E(x) = (weight / 2) ‖x‖²`. With the data term this gives a Gaussian
/// posterior with closed-form mean and covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticPrior {
    pub weight: f64,
}

impl Prior for QuadraticPrior {
    fn energy(&self, x: &ComplexImage) -> Result<f64> {
        Ok(0.5 * self.weight * x.norm_sqr())
    }

    fn energy_and_grad(&self, x: &ComplexImage) -> Result<(f64, ComplexImage)> {
        Ok((0.5 * self.weight * x.norm_sqr(), x.scaled(self.weight)))
    }
}

/// `E ≡ 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZeroPrior;

impl Prior for ZeroPrior {
    fn energy(&self, _x: &ComplexImage) -> Result<f64> {
        Ok(0.0)
    }

    fn energy_and_grad(&self, x: &ComplexImage) -> Result<(f64, ComplexImage)> {
        Ok((0.0, ComplexImage::zeros(x.height(), x.width())))
    }
}

#[derive(Clone, Copy)]
pub struct PosteriorModel<'a, P: Prior + ?Sized> {
    op: &'a ForwardOperator,
    prior: &'a P,
    b: &'a Measurements,
}

impl<'a, P: Prior + ?Sized> PosteriorModel<'a, P> {
    pub fn new(op: &'a ForwardOperator, prior: &'a P, b: &'a Measurements) -> Result<Self> {
        if b.n_coils() != op.n_coils() || b.shape() != op.image_shape() {
            return Err(Error::invalid(format!(
                "measurements ({} coils of {:?}) do not fit the operator ({} coils of {:?})",
                b.n_coils(),
                b.shape(),
                op.n_coils(),
                op.image_shape()
            )));
        }
        Ok(PosteriorModel { op, prior, b })
    }

    pub fn op(&self) -> &'a ForwardOperator {
        self.op
    }

    pub fn prior(&self) -> &'a P {
        self.prior
    }

    pub fn measurements(&self) -> &'a Measurements {
        self.b
    }

    pub fn image_shape(&self) -> (usize, usize) {
        self.op.image_shape()
    }

    /// `½‖Ax − b‖²`
    pub fn data_term(&self, x: &ComplexImage) -> Result<f64> {
        Ok(0.5 * self.op.apply(x)?.sub(self.b).norm_sqr())
    }

    pub fn cost(&self, x: &ComplexImage) -> Result<f64> {
        Ok(self.data_term(x)? + self.prior.energy(x)?)
    }

    pub fn grad(&self, x: &ComplexImage) -> Result<ComplexImage> {
        Ok(self.cost_and_grad(x)?.1)
    }

    pub fn cost_and_grad(&self, x: &ComplexImage) -> Result<(f64, ComplexImage)> {
        let residual = self.op.apply(x)?.sub(self.b);
        let mut g = self.op.adjoint(&residual)?;
        let (e, ge) = self.prior.energy_and_grad(x)?;
        g.axpy(1.0, &ge);
        Ok((0.5 * residual.norm_sqr() + e, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::NetConfig;
    use crate::forward::{make_coil_maps, make_vardens_mask, SamplingMask};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_op(n: usize) -> ForwardOperator {
        ForwardOperator::new(SamplingMask::full(n, n), make_coil_maps((n, n), 1).unwrap()).unwrap()
    }

    #[test]
    fn zero_net_exact_solution_has_zero_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let op = identity_op(8);
        let x = ComplexImage::random_normal(8, 8, &mut rng);
        let b = op.apply(&x).unwrap();
        let net = EnergyNetwork::zeros(NetConfig::with_width(2, 3)).unwrap();
        let m = PosteriorModel::new(&op, &net, &b).unwrap();
        assert!(m.cost(&x).unwrap() < 1e-25);
    }

    #[test]
    fn zero_net_cost_is_data_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let op = ForwardOperator::new(
            make_vardens_mask((8, 8), 2.0, 0).unwrap(),
            make_coil_maps((8, 8), 3).unwrap(),
        )
        .unwrap();
        let b = op.apply(&ComplexImage::random_normal(8, 8, &mut rng)).unwrap();
        let net = EnergyNetwork::zeros(NetConfig::with_width(1, 2)).unwrap();
        let m = PosteriorModel::new(&op, &net, &b).unwrap();
        let x = ComplexImage::random_normal(8, 8, &mut rng);
        let mut r2 = 0.0;
        for (ax, bc) in op.apply(&x).unwrap().coils().iter().zip(b.coils()) {
            r2 += ax.sub(bc).norm_sqr();
        }
        assert!((m.cost(&x).unwrap() - 0.5 * r2).abs() < 1e-12 * r2);
    }

    #[test]
    fn identity_problem_gradient_is_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let op = identity_op(6);
        let b = Measurements::zeros(1, (6, 6));
        let m = PosteriorModel::new(&op, &ZeroPrior, &b).unwrap();
        let x = ComplexImage::random_normal(6, 6, &mut rng);
        assert!(m.grad(&x).unwrap().sub(&x).norm() < 1e-13);
    }

    #[test]
    fn quadratic_prior_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = ComplexImage::random_normal(4, 4, &mut rng);
        let p = QuadraticPrior { weight: 2.0 };
        let (e, g) = p.energy_and_grad(&x).unwrap();
        assert!((e - x.norm_sqr()).abs() < 1e-12);
        assert!(g.sub(&x.scaled(2.0)).norm() < 1e-15);
    }

    #[test]
    fn mismatched_measurements_rejected() {
        let op = identity_op(4);
        let b = Measurements::zeros(2, (4, 4));
        assert!(PosteriorModel::new(&op, &ZeroPrior, &b).is_err());
        let b = Measurements::zeros(1, (4, 4));
        let m = PosteriorModel::new(&op, &ZeroPrior, &b).unwrap();
        assert!(m.cost(&ComplexImage::zeros(4, 3)).is_err());
    }
}
