use crate::energy::{EnergyNetwork, Params};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid(format!("adam eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// First and second moment estimates, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Params,
    pub v: Params,
    pub t: u64,
}

impl AdamState {
    pub fn new(layout: &Params) -> Self {
        AdamState {
            m: layout.zeros_like(),
            v: layout.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(state: &mut AdamState, net: &mut EnergyNetwork, grad: &Params, cfg: &AdamConfig) -> Result<()> {
    cfg.validate()?;
    if !state.m.same_layout(grad) || !net.params().same_layout(grad) {
        return Err(Error::invalid("gradient layout does not match the network"));
    }
    for (name, g) in grad.names().iter().zip(grad.tensors()) {
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalBreakdown {
                iteration: state.t as usize + 1,
                reason: format!("non-finite gradient in {name}[{i}] ({})", g[i]),
            });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let mut params = net.params_mut().tensors_mut();
    let mut ms = state.m.tensors_mut();
    let mut vs = state.v.tensors_mut();
    for (k, g) in grad.tensors().into_iter().enumerate() {
        let (p, m, v) = (&mut params[k], &mut ms[k], &mut vs[k]);
        for i in 0..g.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            p[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::NetConfig;

    fn tiny() -> EnergyNetwork {
        EnergyNetwork::init(NetConfig::with_width(1, 1), 3).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = tiny();
        let before = net.clone();
        let mut st = AdamState::new(net.params());
        st.m.head_bias[0] = 0.5;
        st.v.head_bias[0] = 0.0;
        let zero = net.params().zeros_like();
        // with m = 0 nothing moves
        let mut fresh = AdamState::new(net.params());
        adam_step(&mut fresh, &mut net, &zero, &AdamConfig::default()).unwrap();
        assert_eq!(net, before);
        // nonzero moments decay geometrically
        adam_step(&mut st, &mut net, &zero, &AdamConfig::default()).unwrap();
        assert_eq!(st.m.head_bias[0], 0.9 * 0.5);
    }

    #[test]
    fn first_step_moves_each_parameter_by_lr() {
        let mut net = tiny();
        let before = net.params().clone();
        let mut grad = net.params().zeros_like();
        for t in grad.tensors_mut() {
            t.fill(-3.7);
        }
        let cfg = AdamConfig::default();
        adam_step(&mut AdamState::new(net.params()), &mut net, &grad, &cfg).unwrap();
        // mhat = g, vhat = g², step = lr · g / (|g| + eps)
        let expect = cfg.lr * 3.7 / (3.7 + cfg.eps);
        for (a, b) in net.params().tensors().iter().zip(before.tensors()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y - expect).abs() < 1e-14, "{x} {y}");
            }
        }
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut net = tiny();
        let before = net.clone();
        let mut grad = net.params().zeros_like();
        grad.head_weight[0] = f64::NAN;
        let mut st = AdamState::new(net.params());
        let err = adam_step(&mut st, &mut net, &grad, &AdamConfig::default()).unwrap_err();
        assert!(err.to_string().contains("head.weight"));
        assert_eq!(net, before);
        assert_eq!(st.t, 0);
    }

    #[test]
    fn bad_config_rejected() {
        for cfg in [
            AdamConfig {
                lr: 0.0,
                ..Default::default()
            },
            AdamConfig {
                beta1: 1.0,
                ..Default::default()
            },
            AdamConfig {
                beta2: -0.1,
                ..Default::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
