use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::conv::{conv_forward_col, conv_param_grad, conv_transpose, im2col, FeatureMap, KAREA};
use crate::error::{Error, Result};
use crate::numerics::ComplexImage;
use crate::rng::{rng_for, tag};

/// Real input channels: the real and imaginary parts of the image.
pub const INPUT_CHANNELS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    /// Output channels of each 3×3 convolution, first layer first.
    pub channels: Vec<usize>,
    /// Negative-side slope of the hidden activations; 0 gives a plain ReLU.
    pub slope: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            channels: vec![64; 5],
            slope: 0.01,
        }
    }
}

impl NetConfig {
    pub fn with_width(layers: usize, width: usize) -> Self {
        NetConfig {
            channels: vec![width; layers],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::invalid(
                "energy network needs at least one layer of nonzero width",
            ));
        }
        if !(0.0..1.0).contains(&self.slope) {
            return Err(Error::invalid(format!(
                "activation slope must lie in [0, 1), got {}",
                self.slope
            )));
        }
        Ok(())
    }

    fn in_channels(&self, layer: usize) -> usize {
        if layer == 0 {
            INPUT_CHANNELS
        } else {
            self.channels[layer - 1]
        }
    }
}

/// Initialization knobs; the default is plain He initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    /// Multiplier on the He standard deviation of every kernel.
    pub kernel_gain: f64,
    /// Starting value of the head bias. A positive value keeps the output
    /// unit active at the start of training.
    pub head_bias: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            kernel_gain: 1.0,
            head_bias: 0.0,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kernel_gain > 0.0) || !self.kernel_gain.is_finite() {
            return Err(Error::invalid(format!(
                "kernel gain must be positive and finite, got {}",
                self.kernel_gain
            )));
        }
        if !self.head_bias.is_finite() {
            return Err(Error::invalid("head bias must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub in_ch: usize,
    pub out_ch: usize,
    /// `[out][in][3][3]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// All trainable tensors of the network. Also used for parameter gradients
/// and optimizer moments, which share the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub conv: Vec<ConvParams>,
    pub head_weight: Vec<f64>,
    pub head_bias: Vec<f64>,
}

impl Params {
    pub fn zeros(cfg: &NetConfig) -> Self {
        let conv = cfg
            .channels
            .iter()
            .enumerate()
            .map(|(l, &out_ch)| {
                let in_ch = cfg.in_channels(l);
                ConvParams {
                    in_ch,
                    out_ch,
                    weight: vec![0.0; out_ch * in_ch * KAREA],
                    bias: vec![0.0; out_ch],
                }
            })
            .collect();
        Params {
            conv,
            head_weight: vec![0.0; *cfg.channels.last().unwrap()],
            head_bias: vec![0.0],
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    /// Tensor names in storage order.
    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for l in 0..self.conv.len() {
            names.push(format!("conv{l}.weight"));
            names.push(format!("conv{l}.bias"));
        }
        names.push("head.weight".into());
        names.push("head.bias".into());
        names
    }

    /// Tensor dims in storage order.
    pub fn dims(&self) -> Vec<Vec<usize>> {
        let mut dims = Vec::new();
        for c in &self.conv {
            dims.push(vec![c.out_ch, c.in_ch, 3, 3]);
            dims.push(vec![c.out_ch]);
        }
        dims.push(vec![self.head_weight.len()]);
        dims.push(vec![1]);
        dims
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for c in &self.conv {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        out.push(&self.head_weight);
        out.push(&self.head_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for c in &mut self.conv {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    pub fn n_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += a · other`
    pub fn axpy(&mut self, a: f64, other: &Params) {
        for (d, s) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in d.iter_mut().zip(s) {
                *x += a * y;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= a);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn same_layout(&self, other: &Params) -> bool {
        self.dims() == other.dims()
    }
}

/// Cached activations of one forward pass; the input layer holds the real and
/// imaginary planes, followed by the output of every hidden layer.
#[derive(Debug)]
pub struct Tape {
    activations: Vec<FeatureMap>,
    pooled: Vec<f64>,
    head_pre: f64,
}

impl Tape {
    pub fn layers(&self) -> usize {
        self.activations.len() - 1
    }

    /// Pre-activation of the output unit.
    pub fn head_pre_activation(&self) -> f64 {
        self.head_pre
    }

    pub fn activation_channels(&self) -> Vec<usize> {
        self.activations.iter().map(|a| a.channels).collect()
    }

    /// Smallest distance of any hidden pre-activation (or of the output unit)
    /// to an activation kink. Finite-difference checks skip inputs where this
    /// is tiny.
    pub fn kink_margin(&self, slope: f64) -> f64 {
        let mut m = self.head_pre.abs();
        for a in &self.activations[1..] {
            for &v in &a.data {
                let pre = if v > 0.0 || slope == 0.0 { v } else { v / slope };
                if slope == 0.0 && v == 0.0 {
                    // plain ReLU forgets how negative the input was
                    continue;
                }
                m = m.min(pre.abs());
            }
        }
        m
    }
}

/// Scalar energy `E_θ(x) ≥ 0`: five (by default) zero-padded 3×3
/// convolutions with leaky-ReLU activations on the two real channels of `x`,
/// global sum pooling, a linear head and an output ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyNetwork {
    config: NetConfig,
    params: Params,
}

impl EnergyNetwork {
    pub fn from_params(config: NetConfig, params: Params) -> Result<Self> {
        config.validate()?;
        if !Params::zeros(&config).same_layout(&params) {
            return Err(Error::invalid("parameter layout does not match the network config"));
        }
        Ok(EnergyNetwork { config, params })
    }

    /// All parameters zero: the energy is identically zero.
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let params = Params::zeros(&config);
        Ok(EnergyNetwork { config, params })
    }

    /// Kernels `N(0, 2/fan_in)`, head weights `N(0, 1/fan_in)`, zero biases.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        Self::init_with(config, seed, &InitConfig::default())
    }

    /// As [`EnergyNetwork::init`] with kernels scaled by `init.kernel_gain`
    /// and the head bias set to `init.head_bias`. The random draws are the
    /// same for every `init`.
    pub fn init_with(config: NetConfig, seed: u64, init: &InitConfig) -> Result<Self> {
        config.validate()?;
        init.validate()?;
        let mut params = Params::zeros(&config);
        let mut rng = rng_for(seed, &[tag::INIT]);
        for c in &mut params.conv {
            let std = init.kernel_gain * (2.0 / (c.in_ch * KAREA) as f64).sqrt();
            for w in &mut c.weight {
                *w = std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let std = (1.0 / params.head_weight.len() as f64).sqrt();
        for w in &mut params.head_weight {
            *w = std * rng.sample::<f64, _>(StandardNormal);
        }
        params.head_bias[0] = init.head_bias;
        Ok(EnergyNetwork { config, params })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    fn activate(&self, z: &mut FeatureMap) {
        let s = self.config.slope;
        for v in &mut z.data {
            if *v <= 0.0 {
                *v *= s;
            }
        }
    }

    fn input_map(x: &ComplexImage) -> Result<FeatureMap> {
        let (h, w) = x.shape();
        if h == 0 || w == 0 {
            return Err(Error::invalid("energy network input must be nonempty"));
        }
        if !x.is_finite() {
            return Err(Error::invalid("energy network input is not finite"));
        }
        let p = h * w;
        let mut data = vec![0.0; INPUT_CHANNELS * p];
        for (i, v) in x.data().iter().enumerate() {
            data[i] = v.re;
            data[p + i] = v.im;
        }
        Ok(FeatureMap::from_vec(INPUT_CHANNELS, h, w, data))
    }

    pub fn forward(&self, x: &ComplexImage) -> Result<(f64, Tape)> {
        let mut activations = vec![Self::input_map(x)?];
        for c in &self.params.conv {
            let col = im2col(activations.last().unwrap());
            let mut z = conv_forward_col(&col, &c.weight, &c.bias, c.out_ch);
            drop(col);
            self.activate(&mut z);
            activations.push(z);
        }
        let last = activations.last().unwrap();
        let pooled: Vec<f64> = (0..last.channels).map(|c| last.plane(c).iter().sum()).collect();
        let head_pre = self.params.head_bias[0]
            + self
                .params
                .head_weight
                .iter()
                .zip(&pooled)
                .map(|(w, p)| w * p)
                .sum::<f64>();
        let energy = head_pre.max(0.0);
        Ok((
            energy,
            Tape {
                activations,
                pooled,
                head_pre,
            },
        ))
    }

    pub fn energy(&self, x: &ComplexImage) -> Result<f64> {
        Ok(self.forward(x)?.0)
    }

    /// Reverse pass. `grad_theta`, when given, is incremented by
    /// `weight · ∇_θ E`; the returned image is `∇ₓE` as `∂E/∂Re + i ∂E/∂Im`
    /// (equivalently `2 ∂E/∂x̄`) if requested.
    pub fn backward(
        &self,
        tape: &Tape,
        want_x: bool,
        mut grad_theta: Option<(&mut Params, f64)>,
    ) -> Option<ComplexImage> {
        let input = &tape.activations[0];
        let (h, w) = (input.height, input.width);
        // dead output unit: the energy is locally constant
        if tape.head_pre <= 0.0 {
            return want_x.then(|| ComplexImage::zeros(h, w));
        }
        if let Some((g, weight)) = grad_theta.as_mut() {
            for (gw, p) in g.head_weight.iter_mut().zip(&tape.pooled) {
                *gw += *weight * p;
            }
            g.head_bias[0] += *weight;
        }

        let n_layers = self.params.conv.len();
        let top = &tape.activations[n_layers];
        let mut grad = FeatureMap::zeros(top.channels, h, w);
        let p = h * w;
        for (c, &hw) in self.params.head_weight.iter().enumerate() {
            grad.data[c * p..(c + 1) * p].fill(hw);
        }

        let slope = self.config.slope;
        for l in (0..n_layers).rev() {
            // through the activation: dz = da ⊙ τ'(z), τ' read off the stored output
            let out = &tape.activations[l + 1];
            for (g, &a) in grad.data.iter_mut().zip(&out.data) {
                if a <= 0.0 {
                    *g *= slope;
                }
            }
            let layer = &self.params.conv[l];
            if let Some((g, weight)) = grad_theta.as_mut() {
                let col = im2col(&tape.activations[l]);
                let gl = &mut g.conv[l];
                if *weight == 1.0 {
                    conv_param_grad(&grad, &col, &mut gl.weight, &mut gl.bias);
                } else {
                    let mut scaled = grad.clone();
                    scaled.data.iter_mut().for_each(|v| *v *= *weight);
                    conv_param_grad(&scaled, &col, &mut gl.weight, &mut gl.bias);
                }
            }
            if l > 0 || want_x {
                grad = conv_transpose(&grad, &layer.weight, layer.in_ch);
            }
        }

        want_x.then(|| {
            let (re, im) = grad.data.split_at(p);
            let data = re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect();
            ComplexImage::from_vec(h, w, data).expect("gradient has the input shape")
        })
    }

    pub fn energy_and_grad_x(&self, x: &ComplexImage) -> Result<(f64, ComplexImage)> {
        let (e, tape) = self.forward(x)?;
        let g = self.backward(&tape, true, None).expect("requested");
        Ok((e, g))
    }

    pub fn grad_x(&self, x: &ComplexImage) -> Result<ComplexImage> {
        Ok(self.energy_and_grad_x(x)?.1)
    }

    pub fn grad_theta(&self, x: &ComplexImage) -> Result<Params> {
        let mut g = self.params.zeros_like();
        self.accumulate_grad_theta(x, 1.0, &mut g)?;
        Ok(g)
    }

    /// Adds `weight · ∇_θ E(x)` to `acc` and returns `E(x)`.
    pub fn accumulate_grad_theta(&self, x: &ComplexImage, weight: f64, acc: &mut Params) -> Result<f64> {
        let (e, tape) = self.forward(x)?;
        self.backward(&tape, false, Some((acc, weight)));
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_knobs_scale_the_same_draws() {
        let cfg = NetConfig::with_width(2, 3);
        let plain = EnergyNetwork::init(cfg.clone(), 9).unwrap();
        let knobs = InitConfig {
            kernel_gain: 0.5,
            head_bias: 2.0,
        };
        let tuned = EnergyNetwork::init_with(cfg, 9, &knobs).unwrap();
        for (a, b) in plain.params().conv.iter().zip(&tuned.params().conv) {
            assert!(a.weight.iter().zip(&b.weight).all(|(x, y)| *y == 0.5 * x));
        }
        assert_eq!(plain.params().head_weight, tuned.params().head_weight);
        assert_eq!((plain.params().head_bias[0], tuned.params().head_bias[0]), (0.0, 2.0));
    }

    #[test]
    fn zero_network_has_zero_energy_and_gradients() {
        let net = EnergyNetwork::zeros(NetConfig::with_width(3, 4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = ComplexImage::random_normal(6, 5, &mut rng);
        assert_eq!(net.energy(&x).unwrap(), 0.0);
        assert_eq!(net.grad_x(&x).unwrap().norm(), 0.0);
        assert_eq!(net.grad_theta(&x).unwrap().norm(), 0.0);
    }

    #[test]
    fn hand_computed_single_channel_trace() {
        // one 1-channel layer, plain ReLU, 2×2 input
        let cfg = NetConfig {
            channels: vec![1],
            slope: 0.0,
        };
        let mut weight = vec![0.0; 18];
        weight[4] = 1.0; // real channel, center tap
        weight[9 + 3] = 2.0; // imaginary channel, left neighbour (ky=1, kx=0)
        let params = Params {
            conv: vec![ConvParams {
                in_ch: 2,
                out_ch: 1,
                weight,
                bias: vec![-0.5],
            }],
            head_weight: vec![3.0],
            head_bias: vec![0.25],
        };
        let net = EnergyNetwork::from_params(cfg, params).unwrap();
        let x = ComplexImage::from_vec(
            2,
            2,
            vec![
                Complex64::new(1.0, 1.0),
                Complex64::new(2.0, -1.0),
                Complex64::new(-1.0, 0.5),
                Complex64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        // z(y, x) = re(y, x) + 2·im(y, x − 1) − 0.5
        // (0,0): 1 + 0 − 0.5 = 0.5
        // (0,1): 2 + 2·1 − 0.5 = 3.5
        // (1,0): −1 + 0 − 0.5 = −1.5 → 0
        // (1,1): 0 + 2·0.5 − 0.5 = 0.5
        // energy = relu(3·4.5 + 0.25) = 13.75
        assert!((net.energy(&x).unwrap() - 13.75).abs() < 1e-15);

        // ∂E/∂re = 3 at active pixels; ∂E/∂im(y, x) = 6 where z(y, x + 1) is active
        let g = net.grad_x(&x).unwrap();
        assert_eq!(g.get(0, 0), Complex64::new(3.0, 6.0));
        assert_eq!(g.get(0, 1), Complex64::new(3.0, 0.0));
        assert_eq!(g.get(1, 0), Complex64::new(0.0, 6.0));
        assert_eq!(g.get(1, 1), Complex64::new(3.0, 0.0));
    }

    #[test]
    fn energy_nonnegative_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..4 {
            let net = EnergyNetwork::init(NetConfig::with_width(2, 3), seed).unwrap();
            for _ in 0..250 {
                let x = ComplexImage::random_normal(4, 4, &mut rng).scaled(rng.random_range(0.0..10.0));
                assert!(net.energy(&x).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn dead_output_unit_zeroes_parameter_gradients() {
        let mut net = EnergyNetwork::init(NetConfig::with_width(2, 3), 2).unwrap();
        net.params_mut().head_bias[0] = -1e6;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = ComplexImage::random_normal(5, 5, &mut rng);
        let (e, tape) = net.forward(&x).unwrap();
        assert_eq!(e, 0.0);
        assert!(tape.head_pre_activation() < 0.0);
        assert_eq!(net.grad_theta(&x).unwrap().norm(), 0.0);
        assert_eq!(net.grad_x(&x).unwrap().norm(), 0.0);
    }

    #[test]
    fn head_scaling_scales_input_gradient() {
        let mut net = EnergyNetwork::init(NetConfig::with_width(3, 4), 3).unwrap();
        net.params_mut().head_bias[0] = 50.0; // keep the output unit active
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = ComplexImage::random_normal(6, 6, &mut rng);
        let g1 = net.grad_x(&x).unwrap();
        let mut scaled = net.clone();
        scaled.params_mut().head_weight.iter_mut().for_each(|w| *w *= 2.5);
        let g2 = scaled.grad_x(&x).unwrap();
        assert!(g2.sub(&g1.scaled(2.5)).norm() < 1e-12 * g2.norm());
    }

    #[test]
    fn repeated_accumulation_doubles_gradient() {
        let net = EnergyNetwork::init(NetConfig::with_width(2, 4), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = ComplexImage::random_normal(5, 4, &mut rng);
        let single = net.grad_theta(&x).unwrap();
        let mut acc = net.params().zeros_like();
        net.accumulate_grad_theta(&x, 1.0, &mut acc).unwrap();
        net.accumulate_grad_theta(&x, 1.0, &mut acc).unwrap();
        let mut twice = single.clone();
        twice.scale(2.0);
        let mut diff = acc.clone();
        diff.axpy(-1.0, &twice);
        assert!(diff.norm() <= 1e-12 * twice.norm().max(1.0));
    }

    #[test]
    fn init_is_deterministic_and_scaled() {
        let cfg = NetConfig::default();
        let a = EnergyNetwork::init(cfg.clone(), 7).unwrap();
        let b = EnergyNetwork::init(cfg.clone(), 7).unwrap();
        assert_eq!(a, b);
        for c in &a.params().conv {
            let expect = (2.0 / (c.in_ch * 9) as f64).sqrt();
            let std = (c.weight.iter().map(|w| w * w).sum::<f64>() / c.weight.len() as f64).sqrt();
            let tol = if c.weight.len() > 10_000 { 0.05 } else { 0.1 };
            assert!((std / expect - 1.0).abs() < tol, "{std} vs {expect}");
            assert!(c.bias.iter().all(|&b| b == 0.0));
        }
        // pooled over every kernel entry, normalized per layer
        let (mut s2, mut n) = (0.0, 0usize);
        for c in &a.params().conv {
            let var = 2.0 / (c.in_ch * 9) as f64;
            s2 += c.weight.iter().map(|w| w * w / var).sum::<f64>();
            n += c.weight.len();
        }
        assert!(((s2 / n as f64).sqrt() - 1.0).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(EnergyNetwork::zeros(NetConfig {
            channels: vec![],
            slope: 0.0
        })
        .is_err());
        assert!(EnergyNetwork::zeros(NetConfig {
            channels: vec![4, 0],
            slope: 0.0
        })
        .is_err());
        assert!(EnergyNetwork::zeros(NetConfig {
            channels: vec![4],
            slope: 1.5
        })
        .is_err());
    }
}
