//! Finite-difference checks of every hand-written gradient.

use ebm_recon::energy::{EnergyNetwork, NetConfig, Params};
use ebm_recon::forward::{make_coil_maps, make_vardens_mask, ForwardOperator};
use ebm_recon::numerics::ComplexImage;
use ebm_recon::posterior::PosteriorModel;
use ebm_recon::trainer::{contrastive_loss, loss_grad_theta};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;
/// Inputs whose nearest pre-activation is closer than this to a kink are
/// skipped. A perturbation of size `H` moves pre-activations by far less.
const KINK: f64 = 1e-4;

fn tiny_net(rng: &mut ChaCha8Rng) -> EnergyNetwork {
    let cfg = NetConfig {
        channels: vec![4, 3, 3],
        slope: 0.01,
    };
    let mut net = EnergyNetwork::init(cfg, rng.random()).unwrap();
    // nonzero biases exercise the bias paths; keep the output unit alive
    for c in &mut net.params_mut().conv {
        for b in &mut c.bias {
            *b = rng.random_range(-0.2..0.2);
        }
    }
    net.params_mut().head_bias[0] = 5.0;
    net
}

fn away_from_kinks(net: &EnergyNetwork, x: &ComplexImage) -> bool {
    let (e, tape) = net.forward(x).unwrap();
    e > 0.0 && tape.kink_margin(net.config().slope) > KINK
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}

/// 50 accepted instances of `check`, drawing fresh nets and inputs.
fn trials(seed: u64, tol: f64, mut check: impl FnMut(&EnergyNetwork, &ComplexImage, &mut ChaCha8Rng) -> Option<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted = 0;
    let mut attempts = 0;
    while accepted < 50 {
        attempts += 1;
        assert!(attempts < 500, "too many inputs near kinks");
        let net = tiny_net(&mut rng);
        let x = ComplexImage::random_normal(8, 8, &mut rng);
        if !away_from_kinks(&net, &x) {
            continue;
        }
        if let Some(err) = check(&net, &x, &mut rng) {
            assert!(err < tol, "relative error {err:e} in trial {accepted}");
            accepted += 1;
        }
    }
}

#[test]
fn grad_x_matches_central_differences() {
    trials(1, TOL, |net, x, _| {
        let g = net.grad_x(x).unwrap();
        let mut fd = Vec::new();
        let mut an = Vec::new();
        for p in 0..x.len() {
            for (unit, part) in [(Complex64::new(1.0, 0.0), 0), (Complex64::new(0.0, 1.0), 1)] {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp.data_mut()[p] += unit * H;
                xm.data_mut()[p] -= unit * H;
                fd.push((net.energy(&xp).unwrap() - net.energy(&xm).unwrap()) / (2.0 * H));
                an.push(if part == 0 { g.data()[p].re } else { g.data()[p].im });
            }
        }
        Some(rel_err(&an, &fd))
    });
}

fn params_fd(params: &Params, f: impl Fn(&Params) -> f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let n_tensors = params.tensors().len();
    for t in 0..n_tensors {
        let len = params.tensors()[t].len();
        let mut block = Vec::with_capacity(len);
        for i in 0..len {
            let mut p = params.clone();
            p.tensors_mut()[t][i] += H;
            let up = f(&p);
            p.tensors_mut()[t][i] -= 2.0 * H;
            let down = f(&p);
            block.push((up - down) / (2.0 * H));
        }
        out.push(block);
    }
    out
}

fn with_params(net: &EnergyNetwork, p: &Params) -> EnergyNetwork {
    EnergyNetwork::from_params(net.config().clone(), p.clone()).unwrap()
}

#[test]
fn grad_theta_matches_central_differences_per_block() {
    trials(2, TOL, |net, x, _| {
        let g = net.grad_theta(x).unwrap();
        let fd = params_fd(net.params(), |p| with_params(net, p).energy(x).unwrap());
        let worst = g
            .tensors()
            .iter()
            .zip(&fd)
            .map(|(a, b)| rel_err(a, b))
            .fold(0.0, f64::max);
        Some(worst)
    });
}

#[test]
fn contrastive_loss_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut accepted = 0;
    while accepted < 10 {
        let net = tiny_net(&mut rng);
        let t: Vec<_> = (0..2).map(|_| ComplexImage::random_normal(6, 6, &mut rng)).collect();
        let f: Vec<_> = (0..2).map(|_| ComplexImage::random_normal(6, 6, &mut rng)).collect();
        if !t.iter().chain(&f).all(|x| away_from_kinks(&net, x)) {
            continue;
        }
        let g = loss_grad_theta(&net, &t, &f).unwrap();
        let fd = params_fd(net.params(), |p| {
            contrastive_loss(&with_params(&net, p), &t, &f).unwrap()
        });
        // Blocks whose true gradient cancels (the head bias) are measured
        // against the scale of the whole gradient instead of their own.
        let total: f64 = fd.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        for (name, (a, b)) in g.names().iter().zip(g.tensors().iter().zip(&fd)) {
            let own: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            let err = rel_err(a, b) * own / own.max(1e-3 * total);
            assert!(err < TOL, "{name}: relative error {err:e}");
        }
        accepted += 1;
    }
}

#[test]
fn posterior_gradient_matches_directional_differences() {
    let op = ForwardOperator::new(
        make_vardens_mask((8, 8), 4.0, 5).unwrap(),
        make_coil_maps((8, 8), 4).unwrap(),
    )
    .unwrap();
    trials(4, TOL, |net, x, rng| {
        let b = op.apply(&ComplexImage::random_normal(8, 8, rng)).unwrap();
        let m = PosteriorModel::new(&op, net, &b).unwrap();
        let d = ComplexImage::random_normal(8, 8, rng);
        let mut xp = x.clone();
        xp.axpy(H, &d);
        let mut xm = x.clone();
        xm.axpy(-H, &d);
        if !away_from_kinks(net, &xp) || !away_from_kinks(net, &xm) {
            return None;
        }
        let fd = (m.cost(&xp).unwrap() - m.cost(&xm).unwrap()) / (2.0 * H);
        let an = m.grad(x).unwrap().real_dot(&d);
        Some((fd - an).abs() / an.abs())
    });
}

/// `∇ₓE` is a gradient field: its integral along a straight path equals the
/// energy difference, even when the path crosses activation kinks.
#[test]
fn grad_x_integrates_to_energy_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let net = tiny_net(&mut rng);
        let x = ComplexImage::random_normal(8, 8, &mut rng);
        let u = ComplexImage::random_normal(8, 8, &mut rng).scaled(0.3);
        let n = 4000;
        let mut integral = 0.0;
        for k in 0..n {
            let mut p = x.clone();
            p.axpy((k as f64 + 0.5) / n as f64, &u);
            integral += net.grad_x(&p).unwrap().real_dot(&u) / n as f64;
        }
        let mut end = x.clone();
        end.axpy(1.0, &u);
        let diff = net.energy(&end).unwrap() - net.energy(&x).unwrap();
        assert!(
            (integral - diff).abs() <= 1e-3 * diff.abs().max(1.0),
            "{integral} vs {diff}"
        );
    }
}

/// Mixed second differences of `E` are symmetric. With piecewise-linear
/// activations both sides vanish inside a linear region, so the comparison
/// carries an absolute floor at rounding level.
#[test]
fn hessian_symmetry_proxy() {
    let h = 1e-4;
    trials(6, 1e-3, |net, x, rng| {
        let u = ComplexImage::random_normal(8, 8, rng);
        let v = ComplexImage::random_normal(8, 8, rng);
        let g0 = net.grad_x(x).unwrap();
        let shifted = |d: &ComplexImage| {
            let mut p = x.clone();
            p.axpy(h, d);
            net.grad_x(&p).unwrap().sub(&g0)
        };
        let lhs = shifted(&u).real_dot(&v);
        let rhs = shifted(&v).real_dot(&u);
        let floor = 1e-9 * g0.norm() * u.norm() * v.norm();
        let gap = (lhs - rhs).abs();
        Some(if gap <= floor {
            0.0
        } else {
            gap / lhs.abs().max(rhs.abs())
        })
    });
}

#[test]
fn initial_energies_have_bounded_spread() {
    let net = EnergyNetwork::init(NetConfig::default(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let e: Vec<f64> = (0..64)
        .map(|_| net.energy(&ComplexImage::random_normal(8, 8, &mut rng)).unwrap())
        .collect();
    assert!(e.iter().all(|v| v.is_finite() && *v >= 0.0));
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    let std = (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (e.len() - 1) as f64).sqrt();
    assert!(std < 10.0, "std {std}");
}

#[test]
fn energy_is_nonnegative_on_arbitrary_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let net = EnergyNetwork::init(NetConfig::with_width(3, 8), 1).unwrap();
    for k in 0..1000 {
        let scale = 10f64.powi(k % 7 - 3);
        let x = ComplexImage::random_normal(5, 4, &mut rng).scaled(scale);
        assert!(net.energy(&x).unwrap() >= 0.0);
    }
}
