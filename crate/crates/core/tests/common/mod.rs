//! Finite-difference gradient oracle shared by the gradient tests and the
//! acceptance suite.

#![allow(dead_code)]

use biped_cpg::mlp::{Activation, Critic, LayerSpec, Mlp, ParamSet};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|)`, with magnitudes below 1e-6 treated as 1e-6.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn relu_margin_ok(z: &Array2<f64>) -> bool {
    z.iter().all(|v| v.abs() > 1e-3)
}

/// Pre-activations of every layer stay away from the ReLU kink.
fn mlp_inputs_smooth(net: &Mlp, x: &Array2<f64>) -> bool {
    let mut a = x.clone();
    for (i, s) in net.specs().iter().enumerate() {
        let z = a.dot(&net.params.tensors[2 * i].t()) + &net.params.tensors[2 * i + 1];
        if s.activation == Activation::Relu && !relu_margin_ok(&z) {
            return false;
        }
        a = match s.activation {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Sigmoid => z.mapv(|v| 1.0 / (1.0 + (-v).exp())),
            Activation::Linear => z,
        };
    }
    true
}

fn critic_inputs_smooth(c: &Critic, s: &Array2<f64>, a: &Array2<f64>) -> bool {
    let t = &c.params.tensors;
    let z1 = s.dot(&t[0].t()) + &t[1];
    let h1 = z1.mapv(|v| v.max(0.0));
    let z2 = h1.dot(&t[2].t()) + a.dot(&t[3].t()) + &t[4];
    relu_margin_ok(&z1) && relu_margin_ok(&z2)
}

fn perturbed<T: Clone>(
    base: &T,
    params: impl Fn(&mut T) -> &mut ParamSet,
    k: usize,
    idx: (usize, usize),
    d: f64,
) -> T {
    let mut copy = base.clone();
    params(&mut copy).tensors[k][idx] += d;
    copy
}

/// Worst relative error over every parameter and input gradient of a random
/// toy MLP.
pub fn mlp_worst_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.random_range(1..=3);
    let mut dims = vec![rng.random_range(1..=5)];
    let mut specs = Vec::new();
    for _ in 0..depth {
        let out = rng.random_range(1..=5);
        let act =
            [Activation::Relu, Activation::Sigmoid, Activation::Linear][rng.random_range(0..3)];
        specs.push(LayerSpec::new(*dims.last().unwrap(), out, act));
        dims.push(out);
    }
    let mut net = Mlp::new(specs, &mut rng).unwrap();
    // Larger output weights than the actor init so gradients are not tiny.
    for t in net.params.tensors.iter_mut() {
        t.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    }
    let batch = rng.random_range(1..=3);
    let mut x = random_matrix(batch, dims[0], &mut rng);
    for _ in 0..100 {
        if mlp_inputs_smooth(&net, &x) {
            break;
        }
        x = random_matrix(batch, dims[0], &mut rng);
    }
    let c = random_matrix(batch, *dims.last().unwrap(), &mut rng);
    let loss = |n: &Mlp, x: &Array2<f64>| (n.forward(x.view()).unwrap() * &c).sum();

    let cache = net.forward_cached(x.view()).unwrap();
    let (grads, grad_x) = net.backward(&cache, c.view()).unwrap();
    let mut worst: f64 = 0.0;
    for (k, g) in grads.tensors.iter().enumerate() {
        for (idx, &analytic) in g.indexed_iter() {
            let up = perturbed(&net, |n| &mut n.params, k, idx, H);
            let down = perturbed(&net, |n| &mut n.params, k, idx, -H);
            let numeric = (loss(&up, &x) - loss(&down, &x)) / (2.0 * H);
            worst = worst.max(rel_err(analytic, numeric));
        }
    }
    for (idx, &analytic) in grad_x.indexed_iter() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[idx] += H;
        xm[idx] -= H;
        let numeric = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * H);
        worst = worst.max(rel_err(analytic, numeric));
    }
    worst
}

/// Worst relative error over every parameter and action gradient of a random
/// toy critic.
pub fn critic_worst_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sd, ad) = (rng.random_range(1..=4), rng.random_range(1..=3));
    let hidden = (rng.random_range(1..=5), rng.random_range(1..=5));
    let mut critic = Critic::new(sd, ad, hidden, &mut rng).unwrap();
    for t in critic.params.tensors.iter_mut() {
        t.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    }
    let batch = rng.random_range(1..=3);
    let (mut s, mut a) = (
        random_matrix(batch, sd, &mut rng),
        random_matrix(batch, ad, &mut rng),
    );
    for _ in 0..100 {
        if critic_inputs_smooth(&critic, &s, &a) {
            break;
        }
        s = random_matrix(batch, sd, &mut rng);
        a = random_matrix(batch, ad, &mut rng);
    }
    let c = random_matrix(batch, 1, &mut rng);
    let loss = |cr: &Critic, a: &Array2<f64>| (cr.forward(s.view(), a.view()).unwrap() * &c).sum();

    let cache = critic.forward_cached(s.view(), a.view()).unwrap();
    let (grads, grad_a) = critic.backward(&cache, c.view()).unwrap();
    let mut worst: f64 = 0.0;
    for (k, g) in grads.tensors.iter().enumerate() {
        for (idx, &analytic) in g.indexed_iter() {
            let up = perturbed(&critic, |n| &mut n.params, k, idx, H);
            let down = perturbed(&critic, |n| &mut n.params, k, idx, -H);
            let numeric = (loss(&up, &a) - loss(&down, &a)) / (2.0 * H);
            worst = worst.max(rel_err(analytic, numeric));
        }
    }
    for (idx, &analytic) in grad_a.indexed_iter() {
        let (mut ap, mut am) = (a.clone(), a.clone());
        ap[idx] += H;
        am[idx] -= H;
        let numeric = (loss(&critic, &ap) - loss(&critic, &am)) / (2.0 * H);
        worst = worst.max(rel_err(analytic, numeric));
    }
    worst
}
