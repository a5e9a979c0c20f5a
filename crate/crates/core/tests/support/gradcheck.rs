//! Central finite-difference gradient oracle and the randomized instances
//! it is run on.

use fbt_core::nn::{
    bce_with_logits, mse, Activation, Architecture, Attention, Autoencoder, Dense, DenseStack, GruLayer, LstmLayer,
    Network, NetworkKind, Params,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const SEEDS: u64 = 20;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn central(f: &mut dyn FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + EPS) - f(x - EPS)) / (2.0 * EPS)
}

/// Worst relative error over every parameter.
pub fn check_params<P: Params>(params: &P, analytic: &P, loss: impl Fn(&P) -> f64) -> f64 {
    let base = params.to_flat();
    let grad = analytic.to_flat();
    assert_eq!(base.len(), grad.len());
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut f = |v: f64| {
            let mut flat = base.clone();
            flat[i] = v;
            probe.set_flat(&flat);
            loss(&probe)
        };
        worst = worst.max(rel_err(grad[i], central(&mut f, base[i])));
    }
    worst
}

pub fn check_input(x: &[f64], analytic: &[f64], loss: impl Fn(&[f64]) -> f64) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut f = |v: f64| {
            let mut probe = x.to_vec();
            probe[i] = v;
            loss(&probe)
        };
        worst = worst.max(rel_err(analytic[i], central(&mut f, x[i])));
    }
    worst
}

fn vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Default init leaves biases at zero, which can park a ReLU exactly on its
/// kink; perturb every parameter so instances are generic.
fn jitter<P: Params>(p: &mut P, rng: &mut ChaCha8Rng) {
    let flat: Vec<f64> = p.to_flat().iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
    p.set_flat(&flat);
}

fn linear(c: &[f64], y: &[f64]) -> f64 {
    c.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn dense(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (i, o) = (rng.random_range(1..=4), rng.random_range(1..=4));
    let mut layer = Dense::new(i, o, &mut rng);
    jitter(&mut layer, &mut rng);
    let x = vector(&mut rng, i);
    let c = vector(&mut rng, o);
    let mut g = layer.zeros_like();
    let dx = layer.backward(&x, &c, &mut g);
    let p = check_params(&layer, &g, |l| linear(&c, &l.forward(&x)));
    p.max(check_input(&x, &dx, |x| linear(&c, &layer.forward(x))))
}

fn activation_stack(seed: u64, act: Activation) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.random_range(1..=3);
    let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=4)).collect();
    let mut stack = DenseStack::new(&dims, &vec![act; depth], &mut rng);
    jitter(&mut stack, &mut rng);
    let x = vector(&mut rng, dims[0]);
    let c = vector(&mut rng, dims[depth]);
    let outs = stack.forward_trace(&x);
    let mut g = stack.zeros_like();
    let dx = stack.backward(&x, &outs, &c, &mut g);
    let p = check_params(&stack, &g, |s| linear(&c, &s.forward(&x)));
    p.max(check_input(&x, &dx, |x| linear(&c, &stack.forward(x))))
}

fn head_bce(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = rng.random_range(1..=4);
    let mut head = Dense::new(h, 2, &mut rng);
    jitter(&mut head, &mut rng);
    let x = vector(&mut rng, h);
    let y = rng.random_bool(0.5);
    let (_, dl) = bce_with_logits(&head.forward(&x), y);
    let mut g = head.zeros_like();
    let dx = head.backward(&x, &dl, &mut g);
    let p = check_params(&head, &g, |l| bce_with_logits(&l.forward(&x), y).0);
    p.max(check_input(&x, &dx, |x| bce_with_logits(&head.forward(x), y).0))
}

fn lstm_layer(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (i, h, t) = (
        rng.random_range(1..=4),
        rng.random_range(1..=4),
        rng.random_range(1..=5),
    );
    let mut layer = LstmLayer::new(i, h, &mut rng);
    jitter(&mut layer, &mut rng);
    let xs = vector(&mut rng, i * t);
    let c = vector(&mut rng, h * t);
    let tr = layer.forward(&xs, t);
    let mut g = layer.zeros_like();
    let dx = layer.backward(&xs, &tr, &c, &mut g);
    let p = check_params(&layer, &g, |l| linear(&c, &l.forward(&xs, t).hidden));
    p.max(check_input(&xs, &dx, |x| linear(&c, &layer.forward(x, t).hidden)))
}

fn gru_layer(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (i, h, t) = (
        rng.random_range(1..=4),
        rng.random_range(1..=4),
        rng.random_range(1..=5),
    );
    let mut layer = GruLayer::new(i, h, &mut rng);
    jitter(&mut layer, &mut rng);
    let xs = vector(&mut rng, i * t);
    let c = vector(&mut rng, h * t);
    let tr = layer.forward(&xs, t);
    let mut g = layer.zeros_like();
    let dx = layer.backward(&xs, &tr, &c, &mut g);
    let p = check_params(&layer, &g, |l| linear(&c, &l.forward(&xs, t).hidden));
    p.max(check_input(&xs, &dx, |x| linear(&c, &layer.forward(x, t).hidden)))
}

fn attention(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, a, t) = (
        rng.random_range(1..=4),
        rng.random_range(1..=4),
        rng.random_range(1..=5),
    );
    let mut att = Attention::new(h, a, &mut rng);
    jitter(&mut att, &mut rng);
    // larger scores so the softmax is far from uniform
    att.context_vector.data_mut().iter_mut().for_each(|v| *v *= 3.0);
    let hs = vector(&mut rng, h * t);
    let c = vector(&mut rng, h);
    let tr = att.forward(&hs, t);
    let mut g = att.zeros_like();
    let dhs = att.backward(&hs, &tr, &c, &mut g);
    let p = check_params(&att, &g, |m| linear(&c, &m.forward(&hs, t).context));
    p.max(check_input(&hs, &dhs, |x| linear(&c, &att.forward(x, t).context)))
}

fn autoencoder(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, hidden, code) = (
        rng.random_range(2..=5),
        rng.random_range(1..=4),
        rng.random_range(1..=3),
    );
    let mut ae = Autoencoder::new(n, hidden, code, &mut rng);
    jitter(&mut ae, &mut rng);
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let c = vector(&mut rng, code);
    let loss = |ae: &Autoencoder, x: &[f64]| {
        let (z, r) = ae.autoencode(x);
        mse(&r, x).0 + linear(&c, &z)
    };
    let tr = ae.trace(&x);
    let (_, mut d_recon) = mse(tr.reconstruction(), &x);
    let mut g = ae.zeros_like();
    let mut dx = ae.backward(&x, &tr, &c, &d_recon, &mut g);
    // the target is also the input
    for (d, r) in dx.iter_mut().zip(d_recon.iter_mut()) {
        *d -= *r;
    }
    let p = check_params(&ae, &g, |m| loss(m, &x));
    p.max(check_input(&x, &dx, |x| loss(&ae, x)))
}

fn network(seed: u64, arch: Architecture, rng: &mut ChaCha8Rng) -> f64 {
    let mut net = Network::new(arch, rng);
    jitter(&mut net, rng);
    let len = net.architecture.sample_len();
    let n = rng.random_range(1..=3);
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..len).map(|_| rng.random::<f64>()).collect())
        .collect();
    let ys: Vec<bool> = (0..n).map(|i| (seed + i as u64).is_multiple_of(2)).collect();
    let batch: Vec<(&[f64], bool)> = xs.iter().map(Vec::as_slice).zip(ys.iter().copied()).collect();
    let (_, g) = net.batch_gradient(&batch, None);
    check_params(&net, &g, |m| m.loss(&batch).total)
}

fn recurrent(seed: u64, kind: NetworkKind, attention: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (i, t) = (rng.random_range(1..=4), rng.random_range(1..=5));
    let mut arch = Architecture::recurrent(kind, i, t, attention);
    arch.layers = 1 + (seed % 3) as usize;
    arch.hidden = rng.random_range(1..=4);
    arch.attention_dim = attention.then(|| rng.random_range(1..=4));
    network(seed, arch, &mut rng)
}

fn mlp(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arch = Architecture::mlp(rng.random_range(1..=5));
    arch.layers = 1 + (seed % 3) as usize;
    arch.hidden = rng.random_range(2..=4);
    network(seed, arch, &mut rng)
}

fn joint(seed: u64, series: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = rng.random_range(2..=5);
    let mut arch = if series {
        let mut a = Architecture::recurrent(
            NetworkKind::Lstm,
            width,
            rng.random_range(1..=4),
            seed.is_multiple_of(2),
        );
        a.layers = 1 + (seed % 3) as usize;
        a.attention_dim = a.attention_dim.map(|_| 3);
        a
    } else {
        let mut a = Architecture::mlp(width);
        a.layers = 2;
        a
    };
    arch.hidden = 3;
    arch.autoencoder = Some((rng.random_range(1..=3), rng.random_range(2..=4)));
    arch.reconstruction_weight = rng.random_range(0.5..2.0);
    network(seed, arch, &mut rng)
}

pub type Case = (&'static str, fn(u64) -> f64);

/// Every differentiable component, each as a function from seed to the
/// worst relative gradient error.
pub fn cases() -> Vec<Case> {
    vec![
        ("dense", dense),
        ("relu stack", |s| activation_stack(s, Activation::Relu)),
        ("tanh stack", |s| activation_stack(s, Activation::Tanh)),
        ("sigmoid stack", |s| activation_stack(s, Activation::Sigmoid)),
        ("softmax head + bce", head_bce),
        ("lstm layer", lstm_layer),
        ("gru layer", gru_layer),
        ("attention", attention),
        ("autoencoder", autoencoder),
        ("mlp 1-3 layers", mlp),
        ("lstm stack 1-3 layers", |s| recurrent(s, NetworkKind::Lstm, false)),
        ("gru stack 1-3 layers", |s| recurrent(s, NetworkKind::Gru, false)),
        ("lstm + attention", |s| recurrent(s, NetworkKind::Lstm, true)),
        ("gru + attention", |s| recurrent(s, NetworkKind::Gru, true)),
        ("autoencoder + mlp", |s| joint(s, false)),
        ("autoencoder + lstm", |s| joint(s, true)),
    ]
}

/// Worst error and the seed it came from.
pub fn run_case(case: &Case) -> (f64, u64) {
    (0..SEEDS)
        .map(|s| ((case.1)(s), s))
        .fold((0.0, 0), |acc, x| if x.0 > acc.0 { x } else { acc })
}
