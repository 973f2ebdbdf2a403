//! Finite-difference checks for network backward passes.

use fas_isac::nn::Mlp;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_inputs(r: &mut ChaCha8Rng, rows: usize, batch: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, batch, |_, _| r.random_range(-1.0..1.0))
}

/// Scalar loss `Σ c ⊙ net(x, a)`.
pub fn loss(net: &Mlp, x: &DMatrix<f64>, aux: Option<&DMatrix<f64>>, c: &DMatrix<f64>) -> f64 {
    net.forward(x, aux).unwrap().output().component_mul(c).sum()
}

pub struct CheckOutcome {
    pub worst: f64,
    pub checked: usize,
    pub kinks: usize,
}

/// Compares `backward` with central differences (h = 1e−5) on the listed
/// parameters. A parameter whose difference quotient changes
/// between `h` and `h/10` sits on a ReLU kink and is skipped.
pub fn check_params(
    net: &mut Mlp,
    x: &DMatrix<f64>,
    aux: Option<&DMatrix<f64>>,
    c: &DMatrix<f64>,
    picks: &[(usize, usize, Option<usize>)],
) -> CheckOutcome {
    let cache = net.forward(x, aux).unwrap();
    let grads = net.backward(&cache, c).unwrap();
    let mut out = CheckOutcome { worst: 0.0, checked: 0, kinks: 0 };
    for &(l, i, j) in picks {
        let analytic = match j {
            Some(j) => grads.layers[l].weights[(i, j)],
            None => grads.layers[l].bias[i],
        };
        let mut fd = |h: f64| {
            let shift = |net: &mut Mlp, d: f64| {
                let layer = &mut net.layers_mut()[l];
                match j {
                    Some(j) => layer.weights[(i, j)] += d,
                    None => layer.bias[i] += d,
                }
            };
            shift(net, h);
            let plus = loss(net, x, aux, c);
            shift(net, -2.0 * h);
            let minus = loss(net, x, aux, c);
            shift(net, h);
            (plus - minus) / (2.0 * h)
        };
        let coarse = fd(1e-5);
        let fine = fd(1e-6);
        if (coarse - fine).abs() > 1e-4 * coarse.abs().max(fine.abs()).max(1e-6) {
            out.kinks += 1;
            continue;
        }
        let scale = analytic.abs().max(coarse.abs());
        if scale > 1e-9 {
            out.worst = out.worst.max((analytic - coarse).abs() / scale);
        }
        out.checked += 1;
    }
    out
}

pub fn all_params(net: &Mlp) -> Vec<(usize, usize, Option<usize>)> {
    let mut picks = Vec::new();
    for (l, layer) in net.layers().iter().enumerate() {
        for i in 0..layer.weights.nrows() {
            for j in 0..layer.weights.ncols() {
                picks.push((l, i, Some(j)));
            }
            picks.push((l, i, None));
        }
    }
    picks
}

pub fn sampled_params(net: &Mlp, count: usize, r: &mut ChaCha8Rng) -> Vec<(usize, usize, Option<usize>)> {
    let all = all_params(net);
    (0..count).map(|_| all[r.random_range(0..all.len())]).collect()
}

/// Critic-side input gradients against central differences.
pub fn check_inputs(net: &Mlp, x: &DMatrix<f64>, aux: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    let cache = net.forward(x, Some(aux)).unwrap();
    let g = net.backward(&cache, c).unwrap();
    let fast = net.aux_gradient(&cache, c).unwrap();
    assert!((g.aux.as_ref().unwrap() - &fast).amax() <= 1e-12);
    let mut worst: f64 = 0.0;
    for i in 0..aux.nrows() {
        for b in 0..aux.ncols() {
            let mut a = aux.clone();
            a[(i, b)] += 1e-5;
            let plus = loss(net, x, Some(&a), c);
            a[(i, b)] -= 2e-5;
            let minus = loss(net, x, Some(&a), c);
            let fd = (plus - minus) / 2e-5;
            let an = fast[(i, b)];
            let scale = an.abs().max(fd.abs());
            if scale > 1e-9 {
                worst = worst.max((an - fd).abs() / scale);
            }
        }
    }
    worst
}
