//! Reference implementations used as test oracles.
#![allow(dead_code)]

use mtc_core::learner::QNetwork;
use ndarray::{Array2, ArrayView2};
use rand::Rng;

/// Projection by the triangular kernel: atom `i` receives
/// `p * max(0, 1 - |clip(v) - z_i| / dz)` from every mass `(v, p)`.
pub fn brute_projection(values: &[f64], probs: &[f64], support: &[f64]) -> Vec<f64> {
    let n = support.len();
    let (lo, hi) = (support[0], support[n - 1]);
    let dz = (hi - lo) / (n - 1) as f64;
    support
        .iter()
        .map(|&z| {
            values
                .iter()
                .zip(probs)
                .map(|(&v, &p)| p * (1.0 - (v.clamp(lo, hi) - z).abs() / dz).max(0.0))
                .sum()
        })
        .collect()
}

pub fn random_simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Largest relative error between the analytic gradient and central finite
/// differences of the loss, over every parameter. The relative error of one
/// coordinate is `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(
    net: &QNetwork,
    x: ArrayView2<f64>,
    actions: &[usize],
    targets: &Array2<f64>,
    weights: &[f64],
    h: f64,
    floor: f64,
) -> f64 {
    let (_, _, grad) = net.loss_and_grad(x, actions, targets, weights).unwrap();
    let analytic = grad.flat();
    let base = net.flat();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_flat(&p);
        let up = probe.loss(x, actions, targets, weights).unwrap().0;
        p[i] = base[i] - h;
        probe.set_flat(&p);
        let down = probe.loss(x, actions, targets, weights).unwrap().0;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}

/// Largest standardized deviation `|count - N p| / sqrt(N p (1 - p))` of an
/// empirical histogram from the multinomial with probabilities `probs`.
pub fn max_multinomial_z(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let n = n as f64;
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let sd = (n * p * (1.0 - p)).sqrt();
            (c as f64 - n * p).abs() / sd
        })
        .fold(0.0, f64::max)
}

/// Streaming mean and sample standard deviation.
pub fn welford(values: impl IntoIterator<Item = f64>) -> (f64, f64, usize) {
    let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for v in values {
        n += 1;
        let d = v - mean;
        mean += d / n as f64;
        m2 += d * (v - mean);
    }
    let sd = if n > 1 { (m2 / (n - 1) as f64).sqrt() } else { 0.0 };
    (mean, sd, n)
}
