//! Categorical projection and Double-Q distributional targets.

use ndarray::{Array2, ArrayView2, Axis};

use super::net::{argmax, QNetwork};
use crate::error::LearnerError;

/// `n` evenly spaced atoms on `[v_min, v_max]`.
pub fn support(v_min: f64, v_max: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(v_min + v_max) / 2.0];
    }
    let dz = (v_max - v_min) / (n - 1) as f64;
    (0..n).map(|i| v_min + dz * i as f64).collect()
}

/// Projects the distribution placing mass `probs[j]` on `values[j]` onto the
/// evenly spaced support `support`. Values are clipped to the support range
/// and each mass is split linearly between its two neighbouring atoms.
pub fn categorical_projection(values: &[f64], probs: &[f64], support: &[f64]) -> Vec<f64> {
    let n = support.len();
    let mut out = vec![0.0; n];
    if n == 1 {
        out[0] = probs.iter().sum();
        return out;
    }
    let v_min = support[0];
    let v_max = support[n - 1];
    let dz = (v_max - v_min) / (n - 1) as f64;
    for (&v, &p) in values.iter().zip(probs) {
        let b = ((v.clamp(v_min, v_max) - v_min) / dz).clamp(0.0, (n - 1) as f64);
        let l = b.floor() as usize;
        let u = b.ceil() as usize;
        if l == u {
            out[l] += p;
        } else {
            out[l] += p * (u as f64 - b);
            out[u] += p * (b - l as f64);
        }
    }
    out
}

/// Bellman-shifted support for one transition: `r + gamma * z`, or `r` alone
/// on every atom for terminal transitions.
pub fn shifted_support(reward: f64, gamma: f64, terminal: bool, support: &[f64]) -> Vec<f64> {
    support
        .iter()
        .map(|&z| if terminal { reward } else { reward + gamma * z })
        .collect()
}

/// Double-Q distributional targets for a batch: the online network picks the
/// next action, the target network supplies its distribution.
pub fn double_q_targets(
    online: &QNetwork,
    target: &QNetwork,
    next_obs: ArrayView2<f64>,
    rewards: &[f64],
    terminals: &[bool],
    gamma: f64,
) -> Result<Array2<f64>, LearnerError> {
    let n = next_obs.nrows();
    let atoms = online.atoms();
    let q_next = online.q_values_batch(next_obs)?;
    let p_next = target.forward_batch(next_obs)?;
    let mut out = Array2::zeros((n, atoms));
    for b in 0..n {
        let a_star = argmax(q_next.row(b).as_slice().expect("contiguous q row"));
        let projected = if terminals[b] {
            categorical_projection(&[rewards[b]], &[1.0], &online.support)
        } else {
            let values = shifted_support(rewards[b], gamma, false, &online.support);
            let dist = p_next.index_axis(Axis(0), b);
            let dist = dist.row(a_star);
            categorical_projection(&values, dist.as_slice().expect("contiguous atoms"), &online.support)
        };
        out.row_mut(b).assign(&ndarray::ArrayView1::from(&projected));
    }
    Ok(out)
}
