//! Dueling categorical Q-network with hand-written backpropagation.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::LearnerError;

/// Fully connected layer, weights stored input-major (`in x out`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(input: usize, output: usize) -> Dense {
        Dense {
            w: Array2::zeros((input, output)),
            b: Array1::zeros(output),
        }
    }

    /// He-normal weights, zero biases.
    fn he<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Dense {
        let scale = (2.0 / input as f64).sqrt();
        let w = Array2::from_shape_simple_fn((input, output), || {
            scale * rng.sample::<f64, _>(StandardNormal)
        });
        Dense {
            w,
            b: Array1::zeros(output),
        }
    }

    fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

/// `Q(s, a)` as a distribution over a fixed atom support.
///
/// A ReLU trunk feeds a value head (`atoms` logits) and an advantage head
/// (`actions * atoms` logits). Per atom, the action logits are
/// `value + advantage - mean_a advantage`, normalised with a softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub input: usize,
    pub actions: usize,
    pub support: Vec<f64>,
    pub trunk: Vec<Dense>,
    pub value: Dense,
    pub advantage: Dense,
}

/// Activations kept for the backward pass.
pub struct ForwardCache {
    /// Input followed by every post-ReLU hidden activation.
    pub hidden: Vec<Array2<f64>>,
    /// Probabilities, `batch x actions x atoms`.
    pub probs: Array3<f64>,
}

impl QNetwork {
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        actions: usize,
        support: Vec<f64>,
        rng: &mut R,
    ) -> QNetwork {
        let mut trunk = Vec::with_capacity(hidden.len());
        let mut prev = input;
        for &h in hidden {
            trunk.push(Dense::he(prev, h, rng));
            prev = h;
        }
        let atoms = support.len();
        QNetwork {
            input,
            actions,
            value: Dense::he(prev, atoms, rng),
            advantage: Dense::he(prev, actions * atoms, rng),
            support,
            trunk,
        }
    }

    pub fn atoms(&self) -> usize {
        self.support.len()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.trunk.iter().map(|d| d.b.len()).collect()
    }

    /// Same shapes, every parameter zero.
    pub fn zeros_like(&self) -> QNetwork {
        QNetwork {
            input: self.input,
            actions: self.actions,
            support: self.support.clone(),
            trunk: self
                .trunk
                .iter()
                .map(|d| Dense::zeros(d.w.nrows(), d.w.ncols()))
                .collect(),
            value: Dense::zeros(self.value.w.nrows(), self.value.w.ncols()),
            advantage: Dense::zeros(self.advantage.w.nrows(), self.advantage.w.ncols()),
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.trunk.iter().chain([&self.value, &self.advantage])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk
            .iter_mut()
            .chain([&mut self.value, &mut self.advantage])
    }

    /// Parameter tensors in a fixed order: per layer, weights then biases.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers()
            .flat_map(|d| {
                [
                    d.w.as_slice().expect("standard layout"),
                    d.b.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .flat_map(|d| {
                [
                    d.w.as_slice_mut().expect("standard layout"),
                    d.b.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&values[off..off + n]);
            off += n;
        }
        assert_eq!(off, values.len(), "flat parameter length mismatch");
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    fn check_input(&self, cols: usize) -> Result<(), LearnerError> {
        if cols != self.input {
            return Err(LearnerError::ShapeMismatch {
                expected: self.input,
                got: cols,
            });
        }
        Ok(())
    }

    fn trunk_forward(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut hidden = Vec::with_capacity(self.trunk.len() + 1);
        hidden.push(x.to_owned());
        for d in &self.trunk {
            let mut z = d.apply(&hidden.last().unwrap().view());
            z.mapv_inplace(|v| v.max(0.0));
            hidden.push(z);
        }
        hidden
    }

    /// Dueling logits, `batch x actions x atoms`.
    fn head_logits(&self, h: &Array2<f64>) -> Array3<f64> {
        let n = h.nrows();
        let atoms = self.atoms();
        let value = self.value.apply(&h.view());
        let adv = self
            .advantage
            .apply(&h.view())
            .into_shape_with_order((n, self.actions, atoms))
            .expect("advantage head shape");
        let mean = adv.mean_axis(Axis(1)).expect("at least one action");
        let mut logits = adv;
        for a in 0..self.actions {
            let mut slice = logits.slice_mut(s![.., a, ..]);
            slice -= &mean;
            slice += &value;
        }
        logits
    }

    pub fn logits_batch(&self, x: ArrayView2<f64>) -> Result<Array3<f64>, LearnerError> {
        self.check_input(x.ncols())?;
        let hidden = self.trunk_forward(x);
        Ok(self.head_logits(hidden.last().unwrap()))
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache, LearnerError> {
        self.check_input(x.ncols())?;
        let hidden = self.trunk_forward(x);
        let mut probs = self.head_logits(hidden.last().unwrap());
        for mut row in probs.lanes_mut(Axis(2)) {
            softmax_in_place(row.as_slice_mut().expect("contiguous atoms"));
        }
        Ok(ForwardCache { hidden, probs })
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array3<f64>, LearnerError> {
        Ok(self.forward_cached(x)?.probs)
    }

    /// Per-action distributions over the atom support for one observation.
    pub fn forward(&self, obs: &[f64]) -> Result<Array2<f64>, LearnerError> {
        let x = ArrayView2::from_shape((1, obs.len()), obs).expect("row vector");
        let p = self.forward_batch(x)?;
        Ok(p.index_axis_move(Axis(0), 0))
    }

    /// Dueling logits for one observation, `actions x atoms`.
    pub fn logits(&self, obs: &[f64]) -> Result<Array2<f64>, LearnerError> {
        let x = ArrayView2::from_shape((1, obs.len()), obs).expect("row vector");
        Ok(self.logits_batch(x)?.index_axis_move(Axis(0), 0))
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>, LearnerError> {
        Ok(expected_values(&self.forward(obs)?.view(), &self.support))
    }

    pub fn q_values_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, LearnerError> {
        let p = self.forward_batch(x)?;
        let (n, a, k) = p.dim();
        let z = Array1::from(self.support.clone());
        let flat = p.into_shape_with_order((n * a, k)).expect("contiguous");
        Ok(flat.dot(&z).into_shape_with_order((n, a)).expect("contiguous"))
    }

    /// Importance-weighted cross-entropy between `targets` and the predicted
    /// distribution of the taken actions, averaged over the batch.
    /// Returns `(loss, per-sample cross-entropy)`.
    pub fn loss(
        &self,
        x: ArrayView2<f64>,
        actions: &[usize],
        targets: &Array2<f64>,
        weights: &[f64],
    ) -> Result<(f64, Vec<f64>), LearnerError> {
        let cache = self.forward_cached(x)?;
        Ok(weighted_cross_entropy(&cache.probs, actions, targets, weights))
    }

    /// Loss, per-sample losses and the gradient of the loss with respect to
    /// every parameter (same shapes as `self`).
    pub fn loss_and_grad(
        &self,
        x: ArrayView2<f64>,
        actions: &[usize],
        targets: &Array2<f64>,
        weights: &[f64],
    ) -> Result<(f64, Vec<f64>, QNetwork), LearnerError> {
        let cache = self.forward_cached(x)?;
        let (loss, per_sample) = weighted_cross_entropy(&cache.probs, actions, targets, weights);
        let n = x.nrows();
        let atoms = self.atoms();
        let na = self.actions;

        // Softmax + cross-entropy: dL/dlogit = w/B * (p - m) on the taken action.
        let mut g = Array3::<f64>::zeros((n, na, atoms));
        for b in 0..n {
            let scale = weights[b] / n as f64;
            let a = actions[b];
            for z in 0..atoms {
                g[[b, a, z]] = scale * (cache.probs[[b, a, z]] - targets[[b, z]]);
            }
        }
        let d_value = g.sum_axis(Axis(1));
        let g_mean = g.mean_axis(Axis(1)).expect("at least one action");
        let mut d_adv = g;
        for a in 0..na {
            let mut slice = d_adv.slice_mut(s![.., a, ..]);
            slice -= &g_mean;
        }
        let d_adv = d_adv
            .into_shape_with_order((n, na * atoms))
            .expect("advantage gradient shape");

        let mut grad = self.zeros_like();
        let h_last = cache.hidden.last().unwrap();
        grad.value.w = h_last.t().dot(&d_value);
        grad.value.b = d_value.sum_axis(Axis(0));
        grad.advantage.w = h_last.t().dot(&d_adv);
        grad.advantage.b = d_adv.sum_axis(Axis(0));

        let mut dh = d_value.dot(&self.value.w.t()) + d_adv.dot(&self.advantage.w.t());
        for l in (0..self.trunk.len()).rev() {
            let out = &cache.hidden[l + 1];
            dh.zip_mut_with(out, |d, &o| {
                if o <= 0.0 {
                    *d = 0.0;
                }
            });
            let input = &cache.hidden[l];
            grad.trunk[l].w = input.t().dot(&dh);
            grad.trunk[l].b = dh.sum_axis(Axis(0));
            if l > 0 {
                dh = dh.dot(&self.trunk[l].w.t());
            }
        }
        Ok((loss, per_sample, grad))
    }
}

fn weighted_cross_entropy(
    probs: &Array3<f64>,
    actions: &[usize],
    targets: &Array2<f64>,
    weights: &[f64],
) -> (f64, Vec<f64>) {
    let n = probs.shape()[0];
    let atoms = probs.shape()[2];
    let mut per_sample = Vec::with_capacity(n);
    let mut total = 0.0;
    for b in 0..n {
        let a = actions[b];
        let mut ce = 0.0;
        for z in 0..atoms {
            let m = targets[[b, z]];
            if m > 0.0 {
                ce -= m * probs[[b, a, z]].max(1e-300).ln();
            }
        }
        per_sample.push(ce);
        total += weights[b] * ce;
    }
    (total / n as f64, per_sample)
}

pub fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// Expectation of each row of `probs` over `support`.
pub fn expected_values(probs: &ArrayView2<f64>, support: &[f64]) -> Vec<f64> {
    probs
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(support).map(|(p, z)| p * z).sum())
        .collect()
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn support(n: usize) -> Vec<f64> {
        (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1).max(1) as f64).collect()
    }

    #[test]
    fn distributions_are_normalised() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = QNetwork::new(6, &[16, 16], 2, support(11), &mut rng);
        let p = net.forward(&[0.3, -1.0, 2.0, 0.0, 5.0, 1.0]).unwrap();
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn zero_advantage_head_gives_identical_actions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = QNetwork::new(4, &[8], 2, support(5), &mut rng);
        net.advantage.w.fill(0.0);
        net.advantage.b.fill(0.0);
        let p = net.forward(&[1.0, 2.0, -0.5, 0.1]).unwrap();
        assert_eq!(p.row(0), p.row(1));
    }

    #[test]
    fn single_atom_logits_match_scalar_dueling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = QNetwork::new(1, &[1], 2, vec![0.0], &mut rng);
        net.trunk[0].w.fill(0.0);
        net.trunk[0].b.fill(1.0);
        net.value.w.fill(1.0);
        net.value.b.fill(0.0);
        net.advantage.w = Array2::from_shape_vec((1, 2), vec![2.0, 0.0]).unwrap();
        net.advantage.b.fill(0.0);
        let q = net.logits(&[0.0]).unwrap();
        assert_eq!(q[[0, 0]], 2.0);
        assert_eq!(q[[1, 0]], 0.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = QNetwork::new(3, &[4], 2, support(3), &mut rng);
        assert!(matches!(
            net.forward(&[1.0]),
            Err(LearnerError::ShapeMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = QNetwork::new(3, &[4, 5], 2, support(3), &mut rng);
        let mut other = net.zeros_like();
        other.set_flat(&net.flat());
        assert_eq!(net, other);
        assert_eq!(net.num_params(), 3 * 4 + 4 + 4 * 5 + 5 + 5 * 3 + 3 + 5 * 6 + 6);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 1.0]), 0);
        assert_eq!(argmax(&[0.5, 1.0]), 1);
    }
}
