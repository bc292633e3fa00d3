//! First-order optimizers over the network's parameter tensors.

use std::fmt;
use std::str::FromStr;

use super::net::QNetwork;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> OptimizerKind {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn slots(self) -> usize {
        match self {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Momentum { .. } => 1,
            OptimizerKind::Adam { .. } => 2,
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizerKind::Sgd => f.write_str("sgd"),
            OptimizerKind::Momentum { .. } => f.write_str("momentum"),
            OptimizerKind::Adam { .. } => f.write_str("adam"),
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "momentum" => Ok(OptimizerKind::Momentum { beta: 0.9 }),
            "adam" => Ok(OptimizerKind::adam()),
            other => Err(format!("unknown optimizer `{other}` (sgd, momentum, adam)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Global gradient-norm clip; non-positive disables clipping.
    pub clip_norm: f64,
    pub steps: u64,
    /// Per-tensor moment estimates, `kind.slots()` vectors per tensor.
    pub state: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, clip_norm: f64, net: &QNetwork) -> Optimizer {
        let state = net
            .tensors()
            .iter()
            .flat_map(|t| std::iter::repeat_n(vec![0.0; t.len()], kind.slots()))
            .collect();
        Optimizer {
            kind,
            lr,
            clip_norm,
            steps: 0,
            state,
        }
    }

    /// Applies one update; returns the pre-clip gradient norm.
    pub fn step(&mut self, net: &mut QNetwork, grad: &QNetwork) -> f64 {
        let norm = grad.norm();
        let scale = if self.clip_norm > 0.0 && norm > self.clip_norm {
            self.clip_norm / norm
        } else {
            1.0
        };
        self.steps += 1;
        let lr = self.lr;
        let grads = grad.tensors();
        let slots = self.kind.slots();
        for (ti, (p, g)) in net.tensors_mut().into_iter().zip(grads).enumerate() {
            match self.kind {
                OptimizerKind::Sgd => {
                    for (x, &d) in p.iter_mut().zip(g) {
                        *x -= lr * scale * d;
                    }
                }
                OptimizerKind::Momentum { beta } => {
                    let v = &mut self.state[ti * slots];
                    for ((x, &d), m) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                        *m = beta * *m + scale * d;
                        *x -= lr * *m;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let t = self.steps as i32;
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let (m, v) = self.state[ti * slots..ti * slots + 2].split_at_mut(1);
                    for (((x, &d), m), v) in p.iter_mut().zip(g).zip(m[0].iter_mut()).zip(v[0].iter_mut()) {
                        let d = scale * d;
                        *m = beta1 * *m + (1.0 - beta1) * d;
                        *v = beta2 * *v + (1.0 - beta2) * d * d;
                        *x -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
            }
        }
        norm
    }
}
