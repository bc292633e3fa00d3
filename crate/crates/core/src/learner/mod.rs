//! Shared-policy Rainbow learner: dueling C51 network, Double-Q targets and
//! prioritized replay.

pub mod c51;
pub mod checkpoint;
pub mod net;
pub mod optim;
pub mod replay;

use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use c51::{categorical_projection, double_q_targets, support};
pub use net::{argmax, QNetwork};
pub use optim::{Optimizer, OptimizerKind};
pub use replay::{ReplayBuffer, SampledIndex, SumTree, Transition};

use crate::agent::Action;
use crate::error::LearnerError;

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub hidden: Vec<usize>,
    /// Train steps between target-network copies.
    pub target_sync: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the training episodes over which epsilon is annealed.
    pub epsilon_fraction: f64,
    pub episodes: u64,
    pub buffer_capacity: usize,
    pub per_alpha: f64,
    pub per_beta_start: f64,
    pub per_beta_end: f64,
    pub priority_floor: f64,
    pub grad_clip: f64,
    pub optimizer: OptimizerKind,
    /// New transitions per train step.
    pub train_every: u64,
    /// Buffer size before the first train step.
    pub learning_starts: usize,
    /// Train steps over which the importance exponent reaches its final value.
    pub beta_anneal_steps: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            gamma: 0.99,
            learning_rate: 5e-4,
            batch_size: 32,
            atoms: 51,
            v_min: -60.0,
            v_max: 60.0,
            hidden: vec![512, 512, 512],
            target_sync: 500,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_fraction: 1.0 / 3.0,
            episodes: 200,
            buffer_capacity: 50_000,
            per_alpha: 0.5,
            per_beta_start: 0.4,
            per_beta_end: 1.0,
            priority_floor: 1e-3,
            grad_clip: 10.0,
            optimizer: OptimizerKind::Sgd,
            train_every: 4,
            learning_starts: 500,
            beta_anneal_steps: 25_000,
        }
    }
}

impl LearnerConfig {
    /// Support spanning `+-bound`, the reward range of the environment.
    pub fn with_reward_bound(mut self, bound: f64) -> LearnerConfig {
        self.v_min = -bound;
        self.v_max = bound;
        self
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: String| Err(LearnerError::InvalidConfig(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.atoms == 0 {
            return bad("atoms must be >= 1".into());
        }
        if !(self.v_min < self.v_max) {
            return bad(format!("v_min {} must be below v_max {}", self.v_min, self.v_max));
        }
        if self.target_sync == 0 || self.train_every == 0 {
            return bad("target_sync and train_every must be >= 1".into());
        }
        if self.buffer_capacity < self.batch_size {
            return bad("buffer_capacity must hold at least one batch".into());
        }
        for (k, v) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
            ("epsilon_fraction", self.epsilon_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{k} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.per_alpha >= 0.0 && self.priority_floor >= 0.0) {
            return bad("per_alpha and priority_floor must be >= 0".into());
        }
        Ok(())
    }

    pub fn support(&self) -> Vec<f64> {
        support(self.v_min, self.v_max, self.atoms)
    }

    /// Linear anneal from `epsilon_start` to `epsilon_end` over the first
    /// `epsilon_fraction` of the episodes, then flat.
    pub fn epsilon(&self, episode: u64) -> f64 {
        let span = self.epsilon_fraction * self.episodes as f64;
        let frac = if span <= 0.0 {
            1.0
        } else {
            (episode as f64 / span).min(1.0)
        };
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }

    pub fn beta(&self, train_step: u64) -> f64 {
        let frac = if self.beta_anneal_steps == 0 {
            1.0
        } else {
            (train_step as f64 / self.beta_anneal_steps as f64).min(1.0)
        };
        self.per_beta_start + frac * (self.per_beta_end - self.per_beta_start)
    }
}

/// With probability `epsilon` a uniform action, otherwise the greedy action
/// with ties going to Go.
pub fn select_action(
    net: &QNetwork,
    obs: &[f64],
    epsilon: f64,
    rng: &mut dyn RngCore,
) -> Result<Action, LearnerError> {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(if rng.random::<bool>() { Action::Go } else { Action::Stop });
    }
    let q = net.q_values(obs)?;
    Ok(Action::from_index(argmax(&q)))
}

/// A batch assembled from the replay buffer.
#[derive(Debug, Clone)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub obs: Array2<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_obs: Array2<f64>,
    pub terminals: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(transitions: &[&Transition], weights: Vec<f64>, indices: Vec<usize>) -> Batch {
        let n = transitions.len();
        let d = transitions.first().map_or(0, |t| t.obs.len());
        let mut obs = Array2::zeros((n, d));
        let mut next_obs = Array2::zeros((n, d));
        for (i, t) in transitions.iter().enumerate() {
            obs.row_mut(i).assign(&ndarray::ArrayView1::from(&t.obs));
            next_obs.row_mut(i).assign(&ndarray::ArrayView1::from(&t.next_obs));
        }
        Batch {
            indices,
            weights,
            obs,
            actions: transitions.iter().map(|t| t.action.index()).collect(),
            rewards: transitions.iter().map(|t| t.reward).collect(),
            next_obs,
            terminals: transitions.iter().map(|t| t.terminal).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub loss: f64,
    pub per_sample: Vec<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Learner {
    pub config: LearnerConfig,
    pub online: QNetwork,
    pub target: QNetwork,
    pub optimizer: Optimizer,
    pub buffer: ReplayBuffer,
    pub rng: ChaCha8Rng,
    pub train_steps: u64,
    pub observed: u64,
    pub episodes_done: u64,
    pub last_loss: Option<f64>,
}

impl Learner {
    pub fn new(config: LearnerConfig, input: usize, seed: u64) -> Result<Learner, LearnerError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = QNetwork::new(input, &config.hidden, Action::ALL.len(), config.support(), &mut rng);
        let target = online.clone();
        let optimizer = Optimizer::new(config.optimizer, config.learning_rate, config.grad_clip, &online);
        let buffer = ReplayBuffer::new(config.buffer_capacity, config.per_alpha);
        Ok(Learner {
            config,
            online,
            target,
            optimizer,
            buffer,
            rng,
            train_steps: 0,
            observed: 0,
            episodes_done: 0,
            last_loss: None,
        })
    }

    /// Stores a transition and trains when due. Returns the loss of the
    /// train step, if one ran.
    pub fn observe(&mut self, t: Transition) -> Result<Option<f64>, LearnerError> {
        if t.obs.len() != self.online.input || t.next_obs.len() != self.online.input {
            return Err(LearnerError::ShapeMismatch {
                expected: self.online.input,
                got: t.obs.len(),
            });
        }
        self.buffer.push(t);
        self.observed += 1;
        let ready = self.buffer.len() >= self.config.batch_size.max(self.config.learning_starts);
        if ready && self.observed % self.config.train_every == 0 {
            let batch = self.sample_batch()?;
            let out = self.train_step(&batch)?;
            return Ok(Some(out.loss));
        }
        Ok(None)
    }

    pub fn sample_batch(&mut self) -> Result<Batch, LearnerError> {
        let beta = self.config.beta(self.train_steps);
        let picks = self.buffer.sample(self.config.batch_size, beta, &mut self.rng)?;
        let ts: Vec<&Transition> = picks.iter().map(|p| self.buffer.get(p.index)).collect();
        Ok(Batch::from_transitions(
            &ts,
            picks.iter().map(|p| p.weight).collect(),
            picks.iter().map(|p| p.index).collect(),
        ))
    }

    /// Distributional targets for a batch under the current networks.
    pub fn targets(&self, batch: &Batch) -> Result<Array2<f64>, LearnerError> {
        double_q_targets(
            &self.online,
            &self.target,
            batch.next_obs.view(),
            &batch.rewards,
            &batch.terminals,
            self.config.gamma,
        )
    }

    /// One gradient step on `batch`; refreshes priorities of the sampled
    /// items and syncs the target network when due.
    pub fn train_step(&mut self, batch: &Batch) -> Result<TrainOutput, LearnerError> {
        let targets = self.targets(batch)?;
        let (loss, per_sample, grad) =
            self.online
                .loss_and_grad(batch.obs.view(), &batch.actions, &targets, &batch.weights)?;
        if !loss.is_finite() {
            return Err(LearnerError::NonFiniteLoss {
                step: self.train_steps,
                diagnostics: format!(
                    "param norm {:.4e}, rewards {:?}, weights {:?}",
                    self.online.norm(),
                    batch.rewards,
                    batch.weights
                ),
            });
        }
        let grad_norm = self.optimizer.step(&mut self.online, &grad);
        for (&i, &l) in batch.indices.iter().zip(&per_sample) {
            if i < self.buffer.len() {
                self.buffer.update_priority(i, l.abs() + self.config.priority_floor);
            }
        }
        self.train_steps += 1;
        if self.train_steps % self.config.target_sync == 0 {
            self.target = self.online.clone();
        }
        self.last_loss = Some(loss);
        Ok(TrainOutput {
            loss,
            per_sample,
            grad_norm,
        })
    }
}
