//! Decision rules for controlled RVs.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::agent::{Action, Observation};
use crate::error::LearnerError;
use crate::learner::{checkpoint, select_action, QNetwork};

pub trait Policy {
    fn decide(&mut self, obs: &Observation, rng: &mut dyn RngCore) -> Action;
}

/// Uniform Go/Stop.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn decide(&mut self, _obs: &Observation, rng: &mut dyn RngCore) -> Action {
        if rng.random::<bool>() {
            Action::Go
        } else {
            Action::Stop
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysGo;

impl Policy for AlwaysGo {
    fn decide(&mut self, _obs: &Observation, _rng: &mut dyn RngCore) -> Action {
        Action::Go
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysStop;

impl Policy for AlwaysStop {
    fn decide(&mut self, _obs: &Observation, _rng: &mut dyn RngCore) -> Action {
        Action::Stop
    }
}

/// Epsilon-greedy over a Q-network; `epsilon = 0` is the greedy policy.
#[derive(Debug, Clone)]
pub struct EpsilonGreedy<N> {
    pub net: N,
    pub epsilon: f64,
}

impl<N: AsRef<QNetwork>> Policy for EpsilonGreedy<N> {
    fn decide(&mut self, obs: &Observation, rng: &mut dyn RngCore) -> Action {
        select_action(self.net.as_ref(), &obs.values, self.epsilon, rng)
            .expect("observation length matches the network")
    }
}

impl AsRef<QNetwork> for QNetwork {
    fn as_ref(&self) -> &QNetwork {
        self
    }
}

/// Replays a fixed script of actions, then repeats the last one.
#[derive(Debug, Clone)]
pub struct Scripted(pub Vec<Action>, usize);

impl Scripted {
    pub fn new(actions: Vec<Action>) -> Scripted {
        Scripted(actions, 0)
    }
}

impl Policy for Scripted {
    fn decide(&mut self, _obs: &Observation, _rng: &mut dyn RngCore) -> Action {
        let a = self.0[self.1.min(self.0.len() - 1)];
        self.1 += 1;
        a
    }
}

/// Where a rollout's policy comes from.
#[derive(Debug, Clone)]
pub enum PolicySource {
    Random,
    AlwaysGo,
    Network { path: PathBuf, net: Arc<QNetwork> },
}

impl PolicySource {
    /// `random`, `always-go`, or a checkpoint path (a file or a directory
    /// holding `learner.ckpt`).
    pub fn parse(token: &str) -> Result<PolicySource, LearnerError> {
        match token {
            "random" => Ok(PolicySource::Random),
            "always-go" => Ok(PolicySource::AlwaysGo),
            path => {
                let mut p = PathBuf::from(path);
                if p.is_dir() {
                    p = p.join(crate::training::CHECKPOINT_FILE);
                }
                let net = checkpoint::load_network(&p)?;
                Ok(PolicySource::Network {
                    path: p,
                    net: Arc::new(net),
                })
            }
        }
    }

    pub fn from_network(net: QNetwork) -> PolicySource {
        PolicySource::Network {
            path: PathBuf::new(),
            net: Arc::new(net),
        }
    }

    pub fn instantiate(&self) -> Box<dyn Policy + Send> {
        match self {
            PolicySource::Random => Box::new(RandomPolicy),
            PolicySource::AlwaysGo => Box::new(AlwaysGo),
            PolicySource::Network { net, .. } => Box::new(EpsilonGreedy {
                net: Arc::clone(net),
                epsilon: 0.0,
            }),
        }
    }

    pub fn input_len(&self) -> Option<usize> {
        match self {
            PolicySource::Network { net, .. } => Some(net.input),
            _ => None,
        }
    }
}

impl fmt::Display for PolicySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySource::Random => f.write_str("random"),
            PolicySource::AlwaysGo => f.write_str("always-go"),
            PolicySource::Network { path, .. } => write!(f, "{}", path.display()),
        }
    }
}
