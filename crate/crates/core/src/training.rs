//! Episodic training of the shared RV policy.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::engine::{DemandSchedule, EngineConfig, Simulation};
use crate::error::LearnerError;
use crate::learner::{checkpoint, Learner, LearnerConfig};
use crate::network::Network;
use crate::policy::EpsilonGreedy;

pub const CHECKPOINT_FILE: &str = "learner.ckpt";
pub const CURVE_FILE: &str = "training.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub episodes: u64,
    /// Simulated seconds per episode; demand is spread over the same horizon.
    /// The default keeps the 300 vehicles / 1000 s arrival rate.
    pub episode_duration: f64,
    pub demand: u64,
    pub rv_rate: f64,
    pub seed: u64,
    pub engine: EngineConfig,
    pub learner: LearnerConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let engine = EngineConfig {
            record_decisions: false,
            ..EngineConfig::default()
        };
        let learner = LearnerConfig::default().with_reward_bound(engine.reward_bound());
        TrainingConfig {
            episodes: 200,
            episode_duration: 300.0,
            demand: 90,
            rv_rate: 0.6,
            seed: 0,
            engine,
            learner,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub episode: u64,
    /// Cumulative train steps at the end of the episode.
    pub steps: u64,
    pub mean_reward: f64,
    pub collisions: u64,
    pub epsilon: f64,
    /// Mean loss over the episode's train steps.
    pub loss: Option<f64>,
    pub transitions: u64,
}

impl EpisodeStats {
    pub fn csv_header() -> &'static str {
        "episode,steps,mean_reward,collisions,epsilon,loss"
    }

    pub fn csv_row(&self) -> String {
        let loss = self.loss.map_or_else(String::new, |l| format!("{l:.6}"));
        format!(
            "{},{},{:.6},{},{:.4},{}",
            self.episode, self.steps, self.mean_reward, self.collisions, self.epsilon, loss
        )
    }
}

/// Seed of the simulation used for training episode `episode`.
pub fn episode_seed(base: u64, episode: u64) -> u64 {
    base.wrapping_mul(1_000_003).wrapping_add(episode)
}

pub fn new_learner(net: &Network, cfg: &TrainingConfig) -> Result<Learner, LearnerError> {
    let mut lc = cfg.learner.clone();
    lc.episodes = cfg.episodes;
    Learner::new(lc, crate::agent::observation_len(net), cfg.seed)
}

/// Runs one epsilon-greedy episode, feeding every finished transition to the
/// learner as it happens.
pub fn run_episode(
    net: &Network,
    cfg: &TrainingConfig,
    learner: &mut Learner,
    episode: u64,
) -> Result<EpisodeStats, LearnerError> {
    let schedule = DemandSchedule::new(cfg.demand, cfg.episode_duration, cfg.rv_rate);
    let seed = episode_seed(cfg.seed, episode);
    let mut sim = Simulation::new(net, cfg.engine.clone(), &schedule, seed)
        .map_err(|e| LearnerError::InvalidConfig(e.to_string()))?;
    sim.set_record_transitions(true);
    let epsilon = learner.config.epsilon(episode);
    let ticks = (cfg.episode_duration / cfg.engine.dt).round() as u64;
    let mut reward_sum = 0.0;
    let mut transitions = 0u64;
    let mut loss_sum = 0.0;
    let mut losses = 0u64;
    for _ in 0..ticks {
        {
            let mut policy = EpsilonGreedy {
                net: &learner.online,
                epsilon,
            };
            sim.step(&mut policy);
        }
        for t in sim.drain_transitions() {
            reward_sum += t.reward;
            transitions += 1;
            if let Some(l) = learner.observe(t)? {
                loss_sum += l;
                losses += 1;
            }
        }
    }
    learner.episodes_done = episode + 1;
    let summary = sim.summary(seed);
    Ok(EpisodeStats {
        episode,
        steps: learner.train_steps,
        mean_reward: if transitions > 0 {
            reward_sum / transitions as f64
        } else {
            0.0
        },
        collisions: summary.collided,
        epsilon,
        loss: (losses > 0).then(|| loss_sum / losses as f64),
        transitions,
    })
}

/// Trains from the learner's current episode count up to `cfg.episodes`.
pub fn train(
    net: &Network,
    cfg: &TrainingConfig,
    learner: &mut Learner,
    mut on_episode: impl FnMut(&EpisodeStats),
) -> Result<Vec<EpisodeStats>, LearnerError> {
    let mut out = Vec::new();
    for episode in learner.episodes_done..cfg.episodes {
        let stats = run_episode(net, cfg, learner, episode)?;
        on_episode(&stats);
        out.push(stats);
    }
    Ok(out)
}

/// Writes `learner.ckpt` and appends to `training.csv` in `dir`.
pub fn save_run(dir: &Path, learner: &Learner, curve: &[EpisodeStats]) -> Result<(), LearnerError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| LearnerError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    checkpoint::save(learner, &dir.join(CHECKPOINT_FILE))?;
    let curve_path = dir.join(CURVE_FILE);
    let fresh = !curve_path.exists();
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&curve_path)
        .map_err(io(&curve_path))?;
    let mut text = String::new();
    if fresh {
        text.push_str(EpisodeStats::csv_header());
        text.push('\n');
    }
    for s in curve {
        text.push_str(&s.csv_row());
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(io(&curve_path))?;
    Ok(())
}
