//! `key = value` configuration files.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored. A key
//! may appear once per file; later [`Config::set`] calls (command-line flags)
//! replace file values. Every consumer rejects keys it does not know.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::engine::EngineConfig;
use crate::error::ConfigError;
use crate::idm::IdmParams;
use crate::learner::LearnerConfig;
use crate::training::TrainingConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    /// Source line, 0 for values set programmatically.
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub origin: String,
    entries: Vec<Entry>,
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Config, ConfigError> {
        let mut cfg = Config {
            origin: origin.to_string(),
            entries: Vec::new(),
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax {
                path: origin.to_string(),
                line,
                message,
            };
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected `key = value`, got `{body}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(syntax(format!("invalid key `{k}`")));
            }
            if cfg.get_raw(k).is_some() {
                return Err(syntax(format!("duplicate key `{k}`")));
            }
            cfg.entries.push(Entry {
                key: k.to_string(),
                value: v.to_string(),
                line,
            });
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Config::parse(&text, &path.display().to_string())
    }

    /// Sets or replaces `key`.
    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|e| e.key == key) {
            Some(e) => {
                e.value = value;
                e.line = 0;
            }
            None => self.entries.push(Entry {
                key: key.to_string(),
                value,
                line: 0,
            }),
        }
    }

    pub fn set_opt<T: Display>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn get_raw(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.key == key)
            .map(|e| e.value.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: Display,
    {
        self.get_raw(key).map(|v| parse_value(key, v)).transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: Display,
    {
        self.get(key)?.ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    /// Fails on the first key outside `known` that no prefix in `prefixes` claims.
    pub fn check_keys(&self, known: &[&str], prefixes: &[&str]) -> Result<(), ConfigError> {
        for e in &self.entries {
            let ok = known.contains(&e.key.as_str())
                || prefixes.iter().any(|p| e.key.starts_with(&format!("{p}.")));
            if !ok {
                return Err(ConfigError::UnknownKey(e.key.clone()));
            }
        }
        Ok(())
    }

    /// Applies `engine.*`, `reward.*`, `hv.*` and `rv.*` keys.
    pub fn apply_engine(&self, cfg: &mut EngineConfig) -> Result<(), ConfigError> {
        for e in &self.entries {
            let Some((group, field)) = e.key.split_once('.') else { continue };
            let key = e.key.as_str();
            let v = e.value.as_str();
            match group {
                "engine" => {
                    let slot = match field {
                        "dt" => &mut cfg.dt,
                        "decision_interval" => &mut cfg.decision_interval,
                        "control_zone" => &mut cfg.control_zone,
                        "vehicle_length" => &mut cfg.vehicle_length,
                        "collision_dwell" => &mut cfg.collision_dwell,
                        "critical_tta" => &mut cfg.critical_tta,
                        "commit_distance" => &mut cfg.commit_distance,
                        "lookahead" => &mut cfg.lookahead,
                        "delay_cap" => &mut cfg.delay_cap,
                        "straight_length" => &mut cfg.straight_length,
                        "left_length" => &mut cfg.left_length,
                        "right_length" => &mut cfg.right_length,
                        "record_decisions" => {
                            cfg.record_decisions = parse_value(key, v)?;
                            continue;
                        }
                        _ => return Err(ConfigError::UnknownKey(key.to_string())),
                    };
                    *slot = parse_value(key, v)?;
                }
                "reward" => match field {
                    "alpha" => cfg.reward.alpha = parse_value(key, v)?,
                    "beta" => cfg.reward.beta_penalty = parse_value(key, v)?,
                    _ => return Err(ConfigError::UnknownKey(key.to_string())),
                },
                "hv" => apply_idm(&mut cfg.hv_idm, key, field, v)?,
                "rv" => apply_idm(&mut cfg.rv_idm, key, field, v)?,
                _ => {}
            }
        }
        cfg.validate().map_err(ConfigError::Invalid)
    }

    /// Applies `learner.*` keys.
    pub fn apply_learner(&self, cfg: &mut LearnerConfig) -> Result<(), ConfigError> {
        for e in &self.entries {
            let Some(field) = e.key.strip_prefix("learner.") else { continue };
            let key = e.key.as_str();
            let v = e.value.as_str();
            match field {
                "gamma" => cfg.gamma = parse_value(key, v)?,
                "learning_rate" => cfg.learning_rate = parse_value(key, v)?,
                "batch_size" => cfg.batch_size = parse_value(key, v)?,
                "atoms" => cfg.atoms = parse_value(key, v)?,
                "v_min" => cfg.v_min = parse_value(key, v)?,
                "v_max" => cfg.v_max = parse_value(key, v)?,
                "hidden" => cfg.hidden = parse_list(key, v)?,
                "target_sync" => cfg.target_sync = parse_value(key, v)?,
                "epsilon_start" => cfg.epsilon_start = parse_value(key, v)?,
                "epsilon_end" => cfg.epsilon_end = parse_value(key, v)?,
                "epsilon_fraction" => cfg.epsilon_fraction = parse_value(key, v)?,
                "buffer_capacity" => cfg.buffer_capacity = parse_value(key, v)?,
                "per_alpha" => cfg.per_alpha = parse_value(key, v)?,
                "per_beta_start" => cfg.per_beta_start = parse_value(key, v)?,
                "per_beta_end" => cfg.per_beta_end = parse_value(key, v)?,
                "priority_floor" => cfg.priority_floor = parse_value(key, v)?,
                "grad_clip" => cfg.grad_clip = parse_value(key, v)?,
                "optimizer" => cfg.optimizer = parse_value(key, v)?,
                "train_every" => cfg.train_every = parse_value(key, v)?,
                "learning_starts" => cfg.learning_starts = parse_value(key, v)?,
                "beta_anneal_steps" => cfg.beta_anneal_steps = parse_value(key, v)?,
                _ => return Err(ConfigError::UnknownKey(key.to_string())),
            }
        }
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

fn apply_idm(p: &mut IdmParams, key: &str, field: &str, v: &str) -> Result<(), ConfigError> {
    let slot = match field {
        "desired_speed" => &mut p.desired_speed,
        "time_headway" => &mut p.time_headway,
        "min_gap" => &mut p.min_gap,
        "max_accel" => &mut p.max_accel,
        "comfortable_decel" => &mut p.comfortable_decel,
        "accel_exponent" => &mut p.accel_exponent,
        _ => return Err(ConfigError::UnknownKey(key.to_string())),
    };
    *slot = parse_value(key, v)?;
    Ok(())
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        message: e.to_string(),
    })
}

/// Whitespace- or comma-separated list.
pub fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: Display,
{
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

/// Settings shared by `simulate` and `train`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub network: Option<PathBuf>,
    pub demand: u64,
    pub rv_rate: f64,
    pub seed: u64,
    /// Rollout length for `simulate`, s.
    pub duration: f64,
    /// Demand horizon, s.
    pub horizon: f64,
    pub episodes: u64,
    /// Length of one training episode, s.
    pub episode_duration: f64,
    /// Vehicles per training episode.
    pub episode_demand: u64,
    pub engine: EngineConfig,
    pub learner: LearnerConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let t = TrainingConfig::default();
        ScenarioConfig {
            network: None,
            demand: 300,
            rv_rate: 0.6,
            seed: 0,
            duration: 1000.0,
            horizon: 1000.0,
            episodes: t.episodes,
            episode_duration: t.episode_duration,
            episode_demand: t.demand,
            engine: EngineConfig::default(),
            learner: t.learner,
        }
    }
}

impl ScenarioConfig {
    pub const KEYS: &'static [&'static str] = &[
        "network",
        "demand",
        "rv_rate",
        "seed",
        "duration",
        "horizon",
        "episodes",
        "episode_duration",
        "episode_demand",
    ];

    pub fn from_config(c: &Config) -> Result<ScenarioConfig, ConfigError> {
        c.check_keys(Self::KEYS, &["engine", "reward", "hv", "rv", "learner"])?;
        let mut s = ScenarioConfig::default();
        if let Some(p) = c.get_raw("network") {
            s.network = Some(PathBuf::from(p));
        }
        s.demand = c.get("demand")?.unwrap_or(s.demand);
        s.rv_rate = c.get("rv_rate")?.unwrap_or(s.rv_rate);
        s.seed = c.get("seed")?.unwrap_or(s.seed);
        s.duration = c.get("duration")?.unwrap_or(s.duration);
        s.horizon = c.get("horizon")?.unwrap_or(s.horizon);
        s.episodes = c.get("episodes")?.unwrap_or(s.episodes);
        s.episode_duration = c.get("episode_duration")?.unwrap_or(s.episode_duration);
        s.episode_demand = c.get("episode_demand")?.unwrap_or(s.episode_demand);
        c.apply_engine(&mut s.engine)?;
        s.learner = s.learner.with_reward_bound(s.engine.reward_bound());
        c.apply_learner(&mut s.learner)?;
        if !(0.0..=1.0).contains(&s.rv_rate) {
            return Err(ConfigError::Invalid(format!("rv_rate must lie in [0, 1], got {}", s.rv_rate)));
        }
        if !(s.duration >= 0.0 && s.duration.is_finite()) {
            return Err(ConfigError::Invalid(format!("duration must be >= 0, got {}", s.duration)));
        }
        Ok(s)
    }

    pub fn training(&self) -> TrainingConfig {
        let mut learner = self.learner.clone();
        learner.episodes = self.episodes;
        TrainingConfig {
            episodes: self.episodes,
            episode_duration: self.episode_duration,
            demand: self.episode_demand,
            rv_rate: self.rv_rate,
            seed: self.seed,
            engine: EngineConfig {
                record_decisions: false,
                ..self.engine.clone()
            },
            learner,
        }
    }
}
