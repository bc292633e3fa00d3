//! Versioned checkpoint: a `key = value` text header followed by raw
//! little-endian f64 payload.
//!
//! ```text
//! mtc-checkpoint 1
//! input = 12
//! hidden = 512 512 512
//! ...
//! payload = <number of f64 values>
//! <binary payload>
//! ```
//!
//! The payload holds, in order: online parameters, target parameters,
//! optimizer moments, and every buffered transition as
//! `obs, next_obs, action, reward, terminal, priority`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Learner, LearnerConfig, Optimizer, OptimizerKind, QNetwork, ReplayBuffer, Transition};
use crate::agent::Action;
use crate::error::LearnerError;

const MAGIC: &str = "mtc-checkpoint 1";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Option<Vec<u8>> {
    if s.len() % 2 != 0 {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).ok())
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn encode(learner: &Learner) -> Vec<u8> {
    let c = &learner.config;
    let mut meta: Vec<(&str, String)> = vec![
        ("input", learner.online.input.to_string()),
        ("hidden", join(&c.hidden)),
        ("atoms", c.atoms.to_string()),
        ("v_min", c.v_min.to_string()),
        ("v_max", c.v_max.to_string()),
        ("gamma", c.gamma.to_string()),
        ("learning_rate", c.learning_rate.to_string()),
        ("batch_size", c.batch_size.to_string()),
        ("target_sync", c.target_sync.to_string()),
        ("epsilon_start", c.epsilon_start.to_string()),
        ("epsilon_end", c.epsilon_end.to_string()),
        ("epsilon_fraction", c.epsilon_fraction.to_string()),
        ("episodes", c.episodes.to_string()),
        ("buffer_capacity", c.buffer_capacity.to_string()),
        ("per_alpha", c.per_alpha.to_string()),
        ("per_beta_start", c.per_beta_start.to_string()),
        ("per_beta_end", c.per_beta_end.to_string()),
        ("priority_floor", c.priority_floor.to_string()),
        ("grad_clip", c.grad_clip.to_string()),
        ("optimizer", c.optimizer.to_string()),
        ("train_every", c.train_every.to_string()),
        ("learning_starts", c.learning_starts.to_string()),
        ("beta_anneal_steps", c.beta_anneal_steps.to_string()),
        ("train_steps", learner.train_steps.to_string()),
        ("observed", learner.observed.to_string()),
        ("episodes_done", learner.episodes_done.to_string()),
        ("optimizer_steps", learner.optimizer.steps.to_string()),
        ("buffer_len", learner.buffer.len().to_string()),
        ("buffer_cursor", learner.buffer.cursor().to_string()),
        ("buffer_max_priority", learner.buffer.max_priority().to_string()),
        ("rng_seed", hex(&learner.rng.get_seed())),
        ("rng_stream", learner.rng.get_stream().to_string()),
        ("rng_word_pos", learner.rng.get_word_pos().to_string()),
    ];
    match c.optimizer {
        OptimizerKind::Sgd => {}
        OptimizerKind::Momentum { beta } => meta.push(("momentum_beta", beta.to_string())),
        OptimizerKind::Adam { beta1, beta2, eps } => {
            meta.push(("adam_beta1", beta1.to_string()));
            meta.push(("adam_beta2", beta2.to_string()));
            meta.push(("adam_eps", eps.to_string()));
        }
    }
    if let Some(l) = learner.last_loss {
        meta.push(("last_loss", l.to_string()));
    }

    let mut payload: Vec<f64> = learner.online.flat();
    payload.extend(learner.target.flat());
    for s in &learner.optimizer.state {
        payload.extend_from_slice(s);
    }
    for t in learner.buffer.items() {
        payload.extend_from_slice(&t.obs);
        payload.extend_from_slice(&t.next_obs);
        payload.push(t.action.index() as f64);
        payload.push(t.reward);
        payload.push(if t.terminal { 1.0 } else { 0.0 });
        payload.push(t.priority);
    }
    meta.push(("payload", payload.len().to_string()));

    let mut out = String::from(MAGIC);
    out.push('\n');
    for (k, v) in &meta {
        out.push_str(&format!("{k} = {v}\n"));
    }
    let mut bytes = out.into_bytes();
    bytes.reserve(payload.len() * 8);
    for x in payload {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    bytes
}

pub fn save(learner: &Learner, path: &Path) -> Result<(), LearnerError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|source| LearnerError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
    }
    fs::write(path, encode(learner)).map_err(|source| LearnerError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<Learner, LearnerError> {
    let bytes = fs::read(path).map_err(|source| LearnerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes).map_err(|message| LearnerError::Checkpoint {
        path: path.to_path_buf(),
        message,
    })
}

/// Only the online network, for inference.
pub fn load_network(path: &Path) -> Result<QNetwork, LearnerError> {
    Ok(load(path)?.online)
}

struct Header {
    fields: BTreeMap<String, String>,
}

impl Header {
    fn raw(&self, key: &str) -> Result<&str, String> {
        self.fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| format!("missing header field `{key}`"))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T, String> {
        let raw = self.raw(key)?;
        raw.parse()
            .map_err(|_| format!("header field `{key}`: cannot parse `{raw}`"))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Learner, String> {
    let mut fields = BTreeMap::new();
    let mut offset = 0;
    let mut first = true;
    loop {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or("truncated header")?;
        let line = std::str::from_utf8(&bytes[offset..offset + end]).map_err(|_| "header is not utf-8")?;
        offset += end + 1;
        if first {
            if line != MAGIC {
                return Err(format!("not a checkpoint (expected `{MAGIC}`, found `{line}`)"));
            }
            first = false;
            continue;
        }
        let (k, v) = line.split_once(" = ").ok_or_else(|| format!("malformed header line `{line}`"))?;
        fields.insert(k.to_string(), v.to_string());
        if k == "payload" {
            break;
        }
    }
    let h = Header { fields };
    let hidden: Vec<usize> = h
        .raw("hidden")?
        .split_whitespace()
        .map(|x| x.parse().map_err(|_| format!("bad hidden size `{x}`")))
        .collect::<Result<_, _>>()?;
    let optimizer = match h.raw("optimizer")? {
        "sgd" => OptimizerKind::Sgd,
        "momentum" => OptimizerKind::Momentum {
            beta: h.get("momentum_beta")?,
        },
        "adam" => OptimizerKind::Adam {
            beta1: h.get("adam_beta1")?,
            beta2: h.get("adam_beta2")?,
            eps: h.get("adam_eps")?,
        },
        other => return Err(format!("unknown optimizer `{other}`")),
    };
    let config = LearnerConfig {
        gamma: h.get("gamma")?,
        learning_rate: h.get("learning_rate")?,
        batch_size: h.get("batch_size")?,
        atoms: h.get("atoms")?,
        v_min: h.get("v_min")?,
        v_max: h.get("v_max")?,
        hidden,
        target_sync: h.get("target_sync")?,
        epsilon_start: h.get("epsilon_start")?,
        epsilon_end: h.get("epsilon_end")?,
        epsilon_fraction: h.get("epsilon_fraction")?,
        episodes: h.get("episodes")?,
        buffer_capacity: h.get("buffer_capacity")?,
        per_alpha: h.get("per_alpha")?,
        per_beta_start: h.get("per_beta_start")?,
        per_beta_end: h.get("per_beta_end")?,
        priority_floor: h.get("priority_floor")?,
        grad_clip: h.get("grad_clip")?,
        optimizer,
        train_every: h.get("train_every")?,
        learning_starts: h.get("learning_starts")?,
        beta_anneal_steps: h.get("beta_anneal_steps")?,
    };
    let input: usize = h.get("input")?;
    let expected: usize = h.get("payload")?;
    let body = &bytes[offset..];
    if body.len() != expected * 8 {
        return Err(format!(
            "payload holds {} bytes, header announces {} values",
            body.len(),
            expected
        ));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();

    let mut learner = Learner::new(config.clone(), input, 0).map_err(|e| e.to_string())?;
    let mut cursor = 0usize;
    let mut take = |n: usize| -> Result<&[f64], String> {
        let s = values.get(cursor..cursor + n).ok_or("payload too short")?;
        cursor += n;
        Ok(s)
    };
    let n_params = learner.online.num_params();
    learner.online.set_flat(take(n_params)?);
    learner.target.set_flat(take(n_params)?);
    let mut optim = Optimizer::new(config.optimizer, config.learning_rate, config.grad_clip, &learner.online);
    optim.steps = h.get("optimizer_steps")?;
    for s in optim.state.iter_mut() {
        let n = s.len();
        s.copy_from_slice(take(n)?);
    }
    learner.optimizer = optim;

    let buffer_len: usize = h.get("buffer_len")?;
    let mut items = Vec::with_capacity(buffer_len);
    for _ in 0..buffer_len {
        let rec = take(2 * input + 4)?;
        items.push(Transition {
            obs: rec[..input].to_vec(),
            next_obs: rec[input..2 * input].to_vec(),
            action: Action::from_index(rec[2 * input] as usize),
            reward: rec[2 * input + 1],
            terminal: rec[2 * input + 2] != 0.0,
            priority: rec[2 * input + 3],
        });
    }
    if cursor != values.len() {
        return Err("payload has trailing values".into());
    }
    learner.buffer = ReplayBuffer::from_parts(
        config.buffer_capacity,
        config.per_alpha,
        items,
        h.get("buffer_cursor")?,
        h.get("buffer_max_priority")?,
    );

    let seed_bytes = unhex(h.raw("rng_seed")?).ok_or("bad rng seed")?;
    let seed: [u8; 32] = seed_bytes.try_into().map_err(|_| "rng seed must be 32 bytes")?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(h.get("rng_stream")?);
    rng.set_word_pos(h.get("rng_word_pos")?);
    learner.rng = rng;
    learner.train_steps = h.get("train_steps")?;
    learner.observed = h.get("observed")?;
    learner.episodes_done = h.get("episodes_done")?;
    learner.last_loss = match h.fields.get("last_loss") {
        Some(v) => Some(v.parse().map_err(|_| "bad last_loss")?),
        None => None,
    };
    Ok(learner)
}
