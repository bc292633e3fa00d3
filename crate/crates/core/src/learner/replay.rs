//! Prioritized experience replay over a sum tree.

use rand::Rng;

use crate::agent::Action;
use crate::error::LearnerError;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
    /// Raw priority (before the exponent is applied).
    pub priority: f64,
}

/// Binary tree of partial sums over a fixed number of leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> SumTree {
        let leaves = capacity.max(1).next_power_of_two();
        SumTree {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    /// Sets leaf `i` and recomputes its ancestors from their children.
    pub fn set(&mut self, i: usize, value: f64) {
        debug_assert!(value >= 0.0 && value.is_finite());
        let mut k = self.leaves + i;
        self.nodes[k] = value;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative-sum interval contains `u` (`0 <= u < total`).
    /// Zero-weight leaves are never returned while any leaf is positive.
    pub fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            let right = self.nodes[2 * k + 1];
            if (u >= left && right > 0.0) || left <= 0.0 {
                u = (u - left).max(0.0);
                k = 2 * k + 1;
            } else {
                u = u.min(left);
                k *= 2;
            }
        }
        k - self.leaves
    }

    pub fn leaf_sum(&self) -> f64 {
        self.nodes[self.leaves..].iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledIndex {
    pub index: usize,
    pub probability: f64,
    pub weight: f64,
}

/// Ring buffer of transitions sampled with probability proportional to
/// `priority^alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    alpha: f64,
    items: Vec<Transition>,
    next: usize,
    tree: SumTree,
    max_priority: f64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, alpha: f64) -> ReplayBuffer {
        ReplayBuffer {
            capacity,
            alpha,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            tree: SumTree::new(capacity),
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn items(&self) -> &[Transition] {
        &self.items
    }

    /// Write position of the next insert.
    pub fn cursor(&self) -> usize {
        self.next
    }

    /// Inserts at the current maximum priority, overwriting the oldest item
    /// once full. Returns the slot used.
    pub fn push(&mut self, mut t: Transition) -> usize {
        t.priority = self.max_priority;
        self.insert_with_priority(t)
    }

    /// Inserts keeping the transition's own priority.
    pub fn insert_with_priority(&mut self, t: Transition) -> usize {
        let slot = self.next;
        let p = t.priority;
        if slot < self.items.len() {
            self.items[slot] = t;
        } else {
            self.items.push(t);
        }
        self.tree.set(slot, p.powf(self.alpha));
        self.max_priority = self.max_priority.max(p);
        self.next = (self.next + 1) % self.capacity;
        slot
    }

    pub fn update_priority(&mut self, i: usize, priority: f64) {
        let p = priority.max(0.0);
        self.items[i].priority = p;
        self.tree.set(i, p.powf(self.alpha));
        self.max_priority = self.max_priority.max(p);
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    /// One index drawn with probability proportional to `priority^alpha`.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.tree.total();
        self.tree.find(u).min(self.items.len() - 1)
    }

    /// `batch` independent draws with importance weights
    /// `(N * P(i))^-beta`, normalised by the batch maximum.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch: usize,
        beta: f64,
        rng: &mut R,
    ) -> Result<Vec<SampledIndex>, LearnerError> {
        if self.items.len() < batch || batch == 0 {
            return Err(LearnerError::Underfull {
                size: self.items.len(),
                batch,
            });
        }
        let n = self.items.len() as f64;
        let mut out: Vec<SampledIndex> = (0..batch)
            .map(|_| {
                let index = self.sample_index(rng);
                let probability = self.probability(index);
                SampledIndex {
                    index,
                    probability,
                    weight: (n * probability).powf(-beta),
                }
            })
            .collect();
        let max_w = out.iter().map(|s| s.weight).fold(0.0, f64::max);
        for s in &mut out {
            s.weight /= max_w;
        }
        Ok(out)
    }

    /// Restores internal state from checkpointed parts.
    pub fn from_parts(
        capacity: usize,
        alpha: f64,
        items: Vec<Transition>,
        next: usize,
        max_priority: f64,
    ) -> ReplayBuffer {
        let mut tree = SumTree::new(capacity);
        for (i, t) in items.iter().enumerate() {
            tree.set(i, t.priority.powf(alpha));
        }
        ReplayBuffer {
            capacity,
            alpha,
            items,
            next,
            tree,
            max_priority,
        }
    }
}
