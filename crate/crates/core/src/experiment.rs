//! Sweeps over intersection configurations, RV rates, demand levels and the
//! left-turn transform.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::agent::observation_len;
use crate::config::{parse_list, Config};
use crate::engine::{run_rollout, DemandSchedule, EngineConfig};
use crate::error::{ConfigError, SweepError};
use crate::metrics::{aggregate, CellSummary};
use crate::network::{generate_grid, remove_left_turns, GridGeometry, Network};
use crate::policy::PolicySource;

/// Counts of unsignalized and signalized intersections, written `12U+2S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetworkConfig {
    pub unsignalized: usize,
    pub signalized: usize,
}

impl fmt::Display for NetworkConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}U+{}S", self.unsignalized, self.signalized)
    }
}

impl FromStr for NetworkConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("expected `<n>U+<m>S`, got `{s}`");
        let (u, rest) = s.split_once('U').ok_or_else(bad)?;
        let sig = rest
            .strip_prefix('+')
            .and_then(|r| r.strip_suffix('S'))
            .ok_or_else(bad)?;
        Ok(NetworkConfig {
            unsignalized: u.parse().map_err(|_| bad())?,
            signalized: sig.parse().map_err(|_| bad())?,
        })
    }
}

/// Which turn variants of each network to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformMode {
    Off,
    On,
    Both,
}

impl TransformMode {
    pub fn variants(self) -> &'static [bool] {
        match self {
            TransformMode::Off => &[false],
            TransformMode::On => &[true],
            TransformMode::Both => &[false, true],
        }
    }
}

impl FromStr for TransformMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" | "false" => Ok(TransformMode::Off),
            "on" | "true" => Ok(TransformMode::On),
            "both" => Ok(TransformMode::Both),
            other => Err(format!("expected off, on or both, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub configs: Vec<NetworkConfig>,
    pub rv_rates: Vec<f64>,
    pub demands: Vec<u64>,
    pub transform: TransformMode,
    pub rollouts: usize,
    pub base_seed: u64,
    pub duration: f64,
    pub horizon: f64,
    pub geometry: GridGeometry,
    pub engine: EngineConfig,
}

impl Default for ExperimentSpec {
    /// Five configurations on the 2x7 grid, four RV rates, desk demand.
    fn default() -> Self {
        ExperimentSpec {
            configs: [(12, 2), (10, 4), (8, 6), (6, 8), (4, 10)]
                .into_iter()
                .map(|(u, s)| NetworkConfig {
                    unsignalized: u,
                    signalized: s,
                })
                .collect(),
            rv_rates: vec![0.25, 0.4, 0.6, 0.8],
            demands: vec![300],
            transform: TransformMode::Off,
            rollouts: 10,
            base_seed: 0,
            duration: 1000.0,
            horizon: 1000.0,
            geometry: GridGeometry::new(2, 7),
            engine: EngineConfig {
                record_decisions: false,
                ..EngineConfig::default()
            },
        }
    }
}

/// One point of the Cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub config: NetworkConfig,
    pub rv_rate: f64,
    pub demand: u64,
    pub left_turns_removed: bool,
}

impl ExperimentSpec {
    pub const KEYS: &'static [&'static str] = &[
        "configs",
        "rv_rates",
        "demands",
        "transform",
        "rollouts",
        "base_seed",
        "duration",
        "horizon",
        "rows",
        "cols",
        "link_length",
        "boundary_length",
        "phase_duration",
        "all_red",
        "main_axis_weight",
    ];

    pub fn from_config(c: &Config) -> Result<ExperimentSpec, ConfigError> {
        c.check_keys(Self::KEYS, &["engine", "reward", "hv", "rv"])?;
        let mut s = ExperimentSpec::default();
        if let Some(v) = c.get_raw("configs") {
            s.configs = parse_list("configs", v)?;
        }
        if let Some(v) = c.get_raw("rv_rates") {
            s.rv_rates = parse_list("rv_rates", v)?;
        }
        if let Some(v) = c.get_raw("demands") {
            s.demands = parse_list("demands", v)?;
        }
        s.transform = c.get("transform")?.unwrap_or(s.transform);
        s.rollouts = c.get("rollouts")?.unwrap_or(s.rollouts);
        s.base_seed = c.get("base_seed")?.unwrap_or(s.base_seed);
        s.duration = c.get("duration")?.unwrap_or(s.duration);
        s.horizon = c.get("horizon")?.unwrap_or(s.horizon);
        let g = &mut s.geometry;
        g.rows = c.get("rows")?.unwrap_or(g.rows);
        g.cols = c.get("cols")?.unwrap_or(g.cols);
        g.link_length = c.get("link_length")?.unwrap_or(g.link_length);
        g.boundary_length = c.get("boundary_length")?.unwrap_or(g.boundary_length);
        g.phase_duration = c.get("phase_duration")?.unwrap_or(g.phase_duration);
        g.all_red = c.get("all_red")?.unwrap_or(g.all_red);
        g.main_axis_weight = c.get("main_axis_weight")?.unwrap_or(g.main_axis_weight);
        c.apply_engine(&mut s.engine)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.configs.is_empty() || self.rv_rates.is_empty() || self.demands.is_empty() {
            return bad("configs, rv_rates and demands must be non-empty");
        }
        if self.rollouts == 0 {
            return bad("rollouts must be >= 1");
        }
        if self.rv_rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("rv_rates must lie in [0, 1]");
        }
        if self.demands.contains(&0) {
            return bad("demands must be > 0");
        }
        if !(self.duration > 0.0 && self.horizon > 0.0) {
            return bad("duration and horizon must be > 0");
        }
        self.engine.validate().map_err(ConfigError::Invalid)
    }

    /// Cells in canonical order: config, then rate, then demand, then transform.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &config in &self.configs {
            for &rv_rate in &self.rv_rates {
                for &demand in &self.demands {
                    for &left_turns_removed in self.transform.variants() {
                        out.push(Cell {
                            index: out.len(),
                            config,
                            rv_rate,
                            demand,
                            left_turns_removed,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn seed(&self, cell: usize, rollout: usize) -> u64 {
        self.base_seed + (cell * self.rollouts + rollout) as u64
    }

    pub fn build_network(&self, config: NetworkConfig, left_turns_removed: bool) -> Result<Network, SweepError> {
        let net = generate_grid(config.unsignalized, config.signalized, &self.geometry)?;
        Ok(if left_turns_removed {
            remove_left_turns(&net)?
        } else {
            net
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub cell: usize,
    pub config: String,
    pub rv_rate: f64,
    pub demand: u64,
    pub left_turns_removed: bool,
    pub seed: u64,
    pub spawned: u64,
    pub departed: u64,
    pub collided: u64,
    /// `None` when nobody departed.
    pub collision_rate: Option<f64>,
}

impl ResultRow {
    pub const HEADER: &'static str =
        "cell,config,rv_rate,demand,left_turns_removed,seed,spawned,departed,collided,collision_rate";

    pub fn same_cell(&self, other: &ResultRow) -> bool {
        self.config == other.config
            && self.rv_rate == other.rv_rate
            && self.demand == other.demand
            && self.left_turns_removed == other.left_turns_removed
    }

    pub fn cell_label(&self) -> String {
        format!(
            "{} rv={} demand={} no_left={}",
            self.config, self.rv_rate, self.demand, self.left_turns_removed
        )
    }

    pub fn to_csv(&self) -> String {
        let cr = self.collision_rate.map_or_else(String::new, |c| c.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.cell,
            self.config,
            self.rv_rate,
            self.demand,
            self.left_turns_removed,
            self.seed,
            self.spawned,
            self.departed,
            self.collided,
            cr
        )
    }

    pub fn from_csv(line: &str) -> Result<ResultRow, String> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 10 {
            return Err(format!("expected 10 fields, got {}", f.len()));
        }
        let num = |i: usize| -> Result<u64, String> { f[i].parse().map_err(|e| format!("field {i}: {e}")) };
        Ok(ResultRow {
            cell: num(0)? as usize,
            config: f[1].to_string(),
            rv_rate: f[2].parse().map_err(|e| format!("rv_rate: {e}"))?,
            demand: num(3)?,
            left_turns_removed: f[4].parse().map_err(|e| format!("left_turns_removed: {e}"))?,
            seed: num(5)?,
            spawned: num(6)?,
            departed: num(7)?,
            collided: num(8)?,
            collision_rate: if f[9].is_empty() {
                None
            } else {
                Some(f[9].parse().map_err(|e| format!("collision_rate: {e}"))?)
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<ResultRow>,
    pub cells: Vec<CellSummary>,
}

/// Runs one rollout of `cell`.
pub fn run_cell(
    spec: &ExperimentSpec,
    cell: &Cell,
    net: &Network,
    policy: &PolicySource,
    seed: u64,
) -> Result<ResultRow, SweepError> {
    let schedule = DemandSchedule::new(cell.demand, spec.horizon, cell.rv_rate);
    let mut p = policy.instantiate();
    let (_, s) = run_rollout(net, &schedule, &spec.engine, p.as_mut(), seed, spec.duration)?;
    Ok(ResultRow {
        cell: cell.index,
        config: cell.config.to_string(),
        rv_rate: cell.rv_rate,
        demand: cell.demand,
        left_turns_removed: cell.left_turns_removed,
        seed,
        spawned: s.spawned,
        departed: s.departed,
        collided: s.collided,
        collision_rate: s.collision_rate(),
    })
}

/// Every rollout of the spec, in parallel; rows come back in canonical order.
pub fn run_sweep(spec: &ExperimentSpec, policy: &PolicySource) -> Result<SweepResult, SweepError> {
    spec.validate()?;
    let cells = spec.cells();
    let mut nets: Vec<(NetworkConfig, bool, Network)> = Vec::new();
    for c in &cells {
        if nets.iter().any(|(k, t, _)| *k == c.config && *t == c.left_turns_removed) {
            continue;
        }
        let net = spec.build_network(c.config, c.left_turns_removed)?;
        if let Some(expected) = policy.input_len() {
            let got = observation_len(&net);
            if got != expected {
                return Err(SweepError::PolicyShape {
                    config: c.config.to_string(),
                    expected,
                    got,
                });
            }
        }
        nets.push((c.config, c.left_turns_removed, net));
    }
    let jobs: Vec<(&Cell, usize)> = cells
        .iter()
        .flat_map(|c| (0..spec.rollouts).map(move |r| (c, r)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(cell, r)| {
            let net = &nets
                .iter()
                .find(|(k, t, _)| *k == cell.config && *t == cell.left_turns_removed)
                .expect("network built for every cell")
                .2;
            run_cell(spec, cell, net, policy, spec.seed(cell.index, r))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let summaries = rows
        .chunks(spec.rollouts)
        .map(aggregate)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResult {
        rows,
        cells: summaries,
    })
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(ResultRow::HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

pub const SUMMARY_HEADER: &str =
    "config,rv_rate,demand,left_turns_removed,rollouts,undefined,mean_cr,std_cr,min_cr,max_cr,mean_cr_percent";

/// Long-form summary, one line per cell.
pub fn summary_csv(cells: &[CellSummary]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for c in cells {
        let f = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
        let st = c.stats.as_ref();
        let defined = st.map_or(0, |s| s.count);
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            c.config,
            c.rv_rate,
            c.demand,
            c.left_turns_removed,
            defined + c.undefined,
            c.undefined,
            f(st.map(|s| s.mean)),
            f(st.map(|s| s.std_dev)),
            f(st.map(|s| s.min)),
            f(st.map(|s| s.max)),
            st.map_or_else(String::new, |s| format!("{:.3}", 100.0 * s.mean)),
        ));
    }
    s
}

/// Table with configurations as columns and RV rates as rows, one block per
/// demand level and transform variant.
pub fn summary_table(spec: &ExperimentSpec, cells: &[CellSummary]) -> String {
    let mut out = String::new();
    for &demand in &spec.demands {
        for &no_left in spec.transform.variants() {
            out.push_str(&format!(
                "demand {demand}{}\n",
                if no_left { ", left turns removed" } else { "" }
            ));
            out.push_str(&format!("{:>8}", "RV rate"));
            for c in &spec.configs {
                out.push_str(&format!(" {:>18}", c.to_string()));
            }
            out.push('\n');
            for &rate in &spec.rv_rates {
                out.push_str(&format!("{:>7.0}%", 100.0 * rate));
                for cfg in &spec.configs {
                    let label = cfg.to_string();
                    let cell = cells.iter().find(|c| {
                        c.config == label && c.rv_rate == rate && c.demand == demand && c.left_turns_removed == no_left
                    });
                    let text = match cell.and_then(|c| c.stats.as_ref()) {
                        Some(st) => format!("{:.3} ± {:.3}", 100.0 * st.mean, 100.0 * st.std_dev),
                        None => "-".to_string(),
                    };
                    out.push_str(&format!(" {text:>18}"));
                }
                out.push('\n');
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<(), SweepError> {
    let io = |source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)
}
