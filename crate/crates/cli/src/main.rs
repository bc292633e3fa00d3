use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use mtc_core::config::{Config, ScenarioConfig};
use mtc_core::engine::{DemandSchedule, Simulation};
use mtc_core::experiment::{results_csv, run_sweep, summary_csv, summary_table, write_text, ExperimentSpec};
use mtc_core::learner::checkpoint;
use mtc_core::network::{generate_grid, parse_network, remove_left_turns, serialize_network, GridGeometry, Network};
use mtc_core::training::{self, CHECKPOINT_FILE};
use mtc_core::{ConfigError, PolicySource};

#[derive(Parser)]
#[command(name = "mtc", version, about = "Mixed-traffic intersection simulator and Stop/Go learner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a grid network.
    Netgen(NetgenArgs),
    /// Rewrite a network file.
    Transform(TransformArgs),
    /// Train the shared RV policy.
    Train(TrainArgs),
    /// Run one rollout and write its event log and summary.
    Simulate(SimulateArgs),
    /// Run an experiment sweep.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct NetgenArgs {
    #[arg(long)]
    unsignalized: usize,
    #[arg(long)]
    signalized: usize,
    #[arg(long, default_value_t = 2)]
    rows: usize,
    #[arg(long, default_value_t = 7)]
    cols: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TransformArgs {
    /// Replace every left turn with its straight-through counterpart.
    #[arg(long)]
    no_left_turns: bool,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rv_rate: Option<f64>,
    /// Output directory for the checkpoint and the training curve.
    #[arg(long)]
    checkpoint: PathBuf,
    /// `key = value` settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue from the checkpoint in `--checkpoint` if one exists.
    #[arg(long)]
    resume: bool,
    /// Save every this many episodes.
    #[arg(long, default_value_t = 10)]
    save_every: u64,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    demand: Option<u64>,
    #[arg(long)]
    rv_rate: Option<f64>,
    /// Checkpoint path, `random` or `always-go`.
    #[arg(long, default_value = "random")]
    policy: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value = "random")]
    policy: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    summary: PathBuf,
    #[arg(long)]
    rollouts: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        if let Some(c) = e.downcast_ref::<ConfigError>() {
            return Failure::Usage(c.to_string());
        }
        Failure::Runtime(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<mtc_core::LearnerError> for Failure {
    fn from(e: mtc_core::LearnerError) -> Self {
        match e {
            mtc_core::LearnerError::InvalidConfig(m) => Failure::Usage(m),
            other => Failure::Runtime(other.into()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Netgen(a) => netgen(a),
        Command::Transform(a) => transform(a),
        Command::Train(a) => train(a),
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_network(path: &Path) -> anyhow::Result<Network> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_network(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => Ok(Config::default()),
    }
}

fn netgen(a: NetgenArgs) -> Outcome {
    let net = generate_grid(a.unsignalized, a.signalized, &GridGeometry::new(a.rows, a.cols))
        .map_err(|e| Failure::Usage(e.to_string()))?;
    write_file(&a.out, &serialize_network(&net))?;
    Ok(())
}

fn transform(a: TransformArgs) -> Outcome {
    if !a.no_left_turns {
        return Err(Failure::Usage("no transform selected (use --no-left-turns)".into()));
    }
    let net = read_network(&a.input)?;
    let out = remove_left_turns(&net).context("removing left turns")?;
    write_file(&a.out, &serialize_network(&out))?;
    Ok(())
}

fn scenario(cfg: &Config) -> Result<(ScenarioConfig, Network), Failure> {
    let s = ScenarioConfig::from_config(cfg)?;
    let path = s
        .network
        .clone()
        .ok_or_else(|| Failure::Usage("a network is required (--network or `network =`)".into()))?;
    let net = read_network(&path)?;
    Ok((s, net))
}

fn train(a: TrainArgs) -> Outcome {
    let mut cfg = load_config(a.config.as_deref())?;
    cfg.set_opt("network", a.network.as_ref().map(|p| p.display().to_string()));
    cfg.set_opt("episodes", a.episodes);
    cfg.set_opt("seed", a.seed);
    cfg.set_opt("rv_rate", a.rv_rate);
    let (s, net) = scenario(&cfg)?;
    let tc = s.training();
    let ckpt = a.checkpoint.join(CHECKPOINT_FILE);
    let mut learner = if a.resume && ckpt.exists() {
        let mut l = checkpoint::load(&ckpt)?;
        l.config.episodes = tc.episodes;
        l
    } else {
        let curve = a.checkpoint.join(training::CURVE_FILE);
        if curve.exists() {
            fs::remove_file(&curve).with_context(|| format!("replacing {}", curve.display()))?;
        }
        training::new_learner(&net, &tc)?
    };
    let mut batch = Vec::new();
    while learner.episodes_done < tc.episodes {
        let episode = learner.episodes_done;
        let stats = training::run_episode(&net, &tc, &mut learner, episode)?;
        if !a.quiet {
            eprintln!(
                "episode {:>4}  eps {:.3}  reward {:>8.3}  collisions {:>3}  loss {}",
                stats.episode,
                stats.epsilon,
                stats.mean_reward,
                stats.collisions,
                stats.loss.map_or_else(|| "-".to_string(), |l| format!("{l:.4}"))
            );
        }
        batch.push(stats);
        if learner.episodes_done % a.save_every.max(1) == 0 || learner.episodes_done == tc.episodes {
            training::save_run(&a.checkpoint, &learner, &batch)?;
            batch.clear();
        }
    }
    if !batch.is_empty() {
        training::save_run(&a.checkpoint, &learner, &batch)?;
    }
    if learner.episodes_done == 0 || !ckpt.exists() {
        training::save_run(&a.checkpoint, &learner, &[])?;
    }
    Ok(())
}

fn parse_policy(token: &str) -> anyhow::Result<PolicySource> {
    PolicySource::parse(token).with_context(|| format!("loading policy `{token}`"))
}

fn simulate(a: SimulateArgs) -> Outcome {
    let mut cfg = load_config(a.config.as_deref())?;
    cfg.set_opt("network", a.network.as_ref().map(|p| p.display().to_string()));
    cfg.set_opt("demand", a.demand);
    cfg.set_opt("rv_rate", a.rv_rate);
    cfg.set_opt("seed", a.seed);
    cfg.set_opt("duration", a.duration);
    let (s, net) = scenario(&cfg)?;
    let policy = parse_policy(&a.policy)?;
    if let Some(n) = policy.input_len() {
        let got = mtc_core::agent::observation_len(&net);
        if n != got {
            return Err(Failure::Runtime(anyhow::anyhow!(
                "policy expects observations of length {n}, network produces {got}"
            )));
        }
    }
    let schedule = DemandSchedule::new(s.demand, s.horizon, s.rv_rate);
    schedule.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let mut sim = Simulation::new(&net, s.engine.clone(), &schedule, s.seed).context("building rollout")?;
    let mut p = policy.instantiate();
    sim.run(s.duration, p.as_mut());
    let summary = sim.summary(s.seed);
    let log = sim.into_log();
    if let Some(path) = &a.events {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        log.write_csv(BufWriter::new(f)).with_context(|| format!("writing {}", path.display()))?;
    }
    let text = format!("policy = {policy}\n{}", summary.to_text());
    match &a.summary {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Outcome {
    let mut cfg = load_config(a.spec.as_deref())?;
    cfg.set_opt("rollouts", a.rollouts);
    cfg.set_opt("base_seed", a.base_seed);
    let spec = ExperimentSpec::from_config(&cfg)?;
    let policy = parse_policy(&a.policy)?;
    let result = run_sweep(&spec, &policy).context("running sweep")?;
    write_text(&a.out, &results_csv(&result.rows)).context("writing results")?;
    write_text(&a.summary, &summary_csv(&result.cells)).context("writing summary")?;
    if !a.quiet {
        print!("{}", summary_table(&spec, &result.cells));
    }
    Ok(())
}
