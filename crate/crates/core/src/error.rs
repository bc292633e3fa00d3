use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("{owner} references undefined {kind} `{id}`")]
    UnknownReference {
        owner: String,
        kind: &'static str,
        id: String,
    },
    #[error("lane `{lane}`: {message}")]
    InvalidLane { lane: String, message: String },
    #[error("movement `{movement}`: {message}")]
    InvalidMovement { movement: String, message: String },
    #[error("conflict relation is asymmetric: `{a}` lists `{b}` but not vice versa")]
    AsymmetricConflict { a: String, b: String },
    #[error("movement `{movement}` conflicts with itself")]
    ReflexiveConflict { movement: String },
    #[error("conflict between `{a}` and `{b}` spans two intersections")]
    CrossIntersectionConflict { a: String, b: String },
    #[error("intersection `{intersection}`: phase {phase} permits conflicting movements `{a}` and `{b}`")]
    PhaseConflict {
        intersection: String,
        phase: usize,
        a: String,
        b: String,
    },
    #[error("intersection `{intersection}`: {message}")]
    InvalidSignalPlan {
        intersection: String,
        message: String,
    },
    #[error("route `{route}`: {message}")]
    InvalidRoute { route: String, message: String },
    #[error("grid {rows}x{cols} cannot host {requested} intersections")]
    GridTooSmall {
        rows: usize,
        cols: usize,
        requested: usize,
    },
    #[error("intersection `{intersection}`: left movement `{movement}` has no straight counterpart")]
    NoStraightCounterpart {
        intersection: String,
        movement: String,
    },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: line {line}: {message}")]
    Syntax {
        path: String,
        line: usize,
        message: String,
    },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot parse `{value}`: {message}")]
    InvalidValue {
        key: String,
        value: String,
        message: String,
    },
    #[error("missing required setting `{0}`")]
    Missing(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("observation length {got} does not match network input {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("replay buffer holds {size} transitions, batch of {batch} requested")]
    Underfull { size: usize, batch: usize },
    #[error("non-finite loss at train step {step}: {diagnostics}")]
    NonFiniteLoss { step: u64, diagnostics: String },
    #[error("invalid learner configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("vehicle {0} does not exist")]
    UnknownVehicle(u64),
    #[error("vehicle {0} is not inside a control zone")]
    NotInControlZone(u64),
    #[error("unknown movement id {0}")]
    UnknownMovement(usize),
    #[error("invalid demand schedule: {0}")]
    InvalidDemand(String),
    #[error("event log: {0}")]
    Log(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("collision rate undefined: no vehicle departed")]
    UndefinedRate,
    #[error("cannot aggregate an empty set of rows")]
    EmptyAggregate,
    #[error("rows belong to different cells: {0}")]
    MixedCells(String),
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("policy expects observations of length {expected}, network `{config}` produces {got}")]
    PolicyShape {
        config: String,
        expected: usize,
        got: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
