use thiserror::Error;

/// Invalid circuit data, scenario parameters or feeder files.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid scenario: {field}: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("invalid node {index}: {reason}")]
    InvalidNode { index: usize, reason: String },
    #[error("invalid line {index}: {reason}")]
    InvalidLine { index: usize, reason: String },
    #[error("feeder has {nodes} nodes but {lines} lines")]
    TopologyMismatch { nodes: usize, lines: usize },
    #[error("case must be 1..4, got {0}")]
    UnknownCase(u32),
    #[error("feeder file line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("injection has {got} entries, feeder has {expected} nodes")]
    InjectionSize { expected: usize, got: usize },
    #[error("node {index}: |q_g| = {q} exceeds capability {q_max}")]
    InjectionBound { index: usize, q: f64, q_max: f64 },
    #[error("solution has {got} voltages, feeder needs {expected}")]
    SolutionSize { expected: usize, got: usize },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("distflow did not converge after {iterations} iterations (residual {residual:e})")]
    Diverged { iterations: usize, residual: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("real output {p_g} W exceeds inverter rating {s} VA")]
    OverRated { s: f64, p_g: f64 },
    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),
    #[error("alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
