use std::fmt;

use lawforge_core::dsl::DslError;
use lawforge_core::evolution::EvolutionError;
use lawforge_core::mpm::{SimError, VltjError};
use lawforge_core::operator::OperatorError;
use lawforge_core::scene::SceneError;

/// Exit codes: 1 I/O, 2 config, 3 parse, 4 simulation, 5 operator.
#[derive(Debug)]
pub enum CliError {
    Io(String),
    Config(String),
    Parse(String),
    Sim(String),
    Operator(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Sim(_) => 4,
            CliError::Operator(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) | CliError::Config(m) | CliError::Parse(m) | CliError::Sim(m) | CliError::Operator(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<VltjError> for CliError {
    fn from(e: VltjError) -> Self {
        match e {
            VltjError::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Sim(e.to_string())
    }
}

impl From<DslError> for CliError {
    fn from(e: DslError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Sim(e) => CliError::Sim(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<OperatorError> for CliError {
    fn from(e: OperatorError) -> Self {
        CliError::Operator(e.to_string())
    }
}

impl From<EvolutionError> for CliError {
    fn from(e: EvolutionError) -> Self {
        match e {
            EvolutionError::Config(m) => CliError::Config(m),
            EvolutionError::Checkpoint(m) => CliError::Config(format!("checkpoint: {m}")),
            EvolutionError::Operator { source, completed } => CliError::Operator(format!(
                "{source}; {completed} iteration(s) are checkpointed, rerun the same command to resume"
            )),
        }
    }
}
