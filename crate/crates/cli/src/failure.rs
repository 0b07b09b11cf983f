use std::fmt;

use spike_embed::Error;

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, config or input files (exit 2). Raised before any output is written.
    Usage(String),
    /// Anything that goes wrong once the run has started (exit 1).
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

pub trait Context<T> {
    fn usage(self, what: impl fmt::Display) -> Outcome<T>;
    fn runtime(self, what: impl fmt::Display) -> Outcome<T>;
}

impl<T> Context<T> for Result<T, Error> {
    fn usage(self, what: impl fmt::Display) -> Outcome<T> {
        self.map_err(|e| Failure::Usage(format!("{what}: {e}")))
    }

    fn runtime(self, what: impl fmt::Display) -> Outcome<T> {
        self.map_err(|e| Failure::Runtime(format!("{what}: {e}")))
    }
}

impl<T> Context<T> for std::io::Result<T> {
    fn usage(self, what: impl fmt::Display) -> Outcome<T> {
        self.map_err(|e| Failure::Usage(format!("{what}: {e}")))
    }

    fn runtime(self, what: impl fmt::Display) -> Outcome<T> {
        self.map_err(|e| Failure::Runtime(format!("{what}: {e}")))
    }
}
