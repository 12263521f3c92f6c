use std::fmt;
use std::process::ExitCode;

use linex_core::Error;

/// Failure classes, each with its own process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Class {
    Config = 2,
    Io = 3,
    Model = 4,
    Numeric = 5,
}

#[derive(Debug)]
pub struct Failure {
    pub class: Class,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { class: Class::Config, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure { class: Class::Io, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Failure { class: Class::Numeric, message: message.into() }
    }

    pub fn from_core(e: Error) -> Self {
        let class = match e {
            Error::InvalidArgument(_) => Class::Config,
            Error::Io { .. } | Error::Schema(_) | Error::EmptyDataset => Class::Io,
            Error::Spawn(_) | Error::Protocol(_) | Error::Timeout(_) | Error::BlackBox(_) | Error::Train(_) => Class::Model,
            Error::SingularSystem
            | Error::InnerDivergence { .. }
            | Error::DegenerateGamma
            | Error::DegenerateClass(_)
            | Error::DegenerateVariance => Class::Numeric,
        };
        Failure { class, message: e.to_string() }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.class as u8)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::from_core(e)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}
