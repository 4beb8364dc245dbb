// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt;
use std::process::ExitCode;

/// Exit status classes: 2 usage/config, 3 input data, 4 numeric failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Usage = 2,
    Data = 3,
    Numeric = 4,
}

#[derive(Debug)]
pub struct Failure {
    pub status: Status,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(status: Status, error: impl Into<anyhow::Error>) -> Self {
        Self {
            status,
            error: error.into(),
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        Self::new(Status::Usage, anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.status as u8)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<tfa_core::Error> for Failure {
    fn from(e: tfa_core::Error) -> Self {
        let status = match &e {
            tfa_core::Error::NonFinite { .. } => Status::Numeric,
            e if e.is_data_error() => Status::Data,
            tfa_core::Error::Io { .. } => Status::Data,
            _ => Status::Usage,
        };
        Self::new(status, e)
    }
}

pub type Outcome<T> = Result<T, Failure>;

/// Attaches an exit class and a context line to any error.
pub trait Classify<T> {
    fn or_status(self, status: Status, context: impl fmt::Display) -> Outcome<T>;

    fn or_data(self, context: impl fmt::Display) -> Outcome<T>
    where
        Self: Sized,
    {
        self.or_status(Status::Data, context)
    }

    fn or_usage(self, context: impl fmt::Display) -> Outcome<T>
    where
        Self: Sized,
    {
        self.or_status(Status::Usage, context)
    }
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_status(self, status: Status, context: impl fmt::Display) -> Outcome<T> {
        self.map_err(|e| Failure::new(status, e.into().context(context.to_string())))
    }
}
