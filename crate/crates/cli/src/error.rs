use std::fmt;

use ctvl_core::Error;

/// Process exit codes: 1 for runtime or verification failures, 2 for bad
/// usage or malformed input.
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: message.into(),
        }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        Self::io(message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) | Error::NonFiniteLoss(_) | Error::NonFiniteGradient { .. } => EXIT_FAILURE,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Attach the offending path to an I/O or parse error.
pub fn at(path: &std::path::Path) -> impl FnOnce(Error) -> CliError + '_ {
    move |e| {
        let mut c = CliError::from(e);
        let shown = path.display().to_string();
        if !c.message.contains(&shown) {
            c.message = format!("{shown}: {}", c.message);
        }
        c
    }
}
