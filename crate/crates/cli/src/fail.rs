use std::fmt;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DOMAINS: u8 = 3;
pub const EXIT_TRAINING: u8 = 4;
pub const EXIT_CHECKPOINT: u8 = 5;

/// An error message together with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn domains(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DOMAINS,
            message: message.into(),
        }
    }

    pub fn training(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_TRAINING,
            message: message.into(),
        }
    }

    pub fn checkpoint(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CHECKPOINT,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}
