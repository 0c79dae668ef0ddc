use std::fmt;

use phonostream::corpus::CorpusError;
use phonostream::eval::EvalError;
use phonostream::grammar::GrammarError;
use phonostream::lm::LmError;
use phonostream::phonemizer::PhonemizerError;
use phonostream::tokenizer::TokenizerError;

pub const EXIT_INVALID: u8 = 1;
pub const EXIT_IO: u8 = 2;

/// An error with the exit status it maps to: 1 for invalid input, 2 for I/O.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }

    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type Result<T> = std::result::Result<T, Failure>;

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Failure::io(e.to_string())
        } else {
            Failure::invalid(e.to_string())
        }
    }
}

macro_rules! classify {
    ($ty:ty, |$e:ident| $is_io:expr) => {
        impl From<$ty> for Failure {
            fn from($e: $ty) -> Self {
                if $is_io {
                    Failure::io($e.to_string())
                } else {
                    Failure::invalid($e.to_string())
                }
            }
        }
    };
}

classify!(PhonemizerError, |e| matches!(e, PhonemizerError::Io(_)));
classify!(TokenizerError, |e| matches!(e, TokenizerError::Io(_)));
classify!(CorpusError, |e| matches!(e, CorpusError::Io(_)));
classify!(LmError, |e| matches!(e, LmError::Io(_)));
classify!(GrammarError, |e| matches!(e, GrammarError::Io(_)));
classify!(EvalError, |e| matches!(e, EvalError::Io(_) | EvalError::Lm(LmError::Io(_))));
