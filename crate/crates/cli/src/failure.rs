//! Exit codes and the error type carrying them.

use std::fmt;
use std::path::Path;

use aquacal::hydraulics::HydraulicError;

pub const OK: u8 = 0;
/// Parse, validation or other bad input.
pub const INPUT: u8 = 2;
pub const CONVERGENCE: u8 = 3;
pub const IO: u8 = 4;
pub const RULE_CONFLICT: u8 = 5;
/// Seed archive incompatible with the problem.
pub const SEED_SCHEMA: u8 = 6;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl Failure {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }

    pub fn input(message: impl fmt::Display) -> Self {
        Self::new(INPUT, anyhow::anyhow!("{message}"))
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

pub trait Coded<T> {
    fn code(self, code: u8) -> Outcome<T>;
    fn code_with(self, code: u8, context: impl FnOnce() -> String) -> Outcome<T>;
}

impl<T, E> Coded<T> for Result<T, E>
where
    E: std::error::Error + Send + Sync + 'static,
{
    fn code(self, code: u8) -> Outcome<T> {
        self.map_err(|e| Failure::new(code, e))
    }

    fn code_with(self, code: u8, context: impl FnOnce() -> String) -> Outcome<T> {
        self.map_err(|e| Failure::new(code, anyhow::Error::new(e).context(context())))
    }
}

pub fn is_nonconvergence(e: &HydraulicError) -> bool {
    match e {
        HydraulicError::NonConvergence { .. } => true,
        HydraulicError::AtTime { source, .. } => is_nonconvergence(source),
        _ => false,
    }
}

pub fn hydraulic(e: HydraulicError) -> Failure {
    let code = if is_nonconvergence(&e) { CONVERGENCE } else { INPUT };
    Failure::new(code, e)
}

pub fn read(path: &Path) -> Outcome<String> {
    std::fs::read_to_string(path).code_with(IO, || format!("cannot read {}", path.display()))
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Outcome {
    std::fs::write(path, contents).code_with(IO, || format!("cannot write {}", path.display()))
}
