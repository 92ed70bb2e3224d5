use std::path::PathBuf;

use crate::network::{BusId, InjectorId, Violation};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid network: {}", join(.0))]
    InvalidNetwork(Vec<Violation>),
    #[error("voltage vector has {got} entries, network has {expected} buses")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
    #[error("unknown injector {0}")]
    UnknownInjector(InjectorId),
    #[error("initial power flow did not converge (max mismatch {0:.3e} pu)")]
    InitialDivergence(f64),
    #[error("reactive power distribution needs at least one slave controller")]
    NoSlaves,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("plant '{name}': {reason}")]
    PlantSpec { name: String, reason: String },
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error("case file {path}: {message}")]
    CaseFile { path: PathBuf, message: String },
    #[error("result has no recorded samples")]
    EmptyResult,
    #[error("plot: {0}")]
    Plot(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
