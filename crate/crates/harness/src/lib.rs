//! Simulation harness: run descriptors, a threaded actor transport with a
//! wire tap, oracle verification and benchmark sweeps.

pub mod bench;
pub mod descriptor;
pub mod engine;
pub mod transport;

use std::path::PathBuf;

use pso_core::hash::HashError;
use pso_core::protocols::ProtocolError;
use pso_core::repository::RepoError;
use pso_core::runtime::RuntimeError;
use pso_core::setops::ExprError;
use thiserror::Error;

pub use descriptor::{ProtocolKind, RunDescriptor, Scenario};
pub use engine::{execute, record, verify, RunOutput, TransportKind, Verification};
pub use transport::{ActorTransport, Tap, TappedFrame};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid descriptor: {0}")]
    Descriptor(String),
    #[error("{0}")]
    Expr(#[from] ExprError),
    #[error("{0}")]
    Hash(#[from] HashError),
    #[error("{0}")]
    Runtime(#[from] RuntimeError),
    #[error("{0}")]
    Protocol(#[from] ProtocolError),
    #[error("{0}")]
    Repo(#[from] RepoError),
    #[error("frame: {0}")]
    Frame(String),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}
