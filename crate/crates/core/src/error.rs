//! Error types shared across the simulator.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated a documented precondition (e.g. a mask selecting
    /// tensors outside the active window).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration detected before any training ran.
    #[error("configuration error: {0}")]
    Config(String),

    /// Numerical failure during an evaluation (NaN/Inf gradients or
    /// parameters). The affected client round is aborted.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// A client round failed; carries the round and client for context.
    #[error("client {client_id} failed in round {round}: {source}")]
    Client {
        round: usize,
        client_id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
