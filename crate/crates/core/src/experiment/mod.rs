//! Data loading, training runs and reports.

pub mod data;
pub mod report;
pub mod train;

pub use data::{load_idx, DataError, Dataset};
pub use report::{emit_report, read_records, NamedRun, ReportFiles};
pub use train::{train_dnn, train_logistic, Mode, Model, RunRecord, Runner, TrainConfig, TrainRun};

use thiserror::Error;

use crate::net::NetError;
use crate::sharing::ProtocolError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
