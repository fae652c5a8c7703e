//! Coordinator/party deployment: parties keep tensors under keys, run
//! expressions sent by the coordinator and talk to each other in binary
//! frames, either in one process or over TCP.

pub mod cluster;
pub mod coordinator;
pub mod expr;
pub mod party;
pub mod transport;
pub mod wire;

pub use cluster::{Backend, Cluster, ClusterConfig, Topology};
pub use coordinator::{Call, Coordinator, RemoteKey, Reply, SharedKeys};
pub use party::{party_seed, Party, PartyConfig};
pub use transport::{serve, InProcTransport, Server, TcpTransport, Transport};
pub use wire::{Frame, Message, MsgType, PartyRole, Value, WireError};

use thiserror::Error;

use crate::channel::ChannelError;
use crate::sharing::ProtocolError;
use crate::tensor::TensorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Expr(#[from] expr::ExprError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("unknown key {0}")]
    UnknownKey(u64),
    #[error("unknown operation {0:?}")]
    UnknownOp(String),
    #[error("{op}: {reason}")]
    BadArgs { op: String, reason: String },
    #[error("{role:?} cannot {what}")]
    WrongRole { role: PartyRole, what: String },
    #[error("timed out {0}")]
    Timeout(String),
    #[error("{0:?} is unreachable")]
    Unreachable(PartyRole),
    #[error("peer refused: {reason}")]
    Nack { reason: String, retryable: bool },
    #[error("unexpected {0:?} reply")]
    UnexpectedReply(MsgType),
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl NetError {
    /// Whether repeating an idempotent request may succeed.
    pub fn retryable(&self) -> bool {
        match self {
            NetError::Timeout(_) => true,
            NetError::Nack { retryable, .. } => *retryable,
            NetError::Protocol(ProtocolError::Channel(ChannelError::Timeout(..))) => true,
            _ => false,
        }
    }
}

impl From<TensorError> for NetError {
    fn from(e: TensorError) -> Self {
        NetError::Protocol(e.into())
    }
}

impl From<ChannelError> for NetError {
    fn from(e: ChannelError) -> Self {
        NetError::Protocol(e.into())
    }
}

impl From<std::io::Error> for NetError {
    fn from(e: std::io::Error) -> Self {
        NetError::Io(e.to_string())
    }
}
