//! Tag-matched point-to-point delivery between the two computing parties.
//!
//! Openings are never matched by arrival order: every message carries a
//! [`Tag`] and a receiver blocks until the message with that tag arrives.
//! The networked backend implements [`Channel`] on top of the same
//! [`Mailbox`], so in-process and socket deployments share the protocol code.

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::tensor::Tensor;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Identifies one message of one protocol step: the round issued by the
/// coordinator and the value (or slot) within that round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag {
    pub round: u64,
    pub value: u64,
}

impl Tag {
    pub fn new(round: u64, value: u64) -> Self {
        Tag { round, value }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("timed out after {0:?} waiting for {1:?}")]
    Timeout(Duration, Tag),
    #[error("duplicate message for {0:?}")]
    Duplicate(Tag),
    #[error("peer unreachable: {0}")]
    Unreachable(String),
}

pub trait Channel: Send + Sync {
    /// Delivers `payload` to the peer under `tag`. Never waits for the peer
    /// to consume it.
    fn send(&self, tag: Tag, payload: Vec<Tensor>) -> Result<(), ChannelError>;

    /// Blocks until the peer's message for `tag` arrives.
    fn recv(&self, tag: Tag) -> Result<Vec<Tensor>, ChannelError>;
}

/// Inbox keyed by tag.
#[derive(Debug)]
pub struct Mailbox {
    slots: Mutex<HashMap<Tag, Vec<Tensor>>>,
    arrived: Condvar,
    timeout: Duration,
}

impl Default for Mailbox {
    fn default() -> Self {
        Self::with_timeout(DEFAULT_TIMEOUT)
    }
}

impl Mailbox {
    pub fn with_timeout(timeout: Duration) -> Self {
        Mailbox {
            slots: Mutex::new(HashMap::new()),
            arrived: Condvar::new(),
            timeout,
        }
    }

    pub fn deposit(&self, tag: Tag, payload: Vec<Tensor>) -> Result<(), ChannelError> {
        let mut slots = self.slots.lock().unwrap();
        if slots.contains_key(&tag) {
            return Err(ChannelError::Duplicate(tag));
        }
        slots.insert(tag, payload);
        self.arrived.notify_all();
        Ok(())
    }

    pub fn take(&self, tag: Tag) -> Result<Vec<Tensor>, ChannelError> {
        let deadline = Instant::now() + self.timeout;
        let mut slots = self.slots.lock().unwrap();
        loop {
            if let Some(payload) = slots.remove(&tag) {
                return Ok(payload);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(ChannelError::Timeout(self.timeout, tag));
            }
            slots = self.arrived.wait_timeout(slots, deadline - now).unwrap().0;
        }
    }

    pub fn pending(&self) -> usize {
        self.slots.lock().unwrap().len()
    }
}

/// One end of an in-memory channel pair. Optionally records everything it
/// receives, so tests can inspect exactly what a party observed.
#[derive(Debug, Clone)]
pub struct MemoryChannel {
    inbox: Arc<Mailbox>,
    outbox: Arc<Mailbox>,
    transcript: Arc<Mutex<Vec<(Tag, Vec<Tensor>)>>>,
}

impl MemoryChannel {
    pub fn pair() -> (MemoryChannel, MemoryChannel) {
        let a = Arc::new(Mailbox::default());
        let b = Arc::new(Mailbox::default());
        (
            MemoryChannel {
                inbox: a.clone(),
                outbox: b.clone(),
                transcript: Default::default(),
            },
            MemoryChannel {
                inbox: b,
                outbox: a,
                transcript: Default::default(),
            },
        )
    }

    /// Everything this end has received so far.
    pub fn transcript(&self) -> Vec<(Tag, Vec<Tensor>)> {
        self.transcript.lock().unwrap().clone()
    }
}

impl Channel for MemoryChannel {
    fn send(&self, tag: Tag, payload: Vec<Tensor>) -> Result<(), ChannelError> {
        self.outbox.deposit(tag, payload)
    }

    fn recv(&self, tag: Tag) -> Result<Vec<Tensor>, ChannelError> {
        let payload = self.inbox.take(tag)?;
        self.transcript.lock().unwrap().push((tag, payload.clone()));
        Ok(payload)
    }
}
