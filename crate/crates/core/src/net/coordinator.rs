//! The coordinator's view: remote keys, and calls issued singly or in
//! parallel.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::rng::Rng;
use crate::sharing::MulKind;
use crate::tensor::Tensor;

use super::expr::Expr;
use super::party::expect_ack;
use super::transport::Transport;
use super::wire::{Message, PartyRole};
use super::NetError;

type Result<T> = std::result::Result<T, NetError>;

/// FETCH is idempotent and is retried this many extra times on timeouts.
const FETCH_RETRIES: u32 = 2;

/// A tensor (or triple) stored at a party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RemoteKey {
    pub party: PartyRole,
    pub key: u64,
}

impl RemoteKey {
    /// The `k:<id>` atom that refers to this key in the owning party's
    /// expressions.
    pub fn expr(self) -> Expr {
        Expr::Key(self.key)
    }
}

/// Keys of the two halves of a shared value, at P0 and P1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SharedKeys {
    pub p0: RemoteKey,
    pub p1: RemoteKey,
}

impl SharedKeys {
    pub fn keys(self) -> [RemoteKey; 2] {
        [self.p0, self.p1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Call {
    Exec { party: PartyRole, round: u64, expr: String },
    Fetch(RemoteKey),
    Store(PartyRole, Tensor),
    Free(Vec<RemoteKey>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Keys(Vec<RemoteKey>),
    Tensor(Tensor),
    Done,
}

impl Reply {
    pub fn keys(self) -> Result<Vec<RemoteKey>> {
        match self {
            Reply::Keys(k) => Ok(k),
            _ => Err(NetError::Config("call did not return keys".into())),
        }
    }

    pub fn tensor(self) -> Result<Tensor> {
        match self {
            Reply::Tensor(t) => Ok(t),
            _ => Err(NetError::Config("call did not return a tensor".into())),
        }
    }
}

pub struct Coordinator {
    transport: Arc<dyn Transport>,
    round: AtomicU64,
}

impl std::fmt::Debug for Coordinator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Coordinator").field("round", &self.round).finish()
    }
}

impl Coordinator {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Coordinator {
            transport,
            round: AtomicU64::new(0),
        }
    }

    /// A round tag never used before by this coordinator.
    pub fn next_round(&self) -> u64 {
        self.round.fetch_add(1, Ordering::Relaxed) + 1
    }

    fn request(&self, to: PartyRole, msg: &Message) -> Result<(Vec<u64>, Vec<Tensor>)> {
        expect_ack(self.transport.request(to, msg)?)
    }

    pub fn exec(&self, party: PartyRole, round: u64, expr: &str) -> Result<Vec<RemoteKey>> {
        let (keys, _) = self.request(
            party,
            &Message::Exec {
                round,
                expr: expr.to_string(),
            },
        )?;
        Ok(keys.into_iter().map(|key| RemoteKey { party, key }).collect())
    }

    /// Runs an expression with a single result.
    pub fn exec1(&self, party: PartyRole, round: u64, expr: &str) -> Result<RemoteKey> {
        let keys = self.exec(party, round, expr)?;
        match keys.as_slice() {
            [k] => Ok(*k),
            _ => Err(NetError::Config(format!("expected one result, got {}", keys.len()))),
        }
    }

    pub fn fetch(&self, key: RemoteKey) -> Result<Tensor> {
        let mut attempt = 0;
        loop {
            match self.request(key.party, &Message::Fetch { key: key.key }) {
                Ok((_, mut tensors)) => {
                    return tensors.pop().ok_or(NetError::UnexpectedReply(super::wire::MsgType::Ack));
                }
                Err(e) if e.retryable() && attempt < FETCH_RETRIES => {
                    attempt += 1;
                    log::warn!("retrying fetch of {key:?}: {e}");
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn store(&self, party: PartyRole, t: Tensor) -> Result<RemoteKey> {
        let (keys, _) = self.request(party, &Message::Store(t))?;
        let key = keys.first().copied().ok_or(NetError::UnexpectedReply(super::wire::MsgType::Ack))?;
        Ok(RemoteKey { party, key })
    }

    pub fn free(&self, keys: &[RemoteKey]) -> Result<()> {
        for party in PartyRole::SERVING {
            let mine: Vec<u64> = keys.iter().filter(|k| k.party == party).map(|k| k.key).collect();
            if !mine.is_empty() {
                self.request(party, &Message::Free { keys: mine })?;
            }
        }
        Ok(())
    }

    pub fn call(&self, call: Call) -> Result<Reply> {
        match call {
            Call::Exec { party, round, expr } => self.exec(party, round, &expr).map(Reply::Keys),
            Call::Fetch(key) => self.fetch(key).map(Reply::Tensor),
            Call::Store(party, t) => self.store(party, t).map(|k| Reply::Keys(vec![k])),
            Call::Free(keys) => self.free(&keys).map(|_| Reply::Done),
        }
    }

    /// Issues independent calls concurrently; results come back in input
    /// order, each with its own outcome.
    pub fn parallel(&self, calls: Vec<Call>) -> Vec<Result<Reply>> {
        match calls.len() {
            0 => Vec::new(),
            1 => calls.into_iter().map(|c| self.call(c)).collect(),
            _ => std::thread::scope(|s| {
                let handles: Vec<_> = calls.into_iter().map(|c| s.spawn(move || self.call(c))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(NetError::Config("call panicked".into()))))
                    .collect()
            }),
        }
    }

    /// Like [`Coordinator::parallel`], failing on the first error.
    pub fn parallel_all(&self, calls: Vec<Call>) -> Result<Vec<Reply>> {
        self.parallel(calls).into_iter().collect()
    }

    /// Runs the same kind of expression at P0 and P1 concurrently under one
    /// round; `build` gets the party and returns its expression.
    pub fn exec_pair(&self, round: u64, build: impl Fn(PartyRole) -> String) -> Result<[Vec<RemoteKey>; 2]> {
        let mut replies = self.parallel_all(vec![
            Call::Exec {
                party: PartyRole::P0,
                round,
                expr: build(PartyRole::P0),
            },
            Call::Exec {
                party: PartyRole::P1,
                round,
                expr: build(PartyRole::P1),
            },
        ])?;
        let r1 = replies.pop().unwrap().keys()?;
        let r0 = replies.pop().unwrap().keys()?;
        Ok([r0, r1])
    }

    fn request_triple(&self, round: u64, kind: MulKind, shape_x: &[usize], shape_y: &[usize]) -> Result<SharedKeys> {
        let (keys, _) = self.request(
            PartyRole::Dealer,
            &Message::TripleReq {
                round,
                kind,
                shape_x: shape_x.iter().map(|&d| d as u64).collect(),
                shape_y: shape_y.iter().map(|&d| d as u64).collect(),
            },
        )?;
        match keys.as_slice() {
            [k0, k1] => Ok(SharedKeys {
                p0: RemoteKey {
                    party: PartyRole::P0,
                    key: *k0,
                },
                p1: RemoteKey {
                    party: PartyRole::P1,
                    key: *k1,
                },
            }),
            _ => Err(NetError::UnexpectedReply(super::wire::MsgType::Ack)),
        }
    }

    /// Asks the dealer for a fresh triple, delivered straight to P0 and P1.
    pub fn triple(&self, kind: MulKind, shape_x: &[usize], shape_y: &[usize]) -> Result<SharedKeys> {
        self.request_triple(self.next_round(), kind, shape_x, shape_y)
    }

    /// Several triples requested concurrently. Rounds are assigned in input
    /// order, so the dealt triples do not depend on scheduling.
    pub fn triples(&self, requests: &[(MulKind, Vec<usize>, Vec<usize>)]) -> Result<Vec<SharedKeys>> {
        let rounds: Vec<u64> = requests.iter().map(|_| self.next_round()).collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = requests
                .iter()
                .zip(&rounds)
                .map(|((kind, sx, sy), &round)| s.spawn(move || self.request_triple(round, *kind, sx, sy)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("triple request thread")).collect()
        })
    }

    /// Splits `x` with a mask from `rng` and stores the halves at P0 and P1.
    pub fn share(&self, x: &Tensor, rng: &mut Rng, mask_bound: f64) -> Result<SharedKeys> {
        let (h0, h1) = crate::sharing::share(x, rng, mask_bound)?;
        let mut replies = self.parallel_all(vec![
            Call::Store(PartyRole::P0, h0.into_share()),
            Call::Store(PartyRole::P1, h1.into_share()),
        ])?;
        let p1 = replies.pop().unwrap().keys()?[0];
        let p0 = replies.pop().unwrap().keys()?[0];
        Ok(SharedKeys { p0, p1 })
    }

    /// Fetches both halves and adds them, P0's first.
    pub fn reconstruct(&self, keys: SharedKeys) -> Result<Tensor> {
        let mut replies = self.parallel_all(vec![Call::Fetch(keys.p0), Call::Fetch(keys.p1)])?;
        let t1 = replies.pop().unwrap().tensor()?;
        let t0 = replies.pop().unwrap().tensor()?;
        Ok(t0.add(&t1)?)
    }
}
