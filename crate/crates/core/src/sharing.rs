//! Two-party additive sharing over `f64` tensors.
//!
//! A value `x` is held as `⟨x⟩₀ + ⟨x⟩₁ = x`, with `⟨x⟩₀` a fresh mask drawn
//! uniformly from `[-B, B)`. Linear operations are local; products of two
//! shared values consume a dealer-generated Beaver triple and one exchange
//! of the openings `x - u` and `y - v`.
//!
//! The functions taking a single [`ShareHandle`] are what one party runs.
//! [`TwoPartySim`] drives both parties in one process for tests, examples
//! and the split-learning reference implementation.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::channel::{Channel, ChannelError, MemoryChannel, Tag};
use crate::rng::{mix64, Rng};
use crate::tensor::{Tensor, TensorError};

/// Default half-width of the uniform share masks.
pub const DEFAULT_MASK_BOUND: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("shares belong to different values ({0:?} vs {1:?})")]
    ValueMismatch(ValueId, ValueId),
    #[error("expected a share held by {expected:?}, got {actual:?}")]
    WrongRole { expected: Role, actual: Role },
    #[error("beaver triple {0:?} was already consumed")]
    TripleConsumed(ValueId),
    #[error("triple does not fit this product: {0}")]
    TripleMismatch(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("third party: {0}")]
    ThirdParty(String),
    #[error("stale or unknown round {0}")]
    StaleRound(u64),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

/// Which of the two computing parties holds a share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    P0,
    P1,
}

impl Role {
    pub fn index(self) -> usize {
        match self {
            Role::P0 => 0,
            Role::P1 => 1,
        }
    }

    pub fn peer(self) -> Role {
        match self {
            Role::P0 => Role::P1,
            Role::P1 => Role::P0,
        }
    }
}

/// Logical identity of a shared value; both halves carry the same id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueId(pub u64);

static NEXT_VALUE: AtomicU64 = AtomicU64::new(1);

impl ValueId {
    pub fn fresh() -> Self {
        ValueId(NEXT_VALUE.fetch_add(1, Ordering::Relaxed))
    }

    /// Deterministic id for the result of a local operation, so both parties
    /// label their output share identically without talking.
    pub fn derive(op: u64, inputs: &[ValueId], public: Option<&Tensor>) -> Self {
        let mut h = mix64(op);
        for id in inputs {
            h = mix64(h ^ id.0);
        }
        if let Some(t) = public {
            for v in t.data() {
                h = mix64(h ^ v.to_bits());
            }
        }
        ValueId(h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShareHandle {
    role: Role,
    value_id: ValueId,
    share: Tensor,
}

impl ShareHandle {
    pub fn new(role: Role, value_id: ValueId, share: Tensor) -> Self {
        ShareHandle {
            role,
            value_id,
            share,
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn value_id(&self) -> ValueId {
        self.value_id
    }

    pub fn share(&self) -> &Tensor {
        &self.share
    }

    pub fn into_share(self) -> Tensor {
        self.share
    }

    pub fn shape(&self) -> &[usize] {
        self.share.shape()
    }

    /// Applies a linear map to this share. Because the map is linear, the
    /// two mapped shares reconstruct to the mapped value; passing a
    /// non-linear `f` silently breaks that.
    pub fn linear(&self, op: u64, f: impl Fn(&Tensor) -> crate::tensor::Result<Tensor>) -> Result<Self> {
        Ok(ShareHandle {
            role: self.role,
            value_id: ValueId::derive(op, &[self.value_id], None),
            share: f(&self.share)?,
        })
    }
}

mod op {
    pub const ADD_PUBLIC: u64 = 1;
    pub const ADD: u64 = 2;
    pub const SUB: u64 = 3;
    pub const MUL_PUBLIC: u64 = 4;
    pub const ADD_ROW: u64 = 5;
}

/// Splits `x` using `mask` as P0's share.
pub fn share_with_mask(x: &Tensor, mask: Tensor) -> Result<(ShareHandle, ShareHandle)> {
    let rest = x.sub(&mask)?;
    let id = ValueId::fresh();
    Ok((ShareHandle::new(Role::P0, id, mask), ShareHandle::new(Role::P1, id, rest)))
}

/// Splits `x` into two shares with a mask uniform in `[-mask_bound, mask_bound)`.
pub fn share(x: &Tensor, rng: &mut Rng, mask_bound: f64) -> Result<(ShareHandle, ShareHandle)> {
    let mask = rng.uniform(x.shape(), -mask_bound, mask_bound);
    share_with_mask(x, mask)
}

pub fn reconstruct(h0: &ShareHandle, h1: &ShareHandle) -> Result<Tensor> {
    if h0.value_id != h1.value_id {
        return Err(ProtocolError::ValueMismatch(h0.value_id, h1.value_id));
    }
    let (a, b) = match (h0.role, h1.role) {
        (Role::P0, Role::P1) => (h0, h1),
        (Role::P1, Role::P0) => (h1, h0),
        (_, actual) => {
            return Err(ProtocolError::WrongRole {
                expected: h0.role.peer(),
                actual,
            })
        }
    };
    Ok(a.share.add(&b.share)?)
}

fn same_role(a: &ShareHandle, b: &ShareHandle) -> Result<()> {
    if a.role != b.role {
        return Err(ProtocolError::WrongRole {
            expected: a.role,
            actual: b.role,
        });
    }
    Ok(())
}

/// Adds a public tensor: each party adds `a/2` to its share.
pub fn add_public(h: &ShareHandle, a: &Tensor) -> Result<ShareHandle> {
    let half = a.scale(0.5)?;
    Ok(ShareHandle {
        role: h.role,
        value_id: ValueId::derive(op::ADD_PUBLIC, &[h.value_id], Some(a)),
        share: h.share.add(&half)?,
    })
}

pub fn add_shared(hx: &ShareHandle, hy: &ShareHandle) -> Result<ShareHandle> {
    same_role(hx, hy)?;
    Ok(ShareHandle {
        role: hx.role,
        value_id: ValueId::derive(op::ADD, &[hx.value_id, hy.value_id], None),
        share: hx.share.add(&hy.share)?,
    })
}

pub fn sub_shared(hx: &ShareHandle, hy: &ShareHandle) -> Result<ShareHandle> {
    same_role(hx, hy)?;
    Ok(ShareHandle {
        role: hx.role,
        value_id: ValueId::derive(op::SUB, &[hx.value_id, hy.value_id], None),
        share: hx.share.sub(&hy.share)?,
    })
}

/// Adds a shared bias row to every row of a shared matrix.
pub fn add_row_shared(hx: &ShareHandle, hb: &ShareHandle) -> Result<ShareHandle> {
    same_role(hx, hb)?;
    Ok(ShareHandle {
        role: hx.role,
        value_id: ValueId::derive(op::ADD_ROW, &[hx.value_id, hb.value_id], None),
        share: hx.share.add_row(&hb.share)?,
    })
}

/// Multiplies by a public tensor (element-wise, or by a one-element scalar).
pub fn mul_public(h: &ShareHandle, a: &Tensor) -> Result<ShareHandle> {
    Ok(ShareHandle {
        role: h.role,
        value_id: ValueId::derive(op::MUL_PUBLIC, &[h.value_id], Some(a)),
        share: h.share.mul(a)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MulKind {
    Elementwise,
    Matmul,
}

impl MulKind {
    pub fn code(self) -> u64 {
        match self {
            MulKind::Elementwise => 0,
            MulKind::Matmul => 1,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(MulKind::Elementwise),
            1 => Some(MulKind::Matmul),
            _ => None,
        }
    }

    fn apply(self, a: &Tensor, b: &Tensor) -> crate::tensor::Result<Tensor> {
        match self {
            MulKind::Elementwise => a.mul(b),
            MulKind::Matmul => a.matmul(b),
        }
    }

    fn check_shapes(self, x: &[usize], y: &[usize]) -> Result<()> {
        let ok = match self {
            MulKind::Elementwise => x == y,
            MulKind::Matmul => x.len() == 2 && y.len() == 2 && x[1] == y[0],
        };
        if ok {
            Ok(())
        } else {
            Err(ProtocolError::TripleMismatch(format!(
                "{self:?} of {x:?} and {y:?} is undefined"
            )))
        }
    }
}

/// One party's half of a Beaver triple. Single use.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleShare {
    pub role: Role,
    pub id: ValueId,
    pub kind: MulKind,
    pub u: Tensor,
    pub v: Tensor,
    pub w: Tensor,
    consumed: bool,
}

impl TripleShare {
    pub fn new(role: Role, id: ValueId, kind: MulKind, u: Tensor, v: Tensor, w: Tensor) -> Result<Self> {
        kind.check_shapes(u.shape(), v.shape())?;
        Ok(TripleShare {
            role,
            id,
            kind,
            u,
            v,
            w,
            consumed: false,
        })
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }
}

/// Both halves of a triple `(u, v, w)` with `w = u ∘ v` (or `u · v`).
#[derive(Debug, Clone, PartialEq)]
pub struct BeaverTriple {
    pub p0: TripleShare,
    pub p1: TripleShare,
}

impl BeaverTriple {
    pub fn kind(&self) -> MulKind {
        self.p0.kind
    }

    pub fn u(&self) -> Result<Tensor> {
        Ok(self.p0.u.add(&self.p1.u)?)
    }

    pub fn v(&self) -> Result<Tensor> {
        Ok(self.p0.v.add(&self.p1.v)?)
    }

    pub fn w(&self) -> Result<Tensor> {
        Ok(self.p0.w.add(&self.p1.w)?)
    }

    pub fn split(self) -> (TripleShare, TripleShare) {
        (self.p0, self.p1)
    }
}

/// Generates a fresh triple for multiplying an `x_shape` by a `y_shape`
/// operand. `u`, `v` and all share masks are uniform in `[-B, B)`.
pub fn dealer_make_triple(
    x_shape: &[usize],
    y_shape: &[usize],
    kind: MulKind,
    rng: &mut Rng,
    mask_bound: f64,
) -> Result<BeaverTriple> {
    kind.check_shapes(x_shape, y_shape)?;
    let u = rng.uniform(x_shape, -mask_bound, mask_bound);
    let v = rng.uniform(y_shape, -mask_bound, mask_bound);
    let w = kind.apply(&u, &v)?;
    let mut split = |t: &Tensor| -> Result<(Tensor, Tensor)> {
        let mask = rng.uniform(t.shape(), -mask_bound, mask_bound);
        let rest = t.sub(&mask)?;
        Ok((mask, rest))
    };
    let (u0, u1) = split(&u)?;
    let (v0, v1) = split(&v)?;
    let (w0, w1) = split(&w)?;
    let id = ValueId(rng.next_u64());
    Ok(BeaverTriple {
        p0: TripleShare::new(Role::P0, id, kind, u0, v0, w0)?,
        p1: TripleShare::new(Role::P1, id, kind, u1, v1, w1)?,
    })
}

/// Trusted triple dealer. Request `i` draws from substream `i` of the seed,
/// so concurrent callers get reproducible triples.
#[derive(Debug)]
pub struct Dealer {
    seed: u64,
    mask_bound: f64,
    issued: AtomicU64,
}

impl Dealer {
    pub fn new(seed: u64, mask_bound: f64) -> Self {
        Dealer {
            seed,
            mask_bound,
            issued: AtomicU64::new(0),
        }
    }

    pub fn make_triple(&self, x_shape: &[usize], y_shape: &[usize], kind: MulKind) -> Result<BeaverTriple> {
        let n = self.issued.fetch_add(1, Ordering::Relaxed);
        self.make_for_stream(n, x_shape, y_shape, kind)
    }

    pub fn make_for_stream(
        &self,
        stream: u64,
        x_shape: &[usize],
        y_shape: &[usize],
        kind: MulKind,
    ) -> Result<BeaverTriple> {
        let mut rng = Rng::substream(self.seed, stream);
        dealer_make_triple(x_shape, y_shape, kind, &mut rng, self.mask_bound)
    }

    pub fn issued(&self) -> u64 {
        self.issued.load(Ordering::Relaxed)
    }
}

/// A product whose openings have been sent but not yet received.
#[derive(Debug)]
pub struct PendingProduct {
    role: Role,
    id: ValueId,
    kind: MulKind,
    tag: Tag,
    d: Tensor,
    e: Tensor,
    u: Tensor,
    v: Tensor,
    w: Tensor,
}

/// First half of a Beaver multiplication: checks the triple, consumes it,
/// and sends this party's shares of `x - u` and `y - v` to the peer.
pub fn beaver_open(
    hx: &ShareHandle,
    hy: &ShareHandle,
    triple: &mut TripleShare,
    round: u64,
    channel: &dyn Channel,
) -> Result<PendingProduct> {
    same_role(hx, hy)?;
    if triple.role != hx.role {
        return Err(ProtocolError::WrongRole {
            expected: hx.role,
            actual: triple.role,
        });
    }
    if triple.consumed {
        return Err(ProtocolError::TripleConsumed(triple.id));
    }
    triple.kind.check_shapes(hx.shape(), hy.shape())?;
    if hx.shape() != triple.u.shape() || hy.shape() != triple.v.shape() {
        return Err(ProtocolError::TripleMismatch(format!(
            "operands {:?}·{:?}, triple {:?}·{:?}",
            hx.shape(),
            hy.shape(),
            triple.u.shape(),
            triple.v.shape()
        )));
    }
    triple.consumed = true;
    let d = hx.share.sub(&triple.u)?;
    let e = hy.share.sub(&triple.v)?;
    let tag = Tag::new(round, triple.id.0);
    channel.send(tag, vec![d.clone(), e.clone()])?;
    Ok(PendingProduct {
        role: hx.role,
        id: triple.id,
        kind: triple.kind,
        tag,
        d,
        e,
        u: std::mem::replace(&mut triple.u, Tensor::scalar(0.0)),
        v: std::mem::replace(&mut triple.v, Tensor::scalar(0.0)),
        w: std::mem::replace(&mut triple.w, Tensor::scalar(0.0)),
    })
}

impl PendingProduct {
    /// Second half: receives the peer's openings and evaluates this party's
    /// share of `de + dv + ue + w`. Only P0 adds the public `de` term.
    pub fn finish(self, channel: &dyn Channel) -> Result<ShareHandle> {
        let peer = channel.recv(self.tag)?;
        let [peer_d, peer_e]: [Tensor; 2] = peer
            .try_into()
            .map_err(|_| ProtocolError::TripleMismatch("malformed opening".into()))?;
        let (d, e) = match self.role {
            Role::P0 => (self.d.add(&peer_d)?, self.e.add(&peer_e)?),
            Role::P1 => (peer_d.add(&self.d)?, peer_e.add(&self.e)?),
        };
        let k = self.kind;
        let mut z = k.apply(&d, &self.v)?.add(&k.apply(&self.u, &e)?)?.add(&self.w)?;
        if self.role == Role::P0 {
            z = z.add(&k.apply(&d, &e)?)?;
        }
        Ok(ShareHandle::new(self.role, self.id, z))
    }
}

/// One party's Beaver multiplication; blocks until the peer's openings arrive.
pub fn beaver_mul(
    hx: &ShareHandle,
    hy: &ShareHandle,
    triple: &mut TripleShare,
    round: u64,
    channel: &dyn Channel,
) -> Result<ShareHandle> {
    beaver_open(hx, hy, triple, round, channel)?.finish(channel)
}

/// Both halves of one shared value.
#[derive(Debug, Clone, PartialEq)]
pub struct Shared {
    pub p0: ShareHandle,
    pub p1: ShareHandle,
}

impl Shared {
    pub fn new(p0: ShareHandle, p1: ShareHandle) -> Result<Self> {
        if p0.role != Role::P0 {
            return Err(ProtocolError::WrongRole {
                expected: Role::P0,
                actual: p0.role,
            });
        }
        if p1.role != Role::P1 {
            return Err(ProtocolError::WrongRole {
                expected: Role::P1,
                actual: p1.role,
            });
        }
        Ok(Shared { p0, p1 })
    }

    pub fn shape(&self) -> &[usize] {
        self.p0.shape()
    }

    pub fn get(&self, role: Role) -> &ShareHandle {
        match role {
            Role::P0 => &self.p0,
            Role::P1 => &self.p1,
        }
    }

    pub fn reconstruct(&self) -> Result<Tensor> {
        reconstruct(&self.p0, &self.p1)
    }

    /// Applies the same linear map to both shares.
    pub fn linear(&self, op: u64, f: impl Fn(&Tensor) -> crate::tensor::Result<Tensor>) -> Result<Self> {
        Ok(Shared {
            p0: self.p0.linear(op, &f)?,
            p1: self.p1.linear(op, &f)?,
        })
    }

    pub fn add_public(&self, a: &Tensor) -> Result<Self> {
        Ok(Shared {
            p0: add_public(&self.p0, a)?,
            p1: add_public(&self.p1, a)?,
        })
    }

    pub fn add(&self, other: &Shared) -> Result<Self> {
        Ok(Shared {
            p0: add_shared(&self.p0, &other.p0)?,
            p1: add_shared(&self.p1, &other.p1)?,
        })
    }

    pub fn sub(&self, other: &Shared) -> Result<Self> {
        Ok(Shared {
            p0: sub_shared(&self.p0, &other.p0)?,
            p1: sub_shared(&self.p1, &other.p1)?,
        })
    }

    pub fn add_row(&self, bias: &Shared) -> Result<Self> {
        Ok(Shared {
            p0: add_row_shared(&self.p0, &bias.p0)?,
            p1: add_row_shared(&self.p1, &bias.p1)?,
        })
    }

    pub fn mul_public(&self, a: &Tensor) -> Result<Self> {
        Ok(Shared {
            p0: mul_public(&self.p0, a)?,
            p1: mul_public(&self.p1, a)?,
        })
    }
}

/// Runs both computing parties and the dealer in one process, connected by
/// an in-memory channel whose transcripts record every opening.
#[derive(Debug)]
pub struct TwoPartySim {
    rng: Rng,
    dealer: Dealer,
    mask_bound: f64,
    ch0: MemoryChannel,
    ch1: MemoryChannel,
    round: u64,
}

impl TwoPartySim {
    pub fn new(seed: u64) -> Self {
        Self::with_mask_bound(seed, DEFAULT_MASK_BOUND)
    }

    pub fn with_mask_bound(seed: u64, mask_bound: f64) -> Self {
        let (ch0, ch1) = MemoryChannel::pair();
        TwoPartySim {
            rng: Rng::substream(seed, 0),
            dealer: Dealer::new(mix64(seed ^ 0xDEA1), mask_bound),
            mask_bound,
            ch0,
            ch1,
            round: 0,
        }
    }

    pub fn mask_bound(&self) -> f64 {
        self.mask_bound
    }

    pub fn rng(&mut self) -> &mut Rng {
        &mut self.rng
    }

    pub fn dealer(&self) -> &Dealer {
        &self.dealer
    }

    pub fn next_round(&mut self) -> u64 {
        self.round += 1;
        self.round
    }

    /// The channel ends held by P0 and P1; their transcripts are what each
    /// party received from the other.
    pub fn channels(&self) -> (&MemoryChannel, &MemoryChannel) {
        (&self.ch0, &self.ch1)
    }

    pub fn share(&mut self, x: &Tensor) -> Result<Shared> {
        let (p0, p1) = share(x, &mut self.rng, self.mask_bound)?;
        Ok(Shared { p0, p1 })
    }

    pub fn mul(&mut self, x: &Shared, y: &Shared) -> Result<Shared> {
        self.product(x, y, MulKind::Elementwise)
    }

    pub fn matmul(&mut self, x: &Shared, y: &Shared) -> Result<Shared> {
        self.product(x, y, MulKind::Matmul)
    }

    pub fn product(&mut self, x: &Shared, y: &Shared, kind: MulKind) -> Result<Shared> {
        let triple = self.dealer.make_triple(x.shape(), y.shape(), kind)?;
        let (mut t0, mut t1) = triple.split();
        self.product_with(x, y, &mut t0, &mut t1)
    }

    /// Multiplies with caller-supplied triple halves.
    pub fn product_with(
        &mut self,
        x: &Shared,
        y: &Shared,
        t0: &mut TripleShare,
        t1: &mut TripleShare,
    ) -> Result<Shared> {
        let round = self.next_round();
        let pending0 = beaver_open(&x.p0, &y.p0, t0, round, &self.ch0)?;
        let pending1 = beaver_open(&x.p1, &y.p1, t1, round, &self.ch1)?;
        Ok(Shared {
            p0: pending0.finish(&self.ch0)?,
            p1: pending1.finish(&self.ch1)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::vector(v.to_vec()).unwrap()
    }

    #[test]
    fn share_with_given_mask() {
        let (h0, h1) = share_with_mask(&t(&[1.0]), t(&[-0.5])).unwrap();
        assert_eq!(h0.share().data(), &[-0.5]);
        assert_eq!(h1.share().data(), &[1.5]);
        assert_eq!(reconstruct(&h0, &h1).unwrap().data(), &[1.0]);
        assert_eq!(reconstruct(&h1, &h0).unwrap().data(), &[1.0]);
    }

    #[test]
    fn zeros_round_trip() {
        let mut rng = Rng::new(1);
        let (h0, h1) = share(&Tensor::zeros(&[3, 2]), &mut rng, 100.0).unwrap();
        assert!(reconstruct(&h0, &h1).unwrap().data().iter().all(|v| v.abs() < 1e-12));
        assert!(h0.share().data().iter().all(|v| v.abs() <= 100.0));
    }

    #[test]
    fn round_trip_many() {
        let mut rng = Rng::new(7);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let x = rng.uniform(&[5], -10.0, 10.0);
            let (h0, h1) = share(&x, &mut rng, 100.0).unwrap();
            worst = worst.max(reconstruct(&h0, &h1).unwrap().max_abs_diff(&x).unwrap());
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn reconstruct_rejects_mismatched_values() {
        let mut rng = Rng::new(2);
        let (a0, _) = share(&t(&[1.0]), &mut rng, 1.0).unwrap();
        let (_, b1) = share(&t(&[1.0]), &mut rng, 1.0).unwrap();
        assert!(matches!(reconstruct(&a0, &b1), Err(ProtocolError::ValueMismatch(..))));
        let (c0, _) = share(&t(&[1.0]), &mut rng, 1.0).unwrap();
        assert!(matches!(reconstruct(&c0, &c0.clone()), Err(ProtocolError::WrongRole { .. })));
    }

    #[test]
    fn public_addition_splits_in_halves() {
        let mut sim = TwoPartySim::new(3);
        let x = sim.share(&t(&[1.0])).unwrap();
        let y = x.add_public(&t(&[2.0])).unwrap();
        assert!((y.reconstruct().unwrap().data()[0] - 3.0).abs() < 1e-12);
        assert_eq!(y.p0.share().data()[0], x.p0.share().data()[0] + 1.0);
        let same = x.add_public(&Tensor::zeros(&[1])).unwrap();
        assert_eq!(same.reconstruct().unwrap(), x.reconstruct().unwrap());
    }

    #[test]
    fn shared_addition_and_public_product() {
        let mut sim = TwoPartySim::new(4);
        let a = sim.share(&t(&[1.0, -2.0])).unwrap();
        let b = sim.share(&t(&[2.0, 2.0])).unwrap();
        let sum = a.add(&b).unwrap().reconstruct().unwrap();
        assert!(sum.max_abs_diff(&t(&[3.0, 0.0])).unwrap() < 1e-12);
        let neg = sim.share(&t(&[-1.0, 2.0])).unwrap();
        assert!(a.add(&neg).unwrap().reconstruct().unwrap().data().iter().all(|v| v.abs() < 1e-12));
        assert!(a.mul_public(&Tensor::scalar(1.0)).unwrap().reconstruct().unwrap()
            .max_abs_diff(&a.reconstruct().unwrap()).unwrap() == 0.0);
        assert!(a.mul_public(&Tensor::scalar(0.0)).unwrap().reconstruct().unwrap().data() == [0.0, 0.0]);
        let scaled = a.mul_public(&t(&[3.0, 0.5])).unwrap().reconstruct().unwrap();
        assert!(scaled.max_abs_diff(&t(&[3.0, -1.0])).unwrap() < 1e-12);
    }

    #[test]
    fn scalar_product() {
        let mut sim = TwoPartySim::new(5);
        let x = sim.share(&Tensor::scalar(3.0)).unwrap();
        let y = sim.share(&Tensor::scalar(4.0)).unwrap();
        let z = sim.mul(&x, &y).unwrap().reconstruct().unwrap();
        assert!((z.data()[0] - 12.0).abs() < 1e-9);
    }

    #[test]
    fn zero_annihilates() {
        let mut sim = TwoPartySim::new(6);
        let x = sim.share(&Tensor::zeros(&[4])).unwrap();
        let y = sim.share(&t(&[5.0, -7.0, 1e3, 0.25])).unwrap();
        let z = sim.mul(&x, &y).unwrap().reconstruct().unwrap();
        assert!(z.data().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn matrix_product_matches_plaintext() {
        let mut sim = TwoPartySim::new(7);
        let mut rng = Rng::new(70);
        let a = rng.uniform(&[8, 16], -1.0, 1.0);
        let b = rng.uniform(&[16, 4], -1.0, 1.0);
        let (sa, sb) = (sim.share(&a).unwrap(), sim.share(&b).unwrap());
        let z = sim.matmul(&sa, &sb).unwrap().reconstruct().unwrap();
        assert!(z.max_abs_diff(&a.matmul(&b).unwrap()).unwrap() < 1e-8);
    }

    #[test]
    fn openings_are_masked_values_only() {
        let mut sim = TwoPartySim::new(8);
        let x = sim.share(&t(&[2.0])).unwrap();
        let y = sim.share(&t(&[3.0])).unwrap();
        sim.mul(&x, &y).unwrap();
        let (c0, c1) = sim.channels();
        for (_, payload) in c0.transcript().iter().chain(c1.transcript().iter()) {
            assert_eq!(payload.len(), 2);
            assert_ne!(payload[0].data(), &[2.0]);
            assert_ne!(payload[1].data(), &[3.0]);
        }
    }

    #[test]
    fn triple_reuse_is_refused() {
        let mut sim = TwoPartySim::new(9);
        let x = sim.share(&t(&[1.0, 2.0])).unwrap();
        let triple = sim.dealer().make_triple(&[2], &[2], MulKind::Elementwise).unwrap();
        let (mut t0, mut t1) = triple.split();
        sim.product_with(&x, &x, &mut t0, &mut t1).unwrap();
        assert!(t0.is_consumed() && t1.is_consumed());
        assert!(matches!(
            sim.product_with(&x, &x, &mut t0, &mut t1),
            Err(ProtocolError::TripleConsumed(_))
        ));
    }

    #[test]
    fn triple_shape_and_kind_mismatch() {
        let mut sim = TwoPartySim::new(10);
        let x = sim.share(&Tensor::zeros(&[2, 3])).unwrap();
        let y = sim.share(&Tensor::zeros(&[3, 2])).unwrap();
        let triple = sim.dealer().make_triple(&[2, 3], &[2, 3], MulKind::Elementwise).unwrap();
        let (mut t0, mut t1) = triple.split();
        assert!(matches!(
            sim.product_with(&x, &y, &mut t0, &mut t1),
            Err(ProtocolError::TripleMismatch(_))
        ));
        assert!(dealer_make_triple(&[2, 3], &[2, 3], MulKind::Matmul, &mut Rng::new(0), 1.0).is_err());
    }

    #[test]
    fn dealer_triples_satisfy_product() {
        let dealer = Dealer::new(11, 100.0);
        for i in 0..100 {
            let kind = if i % 2 == 0 { MulKind::Elementwise } else { MulKind::Matmul };
            let (xs, ys) = match kind {
                MulKind::Elementwise => (vec![3, 4], vec![3, 4]),
                MulKind::Matmul => (vec![3, 4], vec![4, 2]),
            };
            let triple = dealer.make_triple(&xs, &ys, kind).unwrap();
            let (u, v) = (triple.u().unwrap(), triple.v().unwrap());
            assert_eq!(u.shape(), &xs[..]);
            assert_eq!(v.shape(), &ys[..]);
            let expected = kind.apply(&u, &v).unwrap();
            assert!(triple.w().unwrap().max_abs_diff(&expected).unwrap() < 1e-9);
        }
        assert_eq!(dealer.issued(), 100);
    }

    /// Two-sample Kolmogorov–Smirnov statistic.
    fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn mask_share_is_independent_of_the_secret() {
        let mut rng = Rng::new(12);
        let n = 5000;
        let mut sample = |x: f64| -> Vec<f64> {
            (0..n)
                .map(|_| share(&Tensor::scalar(x), &mut rng, 100.0).unwrap().0.share().data()[0])
                .collect()
        };
        let mut a = sample(-50.0);
        let mut b = sample(75.0);
        let d = ks_statistic(&mut a, &mut b);
        let critical = 1.628 * ((2 * n) as f64 / (n * n) as f64).sqrt();
        assert!(d < critical, "KS {d} >= {critical}");
    }
}
