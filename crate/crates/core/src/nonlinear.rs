//! Element-wise nonlinear functions on shared vectors, evaluated by a third
//! party that only ever sees a randomly permuted plaintext.
//!
//! Protocol for a shared vector `x` and function `f`:
//!
//! 1. P0 and P1 derive the same [`Permutation`] from a seed handed to both
//!    by the coordinator and permute their own shares.
//! 2. Both send the permuted shares to P3, which adds them to obtain
//!    `x' = P(x)`.
//! 3. P3 computes `f(x')` (and any further functions requested in the same
//!    round), shares each result afresh, and returns one share to each party.
//! 4. Each party applies the inverse permutation to its result shares.
//!
//! P3 learns the multiset of values of `x`, never their positions.

use std::collections::HashMap;
use std::str::FromStr;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::channel::{Tag, DEFAULT_TIMEOUT};
use crate::rng::{mix64, Rng};
use crate::sharing::{ProtocolError, Result, Role, ShareHandle, Shared, ValueId};
use crate::tensor::{Tensor, TensorError};

/// A bijection on `0..n`, applied as a gather: `y[i] = x[forward[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    seed: u64,
    forward: Vec<usize>,
}

/// Fisher–Yates over the identity, driven by `Rng::new(seed)`.
pub fn permutation_from_seed(seed: u64, n: usize) -> Permutation {
    let mut forward: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut forward);
    Permutation { seed, forward }
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            seed: 0,
            forward: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.forward.len()];
        for (i, &p) in self.forward.iter().enumerate() {
            inv[p] = i;
        }
        inv
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.len() != self.forward.len() {
            return Err(TensorError::LengthMismatch {
                shape: x.shape().to_vec(),
                expected: self.forward.len(),
                actual: x.len(),
            }
            .into());
        }
        Ok(())
    }

    /// Reorders the elements of `x` (flattened); keeps its shape.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let src = x.data();
        let data = self.forward.iter().map(|&j| src[j]).collect();
        Ok(Tensor::new(x.shape().to_vec(), data)?)
    }

    pub fn apply_inverse(&self, y: &Tensor) -> Result<Tensor> {
        self.check(y)?;
        let mut data = vec![0.0; y.len()];
        for (&j, &v) in self.forward.iter().zip(y.data()) {
            data[j] = v;
        }
        Ok(Tensor::new(y.shape().to_vec(), data)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NonlinearFn {
    /// `1 / (1 + e^-z)`
    Sigmoid,
    /// `s(z) (1 - s(z))`
    SigmoidPrime,
    /// `max(z, 0)`
    Relu,
    /// `1` for `z > 0`, else `0`
    ReluPrime,
}

impl NonlinearFn {
    pub fn name(self) -> &'static str {
        match self {
            NonlinearFn::Sigmoid => "sigmoid",
            NonlinearFn::SigmoidPrime => "sigmoid_prime",
            NonlinearFn::Relu => "relu",
            NonlinearFn::ReluPrime => "relu_prime",
        }
    }

    pub fn eval(self, z: f64) -> f64 {
        match self {
            NonlinearFn::Sigmoid => sigmoid(z),
            NonlinearFn::SigmoidPrime => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            NonlinearFn::Relu => z.max(0.0),
            NonlinearFn::ReluPrime => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn apply(self, x: &Tensor) -> Tensor {
        x.map(|v| self.eval(v))
    }

    /// Parses a `+`-joined list such as `sigmoid+sigmoid_prime`.
    pub fn parse_list(s: &str) -> Result<Vec<NonlinearFn>> {
        s.split('+').map(str::parse).collect()
    }

    pub fn join(fns: &[NonlinearFn]) -> String {
        fns.iter().map(|f| f.name()).collect::<Vec<_>>().join("+")
    }
}

impl FromStr for NonlinearFn {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(NonlinearFn::Sigmoid),
            "sigmoid_prime" => Ok(NonlinearFn::SigmoidPrime),
            "relu" => Ok(NonlinearFn::Relu),
            "relu_prime" => Ok(NonlinearFn::ReluPrime),
            "softmax" => Err(ProtocolError::Unsupported(
                "softmax is not element-wise and cannot be evaluated on a permuted vector".into(),
            )),
            other => Err(ProtocolError::Unsupported(format!("unknown function {other}"))),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Adds i.i.d. `N(0, sigma²)` noise; `sigma = 0` returns `x` unchanged.
pub fn add_local_noise(x: &Tensor, sigma: f64, rng: &mut Rng) -> Result<Tensor> {
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let noise = rng.normal(x.shape()).scale(sigma)?;
    Ok(x.add(&noise)?)
}

/// What one computing party sends to P3.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRequest {
    pub tag: Tag,
    pub role: Role,
    pub fns: Vec<NonlinearFn>,
    pub permuted_share: Tensor,
}

/// Client side of P3: returns this party's shares of each `f(x')`.
pub trait ThirdParty: Send + Sync {
    fn evaluate(&self, request: EvalRequest) -> Result<Vec<Tensor>>;
}

#[derive(Debug, Default)]
struct Slot {
    shares: [Option<Tensor>; 2],
    fns: Vec<NonlinearFn>,
    results: Option<[Option<Vec<Tensor>>; 2]>,
    failure: Option<String>,
}

/// The semi-honest third party P3. Requests from P0 and P1 are paired by
/// tag; the second arrival triggers evaluation. Re-sharing masks for a tag
/// come from substream `tag` of the seed, so the outcome does not depend on
/// which request arrives first.
#[derive(Debug)]
pub struct NonlinearParty {
    seed: u64,
    mask_bound: f64,
    timeout: Duration,
    slots: Mutex<HashMap<Tag, Slot>>,
    ready: Condvar,
    record: bool,
    views: Mutex<Vec<(Tag, Tensor)>>,
}

impl NonlinearParty {
    pub fn new(seed: u64, mask_bound: f64) -> Self {
        NonlinearParty {
            seed,
            mask_bound,
            timeout: DEFAULT_TIMEOUT,
            slots: Mutex::new(HashMap::new()),
            ready: Condvar::new(),
            record: false,
            views: Mutex::new(Vec::new()),
        }
    }

    /// Keeps a copy of every reconstructed `x'`, for inspecting what P3 saw.
    pub fn recording(mut self) -> Self {
        self.record = true;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn views(&self) -> Vec<(Tag, Tensor)> {
        self.views.lock().unwrap().clone()
    }

    fn compute(&self, tag: Tag, slot: &mut Slot) {
        let outcome = (|| -> Result<[Option<Vec<Tensor>>; 2]> {
            let s0 = slot.shares[0].as_ref().unwrap();
            let s1 = slot.shares[1].as_ref().unwrap();
            let x = s0.add(s1)?;
            if self.record {
                self.views.lock().unwrap().push((tag, x.clone()));
            }
            let mut rng = Rng::substream(self.seed, mix64(tag.round) ^ tag.value);
            let mut out0 = Vec::with_capacity(slot.fns.len());
            let mut out1 = Vec::with_capacity(slot.fns.len());
            for f in &slot.fns {
                let y = f.apply(&x);
                let mask = rng.uniform(y.shape(), -self.mask_bound, self.mask_bound);
                out1.push(y.sub(&mask)?);
                out0.push(mask);
            }
            Ok([Some(out0), Some(out1)])
        })();
        match outcome {
            Ok(results) => slot.results = Some(results),
            Err(e) => slot.failure = Some(e.to_string()),
        }
    }

    pub fn submit(&self, request: EvalRequest) -> Result<Vec<Tensor>> {
        let EvalRequest {
            tag,
            role,
            fns,
            permuted_share,
        } = request;
        let me = role.index();
        let deadline = Instant::now() + self.timeout;
        let mut slots = self.slots.lock().unwrap();
        {
            let slot = slots.entry(tag).or_default();
            if slot.shares[me].is_some() {
                return Err(ProtocolError::ThirdParty(format!("duplicate request from {role:?} for {tag:?}")));
            }
            if slot.shares[1 - me].is_some() && slot.fns != fns {
                slot.failure = Some("parties requested different functions".into());
            }
            slot.fns = fns;
            slot.shares[me] = Some(permuted_share);
            if slot.shares.iter().all(Option::is_some) && slot.failure.is_none() {
                self.compute(tag, slot);
            }
            self.ready.notify_all();
        }
        loop {
            let slot = slots.get_mut(&tag).expect("slot lives until both results are taken");
            if let Some(reason) = slot.failure.clone() {
                slot.shares[me] = None;
                if slot.shares.iter().all(Option::is_none) {
                    slots.remove(&tag);
                }
                return Err(ProtocolError::ThirdParty(reason));
            }
            if let Some(results) = slot.results.as_mut() {
                let mine = results[me].take().expect("each party takes its result once");
                if results.iter().all(Option::is_none) {
                    slots.remove(&tag);
                }
                return Ok(mine);
            }
            let now = Instant::now();
            if now >= deadline {
                slot.shares[me] = None;
                if slot.shares.iter().all(Option::is_none) {
                    slots.remove(&tag);
                }
                return Err(ProtocolError::ThirdParty(format!("peer never submitted {tag:?}")));
            }
            slots = self.ready.wait_timeout(slots, deadline - now).unwrap().0;
        }
    }
}

impl ThirdParty for NonlinearParty {
    fn evaluate(&self, request: EvalRequest) -> Result<Vec<Tensor>> {
        self.submit(request)
    }
}

/// Optional local noise added by P0 to its permuted share before it leaves
/// the party. The reconstructed `x'` then carries `N(0, sigma²)` noise.
#[derive(Debug, Clone)]
pub struct LocalNoise {
    pub sigma: f64,
    pub seed: u64,
}

/// One party's side of the protocol. Returns one share per function, in the
/// order of `fns`, shaped like the input.
pub fn eval_nonlinear_share(
    h: &ShareHandle,
    fns: &[NonlinearFn],
    seed: u64,
    tag: Tag,
    p3: &dyn ThirdParty,
    noise: Option<&LocalNoise>,
) -> Result<Vec<ShareHandle>> {
    let flat = h.share().flatten();
    let perm = permutation_from_seed(seed, flat.len());
    let mut permuted = perm.apply(&flat)?;
    if let (Role::P0, Some(noise)) = (h.role(), noise) {
        let mut rng = Rng::substream(noise.seed, mix64(tag.round) ^ tag.value);
        permuted = add_local_noise(&permuted, noise.sigma, &mut rng)?;
    }
    let replies = p3.evaluate(EvalRequest {
        tag,
        role: h.role(),
        fns: fns.to_vec(),
        permuted_share: permuted,
    })?;
    if replies.len() != fns.len() {
        return Err(ProtocolError::ThirdParty(format!(
            "expected {} result shares, got {}",
            fns.len(),
            replies.len()
        )));
    }
    replies
        .into_iter()
        .zip(fns)
        .map(|(reply, f)| {
            let restored = perm.apply_inverse(&reply)?.reshape(h.shape().to_vec())?;
            let id = ValueId::derive(0x4E4C_0000 + *f as u64, &[h.value_id()], None);
            Ok(ShareHandle::new(h.role(), id, restored))
        })
        .collect()
}

/// Runs both parties' sides concurrently against `p3` and returns the shares
/// of `f(x)` for each requested function.
pub fn eval_nonlinear_many(
    x: &Shared,
    fns: &[NonlinearFn],
    seed: u64,
    p3: &dyn ThirdParty,
) -> Result<Vec<Shared>> {
    let tag = Tag::new(seed, x.p0.value_id().0);
    let (r0, r1) = std::thread::scope(|s| {
        let a = s.spawn(|| eval_nonlinear_share(&x.p0, fns, seed, tag, p3, None));
        let b = s.spawn(|| eval_nonlinear_share(&x.p1, fns, seed, tag, p3, None));
        (a.join().expect("P0 thread"), b.join().expect("P1 thread"))
    });
    r0?.into_iter()
        .zip(r1?)
        .map(|(p0, p1)| Shared::new(p0, p1))
        .collect()
}

pub fn eval_nonlinear(
    h0: &ShareHandle,
    h1: &ShareHandle,
    f: NonlinearFn,
    seed: u64,
    p3: &dyn ThirdParty,
) -> Result<(ShareHandle, ShareHandle)> {
    let x = Shared::new(h0.clone(), h1.clone())?;
    let mut out = eval_nonlinear_many(&x, &[f], seed, p3)?;
    let s = out.pop().expect("one function requested");
    Ok((s.p0, s.p1))
}
