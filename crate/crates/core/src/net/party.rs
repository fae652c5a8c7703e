//! A party: a keyed store plus an executor for coordinator expressions.
//!
//! Supported operations (`x`, `y` evaluate to tensors, `n` are numbers):
//!
//! | op | meaning |
//! |----|---------|
//! | `(add x y)` `(sub x y)` `(mul x y)` `(matmul x y)` | local arithmetic; `mul` broadcasts a one-element operand |
//! | `(transpose x)` `(neg x)` `(scale n x)` `(sum_rows x)` | local unary ops |
//! | `(add_row x r)` | adds the `1 × c` row `r` to every row of `x` |
//! | `(rows x start count)` | `count` rows from `start`, wrapping around |
//! | `(add_public x a)` `(mul_public x a)` | public constant on a share (P0/P1) |
//! | `(beaver x y k:T)` | Beaver product using stored triple `T` (P0/P1) |
//! | `(eval_fn seed fns x [sigma])` | permuted nonlinear evaluation via P3 (P0/P1) |
//! | `(hidden_fwd round x)` | sends this share of `z` to the tail; yields `x` (P0/P1) |
//! | `(grad_back round)` | waits for this party's share of `dL/dz` (P0/P1) |
//! | `(tail_step round W2 b2 Y start count lr)` | tail forward/backward; yields loss, `W2'`, `b2'` (tail) |
//! | `(list x ...)` | several results at once |
//!
//! `eval_fn` with several functions, `tail_step` and `list` are allowed only
//! at the top level; each of their outputs is stored under its own key.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use crate::channel::{Channel, ChannelError, Mailbox, Tag, DEFAULT_TIMEOUT};
use crate::nonlinear::{eval_nonlinear_share, EvalRequest, LocalNoise, NonlinearFn, NonlinearParty, ThirdParty};
use crate::rng::{mix64, Rng};
use crate::sharing::{
    add_public, beaver_mul, Dealer, ProtocolError, Role, ShareHandle, TripleShare, ValueId, DEFAULT_MASK_BOUND,
};
use crate::split::TailModel;
use crate::tensor::Tensor;

use super::expr::{parse, Expr};
use super::transport::Transport;
use super::wire::{Message, PartyRole, TriplePayload};
use super::NetError;

type Result<T> = std::result::Result<T, NetError>;

/// Inbox slot for gradient shares; hidden shares use the sender's role index.
const GRAD_SLOT: u64 = 2;

/// Seed of one party, derived from the deployment seed.
pub fn party_seed(deployment_seed: u64, role: PartyRole) -> u64 {
    mix64(deployment_seed ^ mix64(0x5041_5254 + role.code()))
}

#[derive(Debug, Clone)]
pub struct PartyConfig {
    pub role: PartyRole,
    pub seed: u64,
    pub mask_bound: f64,
    /// How long to wait for a peer's message.
    pub timeout: Duration,
    /// Local noise P0 adds before revealing to P3; 0 disables it.
    pub noise_sigma: f64,
}

impl PartyConfig {
    pub fn new(role: PartyRole, deployment_seed: u64) -> Self {
        PartyConfig {
            role,
            seed: party_seed(deployment_seed, role),
            mask_bound: DEFAULT_MASK_BOUND,
            timeout: DEFAULT_TIMEOUT,
            noise_sigma: 0.0,
        }
    }
}

#[derive(Debug)]
enum Entry {
    Tensor(Tensor),
    Triple(TripleShare),
    Consumed(ValueId),
}

enum Out {
    One(Tensor),
    Many(Vec<Tensor>),
}

struct Ctx {
    round: u64,
    slot: u64,
}

pub struct Party {
    config: PartyConfig,
    store: Mutex<HashMap<u64, Entry>>,
    next_key: AtomicU64,
    openings: Mailbox,
    inbox: Mailbox,
    rounds: Mutex<HashMap<u64, Arc<Mutex<()>>>>,
    transport: OnceLock<Arc<dyn Transport>>,
    p3: Option<NonlinearParty>,
    dealer: Option<Dealer>,
}

impl std::fmt::Debug for Party {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Party")
            .field("role", &self.config.role)
            .field("stored", &self.stored())
            .finish()
    }
}

impl Party {
    pub fn new(config: PartyConfig) -> Self {
        let p3 = (config.role == PartyRole::P3)
            .then(|| NonlinearParty::new(config.seed, config.mask_bound).with_timeout(config.timeout));
        let dealer = (config.role == PartyRole::Dealer).then(|| Dealer::new(config.seed, config.mask_bound));
        Party {
            openings: Mailbox::with_timeout(config.timeout),
            inbox: Mailbox::with_timeout(config.timeout),
            store: Mutex::new(HashMap::new()),
            next_key: AtomicU64::new(1),
            rounds: Mutex::new(HashMap::new()),
            transport: OnceLock::new(),
            p3,
            dealer,
            config,
        }
    }

    pub fn role(&self) -> PartyRole {
        self.config.role
    }

    /// Sets how this party reaches its peers. Only the first call has effect.
    pub fn connect(&self, transport: Arc<dyn Transport>) {
        let _ = self.transport.set(transport);
    }

    fn transport(&self) -> Result<&Arc<dyn Transport>> {
        self.transport
            .get()
            .ok_or_else(|| NetError::Config(format!("{} has no transport", self.config.role.name())))
    }

    /// Number of live store entries, including consumed-triple tombstones.
    pub fn stored(&self) -> usize {
        self.store.lock().unwrap().len()
    }

    fn insert(&self, entry: Entry) -> u64 {
        let key = self.next_key.fetch_add(1, Ordering::Relaxed);
        self.store.lock().unwrap().insert(key, entry);
        key
    }

    fn tensor(&self, key: u64) -> Result<Tensor> {
        match self.store.lock().unwrap().get(&key) {
            Some(Entry::Tensor(t)) => Ok(t.clone()),
            Some(_) => Err(NetError::BadArgs {
                op: "key".into(),
                reason: format!("key {key} does not hold a tensor"),
            }),
            None => Err(NetError::UnknownKey(key)),
        }
    }

    fn take_triple(&self, key: u64) -> Result<TripleShare> {
        let mut store = self.store.lock().unwrap();
        match store.get(&key) {
            Some(Entry::Triple(t)) => {
                let id = t.id;
                match store.insert(key, Entry::Consumed(id)) {
                    Some(Entry::Triple(t)) => Ok(t),
                    _ => unreachable!(),
                }
            }
            Some(Entry::Consumed(id)) => Err(ProtocolError::TripleConsumed(*id).into()),
            Some(Entry::Tensor(_)) => Err(NetError::BadArgs {
                op: "beaver".into(),
                reason: format!("key {key} is not a triple"),
            }),
            None => Err(NetError::UnknownKey(key)),
        }
    }

    fn share_role(&self, op: &str) -> Result<Role> {
        self.config.role.share_role().ok_or_else(|| NetError::WrongRole {
            role: self.config.role,
            what: op.to_string(),
        })
    }

    fn require(&self, role: PartyRole, what: &str) -> Result<()> {
        if self.config.role != role {
            return Err(NetError::WrongRole {
                role: self.config.role,
                what: what.to_string(),
            });
        }
        Ok(())
    }

    /// Handles one request and produces the reply. Failures become NACKs.
    pub fn handle(&self, msg: Message) -> Message {
        let kind = msg.kind();
        match self.dispatch(msg) {
            Ok(reply) => reply,
            Err(e) => {
                log::debug!("{} rejected {kind:?}: {e}", self.config.role.name());
                Message::nack(e.to_string(), e.retryable())
            }
        }
    }

    fn dispatch(&self, msg: Message) -> Result<Message> {
        match msg {
            Message::Store(t) => Ok(Message::ack_keys(vec![self.insert(Entry::Tensor(t))])),
            Message::StoreTriple(p) => {
                let role = self.share_role("store a triple")?;
                let share = TripleShare::new(role, p.id, p.kind, p.u, p.v, p.w)?;
                Ok(Message::ack_keys(vec![self.insert(Entry::Triple(share))]))
            }
            Message::Fetch { key } => Ok(Message::Ack {
                keys: vec![key],
                tensors: vec![self.tensor(key)?],
            }),
            Message::Free { keys } => {
                let mut store = self.store.lock().unwrap();
                for k in &keys {
                    store.remove(k);
                }
                Ok(Message::ack_keys(keys))
            }
            Message::Exec { round, expr } => self.exec(round, &expr).map(Message::ack_keys),
            Message::EvalFn {
                round,
                slot,
                role,
                fns,
                share,
            } => {
                let p3 = self.p3.as_ref().ok_or_else(|| NetError::WrongRole {
                    role: self.config.role,
                    what: "evaluate functions".into(),
                })?;
                let shares = p3.submit(EvalRequest {
                    tag: Tag::new(round, slot),
                    role,
                    fns,
                    permuted_share: share,
                })?;
                Ok(Message::ShareBack { round, shares })
            }
            Message::TripleReq {
                round,
                kind,
                shape_x,
                shape_y,
            } => {
                let dealer = self.dealer.as_ref().ok_or_else(|| NetError::WrongRole {
                    role: self.config.role,
                    what: "deal triples".into(),
                })?;
                let sx: Vec<usize> = shape_x.iter().map(|&d| d as usize).collect();
                let sy: Vec<usize> = shape_y.iter().map(|&d| d as usize).collect();
                let (t0, t1) = dealer.make_for_stream(round, &sx, &sy, kind)?.split();
                let transport = self.transport()?;
                let k0 = expect_key(transport.request(PartyRole::P0, &Message::StoreTriple(TriplePayload::from_share(&t0)))?)?;
                let k1 = expect_key(transport.request(PartyRole::P1, &Message::StoreTriple(TriplePayload::from_share(&t1)))?)?;
                Ok(Message::ack_keys(vec![k0, k1]))
            }
            Message::HiddenFwd { round, role, z } => {
                self.require(PartyRole::Tail, "receive hidden outputs")?;
                self.inbox.deposit(Tag::new(round, role.index() as u64), vec![z])?;
                Ok(Message::ack_keys(vec![]))
            }
            Message::GradBack { round, dz } => {
                self.share_role("receive hidden gradients")?;
                self.inbox.deposit(Tag::new(round, GRAD_SLOT), vec![dz])?;
                Ok(Message::ack_keys(vec![]))
            }
            Message::Open {
                round,
                value_id,
                tensors,
            } => {
                self.share_role("receive openings")?;
                self.openings.deposit(Tag::new(round, value_id), tensors)?;
                Ok(Message::ack_keys(vec![]))
            }
            other @ (Message::Ack { .. } | Message::Nack { .. } | Message::ShareBack { .. }) => {
                Err(NetError::UnexpectedReply(other.kind()))
            }
        }
    }

    /// Parses and evaluates `expr`, stores each output and returns the keys.
    pub fn exec(&self, round: u64, expr: &str) -> Result<Vec<u64>> {
        let lock = self.rounds.lock().unwrap().entry(round).or_default().clone();
        let outcome = {
            let _serial = lock.lock().unwrap();
            let e = parse(expr)?;
            self.eval(&e, &mut Ctx { round, slot: 0 })
        };
        {
            let mut rounds = self.rounds.lock().unwrap();
            if Arc::strong_count(&lock) == 2 {
                rounds.remove(&round);
            }
        }
        let outputs = match outcome? {
            Out::One(t) => vec![t],
            Out::Many(ts) => ts,
        };
        Ok(outputs.into_iter().map(|t| self.insert(Entry::Tensor(t))).collect())
    }

    fn eval_one(&self, e: &Expr, ctx: &mut Ctx) -> Result<Tensor> {
        match self.eval(e, ctx)? {
            Out::One(t) => Ok(t),
            Out::Many(_) => Err(NetError::BadArgs {
                op: e.to_string(),
                reason: "multi-output operation used as an argument".into(),
            }),
        }
    }

    fn eval(&self, e: &Expr, ctx: &mut Ctx) -> Result<Out> {
        let (op, args) = match e {
            Expr::Key(k) => return Ok(Out::One(self.tensor(*k)?)),
            Expr::Inline(t) => return Ok(Out::One(t.clone())),
            Expr::Num(_) => {
                let v = e.as_f64().ok_or_else(|| bad("number", "not a number"))?;
                return Ok(Out::One(Tensor::scalar(v)));
            }
            Expr::Sym(s) => return Err(bad(s, "a symbol is not a value")),
            Expr::Call(op, args) => (op.as_str(), args.as_slice()),
        };
        let arity = |n: usize| -> Result<()> {
            if args.len() != n {
                return Err(bad(op, &format!("expects {n} arguments, got {}", args.len())));
            }
            Ok(())
        };
        let t = match op {
            "add" | "sub" | "mul" | "mul_public" | "matmul" | "add_row" => {
                arity(2)?;
                let a = self.eval_one(&args[0], ctx)?;
                let b = self.eval_one(&args[1], ctx)?;
                match op {
                    "add" => a.add(&b)?,
                    "sub" => a.sub(&b)?,
                    "mul" | "mul_public" => a.mul(&b)?,
                    "matmul" => a.matmul(&b)?,
                    _ => a.add_row(&b)?,
                }
            }
            "transpose" | "neg" | "sum_rows" => {
                arity(1)?;
                let a = self.eval_one(&args[0], ctx)?;
                match op {
                    "transpose" => a.transpose()?,
                    "neg" => a.neg(),
                    _ => a.sum_rows()?,
                }
            }
            "scale" => {
                arity(2)?;
                let factor = num_f64(op, &args[0])?;
                self.eval_one(&args[1], ctx)?.scale(factor)?
            }
            "rows" => {
                arity(3)?;
                let x = self.eval_one(&args[0], ctx)?;
                x.rows_wrapping(num_u64(op, &args[1])? as usize, num_u64(op, &args[2])? as usize)?
            }
            "add_public" => {
                arity(2)?;
                let role = self.share_role(op)?;
                let x = self.eval_one(&args[0], ctx)?;
                let a = self.eval_one(&args[1], ctx)?;
                add_public(&ShareHandle::new(role, ValueId(0), x), &a)?.into_share()
            }
            "beaver" => {
                arity(3)?;
                let role = self.share_role(op)?;
                let x = self.eval_one(&args[0], ctx)?;
                let y = self.eval_one(&args[1], ctx)?;
                let Expr::Key(tk) = args[2] else {
                    return Err(bad(op, "third argument must be a triple key"));
                };
                let mut triple = self.take_triple(tk)?;
                let chan = PeerChannel { party: self, role };
                let hx = ShareHandle::new(role, ValueId(0), x);
                let hy = ShareHandle::new(role, ValueId(0), y);
                beaver_mul(&hx, &hy, &mut triple, ctx.round, &chan)?.into_share()
            }
            "eval_fn" => {
                if !(3..=4).contains(&args.len()) {
                    return Err(bad(op, "expects seed, functions, input and optional sigma"));
                }
                let role = self.share_role(op)?;
                let seed = num_u64(op, &args[0])?;
                let fns = match &args[1] {
                    Expr::Sym(s) => NonlinearFn::parse_list(s)?,
                    _ => return Err(bad(op, "second argument must name functions")),
                };
                let x = self.eval_one(&args[2], ctx)?;
                let sigma = match args.get(3) {
                    Some(s) => num_f64(op, s)?,
                    None => self.config.noise_sigma,
                };
                let noise = (sigma > 0.0).then_some(LocalNoise {
                    sigma,
                    seed: self.config.seed,
                });
                let tag = Tag::new(ctx.round, ctx.slot);
                ctx.slot += 1;
                let client = P3Client { party: self };
                let h = ShareHandle::new(role, ValueId(0), x);
                let mut outs: Vec<Tensor> = eval_nonlinear_share(&h, &fns, seed, tag, &client, noise.as_ref())?
                    .into_iter()
                    .map(ShareHandle::into_share)
                    .collect();
                if outs.len() == 1 {
                    outs.pop().unwrap()
                } else {
                    return Ok(Out::Many(outs));
                }
            }
            "hidden_fwd" => {
                arity(2)?;
                let role = self.share_role(op)?;
                let round = num_u64(op, &args[0])?;
                let z = self.eval_one(&args[1], ctx)?;
                let reply = self.transport()?.request(
                    PartyRole::Tail,
                    &Message::HiddenFwd {
                        round,
                        role,
                        z: z.clone(),
                    },
                )?;
                expect_ack(reply)?;
                z
            }
            "grad_back" => {
                arity(1)?;
                self.share_role(op)?;
                let round = num_u64(op, &args[0])?;
                let mut got = self.inbox.take(Tag::new(round, GRAD_SLOT))?;
                got.pop().ok_or_else(|| bad(op, "empty gradient message"))?
            }
            "tail_step" => {
                arity(7)?;
                self.require(PartyRole::Tail, op)?;
                return self.tail_step(args, ctx);
            }
            "list" => {
                let outs = args.iter().map(|a| self.eval_one(a, ctx)).collect::<Result<Vec<_>>>()?;
                return Ok(Out::Many(outs));
            }
            other => return Err(NetError::UnknownOp(other.to_string())),
        };
        Ok(Out::One(t))
    }

    fn tail_step(&self, args: &[Expr], ctx: &mut Ctx) -> Result<Out> {
        let op = "tail_step";
        let round = num_u64(op, &args[0])?;
        let w2 = self.eval_one(&args[1], ctx)?;
        let b2 = self.eval_one(&args[2], ctx)?;
        let labels_all = self.eval_one(&args[3], ctx)?;
        let start = num_u64(op, &args[4])? as usize;
        let count = num_u64(op, &args[5])? as usize;
        let lr = num_f64(op, &args[6])?;
        let labels = labels_all.rows_wrapping(start, count)?;

        let mut z0 = self.inbox.take(Tag::new(round, 0))?;
        let mut z1 = self.inbox.take(Tag::new(round, 1))?;
        let (z0, z1) = match (z0.pop(), z1.pop()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(bad(op, "empty hidden message")),
        };
        let z = z0.add(&z1)?;
        let mut tail = TailModel { w2, b2, lr };
        let (loss, dz) = tail.tail_forward_backward(&z, &labels)?;

        let mut rng = Rng::substream(self.config.seed, round);
        let mask = rng.uniform(dz.shape(), -self.config.mask_bound, self.config.mask_bound);
        let rest = dz.sub(&mask)?;
        let transport = self.transport()?;
        expect_ack(transport.request(PartyRole::P0, &Message::GradBack { round, dz: mask })?)?;
        expect_ack(transport.request(PartyRole::P1, &Message::GradBack { round, dz: rest })?)?;
        Ok(Out::Many(vec![Tensor::scalar(loss), tail.w2, tail.b2]))
    }
}

fn bad(op: &str, reason: &str) -> NetError {
    NetError::BadArgs {
        op: op.to_string(),
        reason: reason.to_string(),
    }
}

fn num_u64(op: &str, e: &Expr) -> Result<u64> {
    e.as_u64().ok_or_else(|| bad(op, &format!("expected an unsigned integer, got {e}")))
}

fn num_f64(op: &str, e: &Expr) -> Result<f64> {
    e.as_f64().ok_or_else(|| bad(op, &format!("expected a number, got {e}")))
}

pub(crate) fn expect_ack(reply: Message) -> Result<(Vec<u64>, Vec<Tensor>)> {
    match reply {
        Message::Ack { keys, tensors } => Ok((keys, tensors)),
        Message::Nack { reason, retryable } => Err(NetError::Nack { reason, retryable }),
        other => Err(NetError::UnexpectedReply(other.kind())),
    }
}

fn expect_key(reply: Message) -> Result<u64> {
    let (keys, _) = expect_ack(reply)?;
    keys.first().copied().ok_or(NetError::UnexpectedReply(super::wire::MsgType::Ack))
}

/// Openings between P0 and P1 over the party transport.
struct PeerChannel<'a> {
    party: &'a Party,
    role: Role,
}

impl Channel for PeerChannel<'_> {
    fn send(&self, tag: Tag, payload: Vec<Tensor>) -> std::result::Result<(), ChannelError> {
        let msg = Message::Open {
            round: tag.round,
            value_id: tag.value,
            tensors: payload,
        };
        let outcome = self
            .party
            .transport()
            .and_then(|t| t.request(self.role.peer().into(), &msg))
            .and_then(expect_ack);
        outcome.map(|_| ()).map_err(|e| ChannelError::Unreachable(e.to_string()))
    }

    fn recv(&self, tag: Tag) -> std::result::Result<Vec<Tensor>, ChannelError> {
        self.party.openings.take(tag)
    }
}

/// Reaches P3 with EVAL_FN and waits for SHARE_BACK.
struct P3Client<'a> {
    party: &'a Party,
}

impl ThirdParty for P3Client<'_> {
    fn evaluate(&self, request: EvalRequest) -> crate::sharing::Result<Vec<Tensor>> {
        let msg = Message::EvalFn {
            round: request.tag.round,
            slot: request.tag.value,
            role: request.role,
            fns: request.fns,
            share: request.permuted_share,
        };
        let reply = self
            .party
            .transport()
            .and_then(|t| t.request(PartyRole::P3, &msg))
            .map_err(|e| ProtocolError::ThirdParty(e.to_string()))?;
        match reply {
            Message::ShareBack { shares, .. } => Ok(shares),
            Message::Nack { reason, .. } => Err(ProtocolError::ThirdParty(reason)),
            other => Err(ProtocolError::ThirdParty(format!("unexpected {:?} reply", other.kind()))),
        }
    }
}
