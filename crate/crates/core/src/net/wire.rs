//! Binary framing.
//!
//! ```text
//! frame  = "PSH1" type:u8 body_len:u64le body
//! body   = field_count:u32le field*
//! field  = name_len:u8 name:utf8 tag:u8 value
//! value  = 1: u64le
//!        | 2: f64le
//!        | 3: len:u32le utf8
//!        | 4: len:u64le tensor
//!        | 5: count:u32le u64le*
//!        | 6: count:u32le (len:u64le tensor)*
//! tensor = rank:u64le dim:u64le* f64le*
//! ```
//!
//! Byte-level details and a worked example are in `docs/wire-format.md`.

use std::io::{Read, Write};

use thiserror::Error;

use crate::nonlinear::NonlinearFn;
use crate::sharing::{MulKind, Role, TripleShare, ValueId};
use crate::tensor::{Tensor, TensorError};

pub const MAGIC: &[u8; 4] = b"PSH1";
pub const HEADER_LEN: usize = 13;
/// Upper limit on a frame body, to fail fast on garbage lengths.
pub const MAX_BODY: u64 = 1 << 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("unknown value tag {0}")]
    UnknownTag(u8),
    #[error("truncated {0}")]
    Truncated(&'static str),
    #[error("frame body of {0} bytes exceeds the limit")]
    TooLarge(u64),
    #[error("invalid utf-8 in {0}")]
    Utf8(&'static str),
    #[error("{0} trailing bytes after body")]
    Trailing(usize),
    #[error("missing field {0:?}")]
    MissingField(&'static str),
    #[error("field {0:?} has the wrong type")]
    FieldType(&'static str),
    #[error("invalid field {0:?}: {1}")]
    Invalid(&'static str, String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("i/o: {0}")]
    Io(String),
    #[error("timed out")]
    TimedOut,
}

impl From<std::io::Error> for WireError {
    fn from(e: std::io::Error) -> Self {
        match e.kind() {
            std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock => WireError::TimedOut,
            _ => WireError::Io(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, WireError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Store = 1,
    Fetch = 2,
    Free = 3,
    Exec = 4,
    EvalFn = 5,
    ShareBack = 6,
    TripleReq = 7,
    HiddenFwd = 8,
    GradBack = 9,
    Ack = 10,
    Nack = 11,
    /// Beaver openings between P0 and P1.
    Open = 12,
}

impl MsgType {
    pub fn from_code(code: u8) -> Result<Self> {
        use MsgType::*;
        Ok(match code {
            1 => Store,
            2 => Fetch,
            3 => Free,
            4 => Exec,
            5 => EvalFn,
            6 => ShareBack,
            7 => TripleReq,
            8 => HiddenFwd,
            9 => GradBack,
            10 => Ack,
            11 => Nack,
            12 => Open,
            other => return Err(WireError::UnknownType(other)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    U64(u64),
    F64(f64),
    Str(String),
    Tensor(Tensor),
    U64List(Vec<u64>),
    TensorList(Vec<Tensor>),
}

impl Value {
    fn tag(&self) -> u8 {
        match self {
            Value::U64(_) => 1,
            Value::F64(_) => 2,
            Value::Str(_) => 3,
            Value::Tensor(_) => 4,
            Value::U64List(_) => 5,
            Value::TensorList(_) => 6,
        }
    }
}

/// An untyped frame: message type plus ordered named fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: MsgType,
    pub fields: Vec<(String, Value)>,
}

impl Frame {
    pub fn new(kind: MsgType) -> Self {
        Frame { kind, fields: Vec::new() }
    }

    pub fn with(mut self, name: &str, value: Value) -> Self {
        self.fields.push((name.to_string(), value));
        self
    }

    fn take(&mut self, name: &'static str) -> Result<Value> {
        let pos = self
            .fields
            .iter()
            .position(|(n, _)| n == name)
            .ok_or(WireError::MissingField(name))?;
        Ok(self.fields.remove(pos).1)
    }

    fn has(&self, name: &str) -> bool {
        self.fields.iter().any(|(n, _)| n == name)
    }

    fn u64(&mut self, name: &'static str) -> Result<u64> {
        match self.take(name)? {
            Value::U64(v) => Ok(v),
            _ => Err(WireError::FieldType(name)),
        }
    }

    fn str(&mut self, name: &'static str) -> Result<String> {
        match self.take(name)? {
            Value::Str(v) => Ok(v),
            _ => Err(WireError::FieldType(name)),
        }
    }

    fn tensor(&mut self, name: &'static str) -> Result<Tensor> {
        match self.take(name)? {
            Value::Tensor(v) => Ok(v),
            _ => Err(WireError::FieldType(name)),
        }
    }

    fn u64_list(&mut self, name: &'static str) -> Result<Vec<u64>> {
        match self.take(name)? {
            Value::U64List(v) => Ok(v),
            _ => Err(WireError::FieldType(name)),
        }
    }

    fn tensors(&mut self, name: &'static str) -> Result<Vec<Tensor>> {
        match self.take(name)? {
            Value::TensorList(v) => Ok(v),
            _ => Err(WireError::FieldType(name)),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        body.extend_from_slice(&(self.fields.len() as u32).to_le_bytes());
        for (name, value) in &self.fields {
            assert!(name.len() <= u8::MAX as usize, "field name too long");
            body.push(name.len() as u8);
            body.extend_from_slice(name.as_bytes());
            body.push(value.tag());
            match value {
                Value::U64(v) => body.extend_from_slice(&v.to_le_bytes()),
                Value::F64(v) => body.extend_from_slice(&v.to_le_bytes()),
                Value::Str(s) => {
                    body.extend_from_slice(&(s.len() as u32).to_le_bytes());
                    body.extend_from_slice(s.as_bytes());
                }
                Value::Tensor(t) => {
                    body.extend_from_slice(&(t.encoded_len() as u64).to_le_bytes());
                    t.write_bytes(&mut body);
                }
                Value::U64List(vs) => {
                    body.extend_from_slice(&(vs.len() as u32).to_le_bytes());
                    for v in vs {
                        body.extend_from_slice(&v.to_le_bytes());
                    }
                }
                Value::TensorList(ts) => {
                    body.extend_from_slice(&(ts.len() as u32).to_le_bytes());
                    for t in ts {
                        body.extend_from_slice(&(t.encoded_len() as u64).to_le_bytes());
                        t.write_bytes(&mut body);
                    }
                }
            }
        }
        let mut out = Vec::with_capacity(HEADER_LEN + body.len());
        out.extend_from_slice(MAGIC);
        out.push(self.kind as u8);
        out.extend_from_slice(&(body.len() as u64).to_le_bytes());
        out.extend_from_slice(&body);
        out
    }

    /// Parses the 13-byte header; returns the type and body length.
    pub fn decode_header(header: &[u8; HEADER_LEN]) -> Result<(MsgType, u64)> {
        let magic: [u8; 4] = header[..4].try_into().unwrap();
        if &magic != MAGIC {
            return Err(WireError::BadMagic(magic));
        }
        let kind = MsgType::from_code(header[4])?;
        let len = u64::from_le_bytes(header[5..].try_into().unwrap());
        if len > MAX_BODY {
            return Err(WireError::TooLarge(len));
        }
        Ok((kind, len))
    }

    pub fn decode(bytes: &[u8]) -> Result<Frame> {
        if bytes.len() < HEADER_LEN {
            return Err(WireError::Truncated("header"));
        }
        let (kind, len) = Self::decode_header(bytes[..HEADER_LEN].try_into().unwrap())?;
        let body = &bytes[HEADER_LEN..];
        if (body.len() as u64) < len {
            return Err(WireError::Truncated("body"));
        }
        if body.len() as u64 > len {
            return Err(WireError::Trailing(body.len() - len as usize));
        }
        Self::decode_body(kind, body)
    }

    pub fn decode_body(kind: MsgType, body: &[u8]) -> Result<Frame> {
        let mut cur = Cursor { buf: body, pos: 0 };
        let count = cur.u32("field count")?;
        let mut fields = Vec::with_capacity(count.min(64) as usize);
        for _ in 0..count {
            let name_len = cur.u8("field name")? as usize;
            let name = std::str::from_utf8(cur.bytes(name_len, "field name")?)
                .map_err(|_| WireError::Utf8("field name"))?
                .to_string();
            let value = match cur.u8("value tag")? {
                1 => Value::U64(cur.u64("u64")?),
                2 => Value::F64(f64::from_le_bytes(cur.array("f64")?)),
                3 => {
                    let n = cur.u32("string")? as usize;
                    let s = std::str::from_utf8(cur.bytes(n, "string")?).map_err(|_| WireError::Utf8("string"))?;
                    Value::Str(s.to_string())
                }
                4 => Value::Tensor(cur.tensor()?),
                5 => {
                    let n = cur.u32("list")?;
                    Value::U64List((0..n).map(|_| cur.u64("list")).collect::<Result<_>>()?)
                }
                6 => {
                    let n = cur.u32("tensor list")?;
                    Value::TensorList((0..n).map(|_| cur.tensor()).collect::<Result<_>>()?)
                }
                other => return Err(WireError::UnknownTag(other)),
            };
            fields.push((name, value));
        }
        if cur.pos != body.len() {
            return Err(WireError::Trailing(body.len() - cur.pos));
        }
        Ok(Frame { kind, fields })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.encode())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Frame> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        let (kind, len) = Self::decode_header(&header)?;
        let mut body = vec![0u8; len as usize];
        r.read_exact(&mut body)?;
        Self::decode_body(kind, &body)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn bytes(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(WireError::Truncated(what))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N]> {
        Ok(self.bytes(N, what)?.try_into().unwrap())
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.array::<1>(what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let len = self.u64("tensor length")?;
        let len = usize::try_from(len).map_err(|_| WireError::Truncated("tensor"))?;
        Ok(Tensor::from_bytes(self.bytes(len, "tensor")?)?)
    }
}

/// Network role of a party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartyRole {
    P0,
    P1,
    P3,
    Dealer,
    Tail,
    Coordinator,
}

impl PartyRole {
    pub const SERVING: [PartyRole; 5] = [PartyRole::P0, PartyRole::P1, PartyRole::P3, PartyRole::Dealer, PartyRole::Tail];

    pub fn code(self) -> u64 {
        match self {
            PartyRole::P0 => 0,
            PartyRole::P1 => 1,
            PartyRole::P3 => 2,
            PartyRole::Dealer => 3,
            PartyRole::Tail => 4,
            PartyRole::Coordinator => 5,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        Some(match code {
            0 => PartyRole::P0,
            1 => PartyRole::P1,
            2 => PartyRole::P3,
            3 => PartyRole::Dealer,
            4 => PartyRole::Tail,
            5 => PartyRole::Coordinator,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            PartyRole::P0 => "p0",
            PartyRole::P1 => "p1",
            PartyRole::P3 => "p3",
            PartyRole::Dealer => "dealer",
            PartyRole::Tail => "tail",
            PartyRole::Coordinator => "coordinator",
        }
    }

    /// The sharing role for the two computing parties.
    pub fn share_role(self) -> Option<Role> {
        match self {
            PartyRole::P0 => Some(Role::P0),
            PartyRole::P1 => Some(Role::P1),
            _ => None,
        }
    }
}

impl From<Role> for PartyRole {
    fn from(r: Role) -> Self {
        match r {
            Role::P0 => PartyRole::P0,
            Role::P1 => PartyRole::P1,
        }
    }
}

impl std::str::FromStr for PartyRole {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "p0" => PartyRole::P0,
            "p1" => PartyRole::P1,
            "p3" => PartyRole::P3,
            "dealer" => PartyRole::Dealer,
            "tail" => PartyRole::Tail,
            "coordinator" => PartyRole::Coordinator,
            other => return Err(format!("unknown role {other:?}")),
        })
    }
}

/// One half of a Beaver triple as carried by STORE.
#[derive(Debug, Clone, PartialEq)]
pub struct TriplePayload {
    pub id: ValueId,
    pub kind: MulKind,
    pub u: Tensor,
    pub v: Tensor,
    pub w: Tensor,
}

impl TriplePayload {
    pub fn from_share(t: &TripleShare) -> Self {
        TriplePayload {
            id: t.id,
            kind: t.kind,
            u: t.u.clone(),
            v: t.v.clone(),
            w: t.w.clone(),
        }
    }
}

/// Typed messages.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Store(Tensor),
    StoreTriple(TriplePayload),
    Fetch { key: u64 },
    Free { keys: Vec<u64> },
    Exec { round: u64, expr: String },
    EvalFn { round: u64, slot: u64, role: Role, fns: Vec<NonlinearFn>, share: Tensor },
    ShareBack { round: u64, shares: Vec<Tensor> },
    TripleReq { round: u64, kind: MulKind, shape_x: Vec<u64>, shape_y: Vec<u64> },
    HiddenFwd { round: u64, role: Role, z: Tensor },
    GradBack { round: u64, dz: Tensor },
    Ack { keys: Vec<u64>, tensors: Vec<Tensor> },
    Nack { reason: String, retryable: bool },
    Open { round: u64, value_id: u64, tensors: Vec<Tensor> },
}

fn role_from_code(code: u64) -> Result<Role> {
    match code {
        0 => Ok(Role::P0),
        1 => Ok(Role::P1),
        other => Err(WireError::Invalid("role", format!("{other} is not a computing party"))),
    }
}

fn kind_from_code(code: u64) -> Result<MulKind> {
    MulKind::from_code(code).ok_or_else(|| WireError::Invalid("kind", format!("unknown product kind {code}")))
}

impl Message {
    pub fn ack_keys(keys: Vec<u64>) -> Self {
        Message::Ack { keys, tensors: Vec::new() }
    }

    pub fn nack(reason: impl Into<String>, retryable: bool) -> Self {
        Message::Nack {
            reason: reason.into(),
            retryable,
        }
    }

    pub fn kind(&self) -> MsgType {
        match self {
            Message::Store(_) | Message::StoreTriple(_) => MsgType::Store,
            Message::Fetch { .. } => MsgType::Fetch,
            Message::Free { .. } => MsgType::Free,
            Message::Exec { .. } => MsgType::Exec,
            Message::EvalFn { .. } => MsgType::EvalFn,
            Message::ShareBack { .. } => MsgType::ShareBack,
            Message::TripleReq { .. } => MsgType::TripleReq,
            Message::HiddenFwd { .. } => MsgType::HiddenFwd,
            Message::GradBack { .. } => MsgType::GradBack,
            Message::Ack { .. } => MsgType::Ack,
            Message::Nack { .. } => MsgType::Nack,
            Message::Open { .. } => MsgType::Open,
        }
    }

    pub fn to_frame(&self) -> Frame {
        let f = Frame::new(self.kind());
        match self.clone() {
            Message::Store(t) => f.with("tensor", Value::Tensor(t)),
            Message::StoreTriple(t) => f
                .with("triple", Value::TensorList(vec![t.u, t.v, t.w]))
                .with("kind", Value::U64(t.kind.code()))
                .with("value_id", Value::U64(t.id.0)),
            Message::Fetch { key } => f.with("key", Value::U64(key)),
            Message::Free { keys } => f.with("keys", Value::U64List(keys)),
            Message::Exec { round, expr } => f.with("round", Value::U64(round)).with("expr", Value::Str(expr)),
            Message::EvalFn {
                round,
                slot,
                role,
                fns,
                share,
            } => f
                .with("round", Value::U64(round))
                .with("slot", Value::U64(slot))
                .with("role", Value::U64(role.index() as u64))
                .with("fns", Value::Str(NonlinearFn::join(&fns)))
                .with("share", Value::Tensor(share)),
            Message::ShareBack { round, shares } => {
                f.with("round", Value::U64(round)).with("shares", Value::TensorList(shares))
            }
            Message::TripleReq {
                round,
                kind,
                shape_x,
                shape_y,
            } => f
                .with("round", Value::U64(round))
                .with("kind", Value::U64(kind.code()))
                .with("shape_x", Value::U64List(shape_x))
                .with("shape_y", Value::U64List(shape_y)),
            Message::HiddenFwd { round, role, z } => f
                .with("round", Value::U64(round))
                .with("role", Value::U64(role.index() as u64))
                .with("z", Value::Tensor(z)),
            Message::GradBack { round, dz } => f.with("round", Value::U64(round)).with("dz", Value::Tensor(dz)),
            Message::Ack { keys, tensors } => {
                f.with("keys", Value::U64List(keys)).with("tensors", Value::TensorList(tensors))
            }
            Message::Nack { reason, retryable } => f
                .with("reason", Value::Str(reason))
                .with("retryable", Value::U64(retryable as u64)),
            Message::Open {
                round,
                value_id,
                tensors,
            } => f
                .with("round", Value::U64(round))
                .with("value_id", Value::U64(value_id))
                .with("tensors", Value::TensorList(tensors)),
        }
    }

    pub fn from_frame(mut f: Frame) -> Result<Self> {
        let msg = match f.kind {
            MsgType::Store if f.has("triple") => {
                let [u, v, w]: [Tensor; 3] = f
                    .tensors("triple")?
                    .try_into()
                    .map_err(|_| WireError::Invalid("triple", "expected u, v, w".into()))?;
                Message::StoreTriple(TriplePayload {
                    kind: kind_from_code(f.u64("kind")?)?,
                    id: ValueId(f.u64("value_id")?),
                    u,
                    v,
                    w,
                })
            }
            MsgType::Store => Message::Store(f.tensor("tensor")?),
            MsgType::Fetch => Message::Fetch { key: f.u64("key")? },
            MsgType::Free => Message::Free {
                keys: f.u64_list("keys")?,
            },
            MsgType::Exec => Message::Exec {
                round: f.u64("round")?,
                expr: f.str("expr")?,
            },
            MsgType::EvalFn => Message::EvalFn {
                round: f.u64("round")?,
                slot: f.u64("slot")?,
                role: role_from_code(f.u64("role")?)?,
                fns: NonlinearFn::parse_list(&f.str("fns")?).map_err(|e| WireError::Invalid("fns", e.to_string()))?,
                share: f.tensor("share")?,
            },
            MsgType::ShareBack => Message::ShareBack {
                round: f.u64("round")?,
                shares: f.tensors("shares")?,
            },
            MsgType::TripleReq => Message::TripleReq {
                round: f.u64("round")?,
                kind: kind_from_code(f.u64("kind")?)?,
                shape_x: f.u64_list("shape_x")?,
                shape_y: f.u64_list("shape_y")?,
            },
            MsgType::HiddenFwd => Message::HiddenFwd {
                round: f.u64("round")?,
                role: role_from_code(f.u64("role")?)?,
                z: f.tensor("z")?,
            },
            MsgType::GradBack => Message::GradBack {
                round: f.u64("round")?,
                dz: f.tensor("dz")?,
            },
            MsgType::Ack => Message::Ack {
                keys: f.u64_list("keys")?,
                tensors: f.tensors("tensors")?,
            },
            MsgType::Nack => Message::Nack {
                reason: f.str("reason")?,
                retryable: f.u64("retryable")? != 0,
            },
            MsgType::Open => Message::Open {
                round: f.u64("round")?,
                value_id: f.u64("value_id")?,
                tensors: f.tensors("tensors")?,
            },
        };
        Ok(msg)
    }

    pub fn encode(&self) -> Vec<u8> {
        self.to_frame().encode()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        Self::from_frame(Frame::decode(bytes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture(name: &str) -> Vec<u8> {
        std::fs::read(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
    }

    #[test]
    fn fetch_fixture_bytes() {
        let bytes = Message::Fetch { key: 42 }.encode();
        assert_eq!(&bytes[..5], b"PSH1\x02");
        assert_eq!(bytes, fixture("fetch.bin"));
    }

    #[test]
    fn truncated_and_garbage_frames() {
        let bytes = Message::Fetch { key: 1 }.encode();
        assert!(matches!(Frame::decode(&bytes[..bytes.len() - 1]), Err(WireError::Truncated(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Frame::decode(&bad), Err(WireError::BadMagic(_))));
        let mut unknown = bytes.clone();
        unknown[4] = 99;
        assert_eq!(Frame::decode(&unknown), Err(WireError::UnknownType(99)));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(Frame::decode(&long), Err(WireError::Trailing(1))));
    }

    #[test]
    fn missing_and_mistyped_fields() {
        let f = Frame::new(MsgType::Fetch);
        assert_eq!(Message::from_frame(f), Err(WireError::MissingField("key")));
        let f = Frame::new(MsgType::Fetch).with("key", Value::Str("x".into()));
        assert_eq!(Message::from_frame(f), Err(WireError::FieldType("key")));
    }

    #[test]
    fn every_message_round_trips() {
        let t = Tensor::from_rows(&[vec![1.0, -2.5]]).unwrap();
        let msgs = vec![
            Message::Store(t.clone()),
            Message::StoreTriple(TriplePayload {
                id: ValueId(9),
                kind: MulKind::Matmul,
                u: t.clone(),
                v: t.transpose().unwrap(),
                w: Tensor::scalar(3.0),
            }),
            Message::Free { keys: vec![1, 2] },
            Message::ShareBack {
                round: 4,
                shares: vec![t.clone(), t.clone()],
            },
            Message::TripleReq {
                round: 1,
                kind: MulKind::Elementwise,
                shape_x: vec![2, 3],
                shape_y: vec![2, 3],
            },
            Message::HiddenFwd {
                round: 2,
                role: Role::P1,
                z: t.clone(),
            },
            Message::GradBack { round: 2, dz: t.clone() },
            Message::Open {
                round: 5,
                value_id: u64::MAX,
                tensors: vec![t],
            },
        ];
        for m in msgs {
            assert_eq!(Message::decode(&m.encode()).unwrap(), m);
        }
    }

    proptest! {
        #[test]
        fn frame_round_trip(data in prop::collection::vec(-1e6f64..1e6, 1..50), key in any::<u64>(), f in any::<f64>()) {
            let t = Tensor::vector(data).unwrap();
            let frame = Frame::new(MsgType::Ack)
                .with("keys", Value::U64List(vec![key]))
                .with("x", Value::F64(f))
                .with("tensors", Value::TensorList(vec![t.clone(), t]));
            let decoded = Frame::decode(&frame.encode()).unwrap();
            prop_assert_eq!(decoded.encode(), frame.encode());
        }
    }
}
