//! Logistic regression and the split DNN, trained either in plaintext or
//! through a coordinator and running parties.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::net::{Call, Coordinator, PartyRole, RemoteKey, SharedKeys};
use crate::nonlinear::sigmoid;
use crate::rng::Rng;
use crate::sharing::{MulKind, DEFAULT_MASK_BOUND};
use crate::split::{init_dense, PlainHead, PlainSplitModel, TailModel, DEFAULT_BATCH, DEFAULT_HIDDEN, DEFAULT_LR};
use crate::tensor::Tensor;

use super::data::{Dataset, CLASSES};
use super::ExperimentError;

type Result<T> = std::result::Result<T, ExperimentError>;

// Substreams of the run seed.
const STREAM_ORDER: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_MASKS: u64 = 3;
const STREAM_PERMUTATIONS: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Framework,
    Local,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Framework => "framework",
            Mode::Local => "local",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "framework" => Ok(Mode::Framework),
            "local" => Ok(Mode::Local),
            _ => Err(format!("unknown mode {s:?} (framework or local)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Logistic,
    Dnn,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Logistic => "logistic",
            Model::Dnn => "dnn",
        })
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "logistic" => Ok(Model::Logistic),
            "dnn" => Ok(Model::Dnn),
            _ => Err(format!("unknown model {s:?} (logistic or dnn)")),
        }
    }
}

/// One validation checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub batch: usize,
    pub elapsed_s: f64,
    pub val_accuracy: f64,
    pub loss: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    pub seed: u64,
    pub batch: usize,
    pub lr: f64,
    pub hidden: usize,
    /// Validate (and checkpoint parameters) every this many batches, and
    /// after the last one.
    pub validate_every: usize,
    pub mask_bound: f64,
}

impl TrainConfig {
    pub fn new(steps: usize, seed: u64) -> Self {
        TrainConfig {
            steps,
            seed,
            batch: DEFAULT_BATCH,
            lr: DEFAULT_LR,
            hidden: DEFAULT_HIDDEN,
            validate_every: 100,
            mask_bound: DEFAULT_MASK_BOUND,
        }
    }

    fn checkpoint_after(&self, step: usize) -> bool {
        let done = step + 1;
        done % self.validate_every.max(1) == 0 || done == self.steps
    }
}

/// Where the arithmetic happens.
#[derive(Clone, Copy)]
pub enum Runner<'a> {
    Local,
    Framework(&'a Coordinator),
}

impl Runner<'_> {
    pub fn mode(&self) -> Mode {
        match self {
            Runner::Local => Mode::Local,
            Runner::Framework(_) => Mode::Framework,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainRun {
    pub records: Vec<RunRecord>,
    /// Model parameters at each checkpoint, in the order `W, b` (logistic)
    /// or `W1, b1, W2, b2` (DNN).
    pub checkpoints: Vec<Vec<Tensor>>,
}

impl TrainRun {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.records.last().map(|r| r.val_accuracy)
    }
}

/// Fraction of rows whose largest output is at the label's position.
pub fn accuracy(outputs: &Tensor, labels: &Tensor) -> Result<f64> {
    let p = outputs.argmax_rows()?;
    let y = labels.argmax_rows()?;
    if p.is_empty() {
        return Ok(0.0);
    }
    Ok(p.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / p.len() as f64)
}

/// `Σ (s − y)² / (2·rows)`, whose gradient in `s` is `(s − y)/rows`.
pub fn mse_loss(outputs: &Tensor, labels: &Tensor) -> Result<f64> {
    let d = outputs.sub(labels)?;
    Ok(d.data().iter().map(|v| v * v).sum::<f64>() / (2.0 * outputs.rows() as f64))
}

/// Training samples in a seeded order; batches are consecutive wrapping
/// windows over it.
fn training_order(ds: &Dataset, seed: u64) -> Result<(Tensor, Tensor)> {
    if ds.train.is_empty() || ds.validation.is_empty() {
        return Err(ExperimentError::Config("dataset needs training and validation samples".into()));
    }
    let mut order = ds.train.clone();
    Rng::substream(seed, STREAM_ORDER).shuffle(&mut order);
    Ok(ds.subset(&order))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub w: Tensor,
    pub b: Tensor,
}

impl LogisticModel {
    pub fn init(features: usize, outputs: usize, rng: &mut Rng) -> Self {
        let (w, b) = init_dense(features, outputs, rng);
        LogisticModel { w, b }
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.w)?.add_row(&self.b)?.map(sigmoid))
    }

    /// One SGD step on the squared loss; returns the batch loss.
    pub fn step(&mut self, x: &Tensor, y: &Tensor, lr: f64) -> Result<f64> {
        let s = self.predict(x)?;
        let ds = s.map(|v| v * (1.0 - v));
        let loss = mse_loss(&s, y)?;
        let g = s.sub(y)?.mul(&ds)?.scale(1.0 / x.rows() as f64)?;
        self.w = self.w.sub(&x.transpose()?.matmul(&g)?.scale(lr)?)?;
        self.b = self.b.sub(&g.sum_rows()?.scale(lr)?)?;
        Ok(loss)
    }

    fn params(&self) -> Vec<Tensor> {
        vec![self.w.clone(), self.b.clone()]
    }
}

struct Validator<'a> {
    x: Tensor,
    y: Tensor,
    mode: Mode,
    started: Instant,
    run: &'a mut TrainRun,
}

impl Validator<'_> {
    fn record(&mut self, batch: usize, outputs: &Tensor, loss: f64, params: Vec<Tensor>) -> Result<()> {
        let rec = RunRecord {
            batch,
            elapsed_s: self.started.elapsed().as_secs_f64(),
            val_accuracy: accuracy(outputs, &self.y)?,
            loss,
            mode: self.mode,
        };
        log::info!(
            "{} batch {}: accuracy {:.4}, loss {:.5}, {:.1}s",
            rec.mode,
            rec.batch,
            rec.val_accuracy,
            rec.loss,
            rec.elapsed_s
        );
        self.run.records.push(rec);
        self.run.checkpoints.push(params);
        Ok(())
    }
}

pub fn train_logistic(ds: &Dataset, runner: Runner<'_>, cfg: &TrainConfig) -> Result<TrainRun> {
    let mut run = TrainRun::default();
    if cfg.steps == 0 {
        return Ok(run);
    }
    let (xt, yt) = training_order(ds, cfg.seed)?;
    let (xv, yv) = ds.validation_set();
    let model = LogisticModel::init(ds.features(), CLASSES, &mut Rng::substream(cfg.seed, STREAM_INIT));
    let mut val = Validator {
        x: xv,
        y: yv,
        mode: runner.mode(),
        started: Instant::now(),
        run: &mut run,
    };
    match runner {
        Runner::Local => logistic_local(model, &xt, &yt, cfg, &mut val)?,
        Runner::Framework(c) => logistic_framework(c, model, &xt, &yt, cfg, &mut val)?,
    }
    Ok(run)
}

fn validate_logistic(val: &mut Validator<'_>, batch: usize, model: &LogisticModel) -> Result<()> {
    let s = model.predict(&val.x)?;
    let loss = mse_loss(&s, &val.y)?;
    val.record(batch, &s, loss, model.params())
}

fn logistic_local(mut model: LogisticModel, xt: &Tensor, yt: &Tensor, cfg: &TrainConfig, val: &mut Validator<'_>) -> Result<()> {
    let n = xt.rows();
    for step in 0..cfg.steps {
        let start = (step * cfg.batch) % n;
        let x = xt.rows_wrapping(start, cfg.batch)?;
        let y = yt.rows_wrapping(start, cfg.batch)?;
        model.step(&x, &y, cfg.lr)?;
        if cfg.checkpoint_after(step) {
            validate_logistic(val, step + 1, &model)?;
        }
    }
    Ok(())
}

fn pick(keys: SharedKeys, p: PartyRole) -> RemoteKey {
    if p == PartyRole::P0 {
        keys.p0
    } else {
        keys.p1
    }
}

fn pair(r: &[Vec<RemoteKey>; 2], i: usize) -> Result<SharedKeys> {
    match (r[0].get(i), r[1].get(i)) {
        (Some(&p0), Some(&p1)) => Ok(SharedKeys { p0, p1 }),
        _ => Err(ExperimentError::Config(format!("missing output {i} from a party"))),
    }
}

fn logistic_framework(
    c: &Coordinator,
    model: LogisticModel,
    xt: &Tensor,
    yt: &Tensor,
    cfg: &TrainConfig,
    val: &mut Validator<'_>,
) -> Result<()> {
    let n = xt.rows();
    let (d, k, bsz) = (xt.cols(), CLASSES, cfg.batch);
    let mut masks = Rng::substream(cfg.seed, STREAM_MASKS);
    let mut perms = Rng::substream(cfg.seed, STREAM_PERMUTATIONS);
    let x = c.share(xt, &mut masks, cfg.mask_bound)?;
    let y = c.share(yt, &mut masks, cfg.mask_bound)?;
    let mut w = c.share(&model.w, &mut masks, cfg.mask_bound)?;
    let mut b = c.share(&model.b, &mut masks, cfg.mask_bound)?;
    let inv_b = 1.0 / bsz as f64;
    let lr = cfg.lr;

    for step in 0..cfg.steps {
        let start = (step * bsz) % n;
        let t = c.triples(&[
            (MulKind::Matmul, vec![bsz, d], vec![d, k]),
            (MulKind::Elementwise, vec![bsz, k], vec![bsz, k]),
            (MulKind::Matmul, vec![d, bsz], vec![bsz, k]),
        ])?;
        let pseed = perms.next_u64();

        let r = c.next_round();
        let out = c.exec_pair(r, |p| {
            format!(
                "(eval_fn {pseed} sigmoid+sigmoid_prime (add_row (beaver (rows {} {start} {bsz}) {} {}) {}))",
                pick(x, p).expr(),
                pick(w, p).expr(),
                pick(t[0], p).expr(),
                pick(b, p).expr()
            )
        })?;
        let (s, ds) = (pair(&out, 0)?, pair(&out, 1)?);

        let r = c.next_round();
        let out = c.exec_pair(r, |p| {
            format!(
                "(scale {inv_b} (beaver (sub {} (rows {} {start} {bsz})) {} {}))",
                pick(s, p).expr(),
                pick(y, p).expr(),
                pick(ds, p).expr(),
                pick(t[1], p).expr()
            )
        })?;
        let g = pair(&out, 0)?;

        let r = c.next_round();
        let out = c.exec_pair(r, |p| {
            format!(
                "(list (sub {w} (scale {lr} (beaver (transpose (rows {x} {start} {bsz})) {g} {t}))) (sub {b} (scale {lr} (sum_rows {g}))))",
                w = pick(w, p).expr(),
                x = pick(x, p).expr(),
                g = pick(g, p).expr(),
                t = pick(t[2], p).expr(),
                b = pick(b, p).expr(),
            )
        })?;
        let stale = [w, b, s, ds, g].iter().chain(&t).flat_map(|k| k.keys()).collect::<Vec<_>>();
        w = pair(&out, 0)?;
        b = pair(&out, 1)?;
        c.free(&stale)?;

        if cfg.checkpoint_after(step) {
            let mut got = c.parallel_all(vec![Call::Fetch(w.p0), Call::Fetch(w.p1), Call::Fetch(b.p0), Call::Fetch(b.p1)])?;
            let mut next = || got.remove(0).tensor();
            let current = LogisticModel {
                w: next()?.add(&next()?)?,
                b: next()?.add(&next()?)?,
            };
            validate_logistic(val, step + 1, &current)?;
        }
    }
    c.free(&[x, y, w, b].iter().flat_map(|k| k.keys()).collect::<Vec<_>>())?;
    Ok(())
}

pub fn train_dnn(ds: &Dataset, runner: Runner<'_>, cfg: &TrainConfig) -> Result<TrainRun> {
    let mut run = TrainRun::default();
    if cfg.steps == 0 {
        return Ok(run);
    }
    let (xt, yt) = training_order(ds, cfg.seed)?;
    let (xv, yv) = ds.validation_set();
    let model = PlainSplitModel::init(
        ds.features(),
        cfg.hidden,
        CLASSES,
        cfg.lr,
        &mut Rng::substream(cfg.seed, STREAM_INIT),
    );
    let mut val = Validator {
        x: xv,
        y: yv,
        mode: runner.mode(),
        started: Instant::now(),
        run: &mut run,
    };
    match runner {
        Runner::Local => dnn_local(model, &xt, &yt, cfg, &mut val)?,
        Runner::Framework(c) => dnn_framework(c, model, &xt, &yt, cfg, &mut val)?,
    }
    Ok(run)
}

fn validate_dnn(val: &mut Validator<'_>, batch: usize, model: &PlainSplitModel) -> Result<()> {
    let z = model.head.forward(&val.x)?;
    let out = model.tail.predict(&z)?;
    let loss = model.tail.loss(&z, &val.y)?;
    let params = vec![
        model.head.w.clone(),
        model.head.b.clone(),
        model.tail.w2.clone(),
        model.tail.b2.clone(),
    ];
    val.record(batch, &out, loss, params)
}

fn dnn_local(mut model: PlainSplitModel, xt: &Tensor, yt: &Tensor, cfg: &TrainConfig, val: &mut Validator<'_>) -> Result<()> {
    let n = xt.rows();
    for step in 0..cfg.steps {
        let start = (step * cfg.batch) % n;
        model.step(&xt.rows_wrapping(start, cfg.batch)?, &yt.rows_wrapping(start, cfg.batch)?)?;
        if cfg.checkpoint_after(step) {
            validate_dnn(val, step + 1, &model)?;
        }
    }
    Ok(())
}

fn dnn_framework(
    c: &Coordinator,
    model: PlainSplitModel,
    xt: &Tensor,
    yt: &Tensor,
    cfg: &TrainConfig,
    val: &mut Validator<'_>,
) -> Result<()> {
    let n = xt.rows();
    let (d, h, bsz, lr) = (xt.cols(), cfg.hidden, cfg.batch, cfg.lr);
    let mut masks = Rng::substream(cfg.seed, STREAM_MASKS);
    let x = c.share(xt, &mut masks, cfg.mask_bound)?;
    let mut w1 = c.share(&model.head.w, &mut masks, cfg.mask_bound)?;
    let mut b1 = c.share(&model.head.b, &mut masks, cfg.mask_bound)?;
    let mut tail = c
        .parallel_all(vec![
            Call::Store(PartyRole::Tail, model.tail.w2.clone()),
            Call::Store(PartyRole::Tail, model.tail.b2.clone()),
            Call::Store(PartyRole::Tail, yt.clone()),
        ])?
        .into_iter()
        .map(|r| Ok(r.keys()?[0]))
        .collect::<Result<Vec<RemoteKey>>>()?;
    let labels = tail.pop().expect("three stores");

    for step in 0..cfg.steps {
        let start = (step * bsz) % n;
        let t = c.triples(&[
            (MulKind::Matmul, vec![bsz, d], vec![d, h]),
            (MulKind::Matmul, vec![d, bsz], vec![bsz, h]),
        ])?;

        let r = c.next_round();
        let forward = |p: PartyRole| Call::Exec {
            party: p,
            round: r,
            expr: format!(
                "(hidden_fwd {r} (add_row (beaver (rows {} {start} {bsz}) {} {}) {}))",
                pick(x, p).expr(),
                pick(w1, p).expr(),
                pick(t[0], p).expr(),
                pick(b1, p).expr()
            ),
        };
        let mut out = c.parallel_all(vec![
            forward(PartyRole::P0),
            forward(PartyRole::P1),
            Call::Exec {
                party: PartyRole::Tail,
                round: r,
                expr: format!(
                    "(tail_step {r} {} {} {} {start} {bsz} {lr})",
                    tail[0].expr(),
                    tail[1].expr(),
                    labels.expr()
                ),
            },
        ])?;
        let tail_out = out.pop().expect("three replies").keys()?;
        let z1 = out.pop().expect("three replies").keys()?;
        let z0 = out.pop().expect("three replies").keys()?;

        let r2 = c.next_round();
        let dz = pair(&c.exec_pair(r2, |_| format!("(grad_back {r})"))?, 0)?;
        let out = c.exec_pair(r2, |p| {
            format!(
                "(list (sub {w} (scale {lr} (beaver (transpose (rows {x} {start} {bsz})) {dz} {t}))) (sub {b} (scale {lr} (sum_rows {dz}))))",
                w = pick(w1, p).expr(),
                x = pick(x, p).expr(),
                dz = pick(dz, p).expr(),
                t = pick(t[1], p).expr(),
                b = pick(b1, p).expr(),
            )
        })?;
        let mut stale: Vec<RemoteKey> = [w1, b1, dz].iter().chain(&t).flat_map(|k| k.keys()).collect();
        stale.extend(z0.iter().chain(&z1));
        stale.extend(&tail);
        stale.push(tail_out[0]);
        w1 = pair(&out, 0)?;
        b1 = pair(&out, 1)?;
        tail = tail_out[1..].to_vec();
        c.free(&stale)?;

        if cfg.checkpoint_after(step) {
            let mut got = c.parallel_all(vec![
                Call::Fetch(w1.p0),
                Call::Fetch(w1.p1),
                Call::Fetch(b1.p0),
                Call::Fetch(b1.p1),
                Call::Fetch(tail[0]),
                Call::Fetch(tail[1]),
            ])?;
            let mut next = || got.remove(0).tensor();
            let head = PlainHead {
                w: next()?.add(&next()?)?,
                b: next()?.add(&next()?)?,
            };
            let current = PlainSplitModel {
                head,
                tail: TailModel {
                    w2: next()?,
                    b2: next()?,
                    lr,
                },
            };
            validate_dnn(val, step + 1, &current)?;
        }
    }
    let mut rest: Vec<RemoteKey> = [x, w1, b1].iter().flat_map(|k| k.keys()).collect();
    rest.extend(&tail);
    rest.push(labels);
    c.free(&rest)?;
    Ok(())
}
