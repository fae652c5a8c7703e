//! Split learning: the first dense layer runs under sharing at P0/P1, its
//! output `z = xW + b` is revealed only to a tail party that trains the
//! remaining layers, and the hidden gradient `dL/dz` comes back as shares.
//!
//! [`TailModel`] is the tail party's network: `a = sigmoid(z)`, a dense
//! layer to the outputs, sigmoid outputs and binary cross-entropy averaged
//! over the batch. [`SplitSession`] wires head, tail and dealer together in
//! one process; the networked deployment runs the same steps through
//! party messages.

use crate::nonlinear::sigmoid;
use crate::rng::Rng;
use crate::sharing::{ProtocolError, Result, Shared, TwoPartySim};
use crate::tensor::Tensor;

/// Default hidden width of the head layer.
pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_LR: f64 = 0.1;
pub const DEFAULT_BATCH: usize = 32;

/// Draws a `rows × cols` weight uniform in `[-1/√rows, 1/√rows)` and a zero
/// `1 × cols` bias.
pub fn init_dense(rows: usize, cols: usize, rng: &mut Rng) -> (Tensor, Tensor) {
    let r = 1.0 / (rows as f64).sqrt();
    (rng.uniform(&[rows, cols], -r, r), Tensor::zeros(&[1, cols]))
}

/// A plaintext first layer, held by one data holder (vertical partitioning)
/// or used as the single-process reference.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainHead {
    pub w: Tensor,
    pub b: Tensor,
}

impl PlainHead {
    pub fn new(w: Tensor, b: Tensor) -> Result<Self> {
        if b.shape() != [1, w.cols()] {
            return Err(crate::tensor::TensorError::ShapeMismatch {
                op: "head",
                left: w.shape().to_vec(),
                right: b.shape().to_vec(),
            }
            .into());
        }
        Ok(PlainHead { w, b })
    }

    pub fn init(d: usize, h: usize, rng: &mut Rng) -> Self {
        let (w, b) = init_dense(d, h, rng);
        PlainHead { w, b }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.w)?.add_row(&self.b)?)
    }

    /// `(dW, db)` for input `x` and hidden gradient `dz`.
    pub fn gradients(x: &Tensor, dz: &Tensor) -> Result<(Tensor, Tensor)> {
        Ok((x.transpose()?.matmul(dz)?, dz.sum_rows()?))
    }

    pub fn backward(&mut self, x: &Tensor, dz: &Tensor, lr: f64) -> Result<()> {
        let (dw, db) = Self::gradients(x, dz)?;
        self.w = self.w.sub(&dw.scale(lr)?)?;
        self.b = self.b.sub(&db.scale(lr)?)?;
        Ok(())
    }
}

/// The first layer held as shares between P0 and P1.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalHead {
    pub w: Shared,
    pub b: Shared,
}

impl LocalHead {
    pub fn share(head: &PlainHead, sim: &mut TwoPartySim) -> Result<Self> {
        Ok(LocalHead {
            w: sim.share(&head.w)?,
            b: sim.share(&head.b)?,
        })
    }

    pub fn reconstruct(&self) -> Result<PlainHead> {
        PlainHead::new(self.w.reconstruct()?, self.b.reconstruct()?)
    }
}

/// Everything the tail computes for one batch, before any update.
#[derive(Debug, Clone, PartialEq)]
pub struct TailGradients {
    pub loss: f64,
    pub dz: Tensor,
    pub dw2: Tensor,
    pub db2: Tensor,
}

/// Binary cross-entropy of sigmoid outputs on logits, summed over outputs and
/// averaged over rows. Uses `log(1 + e^t) - y t` to stay finite.
pub fn bce_with_logits(logits: &Tensor, labels: &Tensor) -> Result<f64> {
    if logits.shape() != labels.shape() {
        return Err(crate::tensor::TensorError::ShapeMismatch {
            op: "loss",
            left: logits.shape().to_vec(),
            right: labels.shape().to_vec(),
        }
        .into());
    }
    let total: f64 = logits
        .data()
        .iter()
        .zip(labels.data())
        .map(|(&t, &y)| softplus(t) - y * t)
        .sum();
    Ok(total / logits.rows() as f64)
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// The tail party's layers and SGD state.
#[derive(Debug, Clone, PartialEq)]
pub struct TailModel {
    pub w2: Tensor,
    pub b2: Tensor,
    pub lr: f64,
}

impl TailModel {
    pub fn init(h: usize, outputs: usize, lr: f64, rng: &mut Rng) -> Self {
        let (w2, b2) = init_dense(h, outputs, rng);
        TailModel { w2, b2, lr }
    }

    fn check(&self, z: &Tensor) -> Result<()> {
        if z.rank() != 2 || z.cols() != self.w2.rows() {
            return Err(crate::tensor::TensorError::ShapeMismatch {
                op: "tail",
                left: z.shape().to_vec(),
                right: self.w2.shape().to_vec(),
            }
            .into());
        }
        Ok(())
    }

    pub fn logits(&self, z: &Tensor) -> Result<Tensor> {
        self.check(z)?;
        let a = z.map(sigmoid);
        Ok(a.matmul(&self.w2)?.add_row(&self.b2)?)
    }

    pub fn predict(&self, z: &Tensor) -> Result<Tensor> {
        Ok(self.logits(z)?.map(sigmoid))
    }

    pub fn loss(&self, z: &Tensor, labels: &Tensor) -> Result<f64> {
        bce_with_logits(&self.logits(z)?, labels)
    }

    pub fn gradients(&self, z: &Tensor, labels: &Tensor) -> Result<TailGradients> {
        self.check(z)?;
        let a = z.map(sigmoid);
        let logits = a.matmul(&self.w2)?.add_row(&self.b2)?;
        let loss = bce_with_logits(&logits, labels)?;
        let y_hat = logits.map(sigmoid);
        let dlogits = y_hat.sub(labels)?.scale(1.0 / z.rows() as f64)?;
        let dw2 = a.transpose()?.matmul(&dlogits)?;
        let db2 = dlogits.sum_rows()?;
        let da = dlogits.matmul(&self.w2.transpose()?)?;
        let dz = da.mul(&a.map(|s| s * (1.0 - s)))?;
        Ok(TailGradients { loss, dz, dw2, db2 })
    }

    /// Runs forward and backward, applies SGD to the tail's own parameters
    /// and returns `(loss, dL/dz)`.
    pub fn tail_forward_backward(&mut self, z: &Tensor, labels: &Tensor) -> Result<(f64, Tensor)> {
        let g = self.gradients(z, labels)?;
        self.w2 = self.w2.sub(&g.dw2.scale(self.lr)?)?;
        self.b2 = self.b2.sub(&g.db2.scale(self.lr)?)?;
        Ok((g.loss, g.dz))
    }
}

/// Plaintext reference of the whole split network in one process.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainSplitModel {
    pub head: PlainHead,
    pub tail: TailModel,
}

impl PlainSplitModel {
    /// Head first, then tail, both from `rng`. [`SplitSession::new`] uses the
    /// same order, so equal seeds give equal initial models.
    pub fn init(d: usize, h: usize, outputs: usize, lr: f64, rng: &mut Rng) -> Self {
        let head = PlainHead::init(d, h, rng);
        let tail = TailModel::init(h, outputs, lr, rng);
        PlainSplitModel { head, tail }
    }

    pub fn loss(&self, x: &Tensor, labels: &Tensor) -> Result<f64> {
        self.tail.loss(&self.head.forward(x)?, labels)
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.tail.predict(&self.head.forward(x)?)
    }

    pub fn step(&mut self, x: &Tensor, labels: &Tensor) -> Result<f64> {
        let z = self.head.forward(x)?;
        let (loss, dz) = self.tail.tail_forward_backward(&z, labels)?;
        let lr = self.tail.lr;
        self.head.backward(x, &dz, lr)?;
        Ok(loss)
    }
}

/// Head gradients of one split step, still shared.
#[derive(Debug, Clone)]
pub struct SharedHeadGradients {
    pub dw: Shared,
    pub db: Shared,
}

/// What each party received during the session, for checking that P0/P1
/// never see `z` and the tail never sees `x` or `W`.
#[derive(Debug, Clone, Default)]
pub struct SplitTranscript {
    pub tail: Vec<Tensor>,
    pub p0: Vec<Tensor>,
    pub p1: Vec<Tensor>,
}

/// Head at P0/P1, tail at a third party, dealer-supplied triples.
#[derive(Debug)]
pub struct SplitSession {
    sim: TwoPartySim,
    pub head: LocalHead,
    pub tail: TailModel,
    tail_rng: Rng,
    lr: f64,
    pending: Option<(u64, Tensor)>,
    transcript: SplitTranscript,
}

impl SplitSession {
    pub fn new(seed: u64, d: usize, h: usize, outputs: usize, lr: f64) -> Result<Self> {
        let mut init = Rng::new(seed);
        let plain = PlainSplitModel::init(d, h, outputs, lr, &mut init);
        Self::from_model(seed, &plain)
    }

    pub fn from_model(seed: u64, model: &PlainSplitModel) -> Result<Self> {
        let mut sim = TwoPartySim::new(seed);
        let head = LocalHead::share(&model.head, &mut sim)?;
        Ok(SplitSession {
            sim,
            head,
            tail: model.tail.clone(),
            tail_rng: Rng::substream(seed, 0x7A11),
            lr: model.tail.lr,
            pending: None,
            transcript: SplitTranscript::default(),
        })
    }

    pub fn sim(&mut self) -> &mut TwoPartySim {
        &mut self.sim
    }

    pub fn share_input(&mut self, x: &Tensor) -> Result<Shared> {
        self.sim.share(x)
    }

    pub fn transcript(&self) -> &SplitTranscript {
        &self.transcript
    }

    /// Computes `xW + b` under sharing and opens it at the tail only.
    /// Returns the round tag the backward pass must present.
    pub fn head_forward(&mut self, x: &Shared) -> Result<(u64, Tensor)> {
        let z = self.sim.matmul(x, &self.head.w)?.add_row(&self.head.b)?;
        let revealed = z.reconstruct()?;
        let round = self.sim.next_round();
        self.transcript.tail.push(revealed.clone());
        self.pending = Some((round, revealed.clone()));
        Ok((round, revealed))
    }

    /// Tail side: forward, loss, own update, then `dL/dz` split into shares
    /// for P0 and P1.
    pub fn tail_step(&mut self, round: u64, labels: &Tensor) -> Result<(f64, Shared)> {
        let z = match &self.pending {
            Some((r, z)) if *r == round => z.clone(),
            _ => return Err(ProtocolError::StaleRound(round)),
        };
        let (loss, dz) = self.tail.tail_forward_backward(&z, labels)?;
        let (p0, p1) = crate::sharing::share(&dz, &mut self.tail_rng, self.sim.mask_bound())?;
        self.transcript.p0.push(p0.share().clone());
        self.transcript.p1.push(p1.share().clone());
        Ok((loss, Shared::new(p0, p1)?))
    }

    /// `dW = xᵀ dz` and `db = colsum(dz)` under sharing.
    pub fn head_gradients(&mut self, x: &Shared, dz: &Shared) -> Result<SharedHeadGradients> {
        let xt = x.linear(0x5452, |t| t.transpose())?;
        let dw = self.sim.matmul(&xt, dz)?;
        let db = dz.linear(0x5352, |t| t.sum_rows())?;
        Ok(SharedHeadGradients { dw, db })
    }

    pub fn head_backward(&mut self, round: u64, x: &Shared, dz: &Shared) -> Result<SharedHeadGradients> {
        match &self.pending {
            Some((r, _)) if *r == round => {}
            _ => return Err(ProtocolError::StaleRound(round)),
        }
        self.pending = None;
        let g = self.head_gradients(x, dz)?;
        let lr = Tensor::scalar(self.lr);
        self.head.w = self.head.w.sub(&g.dw.mul_public(&lr)?)?;
        self.head.b = self.head.b.sub(&g.db.mul_public(&lr)?)?;
        Ok(g)
    }

    /// One full training step; returns the tail's loss.
    pub fn step(&mut self, x: &Shared, labels: &Tensor) -> Result<f64> {
        let (round, _) = self.head_forward(x)?;
        let (loss, dz) = self.tail_step(round, labels)?;
        self.head_backward(round, x, &dz)?;
        Ok(loss)
    }

    pub fn reconstruct(&self) -> Result<PlainSplitModel> {
        Ok(PlainSplitModel {
            head: self.head.reconstruct()?,
            tail: self.tail.clone(),
        })
    }
}

/// Each holder computes its hidden output on its own feature columns; the
/// tail receives the sum.
pub fn vertical_head_forward(heads: &[PlainHead], x_parts: &[Tensor]) -> Result<Tensor> {
    if heads.is_empty() || heads.len() != x_parts.len() {
        return Err(ProtocolError::Unsupported(format!(
            "{} heads for {} feature blocks",
            heads.len(),
            x_parts.len()
        )));
    }
    let mut sum = heads[0].forward(&x_parts[0])?;
    for (head, x) in heads.iter().zip(x_parts).skip(1) {
        sum = sum.add(&head.forward(x)?)?;
    }
    Ok(sum)
}

/// Fans `dL/dz` out to every holder, each updating its own head.
pub fn vertical_head_backward(heads: &mut [PlainHead], x_parts: &[Tensor], dz: &Tensor, lr: f64) -> Result<()> {
    for (head, x) in heads.iter_mut().zip(x_parts) {
        head.backward(x, dz, lr)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(labels: &[usize], k: usize) -> Tensor {
        let mut data = vec![0.0; labels.len() * k];
        for (i, &l) in labels.iter().enumerate() {
            data[i * k + l] = 1.0;
        }
        Tensor::new(vec![labels.len(), k], data).unwrap()
    }

    #[test]
    fn identity_head_reveals_input() {
        let mut sim = TwoPartySim::new(1);
        let x = Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let head = PlainHead::new(Tensor::identity(2), Tensor::zeros(&[1, 2])).unwrap();
        let model = PlainSplitModel {
            head,
            tail: TailModel::init(2, 3, 0.1, sim.rng()),
        };
        let mut session = SplitSession::from_model(2, &model).unwrap();
        let xs = session.share_input(&x).unwrap();
        let (_, z) = session.head_forward(&xs).unwrap();
        assert!(z.max_abs_diff(&x).unwrap() < 1e-10);
    }

    #[test]
    fn head_forward_matches_plaintext_and_zero_batch_gives_bias() {
        let mut rng = Rng::new(3);
        let mut model = PlainSplitModel::init(20, 8, 4, 0.1, &mut rng);
        model.head.b = rng.normal(&[1, 8]);
        let mut session = SplitSession::from_model(4, &model).unwrap();
        let x = rng.normal(&[5, 20]);
        let xs = session.share_input(&x).unwrap();
        let (_, z) = session.head_forward(&xs).unwrap();
        assert!(z.max_abs_diff(&model.head.forward(&x).unwrap()).unwrap() < 1e-8);

        let zeros = session.share_input(&Tensor::zeros(&[3, 20])).unwrap();
        let (_, z) = session.head_forward(&zeros).unwrap();
        for r in 0..3 {
            for c in 0..8 {
                assert!((z.get(r, c) - model.head.b.get(0, c)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_weight_tail_returns_zero_gradient() {
        let tail = TailModel {
            w2: Tensor::zeros(&[4, 2]),
            b2: Tensor::zeros(&[1, 2]),
            lr: 0.1,
        };
        let z = Rng::new(1).normal(&[3, 4]);
        let g = tail.gradients(&z, &Tensor::filled(&[3, 2], 0.5)).unwrap();
        assert!(g.dz.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_is_stable_for_large_logits() {
        let logits = Tensor::from_rows(&[vec![800.0, -800.0]]).unwrap();
        let labels = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(bce_with_logits(&logits, &labels).unwrap(), 0.0);
        let wrong = Tensor::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!((bce_with_logits(&logits, &wrong).unwrap() - 1600.0).abs() < 1e-9);
    }

    #[test]
    fn tail_gradient_matches_finite_differences() {
        let mut rng = Rng::new(11);
        let tail = TailModel::init(6, 3, 0.1, &mut rng);
        let z = rng.normal(&[4, 6]);
        let y = one_hot(&[0, 2, 1, 2], 3);
        let g = tail.gradients(&z, &y).unwrap();
        let eps = 1e-5;
        for i in 0..z.len() {
            let mut plus = z.data().to_vec();
            let mut minus = z.data().to_vec();
            plus[i] += eps;
            minus[i] -= eps;
            let lp = tail.loss(&Tensor::new(z.shape().to_vec(), plus).unwrap(), &y).unwrap();
            let lm = tail.loss(&Tensor::new(z.shape().to_vec(), minus).unwrap(), &y).unwrap();
            let fd = (lp - lm) / (2.0 * eps);
            let an = g.dz.data()[i];
            assert!((fd - an).abs() / fd.abs().max(an.abs()).max(1e-7) < 1e-4, "{i}: {fd} vs {an}");
        }
    }

    #[test]
    fn zero_hidden_gradient_leaves_head_unchanged() {
        let mut session = SplitSession::new(5, 6, 4, 2, 0.1).unwrap();
        let before = session.head.reconstruct().unwrap();
        let x = Rng::new(2).normal(&[3, 6]);
        let xs = session.share_input(&x).unwrap();
        let (round, _) = session.head_forward(&xs).unwrap();
        let dz = session.share_input(&Tensor::zeros(&[3, 4])).unwrap();
        session.head_backward(round, &xs, &dz).unwrap();
        let after = session.head.reconstruct().unwrap();
        assert!(after.w.max_abs_diff(&before.w).unwrap() < 1e-10);
        assert!(after.b.max_abs_diff(&before.b).unwrap() < 1e-10);
    }

    #[test]
    fn stale_round_is_rejected() {
        let mut session = SplitSession::new(5, 6, 4, 2, 0.1).unwrap();
        let x = session.share_input(&Tensor::zeros(&[2, 6])).unwrap();
        let (round, _) = session.head_forward(&x).unwrap();
        let y = Tensor::zeros(&[2, 2]);
        assert!(matches!(session.tail_step(round + 1, &y), Err(ProtocolError::StaleRound(_))));
        let (_, dz) = session.tail_step(round, &y).unwrap();
        session.head_backward(round, &x, &dz).unwrap();
        assert!(matches!(
            session.head_backward(round, &x, &dz),
            Err(ProtocolError::StaleRound(_))
        ));
    }

    #[test]
    fn shared_training_tracks_plaintext() {
        let mut rng = Rng::new(8);
        let reference = PlainSplitModel::init(12, 6, 3, 0.1, &mut rng);
        let mut plain = reference.clone();
        let mut session = SplitSession::from_model(9, &reference).unwrap();
        let x = rng.normal(&[8, 12]);
        let y = one_hot(&[0, 1, 2, 0, 1, 2, 0, 1], 3);
        let xs = session.share_input(&x).unwrap();
        let l_plain = plain.step(&x, &y).unwrap();
        let l_split = session.step(&xs, &y).unwrap();
        assert!((l_plain - l_split).abs() < 1e-8);
        let got = session.reconstruct().unwrap();
        assert!(got.head.w.max_abs_diff(&plain.head.w).unwrap() < 1e-7);
        assert!(got.head.b.max_abs_diff(&plain.head.b).unwrap() < 1e-7);
        assert!(got.tail.w2.max_abs_diff(&plain.tail.w2).unwrap() < 1e-7);
    }

    #[test]
    fn vertical_split_equals_concatenated_model() {
        let mut rng = Rng::new(21);
        let x = rng.normal(&[5, 7]);
        let full = PlainHead::new(rng.normal(&[7, 4]), rng.normal(&[1, 4])).unwrap();
        let left_cols: Vec<usize> = (0..3).collect();
        let cols = |t: &Tensor, idx: &[usize]| {
            let rows: Vec<Vec<f64>> = (0..t.rows()).map(|r| idx.iter().map(|&c| t.get(r, c)).collect()).collect();
            Tensor::from_rows(&rows).unwrap()
        };
        let right_cols: Vec<usize> = (3..7).collect();
        let wt = full.w.transpose().unwrap();
        let w_left = cols(&wt, &left_cols).transpose().unwrap();
        let w_right = cols(&wt, &right_cols).transpose().unwrap();
        let heads = [
            PlainHead::new(w_left, full.b.clone()).unwrap(),
            PlainHead::new(w_right, Tensor::zeros(&[1, 4])).unwrap(),
        ];
        let parts = [cols(&x, &left_cols), cols(&x, &right_cols)];
        let z = vertical_head_forward(&heads, &parts).unwrap();
        assert!(z.max_abs_diff(&full.forward(&x).unwrap()).unwrap() < 1e-10);

        let single = vertical_head_forward(&heads[..1], &parts[..1]).unwrap();
        assert_eq!(single, heads[0].forward(&parts[0]).unwrap());

        let zero_second = [heads[0].clone(), PlainHead::new(Tensor::zeros(&[4, 4]), Tensor::zeros(&[1, 4])).unwrap()];
        assert_eq!(
            vertical_head_forward(&zero_second, &parts).unwrap(),
            heads[0].forward(&parts[0]).unwrap()
        );
    }
}
