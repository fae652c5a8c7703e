//! Monte-Carlo reconstruction attacks against each transform, for checking
//! the analytic bounds empirically.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::special::chi_squared_cdf;
use super::{linear_privacy_bound, permutation_privacy, PrivacyError, Result};
use crate::rng::Rng;

const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformKind {
    /// A secret uniform permutation of `n` distinct values; success means
    /// recovering the exact order.
    Permutation,
    /// A known random `m × n` Gaussian map of `x ~ N(0, I_n)`; success means
    /// an estimate within `delta` in Euclidean norm.
    Linear { m: usize, delta: f64 },
    /// `x ~ N(0, I_n)` observed with added `N(0, sigma² I_n)` noise; success
    /// means an estimate within `delta`.
    Noise { sigma: f64, delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackStrategy {
    /// Ignores the observation and guesses from the prior.
    RandomGuess,
    /// Identity guess for permutations, the observation itself for noise,
    /// and the least-norm preimage for linear maps.
    BestKnown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub trials: u64,
    pub successes: u64,
    pub rate: f64,
    /// Wilson 95% interval for the success probability.
    pub interval: (f64, f64),
    pub half_width: f64,
    /// The analytic success probability (or upper bound) for this setting.
    pub analytic: f64,
}

impl AttackOutcome {
    /// Empirical rate no larger than the analytic value plus three
    /// half-widths.
    pub fn within_bound(&self) -> bool {
        self.rate <= self.analytic + 3.0 * self.half_width
    }
}

/// Wilson score interval at 95% for `successes` out of `trials`; returns the
/// interval and its half-width.
pub fn wilson_interval(successes: u64, trials: u64) -> ((f64, f64), f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    ((lo, hi), half)
}

fn analytic(kind: TransformKind, n: usize, strategy: AttackStrategy) -> Result<f64> {
    let nf = n as f64;
    Ok(match (kind, strategy) {
        (TransformKind::Permutation, _) => permutation_privacy(n as u64)?.epsilon.value(),
        // Estimate and truth are independent N(0, I): the gap is N(0, 2I).
        (TransformKind::Linear { delta, .. }, AttackStrategy::RandomGuess)
        | (TransformKind::Noise { delta, .. }, AttackStrategy::RandomGuess) => chi_squared_cdf(nf, delta * delta / 2.0),
        (TransformKind::Noise { sigma, delta }, AttackStrategy::BestKnown) => chi_squared_cdf(nf, (delta / sigma).powi(2)),
        // m observed directions leave n - m unobserved ones.
        (TransformKind::Linear { m, delta }, AttackStrategy::BestKnown) => {
            linear_privacy_bound((n - m + 1) as u64, delta)?.epsilon.value()
        }
    })
}

fn validate(kind: TransformKind, n: usize, trials: u64) -> Result<()> {
    if trials < 100 {
        return Err(PrivacyError::TooFewTrials(trials as usize));
    }
    if n == 0 {
        return Err(PrivacyError::InvalidArgument("n must be positive".into()));
    }
    match kind {
        TransformKind::Linear { m, delta } => {
            if m == 0 || m >= n {
                return Err(PrivacyError::InvalidArgument(format!("need 0 < m < n, got m = {m}, n = {n}")));
            }
            if !(delta > 0.0) {
                return Err(PrivacyError::InvalidArgument("delta must be positive".into()));
            }
        }
        TransformKind::Noise { sigma, delta } => {
            if !(sigma > 0.0) || !(delta > 0.0) {
                return Err(PrivacyError::InvalidArgument("sigma and delta must be positive".into()));
            }
        }
        TransformKind::Permutation => {}
    }
    Ok(())
}

fn normal_vec(rng: &mut Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.next_normal())
}

fn trial(kind: TransformKind, n: usize, strategy: AttackStrategy, rng: &mut Rng) -> bool {
    match kind {
        TransformKind::Permutation => {
            let x: Vec<usize> = (0..n).collect();
            let mut observed = x.clone();
            rng.shuffle(&mut observed);
            let guess = match strategy {
                AttackStrategy::BestKnown => observed,
                AttackStrategy::RandomGuess => {
                    let mut g = observed;
                    rng.shuffle(&mut g);
                    g
                }
            };
            guess == x
        }
        TransformKind::Noise { sigma, delta } => {
            let x = normal_vec(rng, n);
            let guess = match strategy {
                AttackStrategy::BestKnown => &x + normal_vec(rng, n) * sigma,
                AttackStrategy::RandomGuess => normal_vec(rng, n),
            };
            (guess - x).norm() < delta
        }
        TransformKind::Linear { m, delta } => {
            let x = normal_vec(rng, n);
            let guess = match strategy {
                AttackStrategy::BestKnown => {
                    let a = DMatrix::from_fn(m, n, |_, _| rng.next_normal());
                    let y = &a * &x;
                    let gram = &a * a.transpose();
                    match gram.cholesky() {
                        Some(chol) => a.transpose() * chol.solve(&y),
                        None => return false,
                    }
                }
                AttackStrategy::RandomGuess => normal_vec(rng, n),
            };
            (guess - x).norm() < delta
        }
    }
}

/// Runs `trials` independent attacks. Trial `t` draws from substream `t` of
/// a seed taken from `rng`, so results do not depend on thread count.
pub fn attack_simulate(
    kind: TransformKind,
    n: usize,
    trials: u64,
    strategy: AttackStrategy,
    rng: &mut Rng,
) -> Result<AttackOutcome> {
    validate(kind, n, trials)?;
    let base = rng.next_u64();
    let successes = (0..trials)
        .into_par_iter()
        .filter(|&t| trial(kind, n, strategy, &mut Rng::substream(base, t)))
        .count() as u64;
    let (interval, half_width) = wilson_interval(successes, trials);
    let outcome = AttackOutcome {
        trials,
        successes,
        rate: successes as f64 / trials as f64,
        interval,
        half_width,
        analytic: analytic(kind, n, strategy)?,
    };
    log::debug!("{kind:?} n={n} {strategy:?}: {outcome:?}");
    Ok(outcome)
}
