//! Reconstructive privacy: the probability `ε` that an adversary recovers
//! the raw data exactly, or within error `δ`, from what it observes.

mod attack;
pub mod special;

pub use attack::{attack_simulate, wilson_interval, AttackOutcome, AttackStrategy, TransformKind};

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use thiserror::Error;

use special::{chi_squared_cdf, erf, ln_gamma};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrivacyError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0} trials is too few; at least 100 are required")]
    TooFewTrials(usize),
}

pub type Result<T> = std::result::Result<T, PrivacyError>;

/// Largest `n` for which `1/n!` is a normal `f64`-representable value we
/// return directly; beyond it only the logarithm is kept.
pub const MAX_DIRECT_FACTORIAL: u64 = 170;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Value(f64),
    /// Natural log of a probability too small to represent.
    Ln(f64),
}

impl Epsilon {
    /// The probability itself; underflows to 0 for [`Epsilon::Ln`].
    pub fn value(self) -> f64 {
        match self {
            Epsilon::Value(v) => v,
            Epsilon::Ln(l) => l.exp(),
        }
    }

    pub fn ln(self) -> f64 {
        match self {
            Epsilon::Value(v) => v.ln(),
            Epsilon::Ln(l) => l,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyBound {
    pub epsilon: Epsilon,
    /// Recovery radius; `None` for exact-recovery bounds.
    pub delta: Option<f64>,
    /// Which auxiliary information the adversary is assumed to hold.
    pub assumptions: String,
}

fn factorial(n: u64) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * k)
}

/// `1/n!` as an exact rational.
pub fn permutation_epsilon_exact(n: u64) -> Result<BigRational> {
    if n == 0 {
        return Err(PrivacyError::InvalidArgument("vector length must be at least 1".into()));
    }
    Ok(BigRational::new(1.into(), factorial(n).into()))
}

/// A secretly permuted length-`n` vector with distinct entries: guessing the
/// original order succeeds with probability `1/n!`.
pub fn permutation_privacy(n: u64) -> Result<PrivacyBound> {
    let exact = permutation_epsilon_exact(n)?;
    let epsilon = if n <= MAX_DIRECT_FACTORIAL {
        Epsilon::Value(exact.to_f64().expect("1/n! is representable up to 170"))
    } else {
        Epsilon::Ln(-ln_gamma(n as f64 + 1.0))
    };
    Ok(PrivacyBound {
        epsilon,
        delta: None,
        assumptions: "distinct values, permutation secret, no auxiliary information".into(),
    })
}

/// Upper bound for recovering `x ∈ ℝⁿ` within `δ` after a linear map that
/// leaves `n - 1` dimensions unobserved: `P(|y| < δ)` for
/// `y ~ N(0, I_{n-1})`, i.e. `P(χ²_{n-1} < δ²)`. This is a bound, not the
/// exact leakage.
pub fn linear_privacy_bound(n: u64, delta: f64) -> Result<PrivacyBound> {
    if n < 2 {
        return Err(PrivacyError::InvalidArgument("bound needs n >= 2".into()));
    }
    if !(delta > 0.0) {
        return Err(PrivacyError::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    Ok(PrivacyBound {
        epsilon: Epsilon::Value(chi_squared_cdf((n - 1) as f64, delta * delta)),
        delta: Some(delta),
        assumptions: "standard normal prior on the unobserved n-1 dimensions".into(),
    })
}

/// Gaussian noise of scale `sigma`: the observation lies within `k·sigma` of
/// the raw value with probability `Φ(k) − Φ(−k)`.
pub fn noise_privacy(sigma: f64, k: f64) -> Result<PrivacyBound> {
    if !(sigma > 0.0) || !(k > 0.0) {
        return Err(PrivacyError::InvalidArgument(format!(
            "sigma and k must be positive, got {sigma} and {k}"
        )));
    }
    Ok(PrivacyBound {
        epsilon: Epsilon::Value(erf(k / std::f64::consts::SQRT_2)),
        delta: Some(k * sigma),
        assumptions: "adversary uses the noisy observation as its estimate".into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinSpace {
    pub count: BigUint,
    pub log2: f64,
}

/// Number of ways to match `m` known records into `n` anonymised ones:
/// `C(n, m) · m! = n! / (n - m)!`.
pub fn join_attack_space(n: u64, m: u64) -> Result<JoinSpace> {
    if m > n {
        return Err(PrivacyError::InvalidArgument(format!("m = {m} exceeds n = {n}")));
    }
    let count = (n - m + 1..=n).fold(BigUint::one(), |acc, k| acc * k);
    let log2 = (n - m + 1..=n).map(|k| (k as f64).log2()).sum();
    Ok(JoinSpace { count, log2 })
}

/// One row of a bounds table.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BoundRow {
    pub kind: &'static str,
    pub n: Option<u64>,
    pub sigma: Option<f64>,
    pub delta: Option<f64>,
    pub epsilon: f64,
    pub ln_epsilon: f64,
}

impl BoundRow {
    fn new(kind: &'static str, n: Option<u64>, sigma: Option<f64>, b: &PrivacyBound) -> Self {
        BoundRow {
            kind,
            n,
            sigma,
            delta: b.delta,
            epsilon: b.epsilon.value(),
            ln_epsilon: b.epsilon.ln(),
        }
    }
}

/// Permutation bounds for each `n`, linear bounds for each `(n, δ)` with
/// `n ≥ 2`, noise bounds for each `(σ, k)`.
pub fn bounds_table(ns: &[u64], deltas: &[f64], sigmas: &[f64], ks: &[f64]) -> Result<Vec<BoundRow>> {
    let mut rows = Vec::new();
    for &n in ns {
        rows.push(BoundRow::new("permutation", Some(n), None, &permutation_privacy(n)?));
    }
    for &n in ns.iter().filter(|&&n| n >= 2) {
        for &d in deltas {
            rows.push(BoundRow::new("linear", Some(n), None, &linear_privacy_bound(n, d)?));
        }
    }
    for &s in sigmas {
        for &k in ks {
            rows.push(BoundRow::new("noise", None, Some(s), &noise_privacy(s, k)?));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn permutation_examples() {
        assert_eq!(permutation_epsilon_exact(5).unwrap(), BigRational::new(1.into(), 120.into()));
        assert_eq!(permutation_privacy(5).unwrap().epsilon, Epsilon::Value(1.0 / 120.0));
        assert_eq!(permutation_privacy(1).unwrap().epsilon, Epsilon::Value(1.0));
        assert_eq!(permutation_privacy(10).unwrap().epsilon, Epsilon::Value(1.0 / 3_628_800.0));
        assert!(permutation_privacy(0).is_err());
        match permutation_privacy(200).unwrap().epsilon {
            Epsilon::Ln(l) => {
                let direct: f64 = (1..=200).map(|k| (k as f64).ln()).sum();
                assert!((l + direct).abs() < 1e-9);
            }
            other => panic!("expected log form, got {other:?}"),
        }
    }

    #[test]
    fn permutation_times_factorial_is_one() {
        for n in 1..=20u64 {
            let f: u64 = (1..=n).product();
            let product = permutation_epsilon_exact(n).unwrap() * BigRational::from_integer(f.into());
            assert!(product.is_one(), "n = {n}");
        }
    }

    #[test]
    fn linear_examples() {
        let e = linear_privacy_bound(2, 1.0).unwrap().epsilon.value();
        assert!((e - 0.682_689_492_137_086).abs() < 1e-10);
        assert!((linear_privacy_bound(2, 1e6).unwrap().epsilon.value() - 1.0).abs() < 1e-12);
        assert!(linear_privacy_bound(100, 1.0).unwrap().epsilon.value() < 1e-30);
        assert!(linear_privacy_bound(1, 1.0).is_err());
        assert!(linear_privacy_bound(3, 0.0).is_err());
    }

    #[test]
    fn linear_bound_oracle_by_integration() {
        // P(|y| < 1) for y ~ N(0, 1): Simpson's rule on the density.
        let steps = 20_000;
        let h = 2.0 / steps as f64;
        let pdf = |x: f64| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(-1.0) + pdf(1.0);
        for i in 1..steps {
            s += pdf(-1.0 + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let integral = s * h / 3.0;
        assert!((linear_privacy_bound(2, 1.0).unwrap().epsilon.value() - integral).abs() < 1e-12);
    }

    #[test]
    fn tiny_bound_sees_no_monte_carlo_hits() {
        use crate::rng::Rng;
        use rayon::prelude::*;
        // 10^7 draws of y ~ N(0, I_99); a draw is abandoned once its squared
        // norm passes 1, so almost all stop after a few coordinates.
        let hits: usize = (0..100u64)
            .into_par_iter()
            .map(|chunk| {
                let mut rng = Rng::substream(77, chunk);
                (0..100_000)
                    .filter(|_| {
                        let mut r2 = 0.0;
                        for _ in 0..99 {
                            r2 += rng.next_normal().powi(2);
                            if r2 >= 1.0 {
                                return false;
                            }
                        }
                        true
                    })
                    .count()
            })
            .sum();
        assert_eq!(hits, 0);
        assert!(linear_privacy_bound(100, 1.0).unwrap().epsilon.value() < 1e-30);
    }

    #[test]
    fn noise_examples() {
        let b = noise_privacy(1.0, 3.0).unwrap();
        assert!((b.epsilon.value() - 0.9973).abs() < 5e-4);
        assert_eq!(b.delta, Some(3.0));
        let b = noise_privacy(2.0, 1.0).unwrap();
        assert!((b.epsilon.value() - 0.682_689_492_137_085_9).abs() < 1e-12);
        assert_eq!(b.delta, Some(2.0));
        assert!(noise_privacy(1.0, 1e-9).unwrap().epsilon.value() < 1e-8);
        assert!(noise_privacy(0.0, 1.0).is_err());
    }

    #[test]
    fn join_space_examples() {
        // brute force: injective maps {0,1} -> {0..5}
        let mut brute = 0u64;
        for a in 0..5 {
            for b in 0..5 {
                if a != b {
                    brute += 1;
                }
            }
        }
        assert_eq!(join_attack_space(5, 2).unwrap().count, BigUint::from(brute));
        assert_eq!(join_attack_space(7, 0).unwrap().count, BigUint::one());
        assert_eq!(join_attack_space(6, 6).unwrap().count, BigUint::from(720u32));
        assert!((join_attack_space(6, 6).unwrap().log2 - 720f64.log2()).abs() < 1e-12);
        assert!(join_attack_space(2, 3).is_err());
    }

    #[test]
    fn table_has_each_kind() {
        let rows = bounds_table(&[1, 5], &[1.0], &[1.0], &[3.0]).unwrap();
        assert_eq!(rows.len(), 2 + 1 + 1);
        assert_eq!(rows[2].kind, "linear");
    }

    #[test]
    fn linear_bound_monotone_grid() {
        let ns = [2u64, 3, 5, 10, 20, 50];
        let deltas = [0.1, 0.5, 1.0, 2.0, 4.0];
        for &n in &ns {
            for w in deltas.windows(2) {
                let lo = linear_privacy_bound(n, w[0]).unwrap().epsilon.value();
                let hi = linear_privacy_bound(n, w[1]).unwrap().epsilon.value();
                assert!(lo <= hi, "n={n} not increasing in delta");
            }
        }
        for &d in &deltas {
            for w in ns.windows(2) {
                let a = linear_privacy_bound(w[0], d).unwrap().epsilon.value();
                let b = linear_privacy_bound(w[1], d).unwrap().epsilon.value();
                assert!(b <= a, "delta={d} not decreasing in n");
            }
        }
    }

    proptest! {
        #[test]
        fn linear_bound_is_a_probability_and_monotone(n in 2u64..200, d in 0.01f64..20.0, step in 0.0f64..5.0) {
            let e = linear_privacy_bound(n, d).unwrap().epsilon.value();
            prop_assert!((0.0..=1.0).contains(&e));
            prop_assert!(linear_privacy_bound(n, d + step).unwrap().epsilon.value() >= e);
            prop_assert!(linear_privacy_bound(n + 1, d).unwrap().epsilon.value() <= e);
        }
    }
}
