//! Prints reconstruction bounds for permutation, random linear maps and
//! additive noise, and checks one of them against a simulated attacker.
//!
//!     cargo run --release --example privacy_bounds

use privml::privacy::{
    attack_simulate, join_attack_space, linear_privacy_bound, noise_privacy, permutation_epsilon_exact,
    permutation_privacy, AttackStrategy, TransformKind,
};
use privml::rng::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for n in [3, 5, 10, 100, 1000] {
        let b = permutation_privacy(n)?;
        println!("permutation n={n:4}: ln epsilon = {:10.3}", b.epsilon.ln());
    }
    println!("exact 1/5! = {}", permutation_epsilon_exact(5)?);
    for n in [2, 5, 10] {
        for delta in [0.5, 1.0, 2.0] {
            println!("linear n={n:2} delta={delta}: {:.6}", linear_privacy_bound(n, delta)?.epsilon.value());
        }
    }
    println!("noise sigma=1 within 3 sigma: {:.4}", noise_privacy(1.0, 3.0)?.epsilon.value());
    let j = join_attack_space(784, 10)?;
    println!("joining 10 of 784 permuted values: 2^{:.1} candidates", j.log2);

    let mut rng = Rng::new(8);
    for (kind, n) in [
        (TransformKind::Permutation, 4),
        (TransformKind::Linear { m: 1, delta: 1.0 }, 3),
        (TransformKind::Noise { sigma: 1.0, delta: 1.0 }, 2),
    ] {
        let o = attack_simulate(kind, n, 100_000, AttackStrategy::BestKnown, &mut rng)?;
        println!(
            "{kind:?} n={n}: attack rate {:.4} [{:.4}, {:.4}], analytic {:.4}",
            o.rate, o.interval.0, o.interval.1, o.analytic
        );
    }
    Ok(())
}
