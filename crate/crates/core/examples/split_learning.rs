//! Trains a small split network on synthetic data: the first layer is
//! computed on shares, the tail runs in the clear at a separate party.
//! The shared run is compared with the same model trained in plaintext.
//!
//!     cargo run --example split_learning

use privml::rng::Rng;
use privml::split::{PlainSplitModel, SplitSession};
use privml::tensor::Tensor;

fn synthetic(rng: &mut Rng, n: usize, d: usize) -> (Tensor, Tensor) {
    let x = rng.normal(&[n, d]);
    // Label is 1 where the first feature beats the second.
    let mut y = Vec::with_capacity(n * 2);
    for r in 0..n {
        let hit = x.get(r, 0) > x.get(r, 1);
        y.extend([hit as u8 as f64, !hit as u8 as f64]);
    }
    (x, Tensor::new(vec![n, 2], y).unwrap())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = Rng::new(3);
    let (x, y) = synthetic(&mut rng, 256, 8);
    let mut plain = PlainSplitModel::init(8, 16, 2, 0.5, &mut Rng::new(4));
    let mut session = SplitSession::from_model(5, &plain)?;

    for step in 0..200 {
        let start = (step * 32) % 256;
        let xb = x.rows_wrapping(start, 32)?;
        let yb = y.rows_wrapping(start, 32)?;
        let shared_x = session.share_input(&xb)?;
        let shared_loss = session.step(&shared_x, &yb)?;
        let plain_loss = plain.step(&xb, &yb)?;
        if step % 40 == 0 {
            println!("step {step:3}: loss shared {shared_loss:.6}, plaintext {plain_loss:.6}");
        }
    }
    let learned = session.reconstruct()?;
    println!(
        "max parameter difference after 200 steps: {:.2e}",
        learned.head.w.max_abs_diff(&plain.head.w)?.max(learned.tail.w2.max_abs_diff(&plain.tail.w2)?)
    );
    println!("messages seen by the tail: {}", session.transcript().tail.len());
    Ok(())
}
