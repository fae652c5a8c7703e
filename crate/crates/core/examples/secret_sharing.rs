//! Splits two matrices into additive shares, combines them with public
//! constants, and multiplies them with Beaver triples.
//!
//!     cargo run --example secret_sharing

use privml::rng::Rng;
use privml::sharing::TwoPartySim;
use privml::tensor::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sim = TwoPartySim::new(2024);
    let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]])?;
    let y = Tensor::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]])?;

    let sx = sim.share(&x)?;
    let sy = sim.share(&y)?;
    println!("P0 holds {:?}", sx.p0.share().data());
    println!("P1 holds {:?}", sx.p1.share().data());

    let shifted = sx.add_public(&Tensor::filled(&[2, 2], 10.0))?;
    println!("x + 10      = {:?}", shifted.reconstruct()?.data());

    let product = sim.mul(&sx, &sy)?;
    println!("x * y       = {:?}", product.reconstruct()?.data());

    let mm = sim.matmul(&sx, &sy)?;
    println!("x @ y       = {:?}", mm.reconstruct()?.data());
    println!("plain x @ y = {:?}", x.matmul(&y)?.data());

    // What P1 received from P0 during the products: masked differences only.
    let (_, ch1) = sim.channels();
    for (tag, msg) in ch1.transcript() {
        println!("P1 received at {tag:?}: {:?}", msg[0].data());
    }

    let big = Rng::new(5).normal(&[64, 64]);
    let sb = sim.share(&big)?;
    let err = sim.matmul(&sb, &sb)?.reconstruct()?.max_abs_diff(&big.matmul(&big)?)?;
    println!("64x64 shared square, max error {err:.2e}");
    Ok(())
}
