//! Evaluates a sigmoid on a shared vector by revealing a secretly permuted
//! copy to a helper party, and prints what the helper saw.
//!
//!     cargo run --example permuted_sigmoid

use privml::nonlinear::{eval_nonlinear_many, permutation_from_seed, sigmoid, NonlinearFn, NonlinearParty};
use privml::sharing::TwoPartySim;
use privml::tensor::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sim = TwoPartySim::new(11);
    let x = Tensor::vector(vec![-3.0, -1.0, 0.0, 0.5, 2.0, 4.0])?;
    let shared = sim.share(&x)?;

    let helper = NonlinearParty::new(99, sim.mask_bound()).recording();
    let seed = 2;
    let out = eval_nonlinear_many(&shared, &[NonlinearFn::Sigmoid, NonlinearFn::SigmoidPrime], seed, &helper)?;

    println!("input          {:?}", x.data());
    println!("helper saw     {:?}", helper.views()[0].1.data());
    println!("permutation    {:?}", permutation_from_seed(seed, x.len()).forward());
    println!("sigmoid        {:?}", out[0].reconstruct()?.data());
    println!("direct         {:?}", x.map(sigmoid).data());
    println!("sigmoid'       {:?}", out[1].reconstruct()?.data());
    Ok(())
}
