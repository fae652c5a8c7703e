//! Starts all parties on localhost sockets and drives them from a
//! coordinator: storing tensors, running expressions on remote keys and
//! multiplying shared matrices with a dealt triple.
//!
//!     cargo run --example remote_parties

use privml::net::{Backend, Cluster, ClusterConfig, PartyRole};
use privml::rng::Rng;
use privml::sharing::{MulKind, DEFAULT_MASK_BOUND};
use privml::tensor::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cluster = Cluster::start(&ClusterConfig::new(1), Backend::Tcp)?;
    println!("parties listening on {:?}", cluster.addresses());
    let c = &cluster.coordinator;

    let a = c.store(PartyRole::P0, Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]])?)?;
    let b = c.exec1(PartyRole::P0, c.next_round(), &format!("(matmul {} (transpose {}))", a.expr(), a.expr()))?;
    println!("a a^T computed at P0: {:?}", c.fetch(b)?.data());

    let mut rng = Rng::new(2);
    let x = rng.normal(&[3, 4]);
    let w = rng.normal(&[4, 2]);
    let sx = c.share(&x, &mut rng, DEFAULT_MASK_BOUND)?;
    let sw = c.share(&w, &mut rng, DEFAULT_MASK_BOUND)?;
    let t = c.triple(MulKind::Matmul, &[3, 4], &[4, 2])?;
    let round = c.next_round();
    let [k0, k1] = c.exec_pair(round, |p| {
        let (xk, wk, tk) = if p == PartyRole::P0 { (sx.p0, sw.p0, t.p0) } else { (sx.p1, sw.p1, t.p1) };
        format!("(eval_fn 77 sigmoid (beaver {} {} {}))", xk.expr(), wk.expr(), tk.expr())
    })?;
    let s = c.reconstruct(privml::net::SharedKeys { p0: k0[0], p1: k1[0] })?;
    let direct = x.matmul(&w)?.map(privml::nonlinear::sigmoid);
    println!("sigmoid(x w) over the network: {:?}", s.data());
    println!("max error vs plaintext: {:.2e}", s.max_abs_diff(&direct)?);
    Ok(())
}
