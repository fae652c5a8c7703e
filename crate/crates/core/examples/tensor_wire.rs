//! Tensor arithmetic and the binary encodings used between parties.
//!
//!     cargo run --example tensor_wire

use privml::net::Message;
use privml::tensor::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]])?;
    let w = Tensor::identity(3).scale(0.5)?;
    let y = x.matmul(&w)?.add_row(&Tensor::from_rows(&[vec![1.0, 0.0, -1.0]])?)?;
    println!("x w + b = {:?} (shape {:?})", y.data(), y.shape());
    println!("column sums {:?}, wrapped rows {:?}", y.sum_rows()?.data(), y.rows_wrapping(1, 3)?.data());

    let bytes = y.to_bytes();
    println!("tensor encoding: {} bytes, round trip equal: {}", bytes.len(), Tensor::from_bytes(&bytes)? == y);

    let frame = Message::Exec {
        round: 3,
        expr: "(add k:1 k:2)".into(),
    }
    .encode();
    let hex: Vec<String> = frame.iter().map(|b| format!("{b:02x}")).collect();
    println!("EXEC frame: {}", hex.join(" "));
    println!("decoded: {:?}", Message::decode(&frame)?);
    Ok(())
}
