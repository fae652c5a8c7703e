//! Trains logistic regression and the split DNN locally and through
//! in-process parties, and prints accuracy at each checkpoint.
//!
//!     cargo run --release --example training_parity -- [steps]

use std::path::Path;

use privml::experiment::report::{max_accuracy_gap, slowdown};
use privml::experiment::{load_idx, train_dnn, train_logistic, Runner, TrainConfig};
use privml::net::{Cluster, ClusterConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let steps = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1000);
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/desk-mnist");
    let ds = load_idx(
        &data.join("train-images-idx3-ubyte.gz"),
        &data.join("train-labels-idx1-ubyte.gz"),
        2500,
    )?;
    let cfg = TrainConfig::new(steps, 7);
    let cluster = Cluster::in_process(&ClusterConfig::new(7));

    for (name, train) in [("logistic", train_logistic as fn(_, _, _) -> _), ("dnn", train_dnn)] {
        let local = train(&ds, Runner::Local, &cfg)?;
        let framework = train(&ds, Runner::Framework(&cluster.coordinator), &cfg)?;
        println!("{name}");
        for (l, f) in local.records.iter().zip(&framework.records) {
            println!(
                "  batch {:5}  local {:.4}  framework {:.4}  loss {:.5} / {:.5}",
                l.batch, l.val_accuracy, f.val_accuracy, l.loss, f.loss
            );
        }
        println!(
            "  max accuracy gap {:.4}, framework/local time {:.1}x",
            max_accuracy_gap(&local.records, &framework.records).unwrap_or(f64::NAN),
            slowdown(&framework.records, &local.records).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
