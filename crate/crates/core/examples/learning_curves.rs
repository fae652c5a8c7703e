//! Trains logistic regression locally and with in-process parties for a
//! few hundred batches and writes CSV curves plus a vega-lite plot spec.
//!
//!     cargo run --release --example learning_curves -- [out_dir]

use std::path::{Path, PathBuf};

use privml::experiment::{emit_report, load_idx, train_logistic, NamedRun, Runner, TrainConfig};
use privml::net::{Cluster, ClusterConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("privml-curves"));
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/desk-mnist");
    let ds = load_idx(
        &data.join("train-images-idx3-ubyte.gz"),
        &data.join("train-labels-idx1-ubyte.gz"),
        2500,
    )?;
    let cfg = TrainConfig {
        validate_every: 50,
        ..TrainConfig::new(300, 3)
    };
    let cluster = Cluster::in_process(&ClusterConfig::new(3));
    let local = train_logistic(&ds, Runner::Local, &cfg)?;
    let framework = train_logistic(&ds, Runner::Framework(&cluster.coordinator), &cfg)?;
    let files = emit_report(
        &out,
        &[
            NamedRun::new("logistic-local", local.records),
            NamedRun::new("logistic-framework", framework.records),
        ],
    )?;
    println!("{}", std::fs::read_to_string(&files.merged)?);
    println!("plot spec: {}", files.curves.display());
    Ok(())
}
