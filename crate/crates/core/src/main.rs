use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use privml::experiment::report::{max_accuracy_gap, slowdown, write_records};
use privml::experiment::{
    emit_report, load_idx, read_records, train_dnn, train_logistic, Mode, Model, NamedRun, Runner, TrainConfig,
};
use privml::net::{serve, Backend, Cluster, ClusterConfig, Party, PartyConfig, PartyRole, TcpTransport, Topology};
use privml::privacy::{attack_simulate, bounds_table, join_attack_space, AttackStrategy, TransformKind};
use privml::rng::Rng;
use privml::sharing::DEFAULT_MASK_BOUND;

type BoxResult<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "privml", version, about = "Private model training with shared values and helper parties")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one party and serve coordinator requests until killed.
    Party(PartyArgs),
    /// Train a model locally or through parties and write CSV curves.
    Train(TrainArgs),
    /// Print privacy bounds and optionally simulate an attack.
    Privacy(PrivacyArgs),
    /// Merge run CSVs into a comparison file and plot data.
    Report(ReportArgs),
}

#[derive(clap::Args)]
struct PartyArgs {
    #[arg(long, env = "ROLE")]
    role: PartyRole,
    /// Address to listen on; defaults to the role's entry in --config.
    #[arg(long, env = "LISTEN")]
    listen: Option<String>,
    /// Peers as `role=host:port,...`; ignored when --config is given.
    #[arg(long, env = "PEERS", default_value = "")]
    peers: String,
    #[arg(long, env = "SEED", default_value_t = 7)]
    seed: u64,
    #[arg(long, env = "MASK_BOUND", default_value_t = DEFAULT_MASK_BOUND)]
    mask_bound: f64,
    /// Topology file with a `[parties]` table of role = "host:port".
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seconds to wait for a peer.
    #[arg(long, default_value_t = 30)]
    timeout: u64,
    /// Standard deviation of the noise P0 adds before revealing to P3.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Inproc,
    Tcp,
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long, default_value = "logistic")]
    model: Model,
    #[arg(long, default_value = "local")]
    mode: Mode,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Number of samples to load; the last fifth is held out.
    #[arg(long, default_value_t = 2500)]
    limit: usize,
    /// Topology of already running parties. Without it, framework mode
    /// starts its own parties.
    #[arg(long)]
    config: Option<PathBuf>,
    /// How self-started parties talk to each other.
    #[arg(long, value_enum, default_value = "inproc")]
    backend: BackendArg,
    /// Directory holding `train-images-idx3-ubyte[.gz]` and
    /// `train-labels-idx1-ubyte[.gz]`.
    #[arg(long, default_value = "data/desk-mnist")]
    data: PathBuf,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    validate_every: usize,
}

#[derive(clap::Args)]
struct PrivacyArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [2u64, 3, 5, 10])]
    n: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    delta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    sigma: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 3.0])]
    k: Vec<f64>,
    /// Also report the join-attack search space for `n,m`.
    #[arg(long, value_delimiter = ',')]
    join: Option<Vec<u64>>,
    /// Simulate an attack: permutation, linear or noise.
    #[arg(long)]
    attack: Option<String>,
    #[arg(long, default_value_t = 4)]
    attack_n: usize,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(clap::Args)]
struct ReportArgs {
    /// Run CSVs; each run is named after its file stem.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Party(a) => run_party(a),
        Command::Train(a) => run_train(a),
        Command::Privacy(a) => run_privacy(a),
        Command::Report(a) => run_report(a),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run_party(a: PartyArgs) -> BoxResult<()> {
    let topology = match &a.config {
        Some(path) => Topology::load(path)?,
        None => Topology::parse_peers(&a.peers)?,
    };
    let listen = match a.listen.or_else(|| topology.parties.get(&a.role).cloned()) {
        Some(l) => l,
        None => return Err(format!("no listen address for {}", a.role.name()).into()),
    };
    let timeout = Duration::from_secs(a.timeout);
    let party = Arc::new(Party::new(PartyConfig {
        mask_bound: a.mask_bound,
        timeout,
        noise_sigma: a.noise_sigma,
        ..PartyConfig::new(a.role, a.seed)
    }));
    party.connect(Arc::new(TcpTransport::with_timeout(topology.resolve()?, timeout * 2)));
    let server = serve(party, TcpListener::bind(&listen)?)?;
    log::info!("{} listening on {}", a.role.name(), server.addr());
    server.wait();
    Ok(())
}

fn find(dir: &Path, stem: &str) -> PathBuf {
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        gz
    } else {
        dir.join(stem)
    }
}

fn run_train(a: TrainArgs) -> BoxResult<()> {
    let ds = load_idx(
        &find(&a.data, "train-images-idx3-ubyte"),
        &find(&a.data, "train-labels-idx1-ubyte"),
        a.limit,
    )?;
    log::info!("{} training / {} validation samples", ds.train.len(), ds.validation.len());
    let cfg = TrainConfig {
        validate_every: a.validate_every,
        ..TrainConfig::new(a.steps, a.seed)
    };
    let train = match a.model {
        Model::Logistic => train_logistic,
        Model::Dnn => train_dnn,
    };
    let run = match a.mode {
        Mode::Local => train(&ds, Runner::Local, &cfg)?,
        Mode::Framework => match &a.config {
            Some(path) => {
                let coordinator = Topology::load(path)?.coordinator(Duration::from_secs(60))?;
                train(&ds, Runner::Framework(&coordinator), &cfg)?
            }
            None => {
                let backend = match a.backend {
                    BackendArg::Inproc => Backend::InProcess,
                    BackendArg::Tcp => Backend::Tcp,
                };
                let cluster = Cluster::start(&ClusterConfig::new(a.seed), backend)?;
                train(&ds, Runner::Framework(&cluster.coordinator), &cfg)?
            }
        },
    };
    let name = format!("{}-{}", a.model, a.mode);
    std::fs::create_dir_all(&a.out)?;
    let path = a.out.join(format!("{name}.csv"));
    write_records(&path, &run.records)?;
    if let Some(last) = run.records.last() {
        println!(
            "{} {}: validation accuracy {:.4} after {} batches ({:.1}s)",
            a.model, a.mode, last.val_accuracy, last.batch, last.elapsed_s
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn run_privacy(a: PrivacyArgs) -> BoxResult<()> {
    let rows = bounds_table(&a.n, &a.delta, &a.sigma, &a.k)?;
    let join = match a.join.as_deref() {
        None => None,
        Some(&[n, m]) => Some(join_attack_space(n, m)?),
        Some(_) => return Err("--join takes n,m".into()),
    };
    let attack = match a.attack.as_deref() {
        None => None,
        Some(kind) => {
            let kind = match kind {
                "permutation" => TransformKind::Permutation,
                "linear" => TransformKind::Linear { m: 1, delta: 1.0 },
                "noise" => TransformKind::Noise { sigma: 1.0, delta: 1.0 },
                other => return Err(format!("unknown attack {other:?}").into()),
            };
            let mut rng = Rng::new(a.seed);
            Some(attack_simulate(kind, a.attack_n, a.trials, AttackStrategy::BestKnown, &mut rng)?)
        }
    };
    if a.json {
        let mut out = serde_json::json!({ "bounds": rows });
        if let Some(j) = &join {
            out["join"] = serde_json::json!({ "count": j.count.to_string(), "log2": j.log2 });
        }
        if let Some(o) = &attack {
            out["attack"] = serde_json::json!({
                "trials": o.trials, "successes": o.successes, "rate": o.rate,
                "interval": [o.interval.0, o.interval.1], "analytic": o.analytic,
            });
        }
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(());
    }
    println!("{:<12} {:>6} {:>6} {:>6} {:>14} {:>12}", "kind", "n", "sigma", "delta", "epsilon", "ln epsilon");
    let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    for r in &rows {
        println!(
            "{:<12} {:>6} {:>6} {:>6} {:>14.6e} {:>12.4}",
            r.kind,
            opt(r.n.map(|n| n.to_string())),
            opt(r.sigma.map(|s| s.to_string())),
            opt(r.delta.map(|d| d.to_string())),
            r.epsilon,
            r.ln_epsilon
        );
    }
    if let Some(j) = join {
        println!("join attack space: {} (log2 {:.2})", j.count, j.log2);
    }
    if let Some(o) = attack {
        println!(
            "attack: {}/{} successes, rate {:.5}, 95% interval [{:.5}, {:.5}], analytic {:.5}",
            o.successes, o.trials, o.rate, o.interval.0, o.interval.1, o.analytic
        );
    }
    Ok(())
}

fn run_report(a: ReportArgs) -> BoxResult<()> {
    let mut runs = Vec::new();
    for path in &a.inputs {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        runs.push(NamedRun::new(name, read_records(path)?));
    }
    let files = emit_report(&a.out, &runs)?;
    for f in runs.iter().filter(|r| r.name.ends_with("-framework")) {
        let stem = f.name.trim_end_matches("-framework");
        if let Some(l) = runs.iter().find(|r| r.name == format!("{stem}-local")) {
            if let Some(gap) = max_accuracy_gap(&f.records, &l.records) {
                println!("{stem}: max accuracy gap {gap:.4}");
            }
            if let Some(s) = slowdown(&f.records, &l.records) {
                println!("{stem}: framework is {s:.1}x slower than local");
            }
        }
    }
    println!("wrote {} and {}", files.merged.display(), files.curves.display());
    Ok(())
}
