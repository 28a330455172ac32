use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use topoleak::adversary::{honest_partition, select_corrupt, Amount, CorruptionStrategy};
use topoleak::experiment::{run_experiment, ExperimentConfig, ExperimentKind};
use topoleak::graph::read_edge_list;
use topoleak::privacy::network_privacy_loss;
use topoleak::{Error, Result};

#[derive(Parser)]
#[command(
    name = "topoleak",
    version,
    about = "Topology privacy experiments for decentralized learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulated and analytic leakage against honest component size.
    MiCurve(RunArgs),
    /// Component structure, privacy loss and membership inference against
    /// the corrupt fraction.
    TopologyAttack(RunArgs),
    /// Gradient inversion quality against honest component size.
    Inversion(RunArgs),
    /// Mixing-matrix conditions and convergence on generated graphs.
    ConsensusCheck(RunArgs),
    /// Honest partition of an edge-list graph.
    Partition(PartitionArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct PartitionArgs {
    /// Edge list: one `i j` pair per line, optional `# n=K` header.
    #[arg(long)]
    edges: PathBuf,
    /// Comma-separated corrupt node ids.
    #[arg(long, conflicts_with = "fraction")]
    corrupt: Option<String>,
    /// Corrupt this fraction of nodes by descending degree.
    #[arg(long)]
    fraction: Option<f64>,
    /// Recompute degrees after every pick.
    #[arg(long, requires = "fraction")]
    adaptive: bool,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<()> {
    let text = match &args.config {
        Some(p) => read(p)?,
        None => String::new(),
    };
    let mut cfg = ExperimentConfig::parse(kind, &text, args.seed)?;
    if args.workers.is_some() {
        cfg.workers = args.workers;
    }
    let out_dir = args
        .out
        .or_else(|| cfg.out_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(kind.id()));
    let output = run_experiment(&cfg)?;
    output.write_to(&out_dir)?;
    println!(
        "{}: {} files written to {} (config {})",
        kind.id(),
        output.files.len(),
        out_dir.display(),
        &output.record.config_hash[..12]
    );
    Ok(())
}

fn partition(args: PartitionArgs) -> Result<()> {
    let g = read_edge_list(&read(&args.edges)?)?;
    let corrupt = match (&args.corrupt, args.fraction) {
        (Some(list), _) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|e| Error::Config(format!("corrupt id {s}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?,
        (None, Some(f)) => select_corrupt(
            &g,
            &CorruptionStrategy::DegreeTargeted {
                amount: Amount::Fraction(f),
                adaptive: args.adaptive,
            },
            0,
        )?,
        (None, None) => Vec::new(),
    };
    let p = honest_partition(&g, &corrupt)?;
    let loss = network_privacy_loss(&p);
    let report = serde_json::json!({
        "n": p.n,
        "corrupt": p.corrupt,
        "components": p.components,
        "sizes": p.sizes(),
        "fully_revealed": loss.fully_revealed,
        "mean_mi": loss.mean_mi,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::MiCurve(a) => run(ExperimentKind::MiCurve, a),
        Command::TopologyAttack(a) => run(ExperimentKind::TopologyAttack, a),
        Command::Inversion(a) => run(ExperimentKind::InversionQuality, a),
        Command::ConsensusCheck(a) => run(ExperimentKind::ConsensusCheck, a),
        Command::Partition(a) => partition(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
