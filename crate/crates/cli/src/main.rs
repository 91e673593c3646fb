use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adhoc_ntorrent::sweep::write_sweep_csv;
use adhoc_ntorrent::trace::TraceError;
use adhoc_ntorrent::{
    build_five_node, build_random_field, load_scenario, reachability_oracle, run_scenario, sweep, write_run,
    RunOutput, ScenarioConfig, ScenarioError,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "sim", version, about = "nTorrent over wireless ad hoc networks, discrete-event simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// The built-in five-node line. `--seed` takes a number or a range such
    /// as `1..10`; a range writes one `seed-N` directory per seed.
    FiveNode {
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value = "1", value_parser = parse_seeds)]
        seed: Seeds,
        #[arg(long)]
        out: PathBuf,
    },
    /// A random-walk field with one seeder per movie.
    RandomField {
        #[arg(long, default_value_t = 12)]
        nodes: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Completion times over forwarding probabilities and seeds.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 0 picks the number of CPUs.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Print the reachability prediction for a static scenario.
    Oracle {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Clone, Debug)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let bad = |_| format!("expected a seed or a range like 1..10, got {s:?}");
    match s.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.parse().map_err(bad)?;
            let b: u64 = b.trim_start_matches('=').parse().map_err(bad)?;
            if a > b {
                return Err(format!("empty seed range {s:?}"));
            }
            Ok(Seeds((a..=b).collect()))
        }
        None => Ok(Seeds(vec![s.parse().map_err(bad)?])),
    }
}

enum Failure {
    Config(String),
    Io(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io(_) => Failure::Io(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<TraceError> for Failure {
    fn from(e: TraceError) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn checked(cfg: ScenarioConfig) -> Result<ScenarioConfig, Failure> {
    cfg.validate()?;
    Ok(cfg)
}

fn report(out: &RunOutput, seed: u64, dir: &Path) {
    let done = out.metrics.leechers.iter().filter(|l| l.completed).count();
    let ratio = out
        .metrics
        .overhead_ratio
        .map_or("n/a".to_string(), |r| format!("{r:.3}"));
    println!(
        "seed {seed}: {done}/{} leechers completed, {} transmissions, overhead {ratio}, {} events -> {}",
        out.metrics.leechers.len(),
        out.metrics.total_tx,
        out.report.events_dispatched,
        dir.display()
    );
}

fn run_one(cfg: &ScenarioConfig, seed: u64, dir: &Path) -> Result<(), Failure> {
    let out = run_scenario(cfg, seed);
    write_run(&out, dir)?;
    report(&out, seed, dir);
    Ok(())
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { scenario, seed, out } => {
            let cfg = load_scenario(&scenario)?;
            run_one(&cfg, seed, &out)
        }
        Command::FiveNode { p, seed, out } => {
            let mut cfg = build_five_node();
            cfg.strategy.p_forward = p;
            let cfg = checked(cfg)?;
            if let [single] = seed.0[..] {
                return run_one(&cfg, single, &out);
            }
            for s in seed.0 {
                run_one(&cfg, s, &out.join(format!("seed-{s}")))?;
            }
            Ok(())
        }
        Command::RandomField { nodes, seed, out } => {
            let cfg = checked(build_random_field(nodes, seed)?)?;
            run_one(&cfg, seed, &out)
        }
        Command::Sweep {
            scenario,
            p,
            seeds,
            out,
            threads,
        } => {
            let cfg = load_scenario(&scenario)?;
            if let Some(bad) = p.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Failure::Config(format!("p_forward {bad} outside [0, 1]")));
            }
            let threads = match threads {
                0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
                n => n,
            };
            let rows = sweep(&cfg, &p, &seeds, threads);
            fs::create_dir_all(&out)?;
            let path = out.join("sweep.csv");
            write_sweep_csv(&rows, &path)?;
            let done = rows.iter().filter(|r| r.completed).count();
            println!("{} rows, {done} completed -> {}", rows.len(), path.display());
            Ok(())
        }
        Command::Oracle { scenario } => {
            let cfg = load_scenario(&scenario)?;
            let verdicts = reachability_oracle(&cfg).map_err(|e| Failure::Config(e.to_string()))?;
            for (node, reachable) in verdicts {
                println!("{node},{}", if reachable { "reachable" } else { "unreachable" });
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
