//! Parameter sweeps over forwarding probability and seed.

use std::io::Write;
use std::path::Path;

use crate::engine::SimTime;
use crate::name::NodeId;
use crate::scenario::ScenarioConfig;
use crate::sim::run_scenario;
use crate::trace::TraceError;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p_forward: f64,
    pub seed: u64,
    pub node: NodeId,
    pub torrent: String,
    pub completed: bool,
    pub completion_time_us: Option<SimTime>,
}

/// Runs every (p, seed) pair. Rows come out ordered by p, then seed, then
/// node, regardless of `threads`.
pub fn sweep(cfg: &ScenarioConfig, p_values: &[f64], seeds: &[u64], threads: usize) -> Vec<SweepRow> {
    let jobs: Vec<(f64, u64)> = p_values
        .iter()
        .flat_map(|&p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let run = |&(p, seed): &(f64, u64)| -> Vec<SweepRow> {
        let mut c = cfg.clone();
        c.strategy.p_forward = p;
        run_scenario(&c, seed)
            .metrics
            .leechers
            .into_iter()
            .map(|l| SweepRow {
                p_forward: p,
                seed,
                node: l.node,
                torrent: l.torrent,
                completed: l.completed,
                completion_time_us: l.completion_time_us,
            })
            .collect()
    };
    let threads = threads.max(1).min(jobs.len().max(1));
    if threads == 1 {
        return jobs.iter().flat_map(run).collect();
    }
    let chunk = jobs.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().flat_map(run).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    })
}

/// Mean completion time with incomplete leechers counted at `horizon`.
pub fn censored_mean(rows: &[SweepRow], horizon: SimTime) -> Option<f64> {
    if rows.is_empty() {
        return None;
    }
    let total: f64 = rows
        .iter()
        .map(|r| r.completion_time_us.unwrap_or(horizon) as f64)
        .sum();
    Some(total / rows.len() as f64)
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], out: W) -> Result<(), TraceError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["p_forward", "seed", "node", "torrent", "completed", "completion_time_us"])?;
    for r in rows {
        w.write_record([
            r.p_forward.to_string(),
            r.seed.to_string(),
            r.node.to_string(),
            r.torrent.clone(),
            r.completed.to_string(),
            r.completion_time_us.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<(), TraceError> {
    let f = std::fs::File::create(path)?;
    write_sweep(rows, std::io::BufWriter::new(f))
}
