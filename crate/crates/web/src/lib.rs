//! wasm-bindgen bindings for the browser demo in `www/`. Every function
//! returns a JSON string; errors come back as `{"error": "..."}`.

use std::collections::BTreeMap;

use adhoc_ntorrent::scenario::ScenarioConfig;
use adhoc_ntorrent::{
    build_five_node, build_random_field, censored_mean, run_scenario, sweep, Code, RunOutput, SECOND,
};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn error(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

fn nodes_json(cfg: &ScenarioConfig) -> Vec<Value> {
    cfg.nodes
        .iter()
        .map(|n| {
            json!({
                "id": n.id.0,
                "kind": n.kind.label(),
                "torrent": n.kind.torrent().map(|t| t.to_string()),
            })
        })
        .collect()
}

/// Pieces received per leecher as (time_us, count) steps.
fn progress(out: &RunOutput) -> BTreeMap<String, Vec<(u64, u32)>> {
    let mut steps: BTreeMap<String, Vec<(u64, u32)>> = BTreeMap::new();
    for l in &out.metrics.leechers {
        steps.insert(l.node.to_string(), vec![(0, 0)]);
    }
    for r in out.trace.iter().filter(|r| r.event == Code::PieceRx) {
        if let Some(s) = steps.get_mut(&r.node.to_string()) {
            let n = s.last().map_or(0, |&(_, n)| n) + 1;
            s.push((r.time_us, n));
        }
    }
    steps
}

fn summary(out: &RunOutput) -> Value {
    json!({
        "leechers": out.metrics.leechers.iter().map(|l| json!({
            "node": l.node.to_string(),
            "torrent": l.torrent,
            "completed": l.completed,
            "completion_time_us": l.completion_time_us,
        })).collect::<Vec<_>>(),
        "total_tx": out.metrics.total_tx,
        "deliveries": out.metrics.deliveries,
        "overhead_ratio": out.metrics.overhead_ratio,
        "events": out.report.events_dispatched,
    })
}

/// Runs the five-node line and returns roles, positions, per-leecher
/// download progress and the summary metrics.
#[wasm_bindgen]
pub fn five_node(p_forward: f64, seed: u32) -> String {
    let mut cfg = build_five_node();
    cfg.strategy.p_forward = p_forward;
    if let Err(e) = cfg.validate() {
        return error(e);
    }
    let out = run_scenario(&cfg, seed.into());
    let first = out.positions.iter().take(cfg.nodes.len());
    json!({
        "grid": [cfg.grid.width, cfg.grid.height],
        "range": cfg.radio.range,
        "nodes": nodes_json(&cfg),
        "positions": first.map(|s| [s.position.x, s.position.y]).collect::<Vec<_>>(),
        "progress": progress(&out),
        "summary": summary(&out),
    })
    .to_string()
}

/// Runs a random-walk field. `frames` holds every node's position once
/// per simulated second; `completed` maps leechers to their finish time.
#[wasm_bindgen]
pub fn random_field(n_nodes: u32, seed: u32, duration_s: u32) -> String {
    let mut cfg = match build_random_field(n_nodes as usize, seed.into()) {
        Ok(c) => c,
        Err(e) => return error(e),
    };
    cfg.duration_us = u64::from(duration_s) * SECOND;
    let out = run_scenario(&cfg, seed.into());
    let n = cfg.nodes.len();
    let frames: Vec<Vec<[f64; 2]>> = out
        .positions
        .chunks(n)
        .map(|c| c.iter().map(|s| [round2(s.position.x), round2(s.position.y)]).collect())
        .collect();
    json!({
        "grid": [cfg.grid.width, cfg.grid.height],
        "range": cfg.radio.range,
        "nodes": nodes_json(&cfg),
        "frames": frames,
        "progress": progress(&out),
        "summary": summary(&out),
    })
    .to_string()
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Censored mean completion time on the five-node line for each
/// comma-separated forwarding probability over seeds `1..=n_seeds`.
#[wasm_bindgen]
pub fn sweep_five_node(p_values: &str, n_seeds: u32) -> String {
    let ps: Result<Vec<f64>, _> = p_values.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let ps = match ps {
        Ok(ps) if !ps.is_empty() && ps.iter().all(|p| (0.0..=1.0).contains(p)) => ps,
        _ => return error(format!("bad probability list {p_values:?}")),
    };
    if n_seeds == 0 {
        return error("need at least one seed");
    }
    let cfg = build_five_node();
    let seeds: Vec<u64> = (1..=u64::from(n_seeds)).collect();
    let rows = sweep(&cfg, &ps, &seeds, 1);
    let points: Vec<Value> = ps
        .iter()
        .map(|&p| {
            let at: Vec<_> = rows.iter().filter(|r| r.p_forward == p).cloned().collect();
            let done = at.iter().filter(|r| r.completed).count();
            json!({
                "p": p,
                "mean_completion_us": censored_mean(&at, cfg.duration_us),
                "completed": done,
                "runs": at.len(),
            })
        })
        .collect();
    json!({ "duration_us": cfg.duration_us, "points": points }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn five_node_payload() {
        let v = parse(&five_node(1.0, 1));
        assert_eq!(v["nodes"].as_array().unwrap().len(), 5);
        assert_eq!(v["positions"][2], json!([125.0, 150.0]));
        assert_eq!(v["progress"]["n2"].as_array().unwrap().last().unwrap()[1], 32);
        assert!(v["summary"]["leechers"].as_array().unwrap().iter().all(|l| l["completed"] == true));
    }

    #[test]
    fn random_field_frames() {
        let v = parse(&random_field(6, 4, 30));
        let frames = v["frames"].as_array().unwrap();
        assert_eq!(frames.len(), 31);
        assert_eq!(frames[0].as_array().unwrap().len(), 6);
        assert!(parse(&random_field(2, 1, 10))["error"].is_string());
    }

    #[test]
    fn sweep_points() {
        let v = parse(&sweep_five_node("0, 1", 2));
        let pts = v["points"].as_array().unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1]["completed"], 4);
        assert_eq!(pts[0]["completed"], 2, "only node 2 finishes without the forwarder");
        assert!(parse(&sweep_five_node("x", 2))["error"].is_string());
        assert!(parse(&sweep_five_node("1", 0))["error"].is_string());
    }
}
