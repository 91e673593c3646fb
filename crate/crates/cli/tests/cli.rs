use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim"))
        .args(args)
        .output()
        .expect("run sim")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const STATIC_LINE: &str = r#"{
    "duration_us": 20000000,
    "torrents": [{"id": "movie1", "n_pieces": 8}],
    "nodes": [
        {"id": 0, "kind": {"seeder": "movie1"}, "position": {"x": 20, "y": 50}},
        {"id": 1, "kind": "pure_forwarder", "position": {"x": 70, "y": 50}},
        {"id": 2, "kind": {"leecher": "movie1"}, "position": {"x": 120, "y": 50}}
    ]
}"#;

#[test]
fn five_node_writes_three_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&["five-node", "--seed", "3", "--out", p(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trace.csv", "metrics.csv", "positions.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("time_us,node,event,name,detail\n"));
    assert!(!trace.contains('\r'));
    assert!(String::from_utf8_lossy(&out.stdout).contains("2/2 leechers completed"));
}

#[test]
fn seed_range_makes_a_directory_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&["five-node", "--seed", "1..3", "--out", p(dir.path())]);
    assert!(out.status.success());
    for s in 1..=3 {
        assert!(dir.path().join(format!("seed-{s}/trace.csv")).is_file());
    }
}

#[test]
fn run_is_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("line.json");
    std::fs::write(&scenario, STATIC_LINE).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = sim(&["run", "--scenario", p(&scenario), "--seed", "9", "--out", p(d)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["trace.csv", "metrics.csv", "positions.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn oracle_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("line.json");
    std::fs::write(&scenario, STATIC_LINE).unwrap();
    let out = sim(&["oracle", "--scenario", p(&scenario)]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "n2,reachable\n");

    let out = sim(&[
        "sweep", "--scenario", p(&scenario), "--p", "0,1", "--seeds", "1,2", "--out", p(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "p_forward,seed,node,torrent,completed,completion_time_us");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("0,1,n2,movie1,false,"));
    assert!(rows[3].starts_with("1,1,n2,movie1,true,"));
}

#[test]
fn random_field_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&["random-field", "--nodes", "6", "--seed", "2", "--out", p(dir.path())]);
    assert!(out.status.success());
    let positions = std::fs::read_to_string(dir.path().join("positions.csv")).unwrap();
    // one header, 6 nodes sampled every second from 0 to 600 s
    assert_eq!(positions.lines().count(), 1 + 6 * 601);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"duration_us": 1, "torrents": [], "nodes": [], "colour": 1}"#).unwrap();
    let out = sim(&["run", "--scenario", p(&bad), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let missing = dir.path().join("nope.json");
    let out = sim(&["run", "--scenario", p(&missing), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(3));

    let out = sim(&["random-field", "--nodes", "3", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    // output path blocked by a regular file
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = sim(&["five-node", "--out", p(&blocker.join("sub"))]);
    assert_eq!(out.status.code(), Some(3));

    let mut moving = String::from(STATIC_LINE);
    moving = moving.replacen(r#""position": {"x": 20, "y": 50}"#, r#""position": "random""#, 1);
    let f = dir.path().join("random.json");
    std::fs::write(&f, moving).unwrap();
    let out = sim(&["oracle", "--scenario", p(&f)]);
    assert_eq!(out.status.code(), Some(2));
}
