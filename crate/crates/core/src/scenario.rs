//! Scenario files, validation and the built-in scenario builders.
//!
//! Scenario files are JSON objects. Every key outside the documented set is
//! rejected; omitted optional keys take the defaults listed in the README.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app::AppConfig;
use crate::engine::{derive_stream, Micros, Purpose, SimTime, SECOND};
use crate::forwarding::PlaneConfig;
use crate::mobility::{GridBounds, Position, RadioConfig};
use crate::name::{Name, NodeId, TorrentId};
use crate::strategy::{DEFAULT_JITTER_MAX, DEFAULT_JITTER_MIN, DEFAULT_T_MEM};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("random field needs at least 5 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Seeder(TorrentId),
    Leecher(TorrentId),
    PureForwarder,
}

impl NodeKind {
    pub fn torrent(&self) -> Option<&TorrentId> {
        match self {
            NodeKind::Seeder(t) | NodeKind::Leecher(t) => Some(t),
            NodeKind::PureForwarder => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            NodeKind::Seeder(_) => "seeder",
            NodeKind::Leecher(_) => "leecher",
            NodeKind::PureForwarder => "pure_forwarder",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "PlacementRepr", into = "PlacementRepr")]
pub enum Placement {
    #[default]
    Random,
    At(Position),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PlacementRepr {
    Word(String),
    At(Position),
}

impl TryFrom<PlacementRepr> for Placement {
    type Error = String;

    fn try_from(r: PlacementRepr) -> Result<Self, Self::Error> {
        match r {
            PlacementRepr::Word(w) if w == "random" => Ok(Placement::Random),
            PlacementRepr::Word(w) => Err(format!("position must be \"random\" or {{x, y}}, got {w:?}")),
            PlacementRepr::At(p) => Ok(Placement::At(p)),
        }
    }
}

impl From<Placement> for PlacementRepr {
    fn from(p: Placement) -> Self {
        match p {
            Placement::Random => PlacementRepr::Word("random".into()),
            Placement::At(p) => PlacementRepr::At(p),
        }
    }
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mobility {
    #[default]
    Static,
    RandomWalk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default)]
    pub position: Placement,
    #[serde(default)]
    pub mobility: Mobility,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorrentSpec {
    pub id: TorrentId,
    #[serde(default = "default_n_pieces")]
    pub n_pieces: u32,
    #[serde(default = "default_piece_bytes")]
    pub piece_bytes: u64,
}

fn default_n_pieces() -> u32 {
    32
}

fn default_piece_bytes() -> u64 {
    1024
}

impl TorrentSpec {
    pub fn new(id: &str) -> Self {
        TorrentSpec {
            id: TorrentId::new(id),
            n_pieces: default_n_pieces(),
            piece_bytes: default_piece_bytes(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyParams {
    pub p_forward: f64,
    pub jitter_min_us: Micros,
    pub jitter_max_us: Micros,
    pub t_mem_us: Micros,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            p_forward: 1.0,
            jitter_min_us: DEFAULT_JITTER_MIN,
            jitter_max_us: DEFAULT_JITTER_MAX,
            t_mem_us: DEFAULT_T_MEM,
        }
    }
}

fn default_max_hops() -> u32 {
    16
}

fn default_sample_interval() -> Micros {
    SECOND
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub grid: GridBounds,
    #[serde(default)]
    pub radio: RadioConfig,
    pub duration_us: SimTime,
    pub torrents: Vec<TorrentSpec>,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub strategy: StrategyParams,
    #[serde(default)]
    pub app: AppConfig,
    #[serde(default)]
    pub forwarding: PlaneConfig,
    #[serde(default = "default_max_hops")]
    pub max_hops: u32,
    #[serde(default)]
    pub collision_mode: bool,
    #[serde(default = "default_sample_interval")]
    pub position_sample_interval_us: Micros,
}

impl ScenarioConfig {
    /// A scenario with default parameters and no nodes.
    pub fn empty(duration_us: SimTime, torrents: Vec<TorrentSpec>) -> Self {
        ScenarioConfig {
            grid: GridBounds::default(),
            radio: RadioConfig::default(),
            duration_us,
            torrents,
            nodes: vec![],
            strategy: StrategyParams::default(),
            app: AppConfig::default(),
            forwarding: PlaneConfig::default(),
            max_hops: default_max_hops(),
            collision_mode: false,
            position_sample_interval_us: default_sample_interval(),
        }
    }

    pub fn from_json(text: &str) -> Result<ScenarioConfig, ScenarioError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn torrent(&self, id: &TorrentId) -> Option<&TorrentSpec> {
        self.torrents.iter().find(|t| &t.id == id)
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn leechers(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| matches!(n.kind, NodeKind::Leecher(_)))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Validation(m));
        if !(self.grid.width > 0.0 && self.grid.height > 0.0) || !self.grid.width.is_finite() || !self.grid.height.is_finite() {
            return invalid(format!("grid must be positive and finite, got {:?}", self.grid));
        }
        if self.radio.range <= 0.0 || !self.radio.range.is_finite() {
            return invalid(format!("radio range must be positive, got {}", self.radio.range));
        }
        if self.radio.one_hop_delay_us == 0 {
            return invalid("radio one_hop_delay_us must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.radio.loss_prob) {
            return invalid(format!("radio loss_prob {} outside [0, 1]", self.radio.loss_prob));
        }
        let mut torrents = BTreeSet::new();
        for t in &self.torrents {
            if Name::from_components(["ntorrent", t.id.as_str()]).is_err() || t.id.as_str() == "beacon" {
                return invalid(format!("torrent id {:?} is not a usable name component", t.id.as_str()));
            }
            if !torrents.insert(&t.id) {
                return invalid(format!("duplicate torrent id {}", t.id));
            }
            if t.n_pieces == 0 {
                return invalid(format!("torrent {} must have at least one piece", t.id));
            }
        }
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id) {
                return invalid(format!("duplicate node id {}", n.id.0));
            }
            if let Some(t) = n.kind.torrent() {
                if !torrents.contains(t) {
                    return invalid(format!("node {} references undeclared torrent {t}", n.id.0));
                }
            }
            if let Placement::At(p) = n.position {
                if !self.grid.contains(&p) {
                    return invalid(format!("node {} position ({}, {}) outside the grid", n.id.0, p.x, p.y));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.strategy.p_forward) {
            return invalid(format!("strategy p_forward {} outside [0, 1]", self.strategy.p_forward));
        }
        if self.strategy.jitter_min_us > self.strategy.jitter_max_us {
            return invalid("strategy jitter_min_us exceeds jitter_max_us".into());
        }
        self.app.validate().map_err(ScenarioError::Validation)?;
        if self.forwarding.pit_lifetime_us == 0 {
            return invalid("forwarding pit_lifetime_us must be positive".into());
        }
        if self.max_hops == 0 {
            return invalid("max_hops must be at least 1".into());
        }
        if self.position_sample_interval_us == 0 {
            return invalid("position_sample_interval_us must be positive".into());
        }
        Ok(())
    }

    /// Copy with every `random` placement replaced by a draw from the
    /// placement stream of `seed`.
    pub fn resolve_positions(&self, seed: u64) -> ScenarioConfig {
        let mut out = self.clone();
        for n in &mut out.nodes {
            if n.position == Placement::Random {
                let mut rng = derive_stream(seed, Purpose::Placement, n.id);
                n.position = Placement::At(self.grid.random_position(&mut rng));
            }
        }
        out
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_json(&text)
}

pub const MOVIE1: &str = "movie1";
pub const MOVIE2: &str = "movie2";

fn two_movies() -> Vec<TorrentSpec> {
    vec![TorrentSpec::new(MOVIE1), TorrentSpec::new(MOVIE2)]
}

/// Static nodes on a horizontal line, `spacing` metres apart, in the
/// order given.
pub fn line_scenario(kinds: &[NodeKind], spacing: f64, duration_us: SimTime, torrents: Vec<TorrentSpec>) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::empty(duration_us, torrents);
    let y = cfg.grid.height / 2.0;
    let x0 = 25.0;
    let needed = x0 * 2.0 + spacing * kinds.len().saturating_sub(1) as f64;
    if needed > cfg.grid.width {
        cfg.grid.width = needed;
    }
    cfg.nodes = kinds
        .iter()
        .enumerate()
        .map(|(i, k)| NodeSpec {
            id: NodeId(i as u32),
            kind: k.clone(),
            position: Placement::At(Position::new(x0 + spacing * i as f64, y)),
            mobility: Mobility::Static,
        })
        .collect();
    cfg
}

/// Five static nodes on a 50 m-spaced line: node 0 seeds movie1, node 4
/// seeds movie2, node 2 wants movie1, node 1 wants movie2, node 3 is a
/// pure forwarder.
pub fn build_five_node() -> ScenarioConfig {
    let m1 = TorrentId::new(MOVIE1);
    let m2 = TorrentId::new(MOVIE2);
    line_scenario(
        &[
            NodeKind::Seeder(m1.clone()),
            NodeKind::Leecher(m2.clone()),
            NodeKind::Leecher(m1),
            NodeKind::PureForwarder,
            NodeKind::Seeder(m2),
        ],
        50.0,
        120 * SECOND,
        two_movies(),
    )
}

/// `n` random-walking nodes at uniform random positions: one seeder per
/// movie, `n / 3` leechers per movie, the rest pure forwarders.
pub fn build_random_field(n_nodes: usize, seed: u64) -> Result<ScenarioConfig, ScenarioError> {
    if n_nodes < 5 {
        return Err(ScenarioError::TooFewNodes(n_nodes));
    }
    let m1 = TorrentId::new(MOVIE1);
    let m2 = TorrentId::new(MOVIE2);
    let per_movie = n_nodes / 3;
    let mut kinds = vec![NodeKind::Seeder(m1.clone()), NodeKind::Seeder(m2.clone())];
    kinds.extend(std::iter::repeat_n(NodeKind::Leecher(m1), per_movie));
    kinds.extend(std::iter::repeat_n(NodeKind::Leecher(m2), per_movie));
    kinds.resize(n_nodes, NodeKind::PureForwarder);

    let mut cfg = ScenarioConfig::empty(600 * SECOND, two_movies());
    cfg.nodes = kinds
        .into_iter()
        .enumerate()
        .map(|(i, kind)| NodeSpec {
            id: NodeId(i as u32),
            kind,
            position: Placement::Random,
            mobility: Mobility::RandomWalk,
        })
        .collect();
    Ok(cfg.resolve_positions(seed))
}
