//! Discrete-event simulator for nTorrent-style content dissemination over
//! a wireless ad hoc network of named-data forwarders.
//!
//! A run is fully determined by its [`ScenarioConfig`] and a 64-bit seed:
//!
//! ```
//! use adhoc_ntorrent::{build_five_node, run_scenario};
//!
//! let out = run_scenario(&build_five_node(), 7);
//! assert!(out.metrics.all_completed());
//! ```

pub mod app;
pub mod bitmap;
pub mod engine;
pub mod forwarding;
pub mod metrics;
pub mod mobility;
pub mod name;
pub mod oracle;
pub mod scenario;
pub mod sim;
pub mod strategy;
pub mod sweep;
pub mod trace;

pub use app::{compute_missing, AppConfig, NtorrentApp};
pub use bitmap::{Bitmap, PieceIndex};
pub use engine::{derive_stream, Purpose, SimRng, SimTime, SECOND};
pub use forwarding::{ForwardingPlane, PlaneConfig};
pub use metrics::{LeecherOutcome, MetricsSummary};
pub use mobility::{GridBounds, Position, RadioConfig};
pub use name::{classify, parse_name, Name, NameClass, NameError, NodeId, Packet, TorrentId};
pub use oracle::{reachability_oracle, OracleError};
pub use scenario::{
    build_five_node, build_random_field, line_scenario, load_scenario, NodeKind, ScenarioConfig, ScenarioError,
    TorrentSpec,
};
pub use sim::{run_scenario, write_run, RunOutput};
pub use strategy::{peer_decide, pure_decide, OverheardNameTable};
pub use sweep::{censored_mean, sweep, SweepRow};
pub use trace::{Code, TraceRecord};
