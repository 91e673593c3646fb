//! The simulated world: nodes, the shared radio medium and event dispatch.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::app::{Initial, NtorrentApp, PeerRole};
use crate::engine::{derive_stream, run_until, Event, EventQueue, Handler, Purpose, RunReport, SimRng, SimTime, Target, SECOND};
use crate::forwarding::{FaceId, ForwardingPlane, PlaneEffect};
use crate::metrics::MetricsSummary;
use crate::mobility::{fan_out, position_at, walk_epoch, Position, WalkState};
use crate::name::{NameClass, NodeId, Packet, PacketKind};
use crate::scenario::{Mobility, NodeKind, Placement, ScenarioConfig};
use crate::strategy::{peer_decide, pure_decide, OverheardNameTable, PeerStrategyConfig, PureForwarderConfig};
use crate::trace::{Code, Trace, TraceError, TraceRecord};

#[derive(Debug, Clone)]
pub enum TimerKind {
    Beacon,
    Retry,
    /// Delayed interest rebroadcast chosen by the strategy.
    Forward(Packet),
    /// Locally produced Data, emitted after the response delay.
    Produce(Packet),
    PositionSample,
}

#[derive(Debug, Clone)]
pub enum SimEvent {
    PacketDelivery { packet: Packet, from: NodeId, reception: u64 },
    Timer(TimerKind),
    MobilityEpoch,
    GcTick,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionSample {
    pub time_us: SimTime,
    pub node: NodeId,
    pub position: Position,
    pub speed: f64,
    pub heading: f64,
}

enum Behaviour {
    Pure(PureForwarderConfig),
    Peer {
        strategy: PeerStrategyConfig,
        table: OverheardNameTable,
        app: Box<NtorrentApp>,
        piece_bytes: u64,
    },
}

struct SimNode {
    id: NodeId,
    kind: NodeKind,
    plane: ForwardingPlane,
    behaviour: Behaviour,
    strategy_rng: SimRng,
    app_rng: SimRng,
    medium_rng: SimRng,
    mobility_rng: SimRng,
    mobile: bool,
    anchor: Position,
    anchor_time: SimTime,
    walk: WalkState,
    // arrival times of receptions scheduled at this node (collision mode)
    arrivals: Vec<(SimTime, u64)>,
}

impl SimNode {
    fn position(&self, now: SimTime, cfg: &ScenarioConfig) -> Position {
        position_at(self.anchor, &self.walk, self.anchor_time, now, &cfg.grid)
    }
}

const GC_INTERVAL: SimTime = SECOND;

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub trace: Vec<TraceRecord>,
    pub positions: Vec<PositionSample>,
    pub metrics: MetricsSummary,
}

pub struct World {
    cfg: ScenarioConfig,
    nodes: Vec<SimNode>,
    index: HashMap<NodeId, usize>,
    trace: Trace,
    positions: Vec<PositionSample>,
    next_reception: u64,
}

impl World {
    /// Builds the world. `random` placements are drawn from `seed`.
    pub fn new(cfg: &ScenarioConfig, seed: u64) -> World {
        let cfg = cfg.resolve_positions(seed);
        let mut trace = Trace::new();
        let nodes: Vec<SimNode> = cfg
            .nodes
            .iter()
            .map(|desc| {
                let id = desc.id;
                let mut plane = ForwardingPlane::new(id, cfg.forwarding, cfg.max_hops);
                let behaviour = match &desc.kind {
                    NodeKind::PureForwarder => Behaviour::Pure(PureForwarderConfig {
                        p_forward: cfg.strategy.p_forward,
                        jitter_min: cfg.strategy.jitter_min_us,
                        jitter_max: cfg.strategy.jitter_max_us,
                    }),
                    NodeKind::Seeder(t) | NodeKind::Leecher(t) => {
                        let torrent = cfg.torrent(t).expect("validated torrent");
                        let initial = if matches!(desc.kind, NodeKind::Seeder(_)) {
                            Initial::Seeder
                        } else {
                            Initial::Leecher
                        };
                        let app = NtorrentApp::new(
                            id,
                            PeerRole {
                                torrent: t.clone(),
                                initial,
                            },
                            torrent.n_pieces,
                            cfg.app,
                        );
                        plane
                            .store
                            .add_torrent(t.clone(), app.state().have.clone(), torrent.piece_bytes);
                        Behaviour::Peer {
                            strategy: PeerStrategyConfig {
                                own_torrent: t.clone(),
                                t_mem: cfg.strategy.t_mem_us,
                                jitter_min: cfg.strategy.jitter_min_us,
                                jitter_max: cfg.strategy.jitter_max_us,
                            },
                            table: OverheardNameTable::new(cfg.strategy.t_mem_us),
                            app: Box::new(app),
                            piece_bytes: torrent.piece_bytes,
                        }
                    }
                };
                let Placement::At(anchor) = desc.position else {
                    unreachable!("positions resolved above")
                };
                let detail = match desc.kind.torrent() {
                    Some(t) => format!("kind={};torrent={t}", desc.kind.label()),
                    None => format!("kind={}", desc.kind.label()),
                };
                trace.record(0, id, Code::Node, "", detail);
                SimNode {
                    id,
                    kind: desc.kind.clone(),
                    plane,
                    behaviour,
                    strategy_rng: derive_stream(seed, Purpose::Strategy, id),
                    app_rng: derive_stream(seed, Purpose::App, id),
                    medium_rng: derive_stream(seed, Purpose::Medium, id),
                    mobility_rng: derive_stream(seed, Purpose::Mobility, id),
                    mobile: desc.mobility == Mobility::RandomWalk,
                    anchor,
                    anchor_time: 0,
                    walk: WalkState::stationary(),
                    arrivals: Vec::new(),
                }
            })
            .collect();
        let index = nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        World {
            cfg,
            nodes,
            index,
            trace,
            positions: Vec::new(),
            next_reception: 0,
        }
    }

    /// Seeds the queue with every node's initial activity.
    pub fn boot(&self, queue: &mut EventQueue<SimEvent>) {
        let end = self.cfg.duration_us;
        if end > 0 {
            for n in self.nodes.iter().filter(|n| n.mobile) {
                queue.schedule_in(0, Target::Node(n.id), SimEvent::MobilityEpoch);
            }
            queue.schedule_in(0, Target::World, SimEvent::Timer(TimerKind::PositionSample));
            for n in &self.nodes {
                if let Behaviour::Peer { app, .. } = &n.behaviour {
                    queue.schedule_in(0, Target::Node(n.id), SimEvent::Timer(TimerKind::Beacon));
                    if !app.is_complete() {
                        queue.schedule_in(
                            app.config().retry_check_interval(),
                            Target::Node(n.id),
                            SimEvent::Timer(TimerKind::Retry),
                        );
                    }
                }
            }
            queue.schedule_in(GC_INTERVAL, Target::World, SimEvent::GcTick);
        }
        queue.schedule_in(end, Target::World, SimEvent::End);
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn positions(&self) -> &[PositionSample] {
        &self.positions
    }

    pub fn into_output(self, report: RunReport) -> RunOutput {
        let metrics = MetricsSummary::from_trace(self.trace.records());
        RunOutput {
            report,
            trace: self.trace.into_records(),
            positions: self.positions,
            metrics,
        }
    }

    fn transmit(&mut self, queue: &mut EventQueue<SimEvent>, idx: usize, packet: Packet) {
        let now = queue.now();
        let sender = self.nodes[idx].id;
        match &packet.kind {
            PacketKind::Interest { name, nonce } => self.trace.record(
                now,
                sender,
                Code::InterestTx,
                name,
                format!("nonce={nonce};hops={};origin={}", packet.hop_count, packet.origin),
            ),
            PacketKind::Data { name, payload_bytes } => {
                let kind = if packet.origin == sender { "origin" } else { "relay" };
                self.trace.record(
                    now,
                    sender,
                    Code::DataTx,
                    name,
                    format!("kind={kind};bytes={payload_bytes};hops={}", packet.hop_count),
                )
            }
        }
        let positions: Vec<Position> = self.nodes.iter().map(|n| n.position(now, &self.cfg)).collect();
        let receivers = fan_out(idx, &positions, &self.cfg.radio, &mut self.nodes[idx].medium_rng);
        let arrival = now + self.cfg.radio.one_hop_delay_us;
        for r in receivers {
            let reception = self.next_reception;
            self.next_reception += 1;
            if self.cfg.collision_mode {
                self.nodes[r].arrivals.push((arrival, reception));
            }
            queue.schedule_in(
                self.cfg.radio.one_hop_delay_us,
                Target::Node(self.nodes[r].id),
                SimEvent::PacketDelivery {
                    packet: packet.clone(),
                    from: sender,
                    reception,
                },
            );
        }
    }

    fn collided(&mut self, idx: usize, now: SimTime, reception: u64) -> bool {
        let window = self.cfg.radio.one_hop_delay_us;
        let node = &mut self.nodes[idx];
        let hit = node
            .arrivals
            .iter()
            .any(|&(t, id)| id != reception && t.abs_diff(now) < window);
        node.arrivals.retain(|&(t, _)| t + window > now);
        hit
    }

    fn deliver(&mut self, queue: &mut EventQueue<SimEvent>, idx: usize, packet: Packet, reception: u64) {
        let now = queue.now();
        if self.cfg.collision_mode && self.collided(idx, now, reception) {
            self.trace
                .record(now, self.nodes[idx].id, Code::RxLost, packet.name(), "reason=collision");
            return;
        }
        let effects = if packet.is_interest() {
            let node = &mut self.nodes[idx];
            let SimNode {
                plane,
                behaviour,
                strategy_rng,
                app_rng,
                ..
            } = node;
            match behaviour {
                Behaviour::Pure(cfg) => plane.on_incoming_interest(
                    &packet,
                    FaceId::Broadcast,
                    now,
                    app_rng,
                    |p| pure_decide(cfg, p, strategy_rng),
                    &mut self.trace,
                ),
                Behaviour::Peer { strategy, table, .. } => plane.on_incoming_interest(
                    &packet,
                    FaceId::Broadcast,
                    now,
                    app_rng,
                    |p| peer_decide(strategy, table, p, now, strategy_rng),
                    &mut self.trace,
                ),
            }
        } else {
            self.nodes[idx].plane.on_incoming_data(&packet, now, &mut self.trace)
        };
        self.apply(queue, idx, effects);
    }

    fn apply(&mut self, queue: &mut EventQueue<SimEvent>, idx: usize, effects: Vec<PlaneEffect>) {
        let id = self.nodes[idx].id;
        for effect in effects {
            match effect {
                PlaneEffect::Transmit(p) => self.transmit(queue, idx, p),
                PlaneEffect::ForwardLater { packet, at } => {
                    queue
                        .schedule(at, Target::Node(id), SimEvent::Timer(TimerKind::Forward(packet)))
                        .expect("future forward");
                }
                PlaneEffect::ProduceData { packet, at } => {
                    queue
                        .schedule(at, Target::Node(id), SimEvent::Timer(TimerKind::Produce(packet)))
                        .expect("future production");
                }
                PlaneEffect::DeliverInterest(p) => self.app_interest(queue, idx, p),
                PlaneEffect::DeliverData(p) => self.app_data(queue, idx, p),
            }
        }
    }

    fn originate(&mut self, queue: &mut EventQueue<SimEvent>, idx: usize, interests: Vec<Packet>) {
        let now = queue.now();
        for p in interests {
            let effects = self.nodes[idx].plane.originate_interest(p, now, &mut self.trace);
            self.apply(queue, idx, effects);
        }
    }

    fn app_interest(&mut self, queue: &mut EventQueue<SimEvent>, idx: usize, interest: Packet) {
        let now = queue.now();
        let node = &mut self.nodes[idx];
        let Behaviour::Peer { app, piece_bytes, .. } = &mut node.behaviour else {
            return;
        };
        let rng = &mut node.app_rng;
        let out = match interest.name().classify() {
            NameClass::Beacon { node: sender } => app.on_receive_beacon(sender, now, rng, &mut self.trace),
            NameClass::BitmapAnnounce { torrent, node: sender, bits } if &torrent == app.torrent() => {
                app.on_receive_bitmap(sender, &bits, now, rng, &mut self.trace)
            }
            NameClass::PieceInterest { torrent, piece } if &torrent == app.torrent() => {
                if let Some(data) = app.on_receive_piece_interest(piece, *piece_bytes) {
                    queue.schedule_in(0, Target::Node(node.id), SimEvent::Timer(TimerKind::Produce(data)));
                }
                vec![]
            }
            _ => vec![],
        };
        self.originate(queue, idx, out);
    }

    fn app_data(&mut self, queue: &mut EventQueue<SimEvent>, idx: usize, data: Packet) {
        let now = queue.now();
        let NameClass::PieceInterest { torrent, piece } = data.name().classify() else {
            return;
        };
        let node = &mut self.nodes[idx];
        let Behaviour::Peer { app, .. } = &mut node.behaviour else {
            return;
        };
        if &torrent != app.torrent() {
            return;
        }
        let out = app.on_receive_piece(piece, now, &mut node.app_rng, &mut self.trace);
        node.plane.store.insert(&torrent, piece);
        self.originate(queue, idx, out);
    }

    fn timer(&mut self, queue: &mut EventQueue<SimEvent>, idx: usize, kind: TimerKind) {
        let now = queue.now();
        let id = self.nodes[idx].id;
        match kind {
            TimerKind::Beacon => {
                let node = &mut self.nodes[idx];
                let Behaviour::Peer { app, .. } = &mut node.behaviour else {
                    return;
                };
                let (out, next) = app.on_beacon_timer(now, &mut node.app_rng, &mut self.trace);
                if let Some(next) = next {
                    queue
                        .schedule(next, Target::Node(id), SimEvent::Timer(TimerKind::Beacon))
                        .expect("future beacon");
                }
                self.originate(queue, idx, out);
            }
            TimerKind::Retry => {
                let node = &mut self.nodes[idx];
                let Behaviour::Peer { app, .. } = &mut node.behaviour else {
                    return;
                };
                let out = app.on_retry_timer(now, &mut node.app_rng, &mut self.trace);
                if !app.is_complete() {
                    queue
                        .schedule(app.next_retry_check(now), Target::Node(id), SimEvent::Timer(TimerKind::Retry))
                        .expect("future retry");
                }
                self.originate(queue, idx, out);
            }
            TimerKind::Forward(packet) => {
                if self.nodes[idx].plane.release_forward(&packet, now, &mut self.trace) {
                    self.transmit(queue, idx, packet);
                }
            }
            TimerKind::Produce(packet) => self.transmit(queue, idx, packet),
            TimerKind::PositionSample => unreachable!("world timer"),
        }
    }

    fn mobility_epoch(&mut self, queue: &mut EventQueue<SimEvent>, idx: usize) {
        let now = queue.now();
        let cfg = &self.cfg;
        let node = &mut self.nodes[idx];
        node.anchor = node.position(now, cfg);
        node.anchor_time = now;
        node.walk = walk_epoch(&node.walk, &mut node.mobility_rng, now);
        self.trace.record(
            now,
            node.id,
            Code::Epoch,
            "",
            format!(
                "speed={:.6};heading={:.6};x={:.3};y={:.3}",
                node.walk.speed, node.walk.heading, node.anchor.x, node.anchor.y
            ),
        );
        queue
            .schedule(node.walk.next_change, Target::Node(node.id), SimEvent::MobilityEpoch)
            .expect("future epoch");
    }

    fn sample_positions(&mut self, queue: &mut EventQueue<SimEvent>) {
        let now = queue.now();
        for n in &self.nodes {
            self.positions.push(PositionSample {
                time_us: now,
                node: n.id,
                position: n.position(now, &self.cfg),
                speed: n.walk.speed,
                heading: n.walk.heading,
            });
        }
        queue.schedule_in(
            self.cfg.position_sample_interval_us,
            Target::World,
            SimEvent::Timer(TimerKind::PositionSample),
        );
    }

    fn gc(&mut self, queue: &mut EventQueue<SimEvent>) {
        let now = queue.now();
        for n in &mut self.nodes {
            n.plane.pit_gc(now, &mut self.trace);
            if let Behaviour::Peer { table, .. } = &mut n.behaviour {
                table.gc(now);
            }
        }
        queue.schedule_in(GC_INTERVAL, Target::World, SimEvent::GcTick);
    }

    pub fn node_kind(&self, id: NodeId) -> Option<&NodeKind> {
        self.index.get(&id).map(|&i| &self.nodes[i].kind)
    }

    pub fn app(&self, id: NodeId) -> Option<&NtorrentApp> {
        match &self.nodes[*self.index.get(&id)?].behaviour {
            Behaviour::Peer { app, .. } => Some(app),
            Behaviour::Pure(_) => None,
        }
    }

    pub fn overheard(&self, id: NodeId) -> Option<&OverheardNameTable> {
        match &self.nodes[*self.index.get(&id)?].behaviour {
            Behaviour::Peer { table, .. } => Some(table),
            Behaviour::Pure(_) => None,
        }
    }
}

impl Handler<SimEvent> for World {
    fn handle(&mut self, queue: &mut EventQueue<SimEvent>, event: Event<SimEvent>) {
        match (event.target, event.kind) {
            (Target::World, SimEvent::Timer(TimerKind::PositionSample)) => self.sample_positions(queue),
            (Target::World, SimEvent::GcTick) => self.gc(queue),
            (Target::World, SimEvent::End) => {}
            (Target::Node(id), kind) => {
                let idx = self.index[&id];
                match kind {
                    SimEvent::PacketDelivery { packet, reception, .. } => self.deliver(queue, idx, packet, reception),
                    SimEvent::Timer(t) => self.timer(queue, idx, t),
                    SimEvent::MobilityEpoch => self.mobility_epoch(queue, idx),
                    SimEvent::GcTick | SimEvent::End => {}
                }
            }
            (Target::World, other) => unreachable!("unexpected world event {other:?}"),
        }
    }
}

/// Runs `cfg` to its duration with `master_seed`.
pub fn run_scenario(cfg: &ScenarioConfig, master_seed: u64) -> RunOutput {
    let mut world = World::new(cfg, master_seed);
    let mut queue = EventQueue::new();
    world.boot(&mut queue);
    let report = run_until(&mut queue, &mut world, cfg.duration_us).expect("fresh queue");
    world.into_output(report)
}

pub fn write_positions<W: Write>(samples: &[PositionSample], out: W) -> Result<(), TraceError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["time_us", "node", "x", "y", "speed", "heading"])?;
    for s in samples {
        w.write_record([
            s.time_us.to_string(),
            s.node.to_string(),
            format!("{:.3}", s.position.x),
            format!("{:.3}", s.position.y),
            format!("{:.6}", s.speed),
            format!("{:.6}", s.heading),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_positions_csv(samples: &[PositionSample], path: &Path) -> Result<(), TraceError> {
    let f = std::fs::File::create(path)?;
    write_positions(samples, std::io::BufWriter::new(f))
}

/// Writes `trace.csv`, `metrics.csv` and `positions.csv` into `dir`.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<(), TraceError> {
    std::fs::create_dir_all(dir)?;
    crate::trace::write_trace_csv(&out.trace, &dir.join("trace.csv"))?;
    crate::metrics::write_metrics_csv(&out.metrics, &dir.join("metrics.csv"))?;
    write_positions_csv(&out.positions, &dir.join("positions.csv"))?;
    Ok(())
}
