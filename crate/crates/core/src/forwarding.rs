//! Per-node forwarding plane: faces, pending interest table, nonce-based
//! duplicate suppression and the local piece store.
//!
//! Strategy decisions are injected by the caller, so the plane stays
//! agnostic of whether it runs on a pure forwarder or an nTorrent peer.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::bitmap::{Bitmap, PieceIndex};
use crate::engine::{Micros, SimRng, SimTime};
use crate::name::{Name, NameClass, NodeId, Packet, PacketKind, TorrentId};
use crate::strategy::Decision;
use crate::trace::{Code, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FaceId {
    /// The shared wireless medium.
    Broadcast,
    /// The local application.
    App,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardAction {
    ForwardInterest { delay: Micros },
    DeliverToApp,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlaneConfig {
    pub pit_lifetime_us: Micros,
    pub data_response_delay_us: Micros,
    /// Keep overheard Data and answer later interests from it.
    pub cache_data: bool,
}

impl Default for PlaneConfig {
    fn default() -> Self {
        PlaneConfig {
            pit_lifetime_us: 2_000_000,
            data_response_delay_us: 1_000,
            cache_data: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PitEntry {
    pub name: Name,
    pub nonces: BTreeSet<u64>,
    pub in_faces: BTreeSet<FaceId>,
    pub expiry: SimTime,
}

impl PitEntry {
    fn is_live(&self, now: SimTime) -> bool {
        now < self.expiry
    }
}

#[derive(Debug, Clone, Default)]
pub struct Pit {
    entries: BTreeMap<Name, PitEntry>,
}

impl Pit {
    /// Live entry for `name`, if any.
    pub fn get(&self, name: &Name, now: SimTime) -> Option<&PitEntry> {
        self.entries.get(name).filter(|e| e.is_live(now))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &PitEntry> {
        self.entries.values()
    }

    pub fn insert(&mut self, entry: PitEntry) {
        self.entries.insert(entry.name.clone(), entry);
    }
}

/// Pieces this node can produce Data for.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PieceStore {
    torrents: BTreeMap<TorrentId, (Bitmap, u64)>,
}

impl PieceStore {
    pub fn add_torrent(&mut self, torrent: TorrentId, held: Bitmap, piece_bytes: u64) {
        self.torrents.insert(torrent, (held, piece_bytes));
    }

    pub fn bitmap(&self, torrent: &TorrentId) -> Option<&Bitmap> {
        self.torrents.get(torrent).map(|(b, _)| b)
    }

    pub fn insert(&mut self, torrent: &TorrentId, piece: PieceIndex) -> bool {
        match self.torrents.get_mut(torrent) {
            Some((b, _)) if piece < b.n_pieces() => b.set(piece),
            _ => false,
        }
    }

    pub fn holds(&self, torrent: &TorrentId, piece: PieceIndex) -> bool {
        self.bitmap(torrent).is_some_and(|b| b.get(piece))
    }

    /// The Data packet answering `name`, if this store holds it.
    pub fn produce(&self, name: &Name, origin: NodeId) -> Option<Packet> {
        let NameClass::PieceInterest { torrent, piece } = name.classify() else {
            return None;
        };
        let (bits, bytes) = self.torrents.get(&torrent)?;
        bits.get(piece)
            .then(|| Packet::data(name.clone(), *bytes, origin).expect("piece name"))
    }
}

/// Work the node must carry out after a plane operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlaneEffect {
    /// Broadcast immediately.
    Transmit(Packet),
    /// Broadcast at `at` unless the interest is satisfied meanwhile.
    ForwardLater { packet: Packet, at: SimTime },
    /// Emit locally produced Data at `at`.
    ProduceData { packet: Packet, at: SimTime },
    DeliverInterest(Packet),
    DeliverData(Packet),
}

#[derive(Debug, Clone)]
pub struct ForwardingPlane {
    node: NodeId,
    cfg: PlaneConfig,
    max_hops: u32,
    pit: Pit,
    // every (name, nonce) heard within one PIT lifetime
    seen: HashMap<(Name, u64), SimTime>,
    pub store: PieceStore,
    cache: BTreeMap<Name, Packet>,
}

impl ForwardingPlane {
    pub fn new(node: NodeId, cfg: PlaneConfig, max_hops: u32) -> Self {
        ForwardingPlane {
            node,
            cfg,
            max_hops,
            pit: Pit::default(),
            seen: HashMap::new(),
            store: PieceStore::default(),
            cache: BTreeMap::new(),
        }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn pit(&self) -> &Pit {
        &self.pit
    }

    pub fn config(&self) -> &PlaneConfig {
        &self.cfg
    }

    fn is_duplicate(&self, name: &Name, nonce: u64, now: SimTime) -> bool {
        // the lookup key needs an owned name; interests are small
        self.seen
            .get(&(name.clone(), nonce))
            .is_some_and(|&exp| now < exp)
    }

    fn mark_seen(&mut self, name: &Name, nonce: u64, now: SimTime) {
        self.seen.insert((name.clone(), nonce), now + self.cfg.pit_lifetime_us);
    }

    /// Adds `nonce`/`face` to the entry for `name`, creating it if needed.
    /// Returns true when a new entry was created.
    fn record(&mut self, name: &Name, nonce: u64, face: FaceId, now: SimTime, trace: &mut Trace) -> bool {
        let expiry = now + self.cfg.pit_lifetime_us;
        match self.pit.entries.get_mut(name) {
            Some(e) if e.is_live(now) => {
                e.nonces.insert(nonce);
                e.in_faces.insert(face);
                e.expiry = e.expiry.max(expiry);
                false
            }
            stale => {
                if stale.is_some() {
                    trace.record(now, self.node, Code::PitExpire, name, "");
                }
                self.pit.insert(PitEntry {
                    name: name.clone(),
                    nonces: BTreeSet::from([nonce]),
                    in_faces: BTreeSet::from([face]),
                    expiry,
                });
                trace.record(now, self.node, Code::PitNew, name, format!("face={face:?}"));
                true
            }
        }
    }

    /// Sends an interest created by the local application.
    pub fn originate_interest(&mut self, interest: Packet, now: SimTime, trace: &mut Trace) -> Vec<PlaneEffect> {
        let PacketKind::Interest { name, nonce } = &interest.kind else {
            panic!("originate_interest needs an Interest");
        };
        self.mark_seen(name, *nonce, now);
        self.record(name, *nonce, FaceId::App, now, trace);
        vec![PlaneEffect::Transmit(interest)]
    }

    /// Handles an interest received on `from`. `decide` runs the node's
    /// strategy and is only invoked for fresh interests the store cannot
    /// satisfy.
    pub fn on_incoming_interest(
        &mut self,
        interest: &Packet,
        from: FaceId,
        now: SimTime,
        rng: &mut SimRng,
        decide: impl FnOnce(&Packet) -> Decision,
        trace: &mut Trace,
    ) -> Vec<PlaneEffect> {
        let PacketKind::Interest { name, nonce } = &interest.kind else {
            panic!("on_incoming_interest needs an Interest");
        };
        let nonce = *nonce;
        if self.is_duplicate(name, nonce, now) {
            trace.record(now, self.node, Code::DupDrop, name, format!("nonce={nonce}"));
            return vec![];
        }
        self.mark_seen(name, nonce, now);

        let stored = self
            .store
            .produce(name, self.node)
            .or_else(|| self.cache.get(name).map(|d| Packet { origin: self.node, hop_count: 0, ..d.clone() }));
        if let Some(data) = stored {
            let base = self.cfg.data_response_delay_us;
            let spread = base / 10;
            let delay = rng.uniform_u64(base - spread, base + spread);
            trace.record(now, self.node, Code::StoreHit, name, format!("nonce={nonce};delay={delay}"));
            return vec![PlaneEffect::ProduceData { packet: data, at: now + delay }];
        }

        let created = self.record(name, nonce, from, now, trace);
        let decision = decide(interest);
        let mut detail = format!("nonce={nonce};hops={}", interest.hop_count);
        if let ForwardAction::ForwardInterest { delay } = decision.action {
            detail.push_str(&format!(";delay={delay}"));
        }
        trace.record(now, self.node, decision.reason, name, detail);

        let mut action = decision.action;
        if matches!(action, ForwardAction::ForwardInterest { .. }) && interest.hop_count + 1 > self.max_hops {
            trace.record(now, self.node, Code::HopLimit, name, format!("nonce={nonce}"));
            action = ForwardAction::Drop;
        }
        match action {
            ForwardAction::ForwardInterest { delay } => vec![PlaneEffect::ForwardLater {
                packet: interest.next_hop(),
                at: now + delay,
            }],
            ForwardAction::DeliverToApp => vec![PlaneEffect::DeliverInterest(interest.clone())],
            ForwardAction::Drop => {
                if created {
                    self.pit.entries.remove(name);
                    trace.record(now, self.node, Code::PitReject, name, "");
                }
                vec![]
            }
        }
    }

    /// True when a delayed forward of `packet` should still go out.
    pub fn release_forward(&mut self, packet: &Packet, now: SimTime, trace: &mut Trace) -> bool {
        let PacketKind::Interest { name, nonce } = &packet.kind else {
            return false;
        };
        let pending = self.pit.get(name, now).is_some_and(|e| e.nonces.contains(nonce));
        if !pending {
            trace.record(now, self.node, Code::FwdCancel, name, format!("nonce={nonce}"));
        }
        pending
    }

    /// Follows PIT breadcrumbs: deliver locally and/or rebroadcast once.
    pub fn on_incoming_data(&mut self, data: &Packet, now: SimTime, trace: &mut Trace) -> Vec<PlaneEffect> {
        let name = data.name();
        if self.cfg.cache_data {
            self.cache.entry(name.clone()).or_insert_with(|| data.clone());
        }
        let Some(entry) = self.pit.entries.remove(name) else {
            trace.record(now, self.node, Code::DataUnsolicited, name, "");
            return vec![];
        };
        if !entry.is_live(now) {
            trace.record(now, self.node, Code::PitExpire, name, "");
            trace.record(now, self.node, Code::DataUnsolicited, name, "");
            return vec![];
        }
        let faces: Vec<String> = entry.in_faces.iter().map(|f| format!("{f:?}")).collect();
        trace.record(now, self.node, Code::PitSatisfy, name, format!("faces={}", faces.join("+")));
        let mut out = Vec::new();
        if entry.in_faces.contains(&FaceId::App) {
            out.push(PlaneEffect::DeliverData(data.clone()));
        }
        if entry.in_faces.contains(&FaceId::Broadcast) {
            out.push(PlaneEffect::Transmit(data.next_hop()));
        }
        out
    }

    /// Removes every entry with expiry at or before `now`.
    pub fn pit_gc(&mut self, now: SimTime, trace: &mut Trace) -> usize {
        let expired: Vec<Name> = self
            .pit
            .entries
            .values()
            .filter(|e| !e.is_live(now))
            .map(|e| e.name.clone())
            .collect();
        for name in &expired {
            self.pit.entries.remove(name);
            trace.record(now, self.node, Code::PitExpire, name, "");
        }
        self.seen.retain(|_, exp| now < *exp);
        expired.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::{pure_decide, PureForwarderConfig};

    fn name(s: &str) -> Name {
        Name::parse(s).unwrap()
    }

    fn interest(s: &str, nonce: u64) -> Packet {
        Packet::interest(name(s), nonce, NodeId(7))
    }

    fn fwd(delay: Micros) -> impl FnOnce(&Packet) -> Decision {
        move |_| Decision {
            action: ForwardAction::ForwardInterest { delay },
            reason: Code::ProbFwd,
        }
    }

    fn to_app(_: &Packet) -> Decision {
        Decision {
            action: ForwardAction::DeliverToApp,
            reason: Code::OwnApp,
        }
    }

    fn drop(_: &Packet) -> Decision {
        Decision {
            action: ForwardAction::Drop,
            reason: Code::ProbDrop,
        }
    }

    fn plane() -> ForwardingPlane {
        ForwardingPlane::new(NodeId(1), PlaneConfig::default(), 16)
    }

    #[test]
    fn duplicate_nonce_dropped_pit_unchanged() {
        let mut p = plane();
        let mut rng = SimRng::from_key(1);
        let mut tr = Trace::new();
        let i = interest("/ntorrent/movie1/data/1", 5);
        let eff = p.on_incoming_interest(&i, FaceId::Broadcast, 0, &mut rng, fwd(10), &mut tr);
        assert_eq!(eff.len(), 1);
        let before = p.pit().get(i.name(), 1).cloned();
        let eff = p.on_incoming_interest(&i, FaceId::Broadcast, 1, &mut rng, fwd(10), &mut tr);
        assert!(eff.is_empty());
        assert_eq!(p.pit().get(i.name(), 1).cloned(), before);
        assert_eq!(tr.records().last().unwrap().event, Code::DupDrop);
    }

    #[test]
    fn holder_answers_without_forwarding() {
        let mut p = plane();
        let t = TorrentId::new("movie1");
        p.store.add_torrent(t.clone(), Bitmap::full(8), 1024);
        let mut rng = SimRng::from_key(2);
        let mut tr = Trace::new();
        let eff = p.on_incoming_interest(
            &interest("/ntorrent/movie1/data/3", 1),
            FaceId::Broadcast,
            100,
            &mut rng,
            |_| panic!("strategy must not run"),
            &mut tr,
        );
        match &eff[..] {
            [PlaneEffect::ProduceData { packet, at }] => {
                assert_eq!(packet.name().to_string(), "/ntorrent/movie1/data/3");
                assert_eq!(packet.origin, NodeId(1));
                assert!((100 + 900..=100 + 1_100).contains(at));
                assert_eq!(packet.kind, PacketKind::Data { name: name("/ntorrent/movie1/data/3"), payload_bytes: 1024 });
            }
            other => panic!("{other:?}"),
        }
        assert!(p.pit().is_empty());
    }

    #[test]
    fn pure_p1_delay_within_jitter() {
        let cfg = PureForwarderConfig {
            p_forward: 1.0,
            jitter_min: 2_000,
            jitter_max: 10_000,
        };
        for seed in 0..1_000 {
            let mut p = plane();
            let mut rng = SimRng::from_key(seed);
            let mut srng = SimRng::from_key(seed + 10_000);
            let mut tr = Trace::new();
            let i = interest("/ntorrent/movie1/data/0", seed);
            let eff = p.on_incoming_interest(&i, FaceId::Broadcast, 50, &mut rng, |pk| pure_decide(&cfg, pk, &mut srng), &mut tr);
            match &eff[..] {
                [PlaneEffect::ForwardLater { packet, at }] => {
                    assert!((50 + 2_000..=50 + 10_000).contains(at));
                    assert_eq!(packet.hop_count, 1);
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn unsolicited_data_dropped() {
        let mut p = plane();
        let mut tr = Trace::new();
        let d = Packet::data(name("/ntorrent/movie1/data/0"), 10, NodeId(0)).unwrap();
        assert!(p.on_incoming_data(&d, 5, &mut tr).is_empty());
        assert_eq!(tr.records()[0].event, Code::DataUnsolicited);
    }

    #[test]
    fn app_only_breadcrumb_delivers_without_rebroadcast() {
        let mut p = plane();
        let mut tr = Trace::new();
        p.originate_interest(interest("/ntorrent/movie1/data/2", 9), 0, &mut tr);
        let d = Packet::data(name("/ntorrent/movie1/data/2"), 10, NodeId(0)).unwrap();
        let eff = p.on_incoming_data(&d, 10, &mut tr);
        assert_eq!(eff, vec![PlaneEffect::DeliverData(d.clone())]);
        // second copy takes the unsolicited path
        assert!(p.on_incoming_data(&d, 11, &mut tr).is_empty());
        assert_eq!(tr.records().last().unwrap().event, Code::DataUnsolicited);
    }

    #[test]
    fn both_faces_deliver_and_rebroadcast_once() {
        let mut p = plane();
        let mut rng = SimRng::from_key(3);
        let mut tr = Trace::new();
        let n = "/ntorrent/movie1/data/2";
        p.on_incoming_interest(&interest(n, 1), FaceId::Broadcast, 0, &mut rng, to_app, &mut tr);
        p.on_incoming_interest(&interest(n, 2), FaceId::Broadcast, 0, &mut rng, to_app, &mut tr);
        p.originate_interest(interest(n, 3), 1, &mut tr);
        let d = Packet::data(name(n), 10, NodeId(0)).unwrap();
        let mut eff = p.on_incoming_data(&d, 10, &mut tr);
        eff.extend(p.on_incoming_data(&d, 11, &mut tr));
        let tx = eff.iter().filter(|e| matches!(e, PlaneEffect::Transmit(_))).count();
        let local = eff.iter().filter(|e| matches!(e, PlaneEffect::DeliverData(_))).count();
        assert_eq!((tx, local), (1, 1));
    }

    #[test]
    fn dropped_fresh_interest_leaves_no_entry() {
        let mut p = plane();
        let mut rng = SimRng::from_key(4);
        let mut tr = Trace::new();
        let i = interest("/ntorrent/movie1/data/0", 1);
        assert!(p.on_incoming_interest(&i, FaceId::Broadcast, 0, &mut rng, drop, &mut tr).is_empty());
        assert!(p.pit().is_empty());
        // same nonce is still recognised as a duplicate
        p.on_incoming_interest(&i, FaceId::Broadcast, 1, &mut rng, fwd(1), &mut tr);
        assert_eq!(tr.records().last().unwrap().event, Code::DupDrop);
    }

    #[test]
    fn hop_limit_suppresses_forward() {
        let mut p = ForwardingPlane::new(NodeId(1), PlaneConfig::default(), 2);
        let mut rng = SimRng::from_key(5);
        let mut tr = Trace::new();
        let mut i = interest("/ntorrent/movie1/data/0", 1);
        i.hop_count = 2;
        assert!(p.on_incoming_interest(&i, FaceId::Broadcast, 0, &mut rng, fwd(1), &mut tr).is_empty());
        assert!(tr.iter().any(|r| r.event == Code::HopLimit));
    }

    #[test]
    fn delayed_forward_cancelled_once_satisfied() {
        let mut p = plane();
        let mut rng = SimRng::from_key(6);
        let mut tr = Trace::new();
        let i = interest("/ntorrent/movie1/data/0", 1);
        let eff = p.on_incoming_interest(&i, FaceId::Broadcast, 0, &mut rng, fwd(5_000), &mut tr);
        let PlaneEffect::ForwardLater { packet, .. } = &eff[0] else { panic!() };
        assert!(p.release_forward(packet, 4_000, &mut tr));
        let d = Packet::data(name("/ntorrent/movie1/data/0"), 1, NodeId(0)).unwrap();
        p.on_incoming_data(&d, 4_500, &mut tr);
        assert!(!p.release_forward(packet, 5_000, &mut tr));
    }

    #[test]
    fn pit_gc_examples() {
        let mut tr = Trace::new();
        let mut p = plane();
        assert_eq!(p.pit_gc(0, &mut tr), 0);

        let life = p.config().pit_lifetime_us;
        p.originate_interest(interest("/a", 1), 0, &mut tr);
        assert_eq!(p.pit_gc(life, &mut tr), 1, "expiry == now is removed");

        let mut p = plane();
        let mut tr = Trace::new();
        for (k, t) in [(0, 0), (1, 0), (2, 5), (3, 5), (4, 5)] {
            p.originate_interest(interest(&format!("/x{k}"), k), t, &mut tr);
        }
        assert_eq!(p.pit_gc(life + 1, &mut tr), 2);
        assert_eq!(p.pit().len(), 3);
    }

    #[test]
    fn cache_serves_overheard_data_when_enabled() {
        let cfg = PlaneConfig {
            cache_data: true,
            ..Default::default()
        };
        let mut p = ForwardingPlane::new(NodeId(3), cfg, 16);
        let mut rng = SimRng::from_key(7);
        let mut tr = Trace::new();
        let d = Packet::data(name("/ntorrent/movie1/data/4"), 64, NodeId(0)).unwrap();
        p.on_incoming_data(&d, 0, &mut tr);
        let eff = p.on_incoming_interest(&interest("/ntorrent/movie1/data/4", 1), FaceId::Broadcast, 1, &mut rng, drop, &mut tr);
        assert!(matches!(&eff[..], [PlaneEffect::ProduceData { packet, .. }] if packet.origin == NodeId(3)));
    }
}
