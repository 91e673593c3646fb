//! The nTorrent peer application.
//!
//! Peers beacon periodically. A beacon from a neighbour is answered with the
//! peer's bitmap; bitmaps of the peer's own torrent feed `known_remote`, from
//! which missing pieces are requested through a bounded pipeline. Pending
//! requests are retried with fresh nonces.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bitmap::{Bitmap, PieceIndex};
use crate::engine::{Micros, SimRng, SimTime};
use crate::name::{Name, NameError, NodeId, Packet, TorrentId};
use crate::trace::{Code, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub beacon_interval_us: Micros,
    pub pipeline_window: u32,
    pub interest_retry_timeout_us: Micros,
    /// `None` retries forever.
    pub max_retries: Option<u32>,
    /// Minimum spacing of bitmaps sent in reply to the same remote node.
    pub bitmap_min_gap_us: Micros,
    /// Completed leechers keep beaconing.
    pub keep_seeding: bool,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            beacon_interval_us: 2_000_000,
            pipeline_window: 4,
            interest_retry_timeout_us: 1_000_000,
            max_retries: None,
            bitmap_min_gap_us: 500_000,
            keep_seeding: false,
        }
    }
}

impl AppConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.beacon_interval_us == 0 {
            return Err("beacon_interval_us must be positive".into());
        }
        if self.pipeline_window == 0 {
            return Err("pipeline_window must be at least 1".into());
        }
        if self.interest_retry_timeout_us == 0 {
            return Err("interest_retry_timeout_us must be positive".into());
        }
        if self.max_retries == Some(0) {
            return Err("max_retries must be positive or null".into());
        }
        Ok(())
    }

    /// Spacing of retry checks.
    pub fn retry_check_interval(&self) -> Micros {
        (self.interest_retry_timeout_us / 4).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    Seeder,
    Leecher,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerRole {
    pub torrent: TorrentId,
    pub initial: Initial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pending {
    pub last_sent: SimTime,
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DownloadState {
    pub have: Bitmap,
    pub pending: BTreeMap<PieceIndex, Pending>,
    pub known_remote: Bitmap,
    pub completed_at: Option<SimTime>,
}

/// Pieces `theirs` holds that `mine` lacks, ascending.
pub fn compute_missing(mine: &Bitmap, theirs: &Bitmap) -> Result<Vec<PieceIndex>, NameError> {
    if mine.n_pieces() != theirs.n_pieces() {
        return Err(NameError::LengthMismatch {
            left: mine.n_pieces(),
            right: theirs.n_pieces(),
        });
    }
    Ok(theirs.ones().filter(|&i| !mine.get(i)).collect())
}

#[derive(Debug, Clone)]
pub struct NtorrentApp {
    node: NodeId,
    role: PeerRole,
    cfg: AppConfig,
    state: DownloadState,
    last_bitmap_to: BTreeMap<NodeId, SimTime>,
    demand: BTreeSet<PieceIndex>,
}

impl NtorrentApp {
    pub fn new(node: NodeId, role: PeerRole, n_pieces: u32, cfg: AppConfig) -> Self {
        let have = match role.initial {
            Initial::Seeder => Bitmap::full(n_pieces),
            Initial::Leecher => Bitmap::empty(n_pieces),
        };
        let completed_at = have.is_complete().then_some(0);
        NtorrentApp {
            node,
            role,
            cfg,
            state: DownloadState {
                have,
                pending: BTreeMap::new(),
                known_remote: Bitmap::empty(n_pieces),
                completed_at,
            },
            last_bitmap_to: BTreeMap::new(),
            demand: BTreeSet::new(),
        }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn role(&self) -> &PeerRole {
        &self.role
    }

    pub fn torrent(&self) -> &TorrentId {
        &self.role.torrent
    }

    pub fn config(&self) -> &AppConfig {
        &self.cfg
    }

    pub fn state(&self) -> &DownloadState {
        &self.state
    }

    pub fn is_seeder(&self) -> bool {
        self.role.initial == Initial::Seeder
    }

    pub fn is_complete(&self) -> bool {
        self.state.completed_at.is_some()
    }

    /// Pieces other peers asked this node for while it lacked them.
    pub fn demand(&self) -> &BTreeSet<PieceIndex> {
        &self.demand
    }

    fn beaconing(&self) -> bool {
        self.is_seeder() || !self.is_complete() || self.cfg.keep_seeding
    }

    fn bitmap_interest(&self, rng: &mut SimRng, now: SimTime, trace: &mut Trace, why: &str) -> Packet {
        let name = Name::bitmap(&self.role.torrent, self.node, &self.state.have);
        let nonce = rng.next_u64();
        trace.record(
            now,
            self.node,
            Code::BitmapTx,
            &name,
            format!("nonce={nonce};pieces={};reason={why}", self.state.have.count_ones()),
        );
        Packet::interest(name, nonce, self.node)
    }

    /// Beacon tick. Returns the interests to send and the next tick time,
    /// or `None` once this peer has stopped beaconing.
    pub fn on_beacon_timer(&mut self, now: SimTime, rng: &mut SimRng, trace: &mut Trace) -> (Vec<Packet>, Option<SimTime>) {
        if !self.beaconing() {
            return (vec![], None);
        }
        let name = Name::beacon(self.node);
        let nonce = rng.next_u64();
        trace.record(now, self.node, Code::BeaconTx, &name, format!("nonce={nonce}"));
        let mut out = vec![Packet::interest(name, nonce, self.node)];
        // an unfinished leecher also re-announces what it holds, so that
        // holders beyond a relay learn about it even when no neighbour beacons
        if !self.is_complete() {
            out.push(self.bitmap_interest(rng, now, trace, "periodic"));
        }
        let interval = self.cfg.beacon_interval_us;
        let spread = interval / 10;
        let next = now + rng.uniform_u64(interval - spread, interval + spread);
        (out, Some(next))
    }

    fn may_reply_to(&self, remote: NodeId, now: SimTime) -> bool {
        self.last_bitmap_to
            .get(&remote)
            .is_none_or(|&t| now >= t + self.cfg.bitmap_min_gap_us)
    }

    pub fn on_receive_beacon(&mut self, sender: NodeId, now: SimTime, rng: &mut SimRng, trace: &mut Trace) -> Vec<Packet> {
        if sender == self.node || !self.may_reply_to(sender, now) {
            return vec![];
        }
        self.last_bitmap_to.insert(sender, now);
        vec![self.bitmap_interest(rng, now, trace, "beacon")]
    }

    /// Merges a remote bitmap of this peer's torrent. Replies with our own
    /// bitmap when we hold something the sender lacks, then refills the
    /// request pipeline.
    pub fn on_receive_bitmap(
        &mut self,
        sender: NodeId,
        theirs: &Bitmap,
        now: SimTime,
        rng: &mut SimRng,
        trace: &mut Trace,
    ) -> Vec<Packet> {
        if sender == self.node || self.state.known_remote.union_with(theirs).is_err() {
            return vec![];
        }
        let mut out = Vec::new();
        let can_offer = compute_missing(theirs, &self.state.have).is_ok_and(|m| !m.is_empty());
        if can_offer && self.may_reply_to(sender, now) {
            self.last_bitmap_to.insert(sender, now);
            out.push(self.bitmap_interest(rng, now, trace, "exchange"));
        }
        out.extend(self.fill_pipeline(now, rng, trace, &[]));
        out
    }

    fn request(&mut self, piece: PieceIndex, retries: u32, now: SimTime, rng: &mut SimRng, trace: &mut Trace) -> Packet {
        let name = Name::piece(&self.role.torrent, piece);
        let nonce = rng.next_u64();
        trace.record(now, self.node, Code::PieceReq, &name, format!("nonce={nonce};retry={retries}"));
        self.state.pending.insert(piece, Pending { last_sent: now, retries });
        Packet::interest(name, nonce, self.node)
    }

    fn fill_pipeline(&mut self, now: SimTime, rng: &mut SimRng, trace: &mut Trace, skip: &[PieceIndex]) -> Vec<Packet> {
        let window = self.cfg.pipeline_window as usize;
        if self.state.pending.len() >= window {
            return vec![];
        }
        let candidates: Vec<PieceIndex> = compute_missing(&self.state.have, &self.state.known_remote)
            .expect("same torrent")
            .into_iter()
            .filter(|i| !self.state.pending.contains_key(i) && !skip.contains(i))
            .take(window - self.state.pending.len())
            .collect();
        candidates
            .into_iter()
            .map(|i| self.request(i, 0, now, rng, trace))
            .collect()
    }

    /// Stores a delivered piece. Duplicates are no-ops.
    pub fn on_receive_piece(&mut self, piece: PieceIndex, now: SimTime, rng: &mut SimRng, trace: &mut Trace) -> Vec<Packet> {
        if piece >= self.state.have.n_pieces() || self.state.have.get(piece) {
            return vec![];
        }
        self.state.have.set(piece);
        self.state.pending.remove(&piece);
        self.demand.remove(&piece);
        let name = Name::piece(&self.role.torrent, piece);
        trace.record(now, self.node, Code::PieceRx, &name, format!("pieces={}", self.state.have.count_ones()));
        if self.state.have.is_complete() && self.state.completed_at.is_none() {
            self.state.completed_at = Some(now);
            trace.record(
                now,
                self.node,
                Code::Completed,
                "",
                format!("torrent={};time_us={now}", self.role.torrent),
            );
        }
        self.fill_pipeline(now, rng, trace, &[])
    }

    /// Re-sends stale requests with fresh nonces; requests past
    /// `max_retries` go back to the unrequested pool.
    pub fn on_retry_timer(&mut self, now: SimTime, rng: &mut SimRng, trace: &mut Trace) -> Vec<Packet> {
        let timeout = self.cfg.interest_retry_timeout_us;
        let stale: Vec<(PieceIndex, Pending)> = self
            .state
            .pending
            .iter()
            .filter(|(_, p)| now.saturating_sub(p.last_sent) >= timeout)
            .map(|(&i, &p)| (i, p))
            .collect();
        let mut out = Vec::new();
        let mut released = Vec::new();
        for (piece, p) in stale {
            if self.cfg.max_retries.is_some_and(|max| p.retries >= max) {
                self.state.pending.remove(&piece);
                released.push(piece);
            } else {
                out.push(self.request(piece, p.retries + 1, now, rng, trace));
            }
        }
        out.extend(self.fill_pipeline(now, rng, trace, &released));
        out
    }

    /// Data for a piece of our torrent we hold, otherwise records the demand.
    pub fn on_receive_piece_interest(&mut self, piece: PieceIndex, piece_bytes: u64) -> Option<Packet> {
        if self.state.have.get(piece) {
            Some(Packet::data(Name::piece(&self.role.torrent, piece), piece_bytes, self.node).expect("piece name"))
        } else {
            if piece < self.state.have.n_pieces() {
                self.demand.insert(piece);
            }
            None
        }
    }

    pub fn next_retry_check(&self, now: SimTime) -> SimTime {
        now + self.cfg.retry_check_interval()
    }
}
