//! Discrete-event core: integer microsecond clock, a (time, seq) ordered
//! event queue and per-(purpose, node) random streams.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::name::NodeId;

/// Microseconds since simulation start.
pub type SimTime = u64;
/// A span of simulated time in microseconds.
pub type Micros = u64;

pub const SECOND: Micros = 1_000_000;
pub const MILLISECOND: Micros = 1_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("cannot schedule at {at} µs, clock is already at {now} µs")]
    SchedulingInPast { at: SimTime, now: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Node(NodeId),
    World,
}

#[derive(Debug, Clone)]
pub struct Event<E> {
    pub time: SimTime,
    pub seq: u64,
    pub target: Target,
    pub kind: E,
}

struct Queued<E>(Event<E>);

impl<E> PartialEq for Queued<E> {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}

impl<E> Eq for Queued<E> {}

impl<E> PartialOrd for Queued<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Queued<E> {
    // reversed: BinaryHeap is a max-heap and we pop the earliest (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.time, other.0.seq).cmp(&(self.0.time, self.0.seq))
    }
}

/// Pending events plus the virtual clock.
pub struct EventQueue<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Queued<E>>,
    scheduled: u64,
    dispatched: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            now: 0,
            next_seq: 0,
            heap: BinaryHeap::new(),
            scheduled: 0,
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn scheduled(&self) -> u64 {
        self.scheduled
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Enqueues `kind` at `time`. Zero-delay events are legal and run after
    /// everything already queued for the same instant.
    pub fn schedule(&mut self, time: SimTime, target: Target, kind: E) -> Result<u64, EngineError> {
        if time < self.now {
            return Err(EngineError::SchedulingInPast { at: time, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.scheduled += 1;
        self.heap.push(Queued(Event { time, seq, target, kind }));
        Ok(seq)
    }

    pub fn schedule_in(&mut self, delay: Micros, target: Target, kind: E) -> u64 {
        self.schedule(self.now + delay, target, kind)
            .expect("relative scheduling is never in the past")
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|q| q.0.time)
    }

    /// Pops the next event if it is due at or before `t_end`, advancing the clock.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Event<E>> {
        if self.peek_time()? > t_end {
            return None;
        }
        let Queued(ev) = self.heap.pop()?;
        debug_assert!(ev.time >= self.now);
        self.now = ev.time;
        self.dispatched += 1;
        Some(ev)
    }
}

pub trait Handler<E> {
    fn handle(&mut self, queue: &mut EventQueue<E>, event: Event<E>);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunReport {
    pub events_dispatched: u64,
    pub final_time: SimTime,
}

/// Dispatches events in (time, seq) order until the queue drains or the next
/// event lies beyond `t_end`. The clock ends at exactly `t_end`.
pub fn run_until<E, H: Handler<E>>(
    queue: &mut EventQueue<E>,
    handler: &mut H,
    t_end: SimTime,
) -> Result<RunReport, EngineError> {
    if t_end < queue.now {
        return Err(EngineError::SchedulingInPast { at: t_end, now: queue.now });
    }
    let mut dispatched = 0;
    while let Some(ev) = queue.pop_until(t_end) {
        handler.handle(queue, ev);
        dispatched += 1;
    }
    queue.now = t_end;
    Ok(RunReport {
        events_dispatched: dispatched,
        final_time: queue.now,
    })
}

/// What a random stream is used for. Streams never share state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Mobility,
    Strategy,
    App,
    Medium,
    Placement,
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::Mobility => 1,
            Purpose::Strategy => 2,
            Purpose::App => 3,
            Purpose::Medium => 4,
            Purpose::Placement => 5,
        }
    }
}

/// SplitMix64 step: advances `state` and returns the mixed output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic random stream: ChaCha8 keyed from SplitMix64 output.
#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn from_key(key: u64) -> Self {
        let mut state = key;
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        SimRng {
            inner: ChaCha8Rng::from_seed(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in the closed range [lo, hi].
    pub fn uniform_u64(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo <= hi);
        let span = (hi - lo).wrapping_add(1);
        if span == 0 {
            return self.next_u64();
        }
        lo + ((self.next_u64() as u128 * span as u128) >> 64) as u64
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }
}

/// Mixes (seed, purpose, node) into an independent stream.
pub fn derive_stream(master_seed: u64, purpose: Purpose, node: NodeId) -> SimRng {
    let mut s = master_seed;
    let mut key = splitmix64(&mut s);
    s = key ^ purpose.code().wrapping_mul(0xd6e8_feb8_6659_fd93);
    key = splitmix64(&mut s);
    s = key ^ (node.0 as u64).wrapping_mul(0xa076_1d64_78bd_642f);
    key = splitmix64(&mut s);
    SimRng::from_key(key)
}
