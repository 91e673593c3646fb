//! Node positions, the bounded random walk and the unit-disk radio.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::engine::{Micros, SimRng, SimTime};

/// Direction and speed are redrawn this often.
pub const EPOCH_US: Micros = 20_000_000;
pub const SPEED_MIN: f64 = 2.0;
pub const SPEED_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBounds {
    pub width: f64,
    pub height: f64,
}

impl Default for GridBounds {
    fn default() -> Self {
        GridBounds {
            width: 300.0,
            height: 300.0,
        }
    }
}

impl GridBounds {
    pub fn contains(&self, p: &Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn random_position(&self, rng: &mut SimRng) -> Position {
        Position {
            x: rng.uniform_f64(0.0, self.width),
            y: rng.uniform_f64(0.0, self.height),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub range: f64,
    pub one_hop_delay_us: Micros,
    pub loss_prob: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            range: 60.0,
            one_hop_delay_us: 500,
            loss_prob: 0.0,
        }
    }
}

/// Heading (radians) and speed (m/s) held until `next_change`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkState {
    pub heading: f64,
    pub speed: f64,
    pub next_change: SimTime,
}

impl WalkState {
    pub fn stationary() -> Self {
        WalkState {
            heading: 0.0,
            speed: 0.0,
            next_change: SimTime::MAX,
        }
    }
}

/// Draws the next leg of the random walk.
pub fn walk_epoch(state: &WalkState, rng: &mut SimRng, now: SimTime) -> WalkState {
    debug_assert!(state.next_change == SimTime::MAX || now == state.next_change);
    let heading = rng.uniform_f64(0.0, TAU);
    let speed = rng.uniform_f64(SPEED_MIN, SPEED_MAX);
    WalkState {
        heading,
        speed,
        next_change: now + EPOCH_US,
    }
}

/// Position at `t` of a node that was at `initial` at `t0` and has moved
/// in a straight line since, reflecting specularly off every wall.
pub fn position_at(initial: Position, state: &WalkState, t0: SimTime, t: SimTime, bounds: &GridBounds) -> Position {
    debug_assert!(t0 <= t);
    if state.speed == 0.0 || t <= t0 {
        return initial;
    }
    let (mut x, mut y) = (initial.x, initial.y);
    let (mut vx, mut vy) = (state.speed * state.heading.cos(), state.speed * state.heading.sin());
    let mut remaining = (t - t0) as f64 / 1e6;

    let hit_time = |pos: f64, v: f64, hi: f64| {
        if v > 0.0 {
            (hi - pos) / v
        } else if v < 0.0 {
            -pos / v
        } else {
            f64::INFINITY
        }
    };

    // bounded: each pass either finishes or reflects off a wall
    for _ in 0..1_000_000 {
        let tx = hit_time(x, vx, bounds.width).max(0.0);
        let ty = hit_time(y, vy, bounds.height).max(0.0);
        let step = tx.min(ty);
        if step >= remaining {
            x += vx * remaining;
            y += vy * remaining;
            break;
        }
        x += vx * step;
        y += vy * step;
        remaining -= step;
        if tx <= ty {
            vx = -vx;
            x = if vx < 0.0 { bounds.width } else { 0.0 };
        }
        if ty <= tx {
            vy = -vy;
            y = if vy < 0.0 { bounds.height } else { 0.0 };
        }
    }
    Position {
        x: x.clamp(0.0, bounds.width),
        y: y.clamp(0.0, bounds.height),
    }
}

/// Unit-disk reception: closed at exactly `range`.
pub fn in_range(a: &Position, b: &Position, cfg: &RadioConfig) -> bool {
    a.distance(b) <= cfg.range
}

/// Indices of nodes that receive a broadcast from `sender`. Each in-range
/// node other than the sender is reached independently with probability
/// `1 - loss_prob`.
pub fn fan_out(sender: usize, positions: &[Position], cfg: &RadioConfig, rng: &mut SimRng) -> Vec<usize> {
    let from = positions[sender];
    positions
        .iter()
        .enumerate()
        .filter(|&(i, p)| i != sender && in_range(&from, p, cfg))
        .filter(|_| cfg.loss_prob <= 0.0 || !rng.bernoulli(cfg.loss_prob))
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SECOND;

    fn grid() -> GridBounds {
        GridBounds {
            width: 300.0,
            height: 200.0,
        }
    }

    // Reflection in a box equals free motion folded back into the box.
    fn unfolded(initial: Position, state: &WalkState, dt: f64, b: &GridBounds) -> Position {
        let fold = |v: f64, w: f64| {
            let m = v.rem_euclid(2.0 * w);
            if m > w {
                2.0 * w - m
            } else {
                m
            }
        };
        Position {
            x: fold(initial.x + state.speed * state.heading.cos() * dt, b.width),
            y: fold(initial.y + state.speed * state.heading.sin() * dt, b.height),
        }
    }

    #[test]
    fn straight_line_far_from_walls() {
        let s = WalkState { heading: 0.0, speed: 2.0, next_change: 20 * SECOND };
        let p = position_at(Position::new(100.0, 100.0), &s, 0, 20 * SECOND, &grid());
        assert!((p.x - 140.0).abs() < 1e-9 && (p.y - 100.0).abs() < 1e-9);
    }

    #[test]
    fn stationary_does_not_move() {
        let p = Position::new(3.0, 4.0);
        assert_eq!(position_at(p, &WalkState::stationary(), 0, 1_000 * SECOND, &grid()), p);
    }

    #[test]
    fn wall_reflection_matches_unfolding() {
        let b = grid();
        let s = WalkState { heading: 0.3, speed: 10.0, next_change: 20 * SECOND };
        let start = Position::new(290.0, 190.0);
        for k in 0..=20 {
            let t = k * SECOND;
            let got = position_at(start, &s, 0, t, &b);
            let want = unfolded(start, &s, k as f64, &b);
            assert!(got.distance(&want) < 1e-6, "t={k}s got {got:?} want {want:?}");
            assert!(b.contains(&got));
        }
        // incoming angle equals outgoing angle at the x wall
        let before = position_at(start, &s, 0, SECOND / 2, &b);
        let after = position_at(start, &s, 0, 2 * SECOND, &b);
        let dx_out = after.x - 300.0;
        assert!(dx_out < 0.0 && before.x < 300.0);
    }

    #[test]
    fn epoch_draws_within_law() {
        let mut rng = SimRng::from_key(11);
        let mut s = WalkState::stationary();
        let mut now = 0;
        for _ in 0..1_000 {
            s = walk_epoch(&s, &mut rng, now);
            assert!((SPEED_MIN..=SPEED_MAX).contains(&s.speed));
            assert!((0.0..TAU).contains(&s.heading));
            assert_eq!(s.next_change - now, 20_000_000);
            now = s.next_change;
        }
    }

    #[test]
    fn heading_histogram_is_uniform() {
        // chi-square, 20 bins, df = 19, critical value at alpha 0.01
        const CRIT: f64 = 36.191;
        let mut rng = SimRng::from_key(12);
        let mut bins = [0u32; 20];
        let mut s = WalkState::stationary();
        let mut now = 0;
        for _ in 0..10_000 {
            s = walk_epoch(&s, &mut rng, now);
            now = s.next_change;
            bins[((s.heading / TAU) * 20.0) as usize] += 1;
        }
        let expected = 10_000.0 / 20.0;
        let chi2: f64 = bins.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < CRIT, "chi2 = {chi2}");
    }

    #[test]
    fn range_boundary() {
        let cfg = RadioConfig::default();
        let a = Position::new(0.0, 0.0);
        assert!(in_range(&a, &a, &cfg));
        assert!(in_range(&a, &Position::new(60.0, 0.0), &cfg));
        assert!(!in_range(&a, &Position::new(60.001, 0.0), &cfg));
    }

    #[test]
    fn fan_out_rules() {
        let cfg = RadioConfig::default();
        let mut rng = SimRng::from_key(13);
        let lone = [Position::new(0.0, 0.0), Position::new(200.0, 0.0)];
        assert!(fan_out(0, &lone, &cfg, &mut rng).is_empty());
        let four = [
            Position::new(0.0, 0.0),
            Position::new(10.0, 0.0),
            Position::new(0.0, 30.0),
            Position::new(-20.0, -20.0),
        ];
        assert_eq!(fan_out(0, &four, &cfg, &mut rng), vec![1, 2, 3]);
    }

    #[test]
    fn loss_rate_monte_carlo() {
        let cfg = RadioConfig { loss_prob: 0.25, ..Default::default() };
        let mut rng = SimRng::from_key(14);
        let pair = [Position::new(0.0, 0.0), Position::new(1.0, 0.0)];
        let delivered: usize = (0..10_000).map(|_| fan_out(0, &pair, &cfg, &mut rng).len()).sum();
        let rate = delivered as f64 / 10_000.0;
        assert!((rate - 0.75).abs() <= 0.02, "rate {rate}");
    }
}
