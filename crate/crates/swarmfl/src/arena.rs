//! Discrete-time kinematic world: robot motion with proximity-ray obstacle
//! avoidance, range-and-bearing neighbor sensing, and 1 Hz trajectory
//! recording with expiration.
//!
//! Time is measured in integer ticks (`tick` seconds each); all seconds-based
//! periods must divide evenly into ticks, which keeps every time comparison
//! exact. A world is a pure function of `(config, seed)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Domain};

pub type RobotId = u16;

/// Physical footprint of a robot (Pi-puck scale), used for spawn clearance
/// and proximity-ray hits.
pub const ROBOT_RADIUS: f64 = 0.035;
/// Proximity rays per robot, spread over the forward semicircle.
pub const N_RAYS: usize = 8;
/// Proximity ray length.
pub const RAY_RANGE: f64 = 0.15;

/// World parameters. Defaults are the paper's experimental setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub arena_side: f64,
    pub n_robots: usize,
    pub n_cylinders: usize,
    pub cylinder_radius: f64,
    pub n_boxes: usize,
    pub box_side: f64,
    /// Experiment duration in seconds.
    pub duration: f64,
    /// Simulation step in seconds.
    pub tick: f64,
    pub comm_range: f64,
    pub robot_speed: f64,
    pub rng_seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            arena_side: 5.0,
            n_robots: 15,
            n_cylinders: 5,
            cylinder_radius: 0.15,
            n_boxes: 5,
            box_side: 0.3,
            duration: 5000.0,
            tick: 0.1,
            comm_range: 2.5,
            robot_speed: 0.1,
            rng_seed: 0,
        }
    }
}

impl WorldConfig {
    /// Ticks per simulated second; `tick` must divide 1 s evenly.
    pub fn ticks_per_second(&self) -> u64 {
        (1.0 / self.tick).round() as u64
    }

    /// Converts a seconds-valued period to ticks, requiring exact division.
    pub fn ticks_of(&self, seconds: f64) -> crate::Result<u64> {
        let ticks = seconds / self.tick;
        let rounded = ticks.round();
        if (ticks - rounded).abs() > 1e-9 {
            return Err(crate::Error::Config(format!(
                "{seconds} s is not a whole number of {} s ticks",
                self.tick
            )));
        }
        Ok(rounded as u64)
    }

    pub fn duration_ticks(&self) -> crate::Result<u64> {
        self.ticks_of(self.duration)
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.arena_side <= 0.0 || self.tick <= 0.0 || self.n_robots == 0 {
            return Err(crate::Error::Config(
                "arena_side, tick and n_robots must be positive".into(),
            ));
        }
        let tps = 1.0 / self.tick;
        if (tps - tps.round()).abs() > 1e-9 {
            return Err(crate::Error::Config(
                "tick must divide 1 s evenly (sampling runs at 1 Hz)".into(),
            ));
        }
        self.duration_ticks()?;
        Ok(())
    }
}

/// Position and orientation; heading normalized to [-pi, pi).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

pub fn normalize_angle(a: f64) -> f64 {
    let mut a = a.rem_euclid(std::f64::consts::TAU);
    if a >= std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Obstacle {
    Cylinder { x: f64, y: f64, radius: f64 },
    /// Axis-aligned square box.
    Box { x: f64, y: f64, half: f64 },
}

impl Obstacle {
    fn contains_with_margin(&self, px: f64, py: f64, margin: f64) -> bool {
        match *self {
            Obstacle::Cylinder { x, y, radius } => {
                let d2 = (px - x).powi(2) + (py - y).powi(2);
                d2 <= (radius + margin).powi(2)
            }
            Obstacle::Box { x, y, half } => {
                (px - x).abs() <= half + margin && (py - y).abs() <= half + margin
            }
        }
    }

    fn overlaps(&self, other: &Obstacle) -> bool {
        match (*self, *other) {
            (Obstacle::Cylinder { x, y, radius }, Obstacle::Cylinder { x: x2, y: y2, radius: r2 }) => {
                (x - x2).powi(2) + (y - y2).powi(2) <= (radius + r2).powi(2)
            }
            (Obstacle::Cylinder { x, y, radius }, Obstacle::Box { x: bx, y: by, half })
            | (Obstacle::Box { x: bx, y: by, half }, Obstacle::Cylinder { x, y, radius }) => {
                let cx = x.clamp(bx - half, bx + half);
                let cy = y.clamp(by - half, by + half);
                (x - cx).powi(2) + (y - cy).powi(2) <= radius.powi(2)
            }
            (Obstacle::Box { x, y, half }, Obstacle::Box { x: x2, y: y2, half: h2 }) => {
                (x - x2).abs() <= half + h2 && (y - y2).abs() <= half + h2
            }
        }
    }
}

/// One completed 1 Hz trajectory recording of a peer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub subject: RobotId,
    /// Exactly `window_points` absolute positions, gap-free.
    pub positions: Vec<(f64, f64)>,
    /// Tick at which the recording completed.
    pub collected_at: u64,
}

/// Locally held training samples with age-based expiration.
#[derive(Debug, Clone, Default)]
pub struct LocalDataset {
    pub samples: Vec<TrajectorySample>,
    pub expiration_ticks: u64,
}

impl LocalDataset {
    pub fn new(expiration_ticks: u64) -> Self {
        LocalDataset {
            samples: Vec::new(),
            expiration_ticks,
        }
    }

    /// Drops samples older than the expiration window; keeps order. Idempotent.
    pub fn expire(&mut self, now: u64) {
        let horizon = self.expiration_ticks;
        self.samples
            .retain(|s| now.saturating_sub(s.collected_at) <= horizon);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Per-robot trajectory recorder: one open window per neighbor currently in
/// range. A window that reaches `window_points` becomes a sample; a neighbor
/// leaving range discards its partial window.
#[derive(Debug, Clone)]
pub struct Recorder {
    pub window_points: usize,
    buffers: std::collections::BTreeMap<RobotId, Vec<(f64, f64)>>,
}

impl Recorder {
    pub fn new(window_points: usize) -> Self {
        Recorder {
            window_points,
            buffers: Default::default(),
        }
    }

    /// Call exactly once per 1 Hz sampling instant with the sensing result.
    pub fn record(
        &mut self,
        own: Pose,
        sensed: &[(RobotId, f64, f64)],
        now: u64,
    ) -> Vec<TrajectorySample> {
        // Neighbors that left range lose their partial windows.
        let in_range: std::collections::BTreeSet<RobotId> =
            sensed.iter().map(|&(id, _, _)| id).collect();
        self.buffers.retain(|id, _| in_range.contains(id));

        let mut completed = Vec::new();
        for &(id, range, bearing) in sensed {
            let angle = own.heading + bearing;
            let pos = (own.x + range * angle.cos(), own.y + range * angle.sin());
            let buf = self.buffers.entry(id).or_default();
            buf.push(pos);
            if buf.len() == self.window_points {
                completed.push(TrajectorySample {
                    subject: id,
                    positions: std::mem::take(buf),
                    collected_at: now,
                });
                self.buffers.remove(&id);
            }
        }
        completed
    }
}

/// The kinematic world.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub cfg: WorldConfig,
    pub obstacles: Vec<Obstacle>,
    pub poses: Vec<Pose>,
    avoid_rngs: Vec<ChaCha8Rng>,
    pub tick_count: u64,
}

impl WorldState {
    /// Places obstacles and robots by rejection sampling: obstacles fully
    /// inside the arena and non-overlapping; robots clear of obstacles and
    /// of each other.
    pub fn new(cfg: WorldConfig) -> crate::Result<WorldState> {
        cfg.validate()?;
        let mut r = rng::stream(cfg.rng_seed, Domain::WorldPlacement, 0);
        let side = cfg.arena_side;

        let mut obstacles: Vec<Obstacle> = Vec::new();
        let place = |obstacles: &mut Vec<Obstacle>,
                         r: &mut ChaCha8Rng,
                         make: &dyn Fn(f64, f64) -> Obstacle,
                         margin: f64|
         -> crate::Result<()> {
            for _ in 0..10_000 {
                let x = r.gen_range(margin..side - margin);
                let y = r.gen_range(margin..side - margin);
                let candidate = make(x, y);
                if !obstacles.iter().any(|o| o.overlaps(&candidate)) {
                    obstacles.push(candidate);
                    return Ok(());
                }
            }
            Err(crate::Error::World(
                "could not place obstacles without overlap".into(),
            ))
        };
        for _ in 0..cfg.n_cylinders {
            let radius = cfg.cylinder_radius;
            place(
                &mut obstacles,
                &mut r,
                &|x, y| Obstacle::Cylinder { x, y, radius },
                radius,
            )?;
        }
        for _ in 0..cfg.n_boxes {
            let half = cfg.box_side / 2.0;
            place(
                &mut obstacles,
                &mut r,
                &|x, y| Obstacle::Box { x, y, half },
                half,
            )?;
        }

        let mut poses: Vec<Pose> = Vec::new();
        'robots: for _ in 0..cfg.n_robots {
            for _ in 0..10_000 {
                let x = r.gen_range(ROBOT_RADIUS..side - ROBOT_RADIUS);
                let y = r.gen_range(ROBOT_RADIUS..side - ROBOT_RADIUS);
                let clear_obstacles = !obstacles
                    .iter()
                    .any(|o| o.contains_with_margin(x, y, ROBOT_RADIUS));
                let clear_robots = !poses.iter().any(|p| {
                    (p.x - x).powi(2) + (p.y - y).powi(2) < (2.0 * ROBOT_RADIUS).powi(2)
                });
                if clear_obstacles && clear_robots {
                    let heading = r.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                    poses.push(Pose { x, y, heading });
                    continue 'robots;
                }
            }
            return Err(crate::Error::World("could not place robots".into()));
        }

        let avoid_rngs = (0..cfg.n_robots)
            .map(|i| rng::stream(cfg.rng_seed, Domain::Avoidance, i as u64))
            .collect();

        Ok(WorldState {
            cfg,
            obstacles,
            poses,
            avoid_rngs,
            tick_count: 0,
        })
    }

    /// Current simulation time in ticks.
    pub fn now(&self) -> u64 {
        self.tick_count
    }

    /// Advances every robot one tick: move straight at `robot_speed`, or
    /// turn by a random angle in [pi/4, 3pi/4] (random direction) when any
    /// proximity ray hits a wall, obstacle, or robot. Robot order is fixed;
    /// ray tests use the positions from the start of the tick.
    pub fn step(&mut self) {
        let snapshot: Vec<Pose> = self.poses.clone();
        let side = self.cfg.arena_side;
        let step_len = self.cfg.robot_speed * self.cfg.tick;

        for i in 0..self.poses.len() {
            let pose = self.poses[i];
            let blocked = self.any_ray_hit(i, pose, &snapshot);
            if blocked {
                let r = &mut self.avoid_rngs[i];
                let magnitude =
                    r.gen_range(std::f64::consts::FRAC_PI_4..3.0 * std::f64::consts::FRAC_PI_4);
                let sign = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
                self.poses[i].heading = normalize_angle(pose.heading + sign * magnitude);
            } else {
                let nx = pose.x + step_len * pose.heading.cos();
                let ny = pose.y + step_len * pose.heading.sin();
                self.poses[i].x = nx.clamp(ROBOT_RADIUS, side - ROBOT_RADIUS);
                self.poses[i].y = ny.clamp(ROBOT_RADIUS, side - ROBOT_RADIUS);
            }
        }
        self.tick_count += 1;
    }

    fn any_ray_hit(&self, robot: usize, pose: Pose, snapshot: &[Pose]) -> bool {
        let side = self.cfg.arena_side;
        for k in 0..N_RAYS {
            // Rays spread across the forward semicircle.
            let offset = -std::f64::consts::FRAC_PI_2
                + k as f64 * (std::f64::consts::PI / (N_RAYS - 1) as f64);
            let angle = pose.heading + offset;
            let tip = (
                pose.x + RAY_RANGE * angle.cos(),
                pose.y + RAY_RANGE * angle.sin(),
            );
            // Walls: the ray leaves the arena.
            if tip.0 < 0.0 || tip.0 > side || tip.1 < 0.0 || tip.1 > side {
                return true;
            }
            let dir = (angle.cos(), angle.sin());
            for ob in &self.obstacles {
                let (cx, cy, radius) = match *ob {
                    Obstacle::Cylinder { x, y, radius } => (x, y, radius + ROBOT_RADIUS),
                    // Boxes are approximated by their circumscribed circle
                    // for ray tests; placement uses exact extents.
                    Obstacle::Box { x, y, half } => {
                        (x, y, half * std::f64::consts::SQRT_2 + ROBOT_RADIUS)
                    }
                };
                if segment_hits_circle(pose.x, pose.y, dir, RAY_RANGE, cx, cy, radius) {
                    return true;
                }
            }
            for (j, other) in snapshot.iter().enumerate() {
                if j == robot {
                    continue;
                }
                if segment_hits_circle(
                    pose.x,
                    pose.y,
                    dir,
                    RAY_RANGE,
                    other.x,
                    other.y,
                    2.0 * ROBOT_RADIUS,
                ) {
                    return true;
                }
            }
        }
        false
    }

    /// Robots within `comm_range`, with exact range and bearing (relative to
    /// the observer's heading). Sorted by id; no occlusion.
    pub fn sense_neighbors(&self, robot: RobotId) -> Vec<(RobotId, f64, f64)> {
        let own = self.poses[robot as usize];
        let mut out = Vec::new();
        for (j, other) in self.poses.iter().enumerate() {
            if j == robot as usize {
                continue;
            }
            let dx = other.x - own.x;
            let dy = other.y - own.y;
            let range = dx.hypot(dy);
            if range <= self.cfg.comm_range {
                let bearing = normalize_angle(dy.atan2(dx) - own.heading);
                out.push((j as RobotId, range, bearing));
            }
        }
        out
    }

    /// Robot positions as plain points.
    pub fn positions(&self) -> Vec<(f64, f64)> {
        self.poses.iter().map(|p| (p.x, p.y)).collect()
    }
}

/// Does the segment from `(ox, oy)` of length `len` along unit `dir`
/// intersect the circle at `(cx, cy)` with radius `r`?
fn segment_hits_circle(
    ox: f64,
    oy: f64,
    dir: (f64, f64),
    len: f64,
    cx: f64,
    cy: f64,
    r: f64,
) -> bool {
    let fx = cx - ox;
    let fy = cy - oy;
    // Projection of the center onto the ray, clamped to the segment.
    let t = (fx * dir.0 + fy * dir.1).clamp(0.0, len);
    let px = ox + t * dir.0;
    let py = oy + t * dir.1;
    (cx - px).powi(2) + (cy - py).powi(2) <= r * r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn empty_world(n_robots: usize) -> WorldState {
        let cfg = WorldConfig {
            n_cylinders: 0,
            n_boxes: 0,
            n_robots,
            rng_seed: 5,
            ..WorldConfig::default()
        };
        WorldState::new(cfg).unwrap()
    }

    #[test]
    fn unobstructed_straight_line_motion() {
        let mut w = empty_world(1);
        w.poses[0] = Pose {
            x: 2.5,
            y: 2.5,
            heading: 0.0,
        };
        w.step();
        assert!((w.poses[0].x - 2.51).abs() < 1e-12);
        assert!((w.poses[0].y - 2.5).abs() < 1e-12);
        assert_eq!(w.poses[0].heading, 0.0);
    }

    #[test]
    fn wall_ahead_turns_instead_of_advancing() {
        let mut w = empty_world(1);
        w.poses[0] = Pose {
            x: 0.05,
            y: 2.5,
            heading: std::f64::consts::PI, // into the x = 0 wall
        };
        let before = w.poses[0];
        w.step();
        assert_eq!(w.poses[0].x, before.x);
        assert_eq!(w.poses[0].y, before.y);
        assert_ne!(w.poses[0].heading, before.heading);
    }

    #[test]
    fn robots_stay_inside_arena_and_eventually_escape_walls() {
        let cfg = WorldConfig {
            rng_seed: 11,
            ..WorldConfig::default()
        };
        let mut w = WorldState::new(cfg).unwrap();
        let mut moved = vec![false; w.poses.len()];
        let start = w.poses.clone();
        for _ in 0..2_000 {
            w.step();
            for (i, p) in w.poses.iter().enumerate() {
                assert!(p.x >= 0.0 && p.x <= 5.0 && p.y >= 0.0 && p.y <= 5.0);
                if (p.x - start[i].x).abs() + (p.y - start[i].y).abs() > 0.5 {
                    moved[i] = true;
                }
            }
        }
        assert!(moved.iter().all(|&m| m), "some robot never travelled");
    }

    #[test]
    fn world_is_deterministic_over_a_full_run() {
        // Two complete 5000 s replays (50 000 ticks) must agree bit for bit.
        let cfg = WorldConfig {
            rng_seed: 77,
            ..WorldConfig::default()
        };
        let run = || {
            let mut w = WorldState::new(cfg.clone()).unwrap();
            for _ in 0..50_000 {
                w.step();
            }
            w.poses
                .iter()
                .map(|p| (p.x.to_bits(), p.y.to_bits(), p.heading.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sensing_pair_at_one_meter() {
        let mut w = empty_world(2);
        w.poses[0] = Pose {
            x: 1.0,
            y: 1.0,
            heading: 0.0,
        };
        w.poses[1] = Pose {
            x: 2.0,
            y: 1.0,
            heading: std::f64::consts::FRAC_PI_2,
        };
        let s0 = w.sense_neighbors(0);
        let s1 = w.sense_neighbors(1);
        assert_eq!(s0.len(), 1);
        assert_eq!(s1.len(), 1);
        assert!((s0[0].1 - 1.0).abs() < 1e-12);
        assert!((s1[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sensing_beyond_range_sees_nothing() {
        let mut w = empty_world(2);
        w.poses[0] = Pose {
            x: 1.0,
            y: 1.0,
            heading: 0.0,
        };
        w.poses[1] = Pose {
            x: 3.6,
            y: 1.0,
            heading: 0.0,
        };
        assert!(w.sense_neighbors(0).is_empty());
        assert!(w.sense_neighbors(1).is_empty());
    }

    #[test]
    fn sensing_matches_pairwise_distance_oracle() {
        let cfg = WorldConfig {
            arena_side: 20.0,
            n_cylinders: 0,
            n_boxes: 0,
            rng_seed: 3,
            ..WorldConfig::default()
        };
        let mut w = WorldState::new(cfg).unwrap();
        // Robots on a 1 m-spaced line.
        for (i, p) in w.poses.iter_mut().enumerate() {
            *p = Pose {
                x: 1.0 + i as f64,
                y: 10.0,
                heading: 0.0,
            };
        }
        for i in 0..15u16 {
            let sensed: Vec<RobotId> = w.sense_neighbors(i).iter().map(|s| s.0).collect();
            let expect: Vec<RobotId> = (0..15u16)
                .filter(|&j| j != i && (j as f64 - i as f64).abs() <= 2.5)
                .collect();
            assert_eq!(sensed, expect);
        }
    }

    #[test]
    fn recorder_emits_one_sample_after_full_window() {
        let mut rec = Recorder::new(10);
        let own = Pose {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
        };
        for t in 1..=10u64 {
            let out = rec.record(own, &[(7, 1.0, 0.0)], t * 10);
            if t < 10 {
                assert!(out.is_empty());
            } else {
                assert_eq!(out.len(), 1);
                assert_eq!(out[0].subject, 7);
                assert_eq!(out[0].positions.len(), 10);
                assert_eq!(out[0].collected_at, 100);
            }
        }
    }

    #[test]
    fn interrupted_window_is_discarded() {
        let mut rec = Recorder::new(10);
        let own = Pose {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
        };
        for t in 1..=6u64 {
            rec.record(own, &[(7, 1.0, 0.0)], t);
        }
        // Neighbor leaves at sample 7.
        let out = rec.record(own, &[], 7);
        assert!(out.is_empty());
        // Returning starts a fresh window: 9 more instants yield nothing...
        for t in 8..=16u64 {
            assert!(rec.record(own, &[(7, 1.0, 0.0)], t).is_empty());
        }
        // ...and the 10th completes it.
        assert_eq!(rec.record(own, &[(7, 1.0, 0.0)], 17).len(), 1);
    }

    #[test]
    fn two_neighbors_for_twenty_seconds_give_four_samples() {
        let mut rec = Recorder::new(10);
        let own = Pose {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
        };
        let mut total = 0;
        for t in 1..=20u64 {
            let out = rec.record(own, &[(3, 1.0, 0.5), (9, 2.0, -0.5)], t);
            total += out.len();
        }
        assert_eq!(total, 4);
    }

    #[test]
    fn recorded_positions_match_neighbor_location() {
        let mut rec = Recorder::new(1);
        let own = Pose {
            x: 1.0,
            y: 2.0,
            heading: std::f64::consts::FRAC_PI_2,
        };
        // Neighbor dead ahead at 1.5 m: absolute position (1.0, 3.5).
        let out = rec.record(own, &[(2, 1.5, 0.0)], 5);
        let (x, y) = out[0].positions[0];
        assert!((x - 1.0).abs() < 1e-12);
        assert!((y - 3.5).abs() < 1e-12);
    }

    #[test]
    fn expire_keeps_recent_samples() {
        let mk = |at: u64| TrajectorySample {
            subject: 0,
            positions: vec![(0.0, 0.0); 10],
            collected_at: at,
        };
        // Expiration 750 s at 10 ticks/s.
        let mut d = LocalDataset::new(7500);
        d.samples = vec![mk(0), mk(4000)];
        d.expire(5000);
        assert_eq!(d.len(), 2);
        d.expire(8000);
        assert_eq!(d.len(), 1);
        assert_eq!(d.samples[0].collected_at, 4000);
    }

    proptest! {
        #[test]
        fn expire_matches_filter_oracle_and_is_idempotent(
            stamps in proptest::collection::vec(0u64..10_000, 0..100),
            now in 0u64..12_000,
        ) {
            let mk = |at: u64| TrajectorySample {
                subject: 0,
                positions: vec![(0.0, 0.0); 10],
                collected_at: at,
            };
            let mut d = LocalDataset::new(750);
            d.samples = stamps.iter().map(|&t| mk(t)).collect();
            let expect: Vec<u64> = stamps
                .iter()
                .copied()
                .filter(|&t| now.saturating_sub(t) <= 750)
                .collect();
            d.expire(now);
            let got: Vec<u64> = d.samples.iter().map(|s| s.collected_at).collect();
            prop_assert_eq!(&got, &expect);
            d.expire(now);
            let again: Vec<u64> = d.samples.iter().map(|s| s.collected_at).collect();
            prop_assert_eq!(again, expect);
        }

        #[test]
        fn sensing_is_reciprocal(seed in 0u64..200) {
            let cfg = WorldConfig { rng_seed: seed, ..WorldConfig::default() };
            let mut w = WorldState::new(cfg).unwrap();
            for _ in 0..seed % 50 {
                w.step();
            }
            for i in 0..15u16 {
                for (j, range, _) in w.sense_neighbors(i) {
                    let back = w.sense_neighbors(j);
                    let hit = back.iter().find(|&&(id, _, _)| id == i);
                    prop_assert!(hit.is_some(), "{j} does not sense {i}");
                    prop_assert!((hit.unwrap().1 - range).abs() < 1e-9);
                }
            }
        }
    }
}
