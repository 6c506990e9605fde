//! In-repo scenario presets.
//!
//! Each preset is laid out in a local frame where the ego starts at the
//! origin facing +x; the whole layout is then placed in the world with a
//! seed-dependent rigid transform. Dimensions, speeds and agent counts are
//! desk-scale choices, not calibrated statistics.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Agent, AgentKind, LidarConfig, Scenario, DEFAULT_DT, MIN_FRAMES};
use crate::geometry::{OrientedRect, Pose2D};
use crate::{Error, Result};

pub const PRESETS: [&str; 5] = [
    "straight-drive",
    "turn-at-intersection",
    "roundabout-exit",
    "oncoming-bus",
    "stationary-ego",
];

pub const EGO_HALF_EXTENTS: [f64; 2] = [2.25, 0.95];
const CAR: [f64; 2] = [2.2, 0.9];
const PEDESTRIAN: [f64; 2] = [0.3, 0.3];
const BUS: [f64; 2] = [6.0, 1.3];
const TREE: [f64; 2] = [0.25, 0.25];
const POLE: [f64; 2] = [0.12, 0.12];

/// Builds the named preset. `"mix"` is not a preset; see [`mix`].
pub fn preset(name: &str, seed: u64) -> Result<Scenario> {
    let mut b = Builder::new(name, seed);
    match name {
        "straight-drive" => straight_drive(&mut b),
        "turn-at-intersection" => turn_at_intersection(&mut b),
        "roundabout-exit" => roundabout_exit(&mut b),
        "oncoming-bus" => oncoming_bus(&mut b),
        "stationary-ego" => stationary_ego(&mut b),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown preset '{other}' (expected one of {PRESETS:?} or 'mix')"
            )))
        }
    }
    Ok(b.finish())
}

/// Preset cycling through all presets by index.
pub fn mix(index: usize, seed: u64) -> Scenario {
    preset(PRESETS[index % PRESETS.len()], seed).expect("built-in preset")
}

/// Center of the circle a turning agent drives on; `None` for straight motion.
pub fn turning_center(agent: &Agent) -> Option<[f64; 2]> {
    if agent.yaw_rate.abs() < 1e-12 || agent.speed == 0.0 {
        return None;
    }
    let r = agent.speed / agent.yaw_rate;
    let (s, c) = agent.pose.theta.sin_cos();
    Some([agent.pose.x - r * s, agent.pose.y + r * c])
}

struct Builder {
    name: String,
    seed: u64,
    rng: ChaCha8Rng,
    placement: Pose2D,
    obstacles: Vec<OrientedRect>,
    agents: Vec<Agent>,
    ego: Option<Agent>,
}

impl Builder {
    fn new(name: &str, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let placement = Pose2D::new(
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
            rng.random_range(-PI..PI),
        );
        Self {
            name: name.to_string(),
            seed,
            rng,
            placement,
            obstacles: Vec::new(),
            agents: Vec::new(),
            ego: None,
        }
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    fn place(&self, x: f64, y: f64, theta: f64) -> Pose2D {
        self.placement.compose(&Pose2D::new(x, y, theta))
    }

    fn rect(&mut self, x: f64, y: f64, theta: f64, half: [f64; 2]) {
        let c = self.place(x, y, theta);
        self.obstacles.push(OrientedRect::new(c, half));
    }

    /// Axis-aligned (in the local frame) box spanning `[x0, x1] × [y0, y1]`.
    fn block(&mut self, x0: f64, x1: f64, y0: f64, y1: f64) {
        self.rect(
            0.5 * (x0 + x1),
            0.5 * (y0 + y1),
            0.0,
            [0.5 * (x1 - x0).abs(), 0.5 * (y1 - y0).abs()],
        );
    }

    /// A row of buildings whose street-facing side lies on `y = face`,
    /// extending away from the road in direction `side` (±1).
    fn building_row(&mut self, x0: f64, x1: f64, face: f64, side: f64) {
        let mut x = x0;
        while x < x1 {
            let len = self.uniform(8.0, 16.0).min(x1 - x);
            let depth = self.uniform(6.0, 10.0);
            let setback = self.uniform(0.0, 2.5);
            if len > 2.0 {
                let inner = face + side * setback;
                self.block(x, x + len, inner, inner + side * depth);
            }
            x += len + self.uniform(2.0, 5.0);
        }
    }

    /// Curbside parking along a road whose center line is the x axis of
    /// `road` (a pose in the preset frame): cars on the road side of the curb
    /// at lateral `curb`, trees and poles on the sidewalk beyond it, for
    /// `u` in `[u0, u1]`. `side` is the direction away from the road (±1).
    fn roadside(&mut self, road: Pose2D, u0: f64, u1: f64, curb: f64, side: f64) {
        let at = |b: &mut Self, u: f64, v: f64, yaw: f64, half: [f64; 2]| {
            let p = road.compose(&Pose2D::new(u, v, yaw));
            b.rect(p.x, p.y, p.theta, half);
        };
        let mut u = u0 + self.uniform(0.0, 4.0);
        while u + 2.0 * CAR[0] < u1 {
            if self.rng.random_bool(0.75) {
                let lateral = curb - side * (CAR[1] + self.uniform(0.1, 0.4));
                let yaw = self.uniform(-0.04, 0.04);
                at(self, u + CAR[0], lateral, yaw, CAR);
            }
            u += 2.0 * CAR[0] + self.uniform(0.8, 3.5);
        }
        let mut u = u0 + self.uniform(0.0, 3.0);
        while u < u1 {
            let (half, offset) = if self.rng.random_bool(0.6) {
                (TREE, self.uniform(2.0, 2.4))
            } else {
                (POLE, self.uniform(0.3, 0.4))
            };
            at(self, u, curb + side * offset, 0.0, half);
            u += self.uniform(4.0, 9.0);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn agent(
        &mut self,
        kind: AgentKind,
        x: f64,
        y: f64,
        heading: f64,
        speed: f64,
        yaw_rate: f64,
        half: [f64; 2],
    ) {
        let id = self.agents.len() as u32 + 1;
        let pose = self.place(x, y, heading);
        self.agents.push(Agent {
            id,
            kind,
            pose,
            speed,
            yaw_rate,
            half_extents: half,
        });
    }

    fn ego(&mut self, speed: f64, yaw_rate: f64) {
        self.ego = Some(Agent {
            id: 0,
            kind: AgentKind::Vehicle,
            pose: self.place(0.0, 0.0, 0.0),
            speed,
            yaw_rate,
            half_extents: EGO_HALF_EXTENTS,
        });
    }

    fn finish(self) -> Scenario {
        Scenario {
            name: self.name,
            static_obstacles: self.obstacles,
            agents: self.agents,
            ego: self.ego.expect("preset sets the ego"),
            duration: MIN_FRAMES as f64 * DEFAULT_DT,
            dt: DEFAULT_DT,
            rng_seed: self.seed,
            lidar: LidarConfig::default(),
        }
    }
}

fn street(b: &mut Builder, x0: f64, x1: f64) {
    let left = b.uniform(9.0, 10.5);
    let right = -b.uniform(9.0, 10.5);
    b.building_row(x0, x1, left, 1.0);
    b.building_row(x0, x1, right, -1.0);
    let road = Pose2D::new(0.0, 0.0, 0.0);
    b.roadside(road, x0, x1, CURB, 1.0);
    b.roadside(road, x0, x1, -CURB, -1.0);
}

/// Lateral offset of the curbs from the road center line.
const CURB: f64 = 6.5;

fn straight_drive(b: &mut Builder) {
    let v = b.uniform(5.0, 8.0);
    b.ego(v, 0.0);
    street(b, -25.0, 75.0);
    let x = b.uniform(30.0, 45.0);
    let s = b.uniform(3.0, 5.0);
    b.agent(AgentKind::Vehicle, x, 3.2, PI, s, 0.0, CAR);
    let x = b.uniform(-5.0, 25.0);
    let side = if b.rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let heading = if b.rng.random_bool(0.5) { 0.0 } else { PI };
    b.agent(AgentKind::Pedestrian, x, side * 7.6, heading, 1.3, 0.0, PEDESTRIAN);
}

fn oncoming_bus(b: &mut Builder) {
    let v = b.uniform(4.0, 6.0);
    b.ego(v, 0.0);
    street(b, -25.0, 75.0);
    let x = b.uniform(32.0, 42.0);
    let s = b.uniform(3.5, 4.5);
    b.agent(AgentKind::Vehicle, x, 2.9, PI, s, 0.0, BUS);
}

fn turn_at_intersection(b: &mut Builder) {
    let v = b.uniform(4.0, 5.0);
    let r = b.uniform(12.0, 16.0);
    b.ego(v, v / r);
    // Main road along x (|y| < 7), cross road along y (|x - r| < 7).
    let (cx, half_road, setback) = (r, 7.0, 2.0);
    let near = cx - half_road - setback;
    let far = cx + half_road + setback;
    let edge = half_road + setback;
    let j: [f64; 4] = std::array::from_fn(|_| b.uniform(0.0, 1.0));
    b.block(near - 30.0, near - j[0], edge, edge + 12.0);
    b.block(near - 30.0, near - j[1], -edge, -edge - 12.0);
    b.block(far + j[2], far + 25.0, edge, edge + 12.0);
    b.block(far + j[3], far + 25.0, -edge, -edge - 12.0);
    b.building_row(-25.0, near - 32.0, edge, 1.0);
    b.building_row(far + 27.0, 70.0, -edge, -1.0);
    // Further along the cross road.
    b.block(near - 12.0, near, edge + 14.0, edge + 30.0);
    b.block(far, far + 12.0, edge + 14.0, edge + 30.0);
    let main = Pose2D::new(0.0, 0.0, 0.0);
    b.roadside(main, -25.0, near - 4.0, CURB, 1.0);
    b.roadside(main, -25.0, near - 4.0, -CURB, -1.0);
    b.roadside(main, far + 0.5, 70.0, CURB, 1.0);
    b.roadside(main, far + 0.5, 70.0, -CURB, -1.0);
    let cross = Pose2D::new(cx, 0.0, FRAC_PI_2);
    b.roadside(cross, edge + 0.5, 45.0, CURB, 1.0);
    b.roadside(cross, edge + 0.5, 45.0, -CURB, -1.0);
    let y = b.uniform(25.0, 35.0);
    let s = b.uniform(3.0, 5.0);
    b.agent(AgentKind::Vehicle, cx + 3.5, y, -FRAC_PI_2, s, 0.0, CAR);
    let y = b.uniform(-12.0, -8.0);
    b.agent(AgentKind::Pedestrian, near - 3.0, y, 0.0, 1.2, 0.0, PEDESTRIAN);
}

fn roundabout_exit(b: &mut Builder) {
    let v = b.uniform(3.5, 4.5);
    let r = b.uniform(13.0, 15.0);
    b.ego(v, v / r);
    let center = [0.0, r];
    let at = |radius: f64, a: f64| [center[0] + radius * a.cos(), center[1] + radius * a.sin()];
    // Planted central island: irregular shrubs along its edge, trees inside.
    let island = r - 5.0;
    let mut a = -PI;
    while a < PI {
        let len = b.uniform(0.6, 1.6);
        let half_w = b.uniform(0.4, 0.9);
        let rr = island - half_w - b.uniform(0.0, 0.8);
        let p = at(rr, a);
        b.rect(p[0], p[1], a + FRAC_PI_2, [len, half_w]);
        a += (2.0 * len + b.uniform(0.5, 2.5)) / island;
    }
    for _ in 0..5 {
        let (rr, a) = (b.uniform(1.0, island - 2.5), b.uniform(-PI, PI));
        let p = at(rr, a);
        b.rect(p[0], p[1], 0.0, TREE);
    }
    // Bollards along the outer edge, open at the entry behind the ego and the
    // exit ahead of where it ends up; buildings on the corners beyond.
    let ring = r + 5.5;
    let entry = -FRAC_PI_2 - 0.25;
    let exit = -FRAC_PI_2 + b.uniform(1.2, 1.5);
    let gap = 0.35;
    let mut a = entry + gap;
    while a < entry + 2.0 * PI - gap {
        let wrapped = (a - exit + PI).rem_euclid(2.0 * PI) - PI;
        if wrapped.abs() > gap {
            let p = at(ring + b.uniform(0.0, 0.4), a);
            b.rect(p[0], p[1], a, POLE);
        }
        a += b.uniform(2.5, 4.5) / ring;
    }
    for k in 0..4 {
        let a = PI / 4.0 + k as f64 * FRAC_PI_2 + b.uniform(-0.2, 0.2);
        let p = at(ring + b.uniform(8.0, 12.0), a);
        let half = [b.uniform(4.0, 7.0), b.uniform(4.0, 7.0)];
        let yaw = a + b.uniform(-0.3, 0.3);
        b.rect(p[0], p[1], yaw, half);
    }
    // Bollards beyond the exit.
    for i in 0..3 {
        let a = exit - 0.15 + 0.15 * i as f64;
        let rr = ring + 4.0 + b.uniform(0.0, 2.0);
        let p = at(rr, a);
        b.rect(p[0], p[1], a, [0.4, 0.4]);
    }
}

fn stationary_ego(b: &mut Builder) {
    b.ego(0.0, 0.0);
    // Waiting at a crossing road |x - 12| < 7.
    let (cx, half_road, setback) = (12.0, 7.0, 2.0);
    let near = cx - half_road - setback;
    let far = cx + half_road + setback;
    let edge = half_road + setback;
    b.block(near - 25.0, near, edge, edge + 12.0);
    b.block(near - 25.0, near, -edge, -edge - 12.0);
    b.block(far, far + 20.0, edge, edge + 12.0);
    b.block(far, far + 20.0, -edge, -edge - 12.0);
    let main = Pose2D::new(0.0, 0.0, 0.0);
    b.roadside(main, -25.0, near - 4.0, CURB, 1.0);
    b.roadside(main, -25.0, near - 4.0, -CURB, -1.0);
    let cross = Pose2D::new(cx, 0.0, FRAC_PI_2);
    for (u0, u1) in [(-40.0, -edge - 0.5), (edge + 0.5, 40.0)] {
        b.roadside(cross, u0, u1, CURB, 1.0);
        b.roadside(cross, u0, u1, -CURB, -1.0);
    }
    let s = b.uniform(3.0, 5.0);
    let y = b.uniform(20.0, 30.0);
    b.agent(AgentKind::Vehicle, cx + 3.5, y, -FRAC_PI_2, s, 0.0, CAR);
    let s = b.uniform(3.0, 5.0);
    let y = b.uniform(-30.0, -20.0);
    b.agent(AgentKind::Vehicle, cx - 3.5, y, FRAC_PI_2, s, 0.0, CAR);
    let y = b.uniform(-10.0, -8.0);
    b.agent(AgentKind::Pedestrian, near - 1.0, y, FRAC_PI_2, 1.2, 0.0, PEDESTRIAN);
}
