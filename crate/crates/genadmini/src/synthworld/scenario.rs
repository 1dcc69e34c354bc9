//! Road geometry, motion profiles, and the scenario families.
//!
//! World frame: standard math convention (`heading = atan2(dy, dx)`).
//! Ego frame used for trajectories: `x` meters to the right of the initial
//! heading, `y` meters forward. Lateral offsets are positive to the right
//! of the direction of travel everywhere.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::commands::{self, CommandRuleConfig};
use crate::rng::{derive_rng, SeedRng};

pub const ROAD_HALF_WIDTH: f64 = 5.5;
pub const LANE_SHIFT: f64 = 3.6;

/// Scenario families. Motion-level families map one-to-one onto rule
/// decidable commands; context families reuse straight or lane-shift motion
/// and carry their command id from the visual situation.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioFamily {
    Straight,
    TurnLeft,
    TurnRight,
    LaneChangeLeft,
    LaneChangeRight,
    Stop,
    UTurn,
    IntersectionPass,
    LaneBranchLeft,
    LaneBranchRight,
    CrosswalkPass,
    RailPass,
    Merge,
    Deviate,
    /// Weighted mixture over the families used for training data.
    Mix,
}

impl ScenarioFamily {
    pub fn command_id(self) -> u8 {
        match self {
            ScenarioFamily::Straight => 0,
            ScenarioFamily::IntersectionPass => 1,
            ScenarioFamily::TurnLeft => 2,
            ScenarioFamily::TurnRight => 3,
            ScenarioFamily::LaneChangeLeft => 4,
            ScenarioFamily::LaneChangeRight => 5,
            ScenarioFamily::LaneBranchLeft => 6,
            ScenarioFamily::LaneBranchRight => 7,
            ScenarioFamily::CrosswalkPass => 8,
            ScenarioFamily::RailPass => 9,
            ScenarioFamily::Merge => 10,
            ScenarioFamily::UTurn => 11,
            ScenarioFamily::Stop => 12,
            ScenarioFamily::Deviate => 13,
            ScenarioFamily::Mix => unreachable!("mix resolves before use"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "straight" => ScenarioFamily::Straight,
            "turn-left" => ScenarioFamily::TurnLeft,
            "turn-right" => ScenarioFamily::TurnRight,
            "lane-change-left" => ScenarioFamily::LaneChangeLeft,
            "lane-change-right" => ScenarioFamily::LaneChangeRight,
            "stop" => ScenarioFamily::Stop,
            "u-turn" => ScenarioFamily::UTurn,
            "intersection" => ScenarioFamily::IntersectionPass,
            "branch-left" => ScenarioFamily::LaneBranchLeft,
            "branch-right" => ScenarioFamily::LaneBranchRight,
            "crosswalk" => ScenarioFamily::CrosswalkPass,
            "rail" => ScenarioFamily::RailPass,
            "merge" => ScenarioFamily::Merge,
            "deviate" => ScenarioFamily::Deviate,
            "mix" => ScenarioFamily::Mix,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioFamily::Straight => "straight",
            ScenarioFamily::TurnLeft => "turn-left",
            ScenarioFamily::TurnRight => "turn-right",
            ScenarioFamily::LaneChangeLeft => "lane-change-left",
            ScenarioFamily::LaneChangeRight => "lane-change-right",
            ScenarioFamily::Stop => "stop",
            ScenarioFamily::UTurn => "u-turn",
            ScenarioFamily::IntersectionPass => "intersection",
            ScenarioFamily::LaneBranchLeft => "branch-left",
            ScenarioFamily::LaneBranchRight => "branch-right",
            ScenarioFamily::CrosswalkPass => "crosswalk",
            ScenarioFamily::RailPass => "rail",
            ScenarioFamily::Merge => "merge",
            ScenarioFamily::Deviate => "deviate",
            ScenarioFamily::Mix => "mix",
        }
    }
}

/// World/episode generation configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorldConfig {
    pub duration_s: f64,
    pub height: usize,
    pub width: usize,
    pub family: ScenarioFamily,
    pub rules: CommandRuleConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            duration_s: 5.0,
            height: 32,
            width: 64,
            family: ScenarioFamily::Mix,
            rules: CommandRuleConfig::default(),
        }
    }
}

// ---- path geometry ----

#[derive(Clone, Debug)]
enum Segment {
    Line {
        start: [f64; 2],
        dir: [f64; 2],
        len: f64,
    },
    Arc {
        center: [f64; 2],
        radius: f64,
        /// angle of the entry point as seen from the center
        start_ang: f64,
        /// signed sweep; positive = counterclockwise = left turn
        sweep: f64,
    },
}

impl Segment {
    fn len(&self) -> f64 {
        match self {
            Segment::Line { len, .. } => *len,
            Segment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn pose_at(&self, s: f64) -> ([f64; 2], f64) {
        match self {
            Segment::Line { start, dir, .. } => (
                [start[0] + dir[0] * s, start[1] + dir[1] * s],
                dir[1].atan2(dir[0]),
            ),
            Segment::Arc {
                center,
                radius,
                start_ang,
                sweep,
            } => {
                let ang = start_ang + sweep.signum() * s / radius;
                let pos = [center[0] + radius * ang.cos(), center[1] + radius * ang.sin()];
                let heading = ang + sweep.signum() * std::f64::consts::FRAC_PI_2;
                (pos, heading)
            }
        }
    }

    /// Returns (s_clamped, signed right distance, squared distance to the
    /// projected point).
    fn project(&self, p: [f64; 2]) -> (f64, f64, f64) {
        match self {
            Segment::Line { start, dir, len } => {
                let v = [p[0] - start[0], p[1] - start[1]];
                let s = (v[0] * dir[0] + v[1] * dir[1]).clamp(0.0, *len);
                let d = v[0] * dir[1] - v[1] * dir[0]; // cross(v, dir) = right offset
                let proj = [start[0] + dir[0] * s, start[1] + dir[1] * s];
                let dd = (p[0] - proj[0]).powi(2) + (p[1] - proj[1]).powi(2);
                (s, d, dd)
            }
            Segment::Arc {
                center,
                radius,
                start_ang,
                sweep,
            } => {
                let v = [p[0] - center[0], p[1] - center[1]];
                let rho = (v[0] * v[0] + v[1] * v[1]).sqrt().max(1e-9);
                let phi = v[1].atan2(v[0]);
                let rel = wrap_angle(phi - start_ang);
                let progress = (sweep.signum() * rel).clamp(0.0, sweep.abs());
                let s = progress * radius;
                let (proj, _) = self.pose_at(s);
                let dd = (p[0] - proj[0]).powi(2) + (p[1] - proj[1]).powi(2);
                let d = sweep.signum() * (rho - radius);
                (s, d, dd)
            }
        }
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a >= std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    }
    if a < -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

/// Piecewise lane centerline with arc-length parameterization.
#[derive(Clone, Debug)]
pub struct Path {
    segments: Vec<Segment>,
    offsets: Vec<f64>,
    total: f64,
}

impl Path {
    fn new(segments: Vec<Segment>) -> Self {
        let mut offsets = Vec::with_capacity(segments.len());
        let mut total = 0.0;
        for seg in &segments {
            offsets.push(total);
            total += seg.len();
        }
        Path {
            segments,
            offsets,
            total,
        }
    }

    pub fn total_len(&self) -> f64 {
        self.total
    }

    pub fn pose_at(&self, s: f64) -> ([f64; 2], f64) {
        let s = s.clamp(0.0, self.total);
        let idx = self
            .offsets
            .iter()
            .rposition(|&o| o <= s + 1e-9)
            .unwrap_or(0);
        self.segments[idx].pose_at(s - self.offsets[idx])
    }

    /// Projects a world point onto the path: (arc length, right offset).
    pub fn project(&self, p: [f64; 2]) -> (f64, f64) {
        let mut best = (0.0, 0.0, f64::INFINITY);
        for (i, seg) in self.segments.iter().enumerate() {
            let (s, d, dd) = seg.project(p);
            if dd < best.2 {
                best = (self.offsets[i] + s, d, dd);
            }
        }
        (best.0, best.1)
    }
}

// ---- motion profiles ----

#[derive(Clone, Debug)]
enum SpeedProfile {
    Const(f64),
    /// Linear deceleration from `v0` to zero at `t_stop`.
    Decel { v0: f64, t_stop: f64 },
}

impl SpeedProfile {
    fn speed(&self, t: f64) -> f64 {
        match self {
            SpeedProfile::Const(v) => *v,
            SpeedProfile::Decel { v0, t_stop } => (v0 * (1.0 - t / t_stop)).max(0.0),
        }
    }

    fn distance(&self, t: f64) -> f64 {
        match self {
            SpeedProfile::Const(v) => v * t,
            SpeedProfile::Decel { v0, t_stop } => {
                let tc = t.min(*t_stop);
                v0 * (tc - tc * tc / (2.0 * t_stop))
            }
        }
    }
}

#[derive(Clone, Debug)]
enum LateralProfile {
    None,
    /// Smoothstep shift between two right offsets inside a time window.
    Shift { from: f64, to: f64, t0: f64, t1: f64 },
    /// Out-and-back excursion (swerving around an obstacle).
    Bump { amp: f64, t0: f64, t1: f64 },
}

impl LateralProfile {
    fn offset(&self, t: f64) -> f64 {
        match self {
            LateralProfile::None => 0.0,
            LateralProfile::Shift { from, to, t0, t1 } => {
                let u = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                let s = u * u * (3.0 - 2.0 * u);
                from + (to - from) * s
            }
            LateralProfile::Bump { amp, t0, t1 } => {
                let u = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                amp * (std::f64::consts::PI * u).sin().powi(2)
            }
        }
    }
}

// ---- scene contents ----

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ObstacleKind {
    Car,
    Tree,
    Post,
}

#[derive(Clone, Debug)]
pub struct ObstaclePlan {
    pub pos0: [f64; 2],
    pub vel: [f64; 2],
    pub width: f64,
    pub height: f64,
    pub kind: ObstacleKind,
    pub color: [f32; 3],
}

impl ObstaclePlan {
    pub fn pos(&self, t: f64) -> [f64; 2] {
        [self.pos0[0] + self.vel[0] * t, self.pos0[1] + self.vel[1] * t]
    }
}

/// Road-surface overlays drawn by the renderer.
#[derive(Clone, Debug, Default)]
pub struct Decor {
    /// Crosswalk stripe band `[s0, s1]` in path arc length.
    pub crosswalk: Option<(f64, f64)>,
    /// Rail crossing band start (two rails drawn).
    pub rail: Option<f64>,
    /// Perpendicular road crossing at this arc length.
    pub cross_road: Option<f64>,
    /// Side road peeling off: (arc length, side: -1 left / +1 right).
    pub branch: Option<(f64, f64)>,
    /// Skyline variation seed.
    pub skyline_seed: u64,
    /// Sun bearing in world frame, radians.
    pub sun_bearing: f64,
}

/// Snapshot of the world at one instant.
#[derive(Clone, Debug)]
pub struct WorldState {
    /// (x, y, heading), heading in [-pi, pi)
    pub ego_pose: (f64, f64, f64),
    pub ego_speed: f64,
    pub obstacles: Vec<(f64, f64, f64, f64, f64, f64)>, // (x, y, vx, vy, w, h)
    /// Lane centerline sampled near the ego.
    pub road_polyline: Vec<[f64; 2]>,
    pub time: f64,
}

/// A fully instantiated episode blueprint: geometry, motion, obstacles,
/// labels. Frames render lazily from this.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub family: ScenarioFamily,
    pub seed: u64,
    pub duration_s: f64,
    pub height: usize,
    pub width: usize,
    pub command_id: u8,
    pub caption: String,
    pub(crate) path: Path,
    pub(crate) s_start: f64,
    speed: SpeedProfile,
    lateral: LateralProfile,
    pub obstacles: Vec<ObstaclePlan>,
    pub decor: Decor,
}

const MIX_FAMILIES: [(ScenarioFamily, f64); 9] = [
    (ScenarioFamily::Straight, 2.5),
    (ScenarioFamily::TurnLeft, 1.6),
    (ScenarioFamily::TurnRight, 1.6),
    (ScenarioFamily::LaneChangeLeft, 1.1),
    (ScenarioFamily::LaneChangeRight, 1.1),
    (ScenarioFamily::Stop, 1.4),
    (ScenarioFamily::UTurn, 0.6),
    (ScenarioFamily::IntersectionPass, 0.6),
    (ScenarioFamily::CrosswalkPass, 0.5),
];

fn pick_mix(rng: &mut SeedRng) -> ScenarioFamily {
    let total: f64 = MIX_FAMILIES.iter().map(|(_, w)| w).sum();
    let mut draw = rng.random_range(0.0..total);
    for (f, w) in MIX_FAMILIES {
        if draw < w {
            return f;
        }
        draw -= w;
    }
    ScenarioFamily::Straight
}

const LEAD_IN: f64 = 300.0;
const LEAD_OUT: f64 = 600.0;

struct FamilyBuild {
    segments: Vec<Segment>,
    speed: SpeedProfile,
    lateral: LateralProfile,
    decor: Decor,
    /// extra scene obstacles in (arc length, right offset) road coords
    road_obstacles: Vec<(f64, f64, ObstacleKind, [f64; 2])>,
}

impl Scenario {
    /// Deterministically instantiates the world for `(seed, config)`.
    pub fn build(seed: u64, config: &WorldConfig) -> Result<Self, super::WorldError> {
        if config.duration_s < 4.0 {
            return Err(super::WorldError::Config(format!(
                "duration must be >= 4 s, got {}",
                config.duration_s
            )));
        }
        if config.height == 0 || config.width == 0 {
            return Err(super::WorldError::Config("frame size must be nonzero".into()));
        }

        let mut rng = derive_rng(seed, 0xD57A);
        let family = match config.family {
            ScenarioFamily::Mix => pick_mix(&mut rng),
            f => f,
        };

        let fb = build_family(family, &mut rng);

        // Assemble full path: long lead-in line, maneuver, long lead-out line.
        let mut segments = vec![Segment::Line {
            start: [-LEAD_IN, 0.0],
            dir: [1.0, 0.0],
            len: LEAD_IN,
        }];
        segments.extend(fb.segments);
        // lead-out continues from wherever the maneuver ended
        let probe = Path::new(segments.clone());
        let (end_pos, end_heading) = probe.pose_at(probe.total_len());
        segments.push(Segment::Line {
            start: end_pos,
            dir: [end_heading.cos(), end_heading.sin()],
            len: LEAD_OUT,
        });
        let path = Path::new(segments);
        let s_start = LEAD_IN;

        // Roadside trees and posts along the traveled stretch.
        let mut obstacles = Vec::new();
        let travel = match &fb.speed {
            SpeedProfile::Const(v) => v * config.duration_s,
            SpeedProfile::Decel { v0, t_stop } => v0 * t_stop,
        };
        let mut s_obs = s_start - 12.0;
        let s_end = s_start + travel + 90.0;
        while s_obs < s_end {
            s_obs += rng.random_range(5.0..11.0);
            for side in [-1.0f64, 1.0] {
                if rng.random_range(0.0..1.0) < 0.55 {
                    let lateral = side * rng.random_range(6.8..11.0);
                    let kind = if rng.random_range(0.0..1.0) < 0.8 {
                        ObstacleKind::Tree
                    } else {
                        ObstacleKind::Post
                    };
                    let (w, h, color) = match kind {
                        ObstacleKind::Tree => (
                            rng.random_range(1.4..2.6),
                            rng.random_range(2.6..4.6),
                            [
                                0.10 + rng.random_range(0.0..0.10) as f32,
                                0.34 + rng.random_range(0.0..0.18) as f32,
                                0.12 + rng.random_range(0.0..0.08) as f32,
                            ],
                        ),
                        _ => (
                            rng.random_range(0.25..0.45),
                            rng.random_range(2.2..3.2),
                            [0.55, 0.55, 0.58],
                        ),
                    };
                    let (pos, heading) = path.pose_at(s_obs);
                    let right = [heading.sin(), -heading.cos()];
                    obstacles.push(ObstaclePlan {
                        pos0: [pos[0] + right[0] * lateral, pos[1] + right[1] * lateral],
                        vel: [0.0, 0.0],
                        width: w,
                        height: h,
                        kind,
                        color,
                    });
                }
            }
        }
        // Family-specific obstacles (stopped cars, parked cars, traffic).
        for (s_off, lat, kind, vel_along) in fb.road_obstacles {
            let (pos, heading) = path.pose_at(s_start + s_off);
            let right = [heading.sin(), -heading.cos()];
            let fwd = [heading.cos(), heading.sin()];
            let palette = [
                [0.75, 0.2, 0.2],
                [0.2, 0.3, 0.75],
                [0.8, 0.8, 0.82],
                [0.25, 0.25, 0.28],
                [0.75, 0.6, 0.2],
            ];
            let color = palette[rng.random_range(0..palette.len())];
            obstacles.push(ObstaclePlan {
                pos0: [pos[0] + right[0] * lat, pos[1] + right[1] * lat],
                vel: [
                    fwd[0] * vel_along[0] + right[0] * vel_along[1],
                    fwd[1] * vel_along[0] + right[1] * vel_along[1],
                ],
                width: 1.8,
                height: 1.5,
                kind,
                color: [color[0] as f32, color[1] as f32, color[2] as f32],
            });
        }

        let command_id = family.command_id();
        let command_text = commands::caption_for_command(command_id, &mut rng)?;
        let context = pick_context(family, &mut rng);
        let caption = format!("{command_text}, {context}");

        let mut decor = fb.decor;
        decor.skyline_seed = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(7);
        decor.sun_bearing = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);

        let mut scenario = Scenario {
            family,
            seed,
            duration_s: config.duration_s,
            height: config.height,
            width: config.width,
            command_id,
            caption,
            path,
            s_start,
            speed: fb.speed,
            lateral: fb.lateral,
            obstacles,
            decor,
        };
        scenario.clear_spawn_overlaps();
        Ok(scenario)
    }

    /// Obstacles never overlap the ego at t = 0.
    fn clear_spawn_overlaps(&mut self) {
        let (pos, _, _) = self.ego_pose(0.0);
        self.obstacles.retain(|o| {
            let p = o.pos(0.0);
            let d2 = (p[0] - pos[0]).powi(2) + (p[1] - pos[1]).powi(2);
            d2 > 3.0f64.powi(2)
        });
    }

    /// Ego world pose at time `t`: (position, heading, speed).
    pub fn ego_pose(&self, t: f64) -> ([f64; 2], f64, f64) {
        let eps = 0.01;
        let p = self.ego_pos_raw(t);
        let a = self.ego_pos_raw((t - eps).max(0.0));
        let b = self.ego_pos_raw(t + eps);
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let heading = if dx.abs() + dy.abs() < 1e-7 {
            // stationary: keep path tangent
            let (_, h) = self.path.pose_at(self.s_start + self.speed.distance(t));
            h
        } else {
            dy.atan2(dx)
        };
        (p, wrap_angle(heading), self.speed.speed(t))
    }

    fn ego_pos_raw(&self, t: f64) -> [f64; 2] {
        let s = self.s_start + self.speed.distance(t);
        let (pos, heading) = self.path.pose_at(s);
        let right = [heading.sin(), -heading.cos()];
        let l = self.lateral.offset(t);
        [pos[0] + right[0] * l, pos[1] + right[1] * l]
    }

    /// Full world snapshot for rendering or inspection.
    pub fn world_state(&self, t: f64) -> WorldState {
        let (pos, heading, speed) = self.ego_pose(t);
        let s_ego = self.s_start + self.speed.distance(t);
        let road_polyline = (-4..24)
            .map(|k| self.path.pose_at(s_ego + k as f64 * 5.0).0)
            .collect();
        WorldState {
            ego_pose: (pos[0], pos[1], heading),
            ego_speed: speed,
            obstacles: self
                .obstacles
                .iter()
                .map(|o| {
                    let p = o.pos(t);
                    (p[0], p[1], o.vel[0], o.vel[1], o.width, o.height)
                })
                .collect(),
            road_polyline,
            time: t,
        }
    }

    pub fn n_frames(&self) -> usize {
        (self.duration_s * 10.0).round() as usize
    }

    pub fn frame_time(&self, idx: usize) -> f64 {
        idx as f64 / 10.0
    }

    /// Ego-frame waypoints at 2 Hz over the whole episode, `[x right, y forward]`,
    /// starting at the origin.
    pub fn trajectory_2hz(&self) -> Vec<[f64; 2]> {
        let n = (self.n_frames() - 1) / 5 + 1;
        let (p0, h0, _) = self.ego_pose(0.0);
        let fwd = [h0.cos(), h0.sin()];
        let right = [h0.sin(), -h0.cos()];
        (0..n)
            .map(|k| {
                let (p, _, _) = self.ego_pose(k as f64 * 0.5);
                let v = [p[0] - p0[0], p[1] - p0[1]];
                [v[0] * right[0] + v[1] * right[1], v[0] * fwd[0] + v[1] * fwd[1]]
            })
            .collect()
    }

    /// Ego-frame waypoints relative to the pose at `t_ref`, sampled at 2 Hz
    /// starting `0.5 s` after `t_ref` (the planner/conditioning target).
    pub fn future_waypoints(&self, t_ref: f64, count: usize) -> Vec<[f64; 2]> {
        let (p0, h0, _) = self.ego_pose(t_ref);
        let fwd = [h0.cos(), h0.sin()];
        let right = [h0.sin(), -h0.cos()];
        (1..=count)
            .map(|k| {
                let (p, _, _) = self.ego_pose(t_ref + k as f64 * 0.5);
                let v = [p[0] - p0[0], p[1] - p0[1]];
                [v[0] * right[0] + v[1] * right[1], v[0] * fwd[0] + v[1] * fwd[1]]
            })
            .collect()
    }
}

fn build_family(family: ScenarioFamily, rng: &mut SeedRng) -> FamilyBuild {
    let mut decor = Decor::default();
    let mut road_obstacles: Vec<(f64, f64, ObstacleKind, [f64; 2])> = Vec::new();
    let straight_line = |len: f64| Segment::Line {
        start: [0.0, 0.0],
        dir: [1.0, 0.0],
        len,
    };

    match family {
        ScenarioFamily::Straight => {
            let v = rng.random_range(4.0..8.0);
            // occasional leading car to add motion variety
            if rng.random_range(0.0..1.0) < 0.35 {
                let gap = rng.random_range(9.0..16.0);
                let lead_v = v + rng.random_range(-0.5..1.0);
                road_obstacles.push((gap, 0.0, ObstacleKind::Car, [lead_v, 0.0]));
            }
            FamilyBuild {
                segments: vec![straight_line(1.0)],
                speed: SpeedProfile::Const(v),
                lateral: LateralProfile::None,
                decor,
                road_obstacles,
            }
        }
        ScenarioFamily::TurnLeft | ScenarioFamily::TurnRight => {
            let v = rng.random_range(3.0..5.0);
            let lead = v * rng.random_range(0.8..1.6);
            let radius = rng.random_range(7.0..12.0);
            let sweep_mag = rng.random_range(1.0..1.6); // 57..92 degrees
            let sweep = if family == ScenarioFamily::TurnLeft {
                sweep_mag
            } else {
                -sweep_mag
            };
            // entry at origin heading +x; arc center perpendicular
            let center = if sweep > 0.0 {
                [lead, radius]
            } else {
                [lead, -radius]
            };
            let start_ang = if sweep > 0.0 {
                -std::f64::consts::FRAC_PI_2
            } else {
                std::f64::consts::FRAC_PI_2
            };
            FamilyBuild {
                segments: vec![
                    straight_line(lead),
                    Segment::Arc {
                        center,
                        radius,
                        start_ang,
                        sweep,
                    },
                ],
                speed: SpeedProfile::Const(v),
                lateral: LateralProfile::None,
                decor,
                road_obstacles,
            }
        }
        ScenarioFamily::LaneChangeLeft | ScenarioFamily::LaneChangeRight => {
            let v = rng.random_range(4.0..7.0);
            let t0 = rng.random_range(0.7..1.4);
            let t1 = t0 + rng.random_range(1.2..2.0);
            let to = if family == ScenarioFamily::LaneChangeLeft {
                -LANE_SHIFT
            } else {
                LANE_SHIFT
            };
            // slower car ahead in the current lane motivates the change
            if rng.random_range(0.0..1.0) < 0.6 {
                let gap = rng.random_range(10.0..15.0);
                road_obstacles.push((gap, 0.0, ObstacleKind::Car, [v - 2.5, 0.0]));
            }
            FamilyBuild {
                segments: vec![straight_line(1.0)],
                speed: SpeedProfile::Const(v),
                lateral: LateralProfile::Shift {
                    from: 0.0,
                    to,
                    t0,
                    t1,
                },
                decor,
                road_obstacles,
            }
        }
        ScenarioFamily::Stop => {
            let v0 = rng.random_range(0.45..0.8);
            let t_stop = rng.random_range(1.0..1.8);
            // the stopped car we are queued behind
            let gap = rng.random_range(5.0..8.5);
            road_obstacles.push((gap, 0.0, ObstacleKind::Car, [0.0, 0.0]));
            FamilyBuild {
                segments: vec![straight_line(1.0)],
                speed: SpeedProfile::Decel { v0, t_stop },
                lateral: LateralProfile::None,
                decor,
                road_obstacles,
            }
        }
        ScenarioFamily::UTurn => {
            let v = rng.random_range(3.0..3.5);
            let lead = v * rng.random_range(0.3..0.6);
            let radius = rng.random_range(3.2..4.2);
            FamilyBuild {
                segments: vec![
                    straight_line(lead),
                    Segment::Arc {
                        center: [lead, radius],
                        radius,
                        start_ang: -std::f64::consts::FRAC_PI_2,
                        sweep: std::f64::consts::PI,
                    },
                ],
                speed: SpeedProfile::Const(v),
                lateral: LateralProfile::None,
                decor,
                road_obstacles,
            }
        }
        ScenarioFamily::IntersectionPass => {
            let v = rng.random_range(4.0..6.0);
            decor.cross_road = Some(LEAD_IN + v * rng.random_range(1.5..2.5));
            FamilyBuild {
                segments: vec![straight_line(1.0)],
                speed: SpeedProfile::Const(v),
                lateral: LateralProfile::None,
                decor,
                road_obstacles,
            }
        }
        ScenarioFamily::CrosswalkPass => {
            let v = rng.random_range(3.5..5.5);
            let s0 = LEAD_IN + v * rng.random_range(1.2..2.2);
            decor.crosswalk = Some((s0, s0 + 2.8));
            FamilyBuild {
                segments: vec![straight_line(1.0)],
                speed: SpeedProfile::Const(v),
                lateral: LateralProfile::None,
                decor,
                road_obstacles,
            }
        }
        ScenarioFamily::RailPass => {
            let v = rng.random_range(3.5..5.5);
            decor.rail = Some(LEAD_IN + v * rng.random_range(1.2..2.2));
            FamilyBuild {
                segments: vec![straight_line(1.0)],
                speed: SpeedProfile::Const(v),
                lateral: LateralProfile::None,
                decor,
                road_obstacles,
            }
        }
        ScenarioFamily::Merge => {
            let v = rng.random_range(4.0..6.5);
            let t0 = rng.random_range(0.6..1.2);
            let t1 = t0 + rng.random_range(1.4..2.2);
            FamilyBuild {
                segments: vec![straight_line(1.0)],
                speed: SpeedProfile::Const(v),
                lateral: LateralProfile::Shift {
                    from: LANE_SHIFT,
                    to: 0.0,
                    t0,
                    t1,
                },
                decor,
                road_obstacles,
            }
        }
        ScenarioFamily::LaneBranchLeft | ScenarioFamily::LaneBranchRight => {
            let v = rng.random_range(4.0..6.0);
            let side = if family == ScenarioFamily::LaneBranchLeft {
                -1.0
            } else {
                1.0
            };
            let t0 = rng.random_range(0.8..1.4);
            let t1 = t0 + rng.random_range(1.4..2.0);
            decor.branch = Some((LEAD_IN + v * t0, side));
            FamilyBuild {
                segments: vec![straight_line(1.0)],
                speed: SpeedProfile::Const(v),
                lateral: LateralProfile::Shift {
                    from: 0.0,
                    to: side * LANE_SHIFT,
                    t0,
                    t1,
                },
                decor,
                road_obstacles,
            }
        }
        ScenarioFamily::Deviate => {
            let v = rng.random_range(3.5..5.5);
            let t_obs = rng.random_range(1.2..1.8);
            road_obstacles.push((v * t_obs + 3.0, 0.9, ObstacleKind::Car, [0.0, 0.0]));
            FamilyBuild {
                segments: vec![straight_line(1.0)],
                speed: SpeedProfile::Const(v),
                lateral: LateralProfile::Bump {
                    amp: -rng.random_range(1.4..1.9),
                    t0: t_obs - 0.9,
                    t1: t_obs + 1.3,
                },
                decor,
                road_obstacles,
            }
        }
        ScenarioFamily::Mix => unreachable!("resolved by caller"),
    }
}

const GENERIC_CONTEXTS: &[&str] = &[
    "a car driving down a two lane road",
    "a car driving down a road with trees on both sides",
    "an empty road in the countryside",
    "a car driving on a quiet rural road",
    "a view of the road from the driver's seat",
    "a car driving down a road under a clear sky",
];

fn pick_context(family: ScenarioFamily, rng: &mut SeedRng) -> &'static str {
    let specific: &[&str] = match family {
        ScenarioFamily::Straight => &[
            "a car driving down a straight road",
            "a car following another car down the road",
            "a long straight road ahead",
        ],
        ScenarioFamily::TurnLeft | ScenarioFamily::TurnRight => &[
            "a car driving on a curving road",
            "a car approaching a bend in the road",
            "a winding road with trees",
        ],
        ScenarioFamily::LaneChangeLeft | ScenarioFamily::LaneChangeRight => &[
            "a car changing lanes on an open road",
            "a slow car ahead on a two lane road",
        ],
        ScenarioFamily::Stop => &[
            "a car waiting behind a stopped car",
            "a stopped car on the road ahead",
            "a car slowing down on a quiet road",
        ],
        ScenarioFamily::UTurn => &[
            "a car turning around on a wide road",
            "an open road with space to turn",
        ],
        ScenarioFamily::IntersectionPass => &[
            "a car approaching an intersection",
            "a crossroad in the countryside",
        ],
        ScenarioFamily::CrosswalkPass => &[
            "a crosswalk on a quiet street",
            "a road with a crossing area ahead",
        ],
        ScenarioFamily::RailPass => &[
            "a railroad crossing on a country road",
            "rails crossing the road ahead",
        ],
        ScenarioFamily::Merge => &[
            "a car merging onto a two lane road",
            "an on ramp joining the road",
        ],
        ScenarioFamily::LaneBranchLeft | ScenarioFamily::LaneBranchRight => &[
            "a fork in the road ahead",
            "a side road branching off",
        ],
        ScenarioFamily::Deviate => &[
            "a parked car on the side of the road",
            "a car steering around a parked car",
        ],
        ScenarioFamily::Mix => &[],
    };
    let total = specific.len() + GENERIC_CONTEXTS.len();
    let idx = rng.random_range(0..total);
    if idx < specific.len() {
        specific[idx]
    } else {
        GENERIC_CONTEXTS[idx - specific.len()]
    }
}

/// Every context string the generator can emit (vocabulary construction).
/// Kept in sync with `pick_context`.
pub fn all_context_templates() -> Vec<&'static str> {
    let mut out: Vec<&'static str> = GENERIC_CONTEXTS.to_vec();
    out.extend_from_slice(&[
        "a car driving down a straight road",
        "a car following another car down the road",
        "a long straight road ahead",
        "a car driving on a curving road",
        "a car approaching a bend in the road",
        "a winding road with trees",
        "a car changing lanes on an open road",
        "a slow car ahead on a two lane road",
        "a car waiting behind a stopped car",
        "a stopped car on the road ahead",
        "a car slowing down on a quiet road",
        "a car turning around on a wide road",
        "an open road with space to turn",
        "a car approaching an intersection",
        "a crossroad in the countryside",
        "a crosswalk on a quiet street",
        "a road with a crossing area ahead",
        "a railroad crossing on a country road",
        "rails crossing the road ahead",
        "a car merging onto a two lane road",
        "an on ramp joining the road",
        "a fork in the road ahead",
        "a side road branching off",
        "a parked car on the side of the road",
        "a car steering around a parked car",
    ]);
    out
}
