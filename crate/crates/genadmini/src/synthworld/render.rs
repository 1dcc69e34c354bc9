//! Flat-shaded perspective renderer for the synthetic world.
//!
//! Ground pixels are classified by back-projecting onto the ground plane and
//! asking the road geometry for (arc length, lateral offset); obstacles are
//! depth-sorted billboards. Everything is a pure function of the scenario
//! and the timestamp.

use ndarray::Array3;

use super::scenario::{ObstacleKind, Scenario, ROAD_HALF_WIDTH};

const CAM_HEIGHT: f64 = 1.5;
const MAX_DEPTH: f64 = 110.0;

/// Deterministic integer hash to a unit float.
fn hash_unit(x: u64) -> f64 {
    let mut z = x.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z = z ^ (z >> 31);
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn hash2(a: i64, b: i64, seed: u64) -> f64 {
    hash_unit((a as u64).wrapping_mul(0x517CC1B727220A95) ^ (b as u64).rotate_left(32) ^ seed)
}

#[derive(Clone, Copy)]
struct Rgb(f32, f32, f32);

impl Rgb {
    fn mix(self, other: Rgb, t: f32) -> Rgb {
        Rgb(
            self.0 + (other.0 - self.0) * t,
            self.1 + (other.1 - self.1) * t,
            self.2 + (other.2 - self.2) * t,
        )
    }
    fn scale(self, k: f32) -> Rgb {
        Rgb(self.0 * k, self.1 * k, self.2 * k)
    }
}

const SKY_TOP: Rgb = Rgb(0.40, 0.58, 0.85);
const SKY_HORIZON: Rgb = Rgb(0.74, 0.80, 0.88);
const ROAD: Rgb = Rgb(0.30, 0.30, 0.32);
const GRASS: Rgb = Rgb(0.26, 0.40, 0.22);
const MARKING: Rgb = Rgb(0.92, 0.92, 0.88);
const EDGE_LINE: Rgb = Rgb(0.85, 0.85, 0.80);
const SKYLINE: Rgb = Rgb(0.38, 0.40, 0.46);
const RAIL: Rgb = Rgb(0.45, 0.40, 0.36);

/// Renders one RGB frame, values in `[0, 1]`, shape `(H, W, 3)`.
pub fn render_frame(sc: &Scenario, t: f64) -> Array3<f32> {
    let (h, w) = (sc.height, sc.width);
    let ([ex, ey], heading, _) = sc.ego_pose(t);
    let fwd = [heading.cos(), heading.sin()];
    let right = [heading.sin(), -heading.cos()];

    let focal = (w as f64 / 2.0) / (45.0f64.to_radians()).tan();
    let horizon = (h as f64 * 0.40).floor();

    let mut img = Array3::<f32>::zeros((h, w, 3));

    for v in 0..h {
        for u in 0..w {
            let x_cam = (u as f64 - w as f64 / 2.0 + 0.5) / focal;
            let y_cam = (v as f64 - horizon + 0.5) / focal;
            let color = if y_cam <= 0.0 {
                sky_pixel(sc, heading, x_cam, -y_cam, focal)
            } else {
                let depth = (CAM_HEIGHT / y_cam).min(MAX_DEPTH);
                if depth >= MAX_DEPTH {
                    SKY_HORIZON
                } else {
                    let px = ex + fwd[0] * depth + right[0] * (x_cam * depth);
                    let py = ey + fwd[1] * depth + right[1] * (x_cam * depth);
                    let base = ground_pixel(sc, [px, py]);
                    // distance haze
                    base.mix(SKY_HORIZON, (depth / MAX_DEPTH) as f32 * 0.7)
                }
            };
            img[[v, u, 0]] = color.0.clamp(0.0, 1.0);
            img[[v, u, 1]] = color.1.clamp(0.0, 1.0);
            img[[v, u, 2]] = color.2.clamp(0.0, 1.0);
        }
    }

    draw_obstacles(sc, t, [ex, ey], fwd, right, focal, horizon, &mut img);
    img
}

fn sky_pixel(sc: &Scenario, heading: f64, x_cam: f64, up: f64, focal: f64) -> Rgb {
    // bearing of this column in world coordinates
    let bearing = heading - x_cam.atan();
    let cell = (bearing / 0.12).floor() as i64;
    let skyline_h = 0.5 + 1.3 * hash2(cell, 0, sc.decor.skyline_seed);
    let skyline_px = skyline_h * focal / 28.0; // buildings ~28 m away
    let up_px = up * focal;
    if up_px < skyline_px {
        let tint = 0.9 + 0.2 * hash2(cell, 3, sc.decor.skyline_seed) as f32;
        return SKYLINE.scale(tint);
    }
    // sun disk
    let sun_delta = super::scenario::wrap_angle(bearing - sc.decor.sun_bearing);
    if sun_delta.abs() < 0.06 && up_px > skyline_px + 2.0 && up < 0.35 {
        return Rgb(1.0, 0.95, 0.75);
    }
    let g = (up * 2.2).clamp(0.0, 1.0) as f32;
    SKY_HORIZON.mix(SKY_TOP, g)
}

fn ground_pixel(sc: &Scenario, p: [f64; 2]) -> Rgb {
    let (s, d) = sc.path.project(p);

    // perpendicular crossing road: same surface, crossing band of width 7 m
    if let Some(s_cross) = sc.decor.cross_road {
        if (s - s_cross).abs() < 7.0 && d.abs() < 40.0 {
            return road_surface(s, d, true);
        }
    }
    if let Some((s0, side)) = sc.decor.branch {
        // branch wedge peeling off to one side
        let along = s - s0;
        if along > 0.0 && along < 60.0 {
            let center = side * (ROAD_HALF_WIDTH + along * 0.35);
            if (d - center).abs() < ROAD_HALF_WIDTH * 0.7 {
                return road_surface(s, d - center, false);
            }
        }
    }

    if d.abs() <= ROAD_HALF_WIDTH {
        if let Some((c0, c1)) = sc.decor.crosswalk {
            if s >= c0 && s <= c1 {
                // stripes run across the road
                let stripe = ((d + ROAD_HALF_WIDTH) / 0.9).floor() as i64;
                return if stripe.rem_euclid(2) == 0 {
                    MARKING
                } else {
                    ROAD.scale(0.9)
                };
            }
        }
        if let Some(r0) = sc.decor.rail {
            let rel = s - r0;
            if (0.0..4.0).contains(&rel) {
                if (rel - 0.8).abs() < 0.18 || (rel - 3.2).abs() < 0.18 {
                    return RAIL.scale(0.7);
                }
                return RAIL;
            }
        }
        return road_surface(s, d, false);
    }

    // grass with mild deterministic texture
    let tex = hash2((p[0] * 0.7).floor() as i64, (p[1] * 0.7).floor() as i64, 11) as f32;
    GRASS.scale(0.92 + 0.16 * tex)
}

fn road_surface(s: f64, d: f64, is_cross: bool) -> Rgb {
    // center dashed line
    if d.abs() < 0.14 && !is_cross && (s / 4.0).fract().abs() < 0.5 {
        return MARKING;
    }
    // solid edge lines
    if (d.abs() - (ROAD_HALF_WIDTH - 0.25)).abs() < 0.14 {
        return EDGE_LINE;
    }
    let tex = hash2((s * 1.3).floor() as i64, (d * 1.3).floor() as i64, 5) as f32;
    ROAD.scale(0.95 + 0.10 * tex)
}

#[allow(clippy::too_many_arguments)]
fn draw_obstacles(
    sc: &Scenario,
    t: f64,
    ego: [f64; 2],
    fwd: [f64; 2],
    right: [f64; 2],
    focal: f64,
    horizon: f64,
    img: &mut Array3<f32>,
) {
    let (h, w) = (sc.height, sc.width);
    let mut visible: Vec<(f64, usize)> = Vec::new();
    for (i, o) in sc.obstacles.iter().enumerate() {
        let p = o.pos(t);
        let dx = [p[0] - ego[0], p[1] - ego[1]];
        let z = dx[0] * fwd[0] + dx[1] * fwd[1];
        if z > 0.8 && z < MAX_DEPTH {
            visible.push((z, i));
        }
    }
    // painter's algorithm: far to near
    visible.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    for (z, i) in visible {
        let o = &sc.obstacles[i];
        let p = o.pos(t);
        let dx = [p[0] - ego[0], p[1] - ego[1]];
        let x = dx[0] * right[0] + dx[1] * right[1];

        let u_center = w as f64 / 2.0 + focal * x / z;
        let v_bottom = horizon + focal * CAM_HEIGHT / z;
        let half_w = focal * (o.width / 2.0) / z;
        let h_px = focal * o.height / z;
        let haze = (z / MAX_DEPTH) as f32 * 0.7;
        let base = Rgb(o.color[0], o.color[1], o.color[2]).mix(SKY_HORIZON, haze);

        let mut fill = |u0: f64, u1: f64, v0: f64, v1: f64, c: Rgb| {
            let ua = u0.floor().max(0.0) as isize;
            let ub = u1.ceil().min(w as f64) as isize;
            let va = v0.floor().max(0.0) as isize;
            let vb = v1.ceil().min(h as f64) as isize;
            for vv in va..vb {
                for uu in ua..ub {
                    img[[vv as usize, uu as usize, 0]] = c.0.clamp(0.0, 1.0);
                    img[[vv as usize, uu as usize, 1]] = c.1.clamp(0.0, 1.0);
                    img[[vv as usize, uu as usize, 2]] = c.2.clamp(0.0, 1.0);
                }
            }
        };

        match o.kind {
            ObstacleKind::Car => {
                // body with darker skirt and lighter glass band
                fill(
                    u_center - half_w,
                    u_center + half_w,
                    v_bottom - h_px,
                    v_bottom,
                    base,
                );
                fill(
                    u_center - half_w,
                    u_center + half_w,
                    v_bottom - 0.25 * h_px,
                    v_bottom,
                    base.scale(0.55),
                );
                fill(
                    u_center - half_w * 0.7,
                    u_center + half_w * 0.7,
                    v_bottom - 0.95 * h_px,
                    v_bottom - 0.6 * h_px,
                    base.mix(Rgb(0.75, 0.85, 0.95), 0.6),
                );
            }
            ObstacleKind::Tree => {
                let trunk = Rgb(0.35, 0.25, 0.16).mix(SKY_HORIZON, haze);
                fill(
                    u_center - half_w * 0.15,
                    u_center + half_w * 0.15,
                    v_bottom - 0.45 * h_px,
                    v_bottom,
                    trunk,
                );
                fill(
                    u_center - half_w,
                    u_center + half_w,
                    v_bottom - h_px,
                    v_bottom - 0.35 * h_px,
                    base,
                );
            }
            ObstacleKind::Post => {
                fill(
                    u_center - half_w,
                    u_center + half_w,
                    v_bottom - h_px,
                    v_bottom,
                    base,
                );
            }
        }
    }
}
