//! Ego-vehicle command ids, the caption dictionary, trajectory-rule
//! classification, and the keyword text filter.
//!
//! Commands are integers in `[0, 13]`. Motion-level ids (forward, turns,
//! lane changes, U-turn, stop) are decidable from the trajectory alone;
//! context ids (intersection, branches, crosswalk, rail, merge, deviate)
//! are emitted only by their dedicated scenario families and map to a
//! motion-level equivalent for rule checks.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_COMMANDS: usize = 14;

/// Caption set per command id. Index = command id.
pub const COMMAND_CAPTIONS: [&[&str]; NUM_COMMANDS] = [
    // 0: forward
    &[
        "Move forward.",
        "Move steady.",
        "Go forward.",
        "Go straight.",
        "Proceed.",
        "Drive forward.",
        "Drive straight.",
        "Drive steady.",
        "Keep the direction.",
        "Maintain the direction.",
    ],
    // 1: intersection passing
    &[
        "Pass the intersection.",
        "Cross the intersection.",
        "Traverse the intersection.",
        "Drive through the intersection.",
        "Move past the intersection.",
        "Pass the junction.",
        "Cross the junction.",
        "Traverse the junction.",
        "Drive through the junction.",
        "Move past the junction.",
        "Pass the crossroad.",
        "Cross the crossroad.",
        "Traverse the crossroad.",
        "Drive through the crossroad.",
        "Move past the crossroad.",
    ],
    // 2: left turn
    &[
        "Turn left.",
        "Turn to the left.",
        "Make a left turn.",
        "Take a left turn.",
        "Turn to the left.",
        "Left turn.",
        "Steer left.",
        "Steer to the left.",
    ],
    // 3: right turn
    &[
        "Turn right.",
        "Turn to the right.",
        "Make a right turn.",
        "Take a right turn.",
        "Turn to the right.",
        "Right turn.",
        "Steer right.",
        "Steer to the right.",
    ],
    // 4: left lane change
    &[
        "Make a left lane change.",
        "Change to the left lane.",
        "Switch to the left lane.",
        "Shift to the left lane.",
        "Move to the left lane.",
    ],
    // 5: right lane change
    &[
        "Make a right lane change.",
        "Change to the right lane.",
        "Switch to the right lane.",
        "Shift to the right lane.",
        "Move to the right lane.",
    ],
    // 6: left lane branch
    &[
        "Go to the left lane branch.",
        "Take the left lane branch.",
        "Move into the left lane branch.",
        "Follow the left lane branch.",
        "Follow the left side road.",
    ],
    // 7: right lane branch
    &[
        "Go to the right lane branch.",
        "Take the right lane branch.",
        "Move into the right lane branch.",
        "Follow the right lane branch.",
        "Follow the right side road.",
    ],
    // 8: crosswalk passing
    &[
        "Pass the crosswalk.",
        "Cross the crosswalk.",
        "Traverse the crosswalk.",
        "Drive through the crosswalk.",
        "Move past the crosswalk.",
        "Pass the crossing area.",
        "Cross the crossing area.",
        "Traverse the crossing area.",
        "Drive through the crossing area.",
        "Move past the crossing area.",
    ],
    // 9: rail passing
    &[
        "Pass the railroad.",
        "Cross the railroad.",
        "Traverse the railroad.",
        "Drive through the railroad.",
        "Move past the railroad.",
        "Pass the railway.",
        "Cross the railway.",
        "Traverse the railway.",
        "Drive through the railway.",
        "Move past the railway.",
    ],
    // 10: merge
    &[
        "Merge.",
        "Merge traffic.",
        "Merge into traffic.",
        "Merge into the traffic.",
        "Join the traffic.",
        "Merge into the traffic flow.",
        "Join the traffic flow.",
        "Merge into the traffic stream.",
        "Join the traffic stream.",
        "Merge into the lane.",
    ],
    // 11: U-turn
    &[
        "Make a U-turn.",
        "Make a 180-degree turn.",
        "Turn 180 degree.",
        "Turn around.",
        "Drive in a U-turn.",
    ],
    // 12: stop / decelerate
    &["Stop.", "Halt.", "Decelerate.", "Slow down.", "Brake."],
    // 13: deviate
    &[
        "Deviate.",
        "Deviate from the path.",
        "Deviate from the lane.",
        "Change the direction.",
        "Shift the direction.",
    ],
];

#[derive(Debug, Error, PartialEq)]
pub enum CommandError {
    #[error("command id {0} out of range 0..14")]
    IdOutOfRange(u8),
    #[error("trajectory needs at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
}

/// Uniformly samples one caption string for a command id.
pub fn caption_for_command(command_id: u8, rng: &mut impl Rng) -> Result<&'static str, CommandError> {
    let set = COMMAND_CAPTIONS
        .get(command_id as usize)
        .ok_or(CommandError::IdOutOfRange(command_id))?;
    Ok(set[rng.random_range(0..set.len())])
}

/// Thresholds for the trajectory-rule classifier.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommandRuleConfig {
    /// Below this total path length the episode counts as stopped (meters).
    pub stop_path_len: f64,
    /// Net heading change that marks a turn (degrees).
    pub turn_deg: f64,
    /// Net heading change that marks a U-turn (degrees).
    pub uturn_deg: f64,
    /// Final lateral offset that marks a lane change (meters).
    pub lane_offset: f64,
    /// Lane changes must stay under this net heading change (degrees).
    pub lane_heading_deg: f64,
    /// Steps shorter than this carry no usable direction (meters).
    pub min_step: f64,
}

impl Default for CommandRuleConfig {
    fn default() -> Self {
        CommandRuleConfig {
            stop_path_len: 1.0,
            turn_deg: 30.0,
            uturn_deg: 135.0,
            lane_offset: 1.5,
            lane_heading_deg: 15.0,
            min_step: 0.05,
        }
    }
}

/// Classifies an ego-frame trajectory into a motion-level command id.
///
/// Waypoints are `[x, y]` with `x` meters to the right of the initial
/// heading and `y` meters forward; `trajectory[0]` must be the origin.
/// Tie-break order: stop > U-turn > turn > lane change > forward.
pub fn command_from_trajectory(
    trajectory: &[[f64; 2]],
    cfg: &CommandRuleConfig,
) -> Result<u8, CommandError> {
    if trajectory.len() < 2 {
        return Err(CommandError::TooFewWaypoints(trajectory.len()));
    }
    let steps: Vec<[f64; 2]> = trajectory
        .windows(2)
        .map(|w| [w[1][0] - w[0][0], w[1][1] - w[0][1]])
        .collect();
    let path_len: f64 = steps.iter().map(|s| (s[0] * s[0] + s[1] * s[1]).sqrt()).sum();
    if path_len < cfg.stop_path_len {
        return Ok(12);
    }

    // Accumulated signed heading change over direction-bearing steps;
    // positive = left (x points right, y forward).
    let significant: Vec<[f64; 2]> = steps
        .iter()
        .copied()
        .filter(|s| (s[0] * s[0] + s[1] * s[1]).sqrt() > cfg.min_step)
        .collect();
    let mut net_heading = 0.0f64;
    for w in significant.windows(2) {
        let (a, b) = (w[0], w[1]);
        let cross = a[0] * b[1] - a[1] * b[0];
        let dot = a[0] * b[0] + a[1] * b[1];
        net_heading += cross.atan2(dot);
    }
    let net_deg = net_heading.to_degrees();

    if net_deg.abs() > cfg.uturn_deg {
        return Ok(11);
    }
    if net_deg.abs() > cfg.turn_deg {
        return Ok(if net_deg > 0.0 { 2 } else { 3 });
    }
    let lateral = trajectory.last().unwrap()[0];
    if lateral.abs() > cfg.lane_offset && net_deg.abs() < cfg.lane_heading_deg {
        // moving left decreases x
        return Ok(if lateral < 0.0 { 4 } else { 5 });
    }
    Ok(0)
}

/// Motion-level id a context command degenerates to under pure trajectory
/// rules (context ids need visual context the rules cannot see).
pub fn motion_equivalent(command_id: u8) -> u8 {
    match command_id {
        1 | 8 | 9 | 13 => 0, // straight-through or return-to-lane geometry
        6 | 10 => 4,         // left branch / ramp merge ride a left lane shift
        7 => 5,              // right branch rides a right lane shift
        other => other,
    }
}

/// Keyword-based caption filter; rejects captions that contain any
/// configured keyword as a case-insensitive substring.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KeywordFilter {
    pub keywords: Vec<String>,
}

impl Default for KeywordFilter {
    fn default() -> Self {
        KeywordFilter {
            keywords: ["words", "watermark", "dark night", "dark street", "blur"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl KeywordFilter {
    /// `true` = keep, `false` = reject.
    pub fn accepts(&self, caption: &str) -> bool {
        let lower = caption.to_lowercase();
        !self
            .keywords
            .iter()
            .any(|k| lower.contains(&k.to_lowercase()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn table_shape_matches_dictionary() {
        assert_eq!(COMMAND_CAPTIONS.len(), 14);
        for set in COMMAND_CAPTIONS.iter() {
            assert!(!set.is_empty());
        }
        assert_eq!(COMMAND_CAPTIONS[2].len(), 8);
        assert_eq!(COMMAND_CAPTIONS[11].len(), 5);
    }

    #[test]
    fn uturn_captions_verbatim() {
        let expected = [
            "Make a U-turn.",
            "Make a 180-degree turn.",
            "Turn 180 degree.",
            "Turn around.",
            "Drive in a U-turn.",
        ];
        let mut rng = rng_from_seed(5);
        for _ in 0..50 {
            let c = caption_for_command(11, &mut rng).unwrap();
            assert!(expected.contains(&c));
        }
    }

    #[test]
    fn caption_errors_out_of_range() {
        let mut rng = rng_from_seed(5);
        assert_eq!(
            caption_for_command(14, &mut rng),
            Err(CommandError::IdOutOfRange(14))
        );
    }

    #[test]
    fn caption_deterministic_under_seed() {
        let a = caption_for_command(0, &mut rng_from_seed(9)).unwrap();
        let b = caption_for_command(0, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    /// Chi-square against uniform over list entries; the duplicated caption
    /// in the turn sets carries double probability mass.
    #[test]
    fn caption_sampling_uniform_for_left_turn() {
        use std::collections::HashMap;
        let mut rng = rng_from_seed(42);
        let n = 10_000usize;
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for _ in 0..n {
            *counts.entry(caption_for_command(2, &mut rng).unwrap()).or_default() += 1;
        }
        let mut mult: HashMap<&str, usize> = HashMap::new();
        for &c in COMMAND_CAPTIONS[2] {
            *mult.entry(c).or_default() += 1;
        }
        // 3-sigma bound per distinct string
        let total = COMMAND_CAPTIONS[2].len() as f64;
        for (s, &m) in &mult {
            let p = m as f64 / total;
            let mean = n as f64 * p;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            let got = *counts.get(s).unwrap_or(&0) as f64;
            assert!(
                (got - mean).abs() <= 3.0 * sd,
                "caption {s:?}: {got} outside {mean} +- 3*{sd}"
            );
        }
    }

    #[test]
    fn stop_rule_on_degenerate_motion() {
        let traj: Vec<[f64; 2]> = (0..8).map(|i| [0.0, i as f64 * 0.05]).collect();
        assert_eq!(command_from_trajectory(&traj, &Default::default()).unwrap(), 12);
    }

    #[test]
    fn forward_rule_on_straight_line() {
        let traj: Vec<[f64; 2]> = (0..7).map(|i| [0.0, i as f64 * 2.5]).collect();
        assert_eq!(command_from_trajectory(&traj, &Default::default()).unwrap(), 0);
    }

    /// Analytic left arc with +60 degrees of net heading.
    #[test]
    fn left_turn_rule_on_arc() {
        let radius = 12.0f64;
        let total = 60.0f64.to_radians();
        let traj: Vec<[f64; 2]> = (0..13)
            .map(|i| {
                let a = total * i as f64 / 12.0;
                // left arc center at (-radius, 0) in ego frame
                [-radius + radius * a.cos(), radius * a.sin()]
            })
            .collect();
        assert_eq!(command_from_trajectory(&traj, &Default::default()).unwrap(), 2);
    }

    #[test]
    fn right_turn_rule_on_arc() {
        let radius = 12.0f64;
        let total = -60.0f64.to_radians();
        let traj: Vec<[f64; 2]> = (0..13)
            .map(|i| {
                let a = total * i as f64 / 12.0;
                [radius - radius * a.cos(), -radius * a.sin()]
            })
            .collect();
        assert_eq!(command_from_trajectory(&traj, &Default::default()).unwrap(), 3);
    }

    #[test]
    fn lane_change_rules() {
        // left lane change: smooth shift to x = -3.6 while driving forward
        let traj: Vec<[f64; 2]> = (0..10)
            .map(|i| {
                let t = i as f64 / 9.0;
                let s = t * t * (3.0 - 2.0 * t); // smoothstep
                [-3.6 * s, 20.0 * t]
            })
            .collect();
        assert_eq!(command_from_trajectory(&traj, &Default::default()).unwrap(), 4);
        let mirrored: Vec<[f64; 2]> = traj.iter().map(|p| [-p[0], p[1]]).collect();
        assert_eq!(
            command_from_trajectory(&mirrored, &Default::default()).unwrap(),
            5
        );
    }

    #[test]
    fn uturn_rule() {
        let radius = 5.0f64;
        let traj: Vec<[f64; 2]> = (0..13)
            .map(|i| {
                let a = std::f64::consts::PI * i as f64 / 12.0;
                [-radius + radius * a.cos(), radius * a.sin()]
            })
            .collect();
        assert_eq!(command_from_trajectory(&traj, &Default::default()).unwrap(), 11);
    }

    #[test]
    fn too_few_waypoints_rejected() {
        assert_eq!(
            command_from_trajectory(&[[0.0, 0.0]], &Default::default()),
            Err(CommandError::TooFewWaypoints(1))
        );
    }

    #[test]
    fn filter_keeps_clean_and_rejects_keywords() {
        let f = KeywordFilter::default();
        assert!(f.accepts("a car driving down a highway"));
        assert!(!f.accepts("a blurry image of a street"));
        assert!(!f.accepts("A WATERMARK in the corner"));
        let empty = KeywordFilter { keywords: vec![] };
        assert!(empty.accepts("anything at all, even blur"));
    }
}
