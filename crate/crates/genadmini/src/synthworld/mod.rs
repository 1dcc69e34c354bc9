//! Deterministic synthetic driving world.
//!
//! Episodes are pure functions of `(seed, config)`: a scenario family picks
//! road geometry and a motion profile, the renderer produces ego-view RGB
//! frames at 10 Hz, and the trajectory rules label the ego maneuver. The
//! caption pairs a command phrase from the fixed dictionary with a scene
//! context template.

pub mod commands;
pub mod npy;
pub mod render;
pub mod scenario;
pub mod store;

use ndarray::Array4;
use rayon::prelude::*;
use thiserror::Error;

pub use commands::{
    caption_for_command, command_from_trajectory, motion_equivalent, CommandError,
    CommandRuleConfig, KeywordFilter, COMMAND_CAPTIONS, NUM_COMMANDS,
};
pub use scenario::{Scenario, ScenarioFamily, WorldConfig, WorldState};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Command(#[from] CommandError),
    #[error(transparent)]
    Npy(#[from] npy::NpyError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// A rendered episode with its labels.
#[derive(Clone, Debug)]
pub struct Episode {
    pub seed: u64,
    pub scenario: ScenarioFamily,
    /// `(T, H, W, 3)` RGB frames in `[0, 1]` at `fps`.
    pub frames: Array4<f32>,
    /// 2 Hz ego-frame waypoints starting at the origin, `[x right, y fwd]`.
    pub trajectory: Vec<[f64; 2]>,
    pub command_id: u8,
    pub caption: String,
    pub fps: u32,
}

/// Generates one fully rendered episode. Pure in `(seed, config)`.
pub fn generate_episode(seed: u64, config: &WorldConfig) -> Result<Episode, WorldError> {
    let sc = Scenario::build(seed, config)?;
    let n = sc.n_frames();
    let (h, w) = (sc.height, sc.width);
    let mut frames = Array4::<f32>::zeros((n, h, w, 3));
    for (i, mut frame) in frames.outer_iter_mut().enumerate() {
        frame.assign(&render::render_frame(&sc, sc.frame_time(i)));
    }
    let trajectory = sc.trajectory_2hz();
    debug_assert_eq!(
        command_from_trajectory(&trajectory, &config.rules)?,
        motion_equivalent(sc.command_id),
        "generator and rule labeler disagree (seed {seed}, family {:?})",
        sc.family
    );
    Ok(Episode {
        seed,
        scenario: sc.family,
        frames,
        trajectory,
        command_id: sc.command_id,
        caption: sc.caption,
        fps: 10,
    })
}

/// Builds scenarios for a seed range in parallel (no frames rendered yet).
pub fn build_scenarios(
    seeds: impl IntoIterator<Item = u64>,
    config: &WorldConfig,
) -> Result<Vec<Scenario>, WorldError> {
    let seeds: Vec<u64> = seeds.into_iter().collect();
    seeds
        .par_iter()
        .map(|&s| Scenario::build(s, config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(family: ScenarioFamily) -> WorldConfig {
        WorldConfig {
            family,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn straight_constant_speed_waypoints() {
        // fixed speed via direct scenario construction is not exposed; use
        // kinematic consistency instead: equal forward spacing, zero lateral.
        let ep = generate_episode(0, &cfg(ScenarioFamily::Straight)).unwrap();
        let traj = &ep.trajectory;
        assert_eq!(traj[0], [0.0, 0.0]);
        let d1 = traj[1][1] - traj[0][1];
        for w in traj.windows(2) {
            let step = w[1][1] - w[0][1];
            assert!((step - d1).abs() < 1e-6, "constant forward spacing");
            assert!(w[1][0].abs() < 1e-6, "no lateral drift");
        }
        // spacing = speed / 2 Hz and speeds are drawn from [4, 8) m/s
        assert!(d1 >= 2.0 && d1 < 4.0);
    }

    #[test]
    fn determinism_same_seed_bit_identical() {
        let a = generate_episode(7, &cfg(ScenarioFamily::Mix)).unwrap();
        let b = generate_episode(7, &cfg(ScenarioFamily::Mix)).unwrap();
        assert_eq!(a.caption, b.caption);
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.command_id, b.command_id);
        assert!(a
            .frames
            .iter()
            .zip(b.frames.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn turn_left_sweep_labels_id_2() {
        for seed in 1..=100 {
            let ep = generate_episode(seed, &cfg(ScenarioFamily::TurnLeft)).unwrap();
            let got = command_from_trajectory(&ep.trajectory, &CommandRuleConfig::default()).unwrap();
            assert_eq!(got, 2, "seed {seed}");
            assert_eq!(ep.command_id, 2);
        }
    }

    #[test]
    fn generator_labeler_consistency_across_families() {
        let families = [
            ScenarioFamily::Straight,
            ScenarioFamily::TurnLeft,
            ScenarioFamily::TurnRight,
            ScenarioFamily::LaneChangeLeft,
            ScenarioFamily::LaneChangeRight,
            ScenarioFamily::Stop,
            ScenarioFamily::UTurn,
            ScenarioFamily::IntersectionPass,
            ScenarioFamily::LaneBranchLeft,
            ScenarioFamily::LaneBranchRight,
            ScenarioFamily::CrosswalkPass,
            ScenarioFamily::RailPass,
            ScenarioFamily::Merge,
            ScenarioFamily::Deviate,
        ];
        for fam in families {
            for seed in 0..25 {
                let ep = generate_episode(seed, &cfg(fam)).unwrap();
                let rule =
                    command_from_trajectory(&ep.trajectory, &CommandRuleConfig::default()).unwrap();
                assert_eq!(
                    rule,
                    motion_equivalent(ep.command_id),
                    "family {fam:?} seed {seed}: rule {rule} vs id {}",
                    ep.command_id
                );
            }
        }
    }

    #[test]
    fn captions_pass_filter_and_match_table() {
        let filter = KeywordFilter::default();
        for seed in 0..60 {
            let ep = generate_episode(seed, &cfg(ScenarioFamily::Mix)).unwrap();
            assert!(filter.accepts(&ep.caption), "caption {:?}", ep.caption);
            let command_part = ep.caption.split(", ").next().unwrap();
            let mut full_command = command_part.to_string();
            full_command.push('.');
            // command part is "<dictionary phrase minus final period>"
            let dict = COMMAND_CAPTIONS[ep.command_id as usize];
            assert!(
                dict.iter().any(|c| *c == format!("{command_part}.")
                    || *c == command_part),
                "command {command_part:?} not in table for id {}",
                ep.command_id
            );
            let _ = full_command;
        }
    }

    #[test]
    fn kinematic_spacing_bound() {
        for seed in 0..40 {
            let ep = generate_episode(seed, &cfg(ScenarioFamily::Mix)).unwrap();
            for w in ep.trajectory.windows(2) {
                let dx = w[1][0] - w[0][0];
                let dy = w[1][1] - w[0][1];
                let step = (dx * dx + dy * dy).sqrt();
                assert!(step <= 8.0 / 2.0 + 1e-6, "step {step} exceeds max speed / 2 Hz");
            }
        }
    }

    #[test]
    fn frames_are_in_unit_range_and_right_shape() {
        let ep = generate_episode(3, &cfg(ScenarioFamily::Mix)).unwrap();
        assert_eq!(ep.frames.shape(), &[50, 32, 64, 3]);
        assert!(ep.frames.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut c = cfg(ScenarioFamily::Straight);
        c.duration_s = 3.0;
        assert!(matches!(
            generate_episode(0, &c),
            Err(WorldError::Config(_))
        ));
        let mut c2 = cfg(ScenarioFamily::Straight);
        c2.width = 0;
        assert!(matches!(
            generate_episode(0, &c2),
            Err(WorldError::Config(_))
        ));
    }

    #[test]
    fn world_state_invariants() {
        for seed in 0..10 {
            let sc = Scenario::build(seed, &cfg(ScenarioFamily::Mix)).unwrap();
            for k in 0..10 {
                let st = sc.world_state(k as f64 * 0.5);
                assert!(st.ego_speed >= 0.0);
                assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&st.ego_pose.2));
            }
            // no obstacle overlaps ego at t=0
            let st0 = sc.world_state(0.0);
            for &(ox, oy, ..) in &st0.obstacles {
                let d2 = (ox - st0.ego_pose.0).powi(2) + (oy - st0.ego_pose.1).powi(2);
                assert!(d2 > 2.5f64.powi(2));
            }
        }
    }

    #[test]
    fn save_and_reload_round_trip() {
        let dir = std::env::temp_dir().join(format!("synthworld_store_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let ep = generate_episode(5, &cfg(ScenarioFamily::Straight)).unwrap();
        let epd = store::episode_dir(&dir, 0);
        store::save_episode(&epd, &ep).unwrap();
        let meta = store::load_meta(&epd).unwrap();
        assert_eq!(meta.seed, 5);
        assert_eq!(meta.caption, ep.caption);
        assert_eq!(meta.fps, 10);
        let frames = store::load_frames(&epd).unwrap();
        assert_eq!(frames.shape(), ep.frames.shape());
        assert_eq!(frames, ep.frames);
        std::fs::remove_dir_all(&dir).ok();
    }
}
