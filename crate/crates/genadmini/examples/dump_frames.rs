// dump frames for visual inspection (scratch tool, not part of the repo)
fn main() {
    use genadmini::synthworld::{generate_episode, ScenarioFamily, WorldConfig};
    let fams = [ScenarioFamily::Straight, ScenarioFamily::TurnLeft, ScenarioFamily::Stop,
                ScenarioFamily::LaneChangeRight, ScenarioFamily::UTurn, ScenarioFamily::IntersectionPass];
    for (fi, fam) in fams.iter().enumerate() {
        let cfg = WorldConfig { family: *fam, ..Default::default() };
        let ep = generate_episode(fi as u64 + 3, &cfg).unwrap();
        for (k, t) in [(0usize, 0usize), (1, 15), (2, 30), (3, 45)] {
            let f = ep.frames.index_axis(ndarray::Axis(0), t);
            let mut ppm = format!("P3\n64 32\n255\n");
            for r in 0..32 {
                for c in 0..64 {
                    for ch in 0..3 {
                        ppm.push_str(&format!("{} ", (f[[r, c, ch]] * 255.0) as u8));
                    }
                }
                ppm.push('\n');
            }
            std::fs::write(format!("/tmp/render_check/f{}_{}.ppm", fi, k), ppm).unwrap();
        }
        println!("{:?}: {}", fam, ep.caption);
    }
}
