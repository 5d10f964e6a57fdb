use boxmap::bench::{run_matrix, BenchConfig};
use boxmap::explore::{DistanceMode, EpisodeConfig, FrontierConfig, Strategy};
use boxmap::floorgen::GenConfig;

fn main() {
    for alpha in [0.35f64, 0.5, 0.65] {
        let cfg = BenchConfig {
            envs: 30,
            starts: 3,
            strategies: vec![Strategy::Greedy, Strategy::RecedingHorizon, Strategy::Frontier],
            seed: 7,
            gen: GenConfig { extent: 64, ..GenConfig::default() },
            episode: EpisodeConfig {
                alpha,
                frontier: FrontierConfig { lambda: 0.05, sensor_radius: 9.0 / 0.14, distance: DistanceMode::Path },
                ..EpisodeConfig::default()
            },
            ..BenchConfig::default()
        };
        let summary = run_matrix(&cfg).unwrap();
        let f = &summary.per_strategy["frontier"];
        let g = &summary.per_strategy["greedy"];
        let r = &summary.per_strategy["rh"];
        println!("alpha {alpha}: C1 {:6.1}/{:4.2}  C2 {:6.1}/{:4.2}  C3 {:6.1}/{:5.2}  advC1 {:4.1}% advC2 {:4.1}%",
            g.mean_steps, g.mean_updates, r.mean_steps, r.mean_updates, f.mean_steps, f.mean_updates,
            (1.0 - g.mean_steps / f.mean_steps) * 100.0, (1.0 - r.mean_steps / f.mean_steps) * 100.0);
    }
}
