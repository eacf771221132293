//! Shared fixtures for the benchmark suite.

use advscene::evaluation::LossWeights;
use advscene::scene::{generate_scene, Scene, SceneGenConfig};
use advscene::search::{default_collab, CollaborationChoice};

/// A mid-sized scene every benchmark agrees on.
pub fn bench_scene() -> Scene {
    let config = SceneGenConfig {
        n_agents: 24,
        n_intelligent: 5,
        n_obstacles: 10,
        sensor_range: 45.0,
        sensor_beams: 360,
        ..SceneGenConfig::default()
    };
    (0..32)
        .find_map(|attempt| generate_scene(&config, 5100 + attempt).ok())
        .expect("bench scene generates")
}

pub fn bench_collab(scene: &Scene) -> CollaborationChoice {
    default_collab(scene, 3).expect("collab")
}

pub fn bench_weights() -> LossWeights {
    LossWeights::default()
}
