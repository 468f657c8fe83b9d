//! Built-in specs, including the canonical three-scene benchmark.

use super::spec::{DetectorNoiseModel, SceneSpec, TrajectorySpec};
use super::{generate_session, SimError, SimulatedSession};
use crate::io::parse_toml;
use crate::scale::ScaleDatabase;

pub const LIVING_ROOM_SCENE: &str = include_str!("../../data/presets/living_room.scene.toml");
pub const OFFICE_SCENE: &str = include_str!("../../data/presets/office.scene.toml");
pub const KITCHEN_SCENE: &str = include_str!("../../data/presets/kitchen.scene.toml");
pub const ORBIT_TRAJECTORY: &str = include_str!("../../data/presets/orbit.trajectory.toml");
pub const LAWNMOWER_TRAJECTORY: &str = include_str!("../../data/presets/lawnmower.trajectory.toml");
pub const DEFAULT_NOISE: &str = include_str!("../../data/presets/default.noise.toml");

/// Frames per canonical benchmark session.
pub const BENCHMARK_FRAMES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkCase {
    pub name: &'static str,
    pub scene: SceneSpec,
    pub trajectory: TrajectorySpec,
    pub noise: DetectorNoiseModel,
}

impl BenchmarkCase {
    pub fn generate(&self, db: &ScaleDatabase) -> Result<SimulatedSession, SimError> {
        generate_session(&self.scene, &self.trajectory, &self.noise, db)
    }
}

fn parse<T: serde::de::DeserializeOwned>(name: &str, text: &str) -> T {
    parse_toml(text).unwrap_or_else(|e| panic!("built-in preset {name} is malformed: {e}"))
}

pub fn default_noise() -> DetectorNoiseModel {
    parse("default.noise", DEFAULT_NOISE)
}

/// The three canonical sessions: living room and office on an orbit, kitchen
/// on a lawnmower sweep, each with its own fixed seed.
pub fn canonical_benchmark() -> Vec<BenchmarkCase> {
    let cases = [
        ("living_room", LIVING_ROOM_SCENE, ORBIT_TRAJECTORY, 101),
        ("office", OFFICE_SCENE, ORBIT_TRAJECTORY, 202),
        ("kitchen", KITCHEN_SCENE, LAWNMOWER_TRAJECTORY, 303),
    ];
    cases
        .into_iter()
        .map(|(name, scene, traj, seed)| BenchmarkCase {
            name,
            scene: parse(name, scene),
            trajectory: parse(name, traj),
            noise: DetectorNoiseModel { rng_seed: seed, ..default_noise() },
        })
        .collect()
}

/// Canonical case by name.
pub fn preset(name: &str) -> Option<BenchmarkCase> {
    canonical_benchmark().into_iter().find(|c| c.name == name)
}

pub fn generate_benchmark(db: &ScaleDatabase) -> Result<Vec<SimulatedSession>, SimError> {
    canonical_benchmark().iter().map(|c| c.generate(db)).collect()
}
