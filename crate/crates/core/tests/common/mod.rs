#![allow(dead_code)]

use aerosynth::camera::{CameraPose, Intrinsics};
use aerosynth::geometry::{Rect, Vec3};
use aerosynth::render::{Quality, RenderSettings};
use aerosynth::scenario::{ClockPolicy, ScenarioConfig, WeatherPolicy};
use aerosynth::world::{Biome, ObjectClass, Weather, WorldState};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct RandomScene {
    pub world: WorldState,
    pub pose: CameraPose<f64>,
    pub intr: Intrinsics<f64>,
    pub settings: RenderSettings,
}

/// A camera over open ground with up to `max_objects` objects scattered around
/// the point it looks at, so most of them land in view.
pub fn random_scene(
    seed: u64,
    max_objects: usize,
    width: u32,
    height: u32,
    ss: u32,
) -> RandomScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = WorldState::new(
        Biome::Pasture,
        Rect::new(-1000.0, -1000.0, 1000.0, 1000.0),
        seed,
    );
    let altitude = rng.gen_range(15.0..60.0);
    let pitch: f64 = rng.gen_range(30.0..90.0);
    let yaw: f64 = rng.gen_range(0.0..360.0);
    let roll = rng.gen_range(-10.0..10.0);
    let pose = CameraPose::new(Vec3::new(0.0, 0.0, altitude), yaw, pitch, roll);
    let reach = altitude / pitch.to_radians().tan();
    let (s, c) = yaw.to_radians().sin_cos();
    let look = (s * reach, c * reach);
    let spread = altitude * 0.6;
    let n = rng.gen_range(1..=max_objects);
    for _ in 0..n {
        let class = ObjectClass::ALL[rng.gen_range(0..ObjectClass::ALL.len())];
        let p = Vec3::new(
            look.0 + rng.gen_range(-spread..spread),
            look.1 + rng.gen_range(-spread..spread),
            0.0,
        );
        world
            .spawn_object(class, p, rng.gen_range(0.0..360.0), 0.0)
            .unwrap();
    }
    world.set_clock(rng.gen_range(8.0..16.0) * 3600.0);
    world.weather = Weather::ALL[rng.gen_range(0..Weather::ALL.len())];
    let settings = RenderSettings {
        out_width: width,
        out_height: height,
        supersample: ss,
        quality: Quality::High,
    };
    RandomScene {
        world,
        pose,
        intr: settings.intrinsics(60.0).unwrap(),
        settings,
    }
}

/// Small open-field scenario with no spawn rules.
pub fn plain_config(frames: u64, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        biome: Biome::Pasture,
        area: Rect::new(0.0, 0.0, 5000.0, 5000.0),
        altitude_range: [10.0, 80.0],
        pitch_range: [20.0, 90.0],
        spawn_rules: Vec::new(),
        class_weights: Default::default(),
        ambient_per_tick: 1,
        capture_period: 1.0,
        retarget_period: 60.0,
        despawn_age: 200.0,
        frame_count: frames,
        clock_policy: ClockPolicy::Uniform,
        weather_policy: WeatherPolicy::Uniform,
        seed,
        render: RenderSettings {
            out_width: 160,
            out_height: 90,
            supersample: 2,
            quality: Quality::Low,
        },
    }
}
