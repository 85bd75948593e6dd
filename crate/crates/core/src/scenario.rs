//! Scenario scheduler: area traversal, camera sampling, periodic spawning,
//! lifecycle timing and capture cadence.

use crate::camera::{CameraPose, DEFAULT_HFOV};
use crate::dataset::MetaRecord;
use crate::error::{Error, Result};
use crate::geometry::{Rect, Vec2, Vec3};
use crate::render::RenderSettings;
use crate::world::{sample_class, Biome, ObjectClass, Weather, WorldState, SECONDS_PER_DAY};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Horizontal travel speed of the camera carrier, m/s.
pub const AGENT_SPEED: f64 = 10.0;
/// Simulation tick, seconds.
pub const TICK: f64 = 1.0;
/// Ambient objects are placed within this radius of the agent.
/// Ambient spawns land within this horizontal distance of the agent.
pub const AMBIENT_RADIUS: f64 = 300.0;
/// Smallest ambient scatter radius around the look-at point, in meters.
const AMBIENT_MIN_SPREAD: f64 = 8.0;

/// Parsed `<count>x<class>@<period>[s]` token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpawnSpec {
    pub count: u32,
    pub class: ObjectClass,
    pub period: f64,
}

pub fn parse_spawn_spec(text: &str) -> Result<SpawnSpec> {
    let err = |token: &str, reason: &str| Error::SpawnSpec {
        spec: text.to_string(),
        token: token.to_string(),
        reason: reason.to_string(),
    };
    let text = text.trim();
    let (count_str, rest) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| err(text, "expected <count>x<class>@<period>s"))?;
    let (class_str, period_str) = rest
        .split_once('@')
        .ok_or_else(|| err(rest, "missing '@<period>'"))?;
    let count: u32 = count_str
        .trim()
        .parse()
        .map_err(|_| err(count_str, "count is not a positive integer"))?;
    if count == 0 {
        return Err(err(count_str, "count must be at least 1"));
    }
    let class: ObjectClass = class_str
        .parse()
        .map_err(|_| err(class_str, "unknown object class"))?;
    let period_num = period_str
        .trim()
        .strip_suffix('s')
        .unwrap_or(period_str.trim());
    let period: f64 = period_num
        .parse()
        .map_err(|_| err(period_str, "period is not a number"))?;
    if !(period > 0.0) || !period.is_finite() {
        return Err(err(period_str, "period must be positive"));
    }
    Ok(SpawnSpec {
        count,
        class,
        period,
    })
}

/// Periodic camera-relative spawn schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpawnRuleFile", into = "SpawnRuleFile")]
pub struct SpawnRule {
    pub count: u32,
    pub class: ObjectClass,
    pub period: f64,
    /// Meters along the camera heading.
    pub forward_range: [f64; 2],
    /// Meters to the right of the camera heading.
    pub lateral_range: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpawnRuleFile {
    spec: String,
    forward: [f64; 2],
    lateral: [f64; 2],
}

impl TryFrom<SpawnRuleFile> for SpawnRule {
    type Error = Error;

    fn try_from(f: SpawnRuleFile) -> Result<Self> {
        let spec = parse_spawn_spec(&f.spec)?;
        let rule = SpawnRule {
            count: spec.count,
            class: spec.class,
            period: spec.period,
            forward_range: f.forward,
            lateral_range: f.lateral,
        };
        rule.validate()?;
        Ok(rule)
    }
}

impl From<SpawnRule> for SpawnRuleFile {
    fn from(r: SpawnRule) -> Self {
        SpawnRuleFile {
            spec: format!("{}x{}@{}s", r.count, r.class.name(), r.period),
            forward: r.forward_range,
            lateral: r.lateral_range,
        }
    }
}

impl SpawnRule {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("spawn count must be at least 1".into()));
        }
        if !(self.period > 0.0) {
            return Err(Error::Config("spawn period must be positive".into()));
        }
        for (name, r) in [
            ("forward", self.forward_range),
            ("lateral", self.lateral_range),
        ] {
            if !(r[0] <= r[1]) {
                return Err(Error::Config(format!("{name} range min exceeds max")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockPolicy {
    /// Constant seconds-of-day.
    Fixed(f64),
    /// Uniform over the day, drawn per captured frame.
    Uniform,
    /// 24 hourly weights; hour drawn by weight, then uniform within the hour.
    Distribution(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherPolicy {
    Fixed(Weather),
    /// Uniform over all weather states, drawn per travel leg.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub biome: Biome,
    pub area: Rect<f64>,
    pub altitude_range: [f64; 2],
    pub pitch_range: [f64; 2],
    pub spawn_rules: Vec<SpawnRule>,
    #[serde(default)]
    pub class_weights: BTreeMap<ObjectClass, f64>,
    /// Ambient spawns drawn from `class_weights` per tick.
    #[serde(default = "default_ambient_per_tick")]
    pub ambient_per_tick: u32,
    #[serde(default = "default_capture_period")]
    pub capture_period: f64,
    #[serde(default = "default_retarget_period")]
    pub retarget_period: f64,
    #[serde(default = "default_despawn_age")]
    pub despawn_age: f64,
    pub frame_count: u64,
    pub clock_policy: ClockPolicy,
    pub weather_policy: WeatherPolicy,
    pub seed: u64,
    pub render: RenderSettings,
}

fn default_capture_period() -> f64 {
    1.0
}
fn default_ambient_per_tick() -> u32 {
    1
}
fn default_retarget_period() -> f64 {
    60.0
}
fn default_despawn_age() -> f64 {
    crate::world::DEFAULT_MAX_AGE
}

pub const PRESET_NAMES: [&str; 3] = ["cattle", "seadronessee", "visdrone"];

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("scenario config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "cattle" => include_str!("../presets/cattle.json"),
            "seadronessee" => include_str!("../presets/seadronessee.json"),
            "visdrone" => include_str!("../presets/visdrone.json"),
            other => return Err(Error::Config(format!("no preset named {other:?}"))),
        };
        Self::from_json(text)
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = |r: [f64; 2], lo: f64, hi: f64| r[0] <= r[1] && r[0] >= lo && r[1] <= hi;
        if !self.area.is_valid() {
            return Err(Error::Config("area min exceeds max".into()));
        }
        if !in_range(self.altitude_range, 0.0, 1000.0) {
            return Err(Error::Config(
                "altitude_range must lie within [0, 1000]".into(),
            ));
        }
        if !in_range(self.pitch_range, -90.0, 90.0) {
            return Err(Error::Config(
                "pitch_range must lie within [-90, 90]".into(),
            ));
        }
        for (name, v) in [
            ("capture_period", self.capture_period),
            ("retarget_period", self.retarget_period),
            ("despawn_age", self.despawn_age),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for rule in &self.spawn_rules {
            rule.validate()?;
        }
        if self.ambient_per_tick > 1000 {
            return Err(Error::Config(
                "ambient_per_tick must be at most 1000".into(),
            ));
        }
        if !self.class_weights.is_empty() {
            // validates weights without consuming a real stream
            sample_class(&self.class_weights, &mut ChaCha8Rng::seed_from_u64(0))?;
        }
        match &self.clock_policy {
            ClockPolicy::Fixed(c) if !(0.0..SECONDS_PER_DAY).contains(c) => {
                return Err(Error::Config("fixed clock must lie in [0, 86400)".into()));
            }
            ClockPolicy::Distribution(w) => {
                if w.len() != 24 {
                    return Err(Error::Config(
                        "clock distribution needs 24 hourly bins".into(),
                    ));
                }
                if w.iter().any(|x| !(*x >= 0.0)) || !w.iter().any(|x| *x > 0.0) {
                    return Err(Error::Config(
                        "clock distribution must be non-negative with positive mass".into(),
                    ));
                }
            }
            _ => {}
        }
        self.render.validate()
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Camera carrier state.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub position: Vec2<f64>,
    pub target: Vec2<f64>,
    pub altitude: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
}

impl AgentState {
    pub fn pose(&self) -> CameraPose<f64> {
        CameraPose::new(
            Vec3::new(self.position.x, self.position.y, self.altitude),
            self.yaw,
            self.pitch,
            self.roll,
        )
    }

    /// Horizontal unit vectors along and to the right of the heading.
    pub fn heading_axes(&self) -> (Vec2<f64>, Vec2<f64>) {
        let (s, c) = self.yaw.to_radians().sin_cos();
        (Vec2::new(s, c), Vec2::new(c, -s))
    }
}

fn uniform(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    range[0] + (range[1] - range[0]) * rng.gen::<f64>()
}

/// Resamples altitude and pitch; position and heading come from the agent.
pub fn sample_camera(
    config: &ScenarioConfig,
    agent: &AgentState,
    rng: &mut impl Rng,
) -> CameraPose<f64> {
    let altitude = uniform(rng, config.altitude_range);
    let pitch = uniform(rng, config.pitch_range);
    CameraPose::new(
        Vec3::new(agent.position.x, agent.position.y, altitude),
        agent.yaw,
        pitch,
        0.0,
    )
}

fn sample_clock(policy: &ClockPolicy, rng: &mut impl Rng) -> f64 {
    match policy {
        ClockPolicy::Fixed(c) => *c,
        ClockPolicy::Uniform => rng.gen::<f64>() * SECONDS_PER_DAY,
        ClockPolicy::Distribution(w) => {
            use rand::distributions::{Distribution, WeightedIndex};
            let hour = WeightedIndex::new(w)
                .expect("validated weights")
                .sample(rng);
            (hour as f64 + rng.gen::<f64>()) * 3600.0
        }
    }
}

/// What one tick did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutcome {
    pub retargeted: bool,
    pub spawned: Vec<u32>,
    pub spawn_rejected: usize,
    pub despawned: usize,
    pub capture: bool,
}

/// Per-run scheduling state that lives alongside the world.
#[derive(Debug, Clone)]
pub struct Schedule {
    spawn_events: Vec<u64>,
    rng: ChaCha8Rng,
}

impl Schedule {
    pub fn new(config: &ScenarioConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(2);
        Self {
            spawn_events: vec![0; config.spawn_rules.len()],
            rng,
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Multiples of `period` in `[0, t]`.
fn events_due(t: f64, period: f64) -> u64 {
    ((t / period) + 1e-9).floor() as u64 + 1
}

fn is_multiple(t: f64, period: f64) -> bool {
    let q = t / period;
    (q - q.round()).abs() < 1e-9
}

/// Disc where ambient traffic is placed: centred on the ground point the
/// optical axis hits (capped at [`AMBIENT_RADIUS`] ahead) and wide enough to
/// cover the view around it.
fn ambient_region(agent: &AgentState) -> (Vec2<f64>, f64) {
    let pitch = agent.pitch.to_radians().max(1e-3);
    let ahead = (agent.altitude / pitch.tan()).min(AMBIENT_RADIUS);
    let slant = agent.altitude.max(1.0) / pitch.sin();
    let spread = (slant * (DEFAULT_HFOV.to_radians() / 2.0).tan() * 1.5)
        .clamp(AMBIENT_MIN_SPREAD, AMBIENT_RADIUS);
    let (fwd, _) = agent.heading_axes();
    (
        Vec2::new(
            agent.position.x + fwd.x * ahead,
            agent.position.y + fwd.y * ahead,
        ),
        spread,
    )
}

/// Advances the scenario to time `t` (seconds, monotone in [`TICK`] steps).
pub fn step_scenario(
    config: &ScenarioConfig,
    world: &mut WorldState,
    agent: &mut AgentState,
    schedule: &mut Schedule,
    t: f64,
) -> StepOutcome {
    let mut out = StepOutcome::default();
    if t > 0.0 {
        let to_target = Vec2::new(
            agent.target.x - agent.position.x,
            agent.target.y - agent.position.y,
        );
        let dist = agent.position.distance(agent.target);
        let step = AGENT_SPEED * TICK;
        if dist <= step {
            agent.position = agent.target;
        } else {
            agent.position.x += to_target.x / dist * step;
            agent.position.y += to_target.y / dist * step;
        }
        world.step_motion(TICK);
    }
    if is_multiple(t, config.retarget_period) {
        let rng = schedule.rng();
        agent.target = Vec2::new(
            uniform(rng, [config.area.min_x, config.area.max_x]),
            uniform(rng, [config.area.min_y, config.area.max_y]),
        );
        let (dx, dy) = (
            agent.target.x - agent.position.x,
            agent.target.y - agent.position.y,
        );
        if dx != 0.0 || dy != 0.0 {
            agent.yaw = crate::camera::normalize_degrees(dx.atan2(dy).to_degrees());
        }
        let pose = sample_camera(config, agent, rng);
        agent.altitude = pose.position.z;
        agent.pitch = pose.pitch;
        agent.roll = pose.roll;
        if let WeatherPolicy::Uniform = config.weather_policy {
            world.weather = Weather::ALL[rng.gen_range(0..Weather::ALL.len())];
        }
        out.retargeted = true;
    }
    let (fwd, right) = agent.heading_axes();
    for (i, rule) in config.spawn_rules.iter().enumerate() {
        let due = events_due(t, rule.period);
        while schedule.spawn_events[i] < due {
            schedule.spawn_events[i] += 1;
            for _ in 0..rule.count {
                let rng = schedule.rng();
                let f = uniform(rng, rule.forward_range);
                let l = uniform(rng, rule.lateral_range);
                let heading = rng.gen::<f64>() * 360.0;
                let p = Vec3::new(
                    agent.position.x + fwd.x * f + right.x * l,
                    agent.position.y + fwd.y * f + right.y * l,
                    0.0,
                );
                match world.spawn_object(rule.class, p, heading, t) {
                    Ok(id) => out.spawned.push(id),
                    Err(_) => out.spawn_rejected += 1,
                }
            }
        }
    }
    if !config.class_weights.is_empty() {
        let (center, spread) = ambient_region(agent);
        for _ in 0..config.ambient_per_tick {
            let rng = schedule.rng();
            let class = sample_class(&config.class_weights, rng).expect("validated weights");
            let r = spread * rng.gen::<f64>().sqrt();
            let a = rng.gen::<f64>() * std::f64::consts::TAU;
            let heading = rng.gen::<f64>() * 360.0;
            let p = Vec3::new(center.x + r * a.cos(), center.y + r * a.sin(), 0.0);
            match world.spawn_object(class, p, heading, t) {
                Ok(id) => out.spawned.push(id),
                Err(_) => out.spawn_rejected += 1,
            }
        }
    }
    out.despawned = world.despawn_expired(t, config.despawn_age);
    out.capture = is_multiple(t, config.capture_period);
    out
}

/// A captured frame's simulation state.
#[derive(Debug, Clone)]
pub struct Capture {
    pub frame_id: u64,
    pub time: f64,
    pub pose: CameraPose<f64>,
    pub meta: MetaRecord,
}

/// Owns the world and drives [`step_scenario`] tick by tick.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub world: WorldState,
    pub agent: AgentState,
    schedule: Schedule,
    next_tick: u64,
    frames: u64,
    pub total_spawned: u64,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let mut world = WorldState::new(config.biome, config.area, config.seed);
        if let WeatherPolicy::Fixed(w) = config.weather_policy {
            world.weather = w;
        }
        if let ClockPolicy::Fixed(c) = config.clock_policy {
            world.set_clock(c);
        }
        let mut schedule = Schedule::new(&config);
        let rng = schedule.rng();
        let start = Vec2::new(
            uniform(rng, [config.area.min_x, config.area.max_x]),
            uniform(rng, [config.area.min_y, config.area.max_y]),
        );
        let agent = AgentState {
            position: start,
            target: start,
            altitude: config.altitude_range[0],
            pitch: config.pitch_range[0],
            yaw: 0.0,
            roll: 0.0,
        };
        Ok(Self {
            config,
            world,
            agent,
            schedule,
            next_tick: 0,
            frames: 0,
            total_spawned: 0,
        })
    }

    pub fn frames_captured(&self) -> u64 {
        self.frames
    }

    pub fn is_done(&self) -> bool {
        self.frames >= self.config.frame_count
    }

    /// Time of the next tick to run.
    pub fn time(&self) -> f64 {
        self.next_tick as f64 * TICK
    }

    /// Runs one tick; returns the outcome and the capture if one was taken.
    pub fn tick(&mut self) -> (StepOutcome, Option<Capture>) {
        let t = self.time();
        self.next_tick += 1;
        let outcome = step_scenario(
            &self.config,
            &mut self.world,
            &mut self.agent,
            &mut self.schedule,
            t,
        );
        self.total_spawned += outcome.spawned.len() as u64;
        if !outcome.capture || self.is_done() {
            return (outcome, None);
        }
        if !matches!(self.config.clock_policy, ClockPolicy::Fixed(_)) {
            let clock = sample_clock(&self.config.clock_policy, self.schedule.rng());
            self.world.set_clock(clock);
        }
        let frame_id = self.frames;
        self.frames += 1;
        let pose = self.agent.pose();
        let meta = MetaRecord::new(frame_id, &pose, &self.world, self.config.render.quality);
        (
            outcome,
            Some(Capture {
                frame_id,
                time: t,
                pose,
                meta,
            }),
        )
    }

    /// Ticks until the next capture; `None` once `frame_count` frames were taken.
    pub fn next_capture(&mut self) -> Option<Capture> {
        while !self.is_done() {
            if let (_, Some(c)) = self.tick() {
                return Some(c);
            }
        }
        None
    }

    pub fn horizontal_fov(&self) -> f64 {
        DEFAULT_HFOV
    }
}

impl Iterator for Scenario {
    type Item = Capture;

    fn next(&mut self) -> Option<Capture> {
        self.next_capture()
    }
}
