//! Procedural world state: object catalog, spawn/despawn lifecycle and motion.

use crate::error::{Error, Result};
use crate::geometry::{Rect, Vec2, Vec3};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

pub const SECONDS_PER_DAY: f64 = 86_400.0;
/// Objects may live up to this far outside the scenario area.
pub const AREA_MARGIN: f64 = 500.0;
pub const WAYPOINT_RADIUS: f64 = 100.0;
pub const ARRIVAL_RADIUS: f64 = 1.0;
pub const DEFAULT_MAX_AGE: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectClass {
    People,
    Bicycle,
    Car,
    Truck,
    Van,
    Motor,
    Bus,
    Swimmer,
    Floater,
    Boat,
    SwimmerOnBoat,
    FloaterOnBoat,
    Cow,
}

impl ObjectClass {
    /// Catalog order; a class's position here is its label index.
    pub const ALL: [ObjectClass; 13] = [
        ObjectClass::People,
        ObjectClass::Bicycle,
        ObjectClass::Car,
        ObjectClass::Truck,
        ObjectClass::Van,
        ObjectClass::Motor,
        ObjectClass::Bus,
        ObjectClass::Swimmer,
        ObjectClass::Floater,
        ObjectClass::Boat,
        ObjectClass::SwimmerOnBoat,
        ObjectClass::FloaterOnBoat,
        ObjectClass::Cow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::People => "people",
            ObjectClass::Bicycle => "bicycle",
            ObjectClass::Car => "car",
            ObjectClass::Truck => "truck",
            ObjectClass::Van => "van",
            ObjectClass::Motor => "motor",
            ObjectClass::Bus => "bus",
            ObjectClass::Swimmer => "swimmer",
            ObjectClass::Floater => "floater",
            ObjectClass::Boat => "boat",
            ObjectClass::SwimmerOnBoat => "swimmer-on-boat",
            ObjectClass::FloaterOnBoat => "floater-on-boat",
            ObjectClass::Cow => "cow",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap()
    }

    /// Length (along heading), width and height in meters.
    pub fn footprint(self) -> [f64; 3] {
        match self {
            ObjectClass::People => [0.5, 0.5, 1.75],
            ObjectClass::Bicycle => [1.8, 0.6, 1.1],
            ObjectClass::Car => [4.5, 1.8, 1.5],
            ObjectClass::Truck => [8.0, 2.5, 3.5],
            ObjectClass::Van => [5.0, 2.0, 2.2],
            ObjectClass::Motor => [2.0, 0.8, 1.2],
            ObjectClass::Bus => [12.0, 2.6, 3.2],
            ObjectClass::Swimmer => [1.8, 0.6, 0.3],
            ObjectClass::Floater => [0.6, 0.6, 0.5],
            ObjectClass::Boat => [6.0, 2.4, 1.5],
            ObjectClass::SwimmerOnBoat => [6.0, 2.4, 2.2],
            ObjectClass::FloaterOnBoat => [6.0, 2.4, 2.3],
            ObjectClass::Cow => [2.2, 0.8, 1.5],
        }
    }

    pub fn palette(self) -> [u8; 3] {
        match self {
            ObjectClass::People => [200, 60, 50],
            ObjectClass::Bicycle => [40, 90, 200],
            ObjectClass::Car => [210, 210, 220],
            ObjectClass::Truck => [180, 120, 40],
            ObjectClass::Van => [240, 240, 235],
            ObjectClass::Motor => [30, 30, 35],
            ObjectClass::Bus => [230, 190, 30],
            ObjectClass::Swimmer => [235, 160, 130],
            ObjectClass::Floater => [250, 120, 20],
            ObjectClass::Boat => [245, 245, 250],
            ObjectClass::SwimmerOnBoat => [220, 80, 80],
            ObjectClass::FloaterOnBoat => [250, 140, 40],
            ObjectClass::Cow => [110, 70, 45],
        }
    }

    /// Random-waypoint cruising speed in m/s.
    pub fn speed(self) -> f64 {
        match self {
            ObjectClass::People => 1.4,
            ObjectClass::Bicycle => 4.0,
            ObjectClass::Car | ObjectClass::Truck | ObjectClass::Van | ObjectClass::Bus => 8.0,
            ObjectClass::Motor => 8.0,
            ObjectClass::Swimmer => 0.5,
            ObjectClass::Floater => 0.3,
            ObjectClass::Boat | ObjectClass::SwimmerOnBoat | ObjectClass::FloaterOnBoat => 4.0,
            ObjectClass::Cow => 0.7,
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let alias = match key.as_str() {
            "ppl" | "person" | "pedestrian" => "people",
            "bike" => "bicycle",
            "motorbike" | "motorcycle" => "motor",
            other => other,
        };
        ObjectClass::ALL
            .iter()
            .copied()
            .find(|c| c.name() == alias)
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Biome {
    Urban,
    Water,
    Pasture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weather {
    Clear,
    Overcast,
    Rain,
    Fog,
}

impl Weather {
    pub const ALL: [Weather; 4] = [
        Weather::Clear,
        Weather::Overcast,
        Weather::Rain,
        Weather::Fog,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: u32,
    pub class: ObjectClass,
    pub position: Vec3<f64>,
    pub heading: f64,
    pub spawn_time: f64,
    pub waypoint: Vec2<f64>,
    pub speed: f64,
}

impl WorldObject {
    pub fn age(&self, now: f64) -> f64 {
        now - self.spawn_time
    }
}

/// Mutable world owned by a single simulation loop. Clones are cheap enough
/// to hand to the renderer as snapshots.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub biome: Biome,
    pub area: Rect<f64>,
    objects: Vec<WorldObject>,
    clock: f64,
    pub weather: Weather,
    pub rng_seed: u64,
    next_id: u32,
    rng: ChaCha8Rng,
}

impl WorldState {
    pub fn new(biome: Biome, area: Rect<f64>, rng_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(1);
        Self {
            biome,
            area,
            objects: Vec::new(),
            clock: 12.0 * 3600.0,
            weather: Weather::Clear,
            rng_seed,
            next_id: 1,
            rng,
        }
    }

    pub fn objects(&self) -> &[WorldObject] {
        &self.objects
    }

    pub fn object(&self, id: u32) -> Option<&WorldObject> {
        self.objects
            .binary_search_by_key(&id, |o| o.id)
            .ok()
            .map(|i| &self.objects[i])
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn set_clock(&mut self, seconds: f64) {
        self.clock = wrap_clock(seconds);
    }

    pub fn advance_clock(&mut self, dt: f64) {
        self.clock = wrap_clock(self.clock + dt);
    }

    pub fn bounds(&self) -> Rect<f64> {
        self.area.expanded(AREA_MARGIN)
    }

    pub fn spawn_object(
        &mut self,
        class: ObjectClass,
        position: Vec3<f64>,
        heading: f64,
        now: f64,
    ) -> Result<u32> {
        if !self.bounds().contains(position.x, position.y) {
            return Err(Error::OutOfBounds {
                x: position.x,
                y: position.y,
            });
        }
        let id = self.next_id;
        self.next_id += 1;
        let waypoint = self.draw_waypoint(Vec2::new(position.x, position.y));
        // ids are allocated monotonically, so pushing keeps the list sorted
        self.objects.push(WorldObject {
            id,
            class,
            position,
            heading: crate::camera::normalize_degrees(heading),
            spawn_time: now,
            waypoint,
            speed: class.speed(),
        });
        Ok(id)
    }

    /// Removes every object with `now - spawn_time >= max_age`.
    pub fn despawn_expired(&mut self, now: f64, max_age: f64) -> usize {
        let before = self.objects.len();
        self.objects.retain(|o| o.age(now) < max_age);
        before - self.objects.len()
    }

    pub fn step_motion(&mut self, dt: f64) {
        let mut objects = std::mem::take(&mut self.objects);
        for obj in &mut objects {
            let here = Vec2::new(obj.position.x, obj.position.y);
            let (dx, dy) = (obj.waypoint.x - here.x, obj.waypoint.y - here.y);
            let dist = here.distance(obj.waypoint);
            let step = obj.speed * dt;
            if step > 0.0 && dist > 0.0 {
                if step >= dist {
                    obj.position.x = obj.waypoint.x;
                    obj.position.y = obj.waypoint.y;
                } else {
                    obj.position.x += dx / dist * step;
                    obj.position.y += dy / dist * step;
                }
                obj.heading = crate::camera::normalize_degrees(dx.atan2(dy).to_degrees());
            }
            let here = Vec2::new(obj.position.x, obj.position.y);
            if here.distance(obj.waypoint) < ARRIVAL_RADIUS {
                obj.waypoint = self.draw_waypoint(here);
            }
        }
        self.objects = objects;
    }

    /// Uniform point in the disc of radius [`WAYPOINT_RADIUS`], clamped to the world bounds.
    fn draw_waypoint(&mut self, center: Vec2<f64>) -> Vec2<f64> {
        let r = WAYPOINT_RADIUS * self.rng.gen::<f64>().sqrt();
        let theta = self.rng.gen::<f64>() * std::f64::consts::TAU;
        let b = self.bounds();
        Vec2::new(
            (center.x + r * theta.cos()).clamp(b.min_x, b.max_x),
            (center.y + r * theta.sin()).clamp(b.min_y, b.max_y),
        )
    }
}

pub fn wrap_clock(seconds: f64) -> f64 {
    let c = seconds.rem_euclid(SECONDS_PER_DAY);
    if c >= SECONDS_PER_DAY {
        0.0
    } else {
        c
    }
}

/// Draws a class with probability proportional to its weight.
pub fn sample_class<R: Rng + ?Sized>(
    weights: &BTreeMap<ObjectClass, f64>,
    rng: &mut R,
) -> Result<ObjectClass> {
    if weights.values().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Config(
            "class weights must be finite and non-negative".into(),
        ));
    }
    if !weights.values().any(|w| *w > 0.0) {
        return Err(Error::Config("class weights are all zero".into()));
    }
    let classes: Vec<ObjectClass> = weights.keys().copied().collect();
    let dist = WeightedIndex::new(weights.values().copied())
        .map_err(|e| Error::Config(format!("class weights: {e}")))?;
    Ok(classes[dist.sample(rng)])
}
