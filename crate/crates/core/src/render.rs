//! CPU renderer producing color, depth and instance buffers at a
//! supersampled resolution.

use crate::camera::{CameraPose, Intrinsics};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::{object_mesh, terrain_mesh, ObjectMesh, Triangle};
use crate::raster::{clip_window, fragment_wins, scan_triangle, Projector, ScreenTriangle};
use crate::world::{Biome, ObjectClass, Weather, WorldState};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const BAND_ROWS: u32 = 32;
const NO_TRIANGLE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Low,
    High,
}

pub const MAX_SUPERSAMPLE: u32 = 8;
/// Upper bound on supersampled buffer pixels (about 11 bytes each).
pub const MAX_BUFFER_PIXELS: u64 = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderSettings {
    pub out_width: u32,
    pub out_height: u32,
    pub supersample: u32,
    pub quality: Quality,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            out_width: 640,
            out_height: 360,
            supersample: 2,
            quality: Quality::High,
        }
    }
}

impl RenderSettings {
    pub fn buffer_size(&self) -> (u32, u32) {
        (
            self.out_width * self.supersample,
            self.out_height * self.supersample,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_width == 0 || self.out_height == 0 || self.supersample == 0 {
            return Err(Error::Config(
                "render dimensions and supersample must be positive".into(),
            ));
        }
        if self.supersample > MAX_SUPERSAMPLE {
            return Err(Error::Config(format!(
                "supersample {} exceeds {MAX_SUPERSAMPLE}",
                self.supersample
            )));
        }
        let pixels = (self.out_width as u64)
            .checked_mul(self.out_height as u64)
            .and_then(|p| p.checked_mul((self.supersample as u64).pow(2)))
            .filter(|&p| p <= MAX_BUFFER_PIXELS);
        if pixels.is_none() {
            return Err(Error::Config(format!(
                "{}x{} at supersample {} exceeds {MAX_BUFFER_PIXELS} buffer pixels",
                self.out_width, self.out_height, self.supersample
            )));
        }
        Ok(())
    }

    /// Output-resolution intrinsics for a horizontal field of view.
    pub fn intrinsics(&self, horizontal_fov: f64) -> Result<Intrinsics<f64>> {
        Intrinsics::new(self.out_width, self.out_height, horizontal_fov)
    }
}

pub fn set_quality(settings: RenderSettings, level: Quality) -> RenderSettings {
    RenderSettings {
        quality: level,
        ..settings
    }
}

/// Lighting-relevant state copied from the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Environment {
    pub clock: f64,
    pub weather: Weather,
    pub biome: Biome,
    pub seed: u64,
}

/// One renderable entity: an id, its class and its triangles.
#[derive(Debug, Clone)]
pub struct SceneObject {
    pub class: ObjectClass,
    pub mesh: ObjectMesh,
}

/// Geometry snapshot handed to the renderer and the ray-cast oracle.
#[derive(Debug, Clone)]
pub struct Scene {
    pub env: Environment,
    pub terrain: Vec<Triangle>,
    /// Sorted by id.
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn from_world(world: &WorldState) -> Self {
        Self {
            env: Environment {
                clock: world.clock(),
                weather: world.weather,
                biome: world.biome,
                seed: world.rng_seed,
            },
            terrain: terrain_mesh(world),
            objects: world
                .objects()
                .iter()
                .map(|o| SceneObject {
                    class: o.class,
                    mesh: object_mesh(o),
                })
                .collect(),
        }
    }

    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects
            .binary_search_by_key(&id, |o| o.mesh.id)
            .ok()
            .map(|i| &self.objects[i])
    }
}

/// Buffers at supersampled resolution, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffers {
    pub width: u32,
    pub height: u32,
    /// Interleaved RGB.
    pub color: Vec<u8>,
    /// Camera-frame depth (distance along the optical axis), `+inf` where empty.
    pub depth: Vec<f32>,
    /// Object id per pixel, 0 for terrain and sky.
    pub instance: Vec<u32>,
}

impl FrameBuffers {
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Box-filters the color buffer down by `factor`.
    pub fn downsample_color(&self, factor: u32) -> Vec<u8> {
        let f = factor.max(1) as usize;
        let (w, h) = (self.width as usize / f, self.height as usize / f);
        let mut out = vec![0u8; w * h * 3];
        let denom = (f * f) as u32;
        out.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
            for x in 0..w {
                let mut acc = [0u32; 3];
                for dy in 0..f {
                    let base = ((y * f + dy) * self.width as usize + x * f) * 3;
                    for dx in 0..f {
                        for (c, a) in acc.iter_mut().enumerate() {
                            *a += self.color[base + dx * 3 + c] as u32;
                        }
                    }
                }
                for c in 0..3 {
                    row[x * 3 + c] = ((acc[c] + denom / 2) / denom) as u8;
                }
            }
        });
        out
    }

    pub fn mean_luminance(&self) -> f64 {
        let sum: f64 = self
            .color
            .chunks_exact(3)
            .map(|p| 0.2126 * p[0] as f64 + 0.7152 * p[1] as f64 + 0.0722 * p[2] as f64)
            .sum();
        sum / self.pixel_count().max(1) as f64
    }
}

/// Renders a world snapshot. `intr` describes the output resolution; buffers
/// are produced at `settings.supersample` times that.
pub fn render(
    world: &WorldState,
    pose: &CameraPose<f64>,
    intr: &Intrinsics<f64>,
    settings: &RenderSettings,
    frame_id: u64,
) -> Result<FrameBuffers> {
    render_scene(&Scene::from_world(world), pose, intr, settings, frame_id)
}

struct TriInfo {
    id: u32,
    color: [f64; 3],
    normal: Vec3<f64>,
    terrain: bool,
}

/// Screen-space triangles of the visible scene plus per-source shading data.
pub(crate) struct Prepared {
    tris: Vec<ScreenTriangle>,
    info: Vec<TriInfo>,
}

pub(crate) fn prepare(scene: &Scene, proj: &Projector) -> Prepared {
    let mut tris = Vec::new();
    let mut info = Vec::new();
    let mut push = |t: &Triangle, terrain: bool, tris: &mut Vec<ScreenTriangle>| {
        let source = info.len() as u32;
        info.push(TriInfo {
            id: t.id,
            color: t.color.map(|c| c as f64 / 255.0),
            normal: t.normal(),
            terrain,
        });
        proj.setup(t, source, tris);
    };
    for t in &scene.terrain {
        push(t, true, &mut tris);
    }
    for obj in &scene.objects {
        if !proj.sphere_visible(obj.mesh.center, obj.mesh.radius) {
            continue;
        }
        for t in &obj.mesh.triangles {
            push(t, false, &mut tris);
        }
    }
    Prepared { tris, info }
}

pub fn render_scene(
    scene: &Scene,
    pose: &CameraPose<f64>,
    intr: &Intrinsics<f64>,
    settings: &RenderSettings,
    frame_id: u64,
) -> Result<FrameBuffers> {
    settings.validate()?;
    intr.validate()?;
    if intr.width != settings.out_width || intr.height != settings.out_height {
        return Err(Error::InvalidInput(format!(
            "intrinsics {}x{} do not match output size {}x{}",
            intr.width, intr.height, settings.out_width, settings.out_height
        )));
    }
    let buf_intr = intr.scaled(settings.supersample);
    let proj = Projector::new(pose, &buf_intr);
    let (width, height) = (buf_intr.width, buf_intr.height);
    let prepared = prepare(scene, &proj);

    let band_count = height.div_ceil(BAND_ROWS) as usize;
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); band_count];
    for (i, t) in prepared.tris.iter().enumerate() {
        if let Some((_, y0, _, y1)) = t.pixel_bounds(width, height) {
            for bin in &mut bins[(y0 / BAND_ROWS) as usize..=(y1 / BAND_ROWS) as usize] {
                bin.push(i as u32);
            }
        }
    }

    let n = width as usize * height as usize;
    let mut color = vec![0u8; n * 3];
    let mut depth = vec![f32::INFINITY; n];
    let mut instance = vec![0u32; n];
    let band_px = width as usize * BAND_ROWS as usize;
    let shader = Shader::new(scene, pose, &buf_intr, settings.quality, frame_id);

    color
        .par_chunks_mut(band_px * 3)
        .zip(depth.par_chunks_mut(band_px))
        .zip(instance.par_chunks_mut(band_px))
        .enumerate()
        .for_each(|(band, ((color, depth), instance))| {
            let y0 = band as u32 * BAND_ROWS;
            let rows = (depth.len() / width as usize) as u32;
            let window = (0, y0, width - 1, y0 + rows - 1);
            let mut inv_z = vec![0.0f64; depth.len()];
            let mut source = vec![NO_TRIANGLE; depth.len()];
            for &ti in &bins[band] {
                let t = &prepared.tris[ti as usize];
                let Some(w) = clip_window(t, width, height, window) else {
                    continue;
                };
                let id = prepared.info[t.source as usize].id;
                scan_triangle(t, w, |x, y, iz| {
                    let p = (y - y0) as usize * width as usize + x as usize;
                    let wins = source[p] == NO_TRIANGLE
                        || fragment_wins(
                            1.0 / iz,
                            id,
                            1.0 / inv_z[p],
                            prepared.info[source[p] as usize].id,
                        );
                    if wins {
                        inv_z[p] = iz;
                        source[p] = t.source;
                    }
                });
            }
            for (p, &src) in source.iter().enumerate() {
                let x = (p % width as usize) as u32;
                let y = y0 + (p / width as usize) as u32;
                let rgb = if src == NO_TRIANGLE {
                    shader.sky(x, y)
                } else {
                    let info = &prepared.info[src as usize];
                    let d = 1.0 / inv_z[p];
                    depth[p] = d as f32;
                    instance[p] = info.id;
                    shader.surface(info, x, y, d)
                };
                let px = shader.finish(rgb, x, y);
                color[p * 3..p * 3 + 3].copy_from_slice(&px);
            }
        });

    Ok(FrameBuffers {
        width,
        height,
        color,
        depth,
        instance,
    })
}

/// Sun elevation in degrees: zero before 06:00 and after 18:00, 90 at noon.
pub fn sun_elevation(clock: f64) -> f64 {
    let s = (std::f64::consts::PI * (clock - 21_600.0) / 43_200.0).sin();
    (90.0 * s).max(0.0)
}

struct WeatherLook {
    sun: f64,
    ambient: f64,
    tint: [f64; 3],
    haze: f64,
    fog_distance: f64,
}

fn weather_look(w: Weather) -> WeatherLook {
    match w {
        Weather::Clear => WeatherLook {
            sun: 1.0,
            ambient: 1.0,
            tint: [1.0, 1.0, 1.0],
            haze: 0.0,
            fog_distance: 6000.0,
        },
        Weather::Overcast => WeatherLook {
            sun: 0.35,
            ambient: 1.3,
            tint: [0.95, 0.95, 0.97],
            haze: 0.15,
            fog_distance: 3000.0,
        },
        Weather::Rain => WeatherLook {
            sun: 0.2,
            ambient: 1.1,
            tint: [0.85, 0.88, 0.95],
            haze: 0.25,
            fog_distance: 1500.0,
        },
        Weather::Fog => WeatherLook {
            sun: 0.5,
            ambient: 1.2,
            tint: [1.0, 1.0, 1.0],
            haze: 0.45,
            fog_distance: 400.0,
        },
    }
}

struct Shader {
    quality: Quality,
    biome: Biome,
    origin: Vec3<f64>,
    right: Vec3<f64>,
    down: Vec3<f64>,
    forward: Vec3<f64>,
    focal: f64,
    cx: f64,
    cy: f64,
    sun_dir: Vec3<f64>,
    sun: f64,
    ambient: f64,
    look: WeatherLook,
    haze_color: [f64; 3],
    sky_day: f64,
    grain_seed: u64,
    width: u32,
}

impl Shader {
    fn new(
        scene: &Scene,
        pose: &CameraPose<f64>,
        intr: &Intrinsics<f64>,
        quality: Quality,
        frame_id: u64,
    ) -> Self {
        let r = pose.rotation();
        let col = |j: usize| Vec3::new(r.rows[0][j], r.rows[1][j], r.rows[2][j]);
        let elev = sun_elevation(scene.env.clock).to_radians();
        let azimuth = (90.0 + 180.0 * (scene.env.clock - 21_600.0) / 43_200.0).to_radians();
        let sun_dir = Vec3::new(
            azimuth.sin() * elev.cos(),
            azimuth.cos() * elev.cos(),
            elev.sin(),
        );
        let look = weather_look(scene.env.weather);
        let day = elev.sin();
        let sun = day * look.sun;
        let ambient = (0.05 + 0.3 * day) * look.ambient;
        let haze_level = 0.08 + 0.72 * day;
        Self {
            quality,
            biome: scene.env.biome,
            origin: pose.position,
            right: col(0),
            down: col(1),
            forward: col(2),
            focal: intr.focal(),
            cx: intr.cx(),
            cy: intr.cy(),
            sun_dir,
            sun,
            ambient,
            look,
            haze_color: [haze_level * 0.9, haze_level * 0.92, haze_level],
            sky_day: day,
            grain_seed: hash64(scene.env.seed ^ hash64(frame_id.wrapping_add(0x9e37))),
            width: intr.width,
        }
    }

    fn ray(&self, x: u32, y: u32) -> Vec3<f64> {
        let a = (x as f64 + 0.5 - self.cx) / self.focal;
        let b = (y as f64 + 0.5 - self.cy) / self.focal;
        self.forward + self.right * a + self.down * b
    }

    fn sky(&self, x: u32, y: u32) -> [f64; 3] {
        let d = self.ray(x, y).normalized();
        let up = d.z.max(0.0);
        let day = self.sky_day;
        let base = [
            0.02 + day * (0.55 - 0.25 * up),
            0.03 + day * (0.70 - 0.15 * up),
            0.06 + day * (0.92 - 0.02 * up),
        ];
        self.weather_blend(base)
    }

    fn surface(&self, info: &TriInfo, x: u32, y: u32, depth: f64) -> [f64; 3] {
        match self.quality {
            Quality::Low => {
                let light = self.ambient + 0.7 * self.sun;
                self.weather_blend(info.color.map(|c| c * light))
            }
            Quality::High => {
                let ray = self.ray(x, y);
                let world = self.origin + ray * depth;
                let mut n = info.normal;
                if n.dot(ray) > 0.0 {
                    n = -n;
                }
                let lambert = n.dot(self.sun_dir).max(0.0);
                let light = self.ambient + self.sun * lambert;
                let texture = if info.terrain {
                    terrain_texture(self.biome, world.x, world.y)
                } else {
                    0.92 + 0.08 * value_noise(world.x * 2.0, world.y * 2.0 + world.z, 7)
                };
                let mut rgb = info.color.map(|c| c * texture * light);
                if info.terrain && self.biome == Biome::Urban && is_lane_marking(world.x, world.y) {
                    rgb = [0.85 * light; 3];
                }
                let dist = (ray * depth).norm();
                let fog = 1.0 - (-dist / self.look.fog_distance).exp();
                let rgb = mix(rgb, self.haze_color, fog);
                self.weather_blend(rgb)
            }
        }
    }

    fn weather_blend(&self, rgb: [f64; 3]) -> [f64; 3] {
        let tinted = [
            rgb[0] * self.look.tint[0],
            rgb[1] * self.look.tint[1],
            rgb[2] * self.look.tint[2],
        ];
        mix(tinted, self.haze_color, self.look.haze)
    }

    fn finish(&self, rgb: [f64; 3], x: u32, y: u32) -> [u8; 3] {
        let grain = match self.quality {
            Quality::Low => 0.0,
            Quality::High => {
                let h = hash64(self.grain_seed ^ (y as u64 * self.width as u64 + x as u64));
                ((h >> 40) as f64 / (1u64 << 24) as f64 - 0.5) * 12.0
            }
        };
        rgb.map(|c| (c * 255.0 + grain).round().clamp(0.0, 255.0) as u8)
    }
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

const ROAD_SPACING: f64 = 80.0;
const ROAD_WIDTH: f64 = 10.0;

fn road_offset(c: f64) -> f64 {
    c.rem_euclid(ROAD_SPACING) - ROAD_WIDTH * 0.5
}

fn is_lane_marking(x: f64, y: f64) -> bool {
    let (ox, oy) = (road_offset(x), road_offset(y));
    (ox.abs() < 0.15 && y.rem_euclid(6.0) < 3.0) || (oy.abs() < 0.15 && x.rem_euclid(6.0) < 3.0)
}

fn terrain_texture(biome: Biome, x: f64, y: f64) -> f64 {
    match biome {
        Biome::Urban => {
            let on_road =
                road_offset(x).abs() < ROAD_WIDTH * 0.5 || road_offset(y).abs() < ROAD_WIDTH * 0.5;
            let grit = 0.9 + 0.1 * value_noise(x * 1.5, y * 1.5, 11);
            if on_road {
                0.55 * grit
            } else {
                grit
            }
        }
        Biome::Water => {
            let wave = (0.35 * x + 0.2 * y).sin() * (0.15 * x - 0.3 * y).cos();
            0.85 + 0.12 * wave + 0.08 * value_noise(x * 0.5, y * 0.5, 13)
        }
        Biome::Pasture => {
            let coarse = value_noise(x * 0.05, y * 0.05, 17);
            let fine = value_noise(x * 0.8, y * 0.8, 19);
            0.7 + 0.25 * coarse + 0.15 * fine
        }
    }
}

pub(crate) fn hash64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice(ix: i64, iy: i64, seed: u64) -> f64 {
    let h = hash64((ix as u64).wrapping_mul(0x1f1f_1f1f) ^ (iy as u64).rotate_left(32) ^ seed);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Smooth value noise in `[0, 1]`.
fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let (tx, ty) = (x - fx, y - fy);
    let (sx, sy) = (tx * tx * (3.0 - 2.0 * tx), ty * ty * (3.0 - 2.0 * ty));
    let a = lattice(ix, iy, seed);
    let b = lattice(ix + 1, iy, seed);
    let c = lattice(ix, iy + 1, seed);
    let d = lattice(ix + 1, iy + 1, seed);
    let top = a + (b - a) * sx;
    let bottom = c + (d - c) * sx;
    top + (bottom - top) * sy
}
