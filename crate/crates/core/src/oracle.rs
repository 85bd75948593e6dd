//! Brute-force ray-cast reference for the rasterizer and annotator.
//!
//! One ray per buffer pixel center, intersected against every triangle in
//! world space. Camera axes are built here directly from the Euler angles so
//! this path shares no transform code with the rasterizer.

use crate::annotate::PixelBox;
use crate::camera::{CameraPose, Intrinsics};
use crate::geometry::Vec3;
use crate::mesh::Triangle;
use crate::render::{RenderSettings, Scene};
use crate::world::WorldState;

/// Minimum accepted hit distance along the optical axis.
const NEAR: f64 = 0.1;
/// Coplanar tolerance; must agree with the rasterizer's depth test.
const TIE: f64 = 1e-6;

/// Nearer wins; near-ties go to the higher id, then to the nearer hit.
fn beats(d: f64, id: u32, best_d: f64, best_id: u32) -> bool {
    if (d - best_d).abs() <= TIE * best_d {
        id > best_id || (id == best_id && d < best_d)
    } else {
        d < best_d
    }
}

/// Nearest hit per pixel: object id (0 for terrain) and optical-axis depth.
#[derive(Debug, Clone)]
pub struct RayCastBuffer {
    pub width: u32,
    pub height: u32,
    pub hits: Vec<Option<(u32, f64)>>,
}

impl RayCastBuffer {
    pub fn object_bounds(&self, id: u32) -> Option<(u32, u32, u32, u32)> {
        let mut b: Option<(u32, u32, u32, u32)> = None;
        for (p, hit) in self.hits.iter().enumerate() {
            if matches!(hit, Some((h, _)) if *h == id) {
                let x = (p % self.width as usize) as u32;
                let y = (p / self.width as usize) as u32;
                b = Some(match b {
                    None => (x, y, x, y),
                    Some(b) => (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y)),
                });
            }
        }
        b
    }
}

struct Basis {
    right: Vec3<f64>,
    down: Vec3<f64>,
    forward: Vec3<f64>,
}

fn basis(pose: &CameraPose<f64>) -> Basis {
    let (sy, cy) = pose.yaw.to_radians().sin_cos();
    let (sp, cp) = pose.pitch.to_radians().sin_cos();
    let (sr, cr) = pose.roll.to_radians().sin_cos();
    let forward = Vec3::new(sy * cp, cy * cp, -sp);
    let right0 = Vec3::new(cy, -sy, 0.0);
    let down0 = forward.cross(right0);
    Basis {
        right: right0 * cr + down0 * sr,
        down: down0 * cr - right0 * sr,
        forward,
    }
}

fn intersect(origin: Vec3<f64>, dir: Vec3<f64>, t: &Triangle) -> Option<f64> {
    let e1 = t.v[1] - t.v[0];
    let e2 = t.v[2] - t.v[0];
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det == 0.0 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - t.v[0];
    let u = s.dot(p) * inv;
    if u < 0.0 {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(q) * inv)
}

fn sphere_hit(origin: Vec3<f64>, dir: Vec3<f64>, center: Vec3<f64>, radius: f64) -> bool {
    let oc = origin - center;
    let a = dir.dot(dir);
    let b = oc.dot(dir);
    let c = oc.dot(oc) - radius * radius;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return false;
    }
    // farthest intersection must lie in front of the near plane
    (-b + disc.sqrt()) / a >= NEAR * 0.5
}

pub fn ray_cast_scene(
    scene: &Scene,
    pose: &CameraPose<f64>,
    intr: &Intrinsics<f64>,
    settings: &RenderSettings,
) -> RayCastBuffer {
    let k = settings.supersample.max(1);
    let (width, height) = (intr.width * k, intr.height * k);
    let focal = (width as f64 / 2.0) / (intr.horizontal_fov.to_radians() / 2.0).tan();
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let b = basis(pose);
    let origin = pose.position;
    let mut hits = Vec::with_capacity(width as usize * height as usize);
    for y in 0..height {
        for x in 0..width {
            let a = (x as f64 + 0.5 - cx) / focal;
            let c = (y as f64 + 0.5 - cy) / focal;
            // forward component is exactly 1, so the ray parameter is the depth
            let dir = b.forward + b.right * a + b.down * c;
            let mut best: Option<(u32, f64)> = None;
            let mut consider = |t: &Triangle| {
                if let Some(d) = intersect(origin, dir, t) {
                    if d >= NEAR && best.is_none_or(|(bid, bd)| beats(d, t.id, bd, bid)) {
                        best = Some((t.id, d));
                    }
                }
            };
            scene.terrain.iter().for_each(&mut consider);
            for obj in &scene.objects {
                if sphere_hit(origin, dir, obj.mesh.center, obj.mesh.radius * 1.0001) {
                    obj.mesh.triangles.iter().for_each(&mut consider);
                }
            }
            hits.push(best);
        }
    }
    RayCastBuffer {
        width,
        height,
        hits,
    }
}

/// Output-resolution box of `object_id` from ray casting; `None` when no pixel sees it.
pub fn bbox_oracle_scene(
    scene: &Scene,
    pose: &CameraPose<f64>,
    intr: &Intrinsics<f64>,
    settings: &RenderSettings,
    object_id: u32,
) -> Option<PixelBox> {
    let buf = ray_cast_scene(scene, pose, intr, settings);
    let (x0, y0, x1, y1) = buf.object_bounds(object_id)?;
    Some(PixelBox::from_mask_bounds(
        x0,
        y0,
        x1,
        y1,
        settings.supersample.max(1),
    ))
}

pub fn bbox_oracle(
    world: &WorldState,
    pose: &CameraPose<f64>,
    intr: &Intrinsics<f64>,
    settings: &RenderSettings,
    object_id: u32,
) -> Option<PixelBox> {
    bbox_oracle_scene(&Scene::from_world(world), pose, intr, settings, object_id)
}
