//! Triangle setup and scan conversion shared by the frame renderer and the
//! solo coverage pass used for visibility.
//!
//! Coverage is sampled at pixel centers and is inclusive on edges. Depth is
//! interpolated as 1/z, which is affine in screen space for planar triangles.

use crate::camera::{CameraPose, Intrinsics};
use crate::geometry::{Mat3, Vec3};
use crate::mesh::Triangle;

pub const NEAR_PLANE: f64 = 0.1;

/// Relative depth difference below which two fragments count as coplanar.
pub const DEPTH_TIE: f64 = 1e-6;

/// Depth test. Clearly nearer fragments win; within [`DEPTH_TIE`] the higher
/// object id wins, so coplanar overlaps resolve the same way regardless of
/// rounding noise. Within one object the strictly nearer fragment wins.
#[inline]
pub fn fragment_wins(depth: f64, id: u32, old_depth: f64, old_id: u32) -> bool {
    let tol = DEPTH_TIE * old_depth;
    if depth < old_depth - tol {
        true
    } else if depth <= old_depth + tol {
        id > old_id || (id == old_id && depth < old_depth)
    } else {
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScreenVertex {
    pub u: f64,
    pub v: f64,
    pub inv_z: f64,
}

/// Projected, near-clipped triangle referencing its source triangle.
#[derive(Debug, Clone, Copy)]
pub struct ScreenTriangle {
    pub p: [ScreenVertex; 3],
    pub source: u32,
}

impl ScreenTriangle {
    /// Inclusive pixel-index bounds of the covered area, `None` when empty or off-image.
    pub fn pixel_bounds(&self, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
        let min_u = self.p.iter().map(|q| q.u).fold(f64::INFINITY, f64::min);
        let max_u = self.p.iter().map(|q| q.u).fold(f64::NEG_INFINITY, f64::max);
        let min_v = self.p.iter().map(|q| q.v).fold(f64::INFINITY, f64::min);
        let max_v = self.p.iter().map(|q| q.v).fold(f64::NEG_INFINITY, f64::max);
        // pixel x covers center x + 0.5
        let x0 = (min_u - 0.5).ceil().max(0.0);
        let x1 = (max_u - 0.5).floor().min(width as f64 - 1.0);
        let y0 = (min_v - 0.5).ceil().max(0.0);
        let y1 = (max_v - 0.5).floor().min(height as f64 - 1.0);
        if !(x0 <= x1 && y0 <= y1) {
            return None;
        }
        Some((x0 as u32, y0 as u32, x1 as u32, y1 as u32))
    }
}

/// World-to-screen transform for one camera.
pub struct Projector {
    world_to_cam: Mat3<f64>,
    origin: Vec3<f64>,
    focal: f64,
    cx: f64,
    cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Projector {
    pub fn new(pose: &CameraPose<f64>, intr: &Intrinsics<f64>) -> Self {
        Self {
            world_to_cam: pose.rotation().transpose(),
            origin: pose.position,
            focal: intr.focal(),
            cx: intr.cx(),
            cy: intr.cy(),
            width: intr.width,
            height: intr.height,
        }
    }

    pub fn to_camera(&self, p: Vec3<f64>) -> Vec3<f64> {
        self.world_to_cam.mul_vec(p - self.origin)
    }

    fn project(&self, c: Vec3<f64>) -> ScreenVertex {
        ScreenVertex {
            u: self.cx + self.focal * c.x / c.z,
            v: self.cy + self.focal * c.y / c.z,
            inv_z: 1.0 / c.z,
        }
    }

    /// Conservative frustum test for a bounding sphere.
    pub fn sphere_visible(&self, center: Vec3<f64>, radius: f64) -> bool {
        let c = self.to_camera(center);
        if c.z + radius < NEAR_PLANE {
            return false;
        }
        // side planes through the camera origin, inward normals
        let hx = self.cx / self.focal;
        let hy = self.cy / self.focal;
        let planes = [
            Vec3::new(1.0, 0.0, hx),
            Vec3::new(-1.0, 0.0, hx),
            Vec3::new(0.0, 1.0, hy),
            Vec3::new(0.0, -1.0, hy),
        ];
        planes.iter().all(|n| n.dot(c) / n.norm() >= -radius)
    }

    /// Clips against the near plane and appends the resulting screen triangles.
    pub fn setup(&self, tri: &Triangle, source: u32, out: &mut Vec<ScreenTriangle>) {
        let cam = tri.v.map(|p| self.to_camera(p));
        let inside = cam.map(|c| c.z >= NEAR_PLANE);
        if inside.iter().all(|&i| i) {
            out.push(ScreenTriangle {
                p: cam.map(|c| self.project(c)),
                source,
            });
            return;
        }
        if !inside.iter().any(|&i| i) {
            return;
        }
        let mut poly: [Vec3<f64>; 4] = [Vec3::zero(); 4];
        let mut n = 0;
        for i in 0..3 {
            let (a, b) = (cam[i], cam[(i + 1) % 3]);
            let (ia, ib) = (inside[i], inside[(i + 1) % 3]);
            if ia {
                poly[n] = a;
                n += 1;
            }
            if ia != ib {
                let t = (NEAR_PLANE - a.z) / (b.z - a.z);
                let mut q = a + (b - a) * t;
                q.z = NEAR_PLANE;
                poly[n] = q;
                n += 1;
            }
        }
        for k in 1..n.saturating_sub(1) {
            out.push(ScreenTriangle {
                p: [
                    self.project(poly[0]),
                    self.project(poly[k]),
                    self.project(poly[k + 1]),
                ],
                source,
            });
        }
    }
}

/// Calls `frag(x, y, inv_z)` for each pixel whose center the triangle covers,
/// restricted to the inclusive pixel window `[x0, x1] × [y0, y1]`.
#[inline]
pub fn scan_triangle(
    t: &ScreenTriangle,
    window: (u32, u32, u32, u32),
    mut frag: impl FnMut(u32, u32, f64),
) {
    let [a, b, c] = t.p;
    let area = (b.u - a.u) * (c.v - a.v) - (b.v - a.v) * (c.u - a.u);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    let s = area.signum();
    let inv_area = 1.0 / area;
    let edge = |p: ScreenVertex, q: ScreenVertex| {
        // E(x, y) = (q.u - p.u)(y - p.v) - (q.v - p.v)(x - p.u)
        (q.u - p.u, q.v - p.v, p.u, p.v)
    };
    let e0 = edge(b, c); // weight for a
    let e1 = edge(c, a); // weight for b
    let e2 = edge(a, b); // weight for c
    let eval = |e: (f64, f64, f64, f64), x: f64, y: f64| e.0 * (y - e.3) - e.1 * (x - e.2);
    let (x0, y0, x1, y1) = window;
    for y in y0..=y1 {
        let py = y as f64 + 0.5;
        for x in x0..=x1 {
            let px = x as f64 + 0.5;
            let w0 = eval(e0, px, py) * s;
            let w1 = eval(e1, px, py) * s;
            let w2 = eval(e2, px, py) * s;
            if w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0 {
                let inv_z = (w0 * a.inv_z + w1 * b.inv_z + w2 * c.inv_z) * inv_area * s;
                frag(x, y, inv_z);
            }
        }
    }
}

/// Intersection of the triangle's pixel bounds with a window.
pub fn clip_window(
    t: &ScreenTriangle,
    width: u32,
    height: u32,
    window: (u32, u32, u32, u32),
) -> Option<(u32, u32, u32, u32)> {
    let (x0, y0, x1, y1) = t.pixel_bounds(width, height)?;
    let w = (
        x0.max(window.0),
        y0.max(window.1),
        x1.min(window.2),
        y1.min(window.3),
    );
    (w.0 <= w.2 && w.1 <= w.3).then_some(w)
}
