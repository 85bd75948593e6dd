//! Triangle geometry for terrain and the composite class models.

use crate::geometry::Vec3;
use crate::world::{ObjectClass, WorldObject, WorldState};

/// Half-extent of the terrain quad beyond the scenario area, in meters.
pub const TERRAIN_EXTENT: f64 = 5_000.0;
const CYLINDER_SEGMENTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub v: [Vec3<f64>; 3],
    /// Owning object id, 0 for terrain.
    pub id: u32,
    pub color: [u8; 3],
}

impl Triangle {
    pub fn normal(&self) -> Vec3<f64> {
        (self.v[1] - self.v[0])
            .cross(self.v[2] - self.v[0])
            .normalized()
    }
}

/// Triangles of one object plus a bounding sphere.
#[derive(Debug, Clone)]
pub struct ObjectMesh {
    pub id: u32,
    pub triangles: Vec<Triangle>,
    pub center: Vec3<f64>,
    pub radius: f64,
}

/// Part in object-local coordinates: x forward, y left, z up, fractions of the footprint.
enum Part {
    Cuboid {
        x: (f64, f64),
        y: (f64, f64),
        z: (f64, f64),
        shade: f64,
    },
    Cylinder {
        x: f64,
        y: f64,
        radius: f64,
        z: (f64, f64),
        shade: f64,
    },
}

fn cuboid(x: (f64, f64), y: (f64, f64), z: (f64, f64), shade: f64) -> Part {
    Part::Cuboid { x, y, z, shade }
}

fn vehicle(cabin_from: f64, cabin_to: f64) -> Vec<Part> {
    vec![
        cuboid((-0.5, 0.5), (-0.5, 0.5), (0.15, 0.55), 1.0),
        cuboid((cabin_from, cabin_to), (-0.45, 0.45), (0.55, 1.0), 0.8),
        cuboid((-0.42, -0.22), (-0.5, -0.38), (0.0, 0.15), 0.2),
        cuboid((-0.42, -0.22), (0.38, 0.5), (0.0, 0.15), 0.2),
        cuboid((0.22, 0.42), (-0.5, -0.38), (0.0, 0.15), 0.2),
        cuboid((0.22, 0.42), (0.38, 0.5), (0.0, 0.15), 0.2),
    ]
}

fn boat_hull() -> Vec<Part> {
    vec![
        cuboid((-0.5, 0.35), (-0.5, 0.5), (0.0, 0.45), 1.0),
        cuboid((0.35, 0.5), (-0.3, 0.3), (0.0, 0.45), 1.0),
        cuboid((-0.3, 0.05), (-0.35, 0.35), (0.45, 0.65), 0.7),
    ]
}

fn parts(class: ObjectClass) -> Vec<Part> {
    match class {
        ObjectClass::People => vec![
            cuboid((-0.25, 0.25), (-0.4, 0.4), (0.0, 0.5), 0.5),
            cuboid((-0.3, 0.3), (-0.5, 0.5), (0.5, 0.85), 1.0),
            cuboid((-0.2, 0.2), (-0.2, 0.2), (0.85, 1.0), 1.3),
        ],
        ObjectClass::Cow => {
            let mut p = vec![
                cuboid((-0.4, 0.3), (-0.5, 0.5), (0.45, 0.85), 1.0),
                cuboid((0.3, 0.5), (-0.25, 0.25), (0.6, 1.0), 0.85),
            ];
            for (x, y) in [(-0.3, -0.3), (-0.3, 0.3), (0.22, -0.3), (0.22, 0.3)] {
                p.push(Part::Cylinder {
                    x,
                    y,
                    radius: 0.12,
                    z: (0.0, 0.45),
                    shade: 0.6,
                });
            }
            p
        }
        ObjectClass::Car => vehicle(-0.25, 0.2),
        ObjectClass::Van => vehicle(-0.5, 0.3),
        ObjectClass::Bus => vehicle(-0.5, 0.5),
        ObjectClass::Truck => vehicle(0.2, 0.5),
        ObjectClass::Bicycle | ObjectClass::Motor => vec![
            cuboid((-0.5, -0.15), (-0.1, 0.1), (0.0, 0.45), 0.3),
            cuboid((0.15, 0.5), (-0.1, 0.1), (0.0, 0.45), 0.3),
            cuboid((-0.3, 0.3), (-0.2, 0.2), (0.35, 0.55), 1.0),
            cuboid((-0.15, 0.1), (-0.5, 0.5), (0.55, 1.0), 0.7),
        ],
        ObjectClass::Swimmer => vec![
            cuboid((-0.5, 0.35), (-0.5, 0.5), (0.0, 0.8), 1.0),
            cuboid((0.35, 0.5), (-0.3, 0.3), (0.0, 1.0), 1.2),
        ],
        ObjectClass::Floater => vec![
            Part::Cylinder {
                x: 0.0,
                y: 0.0,
                radius: 0.5,
                z: (0.0, 0.6),
                shade: 1.0,
            },
            cuboid((-0.25, 0.25), (-0.25, 0.25), (0.6, 1.0), 1.2),
        ],
        ObjectClass::Boat => boat_hull(),
        ObjectClass::SwimmerOnBoat | ObjectClass::FloaterOnBoat => {
            let mut p = boat_hull();
            p.push(cuboid((0.1, 0.2), (-0.12, 0.12), (0.45, 1.0), 1.3));
            p
        }
    }
}

struct Placement {
    origin: Vec3<f64>,
    forward: Vec3<f64>,
    left: Vec3<f64>,
    extent: [f64; 3],
}

impl Placement {
    fn local(&self, fx: f64, fy: f64, fz: f64) -> Vec3<f64> {
        self.origin
            + self.forward * (fx * self.extent[0])
            + self.left * (fy * self.extent[1])
            + Vec3::new(0.0, 0.0, fz * self.extent[2])
    }
}

fn shade_color(base: [u8; 3], shade: f64) -> [u8; 3] {
    base.map(|c| (c as f64 * shade).round().clamp(0.0, 255.0) as u8)
}

fn push_quad(out: &mut Vec<Triangle>, q: [Vec3<f64>; 4], id: u32, color: [u8; 3]) {
    out.push(Triangle {
        v: [q[0], q[1], q[2]],
        id,
        color,
    });
    out.push(Triangle {
        v: [q[0], q[2], q[3]],
        id,
        color,
    });
}

fn push_cuboid(
    out: &mut Vec<Triangle>,
    p: &Placement,
    x: (f64, f64),
    y: (f64, f64),
    z: (f64, f64),
    id: u32,
    color: [u8; 3],
) {
    let c = |i: usize| {
        p.local(
            if i & 1 == 0 { x.0 } else { x.1 },
            if i & 2 == 0 { y.0 } else { y.1 },
            if i & 4 == 0 { z.0 } else { z.1 },
        )
    };
    // outward-facing winding (counter-clockwise seen from outside)
    let faces = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    for f in faces {
        push_quad(out, [c(f[0]), c(f[1]), c(f[2]), c(f[3])], id, color);
    }
}

#[allow(clippy::too_many_arguments)]
fn push_cylinder(
    out: &mut Vec<Triangle>,
    p: &Placement,
    cx: f64,
    cy: f64,
    radius: f64,
    z: (f64, f64),
    id: u32,
    color: [u8; 3],
) {
    // radius is a fraction of the footprint width, applied on both local axes
    let rx = radius * p.extent[1] / p.extent[0];
    let ring = |zf: f64| -> Vec<Vec3<f64>> {
        (0..CYLINDER_SEGMENTS)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / CYLINDER_SEGMENTS as f64;
                p.local(cx + rx * a.cos(), cy + radius * a.sin(), zf)
            })
            .collect()
    };
    let (bottom, top) = (ring(z.0), ring(z.1));
    let (cb, ct) = (p.local(cx, cy, z.0), p.local(cx, cy, z.1));
    for k in 0..CYLINDER_SEGMENTS {
        let n = (k + 1) % CYLINDER_SEGMENTS;
        push_quad(out, [bottom[k], bottom[n], top[n], top[k]], id, color);
        out.push(Triangle {
            v: [ct, top[k], top[n]],
            id,
            color,
        });
        out.push(Triangle {
            v: [cb, bottom[n], bottom[k]],
            id,
            color,
        });
    }
}

/// Composite mesh for one placed object.
pub fn object_mesh(obj: &WorldObject) -> ObjectMesh {
    let h = obj.heading.to_radians();
    let forward = Vec3::new(h.sin(), h.cos(), 0.0);
    let left = Vec3::new(-h.cos(), h.sin(), 0.0);
    let extent = obj.class.footprint();
    let placement = Placement {
        origin: obj.position,
        forward,
        left,
        extent,
    };
    let base = obj.class.palette();
    let mut triangles = Vec::with_capacity(128);
    for part in parts(obj.class) {
        match part {
            Part::Cuboid { x, y, z, shade } => push_cuboid(
                &mut triangles,
                &placement,
                x,
                y,
                z,
                obj.id,
                shade_color(base, shade),
            ),
            Part::Cylinder {
                x,
                y,
                radius,
                z,
                shade,
            } => push_cylinder(
                &mut triangles,
                &placement,
                x,
                y,
                radius,
                z,
                obj.id,
                shade_color(base, shade),
            ),
        }
    }
    let center = obj.position + Vec3::new(0.0, 0.0, extent[2] * 0.5);
    let radius = triangles
        .iter()
        .flat_map(|t| t.v)
        .map(|v| (v - center).norm())
        .fold(0.0, f64::max);
    ObjectMesh {
        id: obj.id,
        triangles,
        center,
        radius,
    }
}

/// Axis-aligned box between two corners; handy for constructed test scenes.
pub fn box_mesh(id: u32, min: Vec3<f64>, max: Vec3<f64>, color: [u8; 3]) -> ObjectMesh {
    let placement = Placement {
        origin: min,
        forward: Vec3::new(1.0, 0.0, 0.0),
        left: Vec3::new(0.0, 1.0, 0.0),
        extent: [max.x - min.x, max.y - min.y, max.z - min.z],
    };
    let mut triangles = Vec::with_capacity(12);
    push_cuboid(
        &mut triangles,
        &placement,
        (0.0, 1.0),
        (0.0, 1.0),
        (0.0, 1.0),
        id,
        color,
    );
    let center = (min + max) * 0.5;
    ObjectMesh {
        id,
        triangles,
        center,
        radius: (max - center).norm(),
    }
}

pub fn terrain_color(world: &WorldState) -> [u8; 3] {
    match world.biome {
        crate::world::Biome::Urban => [120, 120, 118],
        crate::world::Biome::Water => [30, 80, 140],
        crate::world::Biome::Pasture => [70, 130, 50],
    }
}

/// Ground (or water surface) at z = 0 covering the area plus [`TERRAIN_EXTENT`].
pub fn terrain_mesh(world: &WorldState) -> Vec<Triangle> {
    let r = world.area.expanded(TERRAIN_EXTENT);
    let q = [
        Vec3::new(r.min_x, r.min_y, 0.0),
        Vec3::new(r.max_x, r.min_y, 0.0),
        Vec3::new(r.max_x, r.max_y, 0.0),
        Vec3::new(r.min_x, r.max_y, 0.0),
    ];
    let mut out = Vec::with_capacity(2);
    push_quad(&mut out, q, 0, terrain_color(world));
    out
}
