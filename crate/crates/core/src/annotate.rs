//! Instance-buffer to bounding-box extraction with visibility fractions.

use crate::camera::{CameraPose, Intrinsics};
use crate::error::{Error, Result};
use crate::raster::{clip_window, scan_triangle, Projector, ScreenTriangle};
use crate::render::{FrameBuffers, RenderSettings, Scene, SceneObject};
use crate::world::{ObjectClass, WorldState};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Buffer-resolution pixels an object needs to be annotated.
pub const DEFAULT_MIN_PIXELS: u64 = 16;

/// Half-open pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl PixelBox {
    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    /// Output-resolution box from inclusive buffer-resolution mask bounds.
    pub fn from_mask_bounds(min_x: u32, min_y: u32, max_x: u32, max_y: u32, k: u32) -> Self {
        Self {
            x_min: min_x / k,
            y_min: min_y / k,
            x_max: (max_x + 1).div_ceil(k),
            y_max: (max_y + 1).div_ceil(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub object_id: u32,
    pub class: ObjectClass,
    pub bbox: PixelBox,
    pub visible_pixels: u64,
    pub visibility: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy)]
struct MaskStats {
    count: u64,
    min_x: u32,
    min_y: u32,
    max_x: u32,
    max_y: u32,
}

impl MaskStats {
    fn new(x: u32, y: u32) -> Self {
        Self {
            count: 0,
            min_x: x,
            min_y: y,
            max_x: x,
            max_y: y,
        }
    }

    fn add_run(&mut self, x0: u32, x1: u32, y: u32) {
        self.count += (x1 - x0 + 1) as u64;
        self.min_x = self.min_x.min(x0);
        self.max_x = self.max_x.max(x1);
        self.min_y = self.min_y.min(y);
        self.max_y = self.max_y.max(y);
    }
}

fn mask_stats(buffers: &FrameBuffers) -> BTreeMap<u32, MaskStats> {
    let mut stats: BTreeMap<u32, MaskStats> = BTreeMap::new();
    let w = buffers.width as usize;
    for (y, row) in buffers.instance.chunks_exact(w).enumerate() {
        let mut x = 0;
        while x < w {
            let id = row[x];
            let start = x;
            while x < w && row[x] == id {
                x += 1;
            }
            if id != 0 {
                stats
                    .entry(id)
                    .or_insert_with(|| MaskStats::new(start as u32, y as u32))
                    .add_run(start as u32, (x - 1) as u32, y as u32);
            }
        }
    }
    stats
}

/// Pixels the object covers when rasterized with nothing else in the scene.
pub fn solo_pixel_count(object: &SceneObject, proj: &Projector) -> u64 {
    let mut tris: Vec<ScreenTriangle> = Vec::new();
    for t in &object.mesh.triangles {
        proj.setup(t, 0, &mut tris);
    }
    let bounds = tris
        .iter()
        .filter_map(|t| t.pixel_bounds(proj.width, proj.height))
        .reduce(|a, b| (a.0.min(b.0), a.1.min(b.1), a.2.max(b.2), a.3.max(b.3)));
    let Some(window) = bounds else {
        return 0;
    };
    let stride = (window.2 - window.0 + 1) as usize;
    let rows = (window.3 - window.1 + 1) as usize;
    let mut covered = vec![false; stride * rows];
    for t in &tris {
        let Some(w) = clip_window(t, proj.width, proj.height, window) else {
            continue;
        };
        scan_triangle(t, w, |x, y, _| {
            covered[(y - window.1) as usize * stride + (x - window.0) as usize] = true;
        });
    }
    covered.iter().filter(|&&c| c).count() as u64
}

/// Annotations for a world snapshot; fails if the buffer names an id the world lacks.
pub fn extract_annotations(
    buffers: &FrameBuffers,
    world: &WorldState,
    pose: &CameraPose<f64>,
    intr: &Intrinsics<f64>,
    settings: &RenderSettings,
    min_pixels: u64,
) -> Result<Vec<Annotation>> {
    extract_annotations_scene(
        buffers,
        &Scene::from_world(world),
        pose,
        intr,
        settings,
        min_pixels,
    )
}

pub fn extract_annotations_scene(
    buffers: &FrameBuffers,
    scene: &Scene,
    pose: &CameraPose<f64>,
    intr: &Intrinsics<f64>,
    settings: &RenderSettings,
    min_pixels: u64,
) -> Result<Vec<Annotation>> {
    let k = settings.supersample;
    let buf_intr = intr.scaled(k);
    if (buf_intr.width, buf_intr.height) != (buffers.width, buffers.height) {
        return Err(Error::Integrity(format!(
            "buffers are {}x{}, expected {}x{}",
            buffers.width, buffers.height, buf_intr.width, buf_intr.height
        )));
    }
    let proj = Projector::new(pose, &buf_intr);
    let mut out = Vec::new();
    for (id, m) in mask_stats(buffers) {
        let object = scene.object(id).ok_or_else(|| {
            Error::Integrity(format!("instance id {id} has no object in the world"))
        })?;
        if m.count < min_pixels {
            continue;
        }
        let unoccluded = solo_pixel_count(object, &proj).max(m.count);
        let truncated = m.min_x == 0
            || m.min_y == 0
            || m.max_x + 1 == buffers.width
            || m.max_y + 1 == buffers.height;
        out.push(Annotation {
            object_id: id,
            class: object.class,
            bbox: PixelBox::from_mask_bounds(m.min_x, m.min_y, m.max_x, m.max_y, k),
            visible_pixels: m.count,
            visibility: m.count as f64 / unoccluded as f64,
            truncated,
        });
    }
    Ok(out)
}
