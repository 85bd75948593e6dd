//! Capture-to-disk pipeline: scenario → render → annotate → dataset files.

use crate::annotate::{extract_annotations, Annotation, DEFAULT_MIN_PIXELS};
use crate::camera::{CameraPose, Intrinsics};
use crate::dataset::{
    split, write_debug_buffers, write_frame, DatasetManifest, Image, MetaCsvWriter, MetaRecord,
};
use crate::error::Result;
use crate::render::{render, FrameBuffers, RenderSettings};
use crate::scenario::{Scenario, ScenarioConfig};
use crate::world::WorldState;
use std::path::Path;

/// Everything produced for one captured frame.
#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub buffers: FrameBuffers,
    pub image: Image,
    pub annotations: Vec<Annotation>,
}

pub fn render_frame(
    world: &WorldState,
    pose: &CameraPose<f64>,
    intr: &Intrinsics<f64>,
    settings: &RenderSettings,
    frame_id: u64,
    min_pixels: u64,
) -> Result<RenderedFrame> {
    let buffers = render(world, pose, intr, settings, frame_id)?;
    let annotations = extract_annotations(&buffers, world, pose, intr, settings, min_pixels)?;
    let image = Image::from_buffers(&buffers, settings.supersample);
    Ok(RenderedFrame {
        buffers,
        image,
        annotations,
    })
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub name: String,
    /// Overrides the config's frame count.
    pub frames: Option<u64>,
    pub dump_debug_buffers: bool,
    pub min_pixels: u64,
    pub split_ratios: Vec<f64>,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            name: "dataset".into(),
            frames: None,
            dump_debug_buffers: false,
            min_pixels: DEFAULT_MIN_PIXELS,
            split_ratios: vec![0.8, 0.2],
        }
    }
}

/// Runs a scenario to completion and writes the dataset under `out`.
pub fn generate(
    mut config: ScenarioConfig,
    out: &Path,
    opts: &GenerateOptions,
) -> Result<DatasetManifest> {
    if let Some(n) = opts.frames {
        config.frame_count = n;
    }
    let mut manifest = DatasetManifest::new(&opts.name, config.hash());
    let settings = config.render;
    let mut scenario = Scenario::new(config)?;
    let intr = settings.intrinsics(scenario.horizontal_fov())?;
    let mut csv = MetaCsvWriter::create(&out.join("meta.csv"))?;
    while let Some(capture) = scenario.next_capture() {
        let frame = render_frame(
            &scenario.world,
            &capture.pose,
            &intr,
            &settings,
            capture.frame_id,
            opts.min_pixels,
        )?;
        let paths = write_frame(
            out,
            capture.frame_id,
            &frame.image,
            &frame.annotations,
            &capture.meta,
        )?;
        if opts.dump_debug_buffers {
            write_debug_buffers(out, capture.frame_id, &frame.buffers)?;
        }
        csv.append(&capture.meta)?;
        manifest.push(capture.frame_id, paths);
    }
    let manifest = split(manifest, &opts.split_ratios, scenario.config.seed)?;
    manifest.save(out)?;
    Ok(manifest)
}

/// Metadata of every capture without rendering; used for alignment studies.
pub fn collect_meta(config: ScenarioConfig) -> Result<Vec<MetaRecord>> {
    Ok(Scenario::new(config)?.map(|c| c.meta).collect())
}
