//! On-disk dataset layout: images, label files, metadata sidecars, manifest
//! and train/val split.
//!
//! ```text
//! DIR/images/000000.png
//! DIR/labels/000000.txt   class_index x_center y_center width height (normalized, 6 decimals)
//! DIR/meta/000000.json
//! DIR/meta.csv
//! DIR/manifest.json
//! ```

use crate::annotate::{Annotation, PixelBox};
use crate::camera::CameraPose;
use crate::error::{Error, Result};
use crate::render::{FrameBuffers, Quality};
use crate::world::{ObjectClass, Weather, WorldState};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Per-frame capture conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRecord {
    pub frame_id: u64,
    pub altitude: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub clock: f64,
    pub weather: Weather,
    pub quality: Quality,
    pub seed: u64,
}

impl MetaRecord {
    pub fn new(
        frame_id: u64,
        pose: &CameraPose<f64>,
        world: &WorldState,
        quality: Quality,
    ) -> Self {
        Self {
            frame_id,
            altitude: pose.altitude(),
            yaw: pose.yaw,
            pitch: pose.pitch,
            roll: pose.roll,
            clock: world.clock(),
            weather: world.weather,
            quality,
            seed: world.rng_seed,
        }
    }

    pub const CSV_HEADER: &'static str =
        "frame_id,altitude,yaw,pitch,roll,clock,weather,quality,seed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.frame_id,
            self.altitude,
            self.yaw,
            self.pitch,
            self.roll,
            self.clock,
            enum_name(&self.weather),
            enum_name(&self.quality),
            self.seed
        )
    }
}

fn enum_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl Image {
    /// Output-resolution image from supersampled buffers.
    pub fn from_buffers(buffers: &FrameBuffers, supersample: u32) -> Self {
        let k = supersample.max(1);
        Self {
            width: buffers.width / k,
            height: buffers.height / k,
            data: buffers.downsample_color(k),
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_compression(png::Compression::Fast);
            let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
            writer
                .write_image_data(&self.data)
                .map_err(|e| Error::Png(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
        let mut data = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader
            .next_frame(&mut data)
            .map_err(|e| Error::Png(e.to_string()))?;
        if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
            return Err(Error::Png("expected 8-bit RGB".into()));
        }
        data.truncate(info.buffer_size());
        Ok(Self {
            width: info.width,
            height: info.height,
            data,
        })
    }
}

/// Width and height from a PNG header.
pub fn image_size(path: &Path) -> Result<(u32, u32)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = png::Decoder::new(std::io::BufReader::new(file))
        .read_info()
        .map_err(|e| Error::Png(e.to_string()))?;
    let info = reader.info();
    Ok((info.width, info.height))
}

/// One parsed label line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Label {
    pub class_index: usize,
    pub x_center: f64,
    pub y_center: f64,
    pub width: f64,
    pub height: f64,
}

impl Label {
    pub fn from_box(class: ObjectClass, b: &PixelBox, image_w: u32, image_h: u32) -> Self {
        let (w, h) = (image_w as f64, image_h as f64);
        Self {
            class_index: class.index(),
            x_center: (b.x_min + b.x_max) as f64 / 2.0 / w,
            y_center: (b.y_min + b.y_max) as f64 / 2.0 / h,
            width: b.width() as f64 / w,
            height: b.height() as f64 / h,
        }
    }

    /// Pixel-space corners `(x_min, y_min, x_max, y_max)`.
    pub fn to_pixels(&self, image_w: u32, image_h: u32) -> [f64; 4] {
        let (w, h) = (image_w as f64, image_h as f64);
        [
            (self.x_center - self.width / 2.0) * w,
            (self.y_center - self.height / 2.0) * h,
            (self.x_center + self.width / 2.0) * w,
            (self.y_center + self.height / 2.0) * h,
        ]
    }

    fn in_unit_range(&self) -> bool {
        let fields = [self.x_center, self.y_center, self.width, self.height];
        fields.iter().all(|v| (0.0..=1.0).contains(v))
            && self.x_center - self.width / 2.0 >= -1e-12
            && self.x_center + self.width / 2.0 <= 1.0 + 1e-12
            && self.y_center - self.height / 2.0 >= -1e-12
            && self.y_center + self.height / 2.0 <= 1.0 + 1e-12
    }
}

pub fn format_labels(annotations: &[Annotation], image_w: u32, image_h: u32) -> Result<String> {
    let mut text = String::new();
    for a in annotations {
        let l = Label::from_box(a.class, &a.bbox, image_w, image_h);
        if !l.in_unit_range() {
            return Err(Error::Integrity(format!(
                "annotation for object {} falls outside the image after normalization",
                a.object_id
            )));
        }
        writeln!(
            text,
            "{} {:.6} {:.6} {:.6} {:.6}",
            l.class_index, l.x_center, l.y_center, l.width, l.height
        )
        .unwrap();
    }
    Ok(text)
}

pub fn parse_labels(text: &str) -> Result<Vec<Label>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Integrity(format!("malformed label line {line:?}"));
            if parts.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(Label {
                class_index: parts[0].parse().map_err(|_| bad())?,
                x_center: num(parts[1])?,
                y_center: num(parts[2])?,
                width: num(parts[3])?,
                height: num(parts[4])?,
            })
        })
        .collect()
}

pub fn read_labels(path: &Path) -> Result<Vec<Label>> {
    parse_labels(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// Paths of one written frame, relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePaths {
    pub image: String,
    pub labels: String,
    pub meta: String,
}

impl FramePaths {
    pub fn for_frame(frame_id: u64) -> Self {
        Self {
            image: format!("images/{frame_id:06}.png"),
            labels: format!("labels/{frame_id:06}.txt"),
            meta: format!("meta/{frame_id:06}.json"),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_frame(
    dir: &Path,
    frame_id: u64,
    image: &Image,
    annotations: &[Annotation],
    meta: &MetaRecord,
) -> Result<FramePaths> {
    let paths = FramePaths::for_frame(frame_id);
    // validate labels before touching the filesystem
    let labels = format_labels(annotations, image.width, image.height)?;
    write_file(&dir.join(&paths.image), &image.encode_png()?)?;
    write_file(&dir.join(&paths.labels), labels.as_bytes())?;
    let mut meta_json = serde_json::to_vec_pretty(meta)?;
    meta_json.push(b'\n');
    write_file(&dir.join(&paths.meta), &meta_json)?;
    Ok(paths)
}

/// Raw little-endian depth (`f32`) and instance (`u32`) dumps for debugging.
pub fn write_debug_buffers(dir: &Path, frame_id: u64, buffers: &FrameBuffers) -> Result<()> {
    let depth: Vec<u8> = buffers.depth.iter().flat_map(|d| d.to_le_bytes()).collect();
    let ids: Vec<u8> = buffers
        .instance
        .iter()
        .flat_map(|i| i.to_le_bytes())
        .collect();
    write_file(&dir.join(format!("debug/{frame_id:06}_depth.f32")), &depth)?;
    write_file(&dir.join(format!("debug/{frame_id:06}_instance.u32")), &ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub frame_id: u64,
    #[serde(flatten)]
    pub paths: FramePaths,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub classes: Vec<String>,
    pub frames: Vec<FrameEntry>,
    pub config_hash: String,
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, config_hash: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            classes: ObjectClass::ALL
                .iter()
                .map(|c| c.name().to_string())
                .collect(),
            frames: Vec::new(),
            config_hash: config_hash.into(),
        }
    }

    pub fn push(&mut self, frame_id: u64, paths: FramePaths) {
        self.frames.push(FrameEntry {
            frame_id,
            paths,
            split: None,
        });
    }

    pub fn count(&self, split: Split) -> usize {
        self.frames
            .iter()
            .filter(|f| f.split == Some(split))
            .count()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        write_file(&dir.join("manifest.json"), &json)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Checks every referenced file exists and every frame has exactly one split.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        for f in &self.frames {
            for p in [&f.paths.image, &f.paths.labels, &f.paths.meta] {
                if !dir.join(p).is_file() {
                    missing.push(p.clone());
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::Integrity(format!(
                "missing files: {}",
                missing.join(", ")
            )));
        }
        if let Some(f) = self.frames.iter().find(|f| f.split.is_none()) {
            return Err(Error::Integrity(format!(
                "frame {} has no split",
                f.frame_id
            )));
        }
        Ok(())
    }
}

/// Seeded shuffle then partition into train/val(/test) by `ratios`.
pub fn split(mut manifest: DatasetManifest, ratios: &[f64], seed: u64) -> Result<DatasetManifest> {
    const LABELS: [Split; 3] = [Split::Train, Split::Val, Split::Test];
    if ratios.is_empty() || ratios.len() > 3 || ratios.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::InvalidInput(
            "need 1 to 3 non-negative split ratios".into(),
        ));
    }
    if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput("split ratios must sum to 1".into()));
    }
    let n = manifest.frames.len();
    // largest-remainder rounding so counts sum to n
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| (e + 1e-9).floor() as usize).collect();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut short = n - counts.iter().sum::<usize>();
    for i in order.into_iter().cycle() {
        if short == 0 {
            break;
        }
        counts[i] += 1;
        short -= 1;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut start = 0;
    for (k, &c) in counts.iter().enumerate() {
        for &i in &idx[start..start + c] {
            manifest.frames[i].split = Some(LABELS[k]);
        }
        start += c;
    }
    Ok(manifest)
}

/// Aggregate `meta.csv` for alignment tooling.
pub fn write_meta_csv(path: &Path, records: &[MetaRecord]) -> Result<()> {
    let mut text = String::with_capacity(64 * (records.len() + 1));
    text.push_str(MetaRecord::CSV_HEADER);
    text.push('\n');
    for r in records {
        text.push_str(&r.csv_row());
        text.push('\n');
    }
    write_file(path, text.as_bytes())
}

/// Streaming appender for `meta.csv`.
pub struct MetaCsvWriter {
    file: fs::File,
    path: PathBuf,
}

impl MetaCsvWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(file, "{}", MetaRecord::CSV_HEADER).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, r: &MetaRecord) -> Result<()> {
        writeln!(self.file, "{}", r.csv_row()).map_err(|e| Error::io(&self.path, e))
    }
}
