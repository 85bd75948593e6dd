use aerosynth::align::{
    angle_filter_mode, bootstrap_align, ks_statistic, select, AngleMode, MetaKey, MetaTable,
};
use aerosynth::dataset::{image_size, read_labels, DatasetManifest};
use aerosynth::eval::{map_at, BBox, Detection, GroundTruth};
use aerosynth::generate::{generate, GenerateOptions};
use aerosynth::protocol::DEFAULT_PORT;
use aerosynth::render::{Quality, RenderSettings};
use aerosynth::scenario::{ScenarioConfig, PRESET_NAMES};
use aerosynth::server::{Server, ServerConfig};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "aerosynth",
    version,
    about = "Synthetic aerial-imagery generator"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the TCP control server.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 640)]
        width: u32,
        #[arg(long, default_value_t = 360)]
        height: u32,
        #[arg(long, default_value_t = 2)]
        supersample: u32,
    },
    /// Run a scenario and write a dataset.
    Generate {
        /// Scenario JSON file, or a preset name (cattle, seadronessee, visdrone).
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        frames: Option<u64>,
        #[arg(long)]
        dump_debug_buffers: bool,
        /// Override output width/height, e.g. 640x360.
        #[arg(long)]
        resolution: Option<String>,
        #[arg(long)]
        quality: Option<QualityArg>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Align a synthetic meta table to a target distribution.
    Align {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_enum)]
        key: KeyArg,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 20.0)]
        threshold: f64,
        /// Filter target angle; defaults to the mean target pitch.
        #[arg(long)]
        target_pitch: Option<f64>,
        #[arg(long)]
        bin_width: Option<f64>,
        #[arg(long)]
        combined_angles: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score detections against a generated dataset with mAP.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum QualityArg {
    Low,
    High,
}

#[derive(Clone, Copy, ValueEnum)]
enum KeyArg {
    Time,
    Pitch,
    Altitude,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Bootstrap,
    Filter,
}

fn load_scenario(arg: &str) -> Result<ScenarioConfig> {
    let path = Path::new(arg);
    if path.exists() {
        return Ok(ScenarioConfig::load(path)?);
    }
    if PRESET_NAMES.contains(&arg) {
        return Ok(ScenarioConfig::preset(arg)?);
    }
    bail!("no scenario file or preset named {arg:?}")
}

fn parse_resolution(s: &str) -> Result<(u32, u32)> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .context("resolution must look like WIDTHxHEIGHT")?;
    Ok((w.parse()?, h.parse()?))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Cmd::Serve {
            port,
            seed,
            width,
            height,
            supersample,
        } => {
            let config = ServerConfig {
                seed,
                render: RenderSettings {
                    out_width: width,
                    out_height: height,
                    supersample,
                    quality: Quality::High,
                },
                ..ServerConfig::default()
            };
            let server = Server::bind(("0.0.0.0", port), config)?;
            // flushed immediately so wrappers can pick up an OS-assigned port
            println!("listening on {}", server.local_addr()?);
            std::io::stdout().flush()?;
            server.serve()?;
        }
        Cmd::Generate {
            scenario,
            out,
            frames,
            dump_debug_buffers,
            resolution,
            quality,
            seed,
        } => {
            let mut config = load_scenario(&scenario)?;
            if let Some(r) = resolution {
                let (w, h) = parse_resolution(&r)?;
                config.render.out_width = w;
                config.render.out_height = h;
            }
            if let Some(q) = quality {
                config.render.quality = match q {
                    QualityArg::Low => Quality::Low,
                    QualityArg::High => Quality::High,
                };
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            let name = Path::new(&scenario)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| scenario.clone());
            let opts = GenerateOptions {
                name,
                frames,
                dump_debug_buffers,
                ..GenerateOptions::default()
            };
            let manifest = generate(config, &out, &opts)?;
            println!(
                "wrote {} frames to {}",
                manifest.frames.len(),
                out.display()
            );
        }
        Cmd::Align {
            source,
            target,
            key,
            mode,
            n,
            threshold,
            target_pitch,
            bin_width,
            combined_angles,
            seed,
            out,
        } => {
            let src = MetaTable::load(&source)?;
            let tgt = MetaTable::load(&target)?;
            let key = match key {
                KeyArg::Time => MetaKey::Time,
                KeyArg::Pitch => MetaKey::Pitch,
                KeyArg::Altitude => MetaKey::Altitude,
            };
            let (frame_ids, warnings, uncovered) = match mode {
                ModeArg::Bootstrap => {
                    let width = bin_width.unwrap_or(key.default_bin_width());
                    let o = bootstrap_align(&src, &tgt, key, width, n, seed)?;
                    (o.frame_ids, o.warnings, o.uncovered_mass)
                }
                ModeArg::Filter => {
                    if key != MetaKey::Pitch {
                        bail!("filter mode works on --key pitch");
                    }
                    let pitches = tgt.values(MetaKey::Pitch);
                    let target_angle = target_pitch.unwrap_or_else(|| {
                        pitches.iter().sum::<f64>() / pitches.len().max(1) as f64
                    });
                    let angle_mode = if combined_angles {
                        AngleMode::Combined
                    } else {
                        AngleMode::Pitch
                    };
                    (
                        angle_filter_mode(&src, target_angle, threshold, angle_mode),
                        Vec::new(),
                        0.0,
                    )
                }
            };
            let aligned = select(&src, &frame_ids);
            let before = ks_statistic(&src.values(key), &tgt.values(key))?;
            let after = if aligned.rows.is_empty() {
                None
            } else {
                Some(ks_statistic(&aligned.values(key), &tgt.values(key))?)
            };
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            let report = serde_json::json!({
                "key": key,
                "frame_ids": frame_ids,
                "uncovered_mass": uncovered,
                "warnings": warnings,
                "ks_before": before,
                "ks_after": after,
            });
            std::fs::write(&out, serde_json::to_vec_pretty(&report)?)
                .with_context(|| format!("writing {}", out.display()))?;
            if let Some(dir) = source.parent() {
                if dir.join("manifest.json").is_file() {
                    let mut m = DatasetManifest::load(dir)?;
                    let by_id: std::collections::BTreeMap<u64, _> =
                        m.frames.iter().map(|f| (f.frame_id, f.clone())).collect();
                    m.frames = frame_ids
                        .iter()
                        .filter_map(|i| by_id.get(i).cloned())
                        .collect();
                    m.name = format!("{}-aligned", m.name);
                    let derived = out.with_extension("manifest.json");
                    std::fs::write(&derived, serde_json::to_vec_pretty(&m)?)?;
                }
            }
            println!(
                "selected {} frames; KS before {:.4}, after {}",
                frame_ids.len(),
                before,
                after.map_or("n/a".to_string(), |a| format!("{a:.4}"))
            );
        }
        Cmd::Eval { gt, pred, iou } => {
            let manifest = DatasetManifest::load(&gt)?;
            let mut ground_truth = Vec::new();
            for f in &manifest.frames {
                let (w, h) = image_size(&gt.join(&f.paths.image))?;
                for l in read_labels(&gt.join(&f.paths.labels))? {
                    let class = manifest
                        .classes
                        .get(l.class_index)
                        .with_context(|| format!("class index {} out of range", l.class_index))?;
                    let [x0, y0, x1, y1] = l.to_pixels(w, h);
                    ground_truth.push(GroundTruth {
                        frame_id: f.frame_id,
                        class: class.clone(),
                        bbox: BBox::new(x0, y0, x1, y1),
                    });
                }
            }
            let text = std::fs::read_to_string(&pred)
                .with_context(|| format!("reading {}", pred.display()))?;
            let detections: Vec<Detection<f64>> = serde_json::from_str(&text)?;
            let report = map_at(&detections, &ground_truth, &manifest.classes, iou)?;
            println!("{:<18} {:>6} {:>6} {:>8}", "class", "gt", "det", "AP");
            for c in &report.per_class {
                if c.ground_truth == 0 && c.detections == 0 {
                    continue;
                }
                let ap = c.ap.map_or("-".to_string(), |a| format!("{:.4}", a));
                println!(
                    "{:<18} {:>6} {:>6} {:>8}",
                    c.class, c.ground_truth, c.detections, ap
                );
            }
            println!("mAP@{iou}: {:.4}", report.mean);
        }
    }
    Ok(())
}
