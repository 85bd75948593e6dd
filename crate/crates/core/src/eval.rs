//! mAP@0.5 evaluation with greedy IoU matching and all-point interpolation.

use crate::error::{Error, Result};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

/// Corner box `(x_min, y_min, x_max, y_max)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    pub x_min: T,
    pub y_min: T,
    pub x_max: T,
    pub y_max: T,
}

impl<T: Real> BBox<T> {
    pub fn new(x_min: T, y_min: T, x_max: T, y_max: T) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn area(&self) -> T {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn is_valid(&self) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max
    }

    fn key(&self) -> [T; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// Intersection over union; zero-area boxes are rejected.
pub fn iou<T: Real>(a: &BBox<T>, b: &BBox<T>) -> Result<T> {
    if !a.is_valid() || !b.is_valid() {
        return Err(Error::InvalidInput(
            "IoU of a degenerate box is undefined".into(),
        ));
    }
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(T::zero());
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(T::zero());
    let inter = w * h;
    Ok(inter / (a.area() + b.area() - inter))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection<T> {
    pub frame_id: u64,
    pub class: String,
    pub bbox: BBox<T>,
    pub confidence: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth<T> {
    pub frame_id: u64,
    pub class: String,
    pub bbox: BBox<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp<T> {
    pub class: String,
    pub ground_truth: usize,
    pub detections: usize,
    /// `None` when the class has no ground truth.
    pub ap: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapReport<T> {
    pub per_class: Vec<ClassAp<T>>,
    pub mean: T,
}

/// Descending confidence; ties broken by frame id then box coordinates.
fn detection_order<T: Real>(a: &Detection<T>, b: &Detection<T>) -> Ordering {
    b.confidence
        .partial_cmp(&a.confidence)
        .unwrap_or(Ordering::Equal)
        .then(a.frame_id.cmp(&b.frame_id))
        .then_with(|| {
            a.bbox
                .key()
                .iter()
                .zip(b.bbox.key().iter())
                .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        })
}

/// True-positive flag per detection, in the order given.
fn match_detections<T: Real>(
    dets: &[&Detection<T>],
    gts: &[&GroundTruth<T>],
    threshold: T,
) -> Result<Vec<bool>> {
    let mut by_frame: HashMap<u64, Vec<(BBox<T>, bool)>> = HashMap::new();
    for g in gts {
        by_frame
            .entry(g.frame_id)
            .or_default()
            .push((g.bbox, false));
    }
    let mut flags = Vec::with_capacity(dets.len());
    for d in dets {
        let mut best: Option<(usize, T)> = None;
        if let Some(frame) = by_frame.get(&d.frame_id) {
            for (i, (g, used)) in frame.iter().enumerate() {
                if *used {
                    continue;
                }
                let o = iou(&d.bbox, g)?;
                if o >= threshold && best.is_none_or(|(_, b)| o > b) {
                    best = Some((i, o));
                }
            }
        }
        if let Some((i, _)) = best {
            by_frame.get_mut(&d.frame_id).unwrap()[i].1 = true;
        }
        flags.push(best.is_some());
    }
    Ok(flags)
}

/// Area under the precision envelope for ranked TP flags against `positives` ground truths.
pub fn average_precision<T: Real>(tp_flags: &[bool], positives: usize) -> T {
    if positives == 0 || tp_flags.is_empty() {
        return T::zero();
    }
    let npos = T::lit(positives as f64);
    let mut tp = 0usize;
    let mut points: Vec<(T, T)> = Vec::with_capacity(tp_flags.len());
    for (k, &hit) in tp_flags.iter().enumerate() {
        tp += hit as usize;
        let recall = T::lit(tp as f64) / npos;
        let precision = T::lit(tp as f64) / T::lit((k + 1) as f64);
        points.push((recall, precision));
    }
    // envelope: precision at rank k becomes the max precision at any rank >= k
    for k in (0..points.len().saturating_sub(1)).rev() {
        points[k].1 = points[k].1.max(points[k + 1].1);
    }
    let mut ap = T::zero();
    let mut prev_recall = T::zero();
    for (recall, precision) in points {
        ap = ap + (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Per-class AP at the given IoU threshold and the mean over classes with ground truth.
pub fn map_at<T: Real>(
    detections: &[Detection<T>],
    ground_truth: &[GroundTruth<T>],
    classes: &[String],
    iou_threshold: T,
) -> Result<MapReport<T>> {
    let known: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    for d in detections {
        if !known.contains_key(d.class.as_str()) {
            return Err(Error::InvalidInput(format!(
                "detection class {:?} not in class list",
                d.class
            )));
        }
        if !d.bbox.is_valid() {
            return Err(Error::InvalidInput(format!(
                "degenerate detection box in frame {}",
                d.frame_id
            )));
        }
        if !(d.confidence >= T::zero() && d.confidence <= T::one()) {
            return Err(Error::InvalidInput("confidence outside [0, 1]".into()));
        }
    }
    for g in ground_truth {
        if !known.contains_key(g.class.as_str()) {
            return Err(Error::InvalidInput(format!(
                "ground-truth class {:?} not in class list",
                g.class
            )));
        }
        if !g.bbox.is_valid() {
            return Err(Error::InvalidInput(format!(
                "degenerate ground-truth box in frame {}",
                g.frame_id
            )));
        }
    }
    let mut per_class = Vec::with_capacity(classes.len());
    let mut sum = T::zero();
    let mut counted = 0usize;
    for class in classes {
        let mut dets: Vec<&Detection<T>> =
            detections.iter().filter(|d| &d.class == class).collect();
        dets.sort_by(|a, b| detection_order(a, b));
        let gts: Vec<&GroundTruth<T>> = ground_truth.iter().filter(|g| &g.class == class).collect();
        let ap = if gts.is_empty() {
            None
        } else {
            let flags = match_detections(&dets, &gts, iou_threshold)?;
            let ap = average_precision::<T>(&flags, gts.len());
            sum = sum + ap;
            counted += 1;
            Some(ap)
        };
        per_class.push(ClassAp {
            class: class.clone(),
            ground_truth: gts.len(),
            detections: dets.len(),
            ap,
        });
    }
    let mean = if counted == 0 {
        T::zero()
    } else {
        sum / T::lit(counted as f64)
    };
    Ok(MapReport { per_class, mean })
}

pub fn map50<T: Real>(
    detections: &[Detection<T>],
    ground_truth: &[GroundTruth<T>],
    classes: &[String],
) -> Result<MapReport<T>> {
    map_at(detections, ground_truth, classes, T::lit(0.5))
}
