use aerosynth::eval::{average_precision, iou, map50, map_at, BBox, Detection, GroundTruth};
use proptest::prelude::*;

fn classes() -> Vec<String> {
    vec!["car".into(), "cow".into(), "boat".into()]
}

fn gt(frame: u64, class: &str, x: f64, y: f64) -> GroundTruth<f64> {
    GroundTruth {
        frame_id: frame,
        class: class.into(),
        bbox: BBox::new(x, y, x + 10.0, y + 10.0),
    }
}

fn det(frame: u64, class: &str, x: f64, y: f64, confidence: f64) -> Detection<f64> {
    Detection {
        frame_id: frame,
        class: class.into(),
        bbox: BBox::new(x, y, x + 10.0, y + 10.0),
        confidence,
    }
}

#[test]
fn hand_worked_precision_recall_curve() {
    // TP, FP, TP against two ground-truth boxes: AP = 0.5 * 1 + 0.5 * 2/3
    let gts = vec![gt(0, "car", 0.0, 0.0), gt(0, "car", 50.0, 0.0)];
    let dets = vec![
        det(0, "car", 1.0, 0.0, 0.9),
        det(0, "car", 200.0, 0.0, 0.8),
        det(0, "car", 50.0, 1.0, 0.7),
    ];
    let r = map50(&dets, &gts, &classes()).unwrap();
    assert!((r.mean - 5.0 / 6.0).abs() < 1e-12);
    assert_eq!(r.per_class[0].ap, Some(r.mean));
    assert_eq!(r.per_class[1].ap, None);
}

#[test]
fn duplicates_count_as_false_positives() {
    let gts = vec![gt(0, "car", 0.0, 0.0)];
    let dets = vec![det(0, "car", 0.0, 0.0, 0.9), det(0, "car", 0.5, 0.0, 0.8)];
    let r = map50(&dets, &gts, &classes()).unwrap();
    assert_eq!(r.mean, 1.0);
    let late = vec![
        det(0, "car", 0.5, 0.0, 0.95),
        det(0, "car", 100.0, 0.0, 0.99),
    ];
    assert_eq!(map50(&late, &gts, &classes()).unwrap().mean, 0.5);
}

#[test]
fn matches_never_cross_frames_or_classes() {
    let gts = vec![gt(0, "car", 0.0, 0.0), gt(1, "cow", 0.0, 0.0)];
    let dets = vec![det(1, "car", 0.0, 0.0, 0.9), det(0, "cow", 0.0, 0.0, 0.9)];
    let r = map50(&dets, &gts, &classes()).unwrap();
    assert_eq!(r.mean, 0.0);
}

#[test]
fn mean_skips_classes_without_ground_truth() {
    let gts = vec![gt(0, "car", 0.0, 0.0)];
    let dets = vec![det(0, "car", 0.0, 0.0, 0.9), det(0, "boat", 0.0, 0.0, 0.9)];
    let r = map50(&dets, &gts, &classes()).unwrap();
    assert_eq!(r.mean, 1.0);
    assert_eq!(r.per_class[2].detections, 1);
}

#[test]
fn invalid_inputs_are_rejected() {
    let gts = vec![gt(0, "car", 0.0, 0.0)];
    assert!(map50(&[det(0, "bus", 0.0, 0.0, 0.5)], &gts, &classes()).is_err());
    assert!(map50(&[det(0, "car", 0.0, 0.0, 1.5)], &gts, &classes()).is_err());
    let mut flat = det(0, "car", 0.0, 0.0, 0.5);
    flat.bbox.x_max = flat.bbox.x_min;
    assert!(map50(&[flat], &gts, &classes()).is_err());
    assert!(iou(
        &BBox::new(0.0, 0.0, 0.0, 1.0),
        &BBox::new(0.0, 0.0, 1.0, 1.0)
    )
    .is_err());
}

#[test]
fn threshold_controls_matching() {
    let gts = vec![gt(0, "car", 0.0, 0.0)];
    // IoU of a 3 px shift on a 10 px box: 70 / 130
    let dets = vec![det(0, "car", 3.0, 0.0, 0.9)];
    assert_eq!(map_at(&dets, &gts, &classes(), 0.5).unwrap().mean, 1.0);
    assert_eq!(map_at(&dets, &gts, &classes(), 0.6).unwrap().mean, 0.0);
}

#[test]
fn single_precision_agrees() {
    let g = vec![GroundTruth {
        frame_id: 0,
        class: "car".to_string(),
        bbox: BBox::new(0.0f32, 0.0, 10.0, 10.0),
    }];
    let d = vec![Detection {
        frame_id: 0,
        class: "car".to_string(),
        bbox: BBox::new(1.0f32, 0.0, 11.0, 10.0),
        confidence: 0.5f32,
    }];
    assert_eq!(map50(&d, &g, &classes()).unwrap().mean, 1.0f32);
}

fn scene() -> impl Strategy<Value = (Vec<GroundTruth<f64>>, Vec<Detection<f64>>)> {
    let boxes = prop::collection::vec((0u64..3, 0usize..2, 0.0..60.0f64, 0.0..60.0f64), 1..8);
    let dets = prop::collection::vec(
        (
            0u64..3,
            0usize..2,
            0.0..60.0f64,
            0.0..60.0f64,
            0.01..0.99f64,
        ),
        0..12,
    );
    (boxes, dets).prop_map(|(b, d)| {
        let names = ["car", "cow"];
        (
            b.into_iter()
                .map(|(f, c, x, y)| gt(f, names[c], x, y))
                .collect(),
            d.into_iter()
                .map(|(f, c, x, y, s)| det(f, names[c], x, y, s))
                .collect(),
        )
    })
}

proptest! {
    #[test]
    fn ap_lies_in_unit_interval((gts, dets) in scene()) {
        let r = map50(&dets, &gts, &classes()).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.mean));
    }

    /// Only the ranking of confidences matters.
    #[test]
    fn invariant_under_monotone_confidence_maps((gts, dets) in scene()) {
        let a = map50(&dets, &gts, &classes()).unwrap();
        let squashed: Vec<_> = dets
            .iter()
            .map(|d| Detection { confidence: d.confidence.powi(3) * 0.5 + 0.1, ..d.clone() })
            .collect();
        let b = map50(&squashed, &gts, &classes()).unwrap();
        prop_assert!((a.mean - b.mean).abs() < 1e-12);
    }

    #[test]
    fn perfect_detections_score_one((gts, _) in scene()) {
        let dets: Vec<_> = gts
            .iter()
            .enumerate()
            .map(|(i, g)| Detection { frame_id: g.frame_id, class: g.class.clone(), bbox: g.bbox, confidence: 1.0 - i as f64 * 1e-3 })
            .collect();
        prop_assert_eq!(map50(&dets, &gts, &classes()).unwrap().mean, 1.0);
    }

    #[test]
    fn envelope_ap_bounds(flags in prop::collection::vec(any::<bool>(), 0..30), extra in 0usize..5) {
        let tp = flags.iter().filter(|&&f| f).count();
        let positives = tp + extra;
        prop_assume!(positives > 0);
        let ap: f64 = average_precision(&flags, positives);
        prop_assert!(ap >= 0.0 && ap <= tp as f64 / positives as f64 + 1e-12);
        if flags.iter().take(tp).all(|&f| f) {
            prop_assert!((ap - tp as f64 / positives as f64).abs() < 1e-12);
        }
    }
}
