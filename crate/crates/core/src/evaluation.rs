//! Frame-level detection metrics.
//!
//! Every frame has at most one ground-truth face and at most one detection.
//! A detection on a face frame with IoU below `delta` counts as both a false
//! positive and a false negative. FPR is measured over no-face frames only.

use std::time::Duration;

use log::warn;
use serde::Serialize;

use crate::geometry::{iou, BBox};
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOutcome<T> {
    pub frame_id: u64,
    pub gt_face: Option<BBox<T>>,
    /// Detected box and its score.
    pub detection: Option<(BBox<T>, T)>,
}

impl<T: Scalar> FrameOutcome<T> {
    pub fn gt_present(&self) -> bool {
        self.gt_face.is_some()
    }

    /// Detection present on a face frame with IoU at least `delta`.
    pub fn correct(&self, delta: T) -> bool {
        match (&self.gt_face, &self.detection) {
            (Some(gt), Some((b, _))) => iou(b, gt) >= delta,
            _ => false,
        }
    }

    pub fn scored(&self, delta: T) -> ScoredFrame {
        ScoredFrame {
            gt_present: self.gt_present(),
            detection: self.detection.map(|(_, s)| (s.as_f64(), self.correct(delta))),
        }
    }
}

/// A frame reduced to what threshold sweeps need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredFrame {
    pub gt_present: bool,
    /// `(score, correct)` of the frame's best proposal.
    pub detection: Option<(f64, bool)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }
}

/// Counts outcomes as produced at one fixed threshold.
pub fn confusion<T: Scalar>(outcomes: &[FrameOutcome<T>], delta: T) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for o in outcomes {
        match (o.gt_present(), o.detection.is_some()) {
            (true, true) if o.correct(delta) => c.tp += 1,
            (true, true) => {
                c.fp += 1;
                c.fn_ += 1;
            }
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// `2TP / (2TP + FP + FN)`; 0 (with a warning) when nothing was counted.
pub fn f1(c: &ConfusionCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        warn!("F1 undefined without positives or detections; reporting 0");
        return 0.0;
    }
    (2 * c.tp) as f64 / denom as f64
}

/// One threshold of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub theta: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: Option<f64>,
    pub recall: f64,
    pub tpr: f64,
    pub fpr: Option<f64>,
}

/// Sweeps the threshold over `-inf`, every distinct score, and `+inf`
/// (ascending). A frame keeps its detection when `score >= theta`.
pub fn sweep(frames: &[ScoredFrame]) -> Vec<CurvePoint> {
    let face_frames = frames.iter().filter(|f| f.gt_present).count() as u64;
    let noface_frames = frames.len() as u64 - face_frames;

    // (score, class): 0 correct, 1 wrong on face frame, 2 on no-face frame
    let mut dets: Vec<(f64, u8)> = frames
        .iter()
        .filter_map(|f| {
            f.detection.map(|(s, ok)| {
                let class = match (f.gt_present, ok) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, _) => 2,
                };
                (s, class)
            })
        })
        .collect();
    dets.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut thetas = vec![f64::NEG_INFINITY];
    for &(s, _) in &dets {
        if thetas.last() != Some(&s) {
            thetas.push(s);
        }
    }
    if thetas.last() != Some(&f64::INFINITY) {
        thetas.push(f64::INFINITY);
    }

    let mut remaining = [0u64; 3];
    for &(_, c) in &dets {
        remaining[c as usize] += 1;
    }
    let mut cursor = 0;
    thetas
        .into_iter()
        .map(|theta| {
            while cursor < dets.len() && dets[cursor].0 < theta {
                remaining[dets[cursor].1 as usize] -= 1;
                cursor += 1;
            }
            let tp = remaining[0];
            let fp = remaining[1] + remaining[2];
            let fn_ = face_frames - tp;
            let tn = noface_frames - remaining[2];
            CurvePoint {
                theta,
                tp,
                fp,
                fn_,
                tn,
                precision: (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64),
                recall: ratio(tp, face_frames),
                tpr: ratio(tp, face_frames),
                fpr: (noface_frames > 0).then(|| remaining[2] as f64 / noface_frames as f64),
            }
        })
        .collect()
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Best TPR over thresholds whose FPR is at most `fpr_target`.
/// `None` when there are no no-face frames.
pub fn tpr_at_fpr(frames: &[ScoredFrame], fpr_target: f64) -> Option<f64> {
    let curve = sweep(frames);
    curve
        .iter()
        .filter_map(|p| p.fpr.filter(|&f| f <= fpr_target).map(|_| p.tpr))
        .reduce(f64::max)
}

/// Best recall over thresholds whose precision is at least `precision_target`.
/// `None` when no threshold reaches it.
pub fn recall_at_precision(frames: &[ScoredFrame], precision_target: f64) -> Option<f64> {
    sweep(frames)
        .iter()
        .filter(|p| p.precision.is_some_and(|pr| pr >= precision_target))
        .map(|p| p.recall)
        .reduce(f64::max)
}

/// Per-frame latency summary in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingStats {
    pub frames: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

/// Summarizes per-frame durations; `None` for an empty run.
pub fn timing(durations: &[Duration]) -> Option<TimingStats> {
    if durations.is_empty() {
        return None;
    }
    let mut ms: Vec<f64> = durations.iter().map(|d| d.as_secs_f64() * 1e3).collect();
    ms.sort_by(f64::total_cmp);
    let n = ms.len();
    let median = if n % 2 == 1 {
        ms[n / 2]
    } else {
        (ms[n / 2 - 1] + ms[n / 2]) / 2.0
    };
    let p95 = ms[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1];
    Some(TimingStats {
        frames: n,
        mean_ms: ms.iter().sum::<f64>() / n as f64,
        median_ms: median,
        p95_ms: p95,
        min_ms: ms[0],
        max_ms: ms[n - 1],
    })
}
