//! Segment detectors.
//!
//! Two backends implement [`SegmentDetector`]: [`CascadeDetector`] scans the
//! frame with multi-block LBP cascades, and [`FixtureDetector`] synthesizes
//! detections from a known face box for tests and synthetic experiments.

mod cascade;
mod fixture;
mod lbp;

pub use cascade::{
    cascade_detect, evaluate_window_exhaustive, scan_levels, CascadeDetector, CascadeModel, ScaleLevel, ScanParams,
    Stage, WeakClassifier,
};
pub use fixture::{fixture_detect, FixtureDetector, FixtureDetectorConfig};
pub use lbp::{lbp_code, LbpBlock};

use std::cmp::Ordering;

use crate::error::Result;
use crate::geometry::{iou, BBox, SegmentKind};
use crate::imaging::GrayImage;
use crate::num::Scalar;

/// One firing of one segment detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentDetection<T> {
    pub kind: SegmentKind,
    pub bbox: BBox<T>,
    /// Final-stage cascade margin, when the backend has one.
    pub raw_score: Option<T>,
}

impl<T: Scalar> SegmentDetection<T> {
    pub fn new(kind: SegmentKind, bbox: BBox<T>) -> Self {
        SegmentDetection {
            kind,
            bbox,
            raw_score: None,
        }
    }
}

/// What a detector sees for one frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameContext<'a, T> {
    pub image: &'a GrayImage,
    pub frame_id: u64,
    /// Ground-truth full face in `image` coordinates. Only annotation-driven
    /// backends read it.
    pub face_hint: Option<BBox<T>>,
}

pub trait SegmentDetector<T: Scalar>: Send + Sync {
    /// Kinds this detector can report.
    fn kinds(&self) -> Vec<SegmentKind>;

    fn detect(&self, frame: &FrameContext<'_, T>) -> Result<Vec<SegmentDetection<T>>>;
}

/// Sorts detections by kind, then `x1`, then `y1` (remaining corners break ties).
pub fn normalize_order<T: Scalar>(dets: &mut [SegmentDetection<T>]) {
    dets.sort_by(|a, b| {
        a.kind
            .cmp(&b.kind)
            .then_with(|| a.bbox.lex_cmp(&b.bbox))
            .then_with(|| a.raw_score.partial_cmp(&b.raw_score).unwrap_or(Ordering::Equal))
    });
}

/// Merges overlapping windows of the same kind.
///
/// Windows are linked when their IoU is at least `min_iou`; each connected
/// group is replaced by the mean of its corners and the best member score.
pub fn merge_overlapping<T: Scalar>(dets: &[SegmentDetection<T>], min_iou: T) -> Vec<SegmentDetection<T>> {
    let n = dets.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if dets[i].kind == dets[j].kind && iou(&dets[i].bbox, &dets[j].bbox) >= min_iou {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = find(&mut parent, i);
        groups[r].push(i);
    }
    let mut out: Vec<SegmentDetection<T>> = groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let count = T::from_usize(g.len()).unwrap();
            let mut acc = [T::zero(); 4];
            let mut score: Option<T> = None;
            for &i in &g {
                let b = &dets[i].bbox;
                acc[0] = acc[0] + b.x1;
                acc[1] = acc[1] + b.y1;
                acc[2] = acc[2] + b.x2;
                acc[3] = acc[3] + b.y2;
                score = match (score, dets[i].raw_score) {
                    (Some(s), Some(r)) => Some(s.max(r)),
                    (s, r) => s.or(r),
                };
            }
            SegmentDetection {
                kind: dets[g[0]].kind,
                bbox: BBox::new(acc[0] / count, acc[1] / count, acc[2] / count, acc[3] / count),
                raw_score: score,
            }
        })
        .collect();
    normalize_order(&mut out);
    out
}
