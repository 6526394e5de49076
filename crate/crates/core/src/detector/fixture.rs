use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{normalize_order, FrameContext, SegmentDetection, SegmentDetector};
use crate::error::{Error, Result};
use crate::geometry::{BBox, CanonicalTable, SegmentKind};
use crate::num::Scalar;
use crate::rng::seeded_rng;

/// Noise model of the annotation-driven test detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureDetectorConfig {
    /// Probability that a detector misses its segment.
    pub miss_rate: f64,
    /// Probability, per detector and frame, of one spurious firing.
    pub false_positive_rate: f64,
    /// Gaussian translation of each true segment, as a fraction of the face size.
    pub center_jitter_sd: f64,
    pub seed: u64,
    /// A segment cut by the frame border fires only if at least this fraction
    /// of it is inside the frame; the reported box is the visible part.
    pub min_visible_fraction: f64,
    /// Size range of the face implied by a spurious firing, as a fraction of
    /// the shorter image side.
    pub false_positive_face_range: (f64, f64),
}

impl Default for FixtureDetectorConfig {
    fn default() -> Self {
        FixtureDetectorConfig {
            miss_rate: 0.0,
            false_positive_rate: 0.0,
            center_jitter_sd: 0.0,
            seed: 0,
            min_visible_fraction: 0.5,
            false_positive_face_range: (0.3, 0.9),
        }
    }
}

impl FixtureDetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let (lo, hi) = self.false_positive_face_range;
        if !unit(self.miss_rate) || !unit(self.false_positive_rate) || !unit(self.min_visible_fraction) {
            return Err(Error::invalid("fixture rates must lie in [0, 1]"));
        }
        if !(self.center_jitter_sd >= 0.0 && self.center_jitter_sd.is_finite()) {
            return Err(Error::invalid("fixture jitter must be finite and >= 0"));
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid(
                "fixture false-positive face range must satisfy 0 < lo <= hi",
            ));
        }
        Ok(())
    }
}

/// Synthesizes the detections a perfect-but-noisy bank of segment detectors
/// would return for a frame whose full face is `gt_face`.
///
/// For every kind (in enumeration order) the canonical sub-rectangle of
/// `gt_face` is translated by Gaussian jitter, clipped to the frame, and
/// dropped with probability `miss_rate` or when too little of it is visible.
/// Each kind then adds a uniformly placed spurious box with probability
/// `false_positive_rate`. The output is a pure function of
/// `(cfg, kinds, gt_face, frame_id, frame size)`.
pub fn fixture_detect<T: Scalar>(
    cfg: &FixtureDetectorConfig,
    table: &CanonicalTable,
    kinds: &[SegmentKind],
    gt_face: Option<&BBox<T>>,
    frame_id: u64,
    img_w: T,
    img_h: T,
) -> Vec<SegmentDetection<T>> {
    let mut kinds = kinds.to_vec();
    kinds.sort();
    kinds.dedup();

    let mut out = Vec::new();
    let mut rng = seeded_rng(&[cfg.seed, frame_id, 0x7A11]);
    if let Some(face) = gt_face {
        for &kind in &kinds {
            let u_miss: f64 = rng.random();
            let zx: f64 = rng.sample(StandardNormal);
            let zy: f64 = rng.sample(StandardNormal);
            if u_miss < cfg.miss_rate {
                continue;
            }
            let dx = T::lit(zx * cfg.center_jitter_sd) * face.width();
            let dy = T::lit(zy * cfg.center_jitter_sd) * face.height();
            let seg = table.segment_of(kind, face).translate(dx, dy);
            let visible = seg.clamp_to(img_w, img_h);
            if visible.area() <= T::zero() {
                continue;
            }
            if visible != seg && visible.area() < T::lit(cfg.min_visible_fraction) * seg.area() {
                continue;
            }
            out.push(SegmentDetection::new(kind, visible));
        }
    }

    let short_side = img_w.min(img_h).as_f64();
    let (lo, hi) = cfg.false_positive_face_range;
    let mut rng = seeded_rng(&[cfg.seed, frame_id, 0xFA15E]);
    for &kind in &kinds {
        let u_fire: f64 = rng.random();
        let size = short_side * (lo + (hi - lo) * rng.random::<f64>());
        let ux: f64 = rng.random();
        let uy: f64 = rng.random();
        if u_fire >= cfg.false_positive_rate {
            continue;
        }
        let [u1, v1, u2, v2] = table.get(kind);
        let sw = ((u2 - u1) * size).min(img_w.as_f64());
        let sh = ((v2 - v1) * size).min(img_h.as_f64());
        let x1 = ux * (img_w.as_f64() - sw);
        let y1 = uy * (img_h.as_f64() - sh);
        let bbox = BBox::from_f64([x1, y1, x1 + sw, y1 + sh]);
        if bbox.area() > T::zero() {
            out.push(SegmentDetection::new(kind, bbox));
        }
    }
    normalize_order(&mut out);
    out
}

/// [`SegmentDetector`] wrapper around [`fixture_detect`]; reads the frame's face hint.
#[derive(Debug, Clone)]
pub struct FixtureDetector {
    pub config: FixtureDetectorConfig,
    pub kinds: Vec<SegmentKind>,
    pub table: CanonicalTable,
}

impl FixtureDetector {
    pub fn new(config: FixtureDetectorConfig, kinds: Vec<SegmentKind>, table: CanonicalTable) -> Result<Self> {
        config.validate()?;
        Ok(FixtureDetector { config, kinds, table })
    }
}

impl<T: Scalar> SegmentDetector<T> for FixtureDetector {
    fn kinds(&self) -> Vec<SegmentKind> {
        self.kinds.clone()
    }

    fn detect(&self, frame: &FrameContext<'_, T>) -> Result<Vec<SegmentDetection<T>>> {
        let (w, h) = frame.image.dimensions();
        Ok(fixture_detect(
            &self.config,
            &self.table,
            &self.kinds,
            frame.face_hint.as_ref(),
            frame.frame_id,
            T::from_usize(w).unwrap(),
            T::from_usize(h).unwrap(),
        ))
    }
}
