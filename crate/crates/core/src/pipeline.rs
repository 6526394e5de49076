//! End-to-end frame processing: preprocess, detect segments, extrapolate,
//! cluster, propose, score, and pick at most one face per frame.

use std::cmp::Ordering;

use crate::classifier::{
    build_tables, featurize, label_proposals, train_linear, FeatureLayout, LinearModel, ProbabilityTables, SvmParams,
};
use crate::clustering::{cluster_segments, Cluster, ClusterParams, Estimated};
use crate::detector::{FrameContext, SegmentDetector};
use crate::error::{Error, Result};
use crate::geometry::{BBox, CanonicalTable, SegmentKind};
use crate::imaging::{clahe, downsample, ClaheParams, GrayImage};
use crate::kindset::KindSet;
use crate::num::Scalar;
use crate::proposal::{generate_proposals, Proposal};
use crate::rng::derive_seed;

/// Everything that shapes detection besides the learned model.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionConfig {
    pub active_kinds: Vec<SegmentKind>,
    /// Score a winning proposal must reach.
    pub theta: f64,
    /// IoU a proposal needs with the ground truth to count as a face.
    pub delta: f64,
    /// Proposal cap per cluster.
    pub zeta: usize,
    pub cluster: ClusterParams,
    pub downsample: usize,
    /// CLAHE after downsampling; `None` skips it.
    pub clahe: Option<ClaheParams>,
    /// Smallest accepted face estimate side, in downsampled pixels.
    pub min_face: f64,
    pub canonical: CanonicalTable,
    pub proposal_seed: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            active_kinds: SegmentKind::ALL.to_vec(),
            theta: 0.0,
            delta: 0.5,
            zeta: 20,
            cluster: ClusterParams::default(),
            downsample: 4,
            clahe: Some(ClaheParams::default()),
            min_face: 64.0,
            canonical: CanonicalTable::default(),
            proposal_seed: 0,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        FeatureLayout::new(&self.active_kinds)?;
        self.cluster.validate()?;
        if self.zeta == 0 {
            return Err(Error::invalid("zeta must be >= 1"));
        }
        if self.downsample == 0 {
            return Err(Error::invalid("downsample factor must be >= 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta must lie in (0, 1)"));
        }
        if self.theta.is_nan() || self.min_face.is_nan() || self.min_face < 0.0 {
            return Err(Error::invalid("theta and min_face must be numbers, min_face >= 0"));
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<FeatureLayout> {
        FeatureLayout::new(&self.active_kinds)
    }
}

/// A frame handed to the pipeline, in original-resolution coordinates.
#[derive(Debug, Clone, Copy)]
pub struct FrameInput<'a, T> {
    pub image: &'a GrayImage,
    pub frame_id: u64,
    /// Full-face hint for annotation-driven detectors.
    pub face_hint: Option<BBox<T>>,
}

/// Intermediate results for one frame, in downsampled coordinates.
#[derive(Debug, Clone)]
pub struct FrameAnalysis<T> {
    /// Downsampling factor mapping these coordinates back to the frame.
    pub factor: T,
    pub estimates: Vec<Estimated<T>>,
    pub clusters: Vec<Cluster<T>>,
    pub proposals: Vec<Proposal<T>>,
}

impl<T: Scalar> FrameAnalysis<T> {
    /// Proposal box in original-frame coordinates.
    pub fn frame_box(&self, p: &Proposal<T>) -> BBox<T> {
        p.bbox.scale(self.factor)
    }
}

/// Downsampling followed by optional CLAHE.
pub fn preprocess(image: &GrayImage, config: &DetectionConfig) -> Result<GrayImage> {
    let small = downsample(image, config.downsample)?;
    match &config.clahe {
        Some(p) if small.width() >= p.tiles_x && small.height() >= p.tiles_y => clahe(&small, p),
        _ => Ok(small),
    }
}

/// Runs the frame up to proposal generation.
pub fn analyze_frame<T: Scalar>(
    frame: &FrameInput<'_, T>,
    detector: &dyn SegmentDetector<T>,
    config: &DetectionConfig,
) -> Result<FrameAnalysis<T>> {
    let factor = T::from_usize(config.downsample).unwrap();
    let processed = preprocess(frame.image, config)?;
    let ctx = FrameContext {
        image: &processed,
        frame_id: frame.frame_id,
        face_hint: frame.face_hint.map(|b| b.scale(T::one() / factor)),
    };
    let active = KindSet::from_kinds(config.active_kinds.iter().copied());
    let (w, h) = (
        T::from_usize(processed.width()).unwrap(),
        T::from_usize(processed.height()).unwrap(),
    );
    let min_face = T::lit(config.min_face);

    let mut estimates = Vec::new();
    for det in detector.detect(&ctx)? {
        if !active.contains(det.kind) {
            continue;
        }
        let Ok(est) = config.canonical.estimate_full_face(det.kind, &det.bbox, w, h) else {
            continue;
        };
        // size of the unclamped estimate
        let [u1, v1, u2, v2] = config.canonical.get(det.kind);
        let face_w = det.bbox.width() / T::lit(u2 - u1);
        let face_h = det.bbox.height() / T::lit(v2 - v1);
        if face_w < min_face || face_h < min_face {
            continue;
        }
        estimates.push((det, est));
    }

    let clusters = cluster_segments(&estimates, &config.cluster);
    let mut proposals = Vec::new();
    for cluster in &clusters {
        let seed = derive_seed(&[config.proposal_seed, frame.frame_id, cluster.anchor as u64]);
        proposals.extend(generate_proposals(cluster, &estimates, config.zeta, seed)?);
    }
    Ok(FrameAnalysis {
        factor,
        estimates,
        clusters,
        proposals,
    })
}

/// A frame's chosen face in original coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection<T> {
    pub bbox: BBox<T>,
    pub score: T,
    pub kinds: KindSet,
}

/// Learned part of the detector.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<T> {
    pub linear: LinearModel<T>,
    pub tables: ProbabilityTables,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn check_config(&self, config: &DetectionConfig) -> Result<()> {
        let layout = config.layout()?;
        if layout.kinds() != self.linear.kinds.as_slice() {
            return Err(Error::Model(format!(
                "model trained for kinds {:?} but config activates {:?}",
                self.linear.kinds,
                layout.kinds()
            )));
        }
        if self.linear.weights.len() != layout.dim() {
            return Err(Error::Model(format!(
                "model has {} weights, layout needs {}",
                self.linear.weights.len(),
                layout.dim()
            )));
        }
        Ok(())
    }
}

fn better<T: Scalar>(a: &Detection<T>, b: &Detection<T>) -> bool {
    match a.score.partial_cmp(&b.score).unwrap_or(Ordering::Equal) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match a.bbox.area().partial_cmp(&b.bbox.area()).unwrap_or(Ordering::Equal) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => a.bbox.lex_cmp(&b.bbox) == Ordering::Less,
        },
    }
}

/// Scores every proposal and returns the best one, ignoring `theta`.
///
/// Ties go to the larger box, then to the lexicographically smaller box.
pub fn best_proposal<T: Scalar>(
    frame: &FrameInput<'_, T>,
    detector: &dyn SegmentDetector<T>,
    model: &TrainedModel<T>,
    config: &DetectionConfig,
) -> Result<Option<Detection<T>>> {
    let layout = config.layout()?;
    let analysis = analyze_frame(frame, detector, config)?;
    let mut best: Option<Detection<T>> = None;
    for p in &analysis.proposals {
        let x = featurize::<T>(p.kinds, &model.tables, &layout)?;
        let cand = Detection {
            bbox: analysis.frame_box(p),
            score: model.linear.score(&x),
            kinds: p.kinds,
        };
        if best.as_ref().is_none_or(|b| better(&cand, b)) {
            best = Some(cand);
        }
    }
    Ok(best)
}

/// Full detection: the best proposal if its score reaches `theta`.
pub fn detect_face<T: Scalar>(
    frame: &FrameInput<'_, T>,
    detector: &dyn SegmentDetector<T>,
    model: &TrainedModel<T>,
    config: &DetectionConfig,
) -> Result<Option<Detection<T>>> {
    let theta = T::lit(config.theta);
    Ok(best_proposal(frame, detector, model, config)?.filter(|d| d.score >= theta))
}

/// Accumulates labeled proposals over training frames.
#[derive(Debug, Clone)]
pub struct Trainer<'c> {
    config: &'c DetectionConfig,
    positives: Vec<KindSet>,
    negatives: Vec<KindSet>,
    pub frames: usize,
}

/// Outcome counts of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrainingSummary {
    pub frames: usize,
    pub positives: usize,
    pub negatives: usize,
}

impl<'c> Trainer<'c> {
    pub fn new(config: &'c DetectionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            config,
            positives: Vec::new(),
            negatives: Vec::new(),
            frames: 0,
        })
    }

    /// Adds one frame; `gt_face` is the annotated (visible) face in frame coordinates.
    pub fn add_frame<T: Scalar>(
        &mut self,
        frame: &FrameInput<'_, T>,
        gt_face: Option<&BBox<T>>,
        detector: &dyn SegmentDetector<T>,
    ) -> Result<()> {
        let analysis = analyze_frame(frame, detector, self.config)?;
        let gt_small = gt_face.map(|g| g.scale(T::one() / analysis.factor));
        let (pos, neg) = label_proposals(&analysis.proposals, gt_small.as_ref(), T::lit(self.config.delta));
        self.positives.extend(pos.iter().map(|p| p.kinds));
        self.negatives.extend(neg.iter().map(|p| p.kinds));
        self.frames += 1;
        Ok(())
    }

    pub fn summary(&self) -> TrainingSummary {
        TrainingSummary {
            frames: self.frames,
            positives: self.positives.len(),
            negatives: self.negatives.len(),
        }
    }

    /// Builds the probability tables and fits the linear scorer.
    pub fn finish<T: Scalar>(&self, svm: &SvmParams, smoothing: Option<f64>) -> Result<TrainedModel<T>> {
        let tables = build_tables(&self.positives, &self.negatives)?.with_smoothing(smoothing);
        let layout = self.config.layout()?;
        let mut features = Vec::with_capacity(self.positives.len() + self.negatives.len());
        let mut labels = Vec::with_capacity(features.capacity());
        for (sets, label) in [(&self.positives, true), (&self.negatives, false)] {
            for &s in sets.iter() {
                features.push(featurize::<T>(s, &tables, &layout)?);
                labels.push(label);
            }
        }
        let linear = train_linear(&layout, &features, &labels, svm)?;
        Ok(TrainedModel { linear, tables })
    }
}
