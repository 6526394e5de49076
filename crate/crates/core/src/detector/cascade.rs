use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lbp::LbpBlock;
use super::{merge_overlapping, normalize_order, FrameContext, SegmentDetection, SegmentDetector};
use crate::error::{Error, Result};
use crate::geometry::{BBox, SegmentKind};
use crate::imaging::{integral, GrayImage, IntegralImage};
use crate::num::Scalar;

/// One boosted weak learner: an MB-LBP block and a vote per code.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakClassifier<T> {
    pub block: LbpBlock,
    pub votes: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage<T> {
    pub threshold: T,
    pub weaks: Vec<WeakClassifier<T>>,
}

/// Boosted MB-LBP cascade for one segment kind.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel<T> {
    pub kind: SegmentKind,
    pub window_w: usize,
    pub window_h: usize,
    pub stages: Vec<Stage<T>>,
    /// Scan parameters stored alongside the model, if any.
    pub scan: Option<ScanParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanParams {
    pub scale_factor: f64,
    /// Smallest window side scanned, in pixels.
    pub min_size: usize,
    /// Window stride at the smallest scale; grows with the window.
    pub step: usize,
}

impl ScanParams {
    /// Scale 1.2, stride of one eighth of the window width.
    pub fn for_window(window_w: usize, window_h: usize) -> Self {
        ScanParams {
            scale_factor: 1.2,
            min_size: window_w.max(window_h),
            step: (window_w / 8).max(1),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CascadeFile {
    kind: String,
    window: [usize; 2],
    stages: Vec<StageFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scan: Option<ScanParams>,
}

#[derive(Serialize, Deserialize)]
struct StageFile {
    threshold: f64,
    weaks: Vec<WeakFile>,
}

#[derive(Serialize, Deserialize)]
struct WeakFile {
    rects: [usize; 4],
    votes: Vec<f64>,
}

impl<T: Scalar> CascadeModel<T> {
    pub fn validate(&self) -> Result<()> {
        if self.window_w == 0 || self.window_h == 0 {
            return Err(Error::Model("cascade window must be non-empty".into()));
        }
        if self.stages.is_empty() {
            return Err(Error::Model(format!("{} cascade has no stages", self.kind)));
        }
        for (si, stage) in self.stages.iter().enumerate() {
            if stage.threshold.is_nan() {
                return Err(Error::Model(format!("stage {si} threshold is NaN")));
            }
            for (wi, weak) in stage.weaks.iter().enumerate() {
                if !weak.block.fits(self.window_w, self.window_h) {
                    return Err(Error::Model(format!(
                        "stage {si} weak {wi}: block {:?} exceeds {}x{} window",
                        weak.block, self.window_w, self.window_h
                    )));
                }
                if weak.votes.len() != 256 {
                    return Err(Error::Model(format!(
                        "stage {si} weak {wi}: {} votes, expected 256",
                        weak.votes.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CascadeFile = serde_json::from_str(text).map_err(|e| Error::Model(format!("cascade json: {e}")))?;
        let model = CascadeModel {
            kind: file.kind.parse()?,
            window_w: file.window[0],
            window_h: file.window[1],
            stages: file
                .stages
                .into_iter()
                .map(|s| Stage {
                    threshold: T::lit(s.threshold),
                    weaks: s
                        .weaks
                        .into_iter()
                        .map(|w| WeakClassifier {
                            block: LbpBlock {
                                x: w.rects[0],
                                y: w.rects[1],
                                cell_w: w.rects[2],
                                cell_h: w.rects[3],
                            },
                            votes: w.votes.into_iter().map(T::lit).collect(),
                        })
                        .collect(),
                })
                .collect(),
            scan: file.scan,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        let file = CascadeFile {
            kind: self.kind.name().to_string(),
            window: [self.window_w, self.window_h],
            scan: self.scan,
            stages: self
                .stages
                .iter()
                .map(|s| StageFile {
                    threshold: s.threshold.as_f64(),
                    weaks: s
                        .weaks
                        .iter()
                        .map(|w| WeakFile {
                            rects: [w.block.x, w.block.y, w.block.cell_w, w.block.cell_h],
                            votes: w.votes.iter().map(|v| v.as_f64()).collect(),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("cascade serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Model(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Random cascade for timing runs: a 24x24 window, 4 stages of 6 weak
    /// learners with votes in [-1, 1] and zero thresholds. Detects nothing
    /// meaningful.
    pub fn toy(kind: SegmentKind, seed: u64) -> Self {
        use rand::Rng;
        let mut rng = crate::rng::seeded_rng(&[seed, kind.index() as u64]);
        let (ww, wh) = (24, 24);
        let stages = (0..4)
            .map(|_| Stage {
                threshold: T::zero(),
                weaks: (0..6)
                    .map(|_| {
                        let cell_w = rng.random_range(1..=ww / 3);
                        let cell_h = rng.random_range(1..=wh / 3);
                        WeakClassifier {
                            block: LbpBlock {
                                x: rng.random_range(0..=ww - 3 * cell_w),
                                y: rng.random_range(0..=wh - 3 * cell_h),
                                cell_w,
                                cell_h,
                            },
                            votes: (0..256).map(|_| T::lit(rng.random_range(-1.0..=1.0))).collect(),
                        }
                    })
                    .collect(),
            })
            .collect();
        CascadeModel {
            kind,
            window_w: ww,
            window_h: wh,
            stages,
            scan: None,
        }
    }

    pub fn scan_params(&self) -> ScanParams {
        self.scan
            .unwrap_or_else(|| ScanParams::for_window(self.window_w, self.window_h))
    }
}

/// One pyramid level: the window scaled by `scale` and its stride.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleLevel {
    pub scale: f64,
    pub win_w: usize,
    pub win_h: usize,
    pub step: usize,
}

const EPS: f64 = 1e-9;

/// Pyramid levels from `min_size` upward that fit inside a `img_w x img_h` frame.
pub fn scan_levels(
    window_w: usize,
    window_h: usize,
    img_w: usize,
    img_h: usize,
    params: &ScanParams,
) -> Vec<ScaleLevel> {
    let base = (params.min_size as f64 / window_w as f64)
        .max(params.min_size as f64 / window_h as f64)
        .max(1.0);
    let factor = params.scale_factor.max(1.0 + EPS);
    let mut levels = Vec::new();
    let mut growth = 1.0f64;
    loop {
        let scale = base * growth;
        let win_w = (window_w as f64 * scale + EPS).floor() as usize;
        let win_h = (window_h as f64 * scale + EPS).floor() as usize;
        if win_w > img_w || win_h > img_h || levels.len() > 4096 {
            break;
        }
        let step = ((params.step as f64 * growth).round() as usize).max(1);
        levels.push(ScaleLevel {
            scale,
            win_w,
            win_h,
            step,
        });
        growth *= factor;
    }
    levels
}

fn scaled_block(b: &LbpBlock, s: f64) -> LbpBlock {
    let f = |v: usize| (v as f64 * s + EPS).floor() as usize;
    LbpBlock {
        x: f(b.x),
        y: f(b.y),
        cell_w: f(b.cell_w),
        cell_h: f(b.cell_h),
    }
}

struct ScaledStage<T> {
    threshold: T,
    weaks: Vec<(LbpBlock, Vec<T>)>,
}

fn scale_stages<T: Scalar>(model: &CascadeModel<T>, scale: f64) -> Vec<ScaledStage<T>> {
    model
        .stages
        .iter()
        .map(|s| ScaledStage {
            threshold: s.threshold,
            weaks: s
                .weaks
                .iter()
                .map(|w| (scaled_block(&w.block, scale), w.votes.clone()))
                .collect(),
        })
        .collect()
}

/// Staged evaluation with early exit. Returns the final-stage margin if the
/// window passes every stage.
fn run_stages<T: Scalar>(stages: &[ScaledStage<T>], ii: &IntegralImage, x: usize, y: usize) -> Option<T> {
    let mut margin = T::zero();
    for stage in stages {
        let sum: T = stage
            .weaks
            .iter()
            .map(|(b, votes)| votes[b.code_at(ii, x, y) as usize])
            .sum();
        if sum < stage.threshold {
            return None;
        }
        margin = sum - stage.threshold;
    }
    Some(margin)
}

/// Evaluates every weak classifier of every stage for the window at `(x, y)`
/// on `level`. Returns the per-stage vote sums and whether all stages pass.
pub fn evaluate_window_exhaustive<T: Scalar>(
    model: &CascadeModel<T>,
    ii: &IntegralImage,
    level: &ScaleLevel,
    x: usize,
    y: usize,
) -> (Vec<T>, bool) {
    let stages = scale_stages(model, level.scale);
    let sums: Vec<T> = stages
        .iter()
        .map(|s| {
            s.weaks
                .iter()
                .map(|(b, votes)| votes[b.code_at(ii, x, y) as usize])
                .sum()
        })
        .collect();
    let pass = sums.iter().zip(&stages).all(|(s, st)| *s >= st.threshold);
    (sums, pass)
}

/// Multi-scale sliding-window scan. Returns every accepted window (unmerged).
pub fn cascade_detect<T: Scalar>(
    model: &CascadeModel<T>,
    img: &GrayImage,
    params: &ScanParams,
) -> Vec<SegmentDetection<T>> {
    let ii = integral(img);
    cascade_detect_integral(model, &ii, params)
}

fn cascade_detect_integral<T: Scalar>(
    model: &CascadeModel<T>,
    ii: &IntegralImage,
    params: &ScanParams,
) -> Vec<SegmentDetection<T>> {
    let (w, h) = (ii.width(), ii.height());
    let mut out = Vec::new();
    for level in scan_levels(model.window_w, model.window_h, w, h, params) {
        let stages = scale_stages(model, level.scale);
        let mut y = 0;
        while y + level.win_h <= h {
            let mut x = 0;
            while x + level.win_w <= w {
                if let Some(margin) = run_stages(&stages, ii, x, y) {
                    out.push(SegmentDetection {
                        kind: model.kind,
                        bbox: BBox::new(
                            T::from_usize(x).unwrap(),
                            T::from_usize(y).unwrap(),
                            T::from_usize(x + level.win_w).unwrap(),
                            T::from_usize(y + level.win_h).unwrap(),
                        ),
                        raw_score: Some(margin),
                    });
                }
                x += level.step;
            }
            y += level.step;
        }
    }
    out
}

/// Runs a set of cascades over the frame and merges each one's windows.
#[derive(Debug, Clone)]
pub struct CascadeDetector<T> {
    pub models: Vec<(CascadeModel<T>, ScanParams)>,
    pub merge_iou: f64,
}

impl<T: Scalar> CascadeDetector<T> {
    pub fn new(models: Vec<CascadeModel<T>>) -> Self {
        let models = models
            .into_iter()
            .map(|m| {
                let p = m.scan_params();
                (m, p)
            })
            .collect();
        CascadeDetector { models, merge_iou: 0.3 }
    }
}

impl<T: Scalar> SegmentDetector<T> for CascadeDetector<T> {
    fn kinds(&self) -> Vec<SegmentKind> {
        self.models.iter().map(|(m, _)| m.kind).collect()
    }

    fn detect(&self, frame: &FrameContext<'_, T>) -> Result<Vec<SegmentDetection<T>>> {
        let ii = integral(frame.image);
        let mut all = Vec::new();
        for (model, params) in &self.models {
            let raw = cascade_detect_integral(model, &ii, params);
            all.extend(merge_overlapping(&raw, T::lit(self.merge_iou)));
        }
        all.retain(|d| d.bbox.area() > T::zero());
        normalize_order(&mut all);
        Ok(all)
    }
}
