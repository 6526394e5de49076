use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use segface::classifier::{LinearModel, ProbabilityTables};
use segface::dataset::{
    load_annotations, load_model, save_model, write_synth_dataset, AnnotatedFrame, LoadOptions, Split,
};
use segface::detector::{CascadeDetector, CascadeModel, FixtureDetector, SegmentDetector};
use segface::evaluation::{
    confusion, f1, recall_at_precision, sweep, timing, tpr_at_fpr, ConfusionCounts, FrameOutcome, ScoredFrame,
    TimingStats,
};
use segface::imaging::load_image;
use segface::pipeline::{best_proposal, detect_face, Detection, DetectionConfig, FrameInput, Trainer};
use segface::{BBox, GrayImage, SegmentKind, TrainedModelF64};

use crate::config::{Backend, FixtureFace, Paths, PipelineConfig};

/// Cropped faces at least this visible form the partial-face subset.
pub const PARTIAL_MIN_VISIBLE: f64 = 0.4;

pub struct Ctx {
    pub cfg: PipelineConfig,
    pub paths: Paths,
    pub pool: rayon::ThreadPool,
}

impl Ctx {
    fn data_dir(&self) -> PathBuf {
        self.paths.get(&self.cfg.data_dir)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let d = self.paths.get(&self.cfg.out_dir);
        fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
        Ok(d)
    }

    fn frames(&self) -> Result<Vec<AnnotatedFrame>> {
        let path = self.data_dir().join("annotations.jsonl");
        let opts = LoadOptions {
            split_seed: self.cfg.split_seed(),
            train_fraction: self.cfg.train_fraction,
            check_bounds: true,
            min_face_side: self.cfg.min_face * self.cfg.downsample as f64,
        };
        Ok(load_annotations(&path, &opts)?)
    }

    fn detector(&self) -> Result<Box<dyn SegmentDetector<f64>>> {
        let kinds = self.cfg.kinds()?;
        Ok(match self.cfg.backend {
            Backend::Fixture => Box::new(FixtureDetector::new(
                self.cfg.fixture(),
                kinds,
                self.cfg.canonical_table()?,
            )?),
            Backend::Cascade => {
                let mut models = Vec::new();
                for k in kinds {
                    let m = if self.cfg.cascade_toy {
                        CascadeModel::toy(k, self.cfg.seed)
                    } else {
                        let p = self.paths.get(&self.cfg.cascade_dir).join(format!("{}.json", k.name()));
                        let m = CascadeModel::load(&p).with_context(|| format!("loading cascade {}", p.display()))?;
                        if m.kind != k {
                            bail!("{} holds a {} cascade", p.display(), m.kind);
                        }
                        m
                    };
                    models.push(m);
                }
                let mut d = CascadeDetector::new(models);
                d.merge_iou = self.cfg.cascade_merge_iou;
                Box::new(d)
            }
        })
    }

    fn model(&self) -> Result<TrainedModelF64> {
        let p = self.paths.get(&self.cfg.model);
        let (model, _) = load_model::<f64>(&p).with_context(|| format!("loading model {}", p.display()))?;
        Ok(model)
    }
}

impl Ctx {
    fn input<'a>(&self, image: &'a GrayImage, id: usize, f: &AnnotatedFrame) -> FrameInput<'a, f64> {
        FrameInput {
            image,
            frame_id: id as u64,
            face_hint: match self.cfg.fixture_face {
                FixtureFace::Visible => f.face,
                FixtureFace::Full => f.face_hint(),
            },
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn synth(ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    let dir = ctx.data_dir();
    let m = write_synth_dataset(&ctx.cfg.synth(), &dir)?;
    fs::write(dir.join("config.toml"), ctx.cfg.to_toml())?;
    writeln!(
        out,
        "wrote {} frames ({} with faces, {} cropped, {} without) to {}",
        m.frames,
        m.face_frames,
        m.cropped_frames,
        m.no_face_frames,
        dir.display()
    )?;
    Ok(())
}

pub fn train(ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    let det_cfg = ctx.cfg.detection()?;
    let detector = ctx.detector()?;
    let data = ctx.data_dir();
    let frames: Vec<(usize, AnnotatedFrame)> = ctx
        .frames()?
        .into_iter()
        .enumerate()
        .filter(|(_, f)| f.split == Some(Split::Train))
        .collect();
    if frames.is_empty() {
        bail!("no training frames in {}", data.display());
    }
    let mut trainer = Trainer::new(&det_cfg)?;
    for (id, f) in &frames {
        let img = load_image(&f.image_path(&data))?;
        trainer.add_frame(&ctx.input(&img, *id, f), f.face.as_ref(), detector.as_ref())?;
    }
    let s = trainer.summary();
    info!(
        "{} frames, {} positive / {} negative proposals",
        s.frames, s.positives, s.negatives
    );
    let model = trainer
        .finish::<f64>(&ctx.cfg.svm(), ctx.cfg.smoothing())
        .context("training failed")?;
    let path = ctx.paths.get(&ctx.cfg.model);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    save_model(&model, &ctx.cfg.to_json(), &path)?;
    writeln!(
        out,
        "trained on {} frames ({} positive, {} negative proposals); model written to {}",
        s.frames,
        s.positives,
        s.negatives,
        path.display()
    )?;
    Ok(())
}

struct FrameResult {
    id: usize,
    frame: AnnotatedFrame,
    best: Option<Detection<f64>>,
    elapsed: Duration,
}

/// Best proposal per frame, computed on the worker pool, returned in frame order.
fn run_frames(
    ctx: &Ctx,
    frames: Vec<(usize, AnnotatedFrame)>,
    detector: &dyn SegmentDetector<f64>,
    model: &TrainedModelF64,
    det_cfg: &DetectionConfig,
) -> Result<Vec<FrameResult>> {
    model.check_config(det_cfg)?;
    let data = ctx.data_dir();
    ctx.pool.install(|| {
        frames
            .into_par_iter()
            .map(|(id, frame)| {
                let img = load_image(&frame.image_path(&data))?;
                let start = Instant::now();
                let best = best_proposal(&ctx.input(&img, id, &frame), detector, model, det_cfg)?;
                let elapsed = start.elapsed();
                Ok(FrameResult {
                    id,
                    frame,
                    best,
                    elapsed,
                })
            })
            .collect()
    })
}

fn select(frames: Vec<AnnotatedFrame>, which: &str) -> Vec<(usize, AnnotatedFrame)> {
    frames
        .into_iter()
        .enumerate()
        .filter(|(_, f)| match which {
            "train" => f.split == Some(Split::Train),
            "test" => f.split == Some(Split::Test),
            _ => true,
        })
        .collect()
}

pub fn detect(ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    let det_cfg = ctx.cfg.detection()?;
    let model = ctx.model()?;
    let detector = ctx.detector()?;
    let frames = select(ctx.frames()?, &ctx.cfg.detect_split);
    let results = run_frames(ctx, frames, detector.as_ref(), &model, &det_cfg)?;
    for r in results {
        match r.best.filter(|d| d.score >= ctx.cfg.theta) {
            Some(d) => writeln!(
                out,
                "{} {} {} {} {} {}",
                r.frame.image, d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2, d.score
            )?,
            None => writeln!(out, "{} NONE", r.frame.image)?,
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct SubsetReport {
    pub frames: usize,
    pub detected: usize,
    pub recall: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub frames: usize,
    pub face_frames: usize,
    pub no_face_frames: usize,
    pub theta: f64,
    pub delta: f64,
    pub counts: ConfusionCounts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: f64,
    pub tpr_at_1pct_fpr: Option<f64>,
    pub recall_at_99pct_precision: Option<f64>,
    /// Border-cropped faces with at least 40% of the face visible.
    pub partial_faces: SubsetReport,
    pub config: serde_json::Value,
    pub timing: Option<TimingStats>,
}

fn visible_fraction(f: &AnnotatedFrame) -> Option<f64> {
    let (face, full) = (f.face?, f.full_face?);
    Some(face.area() / full.area())
}

pub fn eval(ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    let det_cfg = ctx.cfg.detection()?;
    let model = ctx.model()?;
    let detector = ctx.detector()?;
    let frames = select(ctx.frames()?, "test");
    if frames.is_empty() {
        bail!("no test frames");
    }
    let results = run_frames(ctx, frames, detector.as_ref(), &model, &det_cfg)?;
    let (theta, delta) = (ctx.cfg.theta, ctx.cfg.delta);

    let at_theta: Vec<FrameOutcome<f64>> = results
        .iter()
        .map(|r| FrameOutcome {
            frame_id: r.id as u64,
            gt_face: r.frame.face,
            detection: r.best.filter(|d| d.score >= theta).map(|d| (d.bbox, d.score)),
        })
        .collect();
    let scored: Vec<ScoredFrame> = results
        .iter()
        .map(|r| {
            FrameOutcome {
                frame_id: r.id as u64,
                gt_face: r.frame.face,
                detection: r.best.map(|d| (d.bbox, d.score)),
            }
            .scored(delta)
        })
        .collect();
    let counts = confusion(&at_theta, delta);

    let partial: Vec<&FrameOutcome<f64>> = results
        .iter()
        .zip(&at_theta)
        .filter(|(r, _)| visible_fraction(&r.frame).is_some_and(|v| v >= PARTIAL_MIN_VISIBLE))
        .map(|(_, o)| o)
        .collect();
    let partial_hits = partial.iter().filter(|o| o.correct(delta)).count();

    let face_frames = results.iter().filter(|r| r.frame.face.is_some()).count();
    let report = EvalReport {
        frames: results.len(),
        face_frames,
        no_face_frames: results.len() - face_frames,
        theta,
        delta,
        counts,
        precision: counts.precision(),
        recall: counts.recall(),
        f1: f1(&counts),
        tpr_at_1pct_fpr: tpr_at_fpr(&scored, 0.01),
        recall_at_99pct_precision: recall_at_precision(&scored, 0.99),
        partial_faces: SubsetReport {
            frames: partial.len(),
            detected: partial_hits,
            recall: (!partial.is_empty()).then(|| partial_hits as f64 / partial.len() as f64),
        },
        config: ctx.cfg.to_json(),
        timing: timing(&results.iter().map(|r| r.elapsed).collect::<Vec<_>>()),
    };

    let dir = ctx.out_dir()?;
    write_json(&dir.join("report.json"), &report)?;

    let mut curves = csv::Writer::from_path(dir.join("curves.csv"))?;
    for p in sweep(&scored) {
        curves.serialize(p)?;
    }
    curves.flush()?;

    let mut dets = csv::Writer::from_path(dir.join("detections.csv"))?;
    dets.write_record([
        "frame", "image", "gt_x1", "gt_y1", "gt_x2", "gt_y2", "x1", "y1", "x2", "y2", "score",
    ])?;
    let fmt_box = |b: Option<BBox<f64>>| match b {
        Some(b) => b.to_f64().map(|v| v.to_string()).to_vec(),
        None => vec![String::new(); 4],
    };
    for r in &results {
        let mut row = vec![r.id.to_string(), r.frame.image.clone()];
        row.extend(fmt_box(r.frame.face));
        row.extend(fmt_box(r.best.map(|d| d.bbox)));
        row.push(r.best.map(|d| d.score.to_string()).unwrap_or_default());
        dets.write_record(&row)?;
    }
    dets.flush()?;

    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    writeln!(
        out,
        "F1 {:.4}  precision {}  recall {}  TPR@1%FPR {}  recall@99%P {}  partial-face recall {} ({} frames)",
        report.f1,
        opt(report.precision),
        opt(report.recall),
        opt(report.tpr_at_1pct_fpr),
        opt(report.recall_at_99pct_precision),
        opt(report.partial_faces.recall),
        report.partial_faces.frames
    )?;
    writeln!(out, "report written to {}", dir.join("report.json").display())?;
    Ok(())
}

/// Linear model with zero weights; used by `bench` when no model file exists.
fn zero_model(kinds: &[SegmentKind]) -> Result<TrainedModelF64> {
    let layout = segface::classifier::FeatureLayout::new(kinds)?;
    Ok(TrainedModelF64 {
        linear: LinearModel {
            weights: vec![0.0; layout.dim()],
            bias: 0.0,
            kinds: layout.kinds().to_vec(),
        },
        tables: ProbabilityTables {
            set_counts: Default::default(),
            kind_counts: [(0, 0); SegmentKind::COUNT],
            n_pos: 0,
            n_neg: 0,
            smoothing: None,
        },
    })
}

pub fn bench(ctx: &Ctx, out: &mut dyn Write) -> Result<()> {
    let det_cfg = ctx.cfg.detection()?;
    let detector = ctx.detector()?;
    let model_path = ctx.paths.get(&ctx.cfg.model);
    let (model, model_desc) = if model_path.exists() {
        (ctx.model()?, model_path.display().to_string())
    } else {
        warn!("no model at {}; timing with zero weights", model_path.display());
        (zero_model(&det_cfg.active_kinds)?, "zero weights".to_string())
    };
    model.check_config(&det_cfg)?;

    let mut frames = select(ctx.frames()?, "test");
    if ctx.cfg.bench_frames > 0 {
        frames.truncate(ctx.cfg.bench_frames);
    }
    if frames.is_empty() {
        bail!("no frames to time");
    }
    let data = ctx.data_dir();
    let images = frames
        .iter()
        .map(|(_, f)| load_image(&f.image_path(&data)))
        .collect::<segface::Result<Vec<_>>>()?;

    let mut durations = Vec::with_capacity(frames.len());
    let mut detections = 0;
    for ((id, f), img) in frames.iter().zip(&images) {
        let start = Instant::now();
        let d = detect_face(&ctx.input(img, *id, f), detector.as_ref(), &model, &det_cfg)?;
        durations.push(start.elapsed());
        detections += usize::from(d.is_some());
    }
    let stats = timing(&durations).expect("at least one frame");
    let (w, h) = images[0].dimensions();
    let report = json!({
        "backend": ctx.cfg.backend,
        "active_kinds": det_cfg.active_kinds.iter().map(|k| k.name()).collect::<Vec<_>>(),
        "frame_size": [w, h],
        "model": model_desc,
        "detections": detections,
        "config": ctx.cfg.to_json(),
        "timing": stats,
    });
    let path = ctx.out_dir()?.join("bench.json");
    write_json(&path, &report)?;
    info!("bench: {:?}", stats);
    writeln!(
        out,
        "{} frames: mean {:.3} ms, median {:.3} ms, p95 {:.3} ms ({} kinds, {:?} backend)",
        stats.frames,
        stats.mean_ms,
        stats.median_ms,
        stats.p95_ms,
        det_cfg.active_kinds.len(),
        ctx.cfg.backend
    )?;
    Ok(())
}
