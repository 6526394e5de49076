use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::annotations::{assign_splits, write_annotations, AnnotatedFrame, Split};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::imaging::{save_pgm, GrayImage};
use crate::rng::{derive_seed, seeded_rng};

const TAG_PLAN: u64 = 0x504C_414E;
const TAG_FRAME: u64 = 0x4652_4D45;
const TAG_SPLIT: u64 = 0x5350_4C54;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CropSide {
    Left,
    Right,
    Top,
    Bottom,
}

/// Parameters of a synthetic desk-scale frame set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub no_face_fraction: f64,
    /// Fraction of face frames whose face is cut by a border.
    pub crop_fraction: f64,
    /// Range of the cut-off fraction of the face side.
    pub crop_range: (f64, f64),
    pub crop_sides: Vec<CropSide>,
    /// Face side length range in pixels (faces are square).
    pub face_side_range: (f64, f64),
    /// Clutter shapes per frame.
    pub clutter: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            frames: 500,
            width: 320,
            height: 180,
            no_face_fraction: 0.2,
            crop_fraction: 0.3,
            crop_range: (0.25, 0.6),
            crop_sides: vec![CropSide::Left, CropSide::Right, CropSide::Top, CropSide::Bottom],
            face_side_range: (110.0, 170.0),
            clutter: 8,
            train_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.no_face_fraction) || !unit(self.crop_fraction) || !unit(self.train_fraction) {
            return Err(Error::invalid("synth fractions must lie in [0, 1]"));
        }
        let (c0, c1) = self.crop_range;
        if !(0.0 <= c0 && c0 <= c1 && c1 < 1.0) {
            return Err(Error::invalid("crop range must satisfy 0 <= lo <= hi < 1"));
        }
        let (s0, s1) = self.face_side_range;
        if !(1.0 <= s0 && s0 <= s1 && s1 <= self.width.min(self.height) as f64) {
            return Err(Error::invalid("face sides must fit inside the frame"));
        }
        if self.crop_fraction > 0.0 && self.crop_sides.is_empty() {
            return Err(Error::invalid("cropping requested without crop sides"));
        }
        Ok(())
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(&[self.seed, TAG_SPLIT])
    }
}

/// Where a frame's face went: the full square and the border cut, if any.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub full_face: BBox<f64>,
    pub crop: Option<(CropSide, f64)>,
}

impl Placement {
    /// The part of the face inside a `w` x `h` frame.
    pub fn visible(&self, w: usize, h: usize) -> BBox<f64> {
        self.full_face.clamp_to(w as f64, h as f64)
    }
}

#[derive(Debug, Clone)]
pub struct SynthFrame {
    pub image: GrayImage,
    pub annotation: AnnotatedFrame,
    pub placement: Option<Placement>,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo < hi {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Places a square face with integer corners. A crop of fraction `f` on one
/// side moves `floor(f * side)` pixels of the face beyond that border.
pub fn place_face(spec: &SynthSpec, crop: Option<(CropSide, f64)>, rng: &mut ChaCha8Rng) -> Placement {
    let side = uniform(rng, spec.face_side_range).round() as i64;
    let (w, h) = (spec.width as i64, spec.height as i64);
    let mut x = rng.random_range(0..=w - side);
    let mut y = rng.random_range(0..=h - side);
    if let Some((s, f)) = crop {
        let cut = (f * side as f64).floor() as i64;
        match s {
            CropSide::Left => x = -cut,
            CropSide::Right => x = w - side + cut,
            CropSide::Top => y = -cut,
            CropSide::Bottom => y = h - side + cut,
        }
    }
    Placement {
        full_face: BBox::new(x as f64, y as f64, (x + side) as f64, (y + side) as f64),
        crop,
    }
}

fn in_ellipse(u: f64, v: f64, cu: f64, cv: f64, ru: f64, rv: f64) -> f64 {
    ((u - cu) / ru).powi(2) + ((v - cv) / rv).powi(2)
}

/// Face glyph intensity at face-relative `(u, v)`, or `None` outside it.
fn glyph(u: f64, v: f64) -> Option<u8> {
    let head = in_ellipse(u, v, 0.5, 0.5, 0.46, 0.5);
    if head > 1.0 {
        return None;
    }
    if head > 0.8 {
        return Some(40);
    }
    for cu in [0.3, 0.7] {
        let e = in_ellipse(u, v, cu, 0.38, 0.1, 0.06);
        if e <= 0.3 {
            return Some(235);
        }
        if e <= 1.0 {
            return Some(25);
        }
    }
    if (0.46..0.54).contains(&u) && (0.42..0.64).contains(&v) {
        return Some(110);
    }
    if (0.3..0.7).contains(&u) && (0.74..0.8).contains(&v) {
        return Some(45);
    }
    Some(195)
}

/// Draws background, clutter and (when placed) the face.
pub fn render_frame(spec: &SynthSpec, placement: Option<&Placement>, rng: &mut ChaCha8Rng) -> GrayImage {
    let (w, h) = (spec.width, spec.height);
    let base = rng.random_range(60.0..120.0);
    let gx = rng.random_range(-30.0..30.0) / w as f64;
    let gy = rng.random_range(-30.0..30.0) / h as f64;
    let mut img = GrayImage::from_fn(w, h, |x, y| {
        let noise: f64 = rng.random_range(-6.0..6.0);
        (base + gx * x as f64 + gy * y as f64 + noise).round().clamp(0.0, 255.0) as u8
    });

    for _ in 0..spec.clutter {
        let cw = rng.random_range(8..=w.min(70));
        let ch = rng.random_range(8..=h.min(70));
        let x0 = rng.random_range(0..=w - cw);
        let y0 = rng.random_range(0..=h - ch);
        let value: u8 = rng.random_range(0..=255);
        let round = rng.random_bool(0.5);
        for y in y0..y0 + ch {
            for x in x0..x0 + cw {
                let u = (x - x0) as f64 + 0.5;
                let v = (y - y0) as f64 + 0.5;
                let (hw, hh) = (cw as f64 / 2.0, ch as f64 / 2.0);
                if !round || in_ellipse(u, v, hw, hh, hw, hh) <= 1.0 {
                    img.set(x, y, value);
                }
            }
        }
    }

    if let Some(p) = placement {
        let f = p.full_face;
        let vis = p.visible(w, h);
        let side = f.width();
        for y in vis.y1 as usize..vis.y2 as usize {
            for x in vis.x1 as usize..vis.x2 as usize {
                let u = (x as f64 + 0.5 - f.x1) / side;
                let v = (y as f64 + 0.5 - f.y1) / side;
                if let Some(g) = glyph(u, v) {
                    img.set(x, y, g);
                }
            }
        }
    }
    img
}

fn frame_name(i: usize) -> String {
    format!("images/frame_{i:05}.pgm")
}

/// Generates every frame in memory. Frame `i` depends only on the seed, the
/// frame plan and `i`.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Vec<SynthFrame>> {
    spec.validate()?;
    let n = spec.frames;
    let mut plan = seeded_rng(&[spec.seed, TAG_PLAN]);
    let n_noface = (n as f64 * spec.no_face_fraction).round() as usize;
    let mut has_face = vec![true; n];
    for i in sample(&mut plan, n, n_noface) {
        has_face[i] = false;
    }
    let face_idx: Vec<usize> = (0..n).filter(|&i| has_face[i]).collect();
    let n_crop = (face_idx.len() as f64 * spec.crop_fraction).round() as usize;
    let mut cropped = vec![false; n];
    for j in sample(&mut plan, face_idx.len(), n_crop) {
        cropped[face_idx[j]] = true;
    }
    let splits = assign_splits(n, spec.train_fraction, spec.split_seed())?;

    Ok((0..n)
        .map(|i| {
            let mut rng = seeded_rng(&[spec.seed, i as u64, TAG_FRAME]);
            let placement = has_face[i].then(|| {
                let crop = cropped[i].then(|| {
                    let side = spec.crop_sides[rng.random_range(0..spec.crop_sides.len())];
                    (side, uniform(&mut rng, spec.crop_range))
                });
                place_face(spec, crop, &mut rng)
            });
            let image = render_frame(spec, placement.as_ref(), &mut rng);
            let annotation = AnnotatedFrame {
                image: frame_name(i),
                face: placement.map(|p| p.visible(spec.width, spec.height)),
                split: Some(splits[i]),
                full_face: placement.filter(|p| p.crop.is_some()).map(|p| p.full_face),
            };
            SynthFrame {
                image,
                annotation,
                placement,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthManifest {
    pub frames: usize,
    pub face_frames: usize,
    pub no_face_frames: usize,
    pub cropped_frames: usize,
    pub train_frames: usize,
    pub split_seed: u64,
    pub spec: SynthSpec,
}

/// Writes `images/`, `annotations.jsonl` and `manifest.json` under `dir`.
pub fn write_synth_dataset(spec: &SynthSpec, dir: &Path) -> Result<SynthManifest> {
    let frames = synth_dataset(spec)?;
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    for f in &frames {
        save_pgm(&f.image, &dir.join(&f.annotation.image))?;
    }
    let ann: Vec<AnnotatedFrame> = frames.iter().map(|f| f.annotation.clone()).collect();
    write_annotations(&dir.join("annotations.jsonl"), &ann)?;

    let face_frames = frames.iter().filter(|f| f.placement.is_some()).count();
    let manifest = SynthManifest {
        frames: frames.len(),
        face_frames,
        no_face_frames: frames.len() - face_frames,
        cropped_frames: frames.iter().filter(|f| f.annotation.full_face.is_some()).count(),
        train_frames: ann.iter().filter(|a| a.split == Some(Split::Train)).count(),
        split_seed: spec.split_seed(),
        spec: spec.clone(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
