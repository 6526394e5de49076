use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::imaging::{load_image, pgm_dimensions};
use crate::rng::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One annotation line.
///
/// `face` is the visible face region. `full_face`, when present, is the whole
/// face including any part beyond the frame border.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedFrame {
    /// Image path as written in the file (relative paths are relative to it).
    pub image: String,
    pub face: Option<BBox<f64>>,
    pub split: Option<Split>,
    pub full_face: Option<BBox<f64>>,
}

impl AnnotatedFrame {
    pub fn image_path(&self, base: &Path) -> PathBuf {
        base.join(&self.image)
    }

    /// Box handed to annotation-driven detectors.
    pub fn face_hint(&self) -> Option<BBox<f64>> {
        self.full_face.or(self.face)
    }

    pub fn is_train(&self) -> bool {
        self.split == Some(Split::Train)
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    image: String,
    face: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    full_face: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// Seed of the generated split for records without one.
    pub split_seed: u64,
    pub train_fraction: f64,
    /// Check faces against the image size (reads image headers).
    pub check_bounds: bool,
    /// Smallest accepted face side, checked on `full_face` when given.
    pub min_face_side: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            split_seed: 0,
            train_fraction: 0.2,
            check_bounds: true,
            min_face_side: 0.0,
        }
    }
}

/// Parses JSON-lines annotations without touching the images.
/// Blank lines are skipped; unknown fields are ignored.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotatedFrame>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut frames = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let to_box = |c: [f64; 4], what: &str| {
            BBox::try_new(c[0], c[1], c[2], c[3]).map_err(|e| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: format!("{what}: {e}"),
            })
        };
        frames.push(AnnotatedFrame {
            face: rec.face.map(|c| to_box(c, "face")).transpose()?,
            full_face: rec.full_face.map(|c| to_box(c, "full_face")).transpose()?,
            image: rec.image,
            split: rec.split,
        });
    }
    Ok(frames)
}

/// Loads annotations, validates faces and fills in missing splits.
pub fn load_annotations(path: &Path, opts: &LoadOptions) -> Result<Vec<AnnotatedFrame>> {
    let mut frames = read_annotations(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for f in &frames {
        let Some(face) = f.face else { continue };
        let bad = |message: String| Error::Annotation {
            frame: f.image.clone(),
            message,
        };
        let sized = f.full_face.unwrap_or(face);
        if sized.width() < opts.min_face_side || sized.height() < opts.min_face_side {
            return Err(bad(format!("face smaller than {} px", opts.min_face_side)));
        }
        if opts.check_bounds {
            let p = f.image_path(base);
            let (w, h) = if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
                pgm_dimensions(&p)?
            } else {
                load_image(&p)?.dimensions()
            };
            if face.x1 < 0.0 || face.y1 < 0.0 || face.x2 > w as f64 || face.y2 > h as f64 {
                return Err(bad(format!("face {:?} outside the {w}x{h} image", face.to_f64())));
            }
        }
    }

    let missing: Vec<usize> = (0..frames.len()).filter(|&i| frames[i].split.is_none()).collect();
    if !missing.is_empty() {
        let splits = assign_splits(missing.len(), opts.train_fraction, opts.split_seed)?;
        for (i, s) in missing.into_iter().zip(splits) {
            frames[i].split = Some(s);
        }
    }
    Ok(frames)
}

/// Seeded split with exactly `round(n * train_fraction)` training frames.
pub fn assign_splits(n: usize, train_fraction: f64, seed: u64) -> Result<Vec<Split>> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::invalid("train fraction must lie in [0, 1]"));
    }
    let n_train = (n as f64 * train_fraction).round() as usize;
    let mut out = vec![Split::Test; n];
    let mut rng = seeded_rng(&[seed, 0x5E17]);
    for i in sample(&mut rng, n, n_train) {
        out[i] = Split::Train;
    }
    Ok(out)
}

pub fn write_annotations(path: &Path, frames: &[AnnotatedFrame]) -> Result<()> {
    let mut out = Vec::new();
    for f in frames {
        let rec = Record {
            image: f.image.clone(),
            face: f.face.map(|b| b.to_f64()),
            split: f.split,
            full_face: f.full_face.map(|b| b.to_f64()),
        };
        serde_json::to_writer(&mut out, &rec).expect("annotation serializes");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

/// `(face frames, no-face frames)`.
pub fn frame_counts(frames: &[AnnotatedFrame]) -> (usize, usize) {
    let faces = frames.iter().filter(|f| f.face.is_some()).count();
    (faces, frames.len() - faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{save_pgm, GrayImage};

    fn write(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("ann.jsonl");
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn face_and_noface_lines() {
        let dir = tempfile::tempdir().unwrap();
        save_pgm(&GrayImage::new(100, 100), &dir.path().join("f1.pgm")).unwrap();
        save_pgm(&GrayImage::new(100, 100), &dir.path().join("f2.pgm")).unwrap();
        let p = write(
            dir.path(),
            "{\"image\":\"f1.pgm\",\"face\":[10,10,80,90],\"extra\":1}\n\n{\"image\":\"f2.pgm\",\"face\":null}\n",
        );
        let frames = load_annotations(&p, &LoadOptions::default()).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].face, Some(BBox::new(10.0, 10.0, 80.0, 90.0)));
        assert_eq!(frames[1].face, None);
        assert!(frames.iter().all(|f| f.split.is_some()));
        assert_eq!(frame_counts(&frames), (1, 1));
    }

    #[test]
    fn malformed_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "{\"image\":\"a.pgm\",\"face\":null}\n{\"image\":\"b.pgm\",\"face\":[1,2]}\n",
        );
        let err = read_annotations(&p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn out_of_bounds_box_names_frame() {
        let dir = tempfile::tempdir().unwrap();
        save_pgm(&GrayImage::new(50, 40), &dir.path().join("small.pgm")).unwrap();
        let p = write(dir.path(), "{\"image\":\"small.pgm\",\"face\":[10,10,60,30]}\n");
        let err = load_annotations(&p, &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("small.pgm"), "{err}");
    }

    #[test]
    fn split_of_8036_frames() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::new();
        for i in 0..8036 {
            if i % 5 == 0 && i / 5 < 1607 {
                text.push_str(&format!("{{\"image\":\"{i}.pgm\",\"face\":null}}\n"));
            } else {
                text.push_str(&format!("{{\"image\":\"{i}.pgm\",\"face\":[0,0,70,70]}}\n"));
            }
        }
        let p = write(dir.path(), &text);
        let opts = LoadOptions {
            check_bounds: false,
            ..Default::default()
        };
        let frames = load_annotations(&p, &opts).unwrap();
        assert_eq!(frame_counts(&frames), (6429, 1607));
    }

    #[test]
    fn split_is_stable_and_twenty_percent() {
        for n in [1usize, 7, 100, 8036] {
            let a = assign_splits(n, 0.2, 42).unwrap();
            assert_eq!(a, assign_splits(n, 0.2, 42).unwrap());
            let train = a.iter().filter(|s| **s == Split::Train).count() as f64;
            assert!((train - 0.2 * n as f64).abs() <= 1.0);
        }
        assert_ne!(assign_splits(100, 0.2, 1).unwrap(), assign_splits(100, 0.2, 2).unwrap());
    }

    #[test]
    fn write_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let frames = vec![
            AnnotatedFrame {
                image: "a.pgm".into(),
                face: Some(BBox::new(0.0, 5.5, 30.25, 40.0)),
                split: Some(Split::Train),
                full_face: Some(BBox::new(-10.0, 5.5, 30.25, 40.0)),
            },
            AnnotatedFrame {
                image: "b.pgm".into(),
                face: None,
                split: Some(Split::Test),
                full_face: None,
            },
        ];
        let p = dir.path().join("out.jsonl");
        write_annotations(&p, &frames).unwrap();
        assert_eq!(read_annotations(&p).unwrap(), frames);
        // field order in the input does not matter
        let q = write(dir.path(), "{\"split\":\"test\",\"face\":null,\"image\":\"b.pgm\"}\n");
        assert_eq!(read_annotations(&q).unwrap()[0], frames[1]);
    }

    #[test]
    fn small_faces_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "{\"image\":\"a.pgm\",\"face\":[0,0,20,20]}\n");
        let opts = LoadOptions {
            check_bounds: false,
            min_face_side: 64.0,
            ..Default::default()
        };
        assert!(matches!(load_annotations(&p, &opts), Err(Error::Annotation { .. })));
    }
}
