//! Flat TOML pipeline configuration with `key=value` overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use segface::classifier::SvmParams;
use segface::clustering::ClusterParams;
use segface::dataset::{CropSide, SynthSpec};
use segface::detector::FixtureDetectorConfig;
use segface::imaging::ClaheParams;
use segface::pipeline::DetectionConfig;
use segface::rng::derive_seed;
use segface::{CanonicalTable, SegmentKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Fixture,
    Cascade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixtureFace {
    Visible,
    Full,
}

/// Every setting of a run. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// `all`, `best`, or a comma-separated list of kind names.
    pub active_kinds: String,
    pub zeta: usize,
    pub c: usize,
    pub r_factor: f64,
    pub delta: f64,
    pub theta: f64,
    pub downsample: usize,
    /// In downsampled pixels.
    pub min_face: f64,

    pub clahe: bool,
    pub clahe_tiles_x: usize,
    pub clahe_tiles_y: usize,
    pub clahe_clip_limit: f64,

    pub backend: Backend,
    pub fixture_miss_rate: f64,
    pub fixture_false_positive_rate: f64,
    pub fixture_center_jitter_sd: f64,
    pub fixture_min_visible_fraction: f64,
    pub fixture_fp_face_min: f64,
    pub fixture_fp_face_max: f64,
    /// Face the fixture detectors derive segments from: the annotated
    /// `visible` box, or the `full` face extending past the frame border.
    pub fixture_face: FixtureFace,
    /// Directory holding `<KIND>.json` cascade files.
    pub cascade_dir: String,
    /// Use generated toy cascades instead of files (timing runs only).
    pub cascade_toy: bool,
    pub cascade_merge_iou: f64,

    pub svm_lambda: f64,
    pub svm_epochs: usize,
    pub svm_class_balanced: bool,
    /// Laplace pseudo-count for the probability tables; 0 disables.
    pub table_smoothing: f64,

    pub seed: u64,

    pub data_dir: String,
    pub model: String,
    pub out_dir: String,
    /// Frames `detect` reports: `all`, `train` or `test`.
    pub detect_split: String,
    /// Frames timed by `bench`; 0 times every test frame.
    pub bench_frames: usize,

    pub synth_frames: usize,
    pub synth_width: usize,
    pub synth_height: usize,
    pub synth_no_face_fraction: f64,
    pub synth_crop_fraction: f64,
    pub synth_crop_min: f64,
    pub synth_crop_max: f64,
    pub synth_face_min: f64,
    pub synth_face_max: f64,
    pub synth_clutter: usize,
    pub train_fraction: f64,

    /// Per-kind canonical rectangle overrides, `[u1, v1, u2, v2]`.
    pub canonical: BTreeMap<String, [f64; 4]>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let synth = SynthSpec::default();
        let fixture = FixtureDetectorConfig::default();
        PipelineConfig {
            active_kinds: "all".into(),
            zeta: 20,
            c: 2,
            r_factor: 1.0 / 6.0,
            delta: 0.5,
            theta: 0.0,
            downsample: 4,
            min_face: 64.0,
            clahe: true,
            clahe_tiles_x: 8,
            clahe_tiles_y: 8,
            clahe_clip_limit: 2.0,
            backend: Backend::Fixture,
            fixture_miss_rate: fixture.miss_rate,
            fixture_false_positive_rate: fixture.false_positive_rate,
            fixture_center_jitter_sd: fixture.center_jitter_sd,
            fixture_min_visible_fraction: fixture.min_visible_fraction,
            fixture_fp_face_min: fixture.false_positive_face_range.0,
            fixture_fp_face_max: fixture.false_positive_face_range.1,
            fixture_face: FixtureFace::Visible,
            cascade_dir: "cascades".into(),
            cascade_toy: false,
            cascade_merge_iou: 0.3,
            svm_lambda: 1e-4,
            svm_epochs: 200,
            svm_class_balanced: false,
            table_smoothing: 0.0,
            seed: 0,
            data_dir: "data".into(),
            model: "model.json".into(),
            out_dir: "out".into(),
            detect_split: "all".into(),
            bench_frames: 100,
            synth_frames: synth.frames,
            synth_width: synth.width,
            synth_height: synth.height,
            synth_no_face_fraction: synth.no_face_fraction,
            synth_crop_fraction: synth.crop_fraction,
            synth_crop_min: synth.crop_range.0,
            synth_crop_max: synth.crop_range.1,
            synth_face_min: synth.face_side_range.0,
            synth_face_max: synth.face_side_range.1,
            synth_clutter: synth.clutter,
            train_fraction: synth.train_fraction,
            canonical: BTreeMap::new(),
        }
    }
}

/// Parses the right-hand side of an override as a TOML value; bare words
/// become strings.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

/// Applies `key=value` overrides; dotted keys address nested tables.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for ov in overrides {
        let (key, value) = ov
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{ov}` is not key=value"))?;
        let path: Vec<&str> = key.trim().split('.').collect();
        let mut t = &mut *table;
        for part in &path[..path.len() - 1] {
            t = t
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()))
                .as_table_mut()
                .ok_or_else(|| anyhow!("override `{key}`: `{part}` is not a table"))?;
        }
        t.insert(path[path.len() - 1].to_string(), parse_value(value.trim()));
    }
    Ok(())
}

impl PipelineConfig {
    /// Reads the config file (if any), then overrides, then the seed flag.
    pub fn resolve(file: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut table = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("malformed config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        apply_overrides(&mut table, overrides)?;
        if let Some(s) = seed {
            let s = i64::try_from(s).context("--seed must fit in a signed 64-bit integer")?;
            table.insert("seed".into(), toml::Value::Integer(s));
        }
        let cfg: PipelineConfig = toml::Value::Table(table).try_into().context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.detection()?.validate()?;
        self.fixture().validate()?;
        if !matches!(self.detect_split.as_str(), "all" | "train" | "test") {
            bail!("detect_split must be all, train or test");
        }
        if self.svm_lambda.is_nan() || self.svm_lambda <= 0.0 || self.svm_epochs == 0 {
            bail!("svm_lambda must be > 0 and svm_epochs >= 1");
        }
        if self.table_smoothing.is_nan() || self.table_smoothing < 0.0 {
            bail!("table_smoothing must be >= 0");
        }
        Ok(())
    }

    pub fn kinds(&self) -> Result<Vec<SegmentKind>> {
        let mut kinds = match self.active_kinds.trim().to_ascii_lowercase().as_str() {
            "all" => SegmentKind::ALL.to_vec(),
            "best" => SegmentKind::BEST.to_vec(),
            _ => self
                .active_kinds
                .split(',')
                .map(|k| {
                    k.trim()
                        .parse::<SegmentKind>()
                        .map_err(|_| anyhow!("unknown segment kind `{k}`"))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        kinds.sort_by_key(|k| k.index());
        Ok(kinds)
    }

    pub fn canonical_table(&self) -> Result<CanonicalTable> {
        let mut t = CanonicalTable::default();
        for (name, rect) in &self.canonical {
            let kind: SegmentKind = name
                .parse()
                .map_err(|_| anyhow!("unknown segment kind `{name}` in canonical"))?;
            t.set(kind, *rect)?;
        }
        Ok(t)
    }

    /// Seed for one purpose, derived from the global seed.
    pub fn derived_seed(&self, purpose: Purpose) -> u64 {
        derive_seed(&[self.seed, purpose as u64])
    }

    pub fn detection(&self) -> Result<DetectionConfig> {
        Ok(DetectionConfig {
            active_kinds: self.kinds()?,
            theta: self.theta,
            delta: self.delta,
            zeta: self.zeta,
            cluster: ClusterParams {
                min_size: self.c,
                radius_factor: self.r_factor,
            },
            downsample: self.downsample,
            clahe: self.clahe.then_some(ClaheParams {
                tiles_x: self.clahe_tiles_x,
                tiles_y: self.clahe_tiles_y,
                clip_limit: self.clahe_clip_limit,
            }),
            min_face: self.min_face,
            canonical: self.canonical_table()?,
            proposal_seed: self.derived_seed(Purpose::Proposals),
        })
    }

    pub fn fixture(&self) -> FixtureDetectorConfig {
        FixtureDetectorConfig {
            miss_rate: self.fixture_miss_rate,
            false_positive_rate: self.fixture_false_positive_rate,
            center_jitter_sd: self.fixture_center_jitter_sd,
            seed: self.derived_seed(Purpose::Fixture),
            min_visible_fraction: self.fixture_min_visible_fraction,
            false_positive_face_range: (self.fixture_fp_face_min, self.fixture_fp_face_max),
        }
    }

    pub fn svm(&self) -> SvmParams {
        SvmParams {
            lambda: self.svm_lambda,
            epochs: self.svm_epochs,
            seed: self.derived_seed(Purpose::Svm),
            class_balanced: self.svm_class_balanced,
        }
    }

    pub fn smoothing(&self) -> Option<f64> {
        (self.table_smoothing > 0.0).then_some(self.table_smoothing)
    }

    pub fn synth(&self) -> SynthSpec {
        SynthSpec {
            frames: self.synth_frames,
            width: self.synth_width,
            height: self.synth_height,
            no_face_fraction: self.synth_no_face_fraction,
            crop_fraction: self.synth_crop_fraction,
            crop_range: (self.synth_crop_min, self.synth_crop_max),
            crop_sides: vec![CropSide::Left, CropSide::Right, CropSide::Top, CropSide::Bottom],
            face_side_range: (self.synth_face_min, self.synth_face_max),
            clutter: self.synth_clutter,
            train_fraction: self.train_fraction,
            seed: self.derived_seed(Purpose::Synth),
        }
    }

    /// Split seed used when annotations carry no split.
    pub fn split_seed(&self) -> u64 {
        self.derived_seed(Purpose::Split)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Purpose {
    Proposals = 1,
    Fixture = 2,
    Svm = 3,
    Synth = 4,
    Split = 5,
}

/// Resolves config paths relative to a base directory.
#[derive(Debug, Clone)]
pub struct Paths {
    pub base: PathBuf,
}

impl Paths {
    pub fn get(&self, p: &str) -> PathBuf {
        self.base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = PipelineConfig::default();
        assert_eq!((c.zeta, c.c, c.downsample), (20, 2, 4));
        assert_eq!(c.r_factor, 1.0 / 6.0);
        assert_eq!((c.delta, c.theta, c.min_face), (0.5, 0.0, 64.0));
        assert_eq!(c.kinds().unwrap().len(), 14);
    }

    #[test]
    fn overrides_and_seed() {
        let ov = vec![
            "zeta=7".to_string(),
            "active_kinds=best".to_string(),
            "backend=\"cascade\"".to_string(),
            "canonical.NS=[0.3, 0.3, 0.7, 0.7]".to_string(),
        ];
        let c = PipelineConfig::resolve(None, &ov, Some(9)).unwrap();
        assert_eq!(c.zeta, 7);
        assert_eq!(c.kinds().unwrap().len(), 9);
        assert_eq!(c.backend, Backend::Cascade);
        assert_eq!(c.seed, 9);
        assert_eq!(c.canonical_table().unwrap().get(SegmentKind::NS), [0.3, 0.3, 0.7, 0.7]);
    }

    #[test]
    fn unknown_and_bad_keys_fail() {
        assert!(PipelineConfig::resolve(None, &["zeat=3".into()], None).is_err());
        assert!(PipelineConfig::resolve(None, &["zeta=0".into()], None).is_err());
        assert!(PipelineConfig::resolve(None, &["noequals".into()], None).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = PipelineConfig::default();
        c.canonical.insert("EP".into(), [0.1, 0.2, 0.9, 0.5]);
        let back: PipelineConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}
