use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classifier::{FeatureLayout, LinearModel, ProbabilityTables};
use crate::error::{Error, Result};
use crate::geometry::SegmentKind;
use crate::kindset::KindSet;
use crate::num::Scalar;
use crate::pipeline::TrainedModel;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    active_kinds: Vec<String>,
    weights: Vec<f64>,
    bias: f64,
    tables: TablesFile,
    #[serde(default)]
    train_config: Value,
}

#[derive(Serialize, Deserialize)]
struct TablesFile {
    n_pos: u64,
    n_neg: u64,
    smoothing: Option<f64>,
    sets: Vec<SetEntry>,
    kinds: Vec<KindEntry>,
}

/// Probabilities are written for readers; loading recomputes them from counts.
#[derive(Serialize, Deserialize)]
struct SetEntry {
    kinds: Vec<String>,
    pos: u64,
    neg: u64,
    #[serde(default)]
    p_face: f64,
    #[serde(default)]
    p_nonface: f64,
}

#[derive(Serialize, Deserialize)]
struct KindEntry {
    kind: String,
    pos: u64,
    neg: u64,
}

fn parse_kind(name: &str) -> Result<SegmentKind> {
    name.parse()
        .map_err(|_| Error::Model(format!("unknown segment kind `{name}`")))
}

pub fn model_to_json<T: Scalar>(model: &TrainedModel<T>, train_config: &Value) -> String {
    let t = &model.tables;
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        active_kinds: model.linear.kinds.iter().map(|k| k.name().to_owned()).collect(),
        weights: model.linear.weights.iter().map(|w| w.as_f64()).collect(),
        bias: model.linear.bias.as_f64(),
        tables: TablesFile {
            n_pos: t.n_pos,
            n_neg: t.n_neg,
            smoothing: t.smoothing,
            sets: t
                .set_counts
                .iter()
                .map(|(set, &(pos, neg))| {
                    let (p_face, p_nonface) = t.set_prob::<f64>(*set);
                    SetEntry {
                        kinds: set.names(),
                        pos,
                        neg,
                        p_face,
                        p_nonface,
                    }
                })
                .collect(),
            kinds: SegmentKind::ALL
                .iter()
                .map(|k| KindEntry {
                    kind: k.name().to_owned(),
                    pos: t.kind_counts[k.index()].0,
                    neg: t.kind_counts[k.index()].1,
                })
                .collect(),
        },
        train_config: train_config.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
    s.push('\n');
    s
}

/// Parses a model file; returns the model and the recorded training config.
pub fn model_from_json<T: Scalar>(text: &str) -> Result<(TrainedModel<T>, Value)> {
    let version = serde_json::from_str::<Value>(text)
        .map_err(|e| Error::Model(format!("corrupted model file: {e}")))?
        .get("format_version")
        .and_then(Value::as_u64);
    if version != Some(u64::from(FORMAT_VERSION)) {
        return Err(Error::Model(format!(
            "unsupported format_version {version:?}, expected {FORMAT_VERSION}"
        )));
    }
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Model(format!("corrupted model file: {e}")))?;

    let kinds = file
        .active_kinds
        .iter()
        .map(|k| parse_kind(k))
        .collect::<Result<Vec<_>>>()?;
    let layout = FeatureLayout::new(&kinds)?;
    if layout.kinds() != kinds.as_slice() {
        return Err(Error::Model(
            "active_kinds must be distinct and in canonical order".into(),
        ));
    }
    if file.weights.len() != layout.dim() {
        return Err(Error::Model(format!(
            "{} weights for {} kinds; expected {}",
            file.weights.len(),
            kinds.len(),
            layout.dim()
        )));
    }
    if !file.bias.is_finite() || file.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Model("non-finite weight".into()));
    }

    let mut set_counts = std::collections::BTreeMap::new();
    for e in &file.tables.sets {
        let set: KindSet = e.kinds.iter().map(|k| parse_kind(k)).collect::<Result<_>>()?;
        set_counts.insert(set, (e.pos, e.neg));
    }
    let mut kind_counts = [(0, 0); SegmentKind::COUNT];
    for e in &file.tables.kinds {
        kind_counts[parse_kind(&e.kind)?.index()] = (e.pos, e.neg);
    }
    let tables = ProbabilityTables {
        set_counts,
        kind_counts,
        n_pos: file.tables.n_pos,
        n_neg: file.tables.n_neg,
        smoothing: file.tables.smoothing,
    };
    let linear = LinearModel {
        weights: file.weights.iter().map(|&w| T::lit(w)).collect(),
        bias: T::lit(file.bias),
        kinds,
    };
    Ok((TrainedModel { linear, tables }, file.train_config))
}

pub fn save_model<T: Scalar>(model: &TrainedModel<T>, train_config: &Value, path: &Path) -> Result<()> {
    fs::write(path, model_to_json(model, train_config)).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<(TrainedModel<T>, Value)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::build_tables;
    use SegmentKind::*;

    fn sample_model() -> TrainedModel<f64> {
        let pos = vec![KindSet::from_kinds([NS, EP]), KindSet::from_kinds([NS, L12, EP])];
        let neg = vec![KindSet::from_kinds([B12, U12])];
        let tables = build_tables(&pos, &neg).unwrap().with_smoothing(Some(0.5));
        let kinds = SegmentKind::BEST.to_vec();
        let layout = FeatureLayout::new(&kinds).unwrap();
        TrainedModel {
            linear: LinearModel {
                weights: (0..layout.dim()).map(|i| (i as f64 * 0.37).sin() / 3.0).collect(),
                bias: -0.1234567890123,
                kinds: layout.kinds().to_vec(),
            },
            tables,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample_model();
        let cfg = serde_json::json!({"zeta": 20});
        let text = model_to_json(&m, &cfg);
        let (back, cfg_back) = model_from_json::<f64>(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(cfg_back, cfg);
        assert_eq!(model_to_json(&back, &cfg_back), text);
    }

    #[test]
    fn unknown_version_rejected() {
        let text =
            model_to_json(&sample_model(), &Value::Null).replace("\"format_version\": 1", "\"format_version\": 7");
        assert!(matches!(model_from_json::<f64>(&text), Err(Error::Model(_))));
        assert!(model_from_json::<f64>("{not json").is_err());
    }

    #[test]
    fn weight_length_checked() {
        let mut m = sample_model();
        m.linear.weights.pop();
        let text = model_to_json(&m, &Value::Null);
        let err = model_from_json::<f64>(&text).unwrap_err();
        assert!(err.to_string().contains("expected 20"), "{err}");
    }

    #[test]
    fn f32_round_trip() {
        let m = sample_model();
        let m32 = TrainedModel {
            linear: LinearModel {
                weights: m.linear.weights.iter().map(|&w| w as f32).collect(),
                bias: m.linear.bias as f32,
                kinds: m.linear.kinds.clone(),
            },
            tables: m.tables.clone(),
        };
        let (back, _) = model_from_json::<f32>(&model_to_json(&m32, &Value::Null)).unwrap();
        assert_eq!(back, m32);
    }
}
