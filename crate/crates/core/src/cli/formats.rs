//! On-disk formats: datasets, checkpoints, score files and reports. All are
//! UTF-8 JSON documents. Checkpoints carry parameters as base64-encoded
//! little-endian f64 arrays so a save/load round trip is bitwise exact.

use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{EvalReport, FrameMetrics, GroundTruthClip};
use crate::model::AutoEncoderParams;
use crate::pipeline::{BoundingBox, FrameRange, Trajectory};
use crate::stack::{StackConfig, StackedModel};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub feature_dim: usize,
    pub total_frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub metadata: DatasetMeta,
    pub trajectories: Vec<Trajectory>,
    #[serde(default)]
    pub ground_truth: Vec<GroundTruthClip>,
}

impl DatasetFile {
    pub fn validate(&self) -> Result<()> {
        let meta = &self.metadata;
        for t in &self.trajectories {
            t.validate(meta.feature_dim)?;
            if let Some(span) = t.frames() {
                if span.end >= meta.total_frames {
                    return Err(Error::OutOfRange(format!(
                        "object {} reaches frame {} but total_frames is {}",
                        t.object_id, span.end, meta.total_frames
                    )));
                }
            }
        }
        for g in &self.ground_truth {
            if g.frames.start > g.frames.end || g.frames.end >= meta.total_frames {
                return Err(Error::OutOfRange(format!(
                    "ground-truth clip [{}, {}] outside [0, {})",
                    g.frames.start, g.frames.end, meta.total_frames
                )));
            }
            if !g.b_start.is_valid() || !g.b_end.is_valid() {
                return Err(Error::InvalidConfig(
                    "ground-truth clip with an invalid box".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    /// Base64 of the row-major little-endian f64 bytes.
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub tensors: Vec<TensorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Seed the parameters were initialized and trained from.
    pub seed: u64,
    pub config: StackConfig,
    pub layers: Vec<LayerRecord>,
}

fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    B64.encode(bytes)
}

fn decode_f64s(text: &str) -> std::result::Result<Vec<f64>, String> {
    let bytes = B64.decode(text).map_err(|e| e.to_string())?;
    if bytes.len() % 8 != 0 {
        return Err(format!(
            "{} bytes is not a whole number of f64 values",
            bytes.len()
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

impl Checkpoint {
    pub fn from_model(model: &StackedModel) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|layer| LayerRecord {
                input_dim: layer.input_dim(),
                hidden_dim: layer.hidden_dim(),
                tensors: layer
                    .tensors()
                    .into_iter()
                    .map(|t| TensorRecord {
                        name: t.name,
                        shape: [t.shape.0, t.shape.1],
                        data: encode_f64s(t.data),
                    })
                    .collect(),
            })
            .collect();
        Self {
            format_version: CHECKPOINT_VERSION,
            seed: model.config.seed,
            config: model.config.clone(),
            layers,
        }
    }

    pub fn to_model(&self) -> std::result::Result<StackedModel, String> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(format!(
                "unsupported format_version {}",
                self.format_version
            ));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (li, rec) in self.layers.iter().enumerate() {
            let mut params = AutoEncoderParams::zeros(rec.input_dim, rec.hidden_dim);
            let expected: Vec<(String, (usize, usize))> = params
                .tensors()
                .into_iter()
                .map(|t| (t.name, t.shape))
                .collect();
            if expected.len() != rec.tensors.len() {
                return Err(format!(
                    "layer {li}: expected {} tensors, found {}",
                    expected.len(),
                    rec.tensors.len()
                ));
            }
            for ((dst, (name, shape)), src) in params
                .tensors_mut()
                .into_iter()
                .zip(&expected)
                .zip(&rec.tensors)
            {
                if &src.name != name || (src.shape[0], src.shape[1]) != *shape {
                    return Err(format!(
                        "layer {li}: expected tensor {name} {shape:?}, found {} {:?}",
                        src.name, src.shape
                    ));
                }
                let values =
                    decode_f64s(&src.data).map_err(|e| format!("layer {li} {name}: {e}"))?;
                if values.len() != dst.len() {
                    return Err(format!(
                        "layer {li} {name}: expected {} values, found {}",
                        dst.len(),
                        values.len()
                    ));
                }
                dst.copy_from_slice(&values);
            }
            layers.push(params);
        }
        let model = StackedModel {
            layers,
            config: self.config.clone(),
        };
        model.validate().map_err(|e| e.to_string())?;
        Ok(model)
    }
}

/// One scored clip in a score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub object_id: u64,
    pub frames: FrameRange,
    pub b_start: BoundingBox,
    pub b_end: BoundingBox,
    pub raw_error: f64,
    pub score: f64,
    pub chunk: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFile {
    pub total_frames: usize,
    pub clips: Vec<ClipRecord>,
    pub frame_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    #[serde(flatten)]
    pub clip_level: EvalReport,
    pub frame_level: Option<FrameMetrics>,
    /// ROC AUC of clip scores against the regime labels of their objects,
    /// when the dataset carries regimes.
    pub regime_auc: Option<f64>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Serializes to a temporary file next to `path`, then renames it into
/// place, so a failed write leaves no partial output.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    text.push('\n');
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(text.as_bytes()).map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<DatasetFile> {
    let ds: DatasetFile = read_json(path)?;
    ds.validate().map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok(ds)
}

pub fn save_checkpoint(path: &Path, model: &StackedModel) -> Result<()> {
    write_json(path, &Checkpoint::from_model(model))
}

pub fn load_checkpoint(path: &Path) -> Result<StackedModel> {
    let ckpt: Checkpoint = read_json(path)?;
    ckpt.to_model().map_err(|msg| Error::Format {
        path: path.to_path_buf(),
        msg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stack::init_stack;
    use proptest::prelude::*;

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let model = init_stack(&StackConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&path, &model).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn checkpoint_rejects_tampering() {
        let model = init_stack(&StackConfig {
            input_dim: 4,
            hidden_dims: vec![3],
            num_layers: 1,
            ..Default::default()
        })
        .unwrap();
        let mut ckpt = Checkpoint::from_model(&model);
        ckpt.layers[0].tensors[0].data = encode_f64s(&[1.0]);
        assert!(ckpt.to_model().is_err());
        let mut ckpt = Checkpoint::from_model(&model);
        ckpt.layers[0].tensors.swap(0, 1);
        assert!(ckpt.to_model().is_err());
        let mut ckpt = Checkpoint::from_model(&model);
        ckpt.format_version = 99;
        assert!(ckpt.to_model().is_err());
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_dataset(Path::new("/nonexistent/data.json")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/data.json"));
    }

    #[test]
    fn dataset_validation_checks_dims_and_frames() {
        let traj = Trajectory {
            object_id: 1,
            start_frame: 8,
            boxes: vec![BoundingBox::new(0.0, 0.0, 2.0, 2.0); 3],
            features: vec![vec![0.0; 4]; 3],
            regime: None,
        };
        let mut ds = DatasetFile {
            metadata: DatasetMeta {
                feature_dim: 4,
                total_frames: 11,
                fps: None,
            },
            trajectories: vec![traj],
            ground_truth: vec![],
        };
        assert!(ds.validate().is_ok());
        ds.metadata.total_frames = 10;
        assert!(ds.validate().is_err());
        ds.metadata.total_frames = 11;
        ds.metadata.feature_dim = 5;
        let err = ds.validate().unwrap_err().to_string();
        assert!(err.contains("feature_dim"), "{err}");
    }

    proptest! {
        #[test]
        fn f64_codec_is_lossless(values in prop::collection::vec(any::<f64>(), 0..64)) {
            let back = decode_f64s(&encode_f64s(&values)).unwrap();
            prop_assert_eq!(back.len(), values.len());
            for (a, b) in values.iter().zip(&back) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
