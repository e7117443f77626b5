//! Model serialization: a JSON envelope with parameter arrays stored as
//! base64 of row-major 64-bit little-endian floats, so a save/load round
//! trip preserves every bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dataset::Normalizer;
use crate::features::FeatureMode;
use crate::linalg::Mat;

use super::{DenseParams, GruLayerParams, GruModel, ModelDims, LAYER_COUNT};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("model file is truncated or not valid JSON: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u64, expected: u32 },
    #[error("inconsistent dimensions in model file: {0}")]
    Dims(String),
    #[error("invalid parameter encoding: {0}")]
    Encoding(String),
}

#[derive(Serialize, Deserialize)]
struct MatFile {
    rows: usize,
    cols: usize,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    w_update: MatFile,
    w_reset: MatFile,
    w_cand: MatFile,
    u_update: MatFile,
    u_reset: MatFile,
    u_cand: MatFile,
    b_update: String,
    b_reset: String,
    b_cand: String,
}

#[derive(Serialize, Deserialize)]
struct HeadFile {
    weight: MatFile,
    bias: String,
}

#[derive(Serialize, Deserialize)]
struct DimsFile {
    input: usize,
    hidden: usize,
    classes: usize,
    window: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    mode: FeatureMode,
    dims: DimsFile,
    class_names: Vec<String>,
    normalizer: Normalizer,
    layers: Vec<LayerFile>,
    head: HeadFile,
}

fn encode_floats(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    BASE64.encode(bytes)
}

fn decode_floats(data: &str, expect_len: usize, what: &str) -> Result<Vec<f64>, ModelIoError> {
    let bytes = BASE64
        .decode(data)
        .map_err(|e| ModelIoError::Encoding(format!("{what}: {e}")))?;
    if bytes.len() != expect_len * 8 {
        return Err(ModelIoError::Dims(format!(
            "{what}: expected {expect_len} values, found {}",
            bytes.len() / 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn encode_mat(m: &Mat) -> MatFile {
    MatFile { rows: m.rows(), cols: m.cols(), data: encode_floats(m.data()) }
}

fn decode_mat(f: &MatFile, rows: usize, cols: usize, what: &str) -> Result<Mat, ModelIoError> {
    if f.rows != rows || f.cols != cols {
        return Err(ModelIoError::Dims(format!(
            "{what}: expected {rows}x{cols}, found {}x{}",
            f.rows, f.cols
        )));
    }
    Ok(Mat::from_vec(rows, cols, decode_floats(&f.data, rows * cols, what)?))
}

fn encode_layer(l: &GruLayerParams) -> LayerFile {
    LayerFile {
        w_update: encode_mat(&l.w_update),
        w_reset: encode_mat(&l.w_reset),
        w_cand: encode_mat(&l.w_cand),
        u_update: encode_mat(&l.u_update),
        u_reset: encode_mat(&l.u_reset),
        u_cand: encode_mat(&l.u_cand),
        b_update: encode_floats(&l.b_update),
        b_reset: encode_floats(&l.b_reset),
        b_cand: encode_floats(&l.b_cand),
    }
}

fn decode_layer(
    f: &LayerFile,
    input: usize,
    hidden: usize,
    name: &str,
) -> Result<GruLayerParams, ModelIoError> {
    Ok(GruLayerParams {
        w_update: decode_mat(&f.w_update, hidden, input, &format!("{name}.w_update"))?,
        w_reset: decode_mat(&f.w_reset, hidden, input, &format!("{name}.w_reset"))?,
        w_cand: decode_mat(&f.w_cand, hidden, input, &format!("{name}.w_cand"))?,
        u_update: decode_mat(&f.u_update, hidden, hidden, &format!("{name}.u_update"))?,
        u_reset: decode_mat(&f.u_reset, hidden, hidden, &format!("{name}.u_reset"))?,
        u_cand: decode_mat(&f.u_cand, hidden, hidden, &format!("{name}.u_cand"))?,
        b_update: decode_floats(&f.b_update, hidden, &format!("{name}.b_update"))?,
        b_reset: decode_floats(&f.b_reset, hidden, &format!("{name}.b_reset"))?,
        b_cand: decode_floats(&f.b_cand, hidden, &format!("{name}.b_cand"))?,
    })
}

/// Writes the model as a self-describing JSON file.
pub fn save_model(model: &GruModel, path: &Path) -> Result<(), ModelIoError> {
    let file = ModelFile {
        version: MODEL_FORMAT_VERSION,
        mode: model.mode,
        dims: DimsFile {
            input: model.dims.input,
            hidden: model.dims.hidden,
            classes: model.dims.classes,
            window: model.window_len,
        },
        class_names: model.class_names.clone(),
        normalizer: model.normalizer.clone(),
        layers: model.layers.iter().map(encode_layer).collect(),
        head: HeadFile {
            weight: encode_mat(&model.head.weight),
            bias: encode_floats(&model.head.bias),
        },
    };
    let out = File::create(path)?;
    serde_json::to_writer(BufWriter::new(out), &file)?;
    Ok(())
}

/// Reads a model back, verifying the format version and every dimension.
pub fn load_model(path: &Path) -> Result<GruModel, ModelIoError> {
    let mut text = String::new();
    BufReader::new(File::open(path)?).read_to_string(&mut text)?;
    let value: Value = serde_json::from_str(&text)?;
    let found = value
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| ModelIoError::Dims("missing version field".into()))?;
    if found != MODEL_FORMAT_VERSION as u64 {
        return Err(ModelIoError::Version { found, expected: MODEL_FORMAT_VERSION });
    }
    let file: ModelFile = serde_json::from_value(value)?;

    let DimsFile { input, hidden, classes, window } = file.dims;
    if input == 0 || hidden == 0 || classes == 0 || window == 0 {
        return Err(ModelIoError::Dims("dimensions must be positive".into()));
    }
    if file.mode.dim() != input {
        return Err(ModelIoError::Dims(format!(
            "mode {} implies input dim {}, file says {input}",
            file.mode,
            file.mode.dim()
        )));
    }
    if file.layers.len() != LAYER_COUNT {
        return Err(ModelIoError::Dims(format!(
            "expected {LAYER_COUNT} layers, found {}",
            file.layers.len()
        )));
    }
    if file.class_names.len() != classes {
        return Err(ModelIoError::Dims(format!(
            "{} class names for {classes} classes",
            file.class_names.len()
        )));
    }
    if file.normalizer.dim() != input || file.normalizer.std.len() != input {
        return Err(ModelIoError::Dims("normalizer length does not match input dim".into()));
    }

    let layers = [
        decode_layer(&file.layers[0], input, hidden, "layer1")?,
        decode_layer(&file.layers[1], hidden, hidden, "layer2")?,
    ];
    let head = DenseParams {
        weight: decode_mat(&file.head.weight, classes, hidden, "head.weight")?,
        bias: decode_floats(&file.head.bias, classes, "head.bias")?,
    };
    Ok(GruModel {
        mode: file.mode,
        dims: ModelDims { input, hidden, classes },
        window_len: window,
        class_names: file.class_names,
        normalizer: file.normalizer,
        layers,
        head,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gru::{train::init_model, TrainConfig};

    fn sample_model() -> GruModel {
        let cfg = TrainConfig { hidden_dim: 5, num_classes: 7, seed: 31, ..TrainConfig::default() };
        let mut model = init_model(FeatureMode::Zt, 10, &cfg);
        model.normalizer = Normalizer {
            mean: (0..10).map(|i| i as f64 * 0.1).collect(),
            std: (0..10).map(|i| 1.0 + i as f64).collect(),
        };
        model
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = sample_model();
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(model, loaded);

        // saving the loaded model reproduces the file byte-for-byte
        let path2 = dir.path().join("model2.json");
        save_model(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn version_mismatch_is_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&sample_model(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let bumped = text.replacen("{\"version\":1", "{\"version\":999", 1);
        std::fs::write(&path, bumped).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(ModelIoError::Version { found: 999, .. })
        ));
    }

    #[test]
    fn truncated_file_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&sample_model(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_model(&path), Err(ModelIoError::Malformed(_))));
    }

    #[test]
    fn dimension_inconsistency_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&sample_model(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // claim a different hidden size than the stored matrices
        let tampered = text.replacen("\"hidden\":5", "\"hidden\":6", 1);
        std::fs::write(&path, tampered).unwrap();
        assert!(matches!(load_model(&path), Err(ModelIoError::Dims(_))));
    }
}
