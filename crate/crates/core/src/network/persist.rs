//! JSON model files.
//!
//! ```json
//! {"format_version": 1, "input_dim": 2,
//!  "layers": [{"rows": 1, "cols": 2, "activation": "linear", "W": [0.5, -1.0], "b": [0.0]}]}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, Layer, Network};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::linalg::{Matrix, Vector};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub input_dim: usize,
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub rows: usize,
    pub cols: usize,
    pub activation: Activation,
    /// Row-major weights.
    #[serde(rename = "W")]
    pub weights: Vec<f64>,
    #[serde(rename = "b")]
    pub bias: Vec<f64>,
}

impl From<&Network> for ModelFile {
    fn from(net: &Network) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            input_dim: net.input_dim(),
            layers: net
                .layers()
                .iter()
                .map(|l| LayerFile {
                    rows: l.weights.rows(),
                    cols: l.weights.cols(),
                    activation: l.activation,
                    weights: l.weights.as_slice().to_vec(),
                    bias: l.bias.as_slice().to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelFile> for Network {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Network> {
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported format_version {} (expected {MODEL_FORMAT_VERSION})",
                file.format_version
            )));
        }
        let layers = file
            .layers
            .into_iter()
            .enumerate()
            .map(|(l, lf)| {
                if lf.weights.len() != lf.rows * lf.cols {
                    return Err(Error::Validation(format!(
                        "layers[{l}].W has {} entries, rows x cols = {}x{}",
                        lf.weights.len(),
                        lf.rows,
                        lf.cols
                    )));
                }
                if lf.bias.len() != lf.rows {
                    return Err(Error::Validation(format!(
                        "layers[{l}].b has {} entries, expected rows = {}",
                        lf.bias.len(),
                        lf.rows
                    )));
                }
                let w = Matrix::new(lf.rows, lf.cols, lf.weights)
                    .map_err(|e| Error::Validation(format!("layers[{l}].W: {e}")))?;
                let b = Vector::new(lf.bias)
                    .map_err(|e| Error::Validation(format!("layers[{l}].b: {e}")))?;
                Layer::new(w, b, lf.activation)
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(file.input_dim, layers)
    }
}

pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(&ModelFile::from(net))
        .expect("model file serialization cannot fail");
    write_atomic(path, json.as_bytes())
}

/// Loads a model file, validating every shape before returning.
pub fn load_model(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Network::try_from(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut net = Network::init(&[13, 20, 20, 20, 1], &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        net.layers_mut()[1].bias[3] = 0.1 + 0.2;
        net.layers_mut()[2].weights[(0, 0)] = 1e-300;
        save_model(&net, &path).unwrap();
        let back = load_model(&path).unwrap();
        for (a, b) in net.layers().iter().zip(back.layers()) {
            let bits = |s: &[f64]| s.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a.weights.as_slice()), bits(b.weights.as_slice()));
            assert_eq!(bits(a.bias.as_slice()), bits(b.bias.as_slice()));
        }
        assert_eq!(net, back);
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let net = Network::init(&[3, 4, 1], &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        save_model(&net, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        match load_model(&path) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("line"), "{message}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_hand_written_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.json");
        std::fs::write(
            &path,
            r#"{"format_version": 1, "input_dim": 1,
                "layers": [{"rows": 1, "cols": 1, "activation": "linear", "W": [2.5], "b": [-0.5]}]}"#,
        )
        .unwrap();
        let net = load_model(&path).unwrap();
        assert_eq!(net.layers()[0].weights.as_slice(), &[2.5]);
        assert_eq!(net.layers()[0].bias.as_slice(), &[-0.5]);
        assert_eq!(net.predict(&[2.0]).unwrap(), vec![4.5]);
    }

    #[test]
    fn inconsistent_shapes_are_validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let cases = [
            r#"{"format_version": 1, "input_dim": 2, "layers": [{"rows": 1, "cols": 2, "activation": "relu", "W": [1.0], "b": [0.0]}]}"#,
            r#"{"format_version": 1, "input_dim": 2, "layers": [{"rows": 1, "cols": 2, "activation": "relu", "W": [1.0, 2.0], "b": []}]}"#,
            r#"{"format_version": 1, "input_dim": 3, "layers": [{"rows": 1, "cols": 2, "activation": "relu", "W": [1.0, 2.0], "b": [0.0]}]}"#,
            r#"{"format_version": 2, "input_dim": 2, "layers": [{"rows": 1, "cols": 2, "activation": "relu", "W": [1.0, 2.0], "b": [0.0]}]}"#,
            r#"{"format_version": 1, "input_dim": 2, "layers": []}"#,
        ];
        for case in cases {
            std::fs::write(&path, case).unwrap();
            assert!(matches!(load_model(&path), Err(Error::Validation(_))), "{case}");
        }
    }

    #[test]
    fn missing_field_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"format_version": 1, "input_dim": 2, "layers": [{"rows": 1, "cols": 2, "W": [1.0, 2.0], "b": [0.0]}]}"#).unwrap();
        match load_model(&path) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("activation"), "{message}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
