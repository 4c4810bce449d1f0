//! `BTLW` named-tensor container.
//!
//! Layout: the magic `BTLW`, a version byte (`1`), one line of JSON
//! manifest terminated by `\n`, then the float32 little-endian payload with
//! every tensor row-major and concatenated in manifest order.
//!
//! ```text
//! {"tau":3,"delta":3,"hidden":8,"latent":4,"tensors":[["enc.embed.weight",[8,6]],...]}
//! ```
//!
//! The manifest must list exactly [`required_tensors`] in that order.

use std::io::{BufRead, BufReader, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PredictorConfig;

pub const WEIGHT_MAGIC: &[u8; 4] = b"BTLW";
pub const WEIGHT_VERSION: u8 = 1;

/// Per-step network input: displacement `(dx, dy, dw, dh)` plus raw `(w, h)`.
pub(crate) const INPUT_FEATURES: usize = 6;
pub(crate) const BOX_DIMS: usize = 4;

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a weight container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    Version(u8),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("unknown tensor `{0}`")]
    UnknownTensor(String),
    #[error("manifest entry {index} is `{found}`, expected `{expected}`")]
    Order {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("payload holds {found} bytes, manifest needs {expected}")]
    PayloadSize { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    fn new(name: &str, shape: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn dense(out: &mut Vec<TensorSpec>, prefix: &str, outputs: usize, inputs: usize) {
    out.push(TensorSpec::new(&format!("{prefix}.weight"), &[outputs, inputs]));
    out.push(TensorSpec::new(&format!("{prefix}.bias"), &[outputs]));
}

fn gru(out: &mut Vec<TensorSpec>, prefix: &str, inputs: usize, hidden: usize) {
    out.push(TensorSpec::new(&format!("{prefix}.weight_ih"), &[3 * hidden, inputs]));
    out.push(TensorSpec::new(&format!("{prefix}.weight_hh"), &[3 * hidden, hidden]));
    out.push(TensorSpec::new(&format!("{prefix}.bias_ih"), &[3 * hidden]));
    out.push(TensorSpec::new(&format!("{prefix}.bias_hh"), &[3 * hidden]));
}

/// The ordered tensor list for a given network size.
pub fn required_tensors(config: &PredictorConfig) -> Vec<TensorSpec> {
    let h = config.hidden_size;
    let l = config.latent_dim;
    let mut t = Vec::new();
    dense(&mut t, "enc.embed", h, INPUT_FEATURES);
    gru(&mut t, "enc.gru", h, h);
    dense(&mut t, "prior.fc1", h, h);
    dense(&mut t, "prior.fc2", h, h);
    dense(&mut t, "prior.head", 2 * l, h);
    dense(&mut t, "goal.fc1", h, h + l);
    dense(&mut t, "goal.fc2", h, h);
    dense(&mut t, "goal.head", BOX_DIMS, h);
    dense(&mut t, "dec.bwd.init", h, h);
    dense(&mut t, "dec.bwd.embed", h, BOX_DIMS);
    gru(&mut t, "dec.bwd.gru", h, h);
    dense(&mut t, "dec.fwd.embed", h, h);
    gru(&mut t, "dec.fwd.gru", h, h);
    dense(&mut t, "dec.head", BOX_DIMS, 2 * h);
    t
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    #[serde(flatten)]
    config: PredictorConfig,
    tensors: Vec<(String, Vec<usize>)>,
}

/// Validated parameter set for one network size.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightContainer {
    config: PredictorConfig,
    specs: Vec<TensorSpec>,
    data: Vec<Vec<f32>>,
}

impl WeightContainer {
    /// Builds a container from tensors given in [`required_tensors`] order.
    pub fn from_tensors(
        config: PredictorConfig,
        tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
    ) -> Result<Self, WeightError> {
        let manifest: Vec<(String, Vec<usize>)> = tensors.iter().map(|(n, s, _)| (n.clone(), s.clone())).collect();
        let specs = validate_manifest(&config, &manifest)?;
        let mut data = Vec::with_capacity(tensors.len());
        for ((_, _, values), spec) in tensors.into_iter().zip(&specs) {
            if values.len() != spec.len() {
                return Err(WeightError::PayloadSize {
                    expected: spec.len() * 4,
                    found: values.len() * 4,
                });
            }
            data.push(values);
        }
        Ok(Self { config, specs, data })
    }

    pub fn zeros(config: PredictorConfig) -> Self {
        let specs = required_tensors(&config);
        let data = specs.iter().map(|s| vec![0.0; s.len()]).collect();
        Self { config, specs, data }
    }

    /// Uniform `[-scale, scale)` parameters from a ChaCha8 stream.
    pub fn random(config: PredictorConfig, seed: u64, scale: f32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = required_tensors(&config);
        let data = specs
            .iter()
            .map(|s| (0..s.len()).map(|_| rng.random_range(-scale..scale)).collect())
            .collect();
        Self { config, specs, data }
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn tensor(&self, name: &str) -> Option<&[f32]> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .map(|i| self.data[i].as_slice())
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f32]> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .map(|i| self.data[i].as_mut_slice())
    }

    pub fn save<W: Write>(&self, out: &mut W) -> Result<(), WeightError> {
        let manifest = Manifest {
            config: self.config,
            tensors: self.specs.iter().map(|s| (s.name.clone(), s.shape.clone())).collect(),
        };
        let json = serde_json::to_string(&manifest).map_err(|e| WeightError::Manifest(e.to_string()))?;
        out.write_all(WEIGHT_MAGIC)?;
        out.write_all(&[WEIGHT_VERSION])?;
        out.write_all(json.as_bytes())?;
        out.write_all(b"\n")?;
        let mut payload = Vec::with_capacity(self.data.iter().map(Vec::len).sum::<usize>() * 4);
        for v in self.data.iter().flatten() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&payload)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.save(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn load<R: Read>(source: R) -> Result<Self, WeightError> {
        let mut reader = BufReader::new(source);
        let mut head = [0u8; 5];
        reader.read_exact(&mut head).map_err(|_| WeightError::BadMagic)?;
        if &head[..4] != WEIGHT_MAGIC {
            return Err(WeightError::BadMagic);
        }
        if head[4] != WEIGHT_VERSION {
            return Err(WeightError::Version(head[4]));
        }
        let mut line = Vec::new();
        reader.read_until(b'\n', &mut line)?;
        if line.pop() != Some(b'\n') {
            return Err(WeightError::Manifest("manifest line is not terminated".into()));
        }
        let manifest: Manifest = serde_json::from_slice(&line).map_err(|e| WeightError::Manifest(e.to_string()))?;
        let specs = validate_manifest(&manifest.config, &manifest.tensors)?;

        let mut payload = Vec::new();
        reader.read_to_end(&mut payload)?;
        let expected = specs.iter().map(TensorSpec::len).sum::<usize>() * 4;
        if payload.len() != expected {
            return Err(WeightError::PayloadSize {
                expected,
                found: payload.len(),
            });
        }
        let mut floats = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let data = specs.iter().map(|s| floats.by_ref().take(s.len()).collect()).collect();
        Ok(Self {
            config: manifest.config,
            specs,
            data,
        })
    }
}

fn validate_manifest(
    config: &PredictorConfig,
    manifest: &[(String, Vec<usize>)],
) -> Result<Vec<TensorSpec>, WeightError> {
    config.validate().map_err(|e| WeightError::Manifest(e.to_string()))?;
    let required = required_tensors(config);
    for (index, (name, shape)) in manifest.iter().enumerate() {
        let Some(expected) = required.get(index) else {
            return Err(if required.iter().any(|r| &r.name == name) {
                WeightError::Manifest(format!("tensor `{name}` listed twice"))
            } else {
                WeightError::UnknownTensor(name.clone())
            });
        };
        if &expected.name != name {
            if !required.iter().any(|r| &r.name == name) {
                return Err(WeightError::UnknownTensor(name.clone()));
            }
            return Err(WeightError::Order {
                index,
                expected: expected.name.clone(),
                found: name.clone(),
            });
        }
        if &expected.shape != shape {
            return Err(WeightError::Shape {
                name: name.clone(),
                expected: expected.shape.clone(),
                found: shape.clone(),
            });
        }
    }
    if let Some(missing) = required.get(manifest.len()) {
        return Err(WeightError::MissingTensor(missing.name.clone()));
    }
    Ok(required)
}
