//! Self-describing binary checkpoints.
//!
//! Layout: a little-endian u32 length prefix, a UTF-8 JSON header carrying
//! the format version, architecture descriptor and provenance, then the
//! parameter blobs as little-endian f32 in layer order (weights before
//! biases within a layer). Round-tripping a network through a checkpoint is
//! the identity at f32 precision.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use dtl_core::nn::{Layer, Network};
use dtl_core::tensor::Tensor;

use crate::error::{HarnessError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerDescriptor {
    Conv2d {
        filters: usize,
        in_channels: usize,
        kernel: usize,
    },
    Relu,
    MaxPool2d {
        size: usize,
    },
    Flatten,
    Dense {
        outputs: usize,
        inputs: usize,
    },
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerDescriptor>,
}

impl ArchDescriptor {
    pub fn of(net: &Network) -> ArchDescriptor {
        let layers = net
            .layers()
            .iter()
            .map(|l| match l {
                Layer::Conv2d { weights, .. } => {
                    let s = weights.shape();
                    LayerDescriptor::Conv2d {
                        filters: s[0],
                        in_channels: s[1],
                        kernel: s[2],
                    }
                }
                Layer::Relu => LayerDescriptor::Relu,
                Layer::MaxPool2d { size } => LayerDescriptor::MaxPool2d { size: *size },
                Layer::Flatten => LayerDescriptor::Flatten,
                Layer::Dense { weights, .. } => {
                    let s = weights.shape();
                    LayerDescriptor::Dense {
                        outputs: s[0],
                        inputs: s[1],
                    }
                }
                Layer::Softmax => LayerDescriptor::Softmax,
            })
            .collect();
        ArchDescriptor {
            input_shape: net.input_shape(),
            layers,
        }
    }

    /// Instantiate a zero-parameter network with this architecture.
    fn build_empty(&self) -> Result<Network> {
        let layers = self
            .layers
            .iter()
            .map(|d| match d {
                LayerDescriptor::Conv2d {
                    filters,
                    in_channels,
                    kernel,
                } => Layer::Conv2d {
                    weights: Tensor::zeros(vec![*filters, *in_channels, *kernel, *kernel]),
                    biases: Tensor::zeros(vec![*filters]),
                },
                LayerDescriptor::Relu => Layer::Relu,
                LayerDescriptor::MaxPool2d { size } => Layer::MaxPool2d { size: *size },
                LayerDescriptor::Flatten => Layer::Flatten,
                LayerDescriptor::Dense { outputs, inputs } => Layer::Dense {
                    weights: Tensor::zeros(vec![*outputs, *inputs]),
                    biases: Tensor::zeros(vec![*outputs]),
                },
                LayerDescriptor::Softmax => Layer::Softmax,
            })
            .collect();
        Network::new(self.input_shape, layers).map_err(|e| {
            HarnessError::CorruptCheckpoint(format!("architecture does not validate: {e}"))
        })
    }
}

/// Where a checkpoint came from: run seed, epochs trained, config hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub epoch: u32,
    pub config_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    architecture: ArchDescriptor,
    #[serde(flatten)]
    provenance: Provenance,
}

fn parameter_blobs(net: &Network) -> Vec<f32> {
    let mut blob = Vec::new();
    for layer in net.layers() {
        if let Some((w, b)) = layer.params() {
            blob.extend(w.data().iter().map(|&v| v as f32));
            blob.extend(b.data().iter().map(|&v| v as f32));
        }
    }
    blob
}

pub fn save_checkpoint(net: &Network, path: &Path, provenance: &Provenance) -> Result<()> {
    let header = Header {
        version: CHECKPOINT_VERSION,
        architecture: ArchDescriptor::of(net),
        provenance: provenance.clone(),
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| HarnessError::CorruptCheckpoint(format!("header encoding failed: {e}")))?;
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut writer = BufWriter::new(file);
    writer
        .write_all(&(header_bytes.len() as u32).to_le_bytes())
        .and_then(|()| writer.write_all(&header_bytes))
        .and_then(|()| {
            for v in parameter_blobs(net) {
                writer.write_all(&v.to_le_bytes())?;
            }
            writer.flush()
        })
        .map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, Provenance)> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut len_bytes = [0u8; 4];
    reader
        .read_exact(&mut len_bytes)
        .map_err(|_| HarnessError::CorruptCheckpoint("missing header length".into()))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    reader
        .read_exact(&mut header_bytes)
        .map_err(|_| HarnessError::CorruptCheckpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| HarnessError::CorruptCheckpoint(format!("header does not parse: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(HarnessError::CheckpointVersion {
            found: header.version,
            expected: CHECKPOINT_VERSION,
        });
    }

    let mut net = header.architecture.build_empty()?;
    let expected = net.param_count();
    let mut payload = Vec::new();
    reader
        .read_to_end(&mut payload)
        .map_err(|e| HarnessError::io(path, e))?;
    if payload.len() != expected * 4 {
        return Err(HarnessError::CorruptCheckpoint(format!(
            "payload holds {} bytes, architecture needs {}",
            payload.len(),
            expected * 4
        )));
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    for layer in net.layers_mut() {
        if let Some((w, b)) = layer.params_mut() {
            for v in w.data_mut() {
                *v = values.next().expect("length checked above");
            }
            for v in b.data_mut() {
                *v = values.next().expect("length checked above");
            }
        }
    }
    Ok((net, header.provenance))
}

/// Load and require the stored architecture to equal `expected`.
pub fn load_checkpoint_expecting(
    path: &Path,
    expected: &ArchDescriptor,
) -> Result<(Network, Provenance)> {
    let (net, provenance) = load_checkpoint(path)?;
    let found = ArchDescriptor::of(&net);
    if &found != expected {
        return Err(HarnessError::ArchitectureMismatch(format!(
            "checkpoint holds {found:?}, expected {expected:?}"
        )));
    }
    Ok((net, provenance))
}
