//! Versioned JSON checkpoints of a trained system.
//!
//! One JSON document holds the model spec, timestamps, every parameter
//! vector, autoencoder and operator weights, the config and the training
//! history. Float arrays are base64-encoded little-endian `f64` bytes, so
//! the roundtrip is bit-exact and files stay a third of the decimal size.

use crate::diffcore::Tensor;
use crate::nets::{Autoencoder, AutoencoderSpec, DynamicsNet, FlatParams, MlpSpec, OperatorKind};
use crate::train::{EpochRecord, KoodosConfig, KoodosSystem};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use std::path::Path;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint at {path}: {why}")]
    Malformed { path: String, why: String },
    #[error("unsupported checkpoint format_version {got} (expected {FORMAT_VERSION})")]
    Version { got: u32 },
}

#[derive(serde::Serialize, serde::Deserialize)]
struct TensorRepr {
    rows: usize,
    cols: usize,
    /// base64 of little-endian f64 bytes
    data: String,
}

impl TensorRepr {
    fn from_tensor(t: &Tensor) -> Self {
        let mut bytes = Vec::with_capacity(t.len() * 8);
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        TensorRepr {
            rows: t.rows(),
            cols: t.cols(),
            data: B64.encode(bytes),
        }
    }

    fn to_tensor(&self) -> Result<Tensor, String> {
        let bytes = B64.decode(&self.data).map_err(|e| e.to_string())?;
        if bytes.len() % 8 != 0 {
            return Err(format!("byte length {} is not a multiple of 8", bytes.len()));
        }
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Tensor::new(self.rows, self.cols, data).map_err(|e| e.to_string())
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct LayerRepr {
    w: TensorRepr,
    b: TensorRepr,
}

fn layers_repr(layers: &[(Tensor, Tensor)]) -> Vec<LayerRepr> {
    layers
        .iter()
        .map(|(w, b)| LayerRepr {
            w: TensorRepr::from_tensor(w),
            b: TensorRepr::from_tensor(b),
        })
        .collect()
}

fn layers_from_repr(reprs: &[LayerRepr]) -> Result<Vec<(Tensor, Tensor)>, String> {
    reprs
        .iter()
        .map(|l| Ok((l.w.to_tensor()?, l.b.to_tensor()?)))
        .collect()
}

#[derive(serde::Serialize, serde::Deserialize)]
struct AutoencoderRepr {
    spec: AutoencoderSpec,
    encoder: Vec<LayerRepr>,
    decoder: Vec<LayerRepr>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct OperatorRepr {
    kind: OperatorKind,
    dim: usize,
    mats: Vec<TensorRepr>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct DynamicsRepr {
    param_dim: usize,
    hidden: Vec<usize>,
    layers: Vec<LayerRepr>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct CheckpointRepr {
    format_version: u32,
    model: MlpSpec,
    timestamps: Vec<f64>,
    thetas: Vec<TensorRepr>,
    autoencoder: AutoencoderRepr,
    operator: OperatorRepr,
    dynamics: Option<DynamicsRepr>,
    config: KoodosConfig,
    history: Vec<EpochRecord>,
}

/// Serialize a system to its JSON checkpoint string.
pub fn to_json(system: &KoodosSystem) -> String {
    let repr = CheckpointRepr {
        format_version: FORMAT_VERSION,
        model: system.spec.clone(),
        timestamps: system.timestamps.clone(),
        thetas: system
            .thetas
            .iter()
            .map(|p| TensorRepr::from_tensor(p.theta()))
            .collect(),
        autoencoder: AutoencoderRepr {
            spec: system.autoencoder.spec.clone(),
            encoder: layers_repr(&system.autoencoder.encoder),
            decoder: layers_repr(&system.autoencoder.decoder),
        },
        operator: OperatorRepr {
            kind: system.operator.kind.clone(),
            dim: system.operator.dim,
            mats: system.operator.mats.iter().map(TensorRepr::from_tensor).collect(),
        },
        dynamics: system.dynamics.as_ref().map(|d| DynamicsRepr {
            param_dim: d.param_dim,
            hidden: d.hidden.clone(),
            layers: layers_repr(&d.layers),
        }),
        config: system.config.clone(),
        history: system.history.clone(),
    };
    serde_json::to_string(&repr).expect("checkpoint serialization cannot fail")
}

pub fn save_system(system: &KoodosSystem, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, to_json(system)).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load_system(path: &Path) -> Result<KoodosSystem, CheckpointError> {
    let raw = std::fs::read_to_string(path).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    from_json(&raw).map_err(|why| match why {
        FromJsonError::Version { got } => CheckpointError::Version { got },
        FromJsonError::Malformed(why) => CheckpointError::Malformed {
            path: path.display().to_string(),
            why,
        },
    })
}

enum FromJsonError {
    Version { got: u32 },
    Malformed(String),
}

fn from_json(raw: &str) -> Result<KoodosSystem, FromJsonError> {
    let repr: CheckpointRepr =
        serde_json::from_str(raw).map_err(|e| FromJsonError::Malformed(e.to_string()))?;
    if repr.format_version != FORMAT_VERSION {
        return Err(FromJsonError::Version {
            got: repr.format_version,
        });
    }
    let thetas = repr
        .thetas
        .iter()
        .map(|t| {
            let tensor = t.to_tensor()?;
            FlatParams::from_theta(repr.model.clone(), tensor).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(FromJsonError::Malformed)?;
    let autoencoder = Autoencoder {
        spec: repr.autoencoder.spec,
        encoder: layers_from_repr(&repr.autoencoder.encoder).map_err(FromJsonError::Malformed)?,
        decoder: layers_from_repr(&repr.autoencoder.decoder).map_err(FromJsonError::Malformed)?,
    };
    let operator = crate::nets::KoopmanOperator {
        kind: repr.operator.kind,
        dim: repr.operator.dim,
        mats: repr
            .operator
            .mats
            .iter()
            .map(TensorRepr::to_tensor)
            .collect::<Result<_, _>>()
            .map_err(FromJsonError::Malformed)?,
    };
    let dynamics = match repr.dynamics {
        None => None,
        Some(d) => Some(DynamicsNet {
            param_dim: d.param_dim,
            hidden: d.hidden,
            layers: layers_from_repr(&d.layers).map_err(FromJsonError::Malformed)?,
        }),
    };
    let system = KoodosSystem {
        spec: repr.model,
        timestamps: repr.timestamps,
        thetas,
        autoencoder,
        operator,
        dynamics,
        config: repr.config,
        history: repr.history,
    };
    system
        .validate()
        .map_err(|e| FromJsonError::Malformed(e.to_string()))?;
    Ok(system)
}
