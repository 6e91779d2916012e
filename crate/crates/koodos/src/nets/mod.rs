//! The predictive model, parameter flattening, the Koopman autoencoder,
//! operator variants and the direct parameter-dynamics network.

mod autoencoder;
mod dynamics;
mod mlp;
mod operator;

pub use autoencoder::{
    decode_node, encode_node, Autoencoder, AutoencoderNodes, AutoencoderSpec, KoopmanState,
};
pub use dynamics::{direct_dynamics, direct_dynamics_node, DynamicsNet, DynamicsNodes};
pub use mlp::{
    flatten, init_mlp, predict, predict_node, unflatten, FlatParams, LayoutEntry, MlpSpec,
    MlpWeights, OutputActivation, ParamKind, ParamLayout, TaskKind,
};
pub use operator::{latent_field_node, materialize_node, KoopmanOperator, OperatorKind};

use crate::diffcore::DiffError;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: {what} expects {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("operator kind {0:?} has no matrix form")]
    NonlinearOperator(OperatorKind),
}

/// Glorot-uniform weight initialization; biases are zeroed separately.
pub(crate) fn glorot_uniform(
    rng: &mut ChaCha8Rng,
    fan_in: usize,
    fan_out: usize,
    gain: f64,
) -> Vec<f64> {
    let limit = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-limit..limit))
        .collect()
}
