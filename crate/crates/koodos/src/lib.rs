//! Koodos: continuous temporal domain generalization.
//!
//! Trains one predictive model per observed domain, learns the continuous
//! dynamics of those model parameters in a linearized (Koopman) latent
//! space, and extrapolates a working model to any real-valued time.
//! Comes with spectral analysis and behavioral control of the learned
//! dynamics.
//!
//! Module map:
//! - [`diffcore`] — tape-based reverse-mode autodiff plus Adam
//! - [`nets`] — predictive MLP, parameter flattening, autoencoder, operator
//! - [`odeflow`] — matrix-exponential and RK4 integration, differentiable
//! - [`domains`] — rotating two-moons generation, tabular IO, splits
//! - [`train`] — the joint training system, inference and baselines
//! - [`spectral`] — eigenvalues, stability classification, PCA projection
//! - [`checkpoint`] — versioned JSON system checkpoints
//! - [`cli`] — config-driven experiment commands

pub mod checkpoint;
pub mod cli;
pub mod diffcore;
pub mod domains;
pub mod nets;
pub mod odeflow;
pub mod spectral;
pub mod train;

pub use diffcore::Tensor;
pub use domains::{Domain, DomainSequence};
pub use nets::{FlatParams, KoopmanState, MlpSpec, TaskKind};
pub use train::{KoodosConfig, KoodosSystem};
