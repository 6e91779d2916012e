//! The training system: per-domain warm start, the five-term joint
//! objective, inference at arbitrary times, ablation switches and the
//! practical baselines.

mod losses;
mod metrics;
mod trainer;

pub use losses::{loss_consis, loss_dyna, loss_integ, loss_intri, loss_recon};
pub use metrics::{auc, error_rate, mae, EvalReport, Metric};
pub use trainer::{
    baseline_lastdomain, baseline_offline, erm_pretrain, evaluate_fixed_params, train_joint,
};

use crate::diffcore::DiffError;
use crate::domains::DataError;
use crate::nets::{
    Autoencoder, DynamicsNet, FlatParams, KoopmanOperator, MlpSpec, NetError, OperatorKind,
};
use crate::odeflow::IntegrationConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid training input: {0}")]
    Invalid(String),
}

/// Which pairs `(j -> i)`, `j < i`, the pairwise losses integrate over.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSchedule {
    /// Every ordered pair; quadratic in the domain count.
    AllPairs,
    /// Pairs spanning at most this many positions.
    Window(usize),
    /// Consecutive pairs only.
    Chain,
}

impl PairSchedule {
    pub fn validate(&self) -> Result<(), TrainError> {
        if let PairSchedule::Window(w) = self {
            if *w < 1 {
                return Err(TrainError::Invalid("window must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// The `(j, i)` pairs for `t_count` domains, grouped in target order.
    pub fn pairs(&self, t_count: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..t_count {
            for j in 0..i {
                let keep = match self {
                    PairSchedule::AllPairs => true,
                    PairSchedule::Window(w) => i - j <= *w,
                    PairSchedule::Chain => i - j == 1,
                };
                if keep {
                    out.push((j, i));
                }
            }
        }
        out
    }
}

/// Loss-term switches; a raised flag removes the term from the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub no_integ: bool,
    pub no_recon: bool,
    pub no_dyna: bool,
    pub no_consis: bool,
    /// Bypass the Koopman space entirely: learn the parameter dynamics
    /// directly with an MLP field over `[theta, t]`.
    pub no_koopman: bool,
}

/// Anchor choice when inferring at time `s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorMode {
    /// Latest observation at or before `s` (never peeks past the query);
    /// queries before the first observation anchor at the first.
    LatestPrior,
    /// Observation closest to `s` in absolute time.
    AbsoluteNearest,
}

/// Everything the joint trainer needs besides the data and model spec.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct KoodosConfig {
    /// Weight of the two prediction terms.
    pub alpha: f64,
    /// Weight of the two model-space consistency terms.
    pub beta: f64,
    /// Weight of the latent dynamic-fidelity term.
    pub gamma: f64,
    /// ERM learning rate (warm start and baselines).
    pub lr_predictive: f64,
    /// Autoencoder/operator learning rate in the warm-up phases.
    pub lr_other: f64,
    /// Joint-phase learning rates. The raw-sum norm losses produce
    /// coherent unit-scale gradients, so the coupled phase needs smaller
    /// steps than the warm-ups to stay stable.
    pub lr_joint_predictive: f64,
    pub lr_joint_other: f64,
    pub warm_epochs: usize,
    /// Reconstruction-only warm-up of the autoencoder.
    pub ae_warm_epochs: usize,
    /// Joint autoencoder+operator warm-up on reconstruction plus latent
    /// dynamic fidelity, with the predictive parameters frozen.
    pub operator_warm_epochs: usize,
    pub joint_epochs: usize,
    pub pair_schedule: PairSchedule,
    pub ablation: AblationFlags,
    pub operator: OperatorKind,
    /// Encoder widths, latent dimension last; decoder mirrors them.
    pub autoencoder_widths: Vec<usize>,
    /// Hidden widths of the direct-dynamics net (no_koopman mode).
    pub dynamics_hidden: Vec<usize>,
    pub integration: IntegrationConfig,
    pub anchor: AnchorMode,
    pub seed: u64,
    pub early_stopping: bool,
    /// Plateau detection: stop when the combined loss improves by less
    /// than `plateau_rel_improvement` (relatively) over this many epochs.
    pub plateau_window: usize,
    pub plateau_rel_improvement: f64,
}

impl Default for KoodosConfig {
    fn default() -> Self {
        KoodosConfig {
            alpha: 1.0,
            beta: 100.0,
            gamma: 10.0,
            lr_predictive: 1e-2,
            lr_other: 1e-3,
            lr_joint_predictive: 1e-3,
            lr_joint_other: 1e-4,
            warm_epochs: 200,
            ae_warm_epochs: 200,
            operator_warm_epochs: 400,
            joint_epochs: 500,
            pair_schedule: PairSchedule::AllPairs,
            ablation: AblationFlags::default(),
            operator: OperatorKind::Full,
            autoencoder_widths: vec![1024, 512, 128, 32],
            dynamics_hidden: vec![64],
            integration: IntegrationConfig::default(),
            anchor: AnchorMode::LatestPrior,
            seed: 0,
            early_stopping: true,
            plateau_window: 50,
            plateau_rel_improvement: 1e-5,
        }
    }
}

impl KoodosConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(TrainError::Invalid("loss weights must be >= 0".into()));
        }
        if self.warm_epochs < 1 || self.joint_epochs < 1 {
            return Err(TrainError::Invalid("epoch counts must be >= 1".into()));
        }
        if !(self.lr_predictive > 0.0)
            || !(self.lr_other > 0.0)
            || !(self.lr_joint_predictive > 0.0)
            || !(self.lr_joint_other > 0.0)
        {
            return Err(TrainError::Invalid("learning rates must be > 0".into()));
        }
        self.pair_schedule.validate()?;
        self.integration.validate()?;
        if self.autoencoder_widths.is_empty() {
            return Err(TrainError::Invalid("autoencoder widths must be non-empty".into()));
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        *self
            .autoencoder_widths
            .last()
            .expect("validated non-empty widths")
    }
}

/// Per-epoch loss record (raw term values, before weighting).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub intri: f64,
    pub integ: f64,
    pub recon: f64,
    pub dyna: f64,
    pub consis: f64,
    pub combined: f64,
}

/// A trained bundle: per-domain parameters with their timestamps, the
/// transformation pair, the operator and the training history.
#[derive(Clone, Debug)]
pub struct KoodosSystem {
    pub spec: MlpSpec,
    pub timestamps: Vec<f64>,
    pub thetas: Vec<FlatParams>,
    pub autoencoder: Autoencoder,
    pub operator: KoopmanOperator,
    /// Present only in no_koopman mode.
    pub dynamics: Option<DynamicsNet>,
    pub config: KoodosConfig,
    pub history: Vec<EpochRecord>,
}

impl KoodosSystem {
    pub fn domain_count(&self) -> usize {
        self.timestamps.len()
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.thetas.len() != self.timestamps.len() {
            return Err(TrainError::Invalid(format!(
                "{} parameter vectors for {} timestamps",
                self.thetas.len(),
                self.timestamps.len()
            )));
        }
        for w in self.timestamps.windows(2) {
            if w[1] <= w[0] {
                return Err(TrainError::Invalid(
                    "system timestamps must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Splitmix-style seed derivation so each consumer gets its own stream.
pub(crate) fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut x = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
