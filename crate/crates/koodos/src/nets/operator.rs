//! Koopman operator variants.
//!
//! The latent flow `dz/dt = K z` is parameterized one of four ways: a free
//! dense matrix, a skew-symmetric construction `K = B - B^T` (purely
//! imaginary spectrum, periodic behavior), a low-rank product `K = U V^T`
//! (restricted degrees of freedom), or a small MLP field for dynamics that
//! outgrow a single linear map. The MLP form has no matrix and is excluded
//! from spectral analysis.

use super::{glorot_uniform, NetError};
use crate::diffcore::{DiffError, Graph, NodeId, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Init scale for operator entries: keeps the initial flow near identity so
/// exp(K dt) stays tame over spans of tens of time units.
const OPERATOR_INIT_SCALE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    Full,
    Skew,
    LowRank { rank: usize },
    MlpDynamics { hidden: Vec<usize> },
}

/// A concrete operator: kind, latent dimension and trainable matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct KoopmanOperator {
    pub kind: OperatorKind,
    pub dim: usize,
    /// Full: `[K]`; Skew: `[B]`; LowRank: `[U, V]`;
    /// MlpDynamics: `[W0, b0, W1, b1, ...]`.
    pub mats: Vec<Tensor>,
}

impl KoopmanOperator {
    pub fn init(kind: OperatorKind, dim: usize, seed: u64) -> Result<Self, NetError> {
        if dim == 0 {
            return Err(NetError::InvalidSpec("operator dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut small = |rows: usize, cols: usize| {
            let data = (0..rows * cols)
                .map(|_| rng.gen_range(-OPERATOR_INIT_SCALE..OPERATOR_INIT_SCALE))
                .collect();
            Tensor::new(rows, cols, data).expect("init values are finite")
        };
        let mats = match &kind {
            OperatorKind::Full => vec![small(dim, dim)],
            OperatorKind::Skew => vec![small(dim, dim)],
            OperatorKind::LowRank { rank } => {
                if *rank == 0 || *rank >= dim {
                    return Err(NetError::InvalidSpec(format!(
                        "low-rank operator needs 1 <= rank < dim, got rank {rank} for dim {dim}"
                    )));
                }
                vec![small(dim, *rank), small(dim, *rank)]
            }
            OperatorKind::MlpDynamics { hidden } => {
                if hidden.iter().any(|&w| w == 0) {
                    return Err(NetError::InvalidSpec("mlp-dynamics widths must be positive".into()));
                }
                let mut widths = vec![dim];
                widths.extend_from_slice(hidden);
                widths.push(dim);
                let mut mats = Vec::new();
                let last = widths.len() - 2;
                for (i, w) in widths.windows(2).enumerate() {
                    let gain = if i == last { OPERATOR_INIT_SCALE } else { 1.0 };
                    mats.push(
                        Tensor::new(w[0], w[1], glorot_uniform(&mut rng, w[0], w[1], gain))
                            .expect("glorot values are finite"),
                    );
                    mats.push(Tensor::zeros(1, w[1]));
                }
                mats
            }
        };
        Ok(KoopmanOperator { kind, dim, mats })
    }

    /// The `n x n` matrix this operator denotes. Fails for `MlpDynamics`,
    /// whose flow is nonlinear and has no matrix (and no eigenvalues).
    pub fn materialize(&self) -> Result<Tensor, NetError> {
        match &self.kind {
            OperatorKind::Full => Ok(self.mats[0].clone()),
            OperatorKind::Skew => {
                let b = &self.mats[0];
                Ok(b.sub(&b.transpose())?)
            }
            OperatorKind::LowRank { .. } => {
                Ok(self.mats[0].matmul(&self.mats[1].transpose())?)
            }
            OperatorKind::MlpDynamics { .. } => {
                Err(NetError::NonlinearOperator(self.kind.clone()))
            }
        }
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self.kind, OperatorKind::MlpDynamics { .. })
    }

    /// Plain evaluation of the nonlinear latent field `dz/dt = mlp(z)`.
    /// Only defined for `MlpDynamics`.
    pub fn latent_field(&self, z: &Tensor) -> Result<Tensor, NetError> {
        if self.is_linear() {
            return Err(NetError::InvalidSpec(
                "latent_field is only defined for the mlp-dynamics operator".into(),
            ));
        }
        let last = self.mats.len() / 2 - 1;
        let mut h = z.clone();
        for (i, pair) in self.mats.chunks(2).enumerate() {
            let mut lin = h.matmul(&pair[0])?;
            let cols = lin.cols();
            let bd = pair[1].data().to_vec();
            for (j, v) in lin.data_mut().iter_mut().enumerate() {
                *v += bd[j % cols];
            }
            if i < last {
                for v in lin.data_mut().iter_mut() {
                    *v = v.tanh();
                }
            }
            h = lin;
        }
        Ok(h)
    }
}

/// Materialize a linear operator on the tape from its trainable matrices.
/// `ids` follows the same layout as [`KoopmanOperator::mats`].
pub fn materialize_node(
    g: &mut Graph,
    kind: &OperatorKind,
    ids: &[NodeId],
) -> Result<NodeId, NetError> {
    match kind {
        OperatorKind::Full => Ok(ids[0]),
        OperatorKind::Skew => {
            let bt = g.transpose(ids[0]);
            Ok(g.sub(ids[0], bt)?)
        }
        OperatorKind::LowRank { .. } => {
            let vt = g.transpose(ids[1]);
            Ok(g.matmul(ids[0], vt)?)
        }
        OperatorKind::MlpDynamics { .. } => Err(NetError::NonlinearOperator(kind.clone())),
    }
}

/// Tape forward of the MLP latent field `dz/dt = mlp(z)` (tanh hidden,
/// linear output). `ids` is the `[W, b, ...]` list for `MlpDynamics`.
pub fn latent_field_node(
    g: &mut Graph,
    ids: &[NodeId],
    z: NodeId,
) -> Result<NodeId, DiffError> {
    let last = ids.len() / 2 - 1;
    let mut h = z;
    for (i, pair) in ids.chunks(2).enumerate() {
        let lin = g.matmul(h, pair[0])?;
        let lin = g.add(lin, pair[1])?;
        h = if i < last { g.tanh(lin) } else { lin };
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skew_is_exactly_antisymmetric() {
        let op = KoopmanOperator::init(OperatorKind::Skew, 6, 11).unwrap();
        let k = op.materialize().unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(k.get(i, j), -k.get(j, i));
            }
            assert_eq!(k.get(i, i), 0.0);
        }
    }

    #[test]
    fn skew_of_elementary_b_is_rotation_generator() {
        // B = [[0,1],[0,0]] -> K = [[0,1],[-1,0]] whose characteristic
        // polynomial is x^2 + 1 (eigenvalues +-i).
        let mut op = KoopmanOperator::init(OperatorKind::Skew, 2, 0).unwrap();
        op.mats[0] = Tensor::new(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let k = op.materialize().unwrap();
        assert_eq!(k.data(), &[0.0, 1.0, -1.0, 0.0]);
    }

    #[test]
    fn skew_of_zero_is_zero() {
        let mut op = KoopmanOperator::init(OperatorKind::Skew, 3, 0).unwrap();
        op.mats[0] = Tensor::zeros(3, 3);
        assert_eq!(op.materialize().unwrap(), Tensor::zeros(3, 3));
    }

    #[test]
    fn lowrank_outer_product_of_e1() {
        let mut op = KoopmanOperator::init(OperatorKind::LowRank { rank: 1 }, 3, 0).unwrap();
        let e1 = Tensor::new(3, 1, vec![1.0, 0.0, 0.0]).unwrap();
        op.mats[0] = e1.clone();
        op.mats[1] = e1;
        let k = op.materialize().unwrap();
        let mut expected = Tensor::zeros(3, 3);
        expected.data_mut()[0] = 1.0;
        assert_eq!(k, expected);
    }

    #[test]
    fn lowrank_rank_bound_enforced() {
        assert!(KoopmanOperator::init(OperatorKind::LowRank { rank: 0 }, 4, 0).is_err());
        assert!(KoopmanOperator::init(OperatorKind::LowRank { rank: 4 }, 4, 0).is_err());
        assert!(KoopmanOperator::init(OperatorKind::LowRank { rank: 3 }, 4, 0).is_ok());
    }

    #[test]
    fn mlp_dynamics_has_no_matrix() {
        let op =
            KoopmanOperator::init(OperatorKind::MlpDynamics { hidden: vec![8] }, 4, 0).unwrap();
        assert!(matches!(op.materialize(), Err(NetError::NonlinearOperator(_))));
        assert!(!op.is_linear());
    }

    #[test]
    fn materialize_node_matches_plain() {
        for kind in [
            OperatorKind::Full,
            OperatorKind::Skew,
            OperatorKind::LowRank { rank: 2 },
        ] {
            let op = KoopmanOperator::init(kind.clone(), 5, 21).unwrap();
            let plain = op.materialize().unwrap();
            let mut g = Graph::new();
            let ids: Vec<NodeId> = op.mats.iter().map(|m| g.input(m.clone())).collect();
            let node = materialize_node(&mut g, &kind, &ids).unwrap();
            assert_eq!(g.value(node).data(), plain.data(), "kind {kind:?}");
        }
    }
}
