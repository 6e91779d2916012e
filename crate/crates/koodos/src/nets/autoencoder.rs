//! Autoencoder mapping model parameters into the Koopman latent space.
//!
//! Encoder: `P -> widths... -> n` with ReLU between layers and a linear
//! final layer; decoder mirrors it back to `P`. The latent `z` is where
//! the parameter dynamics are forced to be linear.

use super::mlp::FlatParams;
use super::{glorot_uniform, NetError};
use crate::diffcore::{Graph, NodeId, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Latent vector `z` in the Koopman space, stored as a `1 x n` row.
#[derive(Clone, Debug, PartialEq)]
pub struct KoopmanState {
    z: Tensor,
}

impl KoopmanState {
    pub fn new(z: Tensor) -> Result<Self, NetError> {
        if z.rows() != 1 {
            return Err(NetError::Dimension {
                what: "koopman state rows",
                expected: 1,
                got: z.rows(),
            });
        }
        Ok(KoopmanState { z })
    }

    pub fn dim(&self) -> usize {
        self.z.cols()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.z
    }

    pub fn norm(&self) -> f64 {
        self.z.frobenius_norm()
    }

    pub fn into_tensor(self) -> Tensor {
        self.z
    }
}

/// Encoder widths (hidden layers then the latent dimension); the decoder
/// mirrors them.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AutoencoderSpec {
    pub input_dim: usize,
    pub widths: Vec<usize>,
}

impl AutoencoderSpec {
    pub fn new(input_dim: usize, widths: Vec<usize>) -> Result<Self, NetError> {
        let spec = AutoencoderSpec { input_dim, widths };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.widths.is_empty() {
            return Err(NetError::InvalidSpec("autoencoder needs at least one layer".into()));
        }
        if self.input_dim == 0 || self.widths.iter().any(|&w| w == 0) {
            return Err(NetError::InvalidSpec("autoencoder widths must be positive".into()));
        }
        Ok(())
    }

    /// The `[1024, 512, 128, 32]` stack used for parameter spaces of the
    /// default predictive model size.
    pub fn default_for(input_dim: usize) -> Self {
        AutoencoderSpec {
            input_dim,
            widths: vec![1024, 512, 128, 32],
        }
    }

    pub fn latent_dim(&self) -> usize {
        *self.widths.last().expect("validated non-empty")
    }

    pub fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend_from_slice(&self.widths);
        w
    }

    pub fn decoder_widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.widths.iter().rev().copied().collect();
        w.push(self.input_dim);
        w
    }
}

/// The transformation pair (encoder, decoder) with concrete weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    pub spec: AutoencoderSpec,
    /// `(weights, bias)` per encoder layer.
    pub encoder: Vec<(Tensor, Tensor)>,
    /// `(weights, bias)` per decoder layer.
    pub decoder: Vec<(Tensor, Tensor)>,
}

impl Autoencoder {
    pub fn init(spec: AutoencoderSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let make = |rng: &mut ChaCha8Rng, widths: &[usize]| {
            widths
                .windows(2)
                .map(|w| {
                    let (fan_in, fan_out) = (w[0], w[1]);
                    (
                        Tensor::new(fan_in, fan_out, glorot_uniform(rng, fan_in, fan_out, 1.0))
                            .expect("glorot values are finite"),
                        Tensor::zeros(1, fan_out),
                    )
                })
                .collect()
        };
        let encoder = make(&mut rng, &spec.encoder_widths());
        let decoder = make(&mut rng, &spec.decoder_widths());
        Autoencoder {
            spec,
            encoder,
            decoder,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.latent_dim()
    }

    /// Encode a batch of flat parameter rows (`m x P` -> `m x n`).
    pub fn encode_batch(&self, thetas: &Tensor) -> Result<Tensor, NetError> {
        if thetas.cols() != self.spec.input_dim {
            return Err(NetError::Dimension {
                what: "encoder input",
                expected: self.spec.input_dim,
                got: thetas.cols(),
            });
        }
        forward_linear_relu(&self.encoder, thetas)
    }

    /// Decode a batch of latent rows (`m x n` -> `m x P`).
    pub fn decode_batch(&self, z: &Tensor) -> Result<Tensor, NetError> {
        if z.cols() != self.latent_dim() {
            return Err(NetError::Dimension {
                what: "decoder input",
                expected: self.latent_dim(),
                got: z.cols(),
            });
        }
        forward_linear_relu(&self.decoder, z)
    }

    /// `z = phi(theta)` for one parameter vector.
    pub fn encode(&self, theta: &FlatParams) -> Result<KoopmanState, NetError> {
        KoopmanState::new(self.encode_batch(theta.theta())?)
    }

    /// `theta = phi^{-1}(z)`, reinterpretable through the same layout.
    pub fn decode(&self, z: &KoopmanState, like: &FlatParams) -> Result<FlatParams, NetError> {
        let row = self.decode_batch(z.tensor())?;
        like.with_theta(row)
    }
}

fn forward_linear_relu(layers: &[(Tensor, Tensor)], x: &Tensor) -> Result<Tensor, NetError> {
    let last = layers.len() - 1;
    let mut h = x.clone();
    for (i, (w, b)) in layers.iter().enumerate() {
        let mut z = h.matmul(w)?;
        let cols = z.cols();
        let bd = b.data().to_vec();
        for (j, v) in z.data_mut().iter_mut().enumerate() {
            *v += bd[j % cols];
        }
        if i < last {
            for v in z.data_mut().iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        h = z;
    }
    Ok(h)
}

/// Node ids of autoencoder weights already inserted into a graph.
pub struct AutoencoderNodes {
    pub encoder: Vec<(NodeId, NodeId)>,
    pub decoder: Vec<(NodeId, NodeId)>,
}

impl AutoencoderNodes {
    /// Insert every weight tensor as a trainable leaf.
    pub fn params(g: &mut Graph, ae: &Autoencoder) -> Self {
        let ins = |g: &mut Graph, layers: &[(Tensor, Tensor)]| {
            layers
                .iter()
                .map(|(w, b)| (g.param(w.clone()), g.param(b.clone())))
                .collect()
        };
        AutoencoderNodes {
            encoder: ins(g, &ae.encoder),
            decoder: ins(g, &ae.decoder),
        }
    }

    /// Insert every weight tensor as a constant (inference graphs).
    pub fn inputs(g: &mut Graph, ae: &Autoencoder) -> Self {
        let ins = |g: &mut Graph, layers: &[(Tensor, Tensor)]| {
            layers
                .iter()
                .map(|(w, b)| (g.input(w.clone()), g.input(b.clone())))
                .collect()
        };
        AutoencoderNodes {
            encoder: ins(g, &ae.encoder),
            decoder: ins(g, &ae.decoder),
        }
    }

    pub fn all_ids(&self) -> Vec<NodeId> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|(w, b)| [*w, *b])
            .collect()
    }
}

fn forward_node(
    g: &mut Graph,
    layers: &[(NodeId, NodeId)],
    x: NodeId,
) -> Result<NodeId, NetError> {
    let last = layers.len() - 1;
    let mut h = x;
    for (i, (w, b)) in layers.iter().enumerate() {
        let z = g.matmul(h, *w)?;
        let z = g.add(z, *b)?;
        h = if i < last { g.relu(z) } else { z };
    }
    Ok(h)
}

/// Tape encode (batch rows allowed).
pub fn encode_node(g: &mut Graph, ae: &AutoencoderNodes, x: NodeId) -> Result<NodeId, NetError> {
    forward_node(g, &ae.encoder, x)
}

/// Tape decode (batch rows allowed).
pub fn decode_node(g: &mut Graph, ae: &AutoencoderNodes, z: NodeId) -> Result<NodeId, NetError> {
    forward_node(g, &ae.decoder, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::mlp::{flatten, init_mlp, MlpSpec, TaskKind};

    fn tiny_ae() -> Autoencoder {
        Autoencoder::init(AutoencoderSpec::new(10, vec![6, 3]).unwrap(), 3)
    }

    #[test]
    fn default_spec_latent_is_32() {
        assert_eq!(AutoencoderSpec::default_for(5301).latent_dim(), 32);
    }

    #[test]
    fn shapes_roundtrip_through_untrained_autoencoder() {
        let spec = MlpSpec::new(2, vec![2], 1, TaskKind::Regression).unwrap();
        let params = flatten(&init_mlp(&spec, 0));
        let ae = Autoencoder::init(
            AutoencoderSpec::new(params.len(), vec![5, 2]).unwrap(),
            1,
        );
        let z = ae.encode(&params).unwrap();
        assert_eq!(z.dim(), 2);
        let back = ae.decode(&z, &params).unwrap();
        assert_eq!(back.theta().shape(), params.theta().shape());
        // untrained: values generally differ
        assert_ne!(back.theta(), params.theta());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let ae = tiny_ae();
        assert!(ae.encode_batch(&Tensor::zeros(1, 11)).is_err());
        assert!(ae.decode_batch(&Tensor::zeros(1, 4)).is_err());
    }

    #[test]
    fn batch_encode_matches_per_row_encode() {
        let ae = tiny_ae();
        let batch = Tensor::new(2, 10, (0..20).map(|i| i as f64 / 7.0 - 1.0).collect()).unwrap();
        let both = ae.encode_batch(&batch).unwrap();
        for r in 0..2 {
            let single = ae.encode_batch(&batch.extract_row(r)).unwrap();
            assert_eq!(both.extract_row(r).data(), single.data());
        }
    }

    #[test]
    fn node_forward_matches_plain_forward() {
        let ae = tiny_ae();
        let x = Tensor::new(1, 10, (0..10).map(|i| (i as f64).sin()).collect()).unwrap();
        let plain_z = ae.encode_batch(&x).unwrap();
        let plain_back = ae.decode_batch(&plain_z).unwrap();

        let mut g = Graph::new();
        let nodes = AutoencoderNodes::inputs(&mut g, &ae);
        let xn = g.input(x);
        let zn = encode_node(&mut g, &nodes, xn).unwrap();
        let back = decode_node(&mut g, &nodes, zn).unwrap();
        assert_eq!(g.value(zn).data(), plain_z.data());
        assert_eq!(g.value(back).data(), plain_back.data());
    }
}
