//! Direct parameter-dynamics network `h(theta, t)`.
//!
//! Used when the Koopman pipeline is bypassed: the time derivative of the
//! flat parameter vector is modeled directly as an MLP over `[theta, t]`.

use super::{glorot_uniform, NetError};
use crate::diffcore::{Graph, NodeId, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Gain of the final layer at init: the initial field is close to zero, so
/// integration starts from a near-frozen trajectory instead of a wild one.
const OUTPUT_INIT_GAIN: f64 = 0.01;

/// MLP `R^{P+1} -> R^P` with tanh hidden layers and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsNet {
    pub param_dim: usize,
    pub hidden: Vec<usize>,
    /// `(weights, bias)` per layer.
    pub layers: Vec<(Tensor, Tensor)>,
}

impl DynamicsNet {
    pub fn init(param_dim: usize, hidden: Vec<usize>, seed: u64) -> Result<Self, NetError> {
        if param_dim == 0 {
            return Err(NetError::InvalidSpec("dynamics net needs param_dim > 0".into()));
        }
        if hidden.is_empty() || hidden.iter().any(|&w| w == 0) {
            return Err(NetError::InvalidSpec(
                "dynamics net needs at least one positive hidden width".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![param_dim + 1];
        widths.extend_from_slice(&hidden);
        widths.push(param_dim);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let gain = if i == last { OUTPUT_INIT_GAIN } else { 1.0 };
                (
                    Tensor::new(w[0], w[1], glorot_uniform(&mut rng, w[0], w[1], gain))
                        .expect("glorot values are finite"),
                    Tensor::zeros(1, w[1]),
                )
            })
            .collect();
        Ok(DynamicsNet {
            param_dim,
            hidden,
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.param_dim + 1
    }
}

/// Node ids of dynamics-net weights in a graph.
pub struct DynamicsNodes {
    pub layers: Vec<(NodeId, NodeId)>,
}

impl DynamicsNodes {
    pub fn params(g: &mut Graph, net: &DynamicsNet) -> Self {
        DynamicsNodes {
            layers: net
                .layers
                .iter()
                .map(|(w, b)| (g.param(w.clone()), g.param(b.clone())))
                .collect(),
        }
    }

    pub fn inputs(g: &mut Graph, net: &DynamicsNet) -> Self {
        DynamicsNodes {
            layers: net
                .layers
                .iter()
                .map(|(w, b)| (g.input(w.clone()), g.input(b.clone())))
                .collect(),
        }
    }

    pub fn all_ids(&self) -> Vec<NodeId> {
        self.layers.iter().flat_map(|(w, b)| [*w, *b]).collect()
    }
}

/// `d theta / dt = h([theta, t])` on the tape.
pub fn direct_dynamics_node(
    g: &mut Graph,
    net_dims: (usize, usize),
    layers: &DynamicsNodes,
    theta: NodeId,
    t: f64,
) -> Result<NodeId, NetError> {
    let (param_dim, _) = net_dims;
    if g.shape(theta) != (1, param_dim) {
        return Err(NetError::Dimension {
            what: "dynamics input",
            expected: param_dim,
            got: g.shape(theta).1,
        });
    }
    let t_node = g.input(Tensor::scalar(t).map_err(crate::diffcore::DiffError::from)?);
    let joined = g.concat_cols(&[theta, t_node])?;
    let last = layers.layers.len() - 1;
    let mut h = joined;
    for (i, (w, b)) in layers.layers.iter().enumerate() {
        let lin = g.matmul(h, *w)?;
        let lin = g.add(lin, *b)?;
        h = if i < last { g.tanh(lin) } else { lin };
    }
    Ok(h)
}

/// Plain evaluation of the dynamics field.
pub fn direct_dynamics(net: &DynamicsNet, theta: &Tensor, t: f64) -> Result<Tensor, NetError> {
    let mut g = Graph::new();
    let nodes = DynamicsNodes::inputs(&mut g, net);
    let theta_node = g.input(theta.clone());
    let out = direct_dynamics_node(&mut g, (net.param_dim, 0), &nodes, theta_node, t)?;
    Ok(g.value(out).clone())
}
