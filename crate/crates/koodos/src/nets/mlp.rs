//! The predictive MLP `g(.; theta)` and its flat-vector parameter view.
//!
//! Treating the parameters as the state of a dynamical system requires a
//! deterministic, exactly invertible mapping between structured layer
//! weights and one flat row vector; the layout here is layer-major with
//! the weight matrix before its bias.

use super::{glorot_uniform, NetError};
use crate::diffcore::{Graph, NodeId, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    BinaryClassification,
    Regression,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputActivation {
    Sigmoid,
    Identity,
}

/// Architecture of the predictive model: ReLU hidden layers, then a task
/// head (sigmoid probabilities for binary classification, linear output
/// for regression).
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub output_activation: OutputActivation,
    pub task: TaskKind,
}

impl MlpSpec {
    pub fn new(
        input: usize,
        hidden: Vec<usize>,
        output: usize,
        task: TaskKind,
    ) -> Result<Self, NetError> {
        let output_activation = match task {
            TaskKind::BinaryClassification => OutputActivation::Sigmoid,
            TaskKind::Regression => OutputActivation::Identity,
        };
        let spec = MlpSpec {
            input,
            hidden,
            output,
            output_activation,
            task,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.hidden.is_empty() {
            return Err(NetError::InvalidSpec(
                "at least one hidden layer is required".into(),
            ));
        }
        if self.input == 0 || self.output == 0 || self.hidden.iter().any(|&w| w == 0) {
            return Err(NetError::InvalidSpec("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Three 50-wide hidden layers over 2-d inputs with a sigmoid head.
    pub fn two_moons_default() -> Self {
        MlpSpec::new(2, vec![50, 50, 50], 1, TaskKind::BinaryClassification)
            .expect("default spec is valid")
    }

    /// All layer widths, input first.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input);
        w.extend_from_slice(&self.hidden);
        w.push(self.output);
        w
    }

    pub fn layout(&self) -> ParamLayout {
        let widths = self.widths();
        let mut entries = Vec::new();
        let mut offset = 0;
        for layer in 0..widths.len() - 1 {
            let (rows, cols) = (widths[layer], widths[layer + 1]);
            entries.push(LayoutEntry {
                layer,
                kind: ParamKind::Weight,
                rows,
                cols,
                offset,
            });
            offset += rows * cols;
            entries.push(LayoutEntry {
                layer,
                kind: ParamKind::Bias,
                rows: 1,
                cols,
                offset,
            });
            offset += cols;
        }
        ParamLayout {
            entries,
            total: offset,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayoutEntry {
    pub layer: usize,
    pub kind: ParamKind,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

/// Offsets of every weight and bias inside the flat vector; contiguous and
/// exhaustive by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamLayout {
    entries: Vec<LayoutEntry>,
    total: usize,
}

impl ParamLayout {
    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// Structured per-layer weights of the predictive model.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpWeights {
    pub spec: MlpSpec,
    /// One `(weights in x out, bias 1 x out)` pair per layer.
    pub layers: Vec<(Tensor, Tensor)>,
}

/// The model parameters as one flat `1 x P` row: the state of the
/// parameter dynamical system.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatParams {
    theta: Tensor,
    spec: MlpSpec,
    layout: ParamLayout,
}

impl FlatParams {
    pub fn from_theta(spec: MlpSpec, theta: Tensor) -> Result<Self, NetError> {
        spec.validate()?;
        let layout = spec.layout();
        if theta.shape() != (1, layout.total) {
            return Err(NetError::Dimension {
                what: "flat parameter vector",
                expected: layout.total,
                got: theta.len(),
            });
        }
        Ok(FlatParams { theta, spec, layout })
    }

    pub fn theta(&self) -> &Tensor {
        &self.theta
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.layout.total
    }

    pub fn is_empty(&self) -> bool {
        self.layout.total == 0
    }

    /// Same layout, different values.
    pub fn with_theta(&self, theta: Tensor) -> Result<Self, NetError> {
        FlatParams::from_theta(self.spec.clone(), theta)
    }
}

/// Deterministic layer-major flattening; exact (bitwise) inverse of
/// [`unflatten`].
pub fn flatten(weights: &MlpWeights) -> FlatParams {
    let layout = weights.spec.layout();
    let mut data = vec![0.0; layout.total];
    for (entry, (w, b)) in layout.entries.chunks(2).zip(&weights.layers) {
        let (we, be) = (entry[0], entry[1]);
        data[we.offset..we.offset + w.len()].copy_from_slice(w.data());
        data[be.offset..be.offset + b.len()].copy_from_slice(b.data());
    }
    FlatParams {
        theta: Tensor::new(1, layout.total, data).expect("weights are finite"),
        spec: weights.spec.clone(),
        layout,
    }
}

pub fn unflatten(flat: &FlatParams) -> MlpWeights {
    let data = flat.theta.data();
    let mut layers = Vec::new();
    for entry in flat.layout.entries.chunks(2) {
        let (we, be) = (entry[0], entry[1]);
        let w = Tensor::new(
            we.rows,
            we.cols,
            data[we.offset..we.offset + we.rows * we.cols].to_vec(),
        )
        .expect("flat params are finite");
        let b = Tensor::new(1, be.cols, data[be.offset..be.offset + be.cols].to_vec())
            .expect("flat params are finite");
        layers.push((w, b));
    }
    MlpWeights {
        spec: flat.spec.clone(),
        layers,
    }
}

/// Glorot-uniform weights, zero biases, seeded.
pub fn init_mlp(spec: &MlpSpec, seed: u64) -> MlpWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths = spec.widths();
    let mut layers = Vec::new();
    for layer in 0..widths.len() - 1 {
        let (fan_in, fan_out) = (widths[layer], widths[layer + 1]);
        let w = Tensor::new(fan_in, fan_out, glorot_uniform(&mut rng, fan_in, fan_out, 1.0))
            .expect("glorot values are finite");
        layers.push((w, Tensor::zeros(1, fan_out)));
    }
    MlpWeights {
        spec: spec.clone(),
        layers,
    }
}

/// Forward pass of the predictive model (values only).
pub fn predict(params: &FlatParams, x: &Tensor) -> Result<Tensor, NetError> {
    if x.cols() != params.spec.input {
        return Err(NetError::Dimension {
            what: "predict input width",
            expected: params.spec.input,
            got: x.cols(),
        });
    }
    let weights = unflatten(params);
    let last = weights.layers.len() - 1;
    let mut h = x.clone();
    for (i, (w, b)) in weights.layers.iter().enumerate() {
        let mut z = h.matmul(w)?;
        add_bias_row(&mut z, b);
        h = if i < last {
            map_values(z, |v| if v > 0.0 { v } else { 0.0 })
        } else {
            match params.spec.output_activation {
                OutputActivation::Sigmoid => map_values(z, sigmoid),
                OutputActivation::Identity => z,
            }
        };
    }
    Ok(h)
}

/// Tape version of [`predict`]: slices the flat parameter node into layer
/// weights so gradients flow back into `theta`.
pub fn predict_node(
    g: &mut Graph,
    theta: NodeId,
    spec: &MlpSpec,
    x: NodeId,
) -> Result<NodeId, NetError> {
    let layout = spec.layout();
    if g.shape(theta) != (1, layout.total()) {
        return Err(NetError::Dimension {
            what: "flat parameter node",
            expected: layout.total(),
            got: g.shape(theta).1,
        });
    }
    if g.shape(x).1 != spec.input {
        return Err(NetError::Dimension {
            what: "predict input width",
            expected: spec.input,
            got: g.shape(x).1,
        });
    }
    let entries = layout.entries();
    let last_layer = entries.len() / 2 - 1;
    let mut h = x;
    for pair in entries.chunks(2) {
        let (we, be) = (pair[0], pair[1]);
        let w_flat = g.slice_cols(theta, we.offset, we.rows * we.cols)?;
        let w = g.reshape(w_flat, we.rows, we.cols)?;
        let b = g.slice_cols(theta, be.offset, be.cols)?;
        let z = g.matmul(h, w)?;
        let z = g.add(z, b)?;
        h = if we.layer < last_layer {
            g.relu(z)
        } else {
            match spec.output_activation {
                OutputActivation::Sigmoid => g.sigmoid(z),
                OutputActivation::Identity => z,
            }
        };
    }
    Ok(h)
}

fn add_bias_row(z: &mut Tensor, b: &Tensor) {
    let cols = z.cols();
    let bd = b.data().to_vec();
    for (i, v) in z.data_mut().iter_mut().enumerate() {
        *v += bd[i % cols];
    }
}

fn map_values(mut t: Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    for v in t.data_mut().iter_mut() {
        *v = f(*v);
    }
    t
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_hidden_spec_rejected() {
        assert!(MlpSpec::new(2, vec![], 1, TaskKind::BinaryClassification).is_err());
        assert!(MlpSpec::new(2, vec![0], 1, TaskKind::Regression).is_err());
    }

    #[test]
    fn two_moons_param_count() {
        // layer-major layout rule over widths [2,50,50,50,1]:
        // (2*50+50) + (50*50+50) + (50*50+50) + (50*1+1)
        let expected = (2 * 50 + 50) + (50 * 50 + 50) + (50 * 50 + 50) + (50 * 1 + 1);
        assert_eq!(expected, 5301);
        assert_eq!(MlpSpec::two_moons_default().param_count(), expected);
    }

    #[test]
    fn flatten_unflatten_roundtrip_is_bitwise() {
        let spec = MlpSpec::new(3, vec![5, 4], 2, TaskKind::Regression).unwrap();
        let weights = init_mlp(&spec, 42);
        let flat = flatten(&weights);
        let back = unflatten(&flat);
        assert_eq!(back, weights);
        // and the other direction
        assert_eq!(flatten(&back).theta(), flat.theta());
    }

    #[test]
    fn layout_offsets_are_contiguous_and_exhaustive() {
        let spec = MlpSpec::new(4, vec![7, 3], 2, TaskKind::BinaryClassification).unwrap();
        let layout = spec.layout();
        let mut expected_offset = 0;
        for e in layout.entries() {
            assert_eq!(e.offset, expected_offset);
            expected_offset += e.rows * e.cols;
        }
        assert_eq!(expected_offset, layout.total());
    }

    #[test]
    fn wrong_length_theta_rejected() {
        let spec = MlpSpec::new(2, vec![3], 1, TaskKind::Regression).unwrap();
        let theta = Tensor::zeros(1, spec.param_count() + 1);
        assert!(FlatParams::from_theta(spec, theta).is_err());
    }

    #[test]
    fn zero_theta_binary_outputs_half() {
        let spec = MlpSpec::new(2, vec![4, 4], 1, TaskKind::BinaryClassification).unwrap();
        let params = FlatParams::from_theta(spec.clone(), Tensor::zeros(1, spec.param_count()))
            .unwrap();
        let x = Tensor::new(3, 2, vec![0.5, -1.0, 2.0, 0.1, -0.7, 0.9]).unwrap();
        let y = predict(&params, &x).unwrap();
        assert_eq!(y.shape(), (3, 1));
        for v in y.data() {
            assert_eq!(*v, 0.5);
        }
    }

    #[test]
    fn single_hidden_unit_matches_hand_computation() {
        // widths [1,1,1]: y = sigmoid(w2 * relu(w1*x + b1) + b2)
        let spec = MlpSpec::new(1, vec![1], 1, TaskKind::BinaryClassification).unwrap();
        let (w1, b1, w2, b2) = (0.7, -0.2, 1.3, 0.4);
        let weights = MlpWeights {
            spec: spec.clone(),
            layers: vec![
                (
                    Tensor::new(1, 1, vec![w1]).unwrap(),
                    Tensor::new(1, 1, vec![b1]).unwrap(),
                ),
                (
                    Tensor::new(1, 1, vec![w2]).unwrap(),
                    Tensor::new(1, 1, vec![b2]).unwrap(),
                ),
            ],
        };
        let flat = flatten(&weights);
        let x_val = 1.9;
        let y = predict(&flat, &Tensor::new(1, 1, vec![x_val]).unwrap()).unwrap();
        let hidden = (w1 * x_val + b1).max(0.0);
        let expected = 1.0 / (1.0 + (-(w2 * hidden + b2)).exp());
        assert!((y.scalar_value() - expected).abs() < 1e-12);
    }

    #[test]
    fn predict_shape_contract() {
        let spec = MlpSpec::new(4, vec![6], 3, TaskKind::Regression).unwrap();
        let params = flatten(&init_mlp(&spec, 1));
        let x = Tensor::zeros(11, 4);
        assert_eq!(predict(&params, &x).unwrap().shape(), (11, 3));
        let bad = Tensor::zeros(11, 5);
        assert!(predict(&params, &bad).is_err());
    }

    #[test]
    fn predict_node_matches_plain_predict() {
        let spec = MlpSpec::new(3, vec![5, 4], 2, TaskKind::BinaryClassification).unwrap();
        let params = flatten(&init_mlp(&spec, 9));
        let x = Tensor::new(
            4,
            3,
            vec![
                0.1, -0.4, 0.8, 1.2, 0.3, -0.9, -1.5, 0.2, 0.6, 0.0, 0.7, -0.3,
            ],
        )
        .unwrap();
        let plain = predict(&params, &x).unwrap();

        let mut g = Graph::new();
        let theta = g.param(params.theta().clone());
        let xn = g.input(x);
        let out = predict_node(&mut g, theta, &spec, xn).unwrap();
        assert_eq!(g.value(out).data(), plain.data());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let spec = MlpSpec::two_moons_default();
        assert_eq!(init_mlp(&spec, 5), init_mlp(&spec, 5));
        assert_ne!(init_mlp(&spec, 5), init_mlp(&spec, 6));
    }
}
