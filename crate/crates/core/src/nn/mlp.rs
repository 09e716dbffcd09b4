//! Fully connected networks over a flat parameter vector.
//!
//! Each layer computes `y = activation(W x + b)`. Parameters are stored layer by
//! layer as a row-major `(output_width, input_width)` weight block followed by
//! the bias block, so a whole network is one contiguous `ParameterVector`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::nn::loss::{sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Softplus => softplus(x),
            Activation::Identity => x,
        }
    }

    /// Derivative with respect to the pre-activation value.
    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(pre),
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Softplus => "softplus",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "softplus" => Ok(Activation::Softplus),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Parse(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_width: usize,
    pub output_width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_width: usize, output_width: usize, activation: Activation) -> Self {
        LayerSpec {
            input_width,
            output_width,
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.input_width * self.output_width + self.output_width
    }
}

/// An ordered, width-chained list of layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LayerSpec>", into = "Vec<LayerSpec>")]
pub struct MlpSpec {
    layers: Vec<LayerSpec>,
}

impl TryFrom<Vec<LayerSpec>> for MlpSpec {
    type Error = Error;

    fn try_from(layers: Vec<LayerSpec>) -> Result<Self> {
        MlpSpec::new(layers)
    }
}

impl From<MlpSpec> for Vec<LayerSpec> {
    fn from(spec: MlpSpec) -> Self {
        spec.layers
    }
}

impl MlpSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("network needs at least one layer".into()));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.input_width == 0 || layer.output_width == 0 {
                return Err(Error::InvalidInput(format!("layer {k} has zero width")));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].output_width != pair[1].input_width {
                return Err(Error::InvalidInput(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    k,
                    pair[0].output_width,
                    k + 1,
                    pair[1].input_width
                )));
            }
        }
        Ok(MlpSpec { layers })
    }

    /// Builds a chain from an input width and the list of layer output widths.
    /// Every layer but the last uses `hidden`; the last uses `output`.
    pub fn chain(
        input_width: usize,
        widths: &[usize],
        hidden: Activation,
        output: Activation,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = input_width;
        for (k, &w) in widths.iter().enumerate() {
            let act = if k + 1 == widths.len() { output } else { hidden };
            layers.push(LayerSpec::new(prev, w, act));
            prev = w;
        }
        MlpSpec::new(layers)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Output widths of every layer, the form used by config presets.
    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.output_width).collect()
    }

    /// Fan-in scaled uniform initialization, bound `sqrt(1 / input_width)`.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector {
        let mut values = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            let bound = (1.0 / layer.input_width as f64).sqrt();
            for _ in 0..layer.param_count() {
                values.push(rng.random_range(-bound..bound));
            }
        }
        ParameterVector { values }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        check_finite("parameter vector", &values)?;
        Ok(ParameterVector { values })
    }

    pub fn zeros(len: usize) -> Self {
        ParameterVector {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    values: Vec<f64>,
}

impl GradientVector {
    pub fn zeros(len: usize) -> Self {
        GradientVector {
            values: vec![0.0; len],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        GradientVector { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn fill_zero(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn add_scaled(&mut self, other: &GradientVector, factor: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
    }

    pub fn norm_squared(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Intermediates of one forward pass, consumed by [`backward`].
#[derive(Debug, Clone, Default)]
pub struct ForwardRecord {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ForwardRecord {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn input(&self) -> Option<&[f64]> {
        self.inputs.first().map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

fn check_shapes(spec: &MlpSpec, params: &ParameterVector, input: &[f64]) -> Result<()> {
    check_len("network parameters", spec.param_count(), params.len())?;
    check_len("network input", spec.input_width(), input.len())?;
    check_finite("network input", input)
}

#[inline]
fn affine(layer: &LayerSpec, block: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let (n_in, n_out) = (layer.input_width, layer.output_width);
    let (weights, bias) = block.split_at(n_in * n_out);
    out.clear();
    out.extend(weights.chunks_exact(n_in).zip(bias).map(|(row, b)| {
        let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
        dot + b
    }));
}

/// Plain forward pass.
pub fn mlp_forward(spec: &MlpSpec, params: &ParameterVector, input: &[f64]) -> Result<Vec<f64>> {
    check_shapes(spec, params, input)?;
    let mut x = input.to_vec();
    let mut z = Vec::new();
    let mut offset = 0;
    for layer in &spec.layers {
        let n = layer.param_count();
        affine(layer, &params.values[offset..offset + n], &x, &mut z);
        offset += n;
        x.clear();
        x.extend(z.iter().map(|&v| layer.activation.apply(v)));
    }
    Ok(x)
}

/// Forward pass that keeps every intermediate needed by [`backward`].
pub fn mlp_forward_recorded(
    spec: &MlpSpec,
    params: &ParameterVector,
    input: &[f64],
) -> Result<ForwardRecord> {
    check_shapes(spec, params, input)?;
    let mut record = ForwardRecord {
        inputs: Vec::with_capacity(spec.layers.len()),
        pre: Vec::with_capacity(spec.layers.len()),
        output: Vec::new(),
    };
    let mut x = input.to_vec();
    let mut offset = 0;
    for layer in &spec.layers {
        let n = layer.param_count();
        let mut z = Vec::with_capacity(layer.output_width);
        affine(layer, &params.values[offset..offset + n], &x, &mut z);
        offset += n;
        let y: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
        record.inputs.push(std::mem::replace(&mut x, y));
        record.pre.push(z);
    }
    record.output = x;
    Ok(record)
}

/// Reverse-mode pass through a recorded forward computation.
///
/// Accumulates `d loss / d params` into `grads` given `grad_output = d loss /
/// d output`, and returns `d loss / d input`.
pub fn backward(
    spec: &MlpSpec,
    params: &ParameterVector,
    record: &ForwardRecord,
    grad_output: &[f64],
    grads: &mut GradientVector,
) -> Result<Vec<f64>> {
    if record.is_empty() {
        return Err(Error::State("backward called without a recorded forward pass"));
    }
    check_len("recorded layers", spec.layers.len(), record.inputs.len())?;
    check_len("network parameters", spec.param_count(), params.len())?;
    check_len("gradient vector", spec.param_count(), grads.len())?;
    check_len("output gradient", spec.output_width(), grad_output.len())?;
    for (layer, input) in spec.layers.iter().zip(&record.inputs) {
        check_len("recorded layer input", layer.input_width, input.len())?;
    }

    let mut upstream = grad_output.to_vec();
    let mut offset = spec.param_count();
    let mut delta = Vec::new();
    for (k, layer) in spec.layers.iter().enumerate().rev() {
        let (n_in, n_out) = (layer.input_width, layer.output_width);
        offset -= layer.param_count();
        let x = &record.inputs[k];
        let pre = &record.pre[k];
        delta.clear();
        delta.extend(
            upstream
                .iter()
                .zip(pre)
                .map(|(g, &z)| g * layer.activation.derivative(z)),
        );

        let weights = &params.values[offset..offset + n_in * n_out];
        let (gw, gb) = grads.values[offset..offset + layer.param_count()].split_at_mut(n_in * n_out);
        let mut grad_x = vec![0.0; n_in];
        for (o, &d) in delta.iter().enumerate() {
            gb[o] += d;
            if d == 0.0 {
                continue;
            }
            let row = &weights[o * n_in..(o + 1) * n_in];
            let grow = &mut gw[o * n_in..(o + 1) * n_in];
            for i in 0..n_in {
                grow[i] += d * x[i];
                grad_x[i] += d * row[i];
            }
        }
        upstream = grad_x;
    }
    Ok(upstream)
}

/// A network specification together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: ParameterVector,
}

impl Mlp {
    pub fn new(spec: MlpSpec, params: ParameterVector) -> Result<Self> {
        check_len("network parameters", spec.param_count(), params.len())?;
        Ok(Mlp { spec, params })
    }

    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let params = spec.init_params(rng);
        Mlp { spec, params }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        mlp_forward(&self.spec, &self.params, input)
    }

    pub fn forward_recorded(&self, input: &[f64]) -> Result<ForwardRecord> {
        mlp_forward_recorded(&self.spec, &self.params, input)
    }

    pub fn backward(
        &self,
        record: &ForwardRecord,
        grad_output: &[f64],
        grads: &mut GradientVector,
    ) -> Result<Vec<f64>> {
        backward(&self.spec, &self.params, record, grad_output, grads)
    }

    pub fn zero_grad(&self) -> GradientVector {
        GradientVector::zeros(self.params.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(input: usize, output: usize, act: Activation) -> MlpSpec {
        MlpSpec::new(vec![LayerSpec::new(input, output, act)]).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = single(2, 2, Activation::Identity);
        let params = ParameterVector::from_vec(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let out = mlp_forward(&spec, &params, &[2.0, -3.0]).unwrap();
        assert_eq!(out, vec![2.0, -3.0]);
    }

    #[test]
    fn relu_of_bias_with_zero_weights() {
        let spec = single(3, 2, Activation::Relu);
        let mut values = vec![0.0; 6];
        values.extend([1.0, -1.0]);
        let params = ParameterVector::from_vec(values).unwrap();
        for input in [[0.0, 0.0, 0.0], [5.0, -2.0, 9.0]] {
            assert_eq!(mlp_forward(&spec, &params, &input).unwrap(), vec![1.0, 0.0]);
        }
    }

    #[test]
    fn width_chain_is_validated() {
        let err = MlpSpec::new(vec![
            LayerSpec::new(2, 3, Activation::Relu),
            LayerSpec::new(4, 1, Activation::Identity),
        ]);
        assert!(err.is_err());
        assert!(MlpSpec::new(vec![LayerSpec::new(0, 3, Activation::Relu)]).is_err());
        assert!(MlpSpec::new(vec![]).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = single(2, 1, Activation::Identity);
        let params = ParameterVector::zeros(3);
        assert!(matches!(
            mlp_forward(&spec, &params, &[1.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            mlp_forward(&spec, &params, &[1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            mlp_forward(&spec, &ParameterVector::zeros(4), &[1.0, 2.0]),
            Err(Error::Dimension { .. })
        ));
    }

    /// Second, loop-based forward pass used as an oracle.
    fn oracle_forward(spec: &MlpSpec, params: &[f64], input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        let mut off = 0;
        for layer in spec.layers() {
            let mut y = vec![0.0; layer.output_width];
            for o in 0..layer.output_width {
                let mut acc = params[off + layer.input_width * layer.output_width + o];
                for i in 0..layer.input_width {
                    acc += params[off + o * layer.input_width + i] * x[i];
                }
                y[o] = match layer.activation {
                    Activation::Relu => {
                        if acc > 0.0 {
                            acc
                        } else {
                            0.0
                        }
                    }
                    Activation::Softplus => (1.0 + acc.exp()).ln(),
                    Activation::Identity => acc,
                };
            }
            off += layer.param_count();
            x = y;
        }
        x
    }

    #[test]
    fn seeded_two_layer_net_matches_oracle() {
        let spec = MlpSpec::chain(1, &[4, 2], Activation::Relu, Activation::Identity).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let params = spec.init_params(&mut rng);
        let out = mlp_forward(&spec, &params, &[0.5]).unwrap();
        let expected = oracle_forward(&spec, params.as_slice(), &[0.5]);
        for (a, b) in out.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn linear_layer_squared_norm_gradient() {
        // loss = |W x + b|^2  =>  dL/dW_ij = 2 out_i x_j
        let spec = single(3, 2, Activation::Identity);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = spec.init_params(&mut rng);
        let x = [0.3, -1.2, 2.0];
        let record = mlp_forward_recorded(&spec, &params, &x).unwrap();
        let out = record.output().to_vec();
        let grad_out: Vec<f64> = out.iter().map(|o| 2.0 * o).collect();
        let mut grads = GradientVector::zeros(spec.param_count());
        backward(&spec, &params, &record, &grad_out, &mut grads).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let expected = 2.0 * out[i] * x[j];
                assert!((grads.as_slice()[i * 3 + j] - expected).abs() < 1e-12);
            }
            assert!((grads.as_slice()[6 + i] - 2.0 * out[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        let spec = MlpSpec::chain(2, &[1, 1], Activation::Relu, Activation::Identity).unwrap();
        // first layer pre-activation = -1 for the chosen input
        let params = ParameterVector::from_vec(vec![1.0, 1.0, -3.0, 2.0, 0.5]).unwrap();
        let record = mlp_forward_recorded(&spec, &params, &[1.0, 1.0]).unwrap();
        let mut grads = GradientVector::zeros(spec.param_count());
        let gx = backward(&spec, &params, &record, &[1.0], &mut grads).unwrap();
        assert_eq!(&grads.as_slice()[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(gx, vec![0.0, 0.0]);
        // the output layer still receives its bias gradient
        assert_eq!(grads.as_slice()[4], 1.0);
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let spec = single(1, 1, Activation::Identity);
        let params = ParameterVector::zeros(2);
        let mut grads = GradientVector::zeros(2);
        let res = backward(&spec, &params, &ForwardRecord::default(), &[1.0], &mut grads);
        assert!(matches!(res, Err(Error::State(_))));
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let spec = MlpSpec::chain(16, &[8, 4], Activation::Relu, Activation::Identity).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = spec.init_params(&mut rng);
        let (first, second) = params.as_slice().split_at(spec.layers()[0].param_count());
        assert!(first.iter().all(|v| v.abs() <= 0.25));
        assert!(second.iter().all(|v| v.abs() <= (1.0f64 / 8.0).sqrt()));
    }
}
