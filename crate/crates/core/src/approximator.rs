//! Small dense feedforward networks with hand-written reverse-mode gradients
//! and an Adam optimizer.
//!
//! Weights of a layer are stored row-major as an `input_dim x output_dim`
//! matrix so that a batch (one sample per row) maps through `X W + b`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn slope_from_output<T: Scalar>(self, a: T) -> T {
        match self {
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - a * a,
            Activation::Identity => T::one(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::InvalidConfig(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

/// Row-major dense matrix, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, actual: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row_vector(data: Vec<T>) -> Self {
        Self { rows: 1, cols: data.len(), data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Column `j` copied out.
    pub fn column(&self, j: usize) -> Vec<T> {
        self.data.iter().skip(j).step_by(self.cols).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    spec: LayerSpec,
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn spec(&self) -> LayerSpec {
        self.spec
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }
}

/// Gradients (or any other per-parameter quantity) shaped like a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrad<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad { weights: vec![T::zero(); l.weights.len()], bias: vec![T::zero(); l.bias.len()] })
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn max_abs(&self) -> T {
        self.iter().fold(T::zero(), |m, g| m.max(g.abs()))
    }
}

/// Intermediate activations of a batched forward pass; `outputs[0]` is the input.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    outputs: Vec<Matrix<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn output(&self) -> &Matrix<T> {
        self.outputs.last().expect("tape always holds the input")
    }

    pub fn input(&self) -> &Matrix<T> {
        &self.outputs[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    /// Builds a network with weights and biases drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, layer by layer, weights before biases.
    pub fn new(specs: &[LayerSpec], rng: &mut ChaCha8Rng) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        for (i, s) in specs.iter().enumerate() {
            if s.input_dim == 0 || s.output_dim == 0 {
                return Err(Error::InvalidConfig(format!("layer {i} has a zero dimension")));
            }
            if i > 0 && specs[i - 1].output_dim != s.input_dim {
                return Err(Error::DimensionMismatch { expected: specs[i - 1].output_dim, actual: s.input_dim });
            }
        }
        let layers = specs
            .iter()
            .map(|&spec| {
                let bound = 1.0 / (spec.input_dim as f64).sqrt();
                let mut draw = || T::lit(rng.random_range(-bound..bound));
                let weights = (0..spec.input_dim * spec.output_dim).map(|_| draw()).collect();
                let bias = (0..spec.output_dim).map(|_| draw()).collect();
                Layer { spec, weights, bias }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Fully connected stack `input -> hidden... -> output`.
    pub fn mlp(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_activation: Activation,
        output_activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let specs: Vec<LayerSpec> = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| LayerSpec {
                input_dim: w[0],
                output_dim: w[1],
                activation: if i + 2 == dims.len() { output_activation } else { hidden_activation },
            })
            .collect();
        Self::new(&specs, rng)
    }

    /// Network with explicit parameters; `params[i]` is `(weights, bias)` of layer `i`.
    pub fn from_parameters(specs: &[LayerSpec], params: Vec<(Vec<T>, Vec<T>)>) -> Result<Self> {
        if specs.len() != params.len() {
            return Err(Error::DimensionMismatch { expected: specs.len(), actual: params.len() });
        }
        let mut layers = Vec::with_capacity(specs.len());
        for (i, (&spec, (weights, bias))) in specs.iter().zip(params).enumerate() {
            if i > 0 && specs[i - 1].output_dim != spec.input_dim {
                return Err(Error::DimensionMismatch { expected: specs[i - 1].output_dim, actual: spec.input_dim });
            }
            if weights.len() != spec.input_dim * spec.output_dim {
                return Err(Error::DimensionMismatch { expected: spec.input_dim * spec.output_dim, actual: weights.len() });
            }
            if bias.len() != spec.output_dim {
                return Err(Error::DimensionMismatch { expected: spec.output_dim, actual: bias.len() });
            }
            layers.push(Layer { spec, weights, bias });
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().spec.output_dim
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn parameters(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn same_architecture(&self, other: &Self) -> bool {
        self.specs() == other.specs()
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        let x = Matrix::row_vector(input.to_vec());
        Ok(self.forward_batch(&x)?.into_vec())
    }

    pub fn forward_batch(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(input)?;
        let mut current = input.clone();
        for layer in &self.layers {
            current = layer_forward(layer, &current);
        }
        Ok(current)
    }

    /// Forward pass that keeps every layer output for a later backward pass.
    pub fn forward_tape(&self, input: Matrix<T>) -> Result<Tape<T>> {
        self.check_input(&input)?;
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(input);
        for layer in &self.layers {
            let next = layer_forward(layer, outputs.last().unwrap());
            outputs.push(next);
        }
        Ok(Tape { outputs })
    }

    fn check_input(&self, input: &Matrix<T>) -> Result<()> {
        if input.cols != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: input.cols });
        }
        Ok(())
    }

    /// Gradients of `sum_rows(output . upstream)` with respect to every
    /// parameter and to the input, for a single sample.
    pub fn backward(&self, input: &[T], upstream: &[T]) -> Result<(Gradients<T>, Vec<T>)> {
        let tape = self.forward_tape(Matrix::row_vector(input.to_vec()))?;
        let up = Matrix::row_vector(upstream.to_vec());
        let (grads, dx) = self.backward_tape(&tape, &up)?;
        Ok((grads, dx.into_vec()))
    }

    /// Batched reverse pass. Parameter gradients are summed over rows.
    pub fn backward_tape(&self, tape: &Tape<T>, upstream: &Matrix<T>) -> Result<(Gradients<T>, Matrix<T>)> {
        let mut grads = Gradients::zeros_like(self);
        let dx = self.reverse(tape, upstream, Some(&mut grads), true)?;
        Ok((grads, dx))
    }

    /// Parameter gradients of [`backward_tape`](Self::backward_tape) without
    /// the input gradient, which saves the widest product of the pass.
    pub fn parameter_gradients(&self, tape: &Tape<T>, upstream: &Matrix<T>) -> Result<Gradients<T>> {
        let mut grads = Gradients::zeros_like(self);
        self.reverse(tape, upstream, Some(&mut grads), false)?;
        Ok(grads)
    }

    /// Gradient with respect to the input only; parameters are left untouched.
    pub fn input_gradient(&self, tape: &Tape<T>, upstream: &Matrix<T>) -> Result<Matrix<T>> {
        self.reverse(tape, upstream, None, true)
    }

    /// Column `col` of [`input_gradient`](Self::input_gradient), one entry
    /// per batch row, without forming the rest of the matrix.
    pub fn input_gradient_column(&self, tape: &Tape<T>, upstream: &Matrix<T>, col: usize) -> Result<Vec<T>> {
        let first = &self.layers[0];
        let n_out = first.spec.output_dim;
        if col >= first.spec.input_dim {
            return Err(Error::DimensionMismatch { expected: first.spec.input_dim, actual: col + 1 });
        }
        let delta = self.reverse(tape, upstream, None, false)?;
        let w = &first.weights[col * n_out..(col + 1) * n_out];
        // Same fused accumulation order as the matrix kernel.
        Ok(delta
            .data
            .chunks_exact(n_out)
            .map(|row| row.iter().zip(w).fold(T::zero(), |acc, (&d, &wj)| d.mul_add(wj, acc)))
            .collect())
    }

    fn reverse(
        &self,
        tape: &Tape<T>,
        upstream: &Matrix<T>,
        mut grads: Option<&mut Gradients<T>>,
        input_grad: bool,
    ) -> Result<Matrix<T>> {
        let out = tape.output();
        if upstream.rows != out.rows || upstream.cols != out.cols {
            return Err(Error::DimensionMismatch { expected: out.rows * out.cols, actual: upstream.rows * upstream.cols });
        }
        let batch = upstream.rows;
        let mut delta = upstream.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (n_in, n_out) = (layer.spec.input_dim, layer.spec.output_dim);
            let act_out = &tape.outputs[l + 1];
            for (d, &a) in delta.data.iter_mut().zip(&act_out.data) {
                *d = *d * layer.spec.activation.slope_from_output(a);
            }
            let act_in = &tape.outputs[l];
            if let Some(g) = grads.as_deref_mut() {
                let lg = &mut g.layers[l];
                // dW = X^T dZ
                T::gemm(
                    n_in,
                    batch,
                    n_out,
                    T::one(),
                    &act_in.data,
                    (1, n_in as isize),
                    &delta.data,
                    (n_out as isize, 1),
                    T::zero(),
                    &mut lg.weights,
                    (n_out as isize, 1),
                );
                for b in lg.bias.iter_mut() {
                    *b = T::zero();
                }
                for row in delta.data.chunks_exact(n_out) {
                    for (b, &d) in lg.bias.iter_mut().zip(row) {
                        *b = *b + d;
                    }
                }
            }
            if l == 0 && !input_grad {
                break;
            }
            // dX = dZ W^T
            let mut prev = Matrix::zeros(batch, n_in);
            T::gemm(
                batch,
                n_out,
                n_in,
                T::one(),
                &delta.data,
                (n_out as isize, 1),
                &layer.weights,
                (1, n_out as isize),
                T::zero(),
                &mut prev.data,
                (n_in as isize, 1),
            );
            delta = prev;
        }
        Ok(delta)
    }

    /// `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update(&mut self, source: &Network<T>, tau: T) -> Result<()> {
        if !self.same_architecture(source) {
            return Err(Error::ArchitectureMismatch);
        }
        let keep = T::one() - tau;
        for (t, &s) in self.parameters_mut().zip(source.parameters()) {
            *t = tau * s + keep * *t;
        }
        Ok(())
    }

    /// Parameter arrays under stable names (`layer{i}.weight`, `layer{i}.bias`).
    pub fn named_arrays(&self) -> Vec<(String, &[T])> {
        named(self.layers.iter().map(|l| (l.weights.as_slice(), l.bias.as_slice())))
    }

    /// Mutable counterpart of [`named_arrays`](Self::named_arrays), same order.
    pub fn named_arrays_mut(&mut self) -> Vec<(String, &mut [T])> {
        named_mut(self.layers.iter_mut().map(|l| (l.weights.as_mut_slice(), l.bias.as_mut_slice())))
    }
}

fn named_mut<'a, T: 'a>(layers: impl Iterator<Item = (&'a mut [T], &'a mut [T])>) -> Vec<(String, &'a mut [T])> {
    let mut out = Vec::new();
    for (i, (w, b)) in layers.enumerate() {
        out.push((format!("layer{i}.weight"), w));
        out.push((format!("layer{i}.bias"), b));
    }
    out
}

fn named<'a, T: 'a>(layers: impl Iterator<Item = (&'a [T], &'a [T])>) -> Vec<(String, &'a [T])> {
    layers
        .enumerate()
        .flat_map(|(i, (w, b))| [(format!("layer{i}.weight"), w), (format!("layer{i}.bias"), b)])
        .collect()
}

fn layer_forward<T: Scalar>(layer: &Layer<T>, input: &Matrix<T>) -> Matrix<T> {
    let (n_in, n_out) = (layer.spec.input_dim, layer.spec.output_dim);
    let batch = input.rows;
    let mut out = Matrix { rows: batch, cols: n_out, data: layer.bias.repeat(batch) };
    T::gemm(
        batch,
        n_in,
        n_out,
        T::one(),
        &input.data,
        (n_in as isize, 1),
        &layer.weights,
        (n_out as isize, 1),
        T::one(),
        &mut out.data,
        (n_out as isize, 1),
    );
    let act = layer.spec.activation;
    if act != Activation::Identity {
        for v in out.data.iter_mut() {
            *v = act.apply(*v);
        }
    }
    out
}

/// Adam moment estimates and settings for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub first_moment: Gradients<T>,
    pub second_moment: Gradients<T>,
    pub step: u64,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> OptimizerState<T> {
    /// Fresh state with the usual `beta1 = 0.9`, `beta2 = 0.999`, `epsilon = 1e-8`.
    pub fn new(net: &Network<T>, learning_rate: T) -> Self {
        Self {
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
            step: 0,
            learning_rate,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
        }
    }

    /// One bias-corrected Adam descent step along `grads`.
    pub fn apply(&mut self, net: &mut Network<T>, grads: &Gradients<T>) -> Result<()> {
        if grads.layers.len() != net.layers.len() {
            return Err(Error::ArchitectureMismatch);
        }
        for (g, l) in grads.layers.iter().zip(&net.layers) {
            if g.weights.len() != l.weights.len() || g.bias.len() != l.bias.len() {
                return Err(Error::ArchitectureMismatch);
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let correction1 = T::one() - b1.powi(t);
        let correction2 = T::one() - b2.powi(t);
        let step_size = self.learning_rate / correction1;
        let params = net.parameters_mut();
        let moments = self.first_moment.iter_mut().zip(self.second_moment.iter_mut());
        for ((p, g), (m, v)) in params.zip(grads.iter()).zip(moments) {
            *m = b1 * *m + (T::one() - b1) * *g;
            *v = b2 * *v + (T::one() - b2) * *g * *g;
            let denom = (*v / correction2).sqrt() + self.epsilon;
            *p = *p - step_size * *m / denom;
        }
        Ok(())
    }

    /// Moment arrays under stable names (`m.layer{i}.weight`, `v.layer{i}.bias`, ...).
    pub fn named_arrays(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::new();
        for (prefix, g) in [("m", &self.first_moment), ("v", &self.second_moment)] {
            for (name, arr) in named(g.layers.iter().map(|l| (l.weights.as_slice(), l.bias.as_slice()))) {
                out.push((format!("{prefix}.{name}"), arr));
            }
        }
        out
    }

    /// Mutable counterpart of [`named_arrays`](Self::named_arrays), same order.
    pub fn named_arrays_mut(&mut self) -> Vec<(String, &mut [T])> {
        let mut out = Vec::new();
        for (prefix, g) in [("m", &mut self.first_moment), ("v", &mut self.second_moment)] {
            let layers = g.layers.iter_mut().map(|l| (l.weights.as_mut_slice(), l.bias.as_mut_slice()));
            for (name, arr) in named_mut(layers) {
                out.push((format!("{prefix}.{name}"), arr));
            }
        }
        out
    }
}

/// Functional form of [`OptimizerState::apply`].
pub fn optimizer_step<T: Scalar>(
    net: &Network<T>,
    grads: &Gradients<T>,
    opt: &OptimizerState<T>,
) -> Result<(Network<T>, OptimizerState<T>)> {
    let mut net = net.clone();
    let mut opt = opt.clone();
    opt.apply(&mut net, grads)?;
    Ok((net, opt))
}

/// Functional form of [`Network::soft_update`].
pub fn soft_update<T: Scalar>(target: &Network<T>, source: &Network<T>, tau: T) -> Result<Network<T>> {
    let mut out = target.clone();
    out.soft_update(source, tau)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn identity_layer(n: usize) -> Network<f64> {
        let spec = LayerSpec { input_dim: n, output_dim: n, activation: Activation::Identity };
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        Network::from_parameters(&[spec], vec![(w, vec![0.0; n])]).unwrap()
    }

    #[test]
    fn identity_network_passes_input_through() {
        let net = identity_layer(3);
        assert_eq!(net.forward(&[0.5, -1.0, 2.0]).unwrap(), vec![0.5, -1.0, 2.0]);
        let (grads, dx) = net.backward(&[0.5, -1.0, 2.0], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(dx, vec![0.1, 0.2, 0.3]);
        assert_eq!(grads.layers[0].bias, vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn tanh_output_is_bounded() {
        let net = Network::<f64>::mlp(4, &[8], 2, Activation::Relu, Activation::Tanh, &mut rng(1)).unwrap();
        for k in 0..50 {
            let x: Vec<f64> = (0..4).map(|i| ((k * 4 + i) as f64).sin() * 20.0).collect();
            assert!(net.forward(&x).unwrap().iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn two_layer_forward_matches_hand_computation() {
        let specs = [
            LayerSpec { input_dim: 2, output_dim: 2, activation: Activation::Relu },
            LayerSpec { input_dim: 2, output_dim: 1, activation: Activation::Tanh },
        ];
        // W1 = [[1, -1], [2, 0.5]] (rows = inputs), b1 = [0.1, -0.2]
        let net = Network::from_parameters(
            &specs,
            vec![(vec![1.0, -1.0, 2.0, 0.5], vec![0.1, -0.2]), (vec![0.3, -0.7], vec![0.05])],
        )
        .unwrap();
        let x = [0.4, -0.3];
        let h0 = (0.4 * 1.0 + -0.3 * 2.0 + 0.1f64).max(0.0);
        let h1 = (0.4 * -1.0 + -0.3 * 0.5 - 0.2f64).max(0.0);
        let expected = (0.3 * h0 - 0.7 * h1 + 0.05f64).tanh();
        assert!((net.forward(&x).unwrap()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let net = Network::<f64>::mlp(3, &[4], 1, Activation::Relu, Activation::Identity, &mut rng(0)).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        assert!(net.backward(&[1.0, 2.0, 3.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Network::<f64>::mlp(5, &[6, 4], 2, Activation::Tanh, Activation::Identity, &mut rng(2)).unwrap();
        let (g, dx) = net.backward(&[0.1, 0.2, 0.3, 0.4, 0.5], &[0.0, 0.0]).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert!(dx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn batched_gradients_sum_per_sample_gradients() {
        let net = Network::<f64>::mlp(3, &[5], 2, Activation::Tanh, Activation::Identity, &mut rng(3)).unwrap();
        let xs = [[0.1, -0.2, 0.3], [1.0, 0.5, -0.5]];
        let ups = [[1.0, -2.0], [0.5, 0.25]];
        let mut summed = Gradients::zeros_like(&net);
        for (x, u) in xs.iter().zip(&ups) {
            let (g, _) = net.backward(x, u).unwrap();
            for (s, v) in summed.iter_mut().zip(g.iter()) {
                *s += v;
            }
        }
        let tape = net.forward_tape(Matrix::from_vec(2, 3, xs.concat()).unwrap()).unwrap();
        let (batched, _) = net.backward_tape(&tape, &Matrix::from_vec(2, 2, ups.concat()).unwrap()).unwrap();
        for (a, b) in summed.iter().zip(batched.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        let upstream = Matrix::from_vec(2, 2, ups.concat()).unwrap();
        assert_eq!(net.parameter_gradients(&tape, &upstream).unwrap(), batched);
    }

    #[test]
    fn input_gradient_column_matches_full_matrix() {
        let net = Network::<f64>::mlp(4, &[6], 1, Activation::Relu, Activation::Identity, &mut rng(8)).unwrap();
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let tape = net.forward_tape(Matrix::from_vec(3, 4, x).unwrap()).unwrap();
        let upstream = Matrix::from_vec(3, 1, vec![0.5, -1.0, 2.0]).unwrap();
        let full = net.input_gradient(&tape, &upstream).unwrap();
        for col in 0..4 {
            let column = net.input_gradient_column(&tape, &upstream, col).unwrap();
            for (a, b) in column.iter().zip(full.column(col)) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        assert!(net.input_gradient_column(&tape, &upstream, 4).is_err());
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut net = Network::<f64>::mlp(2, &[3], 1, Activation::Relu, Activation::Identity, &mut rng(4)).unwrap();
        let before = net.clone();
        let mut opt = OptimizerState::new(&net, 1e-3);
        opt.apply(&mut net, &Gradients::zeros_like(&before)).unwrap();
        assert_eq!(net, before);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let spec = LayerSpec { input_dim: 1, output_dim: 1, activation: Activation::Identity };
        let mut net = Network::from_parameters(&[spec], vec![(vec![0.5], vec![0.0])]).unwrap();
        let mut opt = OptimizerState::new(&net, 0.001);
        let grads = Gradients { layers: vec![LayerGrad { weights: vec![1.0], bias: vec![0.0] }] };
        let (next, opt2) = optimizer_step(&net, &grads, &opt).unwrap();
        // m_hat = g, v_hat = g^2  =>  delta = lr * g / (|g| + eps)
        let expected: f64 = 0.5 - 0.001 * 1.0 / (1.0 + 1e-8);
        assert!((next.layers()[0].weights()[0] - expected).abs() < 1e-15);
        assert_eq!(opt2.step, 1);
        opt.apply(&mut net, &grads).unwrap();
        assert_eq!(net, next);
    }

    #[test]
    fn soft_update_boundaries() {
        let source = Network::<f64>::mlp(2, &[3], 1, Activation::Relu, Activation::Identity, &mut rng(5)).unwrap();
        let target = Network::<f64>::mlp(2, &[3], 1, Activation::Relu, Activation::Identity, &mut rng(6)).unwrap();
        assert_eq!(soft_update(&target, &source, 1.0).unwrap(), source);
        assert_eq!(soft_update(&target, &source, 0.0).unwrap(), target);

        let spec = LayerSpec { input_dim: 1, output_dim: 1, activation: Activation::Identity };
        let a = Network::from_parameters(&[spec], vec![(vec![2.0], vec![2.0])]).unwrap();
        let b = Network::from_parameters(&[spec], vec![(vec![4.0], vec![4.0])]).unwrap();
        let mid = soft_update(&a, &b, 0.5).unwrap();
        assert_eq!(mid.layers()[0].weights(), &[3.0]);

        let other = Network::<f64>::mlp(2, &[4], 1, Activation::Relu, Activation::Identity, &mut rng(7)).unwrap();
        assert!(matches!(soft_update(&target, &other, 0.5), Err(Error::ArchitectureMismatch)));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Network::<f64>::mlp(16, &[8], 1, Activation::Relu, Activation::Tanh, &mut rng(9)).unwrap();
        let b = Network::<f64>::mlp(16, &[8], 1, Activation::Relu, Activation::Tanh, &mut rng(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.layers()[0].weights().iter().all(|w| w.abs() <= 0.25));
    }

    #[test]
    fn named_arrays_cover_every_parameter() {
        let net = Network::<f64>::mlp(3, &[4], 2, Activation::Relu, Activation::Identity, &mut rng(1)).unwrap();
        let arrays = net.named_arrays();
        assert_eq!(arrays.len(), 4);
        assert_eq!(arrays[0].0, "layer0.weight");
        assert_eq!(arrays.iter().map(|(_, a)| a.len()).sum::<usize>(), net.num_parameters());
        let opt = OptimizerState::new(&net, 1e-3);
        let names: Vec<String> = opt.named_arrays().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "m.layer0.weight");
        assert_eq!(names[7], "v.layer1.bias");
    }

    #[test]
    fn f32_network_runs() {
        let net = Network::<f32>::mlp(3, &[4], 1, Activation::Relu, Activation::Tanh, &mut rng(1)).unwrap();
        let y = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        assert!(y[0].abs() < 1.0);
    }
}
