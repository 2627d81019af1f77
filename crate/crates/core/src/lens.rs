//! Dense layers and losses as parametric lenses.
//!
//! A lens pairs a forward map (`play`: parameters and input to output) with a
//! backward map (`coplay`: an output gradient pulled back to an input gradient,
//! plus the parameter gradient that feeds the optimizer). A network is the
//! sequential composition of its dense lenses; the [`ForwardTape`] keeps what
//! each `coplay` needs from the matching `play`.

use rand::Rng as _;

use crate::dropout::GradMaskPlan;
use crate::error::{config, usage, Result};
use crate::stochastics::Rng;

pub type Vector = Vec<f64>;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(config(format!(
                "matrix of {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(config(format!(
                "row {bad} has {} entries, expected {cols}",
                rows[bad].len()
            )));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// `self · x`
    pub fn matvec(&self, x: &[f64]) -> Vector {
        self.iter_rows().map(|row| dot(row, x)).collect()
    }

    /// `selfᵀ · y`
    pub fn transpose_matvec(&self, y: &[f64]) -> Vector {
        let mut out = vec![0.0; self.cols];
        for (row, &yj) in self.iter_rows().zip(y) {
            for (o, &w) in out.iter_mut().zip(row) {
                *o += w * yj;
            }
        }
        out
    }

    /// Copy of the rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative, taking the ReLU kink at 0 as 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

pub fn relu(z: &[f64]) -> Vector {
    z.iter().map(|&v| Activation::Relu.apply(v)).collect()
}

/// A layer strategy: weights `N_out × N_in` and bias `N_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weights: Matrix,
    pub bias: Vector,
}

impl DenseParams {
    pub fn new(weights: Matrix, bias: Vector) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(config(format!(
                "weights have {} rows but bias has {} entries",
                weights.rows(),
                bias.len()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(n_out: usize, n_in: usize) -> Self {
        Self {
            weights: Matrix::zeros(n_out, n_in),
            bias: vec![0.0; n_out],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(n_out: usize, n_in: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let data = (0..n_out * n_in)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weights: Matrix {
                rows: n_out,
                cols: n_in,
                data,
            },
            bias: vec![0.0; n_out],
        }
    }

    pub fn n_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn n_out(&self) -> usize {
        self.weights.rows()
    }

    pub fn same_shape(&self, other: &DenseParams) -> bool {
        self.weights.rows() == other.weights.rows()
            && self.weights.cols() == other.weights.cols()
            && self.bias.len() == other.bias.len()
    }

    /// Weights then bias, as one mutable pass.
    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.as_mut_slice().iter_mut().chain(self.bias.iter_mut())
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.as_slice().iter().chain(self.bias.iter())
    }

    pub fn len(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Forward map of a dense layer: `z = W·input + b`, `a = φ(z)`.
pub fn dense_play(
    params: &DenseParams,
    input: &[f64],
    activation: Activation,
) -> Result<(Vector, Vector)> {
    if input.len() != params.n_in() {
        return Err(config(format!(
            "layer expects {} inputs, got {}",
            params.n_in(),
            input.len()
        )));
    }
    let z: Vector = params
        .weights
        .iter_rows()
        .zip(&params.bias)
        .map(|(row, b)| dot(row, input) + b)
        .collect();
    let a = z.iter().map(|&v| activation.apply(v)).collect();
    Ok((z, a))
}

/// Output of [`dense_coplay`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCoplay {
    pub grad_weights: Matrix,
    pub grad_bias: Vector,
    pub grad_input: Vector,
}

/// Backward map of a dense layer.
///
/// `δ_j = grad_a[j]·φ′(z_j)`, `∂W[j][i] = δ_j·input[i]`, `∂b[j] = δ_j` and the
/// input gradient is `Wᵀ·δ`.
pub fn dense_coplay(
    params: &DenseParams,
    input: &[f64],
    z: &[f64],
    grad_a: &[f64],
    activation: Activation,
) -> Result<DenseCoplay> {
    check_coplay_dims(params, input, z, grad_a)?;
    let mut grads = DenseParams::zeros(params.n_out(), params.n_in());
    let grad_input = coplay_into(params, input, z, grad_a, activation, None, &mut grads, 1.0);
    Ok(DenseCoplay {
        grad_weights: grads.weights,
        grad_bias: grads.bias,
        grad_input,
    })
}

/// [`dense_coplay`] with each neuron's incoming gradient gated by `mask`
/// before the activation derivative, as in the masked backward pass.
pub fn dense_coplay_gated(
    params: &DenseParams,
    input: &[f64],
    z: &[f64],
    grad_a: &[f64],
    activation: Activation,
    mask: &[bool],
) -> Result<DenseCoplay> {
    check_coplay_dims(params, input, z, grad_a)?;
    if mask.len() != params.n_out() {
        return Err(config(format!("mask has {} entries, layer {}", mask.len(), params.n_out())));
    }
    let mut grads = DenseParams::zeros(params.n_out(), params.n_in());
    let grad_input = coplay_into(params, input, z, grad_a, activation, Some(mask), &mut grads, 1.0);
    Ok(DenseCoplay {
        grad_weights: grads.weights,
        grad_bias: grads.bias,
        grad_input,
    })
}

fn check_coplay_dims(params: &DenseParams, input: &[f64], z: &[f64], grad_a: &[f64]) -> Result<()> {
    if input.len() != params.n_in() || z.len() != params.n_out() || grad_a.len() != params.n_out() {
        return Err(config(format!(
            "coplay dims: layer {}x{}, input {}, z {}, grad {}",
            params.n_out(),
            params.n_in(),
            input.len(),
            z.len(),
            grad_a.len()
        )));
    }
    Ok(())
}

/// Adds `scale ×` the parameter gradient into `acc` and returns the input
/// gradient (unscaled). A `mask` gates each neuron's incoming gradient before
/// the activation derivative is applied.
#[allow(clippy::too_many_arguments)]
fn coplay_into(
    params: &DenseParams,
    input: &[f64],
    z: &[f64],
    grad_a: &[f64],
    activation: Activation,
    mask: Option<&[bool]>,
    acc: &mut DenseParams,
    scale: f64,
) -> Vector {
    let mut grad_input = vec![0.0; params.n_in()];
    for j in 0..params.n_out() {
        let g = match mask {
            Some(m) => crate::dropout::gate_one(grad_a[j], m[j]),
            None => grad_a[j],
        };
        let delta = g * activation.derivative(z[j]);
        let scaled = delta * scale;
        for (w, &x) in acc.weights.row_mut(j).iter_mut().zip(input) {
            *w += scaled * x;
        }
        acc.bias[j] += scaled;
        for (gi, &w) in grad_input.iter_mut().zip(params.weights.row(j)) {
            *gi += w * delta;
        }
    }
    grad_input
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vector)> {
    if pred.is_empty() {
        return Err(usage("mse_loss on empty vectors"));
    }
    if pred.len() != target.len() {
        return Err(config(format!(
            "mse_loss: pred has {} entries, target {}",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let loss = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    Ok((loss, grad))
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vector {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vector = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `−log softmax(logits)[class]` and its gradient `softmax − one_hot`.
pub fn softmax_cross_entropy(logits: &[f64], class_index: usize) -> Result<(f64, Vector)> {
    if class_index >= logits.len() {
        return Err(usage(format!(
            "class index {class_index} out of range for {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
    let log_sum_exp = max + sum_exp.ln();
    let loss = log_sum_exp - logits[class_index];
    let mut grad: Vector = logits.iter().map(|&l| (l - log_sum_exp).exp()).collect();
    grad[class_index] -= 1.0;
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification { classes: usize },
}

impl Task {
    /// Loss and output gradient for one example; classification targets are
    /// class indices stored as `f64`.
    pub fn loss(self, output: &[f64], target: f64) -> Result<(f64, Vector)> {
        match self {
            Task::Regression => mse_loss(output, &[target]),
            Task::Classification { .. } => {
                if target < 0.0 || target.fract() != 0.0 {
                    return Err(usage(format!("class target {target} is not an index")));
                }
                softmax_cross_entropy(output, target as usize)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_dim: usize,
    pub task: Task,
}

impl NetworkSpec {
    pub const DEFAULT_HIDDEN_LAYERS: usize = 5;
    pub const DEFAULT_HIDDEN_WIDTH: usize = 150;

    /// Default architecture (5 hidden layers of 150 units) for a task.
    pub fn for_task(input_dim: usize, task: Task) -> Self {
        let output_dim = match task {
            Task::Regression => 1,
            Task::Classification { classes } => classes,
        };
        Self {
            input_dim,
            hidden_layers: Self::DEFAULT_HIDDEN_LAYERS,
            hidden_width: Self::DEFAULT_HIDDEN_WIDTH,
            output_dim,
            task,
        }
    }

    pub fn with_hidden(mut self, layers: usize, width: usize) -> Self {
        self.hidden_layers = layers;
        self.hidden_width = width;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(config("input and output dimensions must be at least 1"));
        }
        if self.hidden_layers > 0 && self.hidden_width == 0 {
            return Err(config("hidden width must be at least 1"));
        }
        match self.task {
            Task::Regression if self.output_dim != 1 => {
                Err(config("regression networks have a single output"))
            }
            Task::Classification { classes } if classes < 2 || self.output_dim != classes => Err(
                config(format!("classification over {classes} classes needs that many outputs (got {})", self.output_dim)),
            ),
            _ => Ok(()),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_layers + 1
    }

    /// `(n_in, n_out)` per layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.num_layers());
        let mut n_in = self.input_dim;
        for _ in 0..self.hidden_layers {
            dims.push((n_in, self.hidden_width));
            n_in = self.hidden_width;
        }
        dims.push((n_in, self.output_dim));
        dims
    }

    pub fn layer_widths(&self) -> Vec<usize> {
        self.layer_dims().into_iter().map(|(_, o)| o).collect()
    }

    pub fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            Activation::Identity
        } else {
            Activation::Relu
        }
    }

    pub fn check_params(&self, params: &[DenseParams]) -> Result<()> {
        let dims = self.layer_dims();
        if params.len() != dims.len() {
            return Err(config(format!(
                "network has {} layers, got parameters for {}",
                dims.len(),
                params.len()
            )));
        }
        for (k, (p, &(n_in, n_out))) in params.iter().zip(&dims).enumerate() {
            if p.n_in() != n_in || p.n_out() != n_out || p.bias.len() != n_out {
                return Err(config(format!(
                    "layer {k}: expected {n_out}x{n_in}, got {}x{}",
                    p.n_out(),
                    p.n_in()
                )));
            }
        }
        Ok(())
    }

    pub fn init_params(&self, rng: &mut Rng) -> Vec<DenseParams> {
        self.layer_dims()
            .into_iter()
            .map(|(n_in, n_out)| DenseParams::glorot(n_out, n_in, rng))
            .collect()
    }

    pub fn zero_params(&self) -> Vec<DenseParams> {
        self.layer_dims()
            .into_iter()
            .map(|(n_in, n_out)| DenseParams::zeros(n_out, n_in))
            .collect()
    }
}

/// What a layer's coplay needs from its play.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub input: Vector,
    pub z: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTape {
    pub layers: Vec<LayerRecord>,
    pub output: Vector,
}

/// A lens with parameters: `play` runs forward and leaves a residual,
/// `coplay` consumes it to pull an output gradient back.
pub trait ParametricLens {
    type Params;
    type Residual;

    fn play(&self, params: &Self::Params, input: &[f64]) -> Result<(Vector, Self::Residual)>;

    /// Returns the parameter gradient and the input gradient.
    fn coplay(
        &self,
        params: &Self::Params,
        residual: &Self::Residual,
        grad_output: &[f64],
    ) -> Result<(Self::Params, Vector)>;
}

/// Dense layer lens with a fixed activation.
#[derive(Debug, Clone, Copy)]
pub struct Dense(pub Activation);

impl ParametricLens for Dense {
    type Params = DenseParams;
    type Residual = LayerRecord;

    fn play(&self, params: &DenseParams, input: &[f64]) -> Result<(Vector, LayerRecord)> {
        let (z, a) = dense_play(params, input, self.0)?;
        Ok((
            a,
            LayerRecord {
                input: input.to_vec(),
                z,
            },
        ))
    }

    fn coplay(
        &self,
        params: &DenseParams,
        residual: &LayerRecord,
        grad_output: &[f64],
    ) -> Result<(DenseParams, Vector)> {
        let c = dense_coplay(params, &residual.input, &residual.z, grad_output, self.0)?;
        Ok((
            DenseParams {
                weights: c.grad_weights,
                bias: c.grad_bias,
            },
            c.grad_input,
        ))
    }
}

/// Sequential composition of every dense lens.
pub fn network_forward(
    spec: &NetworkSpec,
    params: &[DenseParams],
    x: &[f64],
) -> Result<(Vector, ForwardTape)> {
    spec.check_params(params)?;
    let mut layers = Vec::with_capacity(params.len());
    let mut current = x.to_vec();
    for (k, p) in params.iter().enumerate() {
        let (a, record) = Dense(spec.activation(k)).play(p, &current)?;
        layers.push(record);
        current = a;
    }
    Ok((
        current.clone(),
        ForwardTape {
            layers,
            output: current,
        },
    ))
}

/// Output only, without keeping a tape.
pub fn predict(spec: &NetworkSpec, params: &[DenseParams], x: &[f64]) -> Result<Vector> {
    spec.check_params(params)?;
    let mut current = x.to_vec();
    for (k, p) in params.iter().enumerate() {
        current = dense_play(p, &current, spec.activation(k))?.1;
    }
    Ok(current)
}

/// Backpropagation through the tape, last layer first, with optional
/// per-neuron gating of every layer's incoming activation gradient.
pub fn network_backward(
    spec: &NetworkSpec,
    params: &[DenseParams],
    tape: &ForwardTape,
    grad_output: &[f64],
    masks: Option<&GradMaskPlan>,
) -> Result<Vec<DenseParams>> {
    let mut grads = spec.zero_params();
    accumulate_backward(spec, params, tape, grad_output, masks, &mut grads, 1.0)?;
    Ok(grads)
}

/// As [`network_backward`], adding `scale ×` the gradients into `grads`.
pub fn accumulate_backward(
    spec: &NetworkSpec,
    params: &[DenseParams],
    tape: &ForwardTape,
    grad_output: &[f64],
    masks: Option<&GradMaskPlan>,
    grads: &mut [DenseParams],
    scale: f64,
) -> Result<()> {
    spec.check_params(params)?;
    spec.check_params(grads)?;
    if tape.layers.len() != params.len() {
        return Err(config(format!(
            "tape has {} layers, network {}",
            tape.layers.len(),
            params.len()
        )));
    }
    if let Some(plan) = masks {
        plan.check_layout(spec)?;
    }
    let mut grad_a = grad_output.to_vec();
    for k in (0..params.len()).rev() {
        let record = &tape.layers[k];
        check_coplay_dims(&params[k], &record.input, &record.z, &grad_a)?;
        let mask = masks.map(|m| m.layer(k));
        grad_a = coplay_into(
            &params[k],
            &record.input,
            &record.z,
            &grad_a,
            spec.activation(k),
            mask,
            &mut grads[k],
            scale,
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(rows: &[Vec<f64>], bias: &[f64]) -> DenseParams {
        DenseParams::new(Matrix::from_rows(rows).unwrap(), bias.to_vec()).unwrap()
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu(&[-1.0, 0.0, 3.0]), vec![0.0, 0.0, 3.0]);
        assert_eq!(relu(&[0.0; 4]), vec![0.0; 4]);
        assert_eq!(relu(&[2.5]), vec![2.5]);
    }

    #[test]
    fn dense_play_examples() {
        let p = DenseParams::new(Matrix::identity(2), vec![0.0, 0.0]).unwrap();
        let (z, a) = dense_play(&p, &[2.0, -3.0], Activation::Relu).unwrap();
        assert_eq!(z, vec![2.0, -3.0]);
        assert_eq!(a, vec![2.0, 0.0]);

        let p = layer(&[vec![1.0, 1.0]], &[0.5]);
        let (z, a) = dense_play(&p, &[1.0, 1.0], Activation::Identity).unwrap();
        assert_eq!(z, vec![2.5]);
        assert_eq!(a, vec![2.5]);

        let p = layer(&[vec![0.3, -1.2, 4.0], vec![2.0, 0.1, -0.7]], &[0.0, 0.0]);
        let (z, a) = dense_play(&p, &[0.0; 3], Activation::Relu).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        assert_eq!(a, vec![0.0, 0.0]);
    }

    #[test]
    fn dense_play_rejects_wrong_input() {
        let p = DenseParams::zeros(2, 3);
        assert!(matches!(
            dense_play(&p, &[1.0], Activation::Relu),
            Err(crate::Error::Config(_))
        ));
    }

    #[test]
    fn dense_coplay_examples() {
        let p = DenseParams::new(Matrix::identity(2), vec![0.0, 0.0]).unwrap();
        let c = dense_coplay(&p, &[1.0, 1.0], &[1.0, -1.0], &[1.0, 1.0], Activation::Relu).unwrap();
        assert_eq!(c.grad_bias, vec![1.0, 0.0]);
        assert_eq!(c.grad_weights, Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap());
        assert_eq!(c.grad_input, vec![1.0, 0.0]);

        let p = layer(&[vec![0.5, -2.0], vec![1.5, 0.25]], &[0.1, -0.3]);
        let c = dense_coplay(&p, &[0.7, -1.1], &[0.2, 0.9], &[0.0, 0.0], Activation::Relu).unwrap();
        assert!(c.grad_weights.as_slice().iter().all(|&v| v == 0.0));
        assert!(c.grad_bias.iter().chain(&c.grad_input).all(|&v| v == 0.0));
    }

    #[test]
    fn dense_coplay_rejects_wrong_gradient() {
        let p = DenseParams::zeros(2, 2);
        assert!(dense_coplay(&p, &[0.0, 0.0], &[0.0, 0.0], &[1.0], Activation::Relu).is_err());
    }

    #[test]
    fn relu_coplay_zeroes_nonpositive_preactivations() {
        let p = DenseParams::new(Matrix::identity(4), vec![0.0; 4]).unwrap();
        let z = [0.0, -2.0, 1e-300, 3.0];
        let c = dense_coplay(&p, &[1.0; 4], &z, &[1.0; 4], Activation::Relu).unwrap();
        assert_eq!(c.grad_bias, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), (0.0, vec![0.0, 0.0]));
        assert_eq!(mse_loss(&[3.0], &[1.0]).unwrap(), (4.0, vec![4.0]));
        assert_eq!(mse_loss(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), (1.0, vec![1.0, -1.0]));
        assert!(matches!(mse_loss(&[], &[]), Err(crate::Error::Usage(_))));
    }

    #[test]
    fn cross_entropy_examples() {
        for k in [2usize, 3, 7] {
            let (loss, _) = softmax_cross_entropy(&vec![0.4; k], 1).unwrap();
            assert!((loss - (k as f64).ln()).abs() < 1e-12);
        }
        let (loss, grad) = softmax_cross_entropy(&[1000.0, 0.0], 0).unwrap();
        assert!(loss.abs() < 1e-12 && loss.is_finite());
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
        let (_, grad) = softmax_cross_entropy(&[0.0, 0.0], 1).unwrap();
        assert_eq!(grad, vec![0.5, -0.5]);
        assert!(matches!(
            softmax_cross_entropy(&[0.0, 0.0], 2),
            Err(crate::Error::Usage(_))
        ));
    }

    #[test]
    fn network_forward_examples() {
        let spec = NetworkSpec::for_task(3, Task::Regression).with_hidden(2, 4);
        let params = spec.zero_params();
        let (out, tape) = network_forward(&spec, &params, &[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(out, vec![0.0]);
        assert_eq!(tape.layers.len(), 3);

        let spec = NetworkSpec::for_task(2, Task::Regression).with_hidden(0, 0);
        let params = vec![layer(&[vec![1.0, 1.0]], &[0.5])];
        let (out, _) = network_forward(&spec, &params, &[1.0, 1.0]).unwrap();
        let (_, a) = dense_play(&params[0], &[1.0, 1.0], Activation::Identity).unwrap();
        assert_eq!(out, a);

        // two layers evaluated by hand
        let spec = NetworkSpec::for_task(2, Task::Regression).with_hidden(1, 2);
        let params = vec![
            layer(&[vec![1.0, -1.0], vec![0.5, 2.0]], &[0.0, -1.0]),
            layer(&[vec![3.0, -1.0]], &[0.25]),
        ];
        let x = [2.0, 1.0];
        // hidden z = [1, 2], relu = [1, 2]; out = 3 - 2 + 0.25
        let (out, tape) = network_forward(&spec, &params, &x).unwrap();
        assert_eq!(out, vec![1.25]);
        assert_eq!(tape.layers[1].input, vec![1.0, 2.0]);
        assert_eq!(predict(&spec, &params, &x).unwrap(), out);
    }

    #[test]
    fn network_forward_rejects_layout_mismatch() {
        let spec = NetworkSpec::for_task(2, Task::Regression).with_hidden(1, 3);
        let bad = vec![DenseParams::zeros(3, 2)];
        assert!(matches!(
            network_forward(&spec, &bad, &[0.0, 0.0]),
            Err(crate::Error::Config(_))
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(NetworkSpec::for_task(4, Task::Regression).validate().is_ok());
        assert!(NetworkSpec::for_task(4, Task::Classification { classes: 3 }).validate().is_ok());
        let mut s = NetworkSpec::for_task(4, Task::Regression);
        s.output_dim = 2;
        assert!(s.validate().is_err());
        assert!(NetworkSpec::for_task(0, Task::Regression).validate().is_err());
    }

    #[test]
    fn glorot_within_limits() {
        let mut rng = Rng::new(3);
        let p = DenseParams::glorot(10, 20, &mut rng);
        let limit = (6.0f64 / 30.0).sqrt();
        assert!(p.weights.as_slice().iter().all(|w| w.abs() <= limit));
        assert!(p.bias.iter().all(|&b| b == 0.0));
    }
}
