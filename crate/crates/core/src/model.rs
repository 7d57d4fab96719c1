//! Feedforward classifier trained with class-weighted cross entropy and Adam.
//!
//! Parameters live in one flat vector. Each dense layer stores its weights
//! row-major as `in x out` (`w[i * out + o]`) followed by `out` biases.
//! Hidden layers are affine -> ReLU -> inverted dropout (training only); the
//! output layer is affine -> softmax.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Dense row-major matrix of f64.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "matrix data",
                left: data.len(),
                right: rows * cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::LengthMismatch {
                    what: "matrix row",
                    left: row.len(),
                    right: cols,
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

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

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if self.rows == 0 && self.cols == 0 {
            self.cols = row.len();
        }
        if row.len() != self.cols {
            return Err(Error::LengthMismatch {
                what: "matrix row",
                left: row.len(),
                right: self.cols,
            });
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerLayout {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub dropout_rate: f64,
}

impl LayerLayout {
    pub const DEFAULT_HIDDEN: [usize; 3] = [64, 32, 16];
    pub const DEFAULT_DROPOUT: f64 = 0.2;

    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: Self::DEFAULT_HIDDEN.to_vec(),
            output_dim,
            dropout_rate: Self::DEFAULT_DROPOUT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::config("model.hidden", "all layer widths must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("model.dropout", "dropout must be in [0, 1)"));
        }
        Ok(())
    }

    /// (fan_in, fan_out) for every dense layer, input to output.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    values: Vec<f64>,
    layout: LayerLayout,
}

impl ModelParams {
    pub fn from_vec(layout: LayerLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.param_count() {
            return Err(Error::LengthMismatch {
                what: "parameter vector vs layout",
                left: values.len(),
                right: layout.param_count(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(layout: LayerLayout) -> Self {
        let values = vec![0.0; layout.param_count()];
        Self { values, layout }
    }

    pub fn layout(&self) -> &LayerLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Little-endian dump: u32 layer count, u32 dims (input, hidden..., output),
    /// f64 dropout, u64 parameter count, then the f64 parameters.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let mut dims = vec![self.layout.input_dim];
        dims.extend_from_slice(&self.layout.hidden_dims);
        dims.push(self.layout.output_dim);
        out.write_all(&(dims.len() as u32).to_le_bytes())?;
        for d in dims {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        out.write_all(&self.layout.dropout_rate.to_le_bytes())?;
        out.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self> {
        fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
            let mut buf = [0u8; N];
            r.read_exact(&mut buf)
                .map_err(|e| Error::Checkpoint(format!("truncated: {e}")))?;
            Ok(buf)
        }
        let n_dims = u32::from_le_bytes(take(&mut input)?) as usize;
        if n_dims < 2 {
            return Err(Error::Checkpoint(format!("{n_dims} layer dims")));
        }
        let dims = (0..n_dims)
            .map(|_| take::<4, _>(&mut input).map(|b| u32::from_le_bytes(b) as usize))
            .collect::<Result<Vec<_>>>()?;
        let dropout_rate = f64::from_le_bytes(take(&mut input)?);
        let layout = LayerLayout {
            input_dim: dims[0],
            hidden_dims: dims[1..n_dims - 1].to_vec(),
            output_dim: dims[n_dims - 1],
            dropout_rate,
        };
        let count = u64::from_le_bytes(take(&mut input)?) as usize;
        if count != layout.param_count() {
            return Err(Error::Checkpoint(format!(
                "header declares {count} parameters, layout needs {}",
                layout.param_count()
            )));
        }
        let values = (0..count)
            .map(|_| take::<8, _>(&mut input).map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        Self::from_vec(layout, values)
    }
}

/// Scaled-uniform (Glorot) weights, zero biases.
pub fn init_model(layout: &LayerLayout, rng: &mut SimRng) -> Result<ModelParams> {
    layout.validate()?;
    let mut values = Vec::with_capacity(layout.param_count());
    for (fan_in, fan_out) in layout.layers() {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        values.extend((0..fan_in * fan_out).map(|_| dist.sample(rng)));
        values.extend(std::iter::repeat_n(0.0, fan_out));
    }
    Ok(ModelParams {
        values,
        layout: layout.clone(),
    })
}

/// Activations kept for backpropagation.
struct Trace {
    /// Input to each layer (index 0 = batch input).
    inputs: Vec<Vec<f64>>,
    /// Per hidden layer: derivative of the layer output w.r.t. its pre-activation
    /// (ReLU gate times dropout scale), 0 where the unit is inactive or dropped.
    gates: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

fn check_width(params: &ModelParams, batch: &Matrix) -> Result<()> {
    if batch.cols() != params.layout.input_dim {
        return Err(Error::DimensionMismatch {
            expected: params.layout.input_dim,
            got: batch.cols(),
        });
    }
    Ok(())
}

fn affine(input: &[f64], rows: usize, fan_in: usize, fan_out: usize, layer: &[f64]) -> Vec<f64> {
    let (w, b) = layer.split_at(fan_in * fan_out);
    let mut out = Vec::with_capacity(rows * fan_out);
    for r in 0..rows {
        out.extend_from_slice(b);
        let z = &mut out[r * fan_out..];
        for (i, &a) in input[r * fan_in..(r + 1) * fan_in].iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (zo, &wo) in z.iter_mut().zip(&w[i * fan_out..(i + 1) * fan_out]) {
                *zo += a * wo;
            }
        }
    }
    out
}

fn softmax_rows(logits: &mut [f64], width: usize) {
    for row in logits.chunks_mut(width) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

fn run_forward(params: &ModelParams, batch: &Matrix, mut dropout: Option<&mut SimRng>) -> Trace {
    let layout = &params.layout;
    let rows = batch.rows();
    let layers = layout.layers();
    let keep = 1.0 - layout.dropout_rate;
    let mut offset = 0;
    let mut inputs = vec![batch.as_slice().to_vec()];
    let mut gates = Vec::with_capacity(layers.len() - 1);
    let mut probs = Vec::new();
    for (l, &(fan_in, fan_out)) in layers.iter().enumerate() {
        let size = fan_in * fan_out + fan_out;
        let layer = &params.values[offset..offset + size];
        offset += size;
        let mut z = affine(inputs.last().expect("input"), rows, fan_in, fan_out, layer);
        if l + 1 == layers.len() {
            softmax_rows(&mut z, fan_out);
            probs = z;
        } else {
            let mut gate = vec![0.0; z.len()];
            for (v, g) in z.iter_mut().zip(gate.iter_mut()) {
                let scale = match dropout.as_deref_mut() {
                    Some(rng) if layout.dropout_rate > 0.0 => {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    }
                    _ => 1.0,
                };
                if *v > 0.0 {
                    *g = scale;
                    *v *= scale;
                } else {
                    *v = 0.0;
                }
            }
            gates.push(gate);
            inputs.push(z);
        }
    }
    Trace {
        inputs,
        gates,
        probs,
    }
}

/// Class probabilities, one row per sample. `rng` enables dropout in train mode.
pub fn forward(
    params: &ModelParams,
    batch: &Matrix,
    train_mode: bool,
    rng: Option<&mut SimRng>,
) -> Result<Matrix> {
    check_width(params, batch)?;
    let rng = if train_mode { rng } else { None };
    let trace = run_forward(params, batch, rng);
    Matrix::new(batch.rows(), params.layout.output_dim, trace.probs)
}

/// Argmax of the eval-mode forward pass; ties go to the lowest class index.
pub fn predict(params: &ModelParams, batch: &Matrix) -> Result<Vec<usize>> {
    let probs = forward(params, batch, false, None)?;
    Ok(probs
        .iter_rows()
        .map(|row| {
            let mut best = 0;
            for (c, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}

fn backward(
    params: &ModelParams,
    trace: &Trace,
    labels: &[usize],
    class_weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let layout = &params.layout;
    let k = layout.output_dim;
    let rows = labels.len();
    let scale = 1.0 / rows as f64;

    let mut loss = 0.0;
    let mut delta = trace.probs.clone();
    for (r, &y) in labels.iter().enumerate() {
        let w = class_weights[y];
        loss -= w * trace.probs[r * k + y].max(f64::MIN_POSITIVE).ln();
        let row = &mut delta[r * k..(r + 1) * k];
        row[y] -= 1.0;
        for d in row.iter_mut() {
            *d *= w * scale;
        }
    }
    loss *= scale;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }

    let layers = layout.layers();
    let mut grad = vec![0.0; params.values.len()];
    let mut offsets = Vec::with_capacity(layers.len());
    let mut offset = 0;
    for &(i, o) in &layers {
        offsets.push(offset);
        offset += i * o + o;
    }

    for l in (0..layers.len()).rev() {
        let (fan_in, fan_out) = layers[l];
        let base = offsets[l];
        let input = &trace.inputs[l];
        {
            let (gw, gb) = grad[base..base + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            for r in 0..rows {
                let d = &delta[r * fan_out..(r + 1) * fan_out];
                for (b, &dv) in gb.iter_mut().zip(d) {
                    *b += dv;
                }
                for (i, &a) in input[r * fan_in..(r + 1) * fan_in].iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for (g, &dv) in gw[i * fan_out..(i + 1) * fan_out].iter_mut().zip(d) {
                        *g += a * dv;
                    }
                }
            }
        }
        if l == 0 {
            break;
        }
        let w = &params.values[base..base + fan_in * fan_out];
        let gate = &trace.gates[l - 1];
        let mut prev = vec![0.0; rows * fan_in];
        for r in 0..rows {
            let d = &delta[r * fan_out..(r + 1) * fan_out];
            for i in 0..fan_in {
                let g = gate[r * fan_in + i];
                if g == 0.0 {
                    continue;
                }
                let dot: f64 = w[i * fan_out..(i + 1) * fan_out]
                    .iter()
                    .zip(d)
                    .map(|(a, b)| a * b)
                    .sum();
                prev[r * fan_in + i] = dot * g;
            }
        }
        delta = prev;
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    Ok((loss, grad))
}

fn check_labels(params: &ModelParams, batch: &Matrix, labels: &[usize], class_weights: &[f64]) -> Result<()> {
    check_width(params, batch)?;
    let k = params.layout.output_dim;
    if labels.len() != batch.rows() {
        return Err(Error::LengthMismatch {
            what: "labels vs batch rows",
            left: labels.len(),
            right: batch.rows(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if class_weights.len() != k {
        return Err(Error::LengthMismatch {
            what: "class weights vs output classes",
            left: class_weights.len(),
            right: k,
        });
    }
    if let Some(&index) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::ClassOutOfRange { index, classes: k });
    }
    Ok(())
}

/// Weighted cross entropy and its gradient, dropout disabled.
pub fn loss_and_gradient(
    params: &ModelParams,
    batch: &Matrix,
    labels: &[usize],
    class_weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    check_labels(params, batch, labels, class_weights)?;
    let trace = run_forward(params, batch, None);
    backward(params, &trace, labels, class_weights)
}

/// Same as [`loss_and_gradient`] with dropout masks drawn from `rng`.
pub fn loss_and_gradient_train(
    params: &ModelParams,
    batch: &Matrix,
    labels: &[usize],
    class_weights: &[f64],
    rng: &mut SimRng,
) -> Result<(f64, Vec<f64>)> {
    check_labels(params, batch, labels, class_weights)?;
    let trace = run_forward(params, batch, Some(rng));
    backward(params, &trace, labels, class_weights)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub const DEFAULT_LR: f64 = 0.001;

    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam step, in place.
pub fn adam_step(state: &mut AdamState, params: &mut ModelParams, grad: &[f64]) -> Result<()> {
    if grad.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::LengthMismatch {
            what: "adam gradient/state vs parameters",
            left: grad.len().min(state.m.len()),
            right: params.len(),
        });
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    for (((p, m), v), &g) in params
        .values
        .iter_mut()
        .zip(&mut state.m)
        .zip(&mut state.v)
        .zip(grad)
    {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Inverse label frequency, normalized to mean 1 over the classes present.
/// Absent classes get weight 0.
pub fn class_weights(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &y in labels {
        counts[y] += 1;
    }
    let mut weights: Vec<f64> = counts
        .iter()
        .map(|&c| if c > 0 { 1.0 / c as f64 } else { 0.0 })
        .collect();
    let present = counts.iter().filter(|&&c| c > 0).count();
    let mean = weights.iter().sum::<f64>() / present.max(1) as f64;
    if mean > 0.0 {
        for w in &mut weights {
            *w /= mean;
        }
    }
    weights
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 16,
            lr: AdamState::DEFAULT_LR,
        }
    }
}

/// Shuffled mini-batch Adam from a fresh optimizer state.
pub fn train_local(
    params: &ModelParams,
    features: &Matrix,
    labels: &[usize],
    options: &TrainOptions,
    rng: &mut SimRng,
) -> Result<ModelParams> {
    if labels.is_empty() {
        return Err(Error::Empty("client training shard"));
    }
    check_width(params, features)?;
    let mut out = params.clone();
    if options.epochs == 0 {
        return Ok(out);
    }
    let weights = class_weights(labels, params.layout.output_dim);
    let mut adam = AdamState::new(out.len(), options.lr);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    for _ in 0..options.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(options.batch_size.max(1)) {
            let batch = features.select_rows(chunk);
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (_, grad) = loss_and_gradient_train(&out, &batch, &batch_labels, &weights, rng)?;
            adam_step(&mut adam, &mut out, &grad)?;
        }
    }
    Ok(out)
}
