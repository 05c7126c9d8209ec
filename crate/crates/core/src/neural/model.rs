//! Fully connected regressor with a flat parameter vector.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::descriptor::Grid;
use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Hidden widths of the deployed network.
pub const HIDDEN_SIZES: [usize; 5] = [50, 50, 70, 70, 50];

/// Layer sizes for two input streams on `grid` and a target-grid output.
pub fn default_layer_sizes(grid: Grid) -> Vec<usize> {
    let mut sizes = vec![2 * grid.feature_len()];
    sizes.extend_from_slice(&HIDDEN_SIZES);
    sizes.push(Grid::TARGET.feature_len());
    sizes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

/// Fixed per-feature affine maps around the trainable layers:
/// the network sees `(x - in_shift) / in_scale` and emits `y · out_scale + out_shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub in_shift: Vec<f64>,
    pub in_scale: Vec<f64>,
    pub out_shift: Vec<f64>,
    pub out_scale: Vec<f64>,
}

impl Standardization {
    pub fn identity(n_in: usize, n_out: usize) -> Self {
        Standardization {
            in_shift: vec![0.0; n_in],
            in_scale: vec![1.0; n_in],
            out_shift: vec![0.0; n_out],
            out_scale: vec![1.0; n_out],
        }
    }

    /// Column means and standard deviations of row-major data; constant
    /// columns get scale 1.
    pub fn fit(inputs: &[f64], n_in: usize, targets: &[f64], n_out: usize) -> Result<Self> {
        let (in_shift, in_scale) = column_stats(inputs, n_in)?;
        let (out_shift, out_scale) = column_stats(targets, n_out)?;
        Ok(Standardization {
            in_shift,
            in_scale,
            out_shift,
            out_scale,
        })
    }

    fn check(&self, n_in: usize, n_out: usize) -> Result<()> {
        if self.in_shift.len() != n_in || self.in_scale.len() != n_in {
            return Err(Error::shape(n_in, self.in_shift.len()));
        }
        if self.out_shift.len() != n_out || self.out_scale.len() != n_out {
            return Err(Error::shape(n_out, self.out_shift.len()));
        }
        let all = self.in_shift.iter().chain(&self.in_scale).chain(&self.out_shift).chain(&self.out_scale);
        if all.clone().any(|v| !v.is_finite()) || self.in_scale.iter().chain(&self.out_scale).any(|s| *s <= 0.0) {
            return Err(Error::structural("standardization needs finite shifts and positive scales"));
        }
        Ok(())
    }
}

fn column_stats(data: &[f64], width: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if width == 0 || data.is_empty() || data.len() % width != 0 {
        return Err(Error::shape(width, data.len()));
    }
    let n = (data.len() / width) as f64;
    let mut mean = vec![0.0; width];
    for row in data.chunks_exact(width) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; width];
    for row in data.chunks_exact(width) {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let sd = var
        .iter()
        .map(|v| {
            let s = libm::sqrt(v / n);
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    Ok((mean, sd))
}

/// Multilayer perceptron. Layer `l` stores its weights input-major
/// (`w[i * n_out + j]` connects input `i` to output `j`) followed by its biases,
/// all packed into one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
    input_grid: Option<Grid>,
    output_grid: Grid,
    standardization: Standardization,
}

/// Number of parameters for the given layer sizes.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::structural(format!(
            "layer sizes {layer_sizes:?} need at least two positive entries"
        )));
    }
    Ok(())
}

/// He-uniform weights `U(-√(6/fan_in), √(6/fan_in))`, zero biases.
pub fn init_model(layer_sizes: &[usize], seed: u64) -> Result<MlpModel> {
    check_sizes(layer_sizes)?;
    let mut rng = SeedStream::new(seed).rng(0);
    let mut params = Vec::with_capacity(param_count(layer_sizes));
    for w in layer_sizes.windows(2) {
        let bound = libm::sqrt(6.0 / w[0] as f64);
        for _ in 0..w[0] * w[1] {
            params.push(rng.random_range(-bound..bound));
        }
        params.extend(core::iter::repeat_n(0.0, w[1]));
    }
    MlpModel::from_params(layer_sizes.to_vec(), params)
}

impl MlpModel {
    /// Model with explicit parameters, no grid tags and identity standardization.
    pub fn from_params(layer_sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        check_sizes(&layer_sizes)?;
        let expected = param_count(&layer_sizes);
        if params.len() != expected {
            return Err(Error::shape(expected, params.len()));
        }
        let n_in = layer_sizes[0];
        let n_out = *layer_sizes.last().unwrap_or(&0);
        Ok(MlpModel {
            standardization: Standardization::identity(n_in, n_out),
            layer_sizes,
            activation: Activation::Relu,
            params,
            input_grid: None,
            output_grid: Grid::TARGET,
        })
    }

    /// Reassembles a model from persisted parts, re-checking every invariant.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        activation: Activation,
        params: Vec<f64>,
        input_grid: Option<Grid>,
        output_grid: Grid,
        standardization: Standardization,
    ) -> Result<Self> {
        let mut m = Self::from_params(layer_sizes, params)?;
        m.activation = activation;
        m.with_grids(input_grid, output_grid)?;
        m.set_standardization(standardization)?;
        Ok(m)
    }

    /// Tags the model with its input and output grids.
    pub fn with_grids(&mut self, input_grid: Option<Grid>, output_grid: Grid) -> Result<()> {
        if let Some(g) = input_grid {
            if 2 * g.feature_len() != self.n_in() {
                return Err(Error::shape(self.n_in(), 2 * g.feature_len()));
            }
        }
        if output_grid.feature_len() != self.n_out() {
            return Err(Error::shape(self.n_out(), output_grid.feature_len()));
        }
        self.input_grid = input_grid;
        self.output_grid = output_grid;
        Ok(())
    }

    pub fn set_standardization(&mut self, s: Standardization) -> Result<()> {
        s.check(self.n_in(), self.n_out())?;
        self.standardization = s;
        Ok(())
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_grid(&self) -> Option<Grid> {
        self.input_grid
    }

    pub fn output_grid(&self) -> Grid {
        self.output_grid
    }

    pub fn n_in(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_out(&self) -> usize {
        self.layer_sizes[self.layer_sizes.len() - 1]
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offset of layer `l`'s weight block in the parameter vector.
    pub(crate) fn layer_offset(&self, l: usize) -> usize {
        param_count(&self.layer_sizes[..=l])
    }

    /// Weights and biases of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        let off = self.layer_offset(l);
        let (w, rest) = self.params[off..].split_at(n_in * n_out);
        (w, &rest[..n_out])
    }

    pub(crate) fn normalize_input(&self, x: &[f64], out: &mut [f64]) {
        let s = &self.standardization;
        for (((o, v), m), d) in out.iter_mut().zip(x).zip(&s.in_shift).zip(&s.in_scale) {
            *o = (v - m) / d;
        }
    }

    pub(crate) fn denormalize_output(&self, y: &mut [f64]) {
        let s = &self.standardization;
        for ((v, m), d) in y.iter_mut().zip(&s.out_shift).zip(&s.out_scale) {
            *v = *v * d + m;
        }
    }

    /// Output for one input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_in() {
            return Err(Error::shape(self.n_in(), x.len()));
        }
        let mut scratch = ForwardScratch::new(self);
        let mut out = vec![0.0; self.n_out()];
        self.forward_into(x, &mut scratch, &mut out);
        Ok(out)
    }

    /// Outputs for row-major inputs; row `r` is bit-identical to `forward(row r)`.
    pub fn forward_batch(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let n_in = self.n_in();
        if inputs.len() % n_in != 0 {
            return Err(Error::shape(n_in, inputs.len() % n_in));
        }
        let rows = inputs.len() / n_in;
        let n_out = self.n_out();
        let mut out = vec![0.0; rows * n_out];
        let mut scratch = ForwardScratch::new(self);
        for (x, y) in inputs.chunks_exact(n_in).zip(out.chunks_exact_mut(n_out)) {
            self.forward_into(x, &mut scratch, y);
        }
        Ok(out)
    }

    pub(crate) fn forward_into(&self, x: &[f64], scratch: &mut ForwardScratch, out: &mut [f64]) {
        let ForwardScratch { a, b } = scratch;
        a.resize(self.n_in(), 0.0);
        self.normalize_input(x, a);
        let last = self.n_layers() - 1;
        for l in 0..=last {
            let (w, bias) = self.layer(l);
            affine(w, bias, a, b);
            if l < last {
                relu(b);
            }
            core::mem::swap(a, b);
        }
        out.copy_from_slice(a);
        self.denormalize_output(out);
    }
}

/// Reusable activation buffers.
pub(crate) struct ForwardScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl ForwardScratch {
    pub(crate) fn new(model: &MlpModel) -> Self {
        let widest = model.layer_sizes.iter().copied().max().unwrap_or(0);
        ForwardScratch {
            a: Vec::with_capacity(widest),
            b: Vec::with_capacity(widest),
        }
    }
}

/// `z = b + Σ_i h_i w[i, :]`, summed in increasing `i`.
#[inline]
pub(crate) fn affine(w: &[f64], bias: &[f64], h: &[f64], z: &mut Vec<f64>) {
    let n_out = bias.len();
    z.clear();
    z.extend_from_slice(bias);
    for (hi, row) in h.iter().zip(w.chunks_exact(n_out)) {
        for (zj, wij) in z.iter_mut().zip(row) {
            *zj += wij * hi;
        }
    }
}

#[inline]
pub(crate) fn relu(z: &mut [f64]) {
    for v in z {
        if !(*v > 0.0) {
            *v = 0.0;
        }
    }
}
