//! The coordinate network `(x, y, t) -> u`.
//!
//! A plain fully connected stack: `layer_count` affine layers, `tanh` after
//! every layer but the last. Inputs are the coordinates produced by
//! [`crate::field::GridSpec::network_input`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INPUT_DIM: usize = 3;
pub const OUTPUT_DIM: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub layer_count: usize,
    pub hidden_width: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            layer_count: 5,
            hidden_width: 200,
        }
    }
}

impl MlpConfig {
    pub fn new(layer_count: usize, hidden_width: usize) -> Result<Self> {
        let config = Self {
            layer_count,
            hidden_width,
        };
        config.validate()?;
        Ok(config)
    }

    /// Three layers of width 16, used by tests and oracles.
    pub fn toy() -> Self {
        Self {
            layer_count: 3,
            hidden_width: 16,
        }
    }

    /// Five layers of width 64, used by the desk-scale presets.
    pub fn desk() -> Self {
        Self {
            layer_count: 5,
            hidden_width: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_count < 2 {
            return Err(Error::Config(format!(
                "layer_count must be at least 2, got {}",
                self.layer_count
            )));
        }
        if self.hidden_width == 0 {
            return Err(Error::Config("hidden_width must be positive".into()));
        }
        Ok(())
    }

    /// `(fan_out, fan_in)` of every layer, first to last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        (0..self.layer_count)
            .map(|l| {
                let fan_in = if l == 0 { INPUT_DIM } else { self.hidden_width };
                let fan_out = if l + 1 == self.layer_count {
                    OUTPUT_DIM
                } else {
                    self.hidden_width
                };
                (fan_out, fan_in)
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(out, inp)| out * inp + out)
            .sum()
    }
}

/// One affine layer. `weights` is `fan_out x fan_in`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub fan_out: usize,
    pub fan_in: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(fan_out: usize, fan_in: usize) -> Self {
        Self {
            fan_out,
            fan_in,
            weights: vec![0.0; fan_out * fan_in],
            biases: vec![0.0; fan_out],
        }
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.fan_in + col]
    }
}

/// Network parameters θ.
///
/// The flat ordering used for gradients, the optimizer and checkpoints is
/// layer 1 weights (row-major), layer 1 biases, layer 2 weights, and so on.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub config: MlpConfig,
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn zeros(config: MlpConfig) -> Self {
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(out, inp)| Layer::zeros(out, inp))
            .collect();
        Self { config, layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Checks that every layer matches the declared architecture and that all
    /// entries are finite.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let shapes = self.config.layer_shapes();
        if shapes.len() != self.layers.len() {
            return Err(Error::Dimension(format!(
                "config declares {} layers, params hold {}",
                shapes.len(),
                self.layers.len()
            )));
        }
        for (l, (layer, &(out, inp))) in self.layers.iter().zip(&shapes).enumerate() {
            if layer.fan_out != out
                || layer.fan_in != inp
                || layer.weights.len() != out * inp
                || layer.biases.len() != out
            {
                return Err(Error::Dimension(format!(
                    "layer {} should be {out}x{inp}, found {}x{} ({} weights, {} biases)",
                    l + 1,
                    layer.fan_out,
                    layer.fan_in,
                    layer.weights.len(),
                    layer.biases.len()
                )));
            }
            if layer
                .weights
                .iter()
                .chain(&layer.biases)
                .any(|v| !v.is_finite())
            {
                return Err(Error::Config(format!("layer {} has non-finite entries", l + 1)));
            }
        }
        Ok(())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.biases);
        }
        flat
    }

    pub fn from_flat(config: MlpConfig, flat: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(config);
        if flat.len() != params.param_count() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                params.param_count(),
                flat.len()
            )));
        }
        params.assign_flat(flat);
        Ok(params)
    }

    /// Overwrites all parameters from a flat slice in gradient ordering.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = layer.biases.len();
            layer.biases.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
    }

    /// Mutable views of every parameter block in flat order.
    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
    }
}

/// He-normal weights (`std = sqrt(2 / fan_in)`) and zero biases.
pub fn init_params(config: MlpConfig, seed: u64) -> MlpParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = MlpParams::zeros(config);
    for layer in &mut params.layers {
        let std = (2.0 / layer.fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        for w in &mut layer.weights {
            *w = normal.sample(&mut rng);
        }
    }
    params
}

/// Evaluates the network at one point.
pub fn forward(params: &MlpParams, input: [f64; 3]) -> f64 {
    let mut activ: Vec<f64> = input.to_vec();
    let last = params.layers.len() - 1;
    for (l, layer) in params.layers.iter().enumerate() {
        let mut next = layer.biases.clone();
        for (row, out) in next.iter_mut().enumerate() {
            let w = &layer.weights[row * layer.fan_in..(row + 1) * layer.fan_in];
            *out += w.iter().zip(&activ).map(|(a, b)| a * b).sum::<f64>();
        }
        if l != last {
            next.iter_mut().for_each(|v| *v = v.tanh());
        }
        activ = next;
    }
    activ[0]
}
