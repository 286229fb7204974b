//! Small fully connected networks with exact reverse-mode products.
//!
//! Parameters live in one flat [`ParamVector`]. Layers are packed in order;
//! within a layer the weight matrix comes first (row-major, one row per
//! output unit, so `W[o][i]` sits at `o * fan_in + i`) followed by the bias.
//! Hidden layers use `tanh`, the output layer is affine.

use std::ops::{Deref, DerefMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    TanhHiddenIdentityOutput,
}

/// Layer widths of a multilayer perceptron, input first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

/// Flat trainable parameters of one or more networks.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            activation: Activation::TanhHiddenIdentityOutput,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `input -> hidden x depth -> output`.
    pub fn with_hidden(input: usize, hidden: usize, depth: usize, output: usize) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat_n(hidden, depth));
        sizes.push(output);
        Self::new(sizes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 3 {
            return Err(Error::Config(format!(
                "an MLP needs at least one hidden layer, got layer sizes {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive, got {:?}",
                self.layer_sizes
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    fn layers(&self) -> impl DoubleEndedIterator<Item = (usize, usize)> + ExactSizeIterator + '_ {
        self.layer_sizes.windows(2).map(|w| (w[0], w[1]))
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters for layers {:?}, got {}",
                self.num_params(),
                self.layer_sizes,
                params.len()
            )));
        }
        Ok(())
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(&self, seed: u64) -> Result<ParamVector> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(self.num_params());
        for (fan_in, fan_out) in self.layers() {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-a..a)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(ParamVector(params))
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network input has width {}, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        let mut out = vec![0.0; self.output_dim()];
        self.forward_into(params, input, &mut out);
        Ok(out)
    }

    /// Unchecked forward pass writing into `out`.
    pub fn forward_into(&self, params: &[f64], input: &[f64], out: &mut [f64]) {
        let n_layers = self.layer_sizes.len() - 1;
        let mut act = input.to_vec();
        let mut next = Vec::new();
        let mut offset = 0;
        for (l, (fan_in, fan_out)) in self.layers().enumerate() {
            let w = &params[offset..offset + fan_in * fan_out];
            let b = &params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            offset += (fan_in + 1) * fan_out;
            next.clear();
            next.extend(
                w.chunks_exact(fan_in)
                    .zip(b)
                    .map(|(row, bias)| bias + dot(row, &act)),
            );
            if l + 1 < n_layers {
                next.iter_mut().for_each(|z| *z = z.tanh());
            }
            std::mem::swap(&mut act, &mut next);
        }
        out.copy_from_slice(&act);
    }

    pub fn vjp(
        &self,
        params: &[f64],
        input: &[f64],
        cotangent: &[f64],
    ) -> Result<(ParamVector, Vec<f64>)> {
        self.check_params(params)?;
        if input.len() != self.input_dim() || cotangent.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "vjp expects input width {} and cotangent width {}, got {} and {}",
                self.input_dim(),
                self.output_dim(),
                input.len(),
                cotangent.len()
            )));
        }
        let mut param_grad = ParamVector::zeros(params.len());
        let mut input_grad = vec![0.0; input.len()];
        self.vjp_accumulate(params, input, cotangent, &mut param_grad, &mut input_grad);
        Ok((param_grad, input_grad))
    }

    /// Unchecked reverse-mode product. Adds `cotangentᵀ ∂out/∂params` into
    /// `param_grad` and `cotangentᵀ ∂out/∂input` into `input_grad`.
    pub fn vjp_accumulate(
        &self,
        params: &[f64],
        input: &[f64],
        cotangent: &[f64],
        param_grad: &mut [f64],
        input_grad: &mut [f64],
    ) {
        let n_layers = self.layer_sizes.len() - 1;
        // Post-activation outputs of every layer, input included.
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(input.to_vec());
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for (l, (fan_in, fan_out)) in self.layers().enumerate() {
            offsets.push(offset);
            let w = &params[offset..offset + fan_in * fan_out];
            let b = &params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            offset += (fan_in + 1) * fan_out;
            let prev = &acts[l];
            let mut z: Vec<f64> = w
                .chunks_exact(fan_in)
                .zip(b)
                .map(|(row, bias)| bias + dot(row, prev))
                .collect();
            if l + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }

        let mut delta = cotangent.to_vec();
        for (l, (fan_in, fan_out)) in self.layers().enumerate().rev() {
            if l + 1 < n_layers {
                // tanh' = 1 - tanh^2
                for (d, a) in delta.iter_mut().zip(&acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let off = offsets[l];
            let prev = &acts[l];
            let (gw, gb) = param_grad[off..off + (fan_in + 1) * fan_out].split_at_mut(fan_in * fan_out);
            for ((grow, gbias), d) in gw.chunks_exact_mut(fan_in).zip(gb.iter_mut()).zip(&delta) {
                *gbias += d;
                for (g, p) in grow.iter_mut().zip(prev) {
                    *g += d * p;
                }
            }
            let w = &params[off..off + fan_in * fan_out];
            let mut back = vec![0.0; fan_in];
            for (row, d) in w.chunks_exact(fan_in).zip(&delta) {
                for (bk, wv) in back.iter_mut().zip(row) {
                    *bk += d * wv;
                }
            }
            delta = back;
        }
        for (g, d) in input_grad.iter_mut().zip(&delta) {
            *g += d;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mlp_init(spec: &MlpSpec, seed: u64) -> Result<ParamVector> {
    spec.init(seed)
}

pub fn mlp_forward(spec: &MlpSpec, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
    spec.forward(params, input)
}

pub fn mlp_vjp(
    spec: &MlpSpec,
    params: &ParamVector,
    input: &[f64],
    cotangent: &[f64],
) -> Result<(ParamVector, Vec<f64>)> {
    spec.vjp(params, input, cotangent)
}

/// On-disk form of a single network: layer sizes followed by packed parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
}

impl MlpCheckpoint {
    pub fn new(spec: &MlpSpec, params: &[f64]) -> Result<Self> {
        spec.check_params(params)?;
        Ok(Self {
            layer_sizes: spec.layer_sizes.clone(),
            params: params.to_vec(),
        })
    }

    pub fn into_parts(self) -> Result<(MlpSpec, ParamVector)> {
        let spec = MlpSpec::new(self.layer_sizes)?;
        spec.check_params(&self.params)?;
        if self.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("checkpoint contains non-finite parameters".into()));
        }
        Ok((spec, ParamVector(self.params)))
    }
}
