//! Feed-forward binary classifier trained from scratch: ReLU hidden layers,
//! a logistic sigmoid output, binary cross-entropy loss with analytic
//! backpropagation, and the Adam update rule.
//!
//! Everything here is generic over [`Scalar`] so the same kernels run at
//! `f32` or `f64`; the pipeline instantiates `f64` (see crate-root aliases).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One dense layer; weights are row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct Layer<S: Scalar> {
    pub weights: Vec<S>,
    pub bias: Vec<S>,
}

/// Multi-layer perceptron with layer sizes `[D, h₁, …, 1]`: ReLU on hidden
/// layers, sigmoid on the scalar output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct Mlp<S: Scalar> {
    dims: Vec<usize>,
    layers: Vec<Layer<S>>,
}

fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        let e = (-z).exp();
        S::one() / (S::one() + e)
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::invalid(format!(
            "a network needs an input and an output layer, got dims {dims:?}"
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::invalid(format!("zero-width layer in dims {dims:?}")));
    }
    if *dims.last().expect("non-empty") != 1 {
        return Err(Error::invalid(format!(
            "output layer must have width 1, got dims {dims:?}"
        )));
    }
    Ok(())
}

impl<S: Scalar> Mlp<S> {
    /// Glorot-uniform initialization from a seeded RNG; biases start at zero.
    pub fn new_seeded(dims: &[usize], seed: u64) -> Result<Mlp<S>> {
        validate_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| S::from_f64_lossy(rng.gen_range(-limit..limit)))
                .collect();
            layers.push(Layer {
                weights,
                bias: vec![S::zero(); fan_out],
            });
        }
        Ok(Mlp {
            dims: dims.to_vec(),
            layers,
        })
    }

    /// All-zero parameters; the output is exactly σ(0) = 0.5 everywhere.
    pub fn zeroed(dims: &[usize]) -> Result<Mlp<S>> {
        validate_dims(dims)?;
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weights: vec![S::zero(); w[0] * w[1]],
                bias: vec![S::zero(); w[1]],
            })
            .collect();
        Ok(Mlp {
            dims: dims.to_vec(),
            layers,
        })
    }

    /// Rebuilds a network from persisted layer weights.
    pub fn from_parts(dims: Vec<usize>, layers: Vec<Layer<S>>) -> Result<Mlp<S>> {
        validate_dims(&dims)?;
        if layers.len() != dims.len() - 1 {
            return Err(Error::invalid(format!(
                "expected {} layers for dims {dims:?}, got {}",
                dims.len() - 1,
                layers.len()
            )));
        }
        for (i, (layer, w)) in layers.iter().zip(dims.windows(2)).enumerate() {
            if layer.weights.len() != w[0] * w[1] || layer.bias.len() != w[1] {
                return Err(Error::invalid(format!(
                    "layer {i} shape does not match dims {dims:?}"
                )));
            }
        }
        Ok(Mlp { dims, layers })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.dims
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Flattens parameters layer by layer: weights row-major, then bias.
    pub fn parameters(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    /// Overwrites parameters from a flat vector in [`Mlp::parameters`] order.
    pub fn set_parameters(&mut self, params: &[S]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                params.len()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    /// Predicted probability for one input; strictly inside (0,1).
    pub fn forward(&self, x: &[S]) -> Result<S> {
        if x.len() != self.dims[0] {
            return Err(Error::invalid(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.dims[0]
            )));
        }
        let mut current = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let out_dim = self.dims[l + 1];
            let in_dim = self.dims[l];
            let mut next = vec![S::zero(); out_dim];
            for o in 0..out_dim {
                let row = &layer.weights[o * in_dim..(o + 1) * in_dim];
                let mut z = layer.bias[o];
                for (w, a) in row.iter().zip(&current) {
                    z += *w * *a;
                }
                next[o] = if l == last { z } else { z.max(S::zero()) };
            }
            current = next;
        }
        let p = sigmoid(current[0]);
        // Keep the output strictly inside (0,1) even at saturation.
        Ok(p.max(S::min_positive_value()).min(S::one() - S::epsilon()))
    }

    /// Mean binary cross-entropy over a batch and its gradient, flattened in
    /// [`Mlp::parameters`] order. Labels must be exactly 0 or 1.
    pub fn loss_and_grad(&self, batch: &[(&[S], S)]) -> Result<(S, Vec<S>)> {
        if batch.is_empty() {
            return Err(Error::invalid("loss over an empty batch is undefined"));
        }
        for (x, y) in batch {
            if x.len() != self.dims[0] {
                return Err(Error::invalid(format!(
                    "input has dimension {}, network expects {}",
                    x.len(),
                    self.dims[0]
                )));
            }
            if !(*y == S::zero() || *y == S::one()) {
                return Err(Error::invalid(format!("label must be 0 or 1, got {y}")));
            }
        }

        let n_layers = self.layers.len();

        // Scratch reused across the batch: post-activation values per layer
        // (index 0 = input) and the error signal per layer.
        let mut acts: Vec<Vec<S>> = self.dims.iter().map(|&d| vec![S::zero(); d]).collect();
        let mut deltas: Vec<Vec<S>> =
            self.dims[1..].iter().map(|&d| vec![S::zero(); d]).collect();

        let mut grads = vec![S::zero(); self.parameter_count()];
        let mut total_loss = S::zero();

        for (x, y) in batch {
            acts[0].copy_from_slice(x);
            for (l, layer) in self.layers.iter().enumerate() {
                let in_dim = self.dims[l];
                let out_dim = self.dims[l + 1];
                let (prev, rest) = acts.split_at_mut(l + 1);
                let input = &prev[l];
                let output = &mut rest[0];
                for o in 0..out_dim {
                    let row = &layer.weights[o * in_dim..(o + 1) * in_dim];
                    let mut z = layer.bias[o];
                    for (w, a) in row.iter().zip(input.iter()) {
                        z += *w * *a;
                    }
                    output[o] = if l == n_layers - 1 { z } else { z.max(S::zero()) };
                }
            }

            // Cross-entropy on the logit, max(z,0) − zy + ln(1+e^−|z|): the
            // same value as −[y ln p + (1−y) ln(1−p)] but finite at any z, so
            // the loss stays exactly the function the gradient differentiates.
            let z = acts[n_layers][0];
            total_loss += z.max(S::zero()) - z * *y + (-z.abs()).exp().ln_1p();

            // Output error for sigmoid + BCE collapses to p − y.
            deltas[n_layers - 1][0] = sigmoid(z) - *y;
            for l in (0..n_layers - 1).rev() {
                let layer_above = &self.layers[l + 1];
                let in_dim = self.dims[l + 1];
                let out_dim = self.dims[l + 2];
                let (lower, upper) = deltas.split_at_mut(l + 1);
                let delta_here = &mut lower[l];
                let delta_above = &upper[0];
                for d in delta_here.iter_mut() {
                    *d = S::zero();
                }
                for o in 0..out_dim {
                    let row = &layer_above.weights[o * in_dim..(o + 1) * in_dim];
                    let d = delta_above[o];
                    for (acc, w) in delta_here.iter_mut().zip(row.iter()) {
                        *acc += d * *w;
                    }
                }
                // ReLU derivative gates on the post-activation value.
                for (d, a) in delta_here.iter_mut().zip(acts[l + 1].iter()) {
                    if *a <= S::zero() {
                        *d = S::zero();
                    }
                }
            }

            let mut offset = 0;
            for l in 0..n_layers {
                let in_dim = self.dims[l];
                let out_dim = self.dims[l + 1];
                for o in 0..out_dim {
                    let d = deltas[l][o];
                    let grad_row = &mut grads[offset + o * in_dim..offset + (o + 1) * in_dim];
                    for (g, a) in grad_row.iter_mut().zip(acts[l].iter()) {
                        *g += d * *a;
                    }
                }
                offset += out_dim * in_dim;
                for o in 0..out_dim {
                    grads[offset + o] += deltas[l][o];
                }
                offset += out_dim;
            }
        }

        let scale = S::one() / S::from_usize_lossy(batch.len());
        for g in &mut grads {
            *g *= scale;
        }
        Ok((total_loss * scale, grads))
    }

    /// Adam update over all parameters in place.
    pub fn adam_update(&mut self, grads: &[S], state: &mut AdamState<S>, params: &AdamParams<S>) {
        let mut flat = self.parameters();
        adam_step(&mut flat, grads, state, params);
        self.set_parameters(&flat)
            .expect("parameter count unchanged by the update");
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct AdamParams<S: Scalar> {
    pub learning_rate: S,
    pub beta1: S,
    pub beta2: S,
    pub epsilon: S,
}

impl<S: Scalar> Default for AdamParams<S> {
    fn default() -> Self {
        AdamParams {
            learning_rate: S::from_f64_lossy(1e-3),
            beta1: S::from_f64_lossy(0.9),
            beta2: S::from_f64_lossy(0.999),
            epsilon: S::from_f64_lossy(1e-8),
        }
    }
}

/// First/second moment accumulators plus the update counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct AdamState<S: Scalar> {
    pub m: Vec<S>,
    pub v: Vec<S>,
    pub t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(n_params: usize) -> AdamState<S> {
        AdamState {
            m: vec![S::zero(); n_params],
            v: vec![S::zero(); n_params],
            t: 0,
        }
    }
}

/// One Adam step over a flat parameter vector:
/// m ← β₁m + (1−β₁)g, v ← β₂v + (1−β₂)g², bias-corrected m̂/v̂,
/// θ ← θ − α·m̂/(√v̂+ε). Increments `state.t`.
pub fn adam_step<S: Scalar>(
    params: &mut [S],
    grads: &[S],
    state: &mut AdamState<S>,
    config: &AdamParams<S>,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let t = state.t;
    let one = S::one();
    let bc1 = one - config.beta1.powi(t as i32);
    let bc2 = one - config.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = config.beta1 * state.m[i] + (one - config.beta1) * g;
        state.v[i] = config.beta2 * state.v[i] + (one - config.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
}
