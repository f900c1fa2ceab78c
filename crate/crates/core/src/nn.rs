//! Multilayer perceptrons: the one network shape every model here reuses.

use alloc::format;
use alloc::vec::Vec;

use libm::sqrt;

use crate::error::{CoreError, Result};
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::{matmul, Tensor};

/// Per-layer nonlinearity. Density-parameter heads use `Identity` so
/// log-scale outputs stay unconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
            Activation::Identity => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Activation::Tanh,
            1 => Activation::Relu,
            2 => Activation::Sigmoid,
            3 => Activation::Identity,
            _ => return Err(CoreError::InvalidArgument(format!("unknown activation tag {tag}"))),
        })
    }

    fn apply_slice(self, x: &mut [f64]) {
        match self {
            Activation::Tanh => x.iter_mut().for_each(|v| *v = libm::tanh(*v)),
            Activation::Relu => x.iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v = 0.0
                }
            }),
            Activation::Sigmoid => x.iter_mut().for_each(|v| {
                *v = if *v >= 0.0 {
                    1.0 / (1.0 + libm::exp(-*v))
                } else {
                    let e = libm::exp(*v);
                    e / (1.0 + e)
                }
            }),
            Activation::Identity => {}
        }
    }

    /// Derivative with respect to the pre-activation, given pre-activation
    /// `x` and activation output `y`.
    pub(crate) fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// Architecture description: layer widths, one activation per layer, and
/// the seed its weights were initialised from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(widths: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(CoreError::InvalidArgument(
                "an MLP needs at least input and output widths".into(),
            ));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(CoreError::InvalidArgument("layer widths must be positive".into()));
        }
        if activations.len() != widths.len() - 1 {
            return Err(CoreError::InvalidArgument(format!(
                "{} widths need {} activations, got {}",
                widths.len(),
                widths.len() - 1,
                activations.len()
            )));
        }
        Ok(MlpSpec { widths: widths.to_vec(), activations: activations.to_vec(), seed })
    }

    /// Hidden layers of `hidden` units with `act`, identity output head.
    pub fn with_hidden(input: usize, hidden: &[usize], output: usize, act: Activation, seed: u64) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        let mut activations = alloc::vec![act; hidden.len()];
        activations.push(Activation::Identity);
        MlpSpec::new(&widths, &activations, seed)
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

/// Staged tape handles for one MLP's parameters.
pub struct MlpVars {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
}

/// Fully connected network with per-layer weights `in x out` and bias rows.
#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

/// Scale constant of the fan-in uniform init: `U(-c/sqrt(fan_in), c/sqrt(fan_in))`.
const INIT_SCALE: f64 = 1.0;

impl Mlp {
    /// Initialise from the spec's seed with fan-in scaled uniform weights
    /// and zero biases.
    pub fn new(spec: MlpSpec) -> Self {
        let mut rng = Rng::with_stream(spec.seed, 0x6d6c70);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..spec.widths.len() - 1 {
            let (fan_in, fan_out) = (spec.widths[l], spec.widths[l + 1]);
            let bound = INIT_SCALE / sqrt(fan_in as f64);
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.uniform_range(-bound, bound))
                .collect();
            weights.push(Tensor::from_vec(&[fan_in, fan_out], data).unwrap());
            biases.push(Tensor::zeros(&[1, fan_out]));
        }
        Mlp { spec, weights, biases }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    /// Inference forward pass: `x` is `rows x input_dim`, returns
    /// `rows x output_dim`. No tape is recorded.
    pub fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), rows * self.spec.input_dim());
        let mut cur = x.to_vec();
        let mut cur_cols = self.spec.input_dim();
        for l in 0..self.weights.len() {
            let out_cols = self.spec.widths[l + 1];
            let mut next = alloc::vec![0.0; rows * out_cols];
            matmul(&cur, self.weights[l].data(), rows, cur_cols, out_cols, &mut next);
            let b = self.biases[l].data();
            for r in 0..rows {
                let row = &mut next[r * out_cols..(r + 1) * out_cols];
                for (v, &bv) in row.iter_mut().zip(b) {
                    *v += bv;
                }
            }
            self.spec.activations[l].apply_slice(&mut next);
            cur = next;
            cur_cols = out_cols;
        }
        cur
    }

    /// Put every parameter on the tape as a leaf.
    pub fn stage(&self, tape: &Tape) -> MlpVars {
        let weights = self
            .weights
            .iter()
            .map(|w| tape.leaf(w.data(), w.shape()[0], w.shape()[1]))
            .collect();
        let biases = self.biases.iter().map(|b| tape.leaf(b.data(), 1, b.numel())).collect();
        MlpVars { weights, biases }
    }

    /// Differentiable forward pass over staged parameters.
    pub fn forward_staged(&self, tape: &Tape, vars: &MlpVars, x: Var) -> Var {
        let mut cur = x;
        for l in 0..self.weights.len() {
            cur = tape.add_row(tape.matmul(cur, vars.weights[l]), vars.biases[l]);
            cur = match self.spec.activations[l] {
                Activation::Tanh => tape.tanh(cur),
                Activation::Relu => tape.relu(cur),
                Activation::Sigmoid => tape.sigmoid(cur),
                Activation::Identity => cur,
            };
        }
        cur
    }

    /// Pull tape gradients into the parameters' grad slots (additive).
    pub fn accumulate_grads(&mut self, tape: &Tape, vars: &MlpVars) {
        for (w, v) in self.weights.iter_mut().zip(&vars.weights) {
            w.accumulate_grad(&tape.grad(*v));
        }
        for (b, v) in self.biases.iter_mut().zip(&vars.biases) {
            b.accumulate_grad(&tape.grad(*v));
        }
    }

    pub fn zero_grads(&mut self) {
        for w in &mut self.weights {
            w.zero_grad();
        }
        for b in &mut self.biases {
            b.zero_grad();
        }
    }

    /// Parameters in declaration order: w0, b0, w1, b1, ...
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        // Interleaving above consumed pairs; lengths always match.
        out
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Tensor::numel).sum::<usize>()
            + self.biases.iter().map(Tensor::numel).sum::<usize>()
    }

    /// Flat copy of all parameters in declaration order.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b.data());
        }
        out
    }

    /// Load parameters from a flat buffer in declaration order.
    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(CoreError::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.numel();
            w.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
            let n = b.numel();
            b.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Overwrite one weight matrix (test scaffolding for stub networks).
    pub fn set_weight(&mut self, layer: usize, data: &[f64]) {
        self.weights[layer].data_mut().copy_from_slice(data);
    }

    pub fn set_bias(&mut self, layer: usize, data: &[f64]) {
        self.biases[layer].data_mut().copy_from_slice(data);
    }

    pub fn weight(&self, layer: usize) -> &Tensor {
        &self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &Tensor {
        &self.biases[layer]
    }

    /// Jacobian `d output / d input` at `x` (`output_dim x input_dim`),
    /// propagated layer by layer. Intended for small networks.
    pub fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        let in_dim = self.spec.input_dim();
        debug_assert_eq!(x.len(), in_dim);
        let mut cur = x.to_vec();
        // J starts as the first layer's Jacobian and is left-multiplied.
        let mut jac: Option<Vec<f64>> = None;
        let mut jac_rows = 0usize;
        for l in 0..self.weights.len() {
            let (fan_in, fan_out) = (self.spec.widths[l], self.spec.widths[l + 1]);
            let w = self.weights[l].data();
            let b = self.biases[l].data();
            let mut pre = alloc::vec![0.0; fan_out];
            matmul(&cur, w, 1, fan_in, fan_out, &mut pre);
            for (p, &bv) in pre.iter_mut().zip(b) {
                *p += bv;
            }
            let mut post = pre.clone();
            self.spec.activations[l].apply_slice(&mut post);

            // Layer Jacobian: diag(act') @ W^T, shape fan_out x fan_in.
            let mut layer_jac = alloc::vec![0.0; fan_out * fan_in];
            for o in 0..fan_out {
                let d = self.spec.activations[l].derivative(pre[o], post[o]);
                for i in 0..fan_in {
                    layer_jac[o * fan_in + i] = d * w[i * fan_out + o];
                }
            }
            jac = Some(match jac {
                None => {
                    jac_rows = fan_out;
                    layer_jac
                }
                Some(prev) => {
                    // layer_jac (fan_out x fan_in) @ prev (fan_in x in_dim)
                    let mut next = alloc::vec![0.0; fan_out * in_dim];
                    matmul(&layer_jac, &prev, fan_out, fan_in, in_dim, &mut next);
                    jac_rows = fan_out;
                    next
                }
            });
            cur = post;
        }
        debug_assert_eq!(jac_rows, self.spec.output_dim());
        jac.unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(&[4], &[], 0).is_err());
        assert!(MlpSpec::new(&[4, 0], &[Activation::Tanh], 0).is_err());
        assert!(MlpSpec::new(&[4, 3], &[], 0).is_err());
        assert!(MlpSpec::new(&[4, 3], &[Activation::Tanh], 0).is_ok());
    }

    #[test]
    fn same_seed_same_weights() {
        let spec = MlpSpec::with_hidden(3, &[8], 2, Activation::Tanh, 77).unwrap();
        let a = Mlp::new(spec.clone());
        let b = Mlp::new(spec);
        assert_eq!(a.params_flat(), b.params_flat());
    }

    #[test]
    fn staged_forward_matches_inference_forward() {
        let spec = MlpSpec::with_hidden(3, &[5, 4], 2, Activation::Tanh, 9).unwrap();
        let mlp = Mlp::new(spec);
        let x = [0.3, -0.8, 1.2, 0.1, 0.0, -0.4];
        let plain = mlp.forward(&x, 2);

        let tape = Tape::new();
        let vars = mlp.stage(&tape);
        let xv = tape.leaf(&x, 2, 3);
        let out = mlp.forward_staged(&tape, &vars, xv);
        let taped = tape.value(out);
        for (p, t) in plain.iter().zip(&taped) {
            assert!((p - t).abs() < 1e-14);
        }
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let spec = MlpSpec::with_hidden(3, &[6], 1, Activation::Tanh, 4).unwrap();
        let mut mlp = Mlp::new(spec);
        let x = [0.4, -0.2, 0.9];

        let tape = Tape::new();
        let vars = mlp.stage(&tape);
        let xv = tape.leaf(&x, 1, 3);
        let out = mlp.forward_staged(&tape, &vars, xv);
        let loss = tape.sum(tape.square(out));
        tape.backward(loss).unwrap();
        mlp.accumulate_grads(&tape, &vars);

        let eval = |m: &Mlp| -> f64 {
            let y = m.forward(&x, 1);
            y.iter().map(|v| v * v).sum()
        };
        let step = 1e-5;
        let flat = mlp.params_flat();
        let mut analytic: Vec<f64> = Vec::new();
        for p in mlp.params_mut() {
            analytic.extend_from_slice(p.grad().unwrap());
        }
        let mut probe = mlp.clone();
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += step;
            probe.set_params_flat(&plus).unwrap();
            let fp = eval(&probe);
            let mut minus = flat.clone();
            minus[i] -= step;
            probe.set_params_flat(&minus).unwrap();
            let fm = eval(&probe);
            let numeric = (fp - fm) / (2.0 * step);
            let tol = 1e-4 * analytic[i].abs().max(numeric.abs()).max(1.0);
            assert!(
                (analytic[i] - numeric).abs() < tol,
                "param {i}: analytic {} numeric {}",
                analytic[i],
                numeric
            );
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let spec = MlpSpec::with_hidden(4, &[7], 3, Activation::Tanh, 21).unwrap();
        let mlp = Mlp::new(spec);
        let x = [0.2, -0.6, 0.9, 0.05];
        let jac = mlp.jacobian(&x);
        let step = 1e-6;
        for i in 0..4 {
            let mut xp = x;
            xp[i] += step;
            let mut xm = x;
            xm[i] -= step;
            let fp = mlp.forward(&xp, 1);
            let fm = mlp.forward(&xm, 1);
            for o in 0..3 {
                let numeric = (fp[o] - fm[o]) / (2.0 * step);
                assert!(
                    (jac[o * 4 + i] - numeric).abs() < 1e-6,
                    "J[{o},{i}] {} vs {}",
                    jac[o * 4 + i],
                    numeric
                );
            }
        }
    }

    #[test]
    fn flat_roundtrip_preserves_network() {
        let spec = MlpSpec::with_hidden(3, &[5], 2, Activation::Relu, 1).unwrap();
        let a = Mlp::new(spec.clone());
        let mut b = Mlp::new(MlpSpec::with_hidden(3, &[5], 2, Activation::Relu, 999).unwrap());
        b.set_params_flat(&a.params_flat()).unwrap();
        let x = [0.5, 0.25, -1.0];
        assert_eq!(a.forward(&x, 1), b.forward(&x, 1));
        assert!(b.set_params_flat(&[0.0; 3]).is_err());
    }
}
