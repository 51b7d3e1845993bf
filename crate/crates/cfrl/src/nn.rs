//! Small dense networks with reverse-mode gradients, written for clarity and
//! reproducibility rather than raw speed.
//!
//! Everything is `f64`. Hidden layers use `tanh`; the output is either left
//! linear (critics) or squashed into a per-dimension box (actors). Besides
//! parameter gradients, [`Mlp::backward`] also returns the gradient with
//! respect to the *input*, which the policy update needs to push actions
//! through a critic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Map applied to the final linear layer's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OutputMap {
    /// Leave the output linear (value heads).
    Identity,
    /// Squash each output into `[low_i, high_i]` via
    /// `low + (tanh(z) + 1) / 2 * (high - low)` (policy heads).
    Bounded { low: Vec<f64>, high: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer {
    rows: usize,
    cols: usize,
    /// Row-major `rows x cols` weight matrix.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Layer {
    fn new(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
        let bound = 1.0 / (cols as f64).sqrt();
        let mut sample = || rng.random_range(-bound..bound);
        let w = (0..rows * cols).map(|_| sample()).collect();
        let b = (0..rows).map(|_| sample()).collect();
        Self { rows, cols, w, b }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let mut z = self.b[r];
            for (wi, xi) in row.iter().zip(x) {
                z += wi * xi;
            }
            out.push(z);
        }
    }
}

/// Fully connected network: `tanh` hidden layers, configurable output map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
    output: OutputMap,
}

/// Activations recorded during [`Mlp::forward_trace`], consumed by
/// [`Mlp::backward`]. `acts[0]` is the input, `acts[i + 1]` the
/// post-activation output of layer `i`; the last entry is the mapped output.
pub struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace always holds the input")
    }
}

impl Mlp {
    /// Build a network with the given layer sizes (`sizes[0]` is the input
    /// dimension, `sizes[last]` the output dimension).
    pub fn new(sizes: &[usize], output: OutputMap, rng: &mut impl Rng) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidValue("network needs at least input and output sizes".into()));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidValue("layer sizes must be positive".into()));
        }
        if let OutputMap::Bounded { low, high } = &output {
            let out = *sizes.last().expect("checked above");
            if low.len() != out || high.len() != out {
                return Err(Error::DimensionMismatch { expected: out, got: low.len().min(high.len()) });
            }
            for (l, h) in low.iter().zip(high) {
                if !(l.is_finite() && h.is_finite() && l < h) {
                    return Err(Error::InvalidValue(format!("invalid output bounds [{l}, {h}]")));
                }
            }
        }
        let layers = sizes
            .windows(2)
            .map(|pair| Layer::new(pair[1], pair[0], rng))
            .collect();
        Ok(Self { layers, output })
    }

    /// Like [`Mlp::new`] but with every weight and bias zero. Mostly useful
    /// for building networks with hand-set parameters in tests and tools.
    pub fn zeroed(sizes: &[usize], output: OutputMap) -> Result<Self> {
        let mut rng = crate::seed::stream_rng(0, "zeroed", 0);
        let mut mlp = Self::new(sizes, output, &mut rng)?;
        for layer in &mut mlp.layers {
            layer.w.fill(0.0);
            layer.b.fill(0.0);
        }
        Ok(mlp)
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").rows
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn map_output(&self, z: &mut [f64]) {
        if let OutputMap::Bounded { low, high } = &self.output {
            for ((zi, l), h) in z.iter_mut().zip(low).zip(high) {
                *zi = l + (zi.tanh() + 1.0) / 2.0 * (h - l);
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_dim(), "input dimension mismatch");
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i < last {
                for v in next.iter_mut() {
                    *v = v.tanh();
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        self.map_output(&mut cur);
        cur
    }

    /// Forward pass that records every activation for a later backward pass.
    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        assert_eq!(x.len(), self.in_dim(), "input dimension mismatch");
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.apply(acts.last().expect("non-empty"), &mut z);
            if i < last {
                for v in z.iter_mut() {
                    *v = v.tanh();
                }
            } else {
                self.map_output(&mut z);
            }
            acts.push(z);
        }
        Trace { acts }
    }

    /// Reverse pass. Accumulates parameter gradients into `grads` (scaled
    /// sums; call [`Grads::scale`] afterwards for a batch mean) and returns
    /// the gradient of the loss with respect to the network input.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grads: &mut Grads) -> Vec<f64> {
        assert_eq!(grad_out.len(), self.out_dim(), "output gradient dimension mismatch");

        // d(loss)/d(pre-activation) of the output layer.
        let dz: Vec<f64> = match &self.output {
            OutputMap::Identity => grad_out.to_vec(),
            OutputMap::Bounded { low, high } => {
                // y = low + (tanh(z)+1)/2*(high-low)  =>  recover tanh(z) from y.
                let y = trace.output();
                grad_out
                    .iter()
                    .zip(y)
                    .zip(low.iter().zip(high))
                    .map(|((g, yi), (l, h))| {
                        let t = 2.0 * (yi - l) / (h - l) - 1.0;
                        g * (1.0 - t * t) / 2.0 * (h - l)
                    })
                    .collect()
            }
        };
        self.backprop(trace, dz, grads)
    }

    /// Pre-activations of the output layer (the `z` fed to the output map),
    /// recomputed from the recorded last hidden activation. Finite even when
    /// a bounded output sits at its limits, where the mapped value alone
    /// could not recover `z`.
    pub fn output_preactivations(&self, trace: &Trace) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut z = Vec::new();
        self.layers[last].apply(&trace.acts[last], &mut z);
        z
    }

    /// Reverse pass for a loss on the output layer's pre-activations,
    /// bypassing the output map. Regularizers use this to keep pulling where
    /// a bounded output saturates and [`Mlp::backward`] would vanish.
    pub fn backward_preact(&self, trace: &Trace, grad_preact: &[f64], grads: &mut Grads) -> Vec<f64> {
        assert_eq!(grad_preact.len(), self.out_dim(), "output gradient dimension mismatch");
        self.backprop(trace, grad_preact.to_vec(), grads)
    }

    /// Shared reverse loop from the output layer's pre-activation gradient.
    fn backprop(&self, trace: &Trace, mut dz: Vec<f64>, grads: &mut Grads) -> Vec<f64> {
        assert_eq!(grads.data.len(), self.num_params(), "gradient buffer shape mismatch");
        let mut offset = self.num_params();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            offset -= layer.w.len() + layer.b.len();
            let x = &trace.acts[i];
            let (gw, gb) = grads.data[offset..offset + layer.w.len() + layer.b.len()]
                .split_at_mut(layer.w.len());
            let mut dx = vec![0.0; layer.cols];
            for r in 0..layer.rows {
                let d = dz[r];
                gb[r] += d;
                let row = r * layer.cols;
                for c in 0..layer.cols {
                    gw[row + c] += d * x[c];
                    dx[c] += layer.w[row + c] * d;
                }
            }
            if i > 0 {
                // x is tanh(z) of the layer below: d tanh(z)/dz = 1 - x^2.
                for (dxi, xi) in dx.iter_mut().zip(x) {
                    *dxi *= 1.0 - xi * xi;
                }
            }
            dz = dx;
        }
        dz
    }

    /// Zero-filled gradient buffer matching this network's parameters.
    pub fn zero_grads(&self) -> Grads {
        Grads { data: vec![0.0; self.num_params()] }
    }

    /// All parameters in a stable order (each layer's weights, then bias).
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    /// See [`Mlp::params_mut`]; same order.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }
}

/// Flat gradient buffer laid out layer by layer (weights, then biases).
#[derive(Debug, Clone)]
pub struct Grads {
    data: Vec<f64>,
}

impl Grads {
    /// Gradient values in [`Mlp::params_mut`] order.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.data {
            *g *= factor;
        }
    }

    pub fn zero(&mut self) {
        self.data.fill(0.0);
    }
}

/// Adam optimizer with bias correction (`beta1 = 0.9`, `beta2 = 0.999`,
/// `eps = 1e-8`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn for_mlp(mlp: &Mlp) -> Self {
        let n = mlp.num_params();
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// Apply one descent step `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, mlp: &mut Mlp, grads: &Grads, lr: f64) {
        assert_eq!(grads.data.len(), self.m.len(), "optimizer/network shape mismatch");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((param, g), (m, v)) in mlp
            .params_mut()
            .zip(&grads.data)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *param -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Polyak averaging: `target <- eta * source + (1 - eta) * target`.
pub fn soft_update(target: &mut Mlp, source: &Mlp, eta: f64) {
    assert_eq!(target.num_params(), source.num_params(), "network shape mismatch");
    for (t, s) in target.params_mut().zip(source.params()) {
        *t = eta * s + (1.0 - eta) * *t;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream_rng;
    use proptest::prelude::*;

    /// Build a 2-3-1 net with hand-picked weights by sampling then
    /// overwriting, so tests control every parameter.
    fn fixed_net(output: OutputMap) -> Mlp {
        let mut rng = stream_rng(7, "fixed-net", 0);
        let mut mlp = Mlp::new(&[2, 2, 1], output, &mut rng).unwrap();
        mlp.layers[0].w.copy_from_slice(&[0.5, -0.25, 1.0, 1.0]);
        mlp.layers[0].b.copy_from_slice(&[0.1, -0.2]);
        mlp.layers[1].w.copy_from_slice(&[2.0, 1.0]);
        mlp.layers[1].b.copy_from_slice(&[0.3]);
        mlp
    }

    #[test]
    fn forward_matches_hand_arithmetic() {
        let mlp = fixed_net(OutputMap::Identity);
        let y = mlp.forward(&[1.0, 0.5]);
        // z1 = 0.5*1 - 0.25*0.5 + 0.1 = 0.475, z2 = 1 + 0.5 - 0.2 = 1.3
        // y  = 2*tanh(0.475) + tanh(1.3) + 0.3
        let expected = 2.0 * 0.475f64.tanh() + 1.3f64.tanh() + 0.3;
        assert!((y[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn bounded_forward_matches_hand_arithmetic() {
        let mlp = fixed_net(OutputMap::Bounded { low: vec![-2.0], high: vec![4.0] });
        let y = mlp.forward(&[1.0, 0.5]);
        let z = 2.0 * 0.475f64.tanh() + 1.3f64.tanh() + 0.3;
        let expected = -2.0 + (z.tanh() + 1.0) / 2.0 * 6.0;
        assert!((y[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zeroed_net_outputs_zero() {
        let mlp = Mlp::zeroed(&[3, 4, 2], OutputMap::Identity).unwrap();
        assert_eq!(mlp.forward(&[1.0, -2.0, 0.5]), vec![0.0, 0.0]);
    }

    #[test]
    fn trace_output_matches_forward() {
        let mlp = fixed_net(OutputMap::Bounded { low: vec![-2.0], high: vec![4.0] });
        let x = [0.3, -0.8];
        assert_eq!(mlp.forward(&x), mlp.forward_trace(&x).output());
    }

    /// Central finite differences over every parameter and input coordinate.
    fn check_gradients(mlp: &Mlp, x: &[f64], loss_weights: &[f64]) {
        let loss = |net: &Mlp, input: &[f64]| -> f64 {
            net.forward(input).iter().zip(loss_weights).map(|(y, k)| y * k).sum()
        };
        let trace = mlp.forward_trace(x);
        let mut grads = mlp.zero_grads();
        let dx = mlp.backward(&trace, loss_weights, &mut grads);

        let h = 1e-6;
        let mut perturbed = mlp.clone();
        let n = mlp.num_params();
        for idx in 0..n {
            let orig = *perturbed.params().nth(idx).unwrap();
            *perturbed.params_mut().nth(idx).unwrap() = orig + h;
            let up = loss(&perturbed, x);
            *perturbed.params_mut().nth(idx).unwrap() = orig - h;
            let down = loss(&perturbed, x);
            *perturbed.params_mut().nth(idx).unwrap() = orig;
            let fd = (up - down) / (2.0 * h);
            let got = grads.data[idx];
            assert!(
                (fd - got).abs() < 1e-6 * (1.0 + fd.abs()),
                "param {idx}: analytic {got} vs finite-diff {fd}"
            );
        }
        let mut xp = x.to_vec();
        for (idx, &grad) in dx.iter().enumerate() {
            let orig = xp[idx];
            xp[idx] = orig + h;
            let up = loss(mlp, &xp);
            xp[idx] = orig - h;
            let down = loss(mlp, &xp);
            xp[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - grad).abs() < 1e-6 * (1.0 + fd.abs()),
                "input {idx}: analytic {grad} vs finite-diff {fd}"
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences_identity() {
        let mut rng = stream_rng(11, "fd-identity", 0);
        let mlp = Mlp::new(&[3, 5, 4, 2], OutputMap::Identity, &mut rng).unwrap();
        check_gradients(&mlp, &[0.4, -1.2, 0.75], &[1.0, -0.5]);
    }

    #[test]
    fn gradients_match_finite_differences_bounded() {
        let mut rng = stream_rng(11, "fd-bounded", 0);
        let mlp = Mlp::new(
            &[3, 4, 2],
            OutputMap::Bounded { low: vec![-1.0, 0.0], high: vec![1.0, 3.0] },
            &mut rng,
        )
        .unwrap();
        check_gradients(&mlp, &[-0.3, 0.9, 0.2], &[0.7, 1.3]);
    }

    #[test]
    fn preact_gradients_match_finite_differences() {
        let mut rng = stream_rng(11, "fd-preact", 0);
        let mlp = Mlp::new(
            &[3, 4, 2],
            OutputMap::Bounded { low: vec![-1.0, 0.0], high: vec![1.0, 3.0] },
            &mut rng,
        )
        .unwrap();
        let x = [-0.3, 0.9, 0.2];
        let weights = [0.7, 1.3];
        let loss = |net: &Mlp, input: &[f64]| -> f64 {
            let z = net.output_preactivations(&net.forward_trace(input));
            z.iter().zip(&weights).map(|(zi, k)| zi * k).sum()
        };
        let trace = mlp.forward_trace(&x);
        let mut grads = mlp.zero_grads();
        let dx = mlp.backward_preact(&trace, &weights, &mut grads);

        let h = 1e-6;
        let mut perturbed = mlp.clone();
        for idx in 0..mlp.num_params() {
            let orig = *perturbed.params().nth(idx).unwrap();
            *perturbed.params_mut().nth(idx).unwrap() = orig + h;
            let up = loss(&perturbed, &x);
            *perturbed.params_mut().nth(idx).unwrap() = orig - h;
            let down = loss(&perturbed, &x);
            *perturbed.params_mut().nth(idx).unwrap() = orig;
            let fd = (up - down) / (2.0 * h);
            let got = grads.data[idx];
            assert!(
                (fd - got).abs() < 1e-6 * (1.0 + fd.abs()),
                "param {idx}: analytic {got} vs finite-diff {fd}"
            );
        }
        let mut xp = x.to_vec();
        for (idx, &grad) in dx.iter().enumerate() {
            let orig = xp[idx];
            xp[idx] = orig + h;
            let up = loss(&mlp, &xp);
            xp[idx] = orig - h;
            let down = loss(&mlp, &xp);
            xp[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - grad).abs() < 1e-6 * (1.0 + fd.abs()),
                "input {idx}: analytic {grad} vs finite-diff {fd}"
            );
        }
    }

    #[test]
    fn preactivations_stay_finite_at_saturation() {
        let mlp = fixed_net(OutputMap::Bounded { low: vec![-1.0], high: vec![1.0] });
        // Hand value at a benign input: z = 2*tanh(0.475) + tanh(1.3) + 0.3.
        let trace = mlp.forward_trace(&[1.0, 0.5]);
        let z = mlp.output_preactivations(&trace);
        let expected = 2.0 * 0.475f64.tanh() + 1.3f64.tanh() + 0.3;
        assert!((z[0] - expected).abs() < 1e-15);

        // A pre-activation far into saturation: the mapped output rounds to
        // the bound exactly, yet the recomputed z stays finite and large.
        let mut sat = fixed_net(OutputMap::Bounded { low: vec![-1.0], high: vec![1.0] });
        sat.layers[1].b[0] = 25.0;
        let trace = sat.forward_trace(&[1.0, 0.5]);
        assert_eq!(trace.output()[0], 1.0);
        let z = sat.output_preactivations(&trace);
        assert!(z[0].is_finite() && z[0] > 20.0);
    }

    #[test]
    fn adam_first_step_matches_hand_arithmetic() {
        // With constant gradient g, bias correction makes the first update
        // exactly lr * g / (|g| + eps) regardless of g's magnitude.
        let mut rng = stream_rng(3, "adam", 0);
        let mut mlp = Mlp::new(&[1, 1], OutputMap::Identity, &mut rng).unwrap();
        let before: Vec<f64> = mlp.params().copied().collect();
        let mut grads = mlp.zero_grads();
        grads.data = vec![0.25, -3.0];
        let mut adam = Adam::for_mlp(&mlp);
        adam.step(&mut mlp, &grads, 0.1);
        let after: Vec<f64> = mlp.params().copied().collect();
        for ((b, a), g) in before.iter().zip(&after).zip(&grads.data) {
            let expected = b - 0.1 * g / (g.abs() + 1e-8);
            assert!((a - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_fits_a_line() {
        let mut rng = stream_rng(5, "adam-line", 0);
        let mut mlp = Mlp::new(&[1, 8, 1], OutputMap::Identity, &mut rng).unwrap();
        let mut adam = Adam::for_mlp(&mlp);
        let xs: Vec<f64> = (0..16).map(|i| -1.0 + 2.0 * i as f64 / 15.0).collect();
        let target = |x: f64| 0.5 * x - 0.2;
        let mse = |net: &Mlp| -> f64 {
            xs.iter().map(|&x| (net.forward(&[x])[0] - target(x)).powi(2)).sum::<f64>()
                / xs.len() as f64
        };
        let initial = mse(&mlp);
        let mut grads = mlp.zero_grads();
        for _ in 0..400 {
            grads.zero();
            for &x in &xs {
                let trace = mlp.forward_trace(&[x]);
                let err = trace.output()[0] - target(x);
                mlp.backward(&trace, &[2.0 * err], &mut grads);
            }
            grads.scale(1.0 / xs.len() as f64);
            adam.step(&mut mlp, &grads, 0.01);
        }
        let fitted = mse(&mlp);
        assert!(fitted < 1e-3, "mse {initial} -> {fitted}");
        assert!(fitted < initial / 10.0);
    }

    #[test]
    fn soft_update_is_convex_combination() {
        let mut rng = stream_rng(9, "soft", 0);
        let mut target = Mlp::new(&[2, 3, 1], OutputMap::Identity, &mut rng).unwrap();
        let source = Mlp::new(&[2, 3, 1], OutputMap::Identity, &mut rng).unwrap();
        let t0: Vec<f64> = target.params().copied().collect();
        let s: Vec<f64> = source.params().copied().collect();
        soft_update(&mut target, &source, 0.25);
        for ((t1, t0), s) in target.params().zip(&t0).zip(&s) {
            assert!((t1 - (0.25 * s + 0.75 * t0)).abs() < 1e-15);
        }
        soft_update(&mut target, &source, 1.0);
        assert_eq!(
            target.params().copied().collect::<Vec<_>>(),
            s,
            "eta = 1 must copy the source exactly"
        );
    }

    #[test]
    fn init_is_seed_deterministic() {
        let build = |seed| {
            let mut rng = stream_rng(seed, "init", 0);
            Mlp::new(&[4, 8, 2], OutputMap::Identity, &mut rng).unwrap()
        };
        assert_eq!(build(42), build(42));
        assert_ne!(build(42), build(43));
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = stream_rng(13, "bound", 0);
        let mlp = Mlp::new(&[16, 8, 4], OutputMap::Identity, &mut rng).unwrap();
        for layer in &mlp.layers {
            let bound = 1.0 / (layer.cols as f64).sqrt();
            assert!(layer.w.iter().chain(&layer.b).all(|p| p.abs() < bound));
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = stream_rng(21, "ckpt", 0);
        let mlp =
            Mlp::new(&[3, 6, 2], OutputMap::Bounded { low: vec![-1.0, -2.0], high: vec![1.0, 2.0] }, &mut rng)
                .unwrap();
        let json = serde_json::to_string(&mlp).unwrap();
        let back: Mlp = serde_json::from_str(&json).unwrap();
        assert_eq!(mlp, back);
    }

    proptest! {
        #[test]
        fn bounded_outputs_stay_in_box(
            seed in 0u64..1000,
            x in proptest::collection::vec(-20.0f64..20.0, 3),
        ) {
            let mut rng = stream_rng(seed, "box", 0);
            let mlp = Mlp::new(
                &[3, 6, 2],
                OutputMap::Bounded { low: vec![-1.0, 0.5], high: vec![1.0, 2.5] },
                &mut rng,
            ).unwrap();
            let y = mlp.forward(&x);
            prop_assert!(y[0] >= -1.0 && y[0] <= 1.0);
            prop_assert!(y[1] >= 0.5 && y[1] <= 2.5);
        }
    }
}
