//! Dense ReLU networks with a flat parameter vector.
//!
//! Layer `l` maps `sizes[l]` inputs to `sizes[l + 1]` outputs; every layer
//! but the last is followed by a ReLU. The input of the last layer is the
//! feature vector exposed to core-set and to the optional loss head, a
//! linear map from features to one predicted-loss scalar.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Mlp,
    /// Per-pixel network over 3x3 input patches: a 3x3 convolution followed
    /// by a 1x1 convolution.
    Fcn,
}

impl ModelKind {
    pub fn code(self) -> u8 {
        match self {
            ModelKind::Logistic => 0,
            ModelKind::Mlp => 1,
            ModelKind::Fcn => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ModelKind::Logistic),
            1 => Some(ModelKind::Mlp),
            2 => Some(ModelKind::Fcn),
            _ => None,
        }
    }
}

/// Architecture choice, independent of data shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Logistic,
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: [usize; 2],
    },
    Fcn {
        #[serde(default = "default_fcn_hidden")]
        hidden: usize,
    },
}

fn default_hidden() -> [usize; 2] {
    [32, 32]
}

fn default_fcn_hidden() -> usize {
    16
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Logistic => ModelKind::Logistic,
            ModelSpec::Mlp { .. } => ModelKind::Mlp,
            ModelSpec::Fcn { .. } => ModelKind::Fcn,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ModelSpec::Logistic => "logistic".into(),
            ModelSpec::Mlp { hidden } => format!("mlp{}x{}", hidden[0], hidden[1]),
            ModelSpec::Fcn { hidden } => format!("fcn{hidden}"),
        }
    }

    /// Layer widths for `input_dim` inputs (for `Fcn`, the patch length).
    pub fn sizes(&self, input_dim: usize, num_classes: usize) -> Vec<usize> {
        match self {
            ModelSpec::Logistic => vec![input_dim, num_classes],
            ModelSpec::Mlp { hidden } => vec![input_dim, hidden[0], hidden[1], num_classes],
            ModelSpec::Fcn { hidden } => vec![input_dim, *hidden, num_classes],
        }
    }

    pub fn build(&self, input_dim: usize, num_classes: usize, loss_head: bool, seed: u64) -> Network {
        Network::init(self.kind(), &self.sizes(input_dim, num_classes), loss_head, seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    kind: ModelKind,
    sizes: Vec<usize>,
    has_head: bool,
    pub(crate) params: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct Trace {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l` (after
    /// ReLU for hidden layers; raw logits for the last).
    pub acts: Vec<Vec<f64>>,
    pub head: Option<f64>,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        self.acts.last().expect("trace has layers")
    }

    pub fn features(&self) -> &[f64] {
        &self.acts[self.acts.len() - 2]
    }
}

impl Network {
    /// He-uniform weights, zero biases.
    pub fn init(kind: ModelKind, sizes: &[usize], loss_head: bool, seed: u64) -> Self {
        let mut net = Network {
            kind,
            sizes: sizes.to_vec(),
            has_head: loss_head,
            params: Vec::new(),
        };
        net.params = vec![0.0; net.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..net.layers() {
            let fan_in = sizes[l];
            let bound = (6.0 / fan_in.max(1) as f64).sqrt();
            let (w, _) = net.layer_offsets(l);
            for p in &mut net.params[w..w + sizes[l] * sizes[l + 1]] {
                *p = rng.random_range(-bound..bound);
            }
        }
        if loss_head {
            let h = net.head_offset();
            let fan_in = net.feature_dim();
            let bound = (1.0 / fan_in.max(1) as f64).sqrt();
            for p in &mut net.params[h..h + fan_in] {
                *p = rng.random_range(-bound..bound);
            }
        }
        net
    }

    /// Rebuilds a network from an explicit parameter vector.
    pub fn from_parts(kind: ModelKind, sizes: Vec<usize>, has_head: bool, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParam(format!("bad layer sizes {sizes:?}")));
        }
        let net = Network {
            kind,
            sizes,
            has_head,
            params,
        };
        if net.params.len() != net.param_count() {
            return Err(Error::InvalidParam(format!(
                "{} parameters for a network needing {}",
                net.params.len(),
                net.param_count()
            )));
        }
        Ok(net)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn has_head(&self) -> bool {
        self.has_head
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.sizes.last().expect("sizes non-empty")
    }

    pub fn feature_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 2]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        let body: usize = self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        body + if self.has_head { self.feature_dim() + 1 } else { 0 }
    }

    /// `(weights, biases)` offsets of layer `l`; weights are row-major
    /// `[out][in]`.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.sizes.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        (off, off + self.sizes[l] * self.sizes[l + 1])
    }

    fn head_offset(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Tensor shapes in parameter order, used by the checkpoint format.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for w in self.sizes.windows(2) {
            out.push(vec![w[1], w[0]]);
            out.push(vec![w[1]]);
        }
        if self.has_head {
            out.push(vec![1, self.feature_dim()]);
            out.push(vec![1]);
        }
        out
    }

    pub fn forward(&self, x: &[f64]) -> Trace {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer_offsets(l);
            let input = &acts[l];
            let last = l + 1 == self.layers();
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &self.params[w + o * n_in..w + (o + 1) * n_in];
                    let z = self.params[b + o] + dot(row, input);
                    if last {
                        z
                    } else {
                        z.max(0.0)
                    }
                })
                .collect();
            acts.push(out);
        }
        let head = self.has_head.then(|| {
            let h = self.head_offset();
            let f = &acts[acts.len() - 2];
            dot(&self.params[h..h + f.len()], f) + self.params[h + f.len()]
        });
        Trace { acts, head }
    }

    pub fn probs(&self, x: &[f64]) -> Vec<f64> {
        softmax(self.forward(x).logits())
    }

    /// Accumulates into `grad` the parameter gradient given the loss
    /// gradient w.r.t. the logits and, when a head exists, w.r.t. its output.
    pub fn backward(&self, trace: &Trace, d_logits: &[f64], d_head: f64, grad: &mut [f64]) {
        let layers = self.layers();
        let mut delta = d_logits.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer_offsets(l);
            let input = &trace.acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grad[b + o] += d;
                let g = &mut grad[w + o * n_in..w + (o + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += d * xi;
                }
            }
            if l + 1 == layers && self.has_head && d_head != 0.0 {
                let h = self.head_offset();
                for (k, fk) in input.iter().enumerate() {
                    grad[h + k] += d_head * fk;
                }
                grad[h + input.len()] += d_head;
            }
            if l == 0 {
                break;
            }
            let mut d_input = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &self.params[w + o * n_in..w + (o + 1) * n_in];
                for (di, wi) in d_input.iter_mut().zip(row) {
                    *di += d * wi;
                }
            }
            if l + 1 == layers && self.has_head && d_head != 0.0 {
                let h = self.head_offset();
                for (k, di) in d_input.iter_mut().enumerate() {
                    *di += d_head * self.params[h + k];
                }
            }
            // ReLU: acts[l] is the post-activation of layer l - 1
            for (di, a) in d_input.iter_mut().zip(&trace.acts[l]) {
                if *a <= 0.0 {
                    *di = 0.0;
                }
            }
            delta = d_input;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_layout() {
        let net = ModelSpec::Mlp { hidden: [4, 3] }.build(2, 5, true, 0);
        assert_eq!(net.sizes(), &[2, 4, 3, 5]);
        assert_eq!(net.param_count(), (2 * 4 + 4) + (4 * 3 + 3) + (3 * 5 + 5) + (3 + 1));
        assert_eq!(net.params().len(), net.param_count());
        let n: usize = net.shapes().iter().map(|s| s.iter().product::<usize>()).sum();
        assert_eq!(n, net.param_count());
        assert_eq!(net.feature_dim(), 3);
    }

    #[test]
    fn init_is_seeded() {
        let a = ModelSpec::Logistic.build(3, 2, false, 7);
        let b = ModelSpec::Logistic.build(3, 2, false, 7);
        let c = ModelSpec::Logistic.build(3, 2, false, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax(&[1000.0, 999.0, -5.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let lp = log_softmax(&[1.0, 2.0]);
        assert!((lp[0].exp() + lp[1].exp() - 1.0).abs() < 1e-12);
    }
}
