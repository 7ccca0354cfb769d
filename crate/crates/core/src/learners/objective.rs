//! Training objectives with analytic gradients over a flat parameter vector.
//!
//! Every function returns the batch-mean objective and its gradient. Weight
//! decay is applied by the optimizer, not here.

use super::net::{log_softmax, softmax, Network};
use crate::strategies::ranking_hinge;

/// Mean cross-entropy of `targets` under the network's softmax.
pub fn cross_entropy(net: &Network, inputs: &[&[f64]], targets: &[usize]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; net.param_count()];
    let n = inputs.len().max(1) as f64;
    let mut loss = 0.0;
    for (x, &y) in inputs.iter().zip(targets) {
        let trace = net.forward(x);
        let logp = log_softmax(trace.logits());
        loss -= logp[y];
        let mut d: Vec<f64> = logp.iter().map(|lp| lp.exp() / n).collect();
        d[y] -= 1.0 / n;
        net.backward(&trace, &d, 0.0, &mut grad);
    }
    (loss / n, grad)
}

/// Per-sample cross-entropy without gradients.
pub fn sample_losses(net: &Network, inputs: &[&[f64]], targets: &[usize]) -> Vec<f64> {
    inputs
        .iter()
        .zip(targets)
        .map(|(x, &y)| -log_softmax(net.forward(x).logits())[y])
        .collect()
}

/// `p^(1/T)` renormalized.
pub fn sharpen(p: &[f64], temperature: f64) -> Vec<f64> {
    let inv = 1.0 / temperature;
    let powered: Vec<f64> = p.iter().map(|v| v.powf(inv)).collect();
    let s: f64 = powered.iter().sum();
    powered.into_iter().map(|v| v / s).collect()
}

/// Consistency targets for clean inputs: the sharpened prediction, or
/// `None` when the highest class probability is below `confidence_mask`.
pub fn consistency_targets(
    net: &Network,
    clean: &[&[f64]],
    confidence_mask: f64,
    temperature: f64,
) -> Vec<Option<Vec<f64>>> {
    clean
        .iter()
        .map(|x| {
            let p = net.probs(x);
            let max = p.iter().copied().fold(0.0, f64::max);
            (max >= confidence_mask).then(|| sharpen(&p, temperature))
        })
        .collect()
}

/// `sum_i KL(t_i || q_i) / max(#unmasked, 1)` where `q_i` is the prediction
/// on the perturbed input and `t_i` a fixed target. Masked samples
/// contribute nothing.
pub fn consistency(
    net: &Network,
    perturbed: &[&[f64]],
    targets: &[Option<Vec<f64>>],
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; net.param_count()];
    let kept = targets.iter().filter(|t| t.is_some()).count();
    if kept == 0 {
        return (0.0, grad);
    }
    let n = kept as f64;
    let mut loss = 0.0;
    for (x, t) in perturbed.iter().zip(targets) {
        let Some(t) = t else { continue };
        let trace = net.forward(x);
        let logq = log_softmax(trace.logits());
        loss += t
            .iter()
            .zip(&logq)
            .filter(|(ti, _)| **ti > 0.0)
            .map(|(ti, lq)| ti * (ti.ln() - lq))
            .sum::<f64>();
        let d: Vec<f64> = logq
            .iter()
            .zip(t)
            .map(|(lq, ti)| (lq.exp() - ti) / n)
            .collect();
        net.backward(&trace, &d, 0.0, &mut grad);
    }
    (loss / n, grad)
}

/// Mean pairwise ranking hinge of the loss head over `pairs` of batch
/// positions, against fixed per-sample `target_losses`.
pub fn ranking(
    net: &Network,
    inputs: &[&[f64]],
    target_losses: &[f64],
    pairs: &[(usize, usize)],
    margin: f64,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; net.param_count()];
    if pairs.is_empty() || !net.has_head() {
        return (0.0, grad);
    }
    let traces: Vec<_> = inputs.iter().map(|x| net.forward(x)).collect();
    let pred: Vec<f64> = traces.iter().map(|t| t.head.unwrap_or(0.0)).collect();
    let mut d_head = vec![0.0; inputs.len()];
    let p = pairs.len() as f64;
    let mut loss = 0.0;
    for &(i, j) in pairs {
        let h = ranking_hinge((target_losses[i], target_losses[j]), (pred[i], pred[j]), margin);
        loss += h;
        if h > 0.0 {
            let sign = if target_losses[i] - target_losses[j] >= 0.0 { 1.0 } else { -1.0 };
            d_head[i] -= sign / p;
            d_head[j] += sign / p;
        }
    }
    let zeros = vec![0.0; net.num_classes()];
    for (trace, &dh) in traces.iter().zip(&d_head) {
        if dh != 0.0 {
            net.backward(trace, &zeros, dh, &mut grad);
        }
    }
    (loss / p, grad)
}

/// Softmax probabilities for each input.
pub fn predict_probs(net: &Network, inputs: &[&[f64]]) -> Vec<Vec<f64>> {
    inputs.iter().map(|x| softmax(net.forward(x).logits())).collect()
}
