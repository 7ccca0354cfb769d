//! Per-sample uncertainty scores.

use crate::error::{Error, Result};
use crate::model::{check_simplex, Raster};

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn shannon_entropy(p: &[f64]) -> Result<f64> {
    check_simplex(p, 0)?;
    Ok(entropy_unchecked(p))
}

pub(crate) fn entropy_unchecked(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// Fraction of committee votes that disagree with the modal class:
/// `1 - f_m / T`. Ties on the modal frequency go to the smaller class id,
/// which does not change the value.
pub fn variation_ratio(votes: &[usize]) -> Result<f64> {
    if votes.is_empty() {
        return Err(Error::EmptyVotes);
    }
    let (_, modal_count) = modal_class(votes);
    Ok(1.0 - modal_count as f64 / votes.len() as f64)
}

/// `(class, frequency)` of the most frequent vote, smaller class on ties.
pub fn modal_class(votes: &[usize]) -> (usize, usize) {
    let mut sorted = votes.to_vec();
    sorted.sort_unstable();
    let mut best = (usize::MAX, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        if j > best.1 {
            best = (sorted[i], j);
        }
        i += j;
    }
    best
}

/// Pairwise ranking hinge: `max(0, -sign(l_i - l_j) * (s_i - s_j) + margin)`
/// with `sign(0) = +1`.
pub fn ranking_hinge(loss: (f64, f64), pred: (f64, f64), margin: f64) -> f64 {
    let sign = if loss.0 - loss.1 >= 0.0 { 1.0 } else { -1.0 };
    (-sign * (pred.0 - pred.1) + margin).max(0.0)
}

/// Number of pixels whose entropy is strictly above `threshold`.
pub fn seg_uncertainty_score(entropy_map: &Raster, threshold: f64) -> Result<usize> {
    if let Some(px) = entropy_map.data.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::NegativeEntropy {
            pixel: px,
            value: entropy_map.data[px],
        });
    }
    Ok(entropy_map.data.iter().filter(|&&v| v > threshold).count())
}

/// Per-pixel entropy of class probabilities laid out pixel-major
/// (`probs[pixel][class]`).
pub fn pixel_entropy_map(probs: &[Vec<f64>], width: usize, height: usize) -> Result<Raster> {
    if probs.len() != width * height {
        return Err(Error::SizeMismatch(format!(
            "{} pixel distributions for a {width}x{height} map",
            probs.len()
        )));
    }
    let data = probs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            check_simplex(p, i)?;
            Ok(entropy_unchecked(p))
        })
        .collect::<Result<_>>()?;
    Ok(Raster {
        width,
        height,
        data,
    })
}

/// Entropy of the member-averaged per-pixel distribution.
pub fn ensemble_entropy_map(
    members: &[Vec<Vec<f64>>],
    width: usize,
    height: usize,
) -> Result<Raster> {
    let first = members.first().ok_or(Error::EmptyVotes)?;
    let t = members.len() as f64;
    let mean: Vec<Vec<f64>> = (0..first.len())
        .map(|px| {
            let c = first[px].len();
            (0..c)
                .map(|k| members.iter().map(|m| m[px][k]).sum::<f64>() / t)
                .collect()
        })
        .collect();
    pixel_entropy_map(&mean, width, height)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_cases() {
        assert_eq!(shannon_entropy(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
        let uniform = vec![0.1; 10];
        assert!((shannon_entropy(&uniform).unwrap() - 10f64.ln()).abs() < 1e-12);
        assert!((shannon_entropy(&[0.5, 0.5, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(
            shannon_entropy(&[0.5, 0.6]),
            Err(Error::InvalidDistribution { .. })
        ));
    }

    #[test]
    fn variation_ratio_cases() {
        assert!((variation_ratio(&[0, 0, 0, 1, 2]).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(variation_ratio(&[3, 3, 3, 3, 3]).unwrap(), 0.0);
        assert!((variation_ratio(&[0, 1, 2, 3, 4]).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(variation_ratio(&[]), Err(Error::EmptyVotes)));
        assert_eq!(modal_class(&[2, 1, 2, 1]), (1, 2));
    }

    #[test]
    fn hinge_cases() {
        assert_eq!(ranking_hinge((2.0, 1.0), (3.0, 0.0), 1.0), 0.0);
        assert_eq!(ranking_hinge((2.0, 1.0), (0.0, 0.0), 1.0), 1.0);
        assert_eq!(ranking_hinge((2.0, 1.0), (0.0, 3.0), 1.0), 4.0);
        // equal losses count as l_i >= l_j
        assert_eq!(ranking_hinge((1.0, 1.0), (0.0, 0.5), 1.0), 1.5);
    }

    #[test]
    fn threshold_count_is_strict() {
        let m = Raster {
            width: 2,
            height: 2,
            data: vec![0.7, 0.5, 0.61, 0.2],
        };
        assert_eq!(seg_uncertainty_score(&m, 0.6).unwrap(), 2);
        assert_eq!(seg_uncertainty_score(&Raster::zeros(3, 3), 0.6).unwrap(), 0);
        let flat = Raster {
            width: 2,
            height: 1,
            data: vec![0.6, 0.6],
        };
        assert_eq!(seg_uncertainty_score(&flat, 0.6).unwrap(), 0);
        let neg = Raster {
            width: 1,
            height: 1,
            data: vec![-0.1],
        };
        assert!(seg_uncertainty_score(&neg, 0.6).is_err());
    }

    #[test]
    fn ensemble_map_averages_before_entropy() {
        // two confident members that disagree give a maximally uncertain mean
        let a = vec![vec![1.0, 0.0]];
        let b = vec![vec![0.0, 1.0]];
        let m = ensemble_entropy_map(&[a, b], 1, 1).unwrap();
        assert!((m.data[0] - 2f64.ln()).abs() < 1e-12);
    }
}
