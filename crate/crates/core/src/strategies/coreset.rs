use super::Ranking;
use crate::error::{Error, Result};
use crate::model::SampleId;

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Farthest-first traversal (k-center greedy).
///
/// `features[r]` belongs to sample `ids[r]`. Each pick is the unlabeled
/// point whose distance to its nearest labeled-or-already-picked point is
/// largest; the score is that distance. Ties go to the lower sample index.
pub fn select_coreset_greedy(
    ids: &[SampleId],
    features: &[Vec<f64>],
    labeled_features: &[Vec<f64>],
    k: usize,
) -> Result<Ranking> {
    if features.len() != ids.len() {
        return Err(Error::SizeMismatch(format!(
            "{} feature rows for {} samples",
            features.len(),
            ids.len()
        )));
    }
    if labeled_features.is_empty() {
        return Err(Error::EmptySeedSet);
    }
    if k > ids.len() {
        return Err(Error::PoolTooSmall {
            requested: k,
            available: ids.len(),
        });
    }
    let dim = labeled_features[0].len();
    if dim == 0 {
        return Err(Error::InvalidParam("features must have dimension >= 1".into()));
    }
    for (row, f) in features.iter().chain(labeled_features).enumerate() {
        if f.len() != dim {
            return Err(Error::FeatureDim {
                row,
                expected: dim,
                found: f.len(),
            });
        }
    }

    let mut min_dist: Vec<f64> = features
        .iter()
        .map(|f| {
            labeled_features
                .iter()
                .map(|c| euclidean(f, c))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut picked = vec![false; ids.len()];
    let mut entries = Vec::with_capacity(k);
    for _ in 0..k {
        let best = (0..ids.len())
            .filter(|&r| !picked[r])
            .max_by(|&a, &b| {
                min_dist[a]
                    .total_cmp(&min_dist[b])
                    .then(ids[b].cmp(&ids[a]))
            })
            .expect("k <= pool size");
        picked[best] = true;
        entries.push((ids[best], min_dist[best]));
        let center = &features[best];
        for r in 0..ids.len() {
            if !picked[r] {
                min_dist[r] = min_dist[r].min(euclidean(&features[r], center));
            }
        }
    }
    Ok(Ranking::new(entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_pick_is_farthest_point() {
        let u = vec![vec![1.0, 0.0], vec![3.0, 0.0], vec![2.0, 9.0]];
        let l = vec![vec![0.0, 0.0]];
        let r = select_coreset_greedy(&[0, 1, 2], &u, &l, 1).unwrap();
        assert_eq!(r.ids(), vec![2]);
    }

    #[test]
    fn second_pick_after_update() {
        // after (2,9) joins the centers: (1,0) -> 1, (3,0) -> 3
        let u = vec![vec![1.0, 0.0], vec![3.0, 0.0], vec![2.0, 9.0]];
        let l = vec![vec![0.0, 0.0]];
        let r = select_coreset_greedy(&[0, 1, 2], &u, &l, 2).unwrap();
        assert_eq!(r.ids(), vec![2, 1]);
        assert_eq!(r.entries[1].1, 3.0);
    }

    #[test]
    fn empty_seed_set_is_an_error() {
        let u = vec![vec![1.0]];
        assert!(matches!(
            select_coreset_greedy(&[0], &u, &[], 1),
            Err(Error::EmptySeedSet)
        ));
    }

    #[test]
    fn pick_scores_never_increase() {
        let u: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i * 7 % 13) as f64, (i * 5 % 11) as f64])
            .collect();
        let ids: Vec<usize> = (0..30).collect();
        let r = select_coreset_greedy(&ids, &u, &[vec![0.0, 0.0]], 30).unwrap();
        for w in r.entries.windows(2) {
            assert!(w[1].1 <= w[0].1);
        }
    }
}
