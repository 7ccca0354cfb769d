use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::annotation::{price_acquisition, AnnotationUnit, ClickMeter};
use crate::error::{Error, Result};
use crate::model::{Dataset, SampleId};

/// Class-balanced initial labeled set of `budget` samples: every class gets
/// `budget / K` samples and a seed-chosen `budget % K` classes get one more;
/// members are drawn uniformly within each class. Returned sorted.
pub fn init_class_balanced(dataset: &Dataset, budget: usize, seed: u64) -> Result<Vec<SampleId>> {
    let k = dataset.num_classes;
    if budget > dataset.len() {
        return Err(Error::PoolTooSmall {
            requested: budget,
            available: dataset.len(),
        });
    }
    if k == 0 {
        return Err(Error::Config("dataset has no classes".into()));
    }
    let mut by_class: Vec<Vec<SampleId>> = vec![Vec::new(); k];
    for i in 0..dataset.len() {
        let c = dataset.class_of(i).ok_or_else(|| {
            Error::Config("class-balanced initialization needs class targets".into())
        })?;
        by_class[c].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut rng);
    let mut quota = vec![budget / k; k];
    for &c in order.iter().take(budget % k) {
        quota[c] += 1;
    }
    let mut chosen = Vec::with_capacity(budget);
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.len() < quota[c] {
            return Err(Error::ClassQuota {
                class: c,
                available: members.len(),
                quota: quota[c],
            });
        }
        let (picked, _) = members.partial_shuffle(&mut rng, quota[c]);
        chosen.extend_from_slice(picked);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Whole images in seeded random order, charged all-or-nothing against a
/// click allowance; unaffordable images are skipped. Returns the cost of
/// every acquired image.
pub fn init_random_images<F>(
    candidates: &[SampleId],
    clicks: u64,
    seed: u64,
    cost: F,
) -> Result<BTreeMap<SampleId, u64>>
where
    F: Fn(SampleId) -> Result<u64>,
{
    let mut order = candidates.to_vec();
    order.sort_unstable();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut meter = ClickMeter::new(clicks);
    let mut out = BTreeMap::new();
    for i in order {
        if meter.remaining() == 0 {
            break;
        }
        let c = cost(i)?;
        if meter.try_charge(c) {
            out.insert(i, c);
        }
    }
    Ok(out)
}

/// Image-level click price of a sample's ground-truth mask.
pub fn image_price(dataset: &Dataset, index: SampleId, tolerance: f64) -> Result<u64> {
    let mask = dataset.mask_of(index).ok_or(Error::IndexOutOfRange {
        index,
        len: dataset.len(),
    })?;
    price_acquisition(mask, AnnotationUnit::Image, tolerance)
}

/// A seeded sample of `count` candidates, for sample-denominated budgets on
/// segmentation data.
pub fn init_random_samples(candidates: &[SampleId], count: usize, seed: u64) -> Result<Vec<SampleId>> {
    let ranking = crate::strategies::select_random_from(candidates, count, seed)?;
    let mut ids = ranking.ids();
    ids.sort_unstable();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Sample, Target, Task};

    fn labeled(classes: &[usize], k: usize) -> Dataset {
        Dataset {
            items: classes.iter().map(|_| Sample::Vector(vec![0.0])).collect(),
            targets: classes.iter().map(|&c| Target::Class(c)).collect(),
            num_classes: k,
            task: Task::Classification,
        }
    }

    fn counts(ds: &Dataset, ids: &[SampleId]) -> Vec<usize> {
        let mut c = vec![0; ds.num_classes];
        ids.iter().for_each(|&i| c[ds.class_of(i).unwrap()] += 1);
        c
    }

    #[test]
    fn exact_division() {
        let classes: Vec<usize> = (0..1000).map(|i| i % 10).collect();
        let ds = labeled(&classes, 10);
        let ids = init_class_balanced(&ds, 250, 1).unwrap();
        assert_eq!(counts(&ds, &ids), vec![25; 10]);
    }

    #[test]
    fn remainder_goes_to_seed_chosen_class() {
        let classes: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let ds = labeled(&classes, 3);
        let mut doubled = std::collections::BTreeSet::new();
        for seed in 0..20 {
            let c = counts(&ds, &init_class_balanced(&ds, 4, seed).unwrap());
            let mut sorted = c.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, vec![1, 1, 2]);
            doubled.insert(c.iter().position(|&n| n == 2).unwrap());
        }
        assert!(doubled.len() > 1);
    }

    #[test]
    fn unaffordable_images_are_skipped() {
        let costs = [4u64, 9, 3, 5];
        let got = init_random_images(&[0, 1, 2, 3], 10, 5, |i| Ok(costs[i])).unwrap();
        let spent: u64 = got.values().sum();
        assert!(spent <= 10);
        // nothing left out could still be afforded
        let left = 10 - spent;
        assert!((0..4).filter(|i| !got.contains_key(i)).all(|i| costs[i] > left));
    }

    #[test]
    fn short_class_is_reported() {
        let ds = labeled(&[0, 0, 0, 1], 2);
        assert!(matches!(
            init_class_balanced(&ds, 4, 0),
            Err(Error::ClassQuota { class: 1, available: 1, quota: 2 })
        ));
    }
}
