use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use albench_core::adapter::{Kind, Message};
use albench_core::annotation::{polygonize, rasterize, ClickMeter, LabelMask};
use albench_core::io::{decode_mask_png, encode_mask_png};
use albench_core::learners::{decode_checkpoint, encode_checkpoint, softmax, ModelKind, Network};
use albench_core::model::{PoolState, PredictionBundle};
use albench_core::strategies::{
    select_entropy, select_random, shannon_entropy, variation_ratio,
};
use albench_core::synthetic::random_blob_mask;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn acquisitions_keep_the_pool_partitioned(
        n in 1usize..60,
        rounds in prop::collection::vec((0usize..10, any::<u64>()), 1..8),
    ) {
        let mut pool = PoolState::new(n);
        let mut seen = BTreeSet::new();
        for (k, seed) in rounds {
            let k = k.min(pool.unlabeled.len());
            let picks: BTreeSet<usize> = select_random(&pool, k, seed).unwrap().ids().into_iter().collect();
            prop_assert!(picks.len() <= k);
            prop_assert!(picks.is_disjoint(&seen));
            seen.extend(&picks);
            pool = pool.apply_acquisition(&picks, &BTreeMap::new()).unwrap();
            pool.check(n).unwrap();
            prop_assert_eq!(pool.labeled.len(), seen.len());
        }
    }

    #[test]
    fn reacquiring_is_rejected(n in 2usize..30, i in 0usize..30) {
        let i = i % n;
        let once = PoolState::new(n).apply_acquisition(&BTreeSet::from([i]), &BTreeMap::new()).unwrap();
        prop_assert!(once.apply_acquisition(&BTreeSet::from([i]), &BTreeMap::new()).is_err());
    }

    #[test]
    fn click_meter_never_overspends(budget in 0u64..500, costs in prop::collection::vec(0u64..120, 0..40)) {
        let mut meter = ClickMeter::new(budget);
        let mut spent = 0;
        for c in costs {
            let before = meter.remaining();
            if meter.try_charge(c) {
                spent += c;
                prop_assert_eq!(meter.remaining(), before - c);
            } else {
                prop_assert!(c > before);
                prop_assert_eq!(meter.remaining(), before);
            }
        }
        prop_assert!(spent <= budget);
    }

    #[test]
    fn softmax_lands_on_the_simplex(z in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        let h = shannon_entropy(&p).unwrap();
        prop_assert!(h >= 0.0 && h <= (z.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn variation_ratio_is_bounded(votes in prop::collection::vec(0usize..5, 1..20)) {
        let v = variation_ratio(&votes).unwrap();
        let classes = votes.iter().collect::<BTreeSet<_>>().len() as f64;
        prop_assert!(v >= 0.0 && v <= 1.0 - 1.0 / classes.max(1.0) + 1e-12);
    }

    #[test]
    fn entropy_ranking_is_sorted(rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 1..30), k in 1usize..30) {
        let probs: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|v| v / s).collect()
            })
            .collect();
        let mut b = PredictionBundle::new((0..probs.len()).collect());
        b.probs = Some(probs);
        let k = k.min(rows.len());
        let ranking = select_entropy(&b, k).unwrap();
        prop_assert_eq!(ranking.len(), k);
        let scores: Vec<f64> = ranking.entries.iter().map(|e| e.1).collect();
        prop_assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn clicks_fall_as_tolerance_grows(seed in any::<u64>(), w in 4usize..32, h in 4usize..32) {
        let mask = random_blob_mask(w, h, 4, &mut ChaCha8Rng::seed_from_u64(seed));
        let exact = polygonize(&mask, 0.0);
        let back = rasterize(&exact, w, h, 0).unwrap();
        prop_assert!(back.same_outside_void(&mask));
        let mut prev = exact.clicks();
        for eps in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            let c = polygonize(&mask, eps).clicks();
            prop_assert!(c <= prev);
            prev = c;
        }
    }

    #[test]
    fn mask_png_round_trips(seed in any::<u64>(), w in 1usize..20, h in 1usize..20) {
        let mask = random_blob_mask(w, h, 5, &mut ChaCha8Rng::seed_from_u64(seed));
        let back = decode_mask_png(&encode_mask_png(&mask).unwrap(), None).unwrap();
        prop_assert_eq!(back.pixels, mask.pixels);
    }

    #[test]
    fn checkpoints_round_trip_at_f32(seed in any::<u64>(), hidden in 1usize..6, head in any::<bool>()) {
        let net = Network::init(ModelKind::Mlp, &[3, hidden, hidden, 2], head, seed);
        let back = decode_checkpoint(&encode_checkpoint(&net)).unwrap();
        prop_assert_eq!(back.param_count(), net.param_count());
        for (a, b) in net.params().iter().zip(back.params()) {
            prop_assert_eq!(*a as f32 as f64, *b);
        }
    }

    #[test]
    fn messages_round_trip(id in any::<u64>(), text in "[a-z ]{0,20}") {
        let msg = Message::new(Kind::Ack, id, &serde_json::json!({ "note": text })).unwrap();
        prop_assert_eq!(Message::parse(&msg.to_line()).unwrap(), msg);
    }
}

#[test]
fn only_void_pixels_cost_nothing() {
    assert_eq!(polygonize(&LabelMask::filled(6, 6, 0), 0.0).clicks(), 24);
    assert_eq!(polygonize(&LabelMask::filled(6, 6, 0), 0.5).clicks(), 4);
    let void = LabelMask::new(3, 3, vec![255; 9], Some(255));
    assert_eq!(polygonize(&void, 0.0).clicks(), 0);
}
