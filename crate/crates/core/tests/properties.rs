mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use iclbudget::analysis::{entropy, pearson, pool_entropy};
use iclbudget::corpus::{DEFAULT_ENTITY_TYPES, DEFAULT_POS_TAGS};
use iclbudget::evalmetrics::{las_score, pos_score, strict_ner_score};
use iclbudget::poolselect::{
    select_central, select_cluster, select_random, select_vote_k, Geometry, KMeansParams, VoteKParams,
};
use iclbudget::promptcodec::{parse_completion, render_annotation, CodecConfig};
use iclbudget::retrieval::demonstrations_from_ids;
use iclbudget::{NerAnnotation, ParseAnnotation, ParsedCompletion, Pool, TaskAnnotation, TaskKind};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pools(points: &Points, k: usize, seed: u64) -> Vec<Pool> {
    let store = store_of(points);
    let ids = ids_of(points);
    let votek = VoteKParams { graph_degree: 5, ..Default::default() }.capped(ids.len());
    vec![
        select_central(&store, &ids, k, Geometry::Normalized).unwrap(),
        select_cluster(&store, &ids, k, seed, &KMeansParams::default(), Geometry::Normalized).unwrap(),
        select_random(&ids, k, seed).unwrap(),
        select_vote_k(&store, &ids, k, &votek, None, seed).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pools_hold_k_distinct_train_ids(seed in any::<u64>(), n in 3usize..25, kf in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = random_points(&mut rng, n, 4);
        let k = 1 + (kf * (n - 1) as f64) as usize;
        let train: BTreeSet<String> = ids_of(&points).into_iter().collect();
        for pool in pools(&points, k, seed) {
            prop_assert_eq!(pool.ids.len(), k);
            let distinct: BTreeSet<&String> = pool.ids.iter().collect();
            prop_assert_eq!(distinct.len(), k);
            prop_assert!(pool.ids.iter().all(|id| train.contains(id)));
        }
    }

    #[test]
    fn pools_ignore_input_order(seed in any::<u64>(), n in 3usize..20, k in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = random_points(&mut rng, n, 3);
        let mut shuffled = points.clone();
        shuffled.shuffle(&mut rng);
        for (a, b) in pools(&points, k, seed).into_iter().zip(pools(&shuffled, k, seed)) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn demonstrations_are_pool_members_in_rising_similarity(seed in any::<u64>(), n in 2usize..20, want in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = random_points(&mut rng, n, 3);
        let store = store_of(&points);
        let ids = ids_of(&points);
        let query = &ids[0];
        let demos = demonstrations_from_ids(&ids, &store, query, want).unwrap();
        prop_assert_eq!(demos.len(), want.min(n - 1));
        prop_assert!(demos.ids().all(|id| id != query));
        for w in demos.demos.windows(2) {
            prop_assert!(w[0].similarity <= w[1].similarity);
        }
    }
}

fn ner_pairs(rng: &mut ChaCha8Rng, n: usize) -> (Vec<NerAnnotation>, Vec<ParsedCompletion>) {
    let mut golds = Vec::new();
    let mut preds = Vec::new();
    for _ in 0..n {
        let len = rng.random_range(1..12);
        golds.push(NerAnnotation { entities: random_entities(rng, len, &DEFAULT_ENTITY_TYPES[..3]) });
        preds.push(if rng.random_bool(0.15) {
            ParsedCompletion::format_error("", "bad")
        } else {
            let ann = NerAnnotation { entities: random_entities(rng, len, &DEFAULT_ENTITY_TYPES[..3]) };
            ParsedCompletion::ok("", TaskAnnotation::Ner(ann))
        });
    }
    (golds, preds)
}

fn parse_pairs(rng: &mut ChaCha8Rng, n: usize) -> (Vec<ParseAnnotation>, Vec<ParsedCompletion>) {
    let mut golds = Vec::new();
    let mut preds = Vec::new();
    for _ in 0..n {
        let len = rng.random_range(1..8);
        golds.push(ParseAnnotation { rows: random_rows(rng, len, &DEFAULT_POS_TAGS[..4]) });
        preds.push(if rng.random_bool(0.15) {
            ParsedCompletion::format_error("", "bad")
        } else {
            let ann = ParseAnnotation { rows: random_rows(rng, len, &DEFAULT_POS_TAGS[..4]) };
            ParsedCompletion::ok("", TaskAnnotation::Parse(ann))
        });
    }
    (golds, preds)
}

fn permuted<A: Clone, B: Clone>(a: &[A], b: &[B], rng: &mut ChaCha8Rng) -> (Vec<A>, Vec<B>) {
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.shuffle(rng);
    (order.iter().map(|&i| a[i].clone()).collect(), order.iter().map(|&i| b[i].clone()).collect())
}

fn in_unit(x: Option<f64>) -> bool {
    x.is_some_and(|v| (0.0..=1.0).contains(&v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ner_metric_bounds_and_permutation(seed in any::<u64>(), n in 1usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (golds, preds) = ner_pairs(&mut rng, n);
        let m = strict_ner_score(&golds, &preds).unwrap();
        prop_assert!(in_unit(m.precision) && in_unit(m.recall) && in_unit(m.f1));
        prop_assert!(m.f1.unwrap() <= m.precision.unwrap().max(m.recall.unwrap()) + 1e-12);
        let (g2, p2) = permuted(&golds, &preds, &mut rng);
        prop_assert_eq!(strict_ner_score(&g2, &p2).unwrap(), m);
    }

    #[test]
    fn parse_metric_bounds_and_permutation(seed in any::<u64>(), n in 1usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (golds, preds) = parse_pairs(&mut rng, n);
        let las = las_score(&golds, &preds).unwrap();
        let pos = pos_score(&golds, &preds).unwrap();
        prop_assert!(in_unit(las.las) && in_unit(pos.pos_accuracy));
        if let Some(ok_only) = las.las_ok_only {
            prop_assert!(las.las.unwrap() <= ok_only + 1e-12);
        }
        let (g2, p2) = permuted(&golds, &preds, &mut rng);
        prop_assert_eq!(las_score(&g2, &p2).unwrap(), las);
        prop_assert_eq!(pos_score(&g2, &p2).unwrap(), pos);
    }

    #[test]
    fn pearson_is_affine_invariant(
        xs in prop::collection::vec(-100.0f64..100.0, 3..30),
        a in 0.1f64..10.0, b in -50.0f64..50.0, flip in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x + rng.random_range(-20.0..20.0)).collect();
        let Ok(base) = pearson(&xs, &ys) else { return Ok(()) };
        let s = if flip { -a } else { a };
        let moved: Vec<f64> = xs.iter().map(|x| s * x + b).collect();
        let r = pearson(&moved, &ys).unwrap();
        let want = if flip { -base.r } else { base.r };
        prop_assert!((r.r - want).abs() < 1e-9, "{} vs {}", r.r, want);
        prop_assert!((-1.0..=1.0).contains(&r.r));
        match (r.p_value, base.p_value) {
            (Some(p), Some(q)) => prop_assert!((p - q).abs() < 1e-6),
            (p, q) => prop_assert_eq!(p, q),
        }
    }

    #[test]
    fn entropy_lies_between_zero_and_log_labels(counts in prop::collection::vec(0usize..50, 1..10)) {
        let map: BTreeMap<String, usize> = counts.iter().enumerate().map(|(i, &c)| (format!("L{i}"), c)).collect();
        let nonzero = counts.iter().filter(|&&c| c > 0).count();
        match entropy(&map) {
            Ok(h) => {
                prop_assert!(h >= -1e-12 && h <= (nonzero as f64).ln() + 1e-12);
                prop_assert_eq!(pool_entropy(&map), h);
            }
            Err(_) => prop_assert_eq!(nonzero, 0),
        }
    }

    #[test]
    fn codec_round_trips(seed in any::<u64>(), parse in any::<bool>()) {
        let task = if parse { TaskKind::Depparse } else { TaskKind::Ner };
        let sample = toy_samples(task, "x", 1, seed).remove(0);
        let ann = sample.annotation.clone().unwrap();
        let text = render_annotation(task, &sample.tokens, &ann).unwrap();
        let back = parse_completion(task, &text, &sample, &CodecConfig::default());
        prop_assert!(back.is_ok(), "{:?}", back.error_detail);
        prop_assert_eq!(back.annotation, Some(ann));
    }
}
