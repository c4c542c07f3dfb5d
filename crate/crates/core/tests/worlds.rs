mod support;

use std::collections::{BTreeMap, BTreeSet};

use mwqa_core::scene::{InstanceId, ObjectFact, SceneFact};
use mwqa_core::worlds::{
    build_training_world, enumerate_bindings, most_confident_world, sample_bindings, sample_worlds,
    tfidf_select_batches, world_log_prob, FactBatch, FactSet, SegmentLabelDist, SegmentScene,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use support::{random_loc, random_object, random_segment_scene, rng};

fn segment(id: u64, labels: &[(&str, f64)]) -> SegmentLabelDist {
    let labels = labels.iter().map(|(c, p)| (c.to_string(), *p)).collect();
    SegmentLabelDist::new(id, "image1", "red", random_loc(&mut rng(id)), labels).unwrap()
}

#[test]
fn most_confident_single_segment() {
    let scene = SegmentScene::new(vec![segment(1, &[("table", 0.9), ("chair", 0.1)])], vec![]);
    let w = most_confident_world(&scene).unwrap();
    assert_eq!(w.objects()[0].category, "table");
    assert!((w.log_weight() - 0.9f64.ln()).abs() < 1e-12);
}

#[test]
fn most_confident_tie_takes_smallest_term() {
    let scene = SegmentScene::new(vec![segment(1, &[("table", 0.5), ("chair", 0.5)])], vec![]);
    assert_eq!(
        most_confident_world(&scene).unwrap().objects()[0].category,
        "chair"
    );
}

#[test]
fn most_confident_matches_per_segment_argmax() {
    let scene = random_segment_scene(&mut rng(2), 3, 3);
    let w = most_confident_world(&scene).unwrap();
    for seg in &scene.segments {
        let mut best = &seg.labels[0];
        for l in &seg.labels {
            if l.1 > best.1 {
                best = l;
            }
        }
        let o = w.object(InstanceId(seg.segment_id)).unwrap();
        assert_eq!(o.category, best.0);
    }
}

#[test]
fn log_prob_product_form() {
    let scene = SegmentScene::new(
        vec![
            segment(1, &[("a", 0.5), ("b", 0.5)]),
            segment(2, &[("a", 0.5), ("b", 0.5)]),
        ],
        vec![],
    );
    let b = &enumerate_bindings(&scene)[0];
    assert!((world_log_prob(&scene, b).unwrap() - 0.25f64.ln()).abs() < 1e-12);
    let certain = SegmentScene::new(vec![segment(1, &[("a", 1.0)])], vec![]);
    assert_eq!(
        world_log_prob(&certain, &enumerate_bindings(&certain)[0]).unwrap(),
        0.0
    );
}

#[test]
fn degenerate_distribution_always_sampled() {
    let scene = SegmentScene::new(vec![segment(1, &[("table", 1.0)])], vec![]);
    for w in sample_worlds(&scene, 50, 1).unwrap() {
        assert_eq!(w.objects()[0].category, "table");
    }
}

#[test]
fn fair_coin_frequency() {
    let scene = SegmentScene::new(vec![segment(1, &[("table", 0.5), ("chair", 0.5)])], vec![]);
    let n = 10_000;
    let tables = sample_bindings(&scene, n, 7)
        .iter()
        .filter(|b| b.assignment[&1] == "table")
        .count();
    let f = tables as f64 / n as f64;
    assert!((0.47..=0.53).contains(&f), "{f}");
}

#[test]
fn sampling_is_deterministic() {
    let scene = random_segment_scene(&mut rng(3), 4, 3);
    assert_eq!(
        sample_worlds(&scene, 30, 9).unwrap(),
        sample_worlds(&scene, 30, 9).unwrap()
    );
    assert_ne!(
        sample_bindings(&scene, 30, 9),
        sample_bindings(&scene, 30, 10)
    );
}

fn cosine_oracle(query: &BTreeSet<String>, corpus: &[FactBatch]) -> Vec<(f64, String)> {
    let vocab: BTreeSet<&String> = corpus.iter().flat_map(|b| &b.term_set).collect();
    let n = corpus.len() as f64;
    let idf: BTreeMap<&String, f64> = vocab
        .iter()
        .map(|t| {
            (
                *t,
                (n / corpus.iter().filter(|b| b.term_set.contains(*t)).count() as f64).ln(),
            )
        })
        .collect();
    let vec_of = |terms: &BTreeSet<String>| -> Vec<f64> {
        vocab
            .iter()
            .map(|t| if terms.contains(*t) { idf[t] } else { 0.0 })
            .collect()
    };
    let q = vec_of(query);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut out: Vec<(f64, String)> = corpus
        .iter()
        .map(|b| {
            let d = vec_of(&b.term_set);
            let dot: f64 = q.iter().zip(&d).map(|(a, b)| a * b).sum();
            let denom = norm(&q) * norm(&d);
            (
                if denom > 0.0 { dot / denom } else { 0.0 },
                b.batch_id.clone(),
            )
        })
        .collect();
    out.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    out
}

fn batch(id: &str, terms: &[&str]) -> FactBatch {
    FactBatch::new(id, terms.iter().copied())
}

#[test]
fn unique_term_batch_ranks_first() {
    let corpus = vec![
        batch("a", &["table", "chair"]),
        batch("b", &["table", "piano"]),
        batch("c", &["table", "chair", "lamp"]),
    ];
    let r = tfidf_select_batches(&batch("q", &["table", "piano"]), &corpus, 1).unwrap();
    assert_eq!(r.ids, ["b"]);
    assert!(!r.degenerate);
}

#[test]
fn hand_built_ranking_matches_cosine_oracle() {
    let corpus = vec![
        batch("img1", &["table", "chair", "brown"]),
        batch("img2", &["sofa", "lamp", "white", "kitchen"]),
        batch("img3", &["table", "lamp", "brown", "office"]),
        batch("img4", &["chair", "white", "kitchen"]),
    ];
    let query = batch("q", &["table", "brown", "kitchen", "white"]);
    let r = tfidf_select_batches(&query, &corpus, 4).unwrap();
    let oracle: Vec<String> = cosine_oracle(&query.term_set, &corpus)
        .into_iter()
        .map(|(_, id)| id)
        .collect();
    assert_eq!(r.ids, oracle);
}

#[test]
fn ubiquitous_term_carries_no_weight() {
    let corpus = vec![batch("a", &["table", "x"]), batch("b", &["table", "y"])];
    let r = tfidf_select_batches(&batch("q", &["table"]), &corpus, 2).unwrap();
    // every similarity is zero, so the order is by id
    assert_eq!(r.ids, ["a", "b"]);
}

#[test]
fn empty_query_is_degenerate() {
    let corpus = vec![batch("b", &["x"]), batch("a", &["y"]), batch("c", &["z"])];
    let r = tfidf_select_batches(&batch("q", &[]), &corpus, 2).unwrap();
    assert_eq!(r.ids, ["a", "b"]);
    assert!(r.degenerate);
}

fn facts(rng: &mut impl Rng, image: &str, ids: std::ops::Range<u64>) -> FactSet {
    FactSet {
        objects: ids.map(|id| random_object(rng, id, image)).collect(),
        scenes: vec![SceneFact {
            image_id: image.into(),
            room_type: "kitchen".into(),
        }],
    }
}

#[test]
fn single_batch_is_identity() {
    let f = facts(&mut rng(1), "image1", 1..4);
    assert_eq!(build_training_world(&[&f]).unwrap(), f.to_world().unwrap());
}

#[test]
fn disjoint_batches_union() {
    let mut r = rng(2);
    let a = facts(&mut r, "image1", 1..4);
    let b = facts(&mut r, "image2", 10..14);
    assert_eq!(build_training_world(&[&a, &b]).unwrap().objects().len(), 7);
}

#[test]
fn overlapping_batches_equal_set_union() {
    let mut r = rng(3);
    let a = facts(&mut r, "image1", 1..5);
    let mut b = facts(&mut r, "image2", 10..13);
    b.objects.extend(a.objects[..2].iter().cloned());
    let mut c = facts(&mut r, "image3", 20..22);
    c.objects.extend(b.objects[..1].iter().cloned());
    let w = build_training_world(&[&a, &b, &c]).unwrap();
    let union: BTreeSet<(u64, String)> = [&a, &b, &c]
        .iter()
        .flat_map(|f| {
            f.objects
                .iter()
                .map(|o| (o.instance_id.0, o.category.clone()))
        })
        .collect();
    let got: BTreeSet<(u64, String)> = w
        .objects()
        .iter()
        .map(|o| (o.instance_id.0, o.category.clone()))
        .collect();
    assert_eq!(got, union);
}

#[test]
fn clashing_ids_are_rekeyed() {
    let mut r = rng(4);
    let a = facts(&mut r, "image1", 1..3);
    let mut b = facts(&mut r, "image2", 1..3);
    b.objects[0].category = "piano".into();
    let w = build_training_world(&[&a, &b]).unwrap();
    assert_eq!(w.objects().len(), 4);
    let ids: BTreeSet<InstanceId> = w.objects().iter().map(|o| o.instance_id).collect();
    assert_eq!(ids.len(), 4);
    assert!(w
        .objects()
        .iter()
        .any(|o: &ObjectFact| o.category == "piano"));
}

proptest! {
    #[test]
    fn binding_probabilities_sum_to_one(seed in any::<u64>(), k in 1usize..=4, c in 1usize..=3) {
        let scene = random_segment_scene(&mut rng(seed), k, c);
        let bindings = enumerate_bindings(&scene);
        prop_assert_eq!(bindings.len(), c.pow(k as u32));
        let total: f64 = bindings.iter().map(|b| world_log_prob(&scene, b).unwrap().exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn most_confident_dominates_samples(seed in any::<u64>()) {
        let scene = random_segment_scene(&mut rng(seed), 4, 3);
        let best = most_confident_world(&scene).unwrap().log_weight();
        for w in sample_worlds(&scene, 20, seed).unwrap() {
            prop_assert!(best >= w.log_weight() - 1e-12);
        }
    }

    #[test]
    fn ranking_ignores_corpus_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let terms = ["table", "chair", "lamp", "sofa", "red", "white", "kitchen", "office"];
        let corpus: Vec<FactBatch> = (0..6)
            .map(|i| {
                let t: Vec<&str> = terms.iter().copied().filter(|_| r.gen_bool(0.4)).collect();
                FactBatch::new(format!("img{i}"), t)
            })
            .collect();
        let q: Vec<&str> = terms.iter().copied().filter(|_| r.gen_bool(0.5)).collect();
        let query = FactBatch::new("q", q);
        let mut shuffled = corpus.clone();
        shuffled.shuffle(&mut r);
        prop_assert_eq!(
            tfidf_select_batches(&query, &corpus, 6).unwrap(),
            tfidf_select_batches(&query, &shuffled, 6).unwrap()
        );
    }
}
