mod support;

use mwqa_core::dcs::Value;
use mwqa_core::scene::{
    cuboid_from_points, eval_spatial, eval_spatial_named, query_predicate, SpatialLoc,
    SpatialRelation, DEFAULT_EPS,
};
use mwqa_core::Error;
use proptest::prelude::*;
use rand::Rng;
use support::{random_loc, random_world, relation_oracle, rng, spatial_oracle};

use SpatialRelation::*;

const CLOSE_RELATIONS: [SpatialRelation; 8] = [
    CloseAbove,
    CloseBelow,
    CloseLeftOf,
    CloseRightOf,
    CloseInFrontOf,
    CloseBehind,
    On,
    Close,
];

fn loc(v: [f64; 9]) -> SpatialLoc {
    SpatialLoc::from_array(v).unwrap()
}

#[test]
fn on_example() {
    let a = loc([0.25, 0.75, 0.5, 0.5, 1.0, 0.75, 0.25, 0.75, 0.5]);
    let b = loc([0.0, 1.0, 0.5, 1.0, 2.0, 1.5, 0.0, 1.0, 0.5]);
    assert!(eval_spatial(On, &a, &b, 0.1));
    assert!(eval_spatial(Above, &a, &b, 0.1));
    assert!(!eval_spatial(On, &b, &a, 0.1));
}

#[test]
fn unknown_relation_is_an_error() {
    let a = loc([0.0; 9]);
    assert!(matches!(
        eval_spatial_named("inside", &a, &a, 0.1),
        Err(Error::UnknownRelation(_))
    ));
}

#[test]
fn empty_points_are_an_error() {
    assert!(matches!(cuboid_from_points(&[]), Err(Error::EmptyGeometry)));
}

#[test]
fn cuboid_matches_fold_oracle() {
    let mut r = rng(5);
    let points: Vec<[f64; 3]> = (0..50)
        .map(|_| {
            [
                r.gen_range(-3.0..3.0),
                r.gen_range(-3.0..3.0),
                r.gen_range(-3.0..3.0),
            ]
        })
        .collect();
    let got = cuboid_from_points(&points).unwrap().to_array();
    for axis in 0..3 {
        let vals: Vec<f64> = points.iter().map(|p| p[axis]).collect();
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((got[axis * 3] - min).abs() < 1e-9);
        assert!((got[axis * 3 + 1] - max).abs() < 1e-9);
        assert!((got[axis * 3 + 2] - mean).abs() < 1e-9);
    }
}

#[test]
fn query_category_and_absent_name() {
    let world = support::random_world(&mut rng(1), 8);
    let tables: Vec<Value> = world
        .objects()
        .iter()
        .filter(|o| o.category == "table")
        .map(|o| Value::Inst(o.instance_id))
        .collect();
    let got: Vec<Value> = query_predicate(&world, "table", 0.1)
        .heads()
        .into_iter()
        .collect();
    assert_eq!(got, tables);
    assert!(query_predicate(&world, "piano", 0.1).is_empty());
}

proptest! {
    #[test]
    fn symmetry_identities(seed in any::<u64>(), eps in 0.001f64..1.0) {
        let mut r = rng(seed);
        let (a, b) = (random_loc(&mut r), random_loc(&mut r));
        prop_assert_eq!(eval_spatial(Below, &a, &b, eps), eval_spatial(Above, &b, &a, eps));
        prop_assert_eq!(eval_spatial(RightOf, &a, &b, eps), eval_spatial(LeftOf, &b, &a, eps));
        prop_assert_eq!(eval_spatial(Behind, &a, &b, eps), eval_spatial(InFrontOf, &b, &a, eps));
        prop_assert_eq!(eval_spatial(Close, &a, &b, eps), eval_spatial(Close, &b, &a, eps));
    }

    #[test]
    fn implication_chain(seed in any::<u64>(), eps in 0.001f64..1.0) {
        let mut r = rng(seed);
        let (a, b) = (random_loc(&mut r), random_loc(&mut r));
        if eval_spatial(On, &a, &b, eps) {
            prop_assert!(eval_spatial(CloseAbove, &a, &b, eps));
        }
        if eval_spatial(CloseAbove, &a, &b, eps) {
            prop_assert!(eval_spatial(Above, &a, &b, eps));
        }
    }

    #[test]
    fn close_relations_monotone_in_eps(seed in any::<u64>(), e1 in 0.001f64..1.0, extra in 0.0f64..1.0) {
        let mut r = rng(seed);
        let (a, b) = (random_loc(&mut r), random_loc(&mut r));
        for rel in CLOSE_RELATIONS {
            if eval_spatial(rel, &a, &b, e1) {
                prop_assert!(eval_spatial(rel, &a, &b, e1 + extra), "{rel} lost at larger eps");
            }
        }
    }

    #[test]
    fn relations_match_table(seed in any::<u64>(), eps in 0.001f64..1.0) {
        let mut r = rng(seed);
        let (a, b) = (random_loc(&mut r), random_loc(&mut r));
        for rel in SpatialRelation::ALL {
            prop_assert_eq!(eval_spatial(rel, &a, &b, eps), spatial_oracle(rel, &a, &b, eps), "{}", rel);
        }
    }

    #[test]
    fn relation_query_matches_pair_oracle(seed in any::<u64>()) {
        let world = random_world(&mut rng(seed), 8);
        for rel in SpatialRelation::ALL {
            let got: std::collections::BTreeSet<(u64, u64)> = query_predicate(&world, rel.name(), DEFAULT_EPS)
                .tuples()
                .iter()
                .map(|t| match (&t[0], &t[1]) {
                    (Value::Inst(a), Value::Inst(b)) => (a.0, b.0),
                    other => panic!("unexpected tuple {other:?}"),
                })
                .collect();
            prop_assert_eq!(got, relation_oracle(&world, rel, DEFAULT_EPS));
        }
    }

    #[test]
    fn relation_memo_is_stable(seed in any::<u64>()) {
        let world = random_world(&mut rng(seed), 8);
        let first = world.relation_pairs(Above, 0.1);
        let second = world.relation_pairs(Above, 0.1);
        prop_assert_eq!(first, second);
    }
}
