//! Random generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use mwqa_core::dcs::{Answer, DcsTree, Direction, Edge, Marker, NegationDomain, Value};
use mwqa_core::evaluation::{wup, Taxonomy, DOWN_WEIGHT};
use mwqa_core::parser::answer_posterior;
use mwqa_core::parser::train::ExampleCandidates;
use mwqa_core::parser::TrainingProblem;
use mwqa_core::scene::{InstanceId, ObjectFact, SceneFact, SpatialLoc, SpatialRelation, World};
use mwqa_core::worlds::{
    enumerate_bindings, world_from_binding, world_log_prob, SegmentLabelDist, SegmentScene,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CATEGORIES: [&str; 4] = ["table", "chair", "lamp", "sofa"];
pub const COLORS: [&str; 3] = ["red", "brown", "white"];
pub const ROOMS: [&str; 2] = ["kitchen", "office"];
pub const IMAGES: [&str; 3] = ["image1", "image2", "image3"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Coordinate on a coarse grid half the time, so that ties occur.
fn coord(rng: &mut impl Rng) -> f64 {
    if rng.gen_bool(0.5) {
        rng.gen_range(0..=8) as f64 * 0.25
    } else {
        rng.gen_range(0.0..2.0)
    }
}

pub fn random_loc(rng: &mut impl Rng) -> SpatialLoc {
    let mut v = [0.0; 9];
    for axis in 0..3 {
        let (a, b) = (coord(rng), coord(rng));
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mean = if rng.gen_bool(0.5) {
            (lo + hi) / 2.0
        } else {
            rng.gen_range(lo..=hi)
        };
        v[axis * 3] = lo;
        v[axis * 3 + 1] = hi;
        v[axis * 3 + 2] = mean;
    }
    SpatialLoc::from_array(v).unwrap()
}

pub fn random_object(rng: &mut impl Rng, id: u64, image: &str) -> ObjectFact {
    ObjectFact {
        category: CATEGORIES.choose(rng).unwrap().to_string(),
        instance_id: InstanceId(id),
        image_id: image.to_string(),
        color: COLORS.choose(rng).unwrap().to_string(),
        loc: random_loc(rng),
    }
}

/// A world of 1..=`max_objects` objects spread over up to three images.
pub fn random_world(rng: &mut impl Rng, max_objects: usize) -> World {
    let n_images = rng.gen_range(1..=IMAGES.len());
    let n = rng.gen_range(1..=max_objects);
    let mut ids: Vec<u64> = (1..=20).collect();
    ids.shuffle(rng);
    let objects: Vec<ObjectFact> = ids[..n]
        .iter()
        .map(|&id| {
            let image = IMAGES[rng.gen_range(0..n_images)];
            random_object(rng, id, image)
        })
        .collect();
    let mut scenes = Vec::new();
    for i in &IMAGES[..n_images] {
        if rng.gen_bool(0.8) {
            scenes.push(SceneFact {
                image_id: i.to_string(),
                room_type: ROOMS.choose(rng).unwrap().to_string(),
            });
        }
    }
    World::new(objects, scenes, 0.0).unwrap()
}

const RELATIONS: [SpatialRelation; 5] = [
    SpatialRelation::Above,
    SpatialRelation::LeftOf,
    SpatialRelation::On,
    SpatialRelation::Close,
    SpatialRelation::CloseInFrontOf,
];

fn random_predicate(rng: &mut impl Rng) -> (String, usize) {
    let unary: Vec<&str> = CATEGORIES
        .iter()
        .chain(&COLORS)
        .chain(&ROOMS)
        .chain(&IMAGES)
        .chain(&["object", "images", "piano"])
        .copied()
        .collect();
    match rng.gen_range(0..10) {
        0 => ("image".into(), 2),
        1 => ("room_type".into(), 2),
        2 => (RELATIONS.choose(rng).unwrap().name().into(), 2),
        _ => (unary.choose(rng).unwrap().to_string(), 1),
    }
}

fn random_marker(rng: &mut impl Rng) -> Marker {
    match rng.gen_range(0..5) {
        0 => Marker::Count,
        1 => Marker::Superlative(Direction::Max),
        2 => Marker::Superlative(Direction::Min),
        3 => Marker::Negate(NegationDomain::Images),
        _ => Marker::Negate(NegationDomain::Instances),
    }
}

/// A random tree of depth at most `depth`. Join indices are usually, but not
/// always, within the arities involved, so some trees are ill-typed.
pub fn random_tree(rng: &mut impl Rng, depth: usize) -> DcsTree {
    let (name, arity) = random_predicate(rng);
    let mut tree = DcsTree::leaf(name);
    if depth > 1 {
        for _ in 0..rng.gen_range(0..=2) {
            let child = random_tree(rng, depth - 1);
            if rng.gen_bool(0.25) {
                tree = tree.bridge(*RELATIONS.choose(rng).unwrap(), child);
            } else {
                let child_arity = if child.markers().next().is_some() {
                    1
                } else {
                    oracle_arity(&child.predicate)
                };
                let wild = rng.gen_bool(0.05);
                let p = if wild { 3 } else { rng.gen_range(1..=arity) };
                let c = rng.gen_range(1..=child_arity);
                tree = tree.join(p, c, child);
            }
        }
    }
    if rng.gen_bool(0.3) {
        tree = tree.mark(random_marker(rng));
    }
    tree
}

/// Table 1 of spatial predicates, written out from the cuboid coordinates.
pub fn spatial_oracle(rel: SpatialRelation, a: &SpatialLoc, b: &SpatialLoc, eps: f64) -> bool {
    let [axmin, axmax, axmean, aymin, aymax, aymean, azmin, azmax, azmean] = a.to_array();
    let [bxmin, bxmax, bxmean, bymin, bymax, bymean, bzmin, bzmax, bzmean] = b.to_array();
    let left_ab = axmean < bxmean;
    let left_ba = bxmean < axmean;
    let above_ab = aymean < bymean;
    let above_ba = bymean < aymean;
    let front_ab = azmean < bzmean;
    let front_ba = bzmean < azmean;
    let close_above_ab = above_ab && bymin < aymax + eps;
    let close_above_ba = above_ba && aymin < bymax + eps;
    let close_left_ab = left_ab && bxmin < axmax + eps;
    let close_left_ba = left_ba && axmin < bxmax + eps;
    let close_front_ab = front_ab && bzmin < azmax + eps;
    let close_front_ba = front_ba && azmin < bzmax + eps;
    let x_aux = axmean < bxmax && bxmin < axmean;
    let z_aux = azmean < bzmax && bzmin < azmean;
    use SpatialRelation::*;
    match rel {
        LeftOf => left_ab,
        RightOf => left_ba,
        Above => above_ab,
        Below => above_ba,
        InFrontOf => front_ab,
        Behind => front_ba,
        CloseAbove => close_above_ab,
        CloseBelow => close_above_ba,
        CloseLeftOf => close_left_ab,
        CloseRightOf => close_left_ba,
        CloseInFrontOf => close_front_ab,
        CloseBehind => close_front_ba,
        On => close_above_ab && z_aux && x_aux,
        Close => {
            close_above_ab
                || close_above_ba
                || close_left_ab
                || close_left_ba
                || close_front_ab
                || close_front_ba
        }
    }
}

/// All ordered pairs of distinct same-image objects satisfying `rel`.
pub fn relation_oracle(world: &World, rel: SpatialRelation, eps: f64) -> BTreeSet<(u64, u64)> {
    let mut out = BTreeSet::new();
    for a in world.objects() {
        for b in world.objects() {
            if a.instance_id != b.instance_id
                && a.image_id == b.image_id
                && spatial_oracle(rel, &a.loc, &b.loc, eps)
            {
                out.insert((a.instance_id.0, b.instance_id.0));
            }
        }
    }
    out
}

fn oracle_arity(name: &str) -> usize {
    if SpatialRelation::lookup(name).is_some() || name == "image" || name == "room_type" {
        2
    } else {
        1
    }
}

pub type Tuples = BTreeSet<Vec<Value>>;

fn oracle_leaf(world: &World, name: &str, eps: f64) -> Tuples {
    let inst = |o: &ObjectFact| Value::Inst(o.instance_id);
    let mut out = Tuples::new();
    if let Some(rel) = SpatialRelation::lookup(name) {
        for (a, b) in relation_oracle(world, rel, eps) {
            out.insert(vec![Value::Inst(InstanceId(a)), Value::Inst(InstanceId(b))]);
        }
        return out;
    }
    match name {
        "image" => {
            for o in world.objects() {
                out.insert(vec![inst(o), Value::Image(o.image_id.clone())]);
            }
        }
        "room_type" => {
            for s in world.scenes() {
                out.insert(vec![
                    Value::Term(s.room_type.clone()),
                    Value::Image(s.image_id.clone()),
                ]);
            }
        }
        "images" => {
            for o in world.objects() {
                out.insert(vec![Value::Image(o.image_id.clone())]);
            }
            for s in world.scenes() {
                out.insert(vec![Value::Image(s.image_id.clone())]);
            }
        }
        "object" => {
            for o in world.objects() {
                out.insert(vec![inst(o)]);
            }
        }
        _ => {
            for o in world.objects() {
                if o.category == name || o.color == name {
                    out.insert(vec![inst(o)]);
                }
                if o.image_id == name {
                    out.insert(vec![Value::Image(name.to_string())]);
                }
            }
            for s in world.scenes() {
                if s.room_type == name {
                    out.insert(vec![Value::Image(s.image_id.clone())]);
                }
                if s.image_id == name {
                    out.insert(vec![Value::Image(name.to_string())]);
                }
            }
        }
    }
    out
}

fn volume(world: &World, v: &Value) -> Option<f64> {
    match v {
        Value::Inst(id) => world
            .objects()
            .iter()
            .find(|o| o.instance_id == *id)
            .map(|o| {
                let [x0, x1, _, y0, y1, _, z0, z1, _] = o.loc.to_array();
                (x1 - x0) * (y1 - y0) * (z1 - z0)
            }),
        _ => None,
    }
}

/// Brute-force evaluation: keep each candidate tuple of the node predicate for
/// which every join and bridge child has a witness, then apply the markers.
/// `None` marks an ill-typed tree.
pub fn oracle_eval(tree: &DcsTree, world: &World, eps: f64) -> Option<(usize, Tuples)> {
    let mut arity = oracle_arity(&tree.predicate);
    let base = oracle_leaf(world, &tree.predicate, eps);
    let mut constraints = Vec::new();
    let mut markers = Vec::new();
    for e in &tree.edges {
        match e {
            Edge::Join {
                parent_arg,
                child_arg,
                child,
            } => {
                let (child_arity, tuples) = oracle_eval(child, world, eps)?;
                if *parent_arg > arity || *child_arg > child_arity {
                    return None;
                }
                constraints.push((Some((*parent_arg, *child_arg)), None, tuples));
            }
            Edge::Bridge { via, child } => {
                let (_, tuples) = oracle_eval(child, world, eps)?;
                constraints.push((None, Some(*via), tuples));
            }
            Edge::Mark { marker, .. } => markers.push(*marker),
        }
    }
    let pairs_of = |rel: SpatialRelation| relation_oracle(world, rel, eps);
    let mut current: Tuples = base
        .into_iter()
        .filter(|v| {
            constraints
                .iter()
                .all(|(join, via, witnesses)| match (join, via) {
                    (Some((p, c)), _) => witnesses.iter().any(|t| t[c - 1] == v[p - 1]),
                    (None, Some(rel)) => {
                        let pairs = pairs_of(*rel);
                        witnesses.iter().any(|t| match (&v[0], &t[0]) {
                            (Value::Inst(a), Value::Inst(b)) => pairs.contains(&(a.0, b.0)),
                            _ => false,
                        })
                    }
                    (None, None) => unreachable!(),
                })
        })
        .collect();
    for m in markers {
        let heads: BTreeSet<Value> = current.iter().map(|t| t[0].clone()).collect();
        current = match m {
            Marker::Count => [vec![Value::Num(heads.len() as i64)]].into_iter().collect(),
            Marker::Superlative(dir) => {
                let mut best: Option<(f64, Value)> = None;
                for h in heads {
                    let vol = volume(world, &h)?;
                    let take = match &best {
                        None => true,
                        Some((b, _)) => match dir {
                            Direction::Max => vol > *b,
                            Direction::Min => vol < *b,
                        },
                    };
                    // heads iterate in ascending id order, so strict comparison keeps the smallest id on ties
                    if take {
                        best = Some((vol, h));
                    }
                }
                best.into_iter().map(|(_, v)| vec![v]).collect()
            }
            Marker::Negate(NegationDomain::Images) => {
                let all: BTreeSet<&str> = world.images().iter().map(String::as_str).collect();
                all.into_iter()
                    .map(|i| Value::Image(i.to_string()))
                    .filter(|v| !heads.contains(v))
                    .map(|v| vec![v])
                    .collect()
            }
            Marker::Negate(NegationDomain::Instances) => world
                .objects()
                .iter()
                .map(|o| Value::Inst(o.instance_id))
                .filter(|v| !heads.contains(v))
                .map(|v| vec![v])
                .collect(),
        };
        arity = 1;
    }
    Some((arity, current))
}

/// Exact answer posterior over every binding, weighted by its probability.
pub fn exact_posterior(
    trees: &[(DcsTree, f64)],
    scene: &SegmentScene,
    eps: f64,
) -> BTreeMap<Answer, f64> {
    let mut out: BTreeMap<Answer, f64> = BTreeMap::new();
    for b in enumerate_bindings(scene) {
        let w = world_log_prob(scene, &b).unwrap().exp();
        let world = world_from_binding(scene, &b).unwrap();
        for (a, p) in answer_posterior(trees, &world, eps) {
            *out.entry(a).or_insert(0.0) += w * p;
        }
    }
    out
}

pub fn total_variation(a: &BTreeMap<Answer, f64>, b: &BTreeMap<Answer, f64>) -> f64 {
    let keys: BTreeSet<&Answer> = a.keys().chain(b.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// A small furniture taxonomy:
///
/// ```text
/// entity ─ object ─┬─ furniture ─┬─ seat ─┬─ chair ─ armchair
///                  │             │        └─ sofa
///                  │             └─ table ─ desk
///                  └─ device ─── lamp
/// ```
pub fn toy_taxonomy() -> Taxonomy {
    Taxonomy::from_edges([
        ("object", "entity"),
        ("furniture", "object"),
        ("device", "object"),
        ("seat", "furniture"),
        ("table", "furniture"),
        ("chair", "seat"),
        ("sofa", "seat"),
        ("armchair", "chair"),
        ("desk", "table"),
        ("lamp", "device"),
    ])
    .unwrap()
}

pub const TOY_TERMS: [&str; 8] = [
    "chair", "sofa", "armchair", "table", "desk", "lamp", "seat", "vase",
];

pub fn random_answer(rng: &mut impl Rng) -> Answer {
    let n = rng.gen_range(0..=3);
    Answer::new((0..n).map(|_| *TOY_TERMS.choose(rng).unwrap()))
}

/// Directed product of best matches, written as a plain double loop.
fn directed(from: &Answer, to: &Answer, tax: &Taxonomy, t: f64) -> f64 {
    let mut product = 1.0;
    for a in from.terms() {
        let mut best = 0.0f64;
        for b in to.terms() {
            let mut s = wup(a, b, tax);
            if s < t {
                s *= DOWN_WEIGHT;
            }
            if s > best {
                best = s;
            }
        }
        product *= best;
    }
    product
}

pub fn wups_oracle(preds: &[Answer], golds: &[Answer], tax: &Taxonomy, t: f64) -> f64 {
    let mut total = 0.0;
    for (p, g) in preds.iter().zip(golds) {
        let v = if p.is_empty() && g.is_empty() {
            1.0
        } else if p.is_empty() || g.is_empty() {
            0.0
        } else {
            directed(p, g, tax, t).min(directed(g, p, tax, t))
        };
        total += v;
    }
    100.0 * total / preds.len() as f64
}

/// A scene of `k` segments in one image, each with a random distribution
/// over the first `c` categories.
pub fn random_segment_scene(rng: &mut impl Rng, k: usize, c: usize) -> SegmentScene {
    let segments = (1..=k as u64)
        .map(|id| {
            let raw: Vec<f64> = (0..c).map(|_| rng.gen_range(0.05..1.0)).collect();
            let z: f64 = raw.iter().sum();
            let labels = CATEGORIES[..c]
                .iter()
                .zip(&raw)
                .map(|(cat, p)| (cat.to_string(), p / z))
                .collect();
            let color = COLORS.choose(rng).unwrap().to_string();
            SegmentLabelDist::new(id, "image1", color, random_loc(rng), labels).unwrap()
        })
        .collect();
    SegmentScene::new(segments, vec![])
}

/// A fixed-candidate objective over `dim` features with random sparse
/// feature counts; every example has at least one correct candidate.
pub fn random_training_problem(rng: &mut impl Rng, dim: usize) -> TrainingProblem {
    let examples = (0..rng.gen_range(2..=5))
        .map(|_| {
            let n = rng.gen_range(2..=5);
            let features: Vec<Vec<(usize, f64)>> = (0..n)
                .map(|_| {
                    let mut f = Vec::new();
                    for i in 0..dim {
                        if rng.gen_bool(0.5) {
                            f.push((i, rng.gen_range(1..=3) as f64));
                        }
                    }
                    f
                })
                .collect();
            let mut correct: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            correct[rng.gen_range(0..n)] = true;
            ExampleCandidates {
                answers: vec![Answer::empty(); n],
                features,
                correct,
            }
        })
        .collect();
    TrainingProblem { examples, dim }
}

/// `‖analytic − central difference‖ / max(‖analytic‖, ‖numeric‖)`.
pub fn gradient_relative_error(problem: &TrainingProblem, theta: &[f64], l2: f64) -> f64 {
    let g = problem.gradient(theta, l2);
    let h = 1e-5;
    let numeric: Vec<f64> = (0..theta.len())
        .map(|i| {
            let mut up = theta.to_vec();
            let mut down = theta.to_vec();
            up[i] += h;
            down[i] -= h;
            (problem.objective(&up, l2) - problem.objective(&down, l2)) / (2.0 * h)
        })
        .collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = g.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    let scale = norm(&g).max(norm(&numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}
