//! Possible worlds induced by an uncertain segmentation.
//!
//! Each segment carries a categorical distribution over object categories.
//! A binding assigns one category per segment and defines one world with
//! probability `Π_i p(i, f(i))`. Worlds are either the single most-confident
//! one or independent samples; for large corpora the training world can be
//! restricted to the batches most similar to a query image.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scene::{InstanceId, ObjectFact, SceneFact, SpatialLoc, World};

/// Default number of sampled worlds.
pub const DEFAULT_N_WORLDS: usize = 25;
/// Default number of nearest training batches.
pub const DEFAULT_K_BATCHES: usize = 3;

const SUM_TOLERANCE: f64 = 1e-6;

/// One segment with its label distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentLabelDist {
    pub segment_id: u64,
    pub image_id: String,
    pub color: String,
    pub loc: SpatialLoc,
    pub labels: Vec<(String, f64)>,
}

impl SegmentLabelDist {
    pub fn new(
        segment_id: u64,
        image_id: impl Into<String>,
        color: impl Into<String>,
        loc: SpatialLoc,
        labels: Vec<(String, f64)>,
    ) -> Result<Self> {
        let seg = SegmentLabelDist {
            segment_id,
            image_id: image_id.into(),
            color: color.into(),
            loc,
            labels,
        };
        seg.validate()?;
        Ok(seg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::Invalid(format!(
                "segment {} has no labels",
                self.segment_id
            )));
        }
        if let Some((c, p)) = self.labels.iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
            return Err(Error::Invalid(format!(
                "segment {}: probability of {c} outside [0, 1]: {p}",
                self.segment_id
            )));
        }
        let sum: f64 = self.labels.iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Invalid(format!(
                "segment {}: probabilities sum to {sum}",
                self.segment_id
            )));
        }
        self.loc.validate()
    }

    pub fn probability(&self, category: &str) -> f64 {
        self.labels
            .iter()
            .filter(|(c, _)| c == category)
            .map(|(_, p)| p)
            .sum()
    }

    /// Maximum-probability label; ties go to the lexicographically smallest category.
    pub fn most_confident(&self) -> (&str, f64) {
        let mut best: Option<(&str, f64)> = None;
        for (c, p) in &self.labels {
            best = match best {
                Some((bc, bp)) if bp > *p || (bp == *p && bc <= c.as_str()) => Some((bc, bp)),
                _ => Some((c.as_str(), *p)),
            };
        }
        best.expect("validated segments have labels")
    }

    fn to_fact(&self, category: &str) -> ObjectFact {
        ObjectFact {
            category: category.to_string(),
            instance_id: InstanceId(self.segment_id),
            image_id: self.image_id.clone(),
            color: self.color.clone(),
            loc: self.loc,
        }
    }
}

/// Segmentation output for one or more images plus any per-image annotations
/// that every world shares.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SegmentScene {
    pub segments: Vec<SegmentLabelDist>,
    pub scenes: Vec<SceneFact>,
}

impl SegmentScene {
    pub fn new(segments: Vec<SegmentLabelDist>, scenes: Vec<SceneFact>) -> Self {
        SegmentScene { segments, scenes }
    }

    /// Number of bindings, `Π_i |L_i|`, saturating.
    pub fn binding_count(&self) -> usize {
        self.segments
            .iter()
            .fold(1usize, |acc, s| acc.saturating_mul(s.labels.len()))
    }
}

/// Assignment of one category per segment.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct BindingFunction {
    pub assignment: BTreeMap<u64, String>,
}

impl BindingFunction {
    pub fn new(assignment: BTreeMap<u64, String>) -> Self {
        BindingFunction { assignment }
    }
}

/// `Σ_i ln p(i, f(i))`. A category with zero probability (or absent from
/// the segment's labels) gives `-inf`.
pub fn world_log_prob(scene: &SegmentScene, binding: &BindingFunction) -> Result<f64> {
    let mut total = 0.0;
    for seg in &scene.segments {
        let cat = binding
            .assignment
            .get(&seg.segment_id)
            .ok_or_else(|| Error::Invalid(format!("binding misses segment {}", seg.segment_id)))?;
        let p = seg.probability(cat);
        if p <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        total += p.ln();
    }
    Ok(total)
}

/// The world a binding induces, weighted by its log probability.
pub fn world_from_binding(scene: &SegmentScene, binding: &BindingFunction) -> Result<World> {
    let log_weight = world_log_prob(scene, binding)?;
    let objects = scene
        .segments
        .iter()
        .map(|s| s.to_fact(&binding.assignment[&s.segment_id]))
        .collect();
    World::new(objects, scene.scenes.clone(), log_weight)
}

pub fn most_confident_binding(scene: &SegmentScene) -> BindingFunction {
    BindingFunction::new(
        scene
            .segments
            .iter()
            .map(|s| (s.segment_id, s.most_confident().0.to_string()))
            .collect(),
    )
}

pub fn most_confident_world(scene: &SegmentScene) -> Result<World> {
    if scene.segments.is_empty() {
        return Err(Error::Invalid("scene has no segments".into()));
    }
    world_from_binding(scene, &most_confident_binding(scene))
}

/// Every binding of the scene. Only meant for tiny scenes (exact oracles).
pub fn enumerate_bindings(scene: &SegmentScene) -> Vec<BindingFunction> {
    let mut out = vec![BindingFunction::default()];
    for seg in &scene.segments {
        let mut next = Vec::with_capacity(out.len() * seg.labels.len());
        for b in &out {
            for (c, _) in &seg.labels {
                let mut nb = b.clone();
                nb.assignment.insert(seg.segment_id, c.clone());
                next.push(nb);
            }
        }
        out = next;
    }
    out
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Generator for one (world, segment) draw, independent of draw order.
fn segment_rng(seed: u64, world_index: u64, segment_id: u64) -> ChaCha8Rng {
    let s = splitmix64(splitmix64(seed ^ splitmix64(world_index)) ^ segment_id);
    ChaCha8Rng::seed_from_u64(s)
}

fn draw<'a>(seg: &'a SegmentLabelDist, rng: &mut impl Rng) -> &'a str {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    for (c, p) in &seg.labels {
        if *p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(c.as_str());
        if u < acc {
            return c;
        }
    }
    // u fell into the rounding gap above the cumulative sum
    last.unwrap_or(&seg.labels[0].0)
}

/// Samples a binding per world, each segment drawn independently.
pub fn sample_bindings(scene: &SegmentScene, n: usize, seed: u64) -> Vec<BindingFunction> {
    (0..n as u64)
        .into_par_iter()
        .map(|w| {
            BindingFunction::new(
                scene
                    .segments
                    .iter()
                    .map(|s| {
                        let mut rng = segment_rng(seed, w, s.segment_id);
                        (s.segment_id, draw(s, &mut rng).to_string())
                    })
                    .collect(),
            )
        })
        .collect()
}

/// `n` worlds drawn from `P(W|S)`, each carrying its log probability.
pub fn sample_worlds(scene: &SegmentScene, n: usize, seed: u64) -> Result<Vec<World>> {
    if n == 0 {
        return Err(Error::Invalid("number of worlds must be positive".into()));
    }
    sample_bindings(scene, n, seed)
        .par_iter()
        .map(|b| world_from_binding(scene, b))
        .collect()
}

/// Facts of one image (or any grouping used as a retrieval unit).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FactSet {
    pub objects: Vec<ObjectFact>,
    pub scenes: Vec<SceneFact>,
}

impl FactSet {
    pub fn terms(&self) -> BTreeSet<String> {
        self.objects
            .iter()
            .flat_map(|o| [o.category.clone(), o.color.clone()])
            .chain(self.scenes.iter().map(|s| s.room_type.clone()))
            .collect()
    }

    pub fn to_world(&self) -> Result<World> {
        World::new(self.objects.clone(), self.scenes.clone(), 0.0)
    }
}

/// Term set of one batch of facts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactBatch {
    pub batch_id: String,
    pub term_set: BTreeSet<String>,
}

impl FactBatch {
    pub fn new<S: Into<String>>(
        batch_id: impl Into<String>,
        terms: impl IntoIterator<Item = S>,
    ) -> Self {
        FactBatch {
            batch_id: batch_id.into(),
            term_set: terms.into_iter().map(Into::into).collect(),
        }
    }

    pub fn from_facts(batch_id: impl Into<String>, facts: &FactSet) -> Self {
        FactBatch {
            batch_id: batch_id.into(),
            term_set: facts.terms(),
        }
    }
}

/// Ranked batch ids. `degenerate` is set when the query had no terms and
/// the ranking fell back to id order.
#[derive(Clone, Debug, PartialEq)]
pub struct Retrieval {
    pub ids: Vec<String>,
    pub degenerate: bool,
}

/// Top-`k` batches by cosine similarity of boolean-tf, `ln(N/df)`-weighted
/// vectors. Ties go to the smaller batch id.
pub fn tfidf_select_batches(
    query: &FactBatch,
    corpus: &[FactBatch],
    k: usize,
) -> Result<Retrieval> {
    if corpus.is_empty() {
        return Err(Error::Invalid("retrieval corpus is empty".into()));
    }
    if k == 0 {
        return Err(Error::Invalid("k must be positive".into()));
    }
    if query.term_set.is_empty() {
        let mut ids: Vec<String> = corpus.iter().map(|b| b.batch_id.clone()).collect();
        ids.sort();
        ids.truncate(k);
        return Ok(Retrieval {
            ids,
            degenerate: true,
        });
    }

    let n = corpus.len() as f64;
    let mut df: HashMap<&str, usize> = HashMap::new();
    for b in corpus {
        for t in &b.term_set {
            *df.entry(t.as_str()).or_default() += 1;
        }
    }
    let idf = |t: &str| df.get(t).map(|&d| (n / d as f64).ln());

    let q: Vec<(&str, f64)> = query
        .term_set
        .iter()
        .filter_map(|t| idf(t).map(|w| (t.as_str(), w)))
        .collect();
    let q_norm = q.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();

    let mut scored: Vec<(f64, &str)> = corpus
        .iter()
        .map(|b| {
            let b_norm = b
                .term_set
                .iter()
                .map(|t| idf(t).unwrap_or(0.0).powi(2))
                .sum::<f64>()
                .sqrt();
            let dot: f64 = q
                .iter()
                .filter(|(t, _)| b.term_set.contains(*t))
                .map(|(_, w)| w * w)
                .sum();
            let sim = if q_norm > 0.0 && b_norm > 0.0 {
                dot / (q_norm * b_norm)
            } else {
                0.0
            };
            (sim, b.batch_id.as_str())
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(Retrieval {
        ids: scored
            .into_iter()
            .take(k)
            .map(|(_, id)| id.to_string())
            .collect(),
        degenerate: false,
    })
}

/// Union of the selected batches as one deterministic world.
///
/// Identical facts collapse. An instance id reused with different content is
/// re-keyed to the next free id, in batch order.
pub fn build_training_world(selected: &[&FactSet]) -> Result<World> {
    if selected.is_empty() {
        return Err(Error::Invalid("no batches selected".into()));
    }
    let mut next_free = selected
        .iter()
        .flat_map(|b| b.objects.iter().map(|o| o.instance_id.0))
        .max()
        .map_or(0, |m| m + 1);
    let mut objects: Vec<ObjectFact> = Vec::new();
    let mut seen: HashMap<InstanceId, usize> = HashMap::new();
    let mut scenes: BTreeMap<String, String> = BTreeMap::new();
    for batch in selected {
        for o in &batch.objects {
            match seen.get(&o.instance_id) {
                Some(&i) if objects[i] == *o => {}
                Some(_) => {
                    let mut renamed = o.clone();
                    renamed.instance_id = InstanceId(next_free);
                    next_free += 1;
                    seen.insert(renamed.instance_id, objects.len());
                    objects.push(renamed);
                }
                None => {
                    seen.insert(o.instance_id, objects.len());
                    objects.push(o.clone());
                }
            }
        }
        for s in &batch.scenes {
            if let Some(prev) = scenes.get(&s.image_id) {
                if *prev != s.room_type {
                    log::warn!(
                        "image {}: conflicting room types {prev} and {}, keeping the first",
                        s.image_id,
                        s.room_type
                    );
                }
                continue;
            }
            scenes.insert(s.image_id.clone(), s.room_type.clone());
        }
    }
    let scenes = scenes
        .into_iter()
        .map(|(image_id, room_type)| SceneFact {
            image_id,
            room_type,
        })
        .collect();
    World::new(objects, scenes, 0.0)
}
