//! Scene facts: object cuboids, per-image annotations and the spatial
//! relations between objects.
//!
//! Coordinates are gravity aligned with the Y axis pointing down, so an
//! object *above* another has the smaller `y_mean`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use crate::dcs::{Denotation, Value};
use crate::error::{Error, Result};

/// Default closeness margin for the `close*` relations and `on`, in meters.
pub const DEFAULT_EPS: f64 = 0.1;

/// Binary predicate linking an instance to the image containing it: `(instance, image)`.
pub const IMAGE_PREDICATE: &str = "image";
/// Unary predicate over every image id of a world.
pub const IMAGES_PREDICATE: &str = "images";
/// Unary predicate over every instance of a world, regardless of category.
pub const OBJECT_PREDICATE: &str = "object";
/// Binary predicate `(room type, image)`.
pub const ROOM_TYPE_PREDICATE: &str = "room_type";

/// Axis-parallel cuboid of an object: min, max and mean per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialLoc {
    pub x_min: f64,
    pub x_max: f64,
    pub x_mean: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub y_mean: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub z_mean: f64,
}

impl SpatialLoc {
    /// Builds a location from the nine values in `x_min x_max x_mean y_min ... z_mean` order.
    pub fn from_array(v: [f64; 9]) -> Result<Self> {
        let loc = SpatialLoc {
            x_min: v[0],
            x_max: v[1],
            x_mean: v[2],
            y_min: v[3],
            y_max: v[4],
            y_mean: v[5],
            z_min: v[6],
            z_max: v[7],
            z_mean: v[8],
        };
        loc.validate()?;
        Ok(loc)
    }

    pub fn to_array(&self) -> [f64; 9] {
        [
            self.x_min,
            self.x_max,
            self.x_mean,
            self.y_min,
            self.y_max,
            self.y_mean,
            self.z_min,
            self.z_max,
            self.z_mean,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.to_array();
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        for axis in v.chunks(3) {
            let (min, max, mean) = (axis[0], axis[1], axis[2]);
            if !(min <= mean && mean <= max) {
                return Err(Error::Invalid(format!(
                    "cuboid axis violates min <= mean <= max: ({min}, {max}, {mean})"
                )));
            }
        }
        Ok(())
    }

    /// Cuboid volume, the size measure used by superlatives.
    pub fn volume(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min) * (self.z_max - self.z_min)
    }
}

/// Fits the axis-parallel cuboid to a point cloud.
pub fn cuboid_from_points(points: &[[f64; 3]]) -> Result<SpatialLoc> {
    if points.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    let mut sum = [0.0; 3];
    for p in points {
        for axis in 0..3 {
            let c = p[axis];
            if !c.is_finite() {
                return Err(Error::NonFinite);
            }
            min[axis] = min[axis].min(c);
            max[axis] = max[axis].max(c);
            sum[axis] += c;
        }
    }
    let n = points.len() as f64;
    // Rounding can push the mean of near-identical coordinates just outside [min, max].
    let mean = |axis: usize| (sum[axis] / n).clamp(min[axis], max[axis]);
    SpatialLoc::from_array([
        min[0],
        max[0],
        mean(0),
        min[1],
        max[1],
        mean(1),
        min[2],
        max[2],
        mean(2),
    ])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InstanceId(pub u64);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One recognized object.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectFact {
    pub category: String,
    pub instance_id: InstanceId,
    pub image_id: String,
    pub color: String,
    pub loc: SpatialLoc,
}

/// Per-image annotation (currently only the room type).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SceneFact {
    pub image_id: String,
    pub room_type: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpatialRelation {
    LeftOf,
    RightOf,
    Above,
    Below,
    InFrontOf,
    Behind,
    CloseAbove,
    CloseBelow,
    CloseLeftOf,
    CloseRightOf,
    CloseInFrontOf,
    CloseBehind,
    On,
    Close,
}

impl SpatialRelation {
    pub const ALL: [SpatialRelation; 14] = [
        SpatialRelation::LeftOf,
        SpatialRelation::RightOf,
        SpatialRelation::Above,
        SpatialRelation::Below,
        SpatialRelation::InFrontOf,
        SpatialRelation::Behind,
        SpatialRelation::CloseAbove,
        SpatialRelation::CloseBelow,
        SpatialRelation::CloseLeftOf,
        SpatialRelation::CloseRightOf,
        SpatialRelation::CloseInFrontOf,
        SpatialRelation::CloseBehind,
        SpatialRelation::On,
        SpatialRelation::Close,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SpatialRelation::LeftOf => "leftOf",
            SpatialRelation::RightOf => "rightOf",
            SpatialRelation::Above => "above",
            SpatialRelation::Below => "below",
            SpatialRelation::InFrontOf => "inFrontOf",
            SpatialRelation::Behind => "behind",
            SpatialRelation::CloseAbove => "closeAbove",
            SpatialRelation::CloseBelow => "closeBelow",
            SpatialRelation::CloseLeftOf => "closeLeftOf",
            SpatialRelation::CloseRightOf => "closeRightOf",
            SpatialRelation::CloseInFrontOf => "closeInFrontOf",
            SpatialRelation::CloseBehind => "closeBehind",
            SpatialRelation::On => "on",
            SpatialRelation::Close => "close",
        }
    }

    /// Whether `name` is a relation name (exact, case-sensitive match).
    pub fn lookup(name: &str) -> Option<SpatialRelation> {
        Self::ALL.iter().copied().find(|r| r.name() == name)
    }
}

impl fmt::Display for SpatialRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpatialRelation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::lookup(s).ok_or_else(|| Error::UnknownRelation(s.to_string()))
    }
}

fn left_of(a: &SpatialLoc, b: &SpatialLoc) -> bool {
    a.x_mean < b.x_mean
}

fn above(a: &SpatialLoc, b: &SpatialLoc) -> bool {
    a.y_mean < b.y_mean
}

fn in_front_of(a: &SpatialLoc, b: &SpatialLoc) -> bool {
    a.z_mean < b.z_mean
}

fn close_above(a: &SpatialLoc, b: &SpatialLoc, eps: f64) -> bool {
    above(a, b) && b.y_min < a.y_max + eps
}

fn close_left_of(a: &SpatialLoc, b: &SpatialLoc, eps: f64) -> bool {
    left_of(a, b) && b.x_min < a.x_max + eps
}

fn close_in_front_of(a: &SpatialLoc, b: &SpatialLoc, eps: f64) -> bool {
    in_front_of(a, b) && b.z_min < a.z_max + eps
}

fn x_aux(a: &SpatialLoc, b: &SpatialLoc) -> bool {
    a.x_mean < b.x_max && b.x_min < a.x_mean
}

fn z_aux(a: &SpatialLoc, b: &SpatialLoc) -> bool {
    a.z_mean < b.z_max && b.z_min < a.z_mean
}

/// Evaluates a spatial relation between cuboids `a` and `b`.
pub fn eval_spatial(rel: SpatialRelation, a: &SpatialLoc, b: &SpatialLoc, eps: f64) -> bool {
    use SpatialRelation::*;
    match rel {
        LeftOf => left_of(a, b),
        RightOf => left_of(b, a),
        Above => above(a, b),
        Below => above(b, a),
        InFrontOf => in_front_of(a, b),
        Behind => in_front_of(b, a),
        CloseAbove => close_above(a, b, eps),
        CloseBelow => close_above(b, a, eps),
        CloseLeftOf => close_left_of(a, b, eps),
        CloseRightOf => close_left_of(b, a, eps),
        CloseInFrontOf => close_in_front_of(a, b, eps),
        CloseBehind => close_in_front_of(b, a, eps),
        On => close_above(a, b, eps) && z_aux(a, b) && x_aux(a, b),
        Close => {
            let h = close_above(a, b, eps) || close_above(b, a, eps);
            let v = close_left_of(a, b, eps) || close_left_of(b, a, eps);
            let d = close_in_front_of(a, b, eps) || close_in_front_of(b, a, eps);
            h || v || d
        }
    }
}

/// Name-based variant of [`eval_spatial`].
pub fn eval_spatial_named(rel: &str, a: &SpatialLoc, b: &SpatialLoc, eps: f64) -> Result<bool> {
    let rel: SpatialRelation = rel.parse()?;
    Ok(eval_spatial(rel, a, b, eps))
}

type PairList = Arc<Vec<(InstanceId, InstanceId)>>;

/// A set of facts forming one interpretation of the scene(s).
///
/// Immutable once built. Relation tuples are computed on first use and
/// memoized per `(relation, eps)`.
pub struct World {
    objects: Vec<ObjectFact>,
    scenes: Vec<SceneFact>,
    log_weight: f64,
    by_id: HashMap<InstanceId, usize>,
    images: BTreeSet<String>,
    room_of: BTreeMap<String, String>,
    relation_memo: Mutex<HashMap<(SpatialRelation, u64), PairList>>,
}

impl Clone for World {
    fn clone(&self) -> Self {
        World {
            objects: self.objects.clone(),
            scenes: self.scenes.clone(),
            log_weight: self.log_weight,
            by_id: self.by_id.clone(),
            images: self.images.clone(),
            room_of: self.room_of.clone(),
            relation_memo: Mutex::new(HashMap::new()),
        }
    }
}

impl fmt::Debug for World {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("World")
            .field("objects", &self.objects)
            .field("scenes", &self.scenes)
            .field("log_weight", &self.log_weight)
            .finish()
    }
}

impl PartialEq for World {
    fn eq(&self, other: &Self) -> bool {
        self.objects == other.objects
            && self.scenes == other.scenes
            && (self.log_weight == other.log_weight
                || (self.log_weight.is_nan() && other.log_weight.is_nan()))
    }
}

impl World {
    /// Builds a world. Objects are kept sorted by `(image_id, instance_id)`
    /// and scene facts by image id.
    pub fn new(
        mut objects: Vec<ObjectFact>,
        mut scenes: Vec<SceneFact>,
        log_weight: f64,
    ) -> Result<Self> {
        if log_weight > 0.0 || log_weight.is_nan() {
            return Err(Error::Invalid(format!(
                "world log weight must be <= 0, got {log_weight}"
            )));
        }
        objects.sort_by(|a, b| (&a.image_id, a.instance_id).cmp(&(&b.image_id, b.instance_id)));
        scenes.sort();
        scenes.dedup();

        let mut by_id = HashMap::with_capacity(objects.len());
        let mut images = BTreeSet::new();
        for (i, o) in objects.iter().enumerate() {
            if o.category.is_empty() {
                return Err(Error::Invalid(format!(
                    "instance {} has an empty category",
                    o.instance_id
                )));
            }
            o.loc.validate()?;
            if by_id.insert(o.instance_id, i).is_some() {
                return Err(Error::Invalid(format!(
                    "duplicate instance id {}",
                    o.instance_id
                )));
            }
            images.insert(o.image_id.clone());
        }
        let mut room_of = BTreeMap::new();
        for s in &scenes {
            if let Some(prev) = room_of.insert(s.image_id.clone(), s.room_type.clone()) {
                return Err(Error::Invalid(format!(
                    "image {} has two room types: {prev} and {}",
                    s.image_id, s.room_type
                )));
            }
            images.insert(s.image_id.clone());
        }
        Ok(World {
            objects,
            scenes,
            log_weight,
            by_id,
            images,
            room_of,
            relation_memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn objects(&self) -> &[ObjectFact] {
        &self.objects
    }

    pub fn scenes(&self) -> &[SceneFact] {
        &self.scenes
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }

    pub fn images(&self) -> &BTreeSet<String> {
        &self.images
    }

    pub fn object(&self, id: InstanceId) -> Option<&ObjectFact> {
        self.by_id.get(&id).map(|&i| &self.objects[i])
    }

    pub fn room_type(&self, image_id: &str) -> Option<&str> {
        self.room_of.get(image_id).map(String::as_str)
    }

    pub fn categories(&self) -> BTreeSet<&str> {
        self.objects.iter().map(|o| o.category.as_str()).collect()
    }

    pub fn colors(&self) -> BTreeSet<&str> {
        self.objects.iter().map(|o| o.color.as_str()).collect()
    }

    pub fn room_types(&self) -> BTreeSet<&str> {
        self.scenes.iter().map(|s| s.room_type.as_str()).collect()
    }

    /// Ordered pairs of distinct objects in the same image satisfying `rel`.
    pub fn relation_pairs(&self, rel: SpatialRelation, eps: f64) -> PairList {
        let key = (rel, eps.to_bits());
        if let Some(hit) = self.relation_memo.lock().unwrap().get(&key) {
            return hit.clone();
        }
        let computed = Arc::new(self.compute_pairs(rel, eps));
        // A concurrent fill computes the same value, so keeping whichever landed first is fine.
        self.relation_memo
            .lock()
            .unwrap()
            .entry(key)
            .or_insert(computed)
            .clone()
    }

    fn compute_pairs(&self, rel: SpatialRelation, eps: f64) -> Vec<(InstanceId, InstanceId)> {
        let mut out = Vec::new();
        // objects are sorted by image, so each image is one contiguous run
        for run in self.objects.chunk_by(|a, b| a.image_id == b.image_id) {
            for a in run {
                for b in run {
                    if a.instance_id != b.instance_id && eval_spatial(rel, &a.loc, &b.loc, eps) {
                        out.push((a.instance_id, b.instance_id));
                    }
                }
            }
        }
        out
    }
}

/// Resolves a predicate name against a world.
///
/// * relation name (`leftOf`, `on`, ...) → `(instance, instance)` pairs in the same image
/// * `image` → `(instance, image)`; `images` → every image; `object` → every instance
/// * `room_type` → `(room type, image)`
/// * otherwise the union of: instances of that category, instances of that
///   color, images of that room type, and the image itself if `name` is an image id
///
/// Names matching nothing yield an empty unary denotation.
pub fn query_predicate(world: &World, name: &str, eps: f64) -> Denotation {
    if let Some(rel) = SpatialRelation::lookup(name) {
        let tuples = world
            .relation_pairs(rel, eps)
            .iter()
            .map(|&(a, b)| vec![Value::Inst(a), Value::Inst(b)])
            .collect();
        return Denotation::new(2, tuples);
    }
    match name {
        IMAGE_PREDICATE => Denotation::new(
            2,
            world
                .objects
                .iter()
                .map(|o| vec![Value::Inst(o.instance_id), Value::Image(o.image_id.clone())])
                .collect(),
        ),
        IMAGES_PREDICATE => Denotation::new(
            1,
            world
                .images
                .iter()
                .map(|i| vec![Value::Image(i.clone())])
                .collect(),
        ),
        OBJECT_PREDICATE => Denotation::new(
            1,
            world
                .objects
                .iter()
                .map(|o| vec![Value::Inst(o.instance_id)])
                .collect(),
        ),
        ROOM_TYPE_PREDICATE => Denotation::new(
            2,
            world
                .scenes
                .iter()
                .map(|s| {
                    vec![
                        Value::Term(s.room_type.clone()),
                        Value::Image(s.image_id.clone()),
                    ]
                })
                .collect(),
        ),
        _ => {
            let mut tuples = BTreeSet::new();
            for o in &world.objects {
                if o.category == name || o.color == name {
                    tuples.insert(vec![Value::Inst(o.instance_id)]);
                }
            }
            for s in &world.scenes {
                if s.room_type == name {
                    tuples.insert(vec![Value::Image(s.image_id.clone())]);
                }
            }
            if world.images.contains(name) {
                tuples.insert(vec![Value::Image(name.to_string())]);
            }
            Denotation::new(1, tuples)
        }
    }
}
