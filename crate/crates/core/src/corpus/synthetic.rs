//! Template-based question generation and random ground-truth scenes.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{QAPair, BASIC_COLORS};
use crate::dcs::{denote_answer, DcsTree, Direction, Marker, NegationDomain};
use crate::error::{Error, Result};
use crate::parser::lexicon::pluralize;
use crate::scene::{
    InstanceId, ObjectFact, SceneFact, SpatialLoc, World, DEFAULT_EPS, IMAGES_PREDICATE,
    IMAGE_PREDICATE, OBJECT_PREDICATE, ROOM_TYPE_PREDICATE,
};

/// The 37 object classes of the NYU-Depth V2 benchmark (original spellings).
pub const NYU_CLASSES: [&str; 37] = [
    "wall",
    "floor",
    "cabinet",
    "bed",
    "chair",
    "sofa",
    "table",
    "door",
    "window",
    "bookshelf",
    "picture",
    "counter",
    "blinds",
    "desk",
    "shelves",
    "curtain",
    "dresser",
    "pillow",
    "mirror",
    "floor mat",
    "clothes",
    "ceiling",
    "books",
    "refridgerator",
    "television",
    "paper",
    "towel",
    "shower curtain",
    "box",
    "whiteboard",
    "person",
    "night stand",
    "toilet",
    "sink",
    "lamp",
    "bathtub",
    "bag",
];

pub const ROOM_TYPES: [&str; 8] = [
    "bathroom",
    "bedroom",
    "bookstore",
    "dining room",
    "kitchen",
    "living room",
    "office",
    "study",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateId {
    Counting,
    CountingColor,
    RoomType,
    Superlative,
    SetCountingColor,
    Negation1,
    Negation2,
    Negation3,
}

impl TemplateId {
    pub fn name(self) -> &'static str {
        match self {
            TemplateId::Counting => "counting",
            TemplateId::CountingColor => "counting-color",
            TemplateId::RoomType => "room-type",
            TemplateId::Superlative => "superlative",
            TemplateId::SetCountingColor => "set-counting-color",
            TemplateId::Negation1 => "negation1",
            TemplateId::Negation2 => "negation2",
            TemplateId::Negation3 => "negation3",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TEMPLATES
            .iter()
            .map(|t| t.id)
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown template `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemplateScope {
    Individual,
    Set,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TemplateSpec {
    pub id: TemplateId,
    pub pattern: &'static str,
    pub scope: TemplateScope,
    pub train_count: usize,
    pub test_count: usize,
}

pub const TEMPLATES: [TemplateSpec; 8] = [
    TemplateSpec {
        id: TemplateId::Counting,
        pattern: "How many {object} are in {image_id}?",
        scope: TemplateScope::Individual,
        train_count: 20,
        test_count: 40,
    },
    TemplateSpec {
        id: TemplateId::CountingColor,
        pattern: "How many {color} {object} are in {image_id}?",
        scope: TemplateScope::Individual,
        train_count: 20,
        test_count: 40,
    },
    TemplateSpec {
        id: TemplateId::RoomType,
        pattern: "Which type of the room is depicted in {image_id}?",
        scope: TemplateScope::Individual,
        train_count: 20,
        test_count: 40,
    },
    TemplateSpec {
        id: TemplateId::Superlative,
        pattern: "What is the largest {object} in {image_id}?",
        scope: TemplateScope::Individual,
        train_count: 20,
        test_count: 40,
    },
    TemplateSpec {
        id: TemplateId::SetCountingColor,
        pattern: "How many {color} {object}?",
        scope: TemplateScope::Set,
        train_count: 20,
        test_count: 40,
    },
    TemplateSpec {
        id: TemplateId::Negation1,
        pattern: "Which images do not have {object}?",
        scope: TemplateScope::Set,
        train_count: 10,
        test_count: 20,
    },
    TemplateSpec {
        id: TemplateId::Negation2,
        pattern: "Which images are not {room_type}?",
        scope: TemplateScope::Set,
        train_count: 10,
        test_count: 20,
    },
    TemplateSpec {
        id: TemplateId::Negation3,
        pattern: "Which images have {object} but do not have a {object2}?",
        scope: TemplateScope::Set,
        train_count: 20,
        test_count: 40,
    },
];

pub fn template(id: TemplateId) -> &'static TemplateSpec {
    TEMPLATES
        .iter()
        .find(|t| t.id == id)
        .expect("every id has a spec")
}

/// Per-template counts of the training or test corpus.
pub fn default_plan(train: bool) -> Vec<(TemplateId, usize)> {
    TEMPLATES
        .iter()
        .map(|t| (t.id, if train { t.train_count } else { t.test_count }))
        .collect()
}

/// Slot values of one instantiated template.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Fillers {
    pub object: String,
    pub object2: String,
    pub color: String,
    pub image_id: String,
    pub room_type: String,
}

fn in_image(image_id: &str) -> DcsTree {
    DcsTree::leaf(IMAGE_PREDICATE).join(2, 1, DcsTree::leaf(image_id))
}

fn images_with(object: &str) -> DcsTree {
    DcsTree::leaf(IMAGES_PREDICATE).join(
        1,
        2,
        DcsTree::leaf(IMAGE_PREDICATE).join(1, 1, DcsTree::leaf(object)),
    )
}

/// The logical form whose denotation is the template's gold answer.
pub fn canonical_tree(id: TemplateId, f: &Fillers) -> DcsTree {
    match id {
        TemplateId::Counting => DcsTree::leaf(&f.object)
            .join(1, 1, in_image(&f.image_id))
            .mark(Marker::Count),
        TemplateId::CountingColor => DcsTree::leaf(&f.object)
            .join(1, 1, DcsTree::leaf(&f.color))
            .join(1, 1, in_image(&f.image_id))
            .mark(Marker::Count),
        TemplateId::RoomType => {
            DcsTree::leaf(ROOM_TYPE_PREDICATE).join(2, 1, DcsTree::leaf(&f.image_id))
        }
        TemplateId::Superlative => DcsTree::leaf(&f.object)
            .join(1, 1, in_image(&f.image_id))
            .mark(Marker::Superlative(Direction::Max)),
        TemplateId::SetCountingColor => DcsTree::leaf(&f.object)
            .join(1, 1, DcsTree::leaf(&f.color))
            .mark(Marker::Count),
        TemplateId::Negation1 => {
            images_with(&f.object).mark(Marker::Negate(NegationDomain::Images))
        }
        TemplateId::Negation2 => {
            DcsTree::leaf(&f.room_type).mark(Marker::Negate(NegationDomain::Images))
        }
        TemplateId::Negation3 => images_with(&f.object).join(
            1,
            1,
            images_with(&f.object2).mark(Marker::Negate(NegationDomain::Images)),
        ),
    }
}

/// Question text of a template with its slots filled.
pub fn instantiate(id: TemplateId, f: &Fillers) -> String {
    let object = match id {
        TemplateId::Counting | TemplateId::CountingColor | TemplateId::SetCountingColor => {
            pluralize(&f.object)
        }
        _ => f.object.clone(),
    };
    template(id)
        .pattern
        .replace("{object}", &object)
        .replace("{object2}", &f.object2)
        .replace("{color}", &f.color)
        .replace("{image_id}", &f.image_id)
        .replace("{room_type}", &f.room_type)
}

fn draw_fillers(id: TemplateId, world: &World, rng: &mut ChaCha8Rng) -> Option<Fillers> {
    let objects = world.objects();
    let mut f = Fillers::default();
    let pick_image_object = |rng: &mut ChaCha8Rng| -> Option<&ObjectFact> {
        let image = world
            .images()
            .iter()
            .filter(|i| objects.iter().any(|o| &o.image_id == *i))
            .choose(rng)?;
        objects.iter().filter(|o| &o.image_id == image).choose(rng)
    };
    match id {
        TemplateId::Counting | TemplateId::CountingColor => {
            let o = pick_image_object(rng)?;
            f.object = o.category.clone();
            f.color = o.color.clone();
            f.image_id = o.image_id.clone();
        }
        TemplateId::Superlative => {
            let o = pick_image_object(rng)?;
            f.image_id = o.image_id.clone();
            f.object = if rng.gen_bool(0.5) {
                OBJECT_PREDICATE.to_string()
            } else {
                o.category.clone()
            };
        }
        TemplateId::RoomType => {
            f.image_id = world.scenes().choose(rng)?.image_id.clone();
        }
        TemplateId::SetCountingColor => {
            let o = objects.choose(rng)?;
            f.object = o.category.clone();
            f.color = o.color.clone();
        }
        TemplateId::Negation1 => {
            f.object = world.categories().into_iter().choose(rng)?.to_string();
        }
        TemplateId::Negation2 => {
            f.room_type = world.room_types().into_iter().choose(rng)?.to_string();
        }
        TemplateId::Negation3 => {
            let o = pick_image_object(rng)?;
            f.object = o.category.clone();
            f.object2 = world
                .categories()
                .into_iter()
                .filter(|c| *c != o.category)
                .choose(rng)?
                .to_string();
        }
    }
    Some(f)
}

const MAX_ATTEMPTS: usize = 200;

/// Instantiates each template `count` times with fillers drawn from the
/// world; gold answers are the canonical trees' denotations. Draws with an
/// empty answer are retried; a template that cannot be satisfied is skipped.
pub fn generate_synthetic_qa(
    world: &World,
    plan: &[(TemplateId, usize)],
    seed: u64,
) -> Result<Vec<QAPair>> {
    let mut out = Vec::new();
    for &(id, count) in plan {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id as u64 + 1);
        let mut made = 0;
        let mut attempts = 0;
        while made < count && attempts < MAX_ATTEMPTS + count {
            attempts += 1;
            let Some(f) = draw_fillers(id, world, &mut rng) else {
                break;
            };
            let gold = denote_answer(&canonical_tree(id, &f), world, DEFAULT_EPS)?;
            if gold.is_empty() {
                continue;
            }
            out.push(QAPair::new(instantiate(id, &f), gold));
            made += 1;
        }
        if made < count {
            warn!("template {id}: produced {made} of {count} questions");
        }
    }
    Ok(out)
}

fn random_loc(rng: &mut ChaCha8Rng) -> SpatialLoc {
    let mut v = [0.0; 9];
    let ranges = [(-2.0, 2.0), (0.0, 3.0), (1.0, 5.0)];
    for (axis, (lo, hi)) in ranges.iter().enumerate() {
        let size: f64 = rng.gen_range(0.1..1.5);
        let min = rng.gen_range(*lo..hi - size);
        let max = min + size;
        let mean = min + size * rng.gen_range(0.3..0.7);
        v[3 * axis] = min;
        v[3 * axis + 1] = max;
        v[3 * axis + 2] = mean;
    }
    SpatialLoc::from_array(v).expect("bounds are ordered and finite")
}

/// A ground-truth world of `n_images` scenes `image1..imageN`, each with a
/// room type and 4–9 objects of random class, color and placement.
pub fn random_scene_world(n_images: usize, seed: u64) -> Result<World> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objects = Vec::new();
    let mut scenes = Vec::new();
    let mut next_id = 1;
    for i in 1..=n_images {
        let image_id = format!("image{i}");
        scenes.push(SceneFact {
            image_id: image_id.clone(),
            room_type: ROOM_TYPES.choose(&mut rng).expect("nonempty").to_string(),
        });
        for _ in 0..rng.gen_range(4..=9) {
            objects.push(ObjectFact {
                category: NYU_CLASSES.choose(&mut rng).expect("nonempty").to_string(),
                instance_id: InstanceId(next_id),
                image_id: image_id.clone(),
                color: BASIC_COLORS.choose(&mut rng).expect("nonempty").to_string(),
                loc: random_loc(&mut rng),
            });
            next_id += 1;
        }
    }
    World::new(objects, scenes, 0.0)
}
