//! Phrase → trigger table and question tokenization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::dcs::{Direction, Span};
use crate::error::{Error, Result};
use crate::scene::{
    SpatialRelation, World, IMAGES_PREDICATE, OBJECT_PREDICATE, ROOM_TYPE_PREDICATE,
};

/// Broad class of a lexicalized predicate. Determines the argument types
/// the parser may join on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PredicateKind {
    Category,
    Color,
    RoomType,
    ImageId,
    Object,
    Images,
    RoomTypeOf,
}

impl PredicateKind {
    pub fn name(self) -> &'static str {
        match self {
            PredicateKind::Category => "category",
            PredicateKind::Color => "color",
            PredicateKind::RoomType => "roomtype",
            PredicateKind::ImageId => "imageid",
            PredicateKind::Object => "object",
            PredicateKind::Images => "images",
            PredicateKind::RoomTypeOf => "room_type",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "category" => PredicateKind::Category,
            "color" => PredicateKind::Color,
            "roomtype" => PredicateKind::RoomType,
            "imageid" => PredicateKind::ImageId,
            "object" => PredicateKind::Object,
            "images" => PredicateKind::Images,
            "room_type" => PredicateKind::RoomTypeOf,
            _ => return None,
        })
    }
}

/// What a phrase can contribute to a logical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Trigger {
    Predicate {
        name: String,
        kind: PredicateKind,
    },
    Count,
    Superlative(Direction),
    Negate,
    /// Spatial cue; realized as a bridge between two object subtrees.
    Relation(SpatialRelation),
}

impl Trigger {
    pub fn predicate(name: impl Into<String>, kind: PredicateKind) -> Self {
        Trigger::Predicate {
            name: name.into(),
            kind,
        }
    }

    pub fn is_marker(&self) -> bool {
        matches!(
            self,
            Trigger::Count | Trigger::Superlative(_) | Trigger::Negate
        )
    }

    /// Tab-separated record used in model files.
    pub fn encode(&self) -> String {
        match self {
            Trigger::Predicate { name, kind } => format!("{}\t{name}", kind.name()),
            Trigger::Count => "count".into(),
            Trigger::Superlative(Direction::Max) => "argmax".into(),
            Trigger::Superlative(Direction::Min) => "argmin".into(),
            Trigger::Negate => "negate".into(),
            Trigger::Relation(r) => format!("relation\t{r}"),
        }
    }

    pub fn decode(fields: &[&str]) -> Result<Self> {
        Ok(match fields {
            ["count"] => Trigger::Count,
            ["argmax"] => Trigger::Superlative(Direction::Max),
            ["argmin"] => Trigger::Superlative(Direction::Min),
            ["negate"] => Trigger::Negate,
            ["relation", r] => Trigger::Relation(r.parse()?),
            [kind, name] => {
                let kind = PredicateKind::from_name(kind)
                    .ok_or_else(|| Error::Invalid(format!("unknown trigger kind `{kind}`")))?;
                Trigger::predicate(*name, kind)
            }
            _ => return Err(Error::Invalid(format!("bad trigger record {fields:?}"))),
        })
    }
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode().replace('\t', ":"))
    }
}

/// Lowercases, drops apostrophes, turns other punctuation into spaces and
/// collapses whitespace. No spelling repair.
pub fn normalize_question(q: &str) -> String {
    let mapped: String = q
        .chars()
        .filter(|c| *c != '\'' && *c != '’')
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn tokenize(q: &str) -> Vec<String> {
    normalize_question(q)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

/// `image7`-style tokens name images.
pub fn is_image_token(token: &str) -> bool {
    token
        .strip_prefix("image")
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

/// Naive English plural of the last word of a term.
pub fn pluralize(term: &str) -> String {
    let (head, last) = match term.rsplit_once(' ') {
        Some((h, l)) => (format!("{h} "), l),
        None => (String::new(), term),
    };
    let plural = if last.ends_with('s') {
        last.to_string()
    } else if let Some(stem) = last
        .strip_suffix('y')
        .filter(|s| !s.ends_with(['a', 'e', 'i', 'o', 'u']))
    {
        format!("{stem}ies")
    } else if last.ends_with("ch")
        || last.ends_with("sh")
        || last.ends_with('x')
        || last.ends_with('z')
    {
        format!("{last}es")
    } else {
        format!("{last}s")
    };
    format!("{head}{plural}")
}

/// Terms a world can be asked about.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub categories: BTreeSet<String>,
    pub colors: BTreeSet<String>,
    pub room_types: BTreeSet<String>,
}

impl Vocabulary {
    pub fn from_world(world: &World) -> Self {
        Vocabulary {
            categories: world.categories().into_iter().map(String::from).collect(),
            colors: world.colors().into_iter().map(String::from).collect(),
            room_types: world.room_types().into_iter().map(String::from).collect(),
        }
    }

    pub fn extend(&mut self, other: &Vocabulary) {
        self.categories.extend(other.categories.iter().cloned());
        self.colors.extend(other.colors.iter().cloned());
        self.room_types.extend(other.room_types.iter().cloned());
    }
}

const FIXED: &[(&str, &str)] = &[
    ("how many", "count"),
    ("number of", "count"),
    ("largest", "argmax"),
    ("biggest", "argmax"),
    ("smallest", "argmin"),
    ("not", "negate"),
    ("no", "negate"),
    ("dont", "negate"),
    ("without", "negate"),
];

const RELATION_CUES: &[(&str, SpatialRelation)] = &[
    ("on", SpatialRelation::On),
    ("on top of", SpatialRelation::On),
    ("above", SpatialRelation::Above),
    ("over", SpatialRelation::Above),
    ("below", SpatialRelation::Below),
    ("under", SpatialRelation::Below),
    ("beneath", SpatialRelation::Below),
    ("left", SpatialRelation::LeftOf),
    ("left of", SpatialRelation::LeftOf),
    ("right", SpatialRelation::RightOf),
    ("right of", SpatialRelation::RightOf),
    ("in front of", SpatialRelation::InFrontOf),
    ("front", SpatialRelation::InFrontOf),
    ("behind", SpatialRelation::Behind),
    ("near", SpatialRelation::Close),
    ("close to", SpatialRelation::Close),
    ("next to", SpatialRelation::Close),
    ("beside", SpatialRelation::Close),
];

/// A matched phrase in a question.
#[derive(Clone, Debug, PartialEq)]
pub struct TriggerItem {
    pub span: Span,
    pub phrase: String,
    pub triggers: Vec<Trigger>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<String, BTreeSet<Trigger>>,
    kinds: BTreeMap<String, PredicateKind>,
    max_phrase_len: usize,
}

impl Lexicon {
    pub fn new() -> Self {
        Lexicon::default()
    }

    pub fn insert(&mut self, phrase: &str, trigger: Trigger) {
        let phrase = normalize_question(phrase);
        if phrase.is_empty() {
            return;
        }
        self.max_phrase_len = self.max_phrase_len.max(phrase.split(' ').count());
        if let Trigger::Predicate { name, kind } = &trigger {
            self.kinds.entry(name.clone()).or_insert(*kind);
        }
        self.entries.entry(phrase).or_default().insert(trigger);
    }

    pub fn get(&self, phrase: &str) -> Option<&BTreeSet<Trigger>> {
        self.entries.get(phrase)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &BTreeSet<Trigger>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds singular and plural forms of every vocabulary term.
    pub fn add_vocabulary(&mut self, vocab: &Vocabulary) {
        for c in &vocab.categories {
            self.insert(c, Trigger::predicate(c, PredicateKind::Category));
            self.insert(
                &pluralize(c),
                Trigger::predicate(c, PredicateKind::Category),
            );
        }
        for c in &vocab.colors {
            self.insert(c, Trigger::predicate(c, PredicateKind::Color));
        }
        for r in &vocab.room_types {
            self.insert(r, Trigger::predicate(r, PredicateKind::RoomType));
            self.insert(
                &pluralize(r),
                Trigger::predicate(r, PredicateKind::RoomType),
            );
        }
    }

    /// Kind of a lexicalized predicate, if any phrase triggers it.
    pub fn kind_of(&self, predicate: &str) -> Option<PredicateKind> {
        self.kinds.get(predicate).copied()
    }

    /// Greedy longest-match segmentation of a tokenized question.
    pub fn items(&self, tokens: &[String]) -> Vec<TriggerItem> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let mut matched = false;
            for len in (1..=self.max_phrase_len.min(tokens.len() - i)).rev() {
                let phrase = tokens[i..i + len].join(" ");
                if let Some(ts) = self.entries.get(&phrase) {
                    out.push(TriggerItem {
                        span: Span::new(i, i + len),
                        phrase,
                        triggers: ts.iter().cloned().collect(),
                    });
                    i += len;
                    matched = true;
                    break;
                }
            }
            if !matched {
                if is_image_token(&tokens[i]) {
                    out.push(TriggerItem {
                        span: Span::new(i, i + 1),
                        phrase: tokens[i].clone(),
                        triggers: vec![Trigger::predicate(&tokens[i], PredicateKind::ImageId)],
                    });
                }
                i += 1;
            }
        }
        out
    }
}

/// Builds the lexicon from the vocabulary, the fixed trigger table and any
/// image mentions in the training questions.
pub fn build_lexicon<'a>(
    questions: impl IntoIterator<Item = &'a str>,
    vocab: &Vocabulary,
) -> Lexicon {
    let mut lex = Lexicon::new();
    for (phrase, code) in FIXED {
        lex.insert(
            phrase,
            Trigger::decode(&[code]).expect("fixed table is well formed"),
        );
    }
    for (phrase, rel) in RELATION_CUES {
        lex.insert(phrase, Trigger::Relation(*rel));
    }
    for w in ["object", "objects", "thing", "things"] {
        lex.insert(
            w,
            Trigger::predicate(OBJECT_PREDICATE, PredicateKind::Object),
        );
    }
    lex.insert(
        "images",
        Trigger::predicate(IMAGES_PREDICATE, PredicateKind::Images),
    );
    for w in ["type", "room"] {
        lex.insert(
            w,
            Trigger::predicate(ROOM_TYPE_PREDICATE, PredicateKind::RoomTypeOf),
        );
    }
    lex.add_vocabulary(vocab);
    for q in questions {
        for tok in tokenize(q) {
            if is_image_token(&tok) {
                lex.insert(&tok, Trigger::predicate(&tok, PredicateKind::ImageId));
            }
        }
    }
    lex
}
