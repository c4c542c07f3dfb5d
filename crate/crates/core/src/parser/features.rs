//! Feature templates over (question, tree) pairs.
//!
//! Five families, each a count of occurrences:
//!
//! * `trig|<phrase>|<predicate>`: a phrase triggers a predicate or marker
//! * `rel|<word>|<relation>`: an untriggered word lies between a node and a child it is related to
//! * `trace|<word>|<trace>`: an untriggered word lies under a trace predicate or bridge
//! * `link|<kind>|<relation>|<kind>`: two predicates are linked via a relation
//! * `child|<predicate>`: a predicate has a child
//!
//! Trigger and has-child features also come in a kind-level form (`*`) so
//! weights carry over to predicates unseen in training.

use std::collections::{BTreeMap, BTreeSet};

use crate::dcs::{DcsTree, Edge, Span};
use crate::parser::lexicon::{is_image_token, Lexicon};
use crate::scene::{
    SpatialRelation, IMAGES_PREDICATE, IMAGE_PREDICATE, OBJECT_PREDICATE, ROOM_TYPE_PREDICATE,
};

/// Sparse feature counts; zero counts are never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeatureVector {
    counts: BTreeMap<String, u32>,
}

impl FeatureVector {
    pub fn new() -> Self {
        FeatureVector::default()
    }

    pub fn add(&mut self, key: String) {
        *self.counts.entry(key).or_insert(0) += 1;
    }

    pub fn get(&self, key: &str) -> u32 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, u32)> {
        self.counts.iter().map(|(k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn dot(&self, weights: &BTreeMap<String, f64>) -> f64 {
        self.counts
            .iter()
            .filter_map(|(k, &c)| weights.get(k).map(|w| w * c as f64))
            .sum()
    }
}

/// Coarse class of a predicate for the kind-level features.
pub fn kind_label(predicate: &str, lexicon: &Lexicon) -> String {
    match predicate {
        IMAGE_PREDICATE | IMAGES_PREDICATE | OBJECT_PREDICATE | ROOM_TYPE_PREDICATE => {
            predicate.to_string()
        }
        _ if SpatialRelation::lookup(predicate).is_some() => "relation".into(),
        _ => match lexicon.kind_of(predicate) {
            Some(k) => k.name().to_string(),
            None if is_image_token(predicate) => "imageid".into(),
            None => "unknown".into(),
        },
    }
}

fn union(a: Option<Span>, b: Option<Span>) -> Option<Span> {
    match (a, b) {
        (Some(a), Some(b)) => Some(Span::new(a.start.min(b.start), a.end.max(b.end))),
        (a, None) => a,
        (None, b) => b,
    }
}

/// Smallest span covering every anchor in the subtree (markers included).
pub fn cover(tree: &DcsTree) -> Option<Span> {
    let mut s = tree.anchor;
    for e in &tree.edges {
        s = match e {
            Edge::Mark { anchor, .. } => union(s, *anchor),
            Edge::Join { child, .. } | Edge::Bridge { child, .. } => union(s, cover(child)),
        };
    }
    s
}

fn collect_anchors(tree: &DcsTree, out: &mut BTreeSet<usize>) {
    let mut add = |s: Span| out.extend(s.start..s.end);
    if let Some(a) = tree.anchor {
        add(a);
    }
    for e in &tree.edges {
        if let Edge::Mark {
            anchor: Some(a), ..
        } = e
        {
            out.extend(a.start..a.end);
        }
    }
    for c in tree.children() {
        collect_anchors(c, out);
    }
}

struct Featurizer<'a> {
    tokens: &'a [String],
    lexicon: &'a Lexicon,
    anchored: BTreeSet<usize>,
    out: FeatureVector,
}

impl Featurizer<'_> {
    fn phrase(&self, s: Span) -> String {
        let end = s.end.min(self.tokens.len());
        let start = s.start.min(end);
        self.tokens[start..end].join(" ")
    }

    /// Untriggered words strictly between the parent's position and the child's cover.
    fn gap(&self, parent: Option<Span>, child: Option<Span>) -> Vec<String> {
        let (Some(p), Some(c)) = (parent, child) else {
            return Vec::new();
        };
        let range = if c.start >= p.end {
            p.end..c.start
        } else if c.end <= p.start {
            c.end..p.start
        } else {
            return Vec::new();
        };
        range
            .filter(|i| !self.anchored.contains(i))
            .filter_map(|i| self.tokens.get(i).cloned())
            .collect()
    }

    fn visit(&mut self, tree: &DcsTree) {
        let kind = kind_label(&tree.predicate, self.lexicon);
        if let Some(a) = tree.anchor {
            let phrase = self.phrase(a);
            self.out.add(format!("trig|{phrase}|{}", tree.predicate));
            self.out.add(format!("trig|*|{kind}"));
        }
        let pos = tree.anchor.or_else(|| cover(tree));
        for e in &tree.edges {
            let label = e.label();
            match e {
                Edge::Mark { anchor, .. } => {
                    if let Some(a) = anchor {
                        let phrase = self.phrase(*a);
                        self.out.add(format!("trig|{phrase}|{label}"));
                        self.out.add(format!("trig|*|{label}"));
                    }
                    self.out.add(format!("link|{kind}|{label}|-"));
                }
                Edge::Join { child, .. } | Edge::Bridge { child, .. } => {
                    let words = self.gap(pos, cover(child));
                    for w in &words {
                        self.out.add(format!("rel|{w}|{label}"));
                        if child.anchor.is_none() {
                            self.out.add(format!("trace|{w}|{}", child.predicate));
                        }
                        if matches!(e, Edge::Bridge { .. }) {
                            self.out.add(format!("trace|{w}|{label}"));
                        }
                    }
                    let child_kind = kind_label(&child.predicate, self.lexicon);
                    self.out.add(format!("link|{kind}|{label}|{child_kind}"));
                    self.out.add(format!("child|{}", tree.predicate));
                    self.out.add(format!("child|*|{kind}"));
                    self.visit(child);
                }
            }
        }
    }
}

/// Feature counts of a tree built from this question's trigger spans.
pub fn featurize(tokens: &[String], tree: &DcsTree, lexicon: &Lexicon) -> FeatureVector {
    let mut anchored = BTreeSet::new();
    collect_anchors(tree, &mut anchored);
    let mut f = Featurizer {
        tokens,
        lexicon,
        anchored,
        out: FeatureVector::new(),
    };
    f.visit(tree);
    f.out
}
