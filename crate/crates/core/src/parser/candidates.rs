//! Bottom-up beam search over trigger items.
//!
//! Items are the predicate and marker phrases found in the question. A chart
//! cell covers a contiguous run of items; it holds the trees built from any
//! subset of them (items may be skipped). Two adjacent cells combine by
//! attaching one root under the other with every type-compatible join, by a
//! bridge when a spatial cue word lies between them, or by applying a marker.
//! A trace `image` node is inserted when an object and an image argument meet.

use std::collections::{BTreeMap, HashMap};

use crate::dcs::{DcsTree, Edge, Marker, NegationDomain, Span};
use crate::parser::features::{cover, featurize, FeatureVector};
use crate::parser::lexicon::{is_image_token, Lexicon, PredicateKind, Trigger};
use crate::scene::{
    SpatialRelation, IMAGES_PREDICATE, IMAGE_PREDICATE, OBJECT_PREDICATE, ROOM_TYPE_PREDICATE,
};

/// Value type of a predicate argument.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArgType {
    Inst,
    Image,
    Term,
    Num,
}

/// Argument types of a predicate, or `None` if the parser cannot place it.
pub fn signature(predicate: &str, lexicon: &Lexicon) -> Option<Vec<ArgType>> {
    use ArgType::*;
    Some(match predicate {
        IMAGE_PREDICATE => vec![Inst, Image],
        IMAGES_PREDICATE => vec![Image],
        OBJECT_PREDICATE => vec![Inst],
        ROOM_TYPE_PREDICATE => vec![Term, Image],
        _ => match lexicon.kind_of(predicate) {
            Some(PredicateKind::Category | PredicateKind::Color | PredicateKind::Object) => {
                vec![Inst]
            }
            Some(PredicateKind::RoomType | PredicateKind::ImageId | PredicateKind::Images) => {
                vec![Image]
            }
            Some(PredicateKind::RoomTypeOf) => vec![Term, Image],
            None if is_image_token(predicate) => vec![Image],
            None => return None,
        },
    })
}

/// A candidate tree with its features and score under the current weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredTree {
    pub tree: DcsTree,
    pub features: FeatureVector,
    pub score: f64,
}

#[derive(Clone, Debug)]
struct Deriv {
    tree: DcsTree,
    key: String,
    score: f64,
    /// Root predicate signature, used when the root takes a new child.
    sig: Vec<ArgType>,
    /// Root marker, if any; at most one per root.
    marker: Option<Marker>,
    depth: usize,
}

impl Deriv {
    /// Signature seen by a parent joining onto this subtree.
    fn outer_sig(&self) -> Vec<ArgType> {
        match self.marker {
            None => self.sig.clone(),
            Some(Marker::Count) => vec![ArgType::Num],
            Some(Marker::Superlative(_)) | Some(Marker::Negate(NegationDomain::Instances)) => {
                vec![ArgType::Inst]
            }
            Some(Marker::Negate(NegationDomain::Images)) => vec![ArgType::Image],
        }
    }

    fn head(&self) -> ArgType {
        self.outer_sig()[0]
    }
}

#[derive(Clone, Debug)]
enum Entry {
    Tree(Deriv),
    Marker(Trigger, Span),
}

impl Entry {
    fn key(&self) -> String {
        match self {
            Entry::Tree(d) => d.key.clone(),
            Entry::Marker(t, s) => format!("#{t}@{}", s.start),
        }
    }

    fn score(&self) -> f64 {
        match self {
            Entry::Tree(d) => d.score,
            Entry::Marker(..) => 0.0,
        }
    }
}

struct Search<'a> {
    tokens: &'a [String],
    lexicon: &'a Lexicon,
    weights: &'a BTreeMap<String, f64>,
    beam_size: usize,
    max_depth: usize,
    cues: Vec<(Span, SpatialRelation)>,
}

fn inverse(r: SpatialRelation) -> Option<SpatialRelation> {
    use SpatialRelation::*;
    Some(match r {
        LeftOf => RightOf,
        RightOf => LeftOf,
        Above => Below,
        Below => Above,
        InFrontOf => Behind,
        Behind => InFrontOf,
        CloseAbove => CloseBelow,
        CloseBelow => CloseAbove,
        CloseLeftOf => CloseRightOf,
        CloseRightOf => CloseLeftOf,
        CloseInFrontOf => CloseBehind,
        CloseBehind => CloseInFrontOf,
        Close => Close,
        On => return None,
    })
}

impl Search<'_> {
    fn make(&self, tree: DcsTree, sig: Vec<ArgType>, marker: Option<Marker>) -> Option<Entry> {
        let depth = tree.depth();
        if depth > self.max_depth {
            return None;
        }
        let score = featurize(self.tokens, &tree, self.lexicon).dot(self.weights);
        Some(Entry::Tree(Deriv {
            key: tree.serialize(),
            tree,
            score,
            sig,
            marker,
            depth,
        }))
    }

    fn leaves(&self, span: Span, triggers: &[Trigger]) -> Vec<Entry> {
        let mut out = Vec::new();
        for t in triggers {
            match t {
                Trigger::Predicate { name, .. } => {
                    if let Some(sig) = signature(name, self.lexicon) {
                        out.extend(self.make(DcsTree::anchored(name.clone(), span), sig, None));
                    }
                }
                Trigger::Count | Trigger::Superlative(_) | Trigger::Negate => {
                    out.push(Entry::Marker(t.clone(), span))
                }
                Trigger::Relation(_) => {}
            }
        }
        out
    }

    /// All ways of placing `child` under the root of `parent`.
    fn attach(
        &self,
        parent: &Deriv,
        child: &Deriv,
        cues: &[SpatialRelation],
        out: &mut Vec<Entry>,
    ) {
        if parent.depth.max(child.depth + 1) > self.max_depth {
            return;
        }
        let child_sig = child.outer_sig();
        for (i, pt) in parent.sig.iter().enumerate() {
            for (j, ct) in child_sig.iter().enumerate() {
                if pt == ct {
                    let mut tree = parent.tree.clone();
                    tree.push_edge(Edge::Join {
                        parent_arg: i + 1,
                        child_arg: j + 1,
                        child: child.tree.clone(),
                    });
                    out.extend(self.make(tree, parent.sig.clone(), parent.marker));
                }
            }
            // trace insertion between an object and an image argument
            let ct = child_sig[0];
            let trace = match (pt, ct) {
                (ArgType::Inst, ArgType::Image) => Some((
                    1,
                    DcsTree::leaf(IMAGE_PREDICATE).join(2, 1, child.tree.clone()),
                )),
                (ArgType::Image, ArgType::Inst) => Some((
                    2,
                    DcsTree::leaf(IMAGE_PREDICATE).join(1, 1, child.tree.clone()),
                )),
                _ => None,
            };
            if let Some((trace_arg, trace)) = trace {
                let mut tree = parent.tree.clone();
                tree.push_edge(Edge::Join {
                    parent_arg: i + 1,
                    child_arg: trace_arg,
                    child: trace,
                });
                out.extend(self.make(tree, parent.sig.clone(), parent.marker));
            }
        }
        if parent.sig[0] == ArgType::Inst && child.head() == ArgType::Inst {
            for &via in cues {
                let mut tree = parent.tree.clone();
                tree.push_edge(Edge::Bridge {
                    via,
                    child: child.tree.clone(),
                });
                out.extend(self.make(tree, parent.sig.clone(), parent.marker));
            }
        }
    }

    fn apply_marker(&self, trigger: &Trigger, anchor: Span, d: &Deriv, out: &mut Vec<Entry>) {
        if d.marker.is_some() {
            return;
        }
        let head = d.sig[0];
        let push = |marker: Marker, tree: DcsTree, sig: Vec<ArgType>, out: &mut Vec<Entry>| {
            let mut tree = tree;
            tree.push_edge(Edge::Mark {
                marker,
                anchor: Some(anchor),
            });
            out.extend(self.make(tree, sig, Some(marker)));
        };
        match trigger {
            Trigger::Count => push(Marker::Count, d.tree.clone(), d.sig.clone(), out),
            Trigger::Superlative(dir) if head == ArgType::Inst => push(
                Marker::Superlative(*dir),
                d.tree.clone(),
                d.sig.clone(),
                out,
            ),
            Trigger::Negate if head == ArgType::Image => push(
                Marker::Negate(NegationDomain::Images),
                d.tree.clone(),
                d.sig.clone(),
                out,
            ),
            Trigger::Negate if head == ArgType::Inst => {
                push(
                    Marker::Negate(NegationDomain::Instances),
                    d.tree.clone(),
                    d.sig.clone(),
                    out,
                );
                // images containing the objects, then their complement
                let lifted = DcsTree::leaf(IMAGES_PREDICATE).join(
                    1,
                    2,
                    DcsTree::leaf(IMAGE_PREDICATE).join(1, 1, d.tree.clone()),
                );
                push(
                    Marker::Negate(NegationDomain::Images),
                    lifted,
                    vec![ArgType::Image],
                    out,
                );
            }
            _ => {}
        }
    }

    fn cues_between(&self, left: &DcsTree, right: &DcsTree) -> Vec<SpatialRelation> {
        let (Some(l), Some(r)) = (cover(left), cover(right)) else {
            return Vec::new();
        };
        self.cues
            .iter()
            .filter(|(s, _)| s.start >= l.end && s.end <= r.start)
            .map(|(_, rel)| *rel)
            .collect()
    }

    fn combine(&self, left: &Entry, right: &Entry, out: &mut Vec<Entry>) {
        match (left, right) {
            (Entry::Tree(l), Entry::Tree(r)) => {
                let forward = self.cues_between(&l.tree, &r.tree);
                let backward: Vec<SpatialRelation> =
                    forward.iter().filter_map(|&c| inverse(c)).collect();
                self.attach(l, r, &forward, out);
                self.attach(r, l, &backward, out);
            }
            (Entry::Marker(t, s), Entry::Tree(d)) | (Entry::Tree(d), Entry::Marker(t, s)) => {
                self.apply_marker(t, *s, d, out)
            }
            (Entry::Marker(..), Entry::Marker(..)) => {}
        }
    }

    /// Deduplicates by serialization keeping the best score, then keeps the top `beam_size`.
    fn prune(&self, mut entries: Vec<Entry>) -> Vec<Entry> {
        let mut keyed: Vec<(String, Entry)> = entries.drain(..).map(|e| (e.key(), e)).collect();
        keyed.sort_by(|(ka, a), (kb, b)| b.score().total_cmp(&a.score()).then_with(|| ka.cmp(kb)));
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for (k, e) in keyed {
            if seen.insert(k, ()).is_none() {
                out.push(e);
                if out.len() == self.beam_size {
                    break;
                }
            }
        }
        out
    }
}

/// Builds candidate trees for a tokenized question, best first.
pub fn generate_candidates(
    tokens: &[String],
    lexicon: &Lexicon,
    weights: &BTreeMap<String, f64>,
    beam_size: usize,
    max_depth: usize,
) -> Vec<ScoredTree> {
    let all_items = lexicon.items(tokens);
    let mut cues = Vec::new();
    let mut items = Vec::new();
    for it in &all_items {
        for t in &it.triggers {
            if let Trigger::Relation(r) = t {
                cues.push((it.span, *r));
            }
        }
        if it
            .triggers
            .iter()
            .any(|t| !matches!(t, Trigger::Relation(_)))
        {
            items.push(it);
        }
    }
    let search = Search {
        tokens,
        lexicon,
        weights,
        beam_size: beam_size.max(1),
        max_depth: max_depth.max(1),
        cues,
    };
    let n = items.len();
    if n == 0 {
        return Vec::new();
    }
    // chart[i][len - 1] covers items i..i+len
    let mut chart: Vec<Vec<Vec<Entry>>> = vec![Vec::new(); n];
    for (i, it) in items.iter().enumerate() {
        let leaves = search.leaves(it.span, &it.triggers);
        chart[i].push(search.prune(leaves));
    }
    for len in 2..=n {
        for i in 0..=n - len {
            let j = i + len;
            let mut cell: Vec<Entry> = Vec::new();
            cell.extend(chart[i + 1][len - 2].iter().cloned());
            cell.extend(chart[i][len - 2].iter().cloned());
            for k in i + 1..j {
                for l in &chart[i][k - i - 1] {
                    for r in &chart[k][j - k - 1] {
                        search.combine(l, r, &mut cell);
                    }
                }
            }
            let pruned = search.prune(cell);
            chart[i].push(pruned);
        }
    }
    chart[0][n - 1]
        .iter()
        .filter_map(|e| match e {
            Entry::Tree(d) => Some(ScoredTree {
                features: featurize(tokens, &d.tree, lexicon),
                score: d.score,
                tree: d.tree.clone(),
            }),
            Entry::Marker(..) => None,
        })
        .collect()
}
