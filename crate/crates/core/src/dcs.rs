//! Logical forms as DCS trees and their evaluation against a [`World`].
//!
//! A node `⟨p, (T1, R1), ..., (Td, Rd)⟩` denotes the tuples `v` of `p` such that
//! every join/bridge child has a witness `t` with `R(v, t)`. Count, superlative
//! and negation are markers on a node; they run after all joins, in edge
//! order, on the head (first) column of the node's tuples.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scene::{query_predicate, InstanceId, SpatialRelation, World};

/// Default maximum tree depth (nodes on the longest root-to-leaf path).
pub const DEFAULT_MAX_DEPTH: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Inst(InstanceId),
    Image(String),
    Term(String),
    Num(i64),
}

/// A set of equal-arity tuples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Denotation {
    arity: usize,
    tuples: BTreeSet<Vec<Value>>,
}

impl Denotation {
    pub fn new(arity: usize, tuples: BTreeSet<Vec<Value>>) -> Self {
        debug_assert!(tuples.iter().all(|t| t.len() == arity));
        Denotation { arity, tuples }
    }

    pub fn unary(values: impl IntoIterator<Item = Value>) -> Self {
        Denotation::new(1, values.into_iter().map(|v| vec![v]).collect())
    }

    pub fn empty(arity: usize) -> Self {
        Denotation::new(arity, BTreeSet::new())
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn tuples(&self) -> &BTreeSet<Vec<Value>> {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Distinct values of the first column.
    pub fn heads(&self) -> BTreeSet<Value> {
        self.tuples
            .iter()
            .filter_map(|t| t.first().cloned())
            .collect()
    }
}

/// Token span `[start, end)` of the question phrase that triggered a node or marker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Max,
    Min,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NegationDomain {
    Images,
    Instances,
}

/// Unary set transformations applied to a node after its joins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Marker {
    Count,
    Superlative(Direction),
    Negate(NegationDomain),
}

impl Marker {
    pub fn label(self) -> &'static str {
        match self {
            Marker::Count => "count",
            Marker::Superlative(Direction::Max) => "argmax",
            Marker::Superlative(Direction::Min) => "argmin",
            Marker::Negate(NegationDomain::Images) => "negate-images",
            Marker::Negate(NegationDomain::Instances) => "negate-instances",
        }
    }
}

/// One edge of a DCS node.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Edge {
    /// `v[parent_arg] == t[child_arg]`, 1-based.
    Join {
        parent_arg: usize,
        child_arg: usize,
        child: DcsTree,
    },
    /// `via(v[1], t[1])` holds for an implicit spatial relation.
    Bridge {
        via: SpatialRelation,
        child: DcsTree,
    },
    Mark {
        marker: Marker,
        anchor: Option<Span>,
    },
}

impl Edge {
    pub fn child(&self) -> Option<&DcsTree> {
        match self {
            Edge::Join { child, .. } | Edge::Bridge { child, .. } => Some(child),
            Edge::Mark { .. } => None,
        }
    }

    /// Feature label of the relation carried by this edge.
    pub fn label(&self) -> String {
        match self {
            Edge::Join {
                parent_arg,
                child_arg,
                ..
            } => format!("join{parent_arg}{child_arg}"),
            Edge::Bridge { via, .. } => format!("bridge:{via}"),
            Edge::Mark { marker, .. } => marker.label().to_string(),
        }
    }
}

/// A logical form. `anchor` records which question tokens triggered the
/// node; trace nodes inserted without a trigger have none. Anchors are
/// parsing metadata and take no part in serialization.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DcsTree {
    pub predicate: String,
    pub anchor: Option<Span>,
    pub edges: Vec<Edge>,
}

impl DcsTree {
    pub fn leaf(predicate: impl Into<String>) -> Self {
        DcsTree {
            predicate: predicate.into(),
            anchor: None,
            edges: Vec::new(),
        }
    }

    pub fn anchored(predicate: impl Into<String>, anchor: Span) -> Self {
        DcsTree {
            anchor: Some(anchor),
            ..DcsTree::leaf(predicate)
        }
    }

    pub fn join(mut self, parent_arg: usize, child_arg: usize, child: DcsTree) -> Self {
        self.push_edge(Edge::Join {
            parent_arg,
            child_arg,
            child,
        });
        self
    }

    pub fn bridge(mut self, via: SpatialRelation, child: DcsTree) -> Self {
        self.push_edge(Edge::Bridge { via, child });
        self
    }

    pub fn mark(mut self, marker: Marker) -> Self {
        self.push_edge(Edge::Mark {
            marker,
            anchor: None,
        });
        self
    }

    /// Adds an edge keeping the canonical order: joins and bridges sorted by
    /// their serialization, then markers in insertion order.
    pub fn push_edge(&mut self, edge: Edge) {
        match edge {
            Edge::Mark { .. } => self.edges.push(edge),
            _ => {
                let key = edge_string(&edge);
                let pos = self
                    .edges
                    .iter()
                    .position(|e| matches!(e, Edge::Mark { .. }) || edge_string(e) > key)
                    .unwrap_or(self.edges.len());
                self.edges.insert(pos, edge);
            }
        }
    }

    pub fn children(&self) -> impl Iterator<Item = &DcsTree> {
        self.edges.iter().filter_map(Edge::child)
    }

    pub fn markers(&self) -> impl Iterator<Item = Marker> + '_ {
        self.edges.iter().filter_map(|e| match e {
            Edge::Mark { marker, .. } => Some(*marker),
            _ => None,
        })
    }

    pub fn depth(&self) -> usize {
        1 + self.children().map(DcsTree::depth).max().unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().map(DcsTree::node_count).sum::<usize>()
    }

    /// Canonical prefix serialization, e.g. `(count (table (join 1 1 (brown))))`.
    pub fn serialize(&self) -> String {
        self.to_string()
    }
}

fn edge_string(edge: &Edge) -> String {
    let mut s = String::new();
    write_edge(&mut s, edge).expect("writing to a String cannot fail");
    s
}

fn write_atom(out: &mut impl fmt::Write, atom: &str) -> fmt::Result {
    out.write_str(&atom.replace(' ', "_"))
}

fn write_edge(out: &mut impl fmt::Write, edge: &Edge) -> fmt::Result {
    match edge {
        Edge::Join {
            parent_arg,
            child_arg,
            child,
        } => write!(out, "(join {parent_arg} {child_arg} {child})"),
        Edge::Bridge { via, child } => write!(out, "(bridge {via} {child})"),
        Edge::Mark { .. } => Ok(()),
    }
}

impl fmt::Display for DcsTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let markers: Vec<Marker> = self.markers().collect();
        for m in markers.iter().rev() {
            match m {
                Marker::Count => f.write_str("(count ")?,
                Marker::Superlative(Direction::Max) => f.write_str("(argmax ")?,
                Marker::Superlative(Direction::Min) => f.write_str("(argmin ")?,
                Marker::Negate(NegationDomain::Images) => f.write_str("(negate images ")?,
                Marker::Negate(NegationDomain::Instances) => f.write_str("(negate instances ")?,
            }
        }
        f.write_str("(")?;
        write_atom(f, &self.predicate)?;
        for e in &self.edges {
            if !matches!(e, Edge::Mark { .. }) {
                f.write_str(" ")?;
                write_edge(f, e)?;
            }
        }
        f.write_str(")")?;
        for _ in &markers {
            f.write_str(")")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn read_sexp(input: &str) -> Result<Sexp> {
    let spaced = input.replace('(', " ( ").replace(')', " ) ");
    let mut tokens = spaced.split_whitespace().peekable();
    fn read<'a>(tokens: &mut std::iter::Peekable<impl Iterator<Item = &'a str>>) -> Result<Sexp> {
        match tokens.next() {
            Some("(") => {
                let mut items = Vec::new();
                loop {
                    match tokens.peek() {
                        Some(&")") => {
                            tokens.next();
                            return Ok(Sexp::List(items));
                        }
                        Some(_) => items.push(read(tokens)?),
                        None => return Err(Error::InvalidTree("unbalanced parentheses".into())),
                    }
                }
            }
            Some(")") => Err(Error::InvalidTree("unexpected ')'".into())),
            Some(atom) => Ok(Sexp::Atom(atom.to_string())),
            None => Err(Error::InvalidTree("empty input".into())),
        }
    }
    let sexp = read(&mut tokens)?;
    if tokens.next().is_some() {
        return Err(Error::InvalidTree("trailing input".into()));
    }
    Ok(sexp)
}

fn atom(s: &Sexp) -> Result<&str> {
    match s {
        Sexp::Atom(a) => Ok(a),
        Sexp::List(_) => Err(Error::InvalidTree("expected an atom".into())),
    }
}

fn tree_from_sexp(s: &Sexp) -> Result<DcsTree> {
    let items = match s {
        Sexp::List(items) if !items.is_empty() => items,
        _ => return Err(Error::InvalidTree("expected a non-empty list".into())),
    };
    let head = atom(&items[0])?;
    let marker = match head {
        "count" => Some((Marker::Count, 1)),
        "argmax" => Some((Marker::Superlative(Direction::Max), 1)),
        "argmin" => Some((Marker::Superlative(Direction::Min), 1)),
        "negate" => {
            let domain = match items.get(1).map(atom).transpose()? {
                Some("images") => NegationDomain::Images,
                Some("instances") => NegationDomain::Instances,
                _ => return Err(Error::InvalidTree("negate needs a domain".into())),
            };
            Some((Marker::Negate(domain), 2))
        }
        _ => None,
    };
    if let Some((marker, arg)) = marker {
        if items.len() != arg + 1 {
            return Err(Error::InvalidTree(format!("{head} takes exactly one tree")));
        }
        return Ok(tree_from_sexp(&items[arg])?.mark(marker));
    }
    let mut tree = DcsTree::leaf(head.replace('_', " "));
    for e in &items[1..] {
        let parts = match e {
            Sexp::List(p) if !p.is_empty() => p,
            _ => return Err(Error::InvalidTree("expected an edge".into())),
        };
        match atom(&parts[0])? {
            "join" if parts.len() == 4 => {
                let parse_arg = |s: &Sexp| -> Result<usize> {
                    atom(s)?
                        .parse::<usize>()
                        .ok()
                        .filter(|&a| a >= 1)
                        .ok_or_else(|| {
                            Error::InvalidTree("join indices are 1-based integers".into())
                        })
                };
                let (p, c) = (parse_arg(&parts[1])?, parse_arg(&parts[2])?);
                tree = tree.join(p, c, tree_from_sexp(&parts[3])?);
            }
            "bridge" if parts.len() == 3 => {
                let via: SpatialRelation = atom(&parts[1])?.parse()?;
                tree = tree.bridge(via, tree_from_sexp(&parts[2])?);
            }
            other => return Err(Error::InvalidTree(format!("unknown edge `{other}`"))),
        }
    }
    Ok(tree)
}

impl FromStr for DcsTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        tree_from_sexp(&read_sexp(s)?)
    }
}

/// Evaluates a tree against a world.
pub fn evaluate_dcs(tree: &DcsTree, world: &World, eps: f64) -> Result<Denotation> {
    let mut current = query_predicate(world, &tree.predicate, eps);
    for edge in &tree.edges {
        match edge {
            Edge::Join {
                parent_arg,
                child_arg,
                child,
            } => {
                let child_d = evaluate_dcs(child, world, eps)?;
                check_arg(*parent_arg, current.arity, &tree.predicate)?;
                check_arg(*child_arg, child_d.arity, &child.predicate)?;
                let witnesses: HashSet<&Value> =
                    child_d.tuples.iter().map(|t| &t[child_arg - 1]).collect();
                let pi = parent_arg - 1;
                current.tuples.retain(|v| witnesses.contains(&v[pi]));
            }
            Edge::Bridge { via, child } => {
                let child_d = evaluate_dcs(child, world, eps)?;
                let targets: HashSet<Value> = child_d.heads().into_iter().collect();
                let sources: HashSet<Value> = world
                    .relation_pairs(*via, eps)
                    .iter()
                    .filter(|(_, b)| targets.contains(&Value::Inst(*b)))
                    .map(|(a, _)| Value::Inst(*a))
                    .collect();
                current.tuples.retain(|v| sources.contains(&v[0]));
            }
            Edge::Mark { marker, .. } => {
                current = match marker {
                    Marker::Count => apply_count(&current),
                    Marker::Superlative(dir) => apply_superlative(&current, world, *dir)?,
                    Marker::Negate(domain) => apply_negation(&current, world, *domain),
                };
            }
        }
    }
    Ok(current)
}

fn check_arg(arg: usize, arity: usize, predicate: &str) -> Result<()> {
    if arg == 0 || arg > arity {
        return Err(Error::RelationArity(format!(
            "argument {arg} out of range for `{predicate}` of arity {arity}"
        )));
    }
    Ok(())
}

/// `{ (|heads(d)|) }`: the number of distinct head values.
pub fn apply_count(d: &Denotation) -> Denotation {
    Denotation::unary([Value::Num(d.heads().len() as i64)])
}

/// The single instance with the extreme cuboid volume; ties go to the smallest id.
pub fn apply_superlative(
    d: &Denotation,
    world: &World,
    direction: Direction,
) -> Result<Denotation> {
    let mut best: Option<(f64, InstanceId)> = None;
    for v in d.heads() {
        let id = match v {
            Value::Inst(id) => id,
            other => {
                return Err(Error::InvalidTree(format!(
                    "superlative over a non-instance value {other:?}"
                )))
            }
        };
        let obj = world
            .object(id)
            .ok_or_else(|| Error::Invalid(format!("instance {id} is not in the world")))?;
        let vol = obj.loc.volume();
        let better = match best {
            None => true,
            Some((b, bid)) => match direction {
                Direction::Max => vol > b || (vol == b && id < bid),
                Direction::Min => vol < b || (vol == b && id < bid),
            },
        };
        if better {
            best = Some((vol, id));
        }
    }
    Ok(Denotation::unary(best.map(|(_, id)| Value::Inst(id))))
}

/// Complement of the head values of `d` within the domain.
pub fn apply_negation(d: &Denotation, world: &World, domain: NegationDomain) -> Denotation {
    let present = d.heads();
    let all: Vec<Value> = match domain {
        NegationDomain::Images => world
            .images()
            .iter()
            .map(|i| Value::Image(i.clone()))
            .collect(),
        NegationDomain::Instances => world
            .objects()
            .iter()
            .map(|o| Value::Inst(o.instance_id))
            .collect(),
    };
    Denotation::unary(all.into_iter().filter(|v| !present.contains(v)))
}

/// A set of atomic answer terms, compared case-insensitively.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Answer(BTreeSet<String>);

impl Answer {
    pub fn new<S: AsRef<str>>(terms: impl IntoIterator<Item = S>) -> Self {
        Answer(
            terms
                .into_iter()
                .map(|t| t.as_ref().trim().to_lowercase())
                .filter(|t| !t.is_empty())
                .collect(),
        )
    }

    pub fn empty() -> Self {
        Answer::default()
    }

    /// Parses a comma-separated answer line.
    pub fn parse_line(line: &str) -> Self {
        Answer::new(line.split(','))
    }

    pub fn terms(&self) -> &BTreeSet<String> {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<&str> = self.0.iter().map(String::as_str).collect();
        f.write_str(&terms.join(", "))
    }
}

/// Projects the head column of a denotation onto answer terms.
pub fn project_answer(d: &Denotation, world: &World) -> Answer {
    let mut terms = BTreeSet::new();
    for v in d.heads() {
        let term = match v {
            Value::Inst(id) => match world.object(id) {
                Some(o) => o.category.clone(),
                None => continue,
            },
            Value::Image(i) => i,
            Value::Term(t) => t,
            Value::Num(n) => n.to_string(),
        };
        terms.insert(term);
    }
    Answer::new(terms)
}

pub fn denote_answer(tree: &DcsTree, world: &World, eps: f64) -> Result<Answer> {
    Ok(project_answer(&evaluate_dcs(tree, world, eps)?, world))
}

/// Groups candidate probability mass by answer: `Σ_T 1[A = answer(T)] P(T)`.
pub fn aggregate_answers<'a>(
    weighted: impl IntoIterator<Item = (&'a Answer, f64)>,
) -> BTreeMap<Answer, f64> {
    let mut out: BTreeMap<Answer, f64> = BTreeMap::new();
    for (a, p) in weighted {
        *out.entry(a.clone()).or_insert(0.0) += p;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::tests::{cube, obj};
    use crate::scene::{SceneFact, World};

    fn world() -> World {
        let small = cube((0.0, 1.0), (0.0, 1.0), (0.0, 1.0));
        let big = cube((0.0, 2.0), (0.0, 2.0), (0.0, 2.0));
        World::new(
            vec![
                obj(1, "table", "image1", "brown", small),
                obj(2, "table", "image1", "white", big),
                obj(3, "chair", "image2", "brown", small),
            ],
            vec![SceneFact {
                image_id: "image3".into(),
                room_type: "bedroom".into(),
            }],
            0.0,
        )
        .unwrap()
    }

    fn inst(i: u64) -> Value {
        Value::Inst(InstanceId(i))
    }

    #[test]
    fn leaf_matches_query() {
        let w = world();
        let d = evaluate_dcs(&DcsTree::leaf("table"), &w, 0.1).unwrap();
        assert_eq!(d, Denotation::unary([inst(1), inst(2)]));
    }

    #[test]
    fn join_filters_by_color() {
        let w = world();
        let t: DcsTree = "(table (join 1 1 (brown)))".parse().unwrap();
        assert_eq!(
            evaluate_dcs(&t, &w, 0.1).unwrap(),
            Denotation::unary([inst(1)])
        );
    }

    #[test]
    fn join_arity_error() {
        let w = world();
        let t = DcsTree::leaf("table").join(2, 1, DcsTree::leaf("brown"));
        assert!(matches!(
            evaluate_dcs(&t, &w, 0.1),
            Err(Error::RelationArity(_))
        ));
    }

    #[test]
    fn count_examples() {
        assert_eq!(
            apply_count(&Denotation::unary([inst(1), inst(2)])),
            Denotation::unary([Value::Num(2)])
        );
        assert_eq!(
            apply_count(&Denotation::empty(1)),
            Denotation::unary([Value::Num(0)])
        );
        let seven = Denotation::unary((0..7).map(inst));
        assert_eq!(apply_count(&seven), Denotation::unary([Value::Num(7)]));
        assert_eq!(
            apply_count(&apply_count(&seven)),
            Denotation::unary([Value::Num(1)])
        );
    }

    #[test]
    fn superlative_examples() {
        let w = world();
        let d = Denotation::unary([inst(1), inst(2)]);
        assert_eq!(
            apply_superlative(&d, &w, Direction::Max).unwrap(),
            Denotation::unary([inst(2)])
        );
        assert_eq!(
            apply_superlative(&d, &w, Direction::Min).unwrap(),
            Denotation::unary([inst(1)])
        );
        // equal volumes: smallest id
        let tie = Denotation::unary([inst(3), inst(1)]);
        assert_eq!(
            apply_superlative(&tie, &w, Direction::Max).unwrap(),
            Denotation::unary([inst(1)])
        );
        assert!(apply_superlative(&Denotation::empty(1), &w, Direction::Max)
            .unwrap()
            .is_empty());
        assert!(
            apply_superlative(&Denotation::unary([Value::Num(1)]), &w, Direction::Max).is_err()
        );
    }

    #[test]
    fn negation_examples() {
        let w = world();
        let img = |s: &str| Value::Image(s.into());
        let d = Denotation::unary([img("image1")]);
        let neg = apply_negation(&d, &w, NegationDomain::Images);
        assert_eq!(neg, Denotation::unary([img("image2"), img("image3")]));
        assert_eq!(apply_negation(&neg, &w, NegationDomain::Images), d);
        let all = Denotation::unary(w.images().iter().map(|i| img(i)));
        assert!(apply_negation(&all, &w, NegationDomain::Images).is_empty());
    }

    #[test]
    fn answer_projection() {
        let w = world();
        let t: DcsTree = "(argmax (table))".parse().unwrap();
        assert_eq!(denote_answer(&t, &w, 0.1).unwrap(), Answer::new(["table"]));
        let t: DcsTree = "(count (brown))".parse().unwrap();
        assert_eq!(denote_answer(&t, &w, 0.1).unwrap().to_string(), "2");
        let t: DcsTree = "(negate images (images (join 1 2 (image (join 1 1 (table))))))"
            .parse()
            .unwrap();
        assert_eq!(
            denote_answer(&t, &w, 0.1).unwrap(),
            Answer::new(["image2", "image3"])
        );
    }

    #[test]
    fn serialization_round_trip() {
        for s in [
            "(count (table (join 1 1 (brown))))",
            "(negate images (images (join 1 2 (image (join 1 1 (sofa))))))",
            "(argmin (object (bridge on (table))))",
            "(room_type (join 2 1 (image7)))",
            "(count (night_stand))",
        ] {
            let t: DcsTree = s.parse().unwrap();
            assert_eq!(t.serialize(), s);
        }
        assert_eq!(
            "(night_stand)".parse::<DcsTree>().unwrap().predicate,
            "night stand"
        );
        assert!("(table (join 0 1 (x)))".parse::<DcsTree>().is_err());
        assert!("(table".parse::<DcsTree>().is_err());
        assert!("(table (bridge nextTo (x)))".parse::<DcsTree>().is_err());
    }

    #[test]
    fn joins_are_canonically_ordered() {
        let a = DcsTree::leaf("table")
            .join(1, 1, DcsTree::leaf("white"))
            .join(1, 1, DcsTree::leaf("brown"));
        let b = DcsTree::leaf("table")
            .join(1, 1, DcsTree::leaf("brown"))
            .join(1, 1, DcsTree::leaf("white"));
        assert_eq!(a.serialize(), b.serialize());
        assert_eq!(a.depth(), 2);
    }
}
