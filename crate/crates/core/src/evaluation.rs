//! Accuracy, WUP similarity and the WUPS set score.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;

use crate::dcs::Answer;
use crate::error::{Error, Result};

/// Sub-threshold similarities are multiplied by this factor.
pub const DOWN_WEIGHT: f64 = 0.1;

const NOUN_SUFFIXES: &[(&str, &str)] = &[
    ("ses", "s"),
    ("xes", "x"),
    ("zes", "z"),
    ("ches", "ch"),
    ("shes", "sh"),
    ("men", "man"),
    ("ies", "y"),
    ("s", ""),
];

fn normalize_term(t: &str) -> String {
    t.trim().to_lowercase().replace('_', " ")
}

/// A rooted DAG of terms. A node may carry several lemmas written as
/// `lemma1,lemma2#id`; a plain `term` is its own single lemma.
#[derive(Clone, Debug)]
pub struct Taxonomy {
    names: Vec<String>,
    parents: Vec<Vec<usize>>,
    depth: Vec<usize>,
    senses: HashMap<String, Vec<usize>>,
    root: usize,
}

impl Taxonomy {
    pub fn from_edges<S: AsRef<str>>(edges: impl IntoIterator<Item = (S, S)>) -> Result<Self> {
        let mut ids: HashMap<String, usize> = HashMap::new();
        let mut names = Vec::new();
        let mut parents: Vec<Vec<usize>> = Vec::new();
        let mut id_of =
            |name: &str, names: &mut Vec<String>, parents: &mut Vec<Vec<usize>>| -> usize {
                *ids.entry(name.to_string()).or_insert_with(|| {
                    names.push(name.to_string());
                    parents.push(Vec::new());
                    names.len() - 1
                })
            };
        for (c, p) in edges {
            let (c, p) = (c.as_ref().trim(), p.as_ref().trim());
            if c.is_empty() || p.is_empty() {
                return Err(Error::Taxonomy("empty node name".into()));
            }
            let ci = id_of(c, &mut names, &mut parents);
            let pi = id_of(p, &mut names, &mut parents);
            if ci == pi {
                return Err(Error::Taxonomy(format!("`{c}` is its own parent")));
            }
            if !parents[ci].contains(&pi) {
                parents[ci].push(pi);
            }
        }
        let roots: Vec<usize> = (0..names.len())
            .filter(|&i| parents[i].is_empty())
            .collect();
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(Error::Taxonomy("no root".into())),
            many => {
                let shown: Vec<&str> = many.iter().take(5).map(|&i| names[i].as_str()).collect();
                return Err(Error::Taxonomy(format!(
                    "{} roots, e.g. {shown:?}",
                    many.len()
                )));
            }
        };
        let depth = longest_depths(&names, &parents)?;
        let mut senses: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            let lemma_part = name.split('#').next().unwrap_or(name);
            let mut keys: HashSet<String> = lemma_part.split(',').map(normalize_term).collect();
            keys.insert(normalize_term(name));
            for k in keys.into_iter().filter(|k| !k.is_empty()) {
                senses.entry(k).or_default().push(i);
            }
        }
        Ok(Taxonomy {
            names,
            parents,
            depth,
            senses,
            root,
        })
    }

    /// Reads `child TAB parent` lines; `#` starts a comment line.
    pub fn read(input: impl BufRead, source: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Io {
                path: source.into(),
                source: e,
            })?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (c, p) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(source, i + 1, "expected `child TAB parent`"))?;
            edges.push((c.to_string(), p.to_string()));
        }
        Taxonomy::from_edges(edges)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Taxonomy::read(BufReader::new(f), &path.display().to_string())
    }

    pub fn root(&self) -> &str {
        &self.names[self.root]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Depth of a node by name (root has depth 1).
    pub fn node_depth(&self, node: &str) -> Option<usize> {
        self.names
            .iter()
            .position(|n| n == node)
            .map(|i| self.depth[i])
    }

    /// Nodes a term may denote: exact lemma match, else noun inflection rules.
    pub fn senses(&self, term: &str) -> Vec<usize> {
        let t = normalize_term(term);
        if let Some(s) = self.senses.get(&t) {
            return s.clone();
        }
        let mut out = Vec::new();
        for (suffix, repl) in NOUN_SUFFIXES {
            if let Some(stem) = t.strip_suffix(suffix) {
                if let Some(s) = self.senses.get(&format!("{stem}{repl}")) {
                    for &i in s {
                        if !out.contains(&i) {
                            out.push(i);
                        }
                    }
                }
            }
        }
        out
    }

    fn ancestors(&self, node: usize) -> HashSet<usize> {
        let mut seen = HashSet::from([node]);
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            for &p in &self.parents[n] {
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
        seen
    }

    fn node_wup(&self, a: usize, b: usize) -> f64 {
        let aa = self.ancestors(a);
        let lcs_depth = self
            .ancestors(b)
            .into_iter()
            .filter(|c| aa.contains(c))
            .map(|c| self.depth[c])
            .max()
            .unwrap_or(0);
        2.0 * lcs_depth as f64 / (self.depth[a] + self.depth[b]) as f64
    }
}

fn longest_depths(names: &[String], parents: &[Vec<usize>]) -> Result<Vec<usize>> {
    // 0 = unvisited, usize::MAX = on the stack
    let mut depth = vec![0usize; names.len()];
    for start in 0..names.len() {
        if depth[start] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        depth[start] = usize::MAX;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if let Some(&p) = parents[node].get(*next) {
                *next += 1;
                match depth[p] {
                    usize::MAX => {
                        return Err(Error::Taxonomy(format!("cycle through `{}`", names[p])))
                    }
                    0 => {
                        depth[p] = usize::MAX;
                        stack.push((p, 0));
                    }
                    _ => {}
                }
            } else {
                depth[node] = 1 + parents[node].iter().map(|&p| depth[p]).max().unwrap_or(0);
                stack.pop();
            }
        }
    }
    Ok(depth)
}

/// Wu-Palmer similarity `2·depth(lcs) / (depth(a) + depth(b))`, maximized
/// over senses. Terms missing from the taxonomy score 1 against an equal
/// string and 0 otherwise.
pub fn wup(a: &str, b: &str, tax: &Taxonomy) -> f64 {
    let (sa, sb) = (tax.senses(a), tax.senses(b));
    if sa.is_empty() || sb.is_empty() {
        return if normalize_term(a) == normalize_term(b) {
            1.0
        } else {
            0.0
        };
    }
    let mut best: f64 = 0.0;
    for &x in &sa {
        for &y in &sb {
            best = best.max(tax.node_wup(x, y));
        }
    }
    best
}

fn thresholded(s: f64, t: f64) -> f64 {
    if s < t {
        DOWN_WEIGHT * s
    } else {
        s
    }
}

fn directed(from: &Answer, to: &Answer, sim: &impl Fn(&str, &str) -> f64) -> f64 {
    from.terms()
        .iter()
        .map(|a| to.terms().iter().map(|b| sim(a, b)).fold(0.0, f64::max))
        .product()
}

/// Score of one pair in [0, 1]: the smaller of the two directed products.
pub fn wups_pair(pred: &Answer, gold: &Answer, tax: &Taxonomy, threshold: f64) -> f64 {
    let sim = |a: &str, b: &str| thresholded(wup(a, b, tax), threshold);
    directed(pred, gold, &sim).min(directed(gold, pred, &sim))
}

fn check_lengths(preds: &[Answer], golds: &[Answer]) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::Invalid("no answers to score".into()));
    }
    Ok(())
}

/// Percentage of exact set matches.
pub fn accuracy_score(preds: &[Answer], golds: &[Answer]) -> Result<f64> {
    check_lengths(preds, golds)?;
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(100.0 * hits as f64 / preds.len() as f64)
}

/// Mean pair score × 100 at one threshold.
pub fn wups_score(
    preds: &[Answer],
    golds: &[Answer],
    tax: &Taxonomy,
    threshold: f64,
) -> Result<f64> {
    Ok(wups_curve(preds, golds, tax, &[threshold])?[0].1)
}

/// WUPS at each threshold. Similarities are computed once per term pair.
pub fn wups_curve(
    preds: &[Answer],
    golds: &[Answer],
    tax: &Taxonomy,
    thresholds: &[f64],
) -> Result<Vec<(f64, f64)>> {
    check_lengths(preds, golds)?;
    let mut pairs: Vec<(&str, &str)> = Vec::new();
    for (p, g) in preds.iter().zip(golds) {
        for a in p.terms() {
            for b in g.terms() {
                pairs.push((a, b));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let table: HashMap<(&str, &str), f64> = pairs
        .par_iter()
        .map(|&(a, b)| ((a, b), wup(a, b, tax)))
        .collect();
    let raw = |a: &str, b: &str| {
        table
            .get(&(a, b))
            .copied()
            .unwrap_or_else(|| wup(a, b, tax))
    };
    let n = preds.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let sim = |a: &str, b: &str| thresholded(raw(a, b), t);
            let sim_rev = |a: &str, b: &str| thresholded(raw(b, a), t);
            let total: f64 = preds
                .iter()
                .zip(golds)
                .map(|(p, g)| directed(p, g, &sim).min(directed(g, p, &sim_rev)))
                .sum();
            (t, 100.0 * total / n)
        })
        .collect())
}

/// Thresholds 0.00, 0.01, …, 1.00.
pub fn default_thresholds() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Per-pair predictions and golds with their aggregate scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredRun {
    pub preds: Vec<Answer>,
    pub golds: Vec<Answer>,
    pub accuracy: f64,
    pub wups: Vec<(f64, f64)>,
}

impl ScoredRun {
    pub fn score(
        preds: Vec<Answer>,
        golds: Vec<Answer>,
        tax: &Taxonomy,
        thresholds: &[f64],
    ) -> Result<Self> {
        let accuracy = accuracy_score(&preds, &golds)?;
        let wups = wups_curve(&preds, &golds, tax, thresholds)?;
        Ok(ScoredRun {
            preds,
            golds,
            accuracy,
            wups,
        })
    }
}

/// Most frequent answer; ties go to the lexicographically smallest rendering.
pub fn most_popular_answer(golds: &[Answer]) -> Option<Answer> {
    let mut counts: BTreeMap<String, (usize, &Answer)> = BTreeMap::new();
    for g in golds {
        counts.entry(g.to_string()).or_insert((0, g)).0 += 1;
    }
    let mut best: Option<(usize, &Answer)> = None;
    for (n, a) in counts.into_values() {
        if best.is_none_or(|(bn, _)| n > bn) {
            best = Some((n, a));
        }
    }
    best.map(|(_, a)| a.clone())
}

/// The baseline that answers every question with the most popular training answer.
pub fn popular_answer_baseline(train_golds: &[Answer]) -> Result<Answer> {
    most_popular_answer(train_golds).ok_or_else(|| Error::Invalid("no training answers".into()))
}
