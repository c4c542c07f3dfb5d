//! The log-linear parse model and its text file format.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::dcs::{Answer, DcsTree, DEFAULT_MAX_DEPTH};
use crate::error::{Error, Result};
use crate::parser::candidates::{generate_candidates, ScoredTree};
use crate::parser::features::featurize;
use crate::parser::lexicon::{tokenize, Lexicon, Trigger};

pub const DEFAULT_BEAM_SIZE: usize = 200;

const FORMAT_LINE: &str = "# mwqa parser model v1";

/// Sparse weights θ, the lexicon and search settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ParserModel {
    pub weights: BTreeMap<String, f64>,
    pub lexicon: Lexicon,
    pub beam_size: usize,
    pub max_depth: usize,
    /// Answer emitted when a question yields no parse.
    pub fallback: Answer,
}

impl ParserModel {
    /// Zero-weight model.
    pub fn new(lexicon: Lexicon) -> Self {
        ParserModel {
            weights: BTreeMap::new(),
            lexicon,
            beam_size: DEFAULT_BEAM_SIZE,
            max_depth: DEFAULT_MAX_DEPTH,
            fallback: Answer::empty(),
        }
    }

    pub fn with_search(mut self, beam_size: usize, max_depth: usize) -> Self {
        self.beam_size = beam_size;
        self.max_depth = max_depth;
        self
    }

    /// `θ·φ(Q, T)`.
    pub fn score(&self, question: &str, tree: &DcsTree) -> f64 {
        featurize(&tokenize(question), tree, &self.lexicon).dot(&self.weights)
    }

    /// Scored candidates for a question, best first.
    pub fn candidates(&self, question: &str) -> Vec<ScoredTree> {
        generate_candidates(
            &tokenize(question),
            &self.lexicon,
            &self.weights,
            self.beam_size,
            self.max_depth,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.values().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite);
        } else if self.beam_size == 0 || self.max_depth == 0 {
            return Err(Error::Invalid(
                "beam size and depth must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn write(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{FORMAT_LINE}")?;
        writeln!(out, "# beam_size\t{}", self.beam_size)?;
        writeln!(out, "# max_depth\t{}", self.max_depth)?;
        writeln!(out, "# fallback\t{}", self.fallback)?;
        for (phrase, triggers) in self.lexicon.entries() {
            for t in triggers {
                writeln!(out, "# lex\t{phrase}\t{}", t.encode())?;
            }
        }
        for (k, w) in &self.weights {
            writeln!(out, "{k}\t{w}")?;
        }
        Ok(())
    }

    pub fn read(input: impl BufRead, source: &str) -> Result<Self> {
        let mut model = ParserModel::new(Lexicon::new());
        let mut lines = input.lines().enumerate();
        match lines.next() {
            Some((_, Ok(l))) if l == FORMAT_LINE => {}
            _ => return Err(Error::parse(source, 1, "missing model header")),
        }
        for (i, line) in lines {
            let line = line.map_err(|e| Error::Io {
                path: source.into(),
                source: e,
            })?;
            let n = i + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# ") {
                let fields: Vec<&str> = rest.split('\t').collect();
                match fields.as_slice() {
                    ["beam_size", v] => {
                        model.beam_size = v
                            .parse()
                            .map_err(|_| Error::parse(source, n, "bad beam size"))?
                    }
                    ["max_depth", v] => {
                        model.max_depth = v
                            .parse()
                            .map_err(|_| Error::parse(source, n, "bad depth"))?
                    }
                    ["fallback", v] => model.fallback = Answer::parse_line(v),
                    ["lex", phrase, trigger @ ..] => {
                        let t = Trigger::decode(trigger)
                            .map_err(|e| Error::parse(source, n, e.to_string()))?;
                        model.lexicon.insert(phrase, t);
                    }
                    _ => return Err(Error::parse(source, n, "unknown header line")),
                }
                continue;
            }
            let (k, w) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(source, n, "expected `feature TAB weight`"))?;
            let w: f64 = w
                .parse()
                .map_err(|_| Error::parse(source, n, "bad weight"))?;
            if !w.is_finite() {
                return Err(Error::parse(source, n, "non-finite weight"));
            }
            model.weights.insert(k.to_string(), w);
        }
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        };
        let mut buf = Vec::new();
        self.write(&mut buf).map_err(io)?;
        fs::write(path, buf).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        ParserModel::read(BufReader::new(f), &path.display().to_string())
    }
}

/// Normalized exponentials of `scores`, computed stably.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if scores.is_empty() {
        return Vec::new();
    }
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// `log Σ exp(s)`; `-inf` for an empty slice.
pub fn log_sum_exp(scores: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = scores.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + scores
        .into_iter()
        .map(|s| (s - max).exp())
        .sum::<f64>()
        .ln()
}

/// `P(T|Q) ∝ exp(θ·φ(Q,T))` over the given candidates.
pub fn tree_distribution(
    model: &ParserModel,
    question: &str,
    candidates: &[DcsTree],
) -> Result<Vec<(DcsTree, f64)>> {
    if candidates.is_empty() {
        return Err(Error::NoParse);
    }
    let scores: Vec<f64> = candidates
        .iter()
        .map(|t| model.score(question, t))
        .collect();
    Ok(candidates.iter().cloned().zip(softmax(&scores)).collect())
}

/// Candidate trees for a question under the model.
pub fn generate_candidate_trees(question: &str, model: &ParserModel) -> Vec<DcsTree> {
    model
        .candidates(question)
        .into_iter()
        .map(|c| c.tree)
        .collect()
}
