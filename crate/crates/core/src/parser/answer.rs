//! Answer posteriors: marginalizing over trees, and over sampled worlds.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dcs::{denote_answer, Answer, DcsTree};
use crate::error::{Error, Result};
use crate::parser::model::{softmax, ParserModel};
use crate::scene::World;

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub answer: Answer,
    pub posterior: BTreeMap<Answer, f64>,
    /// True when no parse was found and the model's fallback was used.
    pub fallback: bool,
}

impl Prediction {
    fn fallback(model: &ParserModel) -> Self {
        Prediction {
            answer: model.fallback.clone(),
            posterior: BTreeMap::from([(model.fallback.clone(), 1.0)]),
            fallback: true,
        }
    }

    fn from_posterior(posterior: BTreeMap<Answer, f64>) -> Self {
        Prediction {
            answer: argmax_answer(&posterior).cloned().unwrap_or_default(),
            posterior,
            fallback: false,
        }
    }
}

/// Most probable answer; ties go to the lexicographically smallest rendering.
pub fn argmax_answer(posterior: &BTreeMap<Answer, f64>) -> Option<&Answer> {
    let mut best: Option<(&Answer, f64, String)> = None;
    for (a, &p) in posterior {
        let s = a.to_string();
        let better = match &best {
            None => true,
            Some((_, bp, bs)) => p > *bp || (p == *bp && s < *bs),
        };
        if better {
            best = Some((a, p, s));
        }
    }
    best.map(|(a, _, _)| a)
}

/// `Σ_T 1[A = answer(T, W)] P(T|Q)` for a fixed tree distribution.
pub fn answer_posterior(
    trees: &[(DcsTree, f64)],
    world: &World,
    eps: f64,
) -> BTreeMap<Answer, f64> {
    let mut out: BTreeMap<Answer, f64> = BTreeMap::new();
    for (t, p) in trees {
        let a = denote_answer(t, world, eps).unwrap_or_default();
        *out.entry(a).or_insert(0.0) += p;
    }
    out
}

fn parse(model: &ParserModel, question: &str) -> Vec<(DcsTree, f64)> {
    let cands = model.candidates(question);
    let probs = softmax(&cands.iter().map(|c| c.score).collect::<Vec<_>>());
    cands.into_iter().map(|c| c.tree).zip(probs).collect()
}

/// Eq. 1: the answer posterior given one world.
pub fn answer_single_world(
    model: &ParserModel,
    question: &str,
    world: &World,
    eps: f64,
) -> Prediction {
    let trees = parse(model, question);
    if trees.is_empty() {
        return Prediction::fallback(model);
    }
    Prediction::from_posterior(answer_posterior(&trees, world, eps))
}

/// Eq. 2 with sampled worlds: each world has weight `1/N`.
pub fn answer_multi_world(
    model: &ParserModel,
    question: &str,
    worlds: &[World],
    eps: f64,
) -> Result<Prediction> {
    if worlds.is_empty() {
        return Err(Error::Invalid("no worlds to answer over".into()));
    }
    let trees = parse(model, question);
    if trees.is_empty() {
        return Ok(Prediction::fallback(model));
    }
    Ok(Prediction::from_posterior(multi_world_posterior(
        &trees, worlds, eps,
    )))
}

/// Uniform average of per-world posteriors, accumulated in world order.
pub fn multi_world_posterior(
    trees: &[(DcsTree, f64)],
    worlds: &[World],
    eps: f64,
) -> BTreeMap<Answer, f64> {
    let per_world: Vec<BTreeMap<Answer, f64>> = worlds
        .par_iter()
        .map(|w| answer_posterior(trees, w, eps))
        .collect();
    let n = worlds.len() as f64;
    let mut out: BTreeMap<Answer, f64> = BTreeMap::new();
    for post in per_world {
        for (a, p) in post {
            *out.entry(a).or_insert(0.0) += p / n;
        }
    }
    out
}
