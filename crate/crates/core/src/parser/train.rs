//! Weakly supervised training from question-answer pairs.
//!
//! Each epoch regenerates candidates with the current weights, then takes
//! gradient ascent steps on
//! `Σ log Σ_{T correct} P(T|Q) − (l2/2)‖θ‖²` over that fixed candidate set.
//! A step that would lower the objective is halved until it does not.

use std::collections::HashMap;
use std::sync::Arc;

use log::{debug, info};
use rayon::prelude::*;

use crate::dcs::{denote_answer, Answer, DEFAULT_MAX_DEPTH};
use crate::error::{Error, Result};
use crate::evaluation::most_popular_answer;
use crate::parser::candidates::{generate_candidates, ScoredTree};
use crate::parser::lexicon::{tokenize, Lexicon};
use crate::parser::model::{log_sum_exp, softmax, ParserModel, DEFAULT_BEAM_SIZE};
use crate::scene::{World, DEFAULT_EPS};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub step: f64,
    pub l2: f64,
    pub beam_size: usize,
    pub max_depth: usize,
    pub eps: f64,
    /// Gradient steps per epoch on the epoch's candidate set.
    pub inner_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            step: 0.1,
            l2: 1e-3,
            beam_size: DEFAULT_BEAM_SIZE,
            max_depth: DEFAULT_MAX_DEPTH,
            eps: DEFAULT_EPS,
            inner_steps: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.beam_size == 0 || self.max_depth == 0 || self.inner_steps == 0 {
            return Err(Error::Invalid(
                "epochs, beam size, depth and inner steps must be positive".into(),
            ));
        }
        if !(self.step > 0.0 && self.step.is_finite()) || !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Invalid(
                "step must be positive and l2 nonnegative".into(),
            ));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Invalid("eps must be positive".into()));
        }
        Ok(())
    }
}

/// A question, its gold answer and the world it is asked about.
#[derive(Clone, Debug)]
pub struct TrainExample {
    pub question: String,
    pub gold: Answer,
    pub world: Arc<World>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Objective on this epoch's candidates after the update.
    pub objective: f64,
    /// Share of examples whose most probable answer equals the gold, in [0, 1].
    pub accuracy: f64,
    /// Examples without a correct candidate in the beam.
    pub unreachable: usize,
    /// Last accepted step size.
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: ParserModel,
    pub trace: Vec<EpochStats>,
    /// Indices of examples with no correct candidate in the final epoch.
    pub unreachable: Vec<usize>,
}

/// Interns feature keys to dense indices.
#[derive(Clone, Debug, Default)]
pub struct FeatureIndex {
    ids: HashMap<String, usize>,
    names: Vec<String>,
}

impl FeatureIndex {
    pub fn intern(&mut self, key: &str) -> usize {
        if let Some(&i) = self.ids.get(key) {
            return i;
        }
        self.names.push(key.to_string());
        self.ids.insert(key.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Candidates of one example with interned features.
#[derive(Clone, Debug, Default)]
pub struct ExampleCandidates {
    pub features: Vec<Vec<(usize, f64)>>,
    pub answers: Vec<Answer>,
    pub correct: Vec<bool>,
}

impl ExampleCandidates {
    pub fn from_scored(
        index: &mut FeatureIndex,
        scored: &[ScoredTree],
        answers: Vec<Answer>,
        gold: &Answer,
    ) -> Self {
        let features = scored
            .iter()
            .map(|c| {
                c.features
                    .iter()
                    .map(|(k, v)| (index.intern(k), v as f64))
                    .collect()
            })
            .collect();
        let correct = answers.iter().map(|a| a == gold).collect();
        ExampleCandidates {
            features,
            answers,
            correct,
        }
    }

    pub fn reachable(&self) -> bool {
        self.correct.iter().any(|&c| c)
    }

    pub fn scores(&self, theta: &[f64]) -> Vec<f64> {
        self.features
            .iter()
            .map(|f| {
                f.iter()
                    .map(|&(i, v)| theta.get(i).copied().unwrap_or(0.0) * v)
                    .sum()
            })
            .collect()
    }

    /// Most probable answer under Eq. 1 on this candidate set.
    pub fn predict(&self, theta: &[f64]) -> Option<Answer> {
        if self.answers.is_empty() {
            return None;
        }
        let probs = softmax(&self.scores(theta));
        let mut mass: HashMap<&Answer, f64> = HashMap::new();
        for (a, p) in self.answers.iter().zip(probs) {
            *mass.entry(a).or_insert(0.0) += p;
        }
        let mut ranked: Vec<(&Answer, f64)> = mass.into_iter().collect();
        ranked.sort_by(|(a, pa), (b, pb)| {
            pb.total_cmp(pa)
                .then_with(|| a.to_string().cmp(&b.to_string()))
        });
        ranked.first().map(|(a, _)| (*a).clone())
    }
}

/// The training objective over fixed candidate sets.
#[derive(Clone, Debug, Default)]
pub struct TrainingProblem {
    pub examples: Vec<ExampleCandidates>,
    pub dim: usize,
}

impl TrainingProblem {
    pub fn objective(&self, theta: &[f64], l2: f64) -> f64 {
        let data: f64 = self
            .examples
            .iter()
            .filter(|e| e.reachable())
            .map(|e| {
                let s = e.scores(theta);
                let correct = s
                    .iter()
                    .zip(&e.correct)
                    .filter(|(_, &c)| c)
                    .map(|(x, _)| *x);
                log_sum_exp(correct.collect::<Vec<_>>()) - log_sum_exp(s)
            })
            .sum();
        data - 0.5 * l2 * theta.iter().map(|t| t * t).sum::<f64>()
    }

    /// `Σ (E_correct[φ] − E_all[φ]) − l2·θ`.
    pub fn gradient(&self, theta: &[f64], l2: f64) -> Vec<f64> {
        let mut g: Vec<f64> = (0..self.dim)
            .map(|i| -l2 * theta.get(i).copied().unwrap_or(0.0))
            .collect();
        for e in self.examples.iter().filter(|e| e.reachable()) {
            let s = e.scores(theta);
            let all = softmax(&s);
            let masked: Vec<f64> = s
                .iter()
                .zip(&e.correct)
                .map(|(&x, &c)| if c { x } else { f64::NEG_INFINITY })
                .collect();
            let corr = softmax(&masked);
            for ((f, pa), pc) in e.features.iter().zip(all).zip(corr) {
                let w = pc - pa;
                if w != 0.0 {
                    for &(i, v) in f {
                        g[i] += w * v;
                    }
                }
            }
        }
        g
    }

    pub fn accuracy(&self, theta: &[f64], golds: &[Answer]) -> f64 {
        if self.examples.is_empty() {
            return 0.0;
        }
        let hits = self
            .examples
            .iter()
            .zip(golds)
            .filter(|(e, g)| e.predict(theta).as_ref() == Some(*g))
            .count();
        hits as f64 / self.examples.len() as f64
    }
}

fn weights_map(index: &FeatureIndex, theta: &[f64]) -> std::collections::BTreeMap<String, f64> {
    index
        .names()
        .iter()
        .zip(theta)
        .filter(|(_, &w)| w != 0.0)
        .map(|(k, &w)| (k.clone(), w))
        .collect()
}

type AnswerCache = HashMap<String, Answer>;

fn candidate_answers(
    ex: &TrainExample,
    scored: &[ScoredTree],
    cache: &mut AnswerCache,
    eps: f64,
) -> Vec<Answer> {
    scored
        .iter()
        .map(|c| {
            let key = c.tree.serialize();
            cache
                .entry(key)
                .or_insert_with(|| denote_answer(&c.tree, &ex.world, eps).unwrap_or_default())
                .clone()
        })
        .collect()
}

/// Trains a model; deterministic for fixed inputs and config.
pub fn train(
    examples: &[TrainExample],
    lexicon: Lexicon,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Invalid("no training examples".into()));
    }
    let golds: Vec<Answer> = examples.iter().map(|e| e.gold.clone()).collect();
    let mut model = ParserModel::new(lexicon).with_search(config.beam_size, config.max_depth);
    model.fallback = most_popular_answer(&golds).unwrap_or_default();
    let token_lists: Vec<Vec<String>> = examples.iter().map(|e| tokenize(&e.question)).collect();
    let mut caches: Vec<AnswerCache> = vec![AnswerCache::new(); examples.len()];
    let mut index = FeatureIndex::default();
    let mut theta: Vec<f64> = Vec::new();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut unreachable = Vec::new();

    for epoch in 1..=config.epochs {
        let weights = weights_map(&index, &theta);
        let per_example: Vec<(Vec<ScoredTree>, Vec<Answer>)> = examples
            .par_iter()
            .zip(token_lists.par_iter())
            .zip(caches.par_iter_mut())
            .map(|((ex, tokens), cache)| {
                let scored = generate_candidates(
                    tokens,
                    &model.lexicon,
                    &weights,
                    config.beam_size,
                    config.max_depth,
                );
                let answers = candidate_answers(ex, &scored, cache, config.eps);
                (scored, answers)
            })
            .collect();
        let mut problem = TrainingProblem::default();
        for ((scored, answers), gold) in per_example.into_iter().zip(&golds) {
            problem.examples.push(ExampleCandidates::from_scored(
                &mut index, &scored, answers, gold,
            ));
        }
        problem.dim = index.len();
        theta.resize(index.len(), 0.0);

        let mut objective = problem.objective(&theta, config.l2);
        let mut step = config.step;
        for _ in 0..config.inner_steps {
            let grad = problem.gradient(&theta, config.l2);
            loop {
                let next: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t + step * g).collect();
                let value = problem.objective(&next, config.l2);
                if value >= objective {
                    theta = next;
                    objective = value;
                    break;
                }
                step *= 0.5;
                if step < 1e-12 {
                    break;
                }
            }
        }
        unreachable = problem
            .examples
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.reachable())
            .map(|(i, _)| i)
            .collect();
        let stats = EpochStats {
            epoch,
            objective,
            accuracy: problem.accuracy(&theta, &golds),
            unreachable: unreachable.len(),
            step,
        };
        info!(
            "epoch {epoch}: objective {:.4}, accuracy {:.4}, unreachable {}",
            stats.objective, stats.accuracy, stats.unreachable
        );
        debug!("epoch {epoch}: {} features, step {step}", index.len());
        trace.push(stats);
    }
    model.weights = weights_map(&index, &theta);
    Ok(TrainOutput {
        model,
        trace,
        unreachable,
    })
}
