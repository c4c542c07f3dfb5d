//! Question → logical form: lexicon, candidate search, log-linear scoring,
//! training and answer marginalization.

pub mod answer;
pub mod candidates;
pub mod features;
pub mod lexicon;
pub mod model;
pub mod train;

pub use answer::{
    answer_multi_world, answer_posterior, answer_single_world, argmax_answer, Prediction,
};
pub use candidates::{generate_candidates, ScoredTree};
pub use features::{featurize, FeatureVector};
pub use lexicon::{
    build_lexicon, normalize_question, tokenize, Lexicon, PredicateKind, Trigger, Vocabulary,
};
pub use model::{generate_candidate_trees, softmax, tree_distribution, ParserModel};
pub use train::{train, EpochStats, TrainConfig, TrainExample, TrainOutput, TrainingProblem};
