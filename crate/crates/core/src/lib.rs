//! Question answering over symbolic scene worlds.
//!
//! Questions are parsed into DCS trees by a log-linear model trained from
//! question/answer pairs only. Answers marginalize over candidate trees and,
//! when the scene comes from an uncertain segmentation, over sampled worlds.

pub mod corpus;
pub mod dcs;
pub mod error;
pub mod evaluation;
pub mod parser;
pub mod scene;
pub mod worlds;

pub use error::{Error, Result};
