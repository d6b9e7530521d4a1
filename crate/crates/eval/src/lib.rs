//! Pairwise judging of two clusterings of the same texts.
//!
//! Same-cluster pairs are sampled from each clustering, shown side by side
//! to a judge model in random order, and the de-randomized preferences are
//! tested against chance.

mod judge;

pub use judge::{
    build_items, judge_pairs, EvalError, ItemResult, JudgeConfig, JudgeItem, JudgeReport, Outcome, Result, Tests,
};
