//! Practice items an annotator must reproduce before real work.

use std::path::Path;

use clarify_core::model::{validate_record, AnnotationRecord, ArgumentativeUnit, Contribution, Phase, Theme};
use clarify_core::textmetrics::{match_spans, token_set, tokenize, MatchConfig, Prf};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

const BUILTIN: &str = include_str!("../data/tutorial.jsonl");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TutorialItem {
    pub contribution: Contribution,
    pub gold: Vec<ArgumentativeUnit>,
}

#[derive(Deserialize)]
struct Fixture {
    id: String,
    theme: Theme,
    text: String,
    units: Vec<ArgumentativeUnit>,
}

pub fn parse_tutorial(text: &str) -> Result<Vec<TutorialItem>> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Fixture = serde_json::from_str(line)
            .map_err(|e| ServiceError::Config(format!("tutorial line {}: {e}", i + 1)))?;
        let contribution = Contribution::new(f.id, f.theme, f.text);
        let record = AnnotationRecord::completed(contribution.id.clone(), "gold", Phase::Phase1, f.units.clone());
        let violations = validate_record(&record, &contribution)?;
        if let Some(v) = violations.first() {
            return Err(ServiceError::Config(format!("tutorial {}: {v}", contribution.id)));
        }
        items.push(TutorialItem { contribution, gold: f.units });
    }
    if items.is_empty() {
        return Err(ServiceError::Config("tutorial has no item".into()));
    }
    Ok(items)
}

pub fn load_tutorial(path: &Path) -> Result<Vec<TutorialItem>> {
    parse_tutorial(&std::fs::read_to_string(path)?)
}

pub fn builtin_tutorial() -> Vec<TutorialItem> {
    parse_tutorial(BUILTIN).expect("built-in tutorial is valid")
}

/// F1 of the annotator's units against the gold units, matched at `lambda`.
pub fn tutorial_score(item: &TutorialItem, units: &[ArgumentativeUnit], lambda: f64) -> f64 {
    let tokens = tokenize(&item.contribution.text);
    let sets = |us: &[ArgumentativeUnit]| us.iter().map(|u| token_set(&tokens, &u.spans)).collect::<Vec<_>>();
    let (ours, gold) = (sets(units), sets(&item.gold));
    let cfg = MatchConfig { lambda, ..MatchConfig::default() };
    let m = match_spans(&ours, &gold, &cfg);
    Prf::from_counts(m.pairs.len(), ours.len(), gold.len()).f1
}
