//! Edit-distance, ROUGE, containment and length diagnostics for human edits
//! of backend clarifications.

use std::collections::HashMap;

use clarify_core::model::{AnnotationRecord, Contribution};
use clarify_core::textmetrics::{is_punctuation, levenshtein, rouge, tokenize, RougeVariant};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

/// Argumentative unit text, backend output and final text of one accepted attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub unit: String,
    pub generated: String,
    pub final_text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostics {
    pub levenshtein: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub chars: f64,
    pub tokens: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n: usize,
    pub unit_to_generated: PairDiagnostics,
    pub unit_to_final: PairDiagnostics,
    pub generated_to_final: PairDiagnostics,
    pub contained: usize,
    /// Share of final texts found inside the backend output, punctuation ignored.
    pub containment: f64,
    pub unit_length: LengthStats,
    pub generated_length: LengthStats,
    pub final_length: LengthStats,
}

/// Accepted attempts carrying both texts, with the text of their unit.
pub fn collect_triples(records: &[AnnotationRecord], corpus: &[Contribution]) -> Result<Vec<Triple>> {
    let texts: HashMap<&str, &str> = corpus.iter().map(|c| (c.id.as_str(), c.text.as_str())).collect();
    let mut out = Vec::new();
    for r in records {
        let accepted: Vec<_> = r.events.iter().filter(|e| e.accepted).collect();
        if accepted.is_empty() {
            continue;
        }
        let source = *texts
            .get(r.contribution_id.as_str())
            .ok_or_else(|| PipelineError::UnknownContribution(r.contribution_id.clone()))?;
        for e in accepted {
            let (Some(generated), Some(final_text)) = (&e.output, &e.final_text) else { continue };
            let Some(unit) = r.units.iter().find(|u| u.id == e.au_ref) else { continue };
            out.push(Triple { unit: unit.text(source), generated: generated.clone(), final_text: final_text.clone() });
        }
    }
    Ok(out)
}

fn strip_punctuation(s: &str) -> String {
    let kept: String = s.chars().map(|c| if is_punctuation(c) { ' ' } else { c }).collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whether `inner` occurs in `outer` once punctuation is removed.
pub fn contained(inner: &str, outer: &str) -> bool {
    let (i, o) = (strip_punctuation(inner), strip_punctuation(outer));
    !i.is_empty() && format!(" {o} ").contains(&format!(" {i} "))
}

fn pair(items: &[(&str, &str)]) -> PairDiagnostics {
    let n = items.len() as f64;
    let mut d = PairDiagnostics::default();
    for (a, b) in items {
        d.levenshtein += levenshtein(a, b) as f64;
        d.rouge1 += rouge(b, a, RougeVariant::R1).f1;
        d.rouge2 += rouge(b, a, RougeVariant::R2).f1;
        d.rouge_l += rouge(b, a, RougeVariant::RL).f1;
    }
    d.levenshtein /= n;
    d.rouge1 /= n;
    d.rouge2 /= n;
    d.rouge_l /= n;
    d
}

fn lengths<'a>(texts: impl Iterator<Item = &'a str>, n: f64) -> LengthStats {
    let mut l = LengthStats::default();
    for t in texts {
        l.chars += t.chars().count() as f64;
        l.tokens += tokenize(t).len() as f64;
    }
    l.chars /= n;
    l.tokens /= n;
    l
}

pub fn diagnostics(triples: &[Triple]) -> Diagnostics {
    if triples.is_empty() {
        return Diagnostics::default();
    }
    let n = triples.len();
    let select = |f: fn(&Triple) -> (&str, &str)| triples.iter().map(f).collect::<Vec<_>>();
    let contained_count = triples.iter().filter(|t| contained(&t.final_text, &t.generated)).count();
    Diagnostics {
        n,
        unit_to_generated: pair(&select(|t| (&t.unit, &t.generated))),
        unit_to_final: pair(&select(|t| (&t.unit, &t.final_text))),
        generated_to_final: pair(&select(|t| (&t.generated, &t.final_text))),
        contained: contained_count,
        containment: contained_count as f64 / n as f64,
        unit_length: lengths(triples.iter().map(|t| t.unit.as_str()), n as f64),
        generated_length: lengths(triples.iter().map(|t| t.generated.as_str()), n as f64),
        final_length: lengths(triples.iter().map(|t| t.final_text.as_str()), n as f64),
    }
}

/// Diagnostics over every accepted attempt in `records`.
pub fn clarification_diagnostics(records: &[AnnotationRecord], corpus: &[Contribution]) -> Result<Diagnostics> {
    Ok(diagnostics(&collect_triples(records, corpus)?))
}
