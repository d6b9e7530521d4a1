use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::{AnnotationRecord, Contribution, RecordStatus};

use super::prf::{span_prf, DocumentCounts, Prf};
use super::tags::{TagAgreement, TokenTag};
use super::{match_spans, tokenize, unit_boundaries, unit_token_sets, window_diff, MatchConfig};

/// Two annotations of one contribution. `b` is the reference side.
#[derive(Debug, Clone)]
pub struct DocumentPair<'a> {
    pub contribution: &'a Contribution,
    pub a: &'a AnnotationRecord,
    pub b: &'a AnnotationRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPrf {
    pub lambda: f64,
    pub micro: Prf,
    #[serde(rename = "macro")]
    pub macro_: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Pairs scored (both records completed).
    pub documents: usize,
    /// Pairs left out because one side was skipped.
    pub skipped_documents: usize,
    /// Mean WindowDiff over documents with at least two tokens.
    pub window_diff: f64,
    pub window_k: usize,
    pub span_prf: Vec<LambdaPrf>,
    /// Mean of the per-document token agreement ratios.
    pub tag_agreement_ratio: f64,
    pub tag_agreement_median: f64,
    /// Per-class agreement over all tokens pooled.
    pub per_class_agreement: BTreeMap<TokenTag, Option<f64>>,
    pub per_class_definition: String,
    pub merged_ratio: f64,
    pub merged_class_agreement: Option<f64>,
    /// Rows follow `a`, columns follow `b`, in the order statement, solution, premise, none.
    pub confusion: [[f64; 4]; 4],
}

/// Corpus-level agreement between two annotation sets.
pub fn agreement_report(pairs: &[DocumentPair<'_>], lambdas: &[f64], window_k: usize) -> Result<AgreementReport> {
    if window_k == 0 {
        return Err(CoreError::Config("window_k must be positive".into()));
    }
    let configs: Vec<MatchConfig> = lambdas.iter().map(|&lambda| MatchConfig { lambda, window_k }).collect();
    for c in &configs {
        c.validate()?;
    }

    let mut counts: Vec<Vec<DocumentCounts>> = vec![Vec::new(); configs.len()];
    let mut wd = Vec::new();
    let mut ratios = Vec::new();
    let mut all_a = Vec::new();
    let mut all_b = Vec::new();
    let mut skipped = 0usize;

    for pair in pairs {
        for r in [pair.a, pair.b] {
            if r.contribution_id != pair.contribution.id {
                return Err(CoreError::ContributionMismatch {
                    record: r.contribution_id.clone(),
                    contribution: pair.contribution.id.clone(),
                });
            }
        }
        if pair.a.status != RecordStatus::Completed || pair.b.status != RecordStatus::Completed {
            skipped += 1;
            continue;
        }
        let tokens = tokenize(&pair.contribution.text);
        let sets_a = unit_token_sets(pair.a, &tokens);
        let sets_b = unit_token_sets(pair.b, &tokens);
        for (cfg, docs) in configs.iter().zip(counts.iter_mut()) {
            let m = match_spans(&sets_a, &sets_b, cfg);
            docs.push(DocumentCounts { matches: m.pairs.len(), n_a: sets_a.len(), n_b: sets_b.len() });
        }
        if tokens.len() >= 2 {
            let k = window_k.min(tokens.len() - 1);
            let ba = unit_boundaries(pair.a, &tokens);
            let bb = unit_boundaries(pair.b, &tokens);
            wd.push(window_diff(&bb, &ba, tokens.len(), k)?);
        }
        if !tokens.is_empty() {
            let la = super::token_labels(pair.a, &tokens);
            let lb = super::token_labels(pair.b, &tokens);
            ratios.push(TagAgreement::from_labels(&la, &lb)?.ratio);
            all_a.extend(la);
            all_b.extend(lb);
        }
    }

    let pooled = if all_a.is_empty() { None } else { Some(TagAgreement::from_labels(&all_a, &all_b)?) };
    let span_prf = configs
        .iter()
        .zip(&counts)
        .map(|(c, docs)| {
            let p = span_prf(docs);
            LambdaPrf { lambda: c.lambda, micro: p.micro, macro_: p.macro_ }
        })
        .collect();

    Ok(AgreementReport {
        documents: pairs.len() - skipped,
        skipped_documents: skipped,
        window_diff: mean(&wd),
        window_k,
        span_prf,
        tag_agreement_ratio: mean(&ratios),
        tag_agreement_median: median(&mut ratios),
        per_class_agreement: pooled
            .as_ref()
            .map(|p| p.per_class.clone())
            .unwrap_or_else(|| TokenTag::ALL.iter().map(|&t| (t, None)).collect()),
        per_class_definition: "tokens labeled c by both annotators / tokens labeled c by either".into(),
        merged_ratio: pooled.as_ref().map(|p| p.merged_ratio).unwrap_or(0.0),
        merged_class_agreement: pooled.as_ref().and_then(|p| p.merged_class),
        confusion: pooled.as_ref().map(|p| p.confusion()).unwrap_or([[0.0; 4]; 4]),
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
