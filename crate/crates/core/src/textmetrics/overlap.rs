use std::collections::BTreeSet;

use crate::error::{CoreError, Result};
use crate::model::{merge_spans, AnnotationRecord, CharSpan, LabeledSegment};

use super::Token;

/// `min(|S1 ∩ S2| / |S1|, |S1 ∩ S2| / |S2|)`.
pub fn overlap_score(s1: &BTreeSet<usize>, s2: &BTreeSet<usize>) -> Result<f64> {
    if s1.is_empty() || s2.is_empty() {
        return Err(CoreError::EmptySet);
    }
    let inter = s1.intersection(s2).count() as f64;
    Ok((inter / s1.len() as f64).min(inter / s2.len() as f64))
}

/// Indices of the tokens lying fully inside the union of `spans`.
pub fn token_set(tokens: &[Token], spans: &[CharSpan]) -> BTreeSet<usize> {
    let merged = merge_spans(spans);
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| merged.iter().any(|s| s.contains(&t.span)))
        .map(|(i, _)| i)
        .collect()
}

/// One token set per unit of the record.
pub fn unit_token_sets(record: &AnnotationRecord, tokens: &[Token]) -> Vec<BTreeSet<usize>> {
    record.units.iter().map(|u| token_set(tokens, &u.spans)).collect()
}

/// Overlap gated by label equality.
pub fn constrained_overlap(seg1: &LabeledSegment, seg2: &LabeledSegment, tokens: &[Token]) -> Result<f64> {
    let a = token_set(tokens, &[seg1.span]);
    let b = token_set(tokens, &[seg2.span]);
    let score = overlap_score(&a, &b)?;
    Ok(if seg1.kind == seg2.kind { score } else { 0.0 })
}
