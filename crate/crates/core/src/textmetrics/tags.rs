use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::{AnnotationRecord, Contribution, SegmentType};

use super::{tokenize, Token};

/// Token-level class; `None` marks tokens outside every segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenTag {
    Statement,
    Solution,
    Premise,
    None,
}

impl TokenTag {
    pub const ALL: [TokenTag; 4] = [TokenTag::Statement, TokenTag::Solution, TokenTag::Premise, TokenTag::None];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TokenTag::Statement => "statement",
            TokenTag::Solution => "solution",
            TokenTag::Premise => "premise",
            TokenTag::None => "none",
        }
    }

    /// Premise folded into Statement.
    pub fn merged(self) -> TokenTag {
        match self {
            TokenTag::Premise => TokenTag::Statement,
            t => t,
        }
    }
}

impl From<SegmentType> for TokenTag {
    fn from(s: SegmentType) -> Self {
        match s {
            SegmentType::Statement => TokenTag::Statement,
            SegmentType::Solution => TokenTag::Solution,
            SegmentType::Premise => TokenTag::Premise,
        }
    }
}

/// One tag per token: the label of the segment fully containing it, else `None`.
pub fn token_labels(record: &AnnotationRecord, tokens: &[Token]) -> Vec<TokenTag> {
    tokens
        .iter()
        .map(|t| {
            record
                .segments()
                .find(|s| s.span.contains(&t.span))
                .map(|s| TokenTag::from(s.kind))
                .unwrap_or(TokenTag::None)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagAgreement {
    pub tokens: usize,
    pub ratio: f64,
    /// Intersection over union of the tokens given each class; absent when
    /// neither annotator used the class.
    pub per_class: BTreeMap<TokenTag, Option<f64>>,
    /// Ratio after folding Premise into Statement.
    pub merged_ratio: f64,
    /// Intersection over union for the folded Statement+Premise class.
    pub merged_class: Option<f64>,
    /// Counts, rows = first record, columns = second record.
    pub confusion_counts: [[u64; 4]; 4],
}

impl TagAgreement {
    pub fn from_labels(a: &[TokenTag], b: &[TokenTag]) -> Result<TagAgreement> {
        if a.len() != b.len() {
            return Err(CoreError::InvalidArgument(format!("label sequences differ in length: {} vs {}", a.len(), b.len())));
        }
        if a.is_empty() {
            return Err(CoreError::EmptySet);
        }
        let mut confusion_counts = [[0u64; 4]; 4];
        for (x, y) in a.iter().zip(b) {
            confusion_counts[x.index()][y.index()] += 1;
        }
        let n = a.len() as f64;
        let equal = a.iter().zip(b).filter(|(x, y)| x == y).count();
        let merged_equal = a.iter().zip(b).filter(|(x, y)| x.merged() == y.merged()).count();
        let per_class = TokenTag::ALL
            .iter()
            .map(|&c| (c, iou(a.iter().zip(b).map(|(x, y)| (*x == c, *y == c)))))
            .collect();
        let merged_class = iou(a.iter().zip(b).map(|(x, y)| {
            (x.merged() == TokenTag::Statement, y.merged() == TokenTag::Statement)
        }));
        Ok(TagAgreement {
            tokens: a.len(),
            ratio: equal as f64 / n,
            per_class,
            merged_ratio: merged_equal as f64 / n,
            merged_class,
            confusion_counts,
        })
    }

    /// Counts normalized to proportions summing to 1.
    pub fn confusion(&self) -> [[f64; 4]; 4] {
        let total: u64 = self.confusion_counts.iter().flatten().sum();
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = self.confusion_counts[i][j] as f64 / total as f64;
            }
        }
        out
    }
}

fn iou(flags: impl Iterator<Item = (bool, bool)>) -> Option<f64> {
    let (mut both, mut either) = (0usize, 0usize);
    for (x, y) in flags {
        both += (x && y) as usize;
        either += (x || y) as usize;
    }
    (either > 0).then(|| both as f64 / either as f64)
}

/// Token tagging agreement between two records of the same contribution.
pub fn tag_agreement(a: &AnnotationRecord, b: &AnnotationRecord, contribution: &Contribution) -> Result<TagAgreement> {
    for r in [a, b] {
        if r.contribution_id != contribution.id {
            return Err(CoreError::ContributionMismatch {
                record: r.contribution_id.clone(),
                contribution: contribution.id.clone(),
            });
        }
    }
    let tokens = tokenize(&contribution.text);
    TagAgreement::from_labels(&token_labels(a, &tokens), &token_labels(b, &tokens))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArgumentativeUnit, CharSpan, LabeledSegment, Phase, Theme};
    use proptest::prelude::*;

    fn contribution() -> Contribution {
        Contribution::new("c1", Theme::Ecology, "Il faut agir vite car la planete brule")
    }

    fn record(annotator: &str, segs: Vec<LabeledSegment>) -> AnnotationRecord {
        let unit = ArgumentativeUnit {
            id: "u1".into(),
            spans: vec![CharSpan::new(0, 38)],
            segments: segs,
            clarification: None,
            source_model: None,
        };
        AnnotationRecord::completed("c1", annotator, Phase::Phase1, vec![unit])
    }

    #[test]
    fn identical() {
        let c = contribution();
        let r = record("a", vec![LabeledSegment::new(0, 17, SegmentType::Solution), LabeledSegment::new(18, 38, SegmentType::Premise)]);
        let t = tag_agreement(&r, &r, &c).unwrap();
        assert_eq!(t.ratio, 1.0);
        let m = t.confusion();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(m[i][j], 0.0);
                }
            }
        }
        assert_eq!(t.per_class[&TokenTag::Solution], Some(1.0));
        assert_eq!(t.per_class[&TokenTag::Statement], None);
    }

    #[test]
    fn half_agree() {
        use TokenTag::*;
        let a = [Solution, Solution, Premise, Premise];
        let b = [Solution, Solution, Statement, Statement];
        let t = TagAgreement::from_labels(&a, &b).unwrap();
        assert_eq!(t.ratio, 0.5);
        assert_eq!(t.merged_ratio, 1.0);
        assert_eq!(t.merged_class, Some(1.0));
        assert_eq!(t.per_class[&Premise], Some(0.0));
        assert_eq!(t.confusion()[Premise.index()][Statement.index()], 0.5);
    }

    #[test]
    fn partial_token_is_none() {
        let c = contribution();
        // "faut" is [3, 7); a segment ending at 5 does not claim it
        let r = record("a", vec![LabeledSegment::new(0, 5, SegmentType::Statement)]);
        let tokens = tokenize(&c.text);
        let labels = token_labels(&r, &tokens);
        assert_eq!(labels[0], TokenTag::Statement);
        assert_eq!(labels[1], TokenTag::None);
    }

    #[test]
    fn mismatch_is_error() {
        let c = Contribution::new("other", Theme::Ecology, "Il faut agir vite car la planete brule");
        let r = record("a", vec![LabeledSegment::new(0, 5, SegmentType::Statement)]);
        assert!(tag_agreement(&r, &r, &c).is_err());
    }

    fn tag() -> impl Strategy<Value = TokenTag> {
        prop::sample::select(TokenTag::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn confusion_sums_to_one_and_transposes(pairs in proptest::collection::vec((tag(), tag()), 1..60)) {
            let a: Vec<_> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<_> = pairs.iter().map(|p| p.1).collect();
            let ab = TagAgreement::from_labels(&a, &b).unwrap();
            let ba = TagAgreement::from_labels(&b, &a).unwrap();
            let m = ab.confusion();
            let total: f64 = m.iter().flatten().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for i in 0..4 {
                for j in 0..4 {
                    prop_assert_eq!(ab.confusion_counts[i][j], ba.confusion_counts[j][i]);
                }
            }
            prop_assert_eq!(ab.ratio, ba.ratio);
            prop_assert_eq!(ab.per_class, ba.per_class);
        }
    }
}
