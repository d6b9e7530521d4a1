use serde::{Deserialize, Serialize};

/// Match counts for one document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DocumentCounts {
    pub matches: usize,
    /// Units on the predicted (second annotator) side.
    pub n_a: usize,
    /// Units on the reference (first annotator) side.
    pub n_b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// P/R/F1 from raw counts. Both sides empty counts as perfect agreement.
    pub fn from_counts(matches: usize, n_a: usize, n_b: usize) -> Prf {
        if n_a == 0 && n_b == 0 {
            return Prf { precision: 1.0, recall: 1.0, f1: 1.0 };
        }
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(matches, n_a);
        let recall = ratio(matches, n_b);
        Prf { precision, recall, f1: harmonic(precision, recall) }
    }
}

pub(crate) fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpanPrf {
    pub micro: Prf,
    /// Per-document P, R and F1 averaged separately.
    #[serde(rename = "macro")]
    pub macro_: Prf,
    pub documents: usize,
}

/// Micro and macro P/R/F1 over per-document match counts.
pub fn span_prf(docs: &[DocumentCounts]) -> SpanPrf {
    let (m, a, b) = docs.iter().fold((0, 0, 0), |(m, a, b), d| (m + d.matches, a + d.n_a, b + d.n_b));
    let micro = Prf::from_counts(m, a, b);
    let macro_ = if docs.is_empty() {
        Prf::default()
    } else {
        let n = docs.len() as f64;
        let sum = docs.iter().map(|d| Prf::from_counts(d.matches, d.n_a, d.n_b)).fold(
            Prf::default(),
            |acc, p| Prf {
                precision: acc.precision + p.precision,
                recall: acc.recall + p.recall,
                f1: acc.f1 + p.f1,
            },
        );
        Prf { precision: sum.precision / n, recall: sum.recall / n, f1: sum.f1 / n }
    };
    SpanPrf { micro, macro_, documents: docs.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect() {
        let r = span_prf(&[DocumentCounts { matches: 3, n_a: 3, n_b: 3 }, DocumentCounts { matches: 1, n_a: 1, n_b: 1 }]);
        for p in [r.micro, r.macro_] {
            assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn two_predicted_one_gold() {
        let r = span_prf(&[DocumentCounts { matches: 1, n_a: 2, n_b: 1 }]);
        assert_eq!(r.micro.precision, 0.5);
        assert_eq!(r.micro.recall, 1.0);
        assert!((r.micro.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.micro, r.macro_);
    }

    #[test]
    fn micro_and_macro_differ() {
        let docs = [DocumentCounts { matches: 0, n_a: 0, n_b: 0 }, DocumentCounts { matches: 1, n_a: 4, n_b: 4 }];
        let r = span_prf(&docs);
        assert_eq!(r.micro.f1, 0.25);
        assert_eq!(r.macro_.f1, (1.0 + 0.25) / 2.0);
    }

    #[test]
    fn one_side_empty() {
        let p = Prf::from_counts(0, 0, 3);
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
    }

    proptest! {
        #[test]
        fn all_matched_equal_counts(ns in proptest::collection::vec(1usize..10, 1..10)) {
            let docs: Vec<_> = ns.iter().map(|&n| DocumentCounts { matches: n, n_a: n, n_b: n }).collect();
            let r = span_prf(&docs);
            prop_assert_eq!(r.micro.precision, r.micro.recall);
            prop_assert_eq!(r.micro.recall, r.micro.f1);
        }

        #[test]
        fn f1_is_harmonic(m in 0usize..10, extra_a in 0usize..10, extra_b in 0usize..10) {
            let p = Prf::from_counts(m, m + extra_a, m + extra_b);
            if p.precision + p.recall > 0.0 {
                let h = 2.0 / (1.0 / p.precision + 1.0 / p.recall);
                prop_assert!((p.f1 - h).abs() < 1e-12);
            }
        }
    }
}
