use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::prf::harmonic;
use super::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RougeVariant {
    R1,
    R2,
    RL,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rouge {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Rouge {
    fn from_overlap(overlap: usize, hyp_len: usize, ref_len: usize) -> Rouge {
        if hyp_len == 0 || ref_len == 0 {
            return Rouge::default();
        }
        let precision = overlap as f64 / hyp_len as f64;
        let recall = overlap as f64 / ref_len as f64;
        Rouge { precision, recall, f1: harmonic(precision, recall) }
    }
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn ngram_overlap(r: &[&str], h: &[&str], n: usize) -> (usize, usize, usize) {
    let grams = |t: &[&str]| -> HashMap<Vec<String>, usize> {
        let mut m = HashMap::new();
        if t.len() >= n {
            for w in t.windows(n) {
                *m.entry(w.iter().map(|s| s.to_string()).collect()).or_insert(0) += 1;
            }
        }
        m
    };
    let rg = grams(r);
    let hg = grams(h);
    let overlap = hg.iter().map(|(g, c)| (*c).min(rg.get(g).copied().unwrap_or(0))).sum();
    (overlap, h.len().saturating_sub(n - 1), r.len().saturating_sub(n - 1))
}

/// ROUGE between a reference and a hypothesis over [`tokenize`] tokens.
pub fn rouge(reference: &str, hypothesis: &str, variant: RougeVariant) -> Rouge {
    let rt = tokenize(reference);
    let ht = tokenize(hypothesis);
    let r: Vec<&str> = rt.iter().map(|t| t.text.as_str()).collect();
    let h: Vec<&str> = ht.iter().map(|t| t.text.as_str()).collect();
    match variant {
        RougeVariant::R1 => {
            let (o, hl, rl) = ngram_overlap(&r, &h, 1);
            Rouge::from_overlap(o, hl, rl)
        }
        RougeVariant::R2 => {
            let (o, hl, rl) = ngram_overlap(&r, &h, 2);
            Rouge::from_overlap(o, hl, rl)
        }
        RougeVariant::RL => Rouge::from_overlap(lcs_len(&r, &h), h.len(), r.len()),
    }
}

pub fn rouge_l_f1(reference: &str, hypothesis: &str) -> f64 {
    rouge(reference, hypothesis, RougeVariant::RL).f1
}
