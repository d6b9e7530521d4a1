use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

use super::overlap_score;

/// Slack on the threshold comparison so that exact ratios such as 0.5 or
/// 1.0 are never lost to rounding.
const LAMBDA_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Minimum overlap for an assigned pair to count as a match; 1.0 demands
    /// identical token sets.
    pub lambda: f64,
    /// WindowDiff window, in tokens.
    pub window_k: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            lambda: 0.5,
            window_k: 15,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(CoreError::Config(format!("lambda {} outside (0, 1]", self.lambda)));
        }
        if self.window_k == 0 {
            return Err(CoreError::Config("window_k must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub a: usize,
    pub b: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
    /// Total score of the optimal one-to-one assignment, before thresholding.
    pub assignment_total: f64,
}

impl MatchResult {
    pub fn matched_total(&self) -> f64 {
        self.pairs.iter().map(|p| p.score).sum()
    }
}

/// Maximum-weight one-to-one assignment on a rectangular score matrix.
///
/// Returns, for every row, the column assigned to it. The matrix is padded
/// with zero-score dummies to a square; rows assigned to a dummy column get
/// `None`. Shortest augmenting path variant of the Hungarian method, O(n³).
pub fn max_weight_assignment(scores: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = scores.len();
    let cols = scores.iter().map(|r| r.len()).max().unwrap_or(0);
    let n = rows.max(cols);
    if n == 0 {
        return vec![None; rows];
    }
    let cost = |i: usize, j: usize| -> f64 {
        scores
            .get(i)
            .and_then(|r| r.get(j))
            .map(|s| -s)
            .unwrap_or(0.0)
    };

    // 1-based potentials, column owner `p` and back-pointers `way`.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= scores[i - 1].len() {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

/// Optimal assignment on a precomputed score matrix, then thresholding.
pub fn match_scores(scores: &[Vec<f64>], lambda: f64) -> MatchResult {
    let n_b = scores.iter().map(|r| r.len()).max().unwrap_or(0);
    match_with_width(scores, n_b, lambda)
}

fn match_with_width(scores: &[Vec<f64>], n_b: usize, lambda: f64) -> MatchResult {
    let assignment = max_weight_assignment(scores);
    let mut pairs = Vec::new();
    let mut assignment_total = 0.0;
    let mut used_b = vec![false; n_b];
    for (a, col) in assignment.iter().enumerate() {
        if let Some(b) = *col {
            let score = scores[a][b];
            assignment_total += score;
            if score > 0.0 && score + LAMBDA_SLACK >= lambda {
                pairs.push(MatchedPair { a, b, score });
                used_b[b] = true;
            }
        }
    }
    let matched_a: BTreeSet<usize> = pairs.iter().map(|p| p.a).collect();
    MatchResult {
        unmatched_a: (0..scores.len()).filter(|a| !matched_a.contains(a)).collect(),
        unmatched_b: (0..n_b).filter(|&b| !used_b[b]).collect(),
        pairs,
        assignment_total,
    }
}

/// Matches two lists of token sets by maximum total overlap.
/// Empty sets score zero against everything.
pub fn match_spans(side_a: &[BTreeSet<usize>], side_b: &[BTreeSet<usize>], cfg: &MatchConfig) -> MatchResult {
    let scores: Vec<Vec<f64>> = side_a
        .iter()
        .map(|a| {
            side_b
                .iter()
                .map(|b| overlap_score(a, b).unwrap_or(0.0))
                .collect()
        })
        .collect();
    match_with_width(&scores, side_b.len(), cfg.lambda)
}
