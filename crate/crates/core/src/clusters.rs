//! Cluster assignments, within-cluster pair sampling and judge tallies.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{CoreError, Result};
use crate::model::Theme;
use crate::stats::{binomial_test, chi_square_uniform, Alternative, BinomialResult, ChiSquareResult};

pub const DEFAULT_NOISE_CLUSTER: &str = "-1";

/// One clustered text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub text_id: String,
    #[serde(deserialize_with = "opaque_id")]
    pub cluster: String,
    pub theme: Theme,
    pub text: String,
    /// Text to show the judge instead of `text`, when clusters were built on
    /// one representation and are judged on another.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_text_id: Option<String>,
}

fn opaque_id<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    match serde_json::Value::deserialize(d)? {
        serde_json::Value::String(s) => Ok(s),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(serde::de::Error::custom(format!("cluster id must be a string or number, got {other}"))),
    }
}

/// Validated clustering of a text collection.
#[derive(Debug, Clone, Default)]
pub struct ClusterAssignment {
    entries: Vec<ClusterEntry>,
}

impl ClusterAssignment {
    pub fn new(entries: Vec<ClusterEntry>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.text_id.as_str()) {
                return Err(CoreError::InvalidArgument(format!("duplicate text id {}", e.text_id)));
            }
        }
        Ok(ClusterAssignment { entries })
    }

    pub fn entries(&self) -> &[ClusterEntry] {
        &self.entries
    }

    pub fn get(&self, text_id: &str) -> Option<&ClusterEntry> {
        self.entries.iter().find(|e| e.text_id == text_id)
    }

    /// Members per (theme, cluster), sorted by text id, noise excluded.
    fn clusters_by_theme(&self, noise: &[&str]) -> BTreeMap<Theme, Vec<Vec<&ClusterEntry>>> {
        let mut groups: BTreeMap<Theme, BTreeMap<&str, Vec<&ClusterEntry>>> = BTreeMap::new();
        for e in &self.entries {
            if noise.contains(&e.cluster.as_str()) {
                continue;
            }
            groups.entry(e.theme).or_default().entry(e.cluster.as_str()).or_default().push(e);
        }
        groups
            .into_iter()
            .map(|(t, cs)| {
                let clusters = cs
                    .into_values()
                    .map(|mut m| {
                        m.sort_by(|a, b| a.text_id.cmp(&b.text_id));
                        m
                    })
                    .collect();
                (t, clusters)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextPair {
    pub first: String,
    pub second: String,
    pub cluster: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub pairs: BTreeMap<Theme, Vec<TextPair>>,
    /// Requested minus returned pairs, for themes that ran short.
    pub shortfall: BTreeMap<Theme, usize>,
}

fn choose2(s: usize) -> usize {
    s * s.saturating_sub(1) / 2
}

/// Index `r` of the lexicographic enumeration of pairs `i < j` of `0..s`.
fn unrank_pair(s: usize, mut r: usize) -> (usize, usize) {
    for i in 0..s {
        let cnt = s - 1 - i;
        if r < cnt {
            return (i, i + 1 + r);
        }
        r -= cnt;
    }
    unreachable!("pair rank out of range")
}

/// Samples `n_per_theme` distinct unordered same-cluster pairs per theme.
///
/// Every qualifying pair is equally likely, which weights clusters by their
/// number of pairs. Themes are drawn in a fixed order from one seeded stream.
pub fn sample_pairs(assignment: &ClusterAssignment, n_per_theme: usize, seed: u64, noise: &[&str]) -> PairSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = PairSample::default();
    let mut by_theme = assignment.clusters_by_theme(noise);
    for theme in Theme::ALL {
        let clusters = by_theme.remove(&theme).unwrap_or_default();
        let mut offsets = Vec::with_capacity(clusters.len());
        let mut total = 0usize;
        for c in &clusters {
            offsets.push(total);
            total += choose2(c.len());
        }
        let take = n_per_theme.min(total);
        if take < n_per_theme {
            tracing::warn!(theme = theme.as_str(), requested = n_per_theme, available = total, "not enough within-cluster pairs");
            out.shortfall.insert(theme, n_per_theme - take);
        }
        if take == 0 {
            continue;
        }
        let picks = index::sample(&mut rng, total, take);
        let pairs = picks
            .iter()
            .map(|g| {
                let ci = offsets.partition_point(|&o| o <= g) - 1;
                let members = &clusters[ci];
                let (i, j) = unrank_pair(members.len(), g - offsets[ci]);
                TextPair {
                    first: members[i].text_id.clone(),
                    second: members[j].text_id.clone(),
                    cluster: members[i].cluster.clone(),
                }
            })
            .collect();
        out.pairs.insert(theme, pairs);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    A,
    B,
    #[serde(rename = "TIE")]
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub a: u64,
    pub b: u64,
    pub tie: u64,
}

impl VerdictCounts {
    pub fn add(&mut self, v: Verdict) {
        match v {
            Verdict::A => self.a += 1,
            Verdict::B => self.b += 1,
            Verdict::Tie => self.tie += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.tie
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JudgeTally {
    pub per_theme: BTreeMap<Theme, VerdictCounts>,
}

impl JudgeTally {
    pub fn record(&mut self, theme: Theme, v: Verdict) {
        self.per_theme.entry(theme).or_default().add(v);
    }

    pub fn total(&self) -> VerdictCounts {
        self.per_theme.values().fold(VerdictCounts::default(), |acc, c| VerdictCounts {
            a: acc.a + c.a,
            b: acc.b + c.b,
            tie: acc.tie + c.tie,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub counts: VerdictCounts,
    /// (A, B, TIE) against uniform thirds.
    pub chi_square: ChiSquareResult,
    /// A out of A + B against 1/2; absent when A + B = 0.
    pub binomial: Option<BinomialResult>,
}

pub fn significance_tests(counts: VerdictCounts, alternative: Alternative) -> Result<SignificanceReport> {
    if counts.total() == 0 {
        return Err(CoreError::InvalidArgument("empty tally".into()));
    }
    let chi_square = chi_square_uniform(&[counts.a, counts.b, counts.tie])?;
    let decisive = counts.a + counts.b;
    let binomial = if decisive == 0 { None } else { Some(binomial_test(counts.a, decisive, 0.5, alternative)?) };
    Ok(SignificanceReport { counts, chi_square, binomial })
}
