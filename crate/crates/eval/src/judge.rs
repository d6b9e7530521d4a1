use std::collections::{BTreeMap, HashMap};

use clarify_core::clusters::{
    significance_tests, ClusterAssignment, JudgeTally, PairSample, SignificanceReport, TextPair, Verdict,
};
use clarify_core::model::Theme;
use clarify_core::stats::Alternative;
use clarify_core::CoreError;
use clarify_gateway::{parse_verdict, ChatBackend, GatewayError, Message, PromptLibrary, Stage, DEFAULT_LANGUAGE};
use futures::stream::{self, StreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("text {0} not found in either assignment or the surface texts")]
    UnknownText(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// One comparison: a same-cluster pair from each clustering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeItem {
    pub theme: Theme,
    pub index: usize,
    pub pair_a: TextPair,
    pub pair_b: TextPair,
    pub texts_a: [String; 2],
    pub texts_b: [String; 2],
}

fn display_text(
    id: &str,
    assignments: [&ClusterAssignment; 2],
    surface: &HashMap<String, String>,
) -> Result<String> {
    let lookup = |id: &str| -> Option<String> {
        assignments.iter().find_map(|a| a.get(id).map(|e| e.text.clone())).or_else(|| surface.get(id).cloned())
    };
    let entry = assignments.iter().find_map(|a| a.get(id)).ok_or_else(|| EvalError::UnknownText(id.into()))?;
    match &entry.surface_text_id {
        Some(s) => lookup(s).ok_or_else(|| EvalError::UnknownText(s.clone())),
        None => Ok(entry.text.clone()),
    }
}

/// Zips the two samples theme by theme; a theme contributes as many items as
/// its shorter sample. Texts with a `surface_text_id` are shown through that
/// id, looked up in both assignments and then in `surface`.
pub fn build_items(
    sample_a: &PairSample,
    assignment_a: &ClusterAssignment,
    sample_b: &PairSample,
    assignment_b: &ClusterAssignment,
    surface: &HashMap<String, String>,
) -> Result<Vec<JudgeItem>> {
    let mut out = Vec::new();
    for theme in Theme::ALL {
        let (Some(pa), Some(pb)) = (sample_a.pairs.get(&theme), sample_b.pairs.get(&theme)) else { continue };
        for (index, (a, b)) in pa.iter().zip(pb).enumerate() {
            let ta = |id: &str| display_text(id, [assignment_a, assignment_b], surface);
            let tb = |id: &str| display_text(id, [assignment_b, assignment_a], surface);
            out.push(JudgeItem {
                theme,
                index,
                texts_a: [ta(&a.first)?, ta(&a.second)?],
                texts_b: [tb(&b.first)?, tb(&b.second)?],
                pair_a: a.clone(),
                pair_b: b.clone(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub language: String,
    pub one_shot: bool,
    /// Show the two clusterings in random order per item.
    pub randomize_sides: bool,
    /// Seeds the side permutation.
    pub seed: u64,
    pub parallelism: usize,
    pub alternative: Alternative,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            language: DEFAULT_LANGUAGE.into(),
            one_shot: false,
            randomize_sides: true,
            seed: 0,
            parallelism: 4,
            alternative: Alternative::TwoSided,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Judged,
    /// Unparseable twice; counted as a tie.
    FlaggedTie,
    /// Backend failed; excluded from the tally.
    Unjudged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub theme: Theme,
    pub index: usize,
    /// Clustering A was shown in position B.
    pub swapped: bool,
    pub outcome: Outcome,
    /// Preference in clustering terms (A = first clustering).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub raw: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tests {
    pub total: Option<SignificanceReport>,
    pub per_theme: BTreeMap<Theme, SignificanceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeReport {
    pub tally: JudgeTally,
    pub judged: u64,
    pub flagged: u64,
    pub unjudged: u64,
    pub tests: Tests,
    pub items: Vec<ItemResult>,
}

fn format_group(texts: &[String; 2], language: &str) -> String {
    texts
        .iter()
        .map(|t| if language == "fr" { format!("- « {} »", t.trim()) } else { format!("- \"{}\"", t.trim()) })
        .collect::<Vec<_>>()
        .join("\n")
}

fn swap(v: Verdict) -> Verdict {
    match v {
        Verdict::A => Verdict::B,
        Verdict::B => Verdict::A,
        Verdict::Tie => Verdict::Tie,
    }
}

async fn judge_one(item: &JudgeItem, swapped: bool, backend: &dyn ChatBackend, cfg: &JudgeConfig) -> Result<ItemResult> {
    let library = PromptLibrary::builtin();
    let (shown_a, shown_b) = if swapped { (&item.texts_b, &item.texts_a) } else { (&item.texts_a, &item.texts_b) };
    let vars: BTreeMap<String, String> = [
        ("group_a".to_string(), format_group(shown_a, &cfg.language)),
        ("group_b".to_string(), format_group(shown_b, &cfg.language)),
    ]
    .into();
    let mut messages = library.render(Stage::ClusterJudge, &cfg.language, None, &vars, cfg.one_shot)?;
    let reminder = library.format_reminder(Stage::ClusterJudge, &cfg.language)?;
    let mut result = ItemResult {
        theme: item.theme,
        index: item.index,
        swapped,
        outcome: Outcome::Judged,
        verdict: None,
        raw: Vec::new(),
        error: None,
    };
    for attempt in 0..2 {
        let text = match backend.complete(&messages).await {
            Ok(c) => c.text,
            Err(e) => {
                result.outcome = Outcome::Unjudged;
                result.error = Some(e.to_string());
                return Ok(result);
            }
        };
        if let Ok(v) = parse_verdict(&text) {
            result.verdict = Some(if swapped { swap(v) } else { v });
            return Ok(result);
        }
        result.raw.push(text.clone());
        if attempt == 0 {
            messages.push(Message::assistant(text));
            messages.push(Message::user(reminder));
        }
    }
    result.outcome = Outcome::FlaggedTie;
    result.verdict = Some(Verdict::Tie);
    Ok(result)
}

/// Judges every item with sides drawn from one seeded stream in item order.
pub async fn judge_pairs(items: &[JudgeItem], backend: &dyn ChatBackend, cfg: &JudgeConfig) -> Result<JudgeReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sides: Vec<bool> = items.iter().map(|_| cfg.randomize_sides && rng.gen_bool(0.5)).collect();
    let mut results: Vec<ItemResult> = stream::iter(items.iter().zip(sides))
        .map(|(item, swapped)| judge_one(item, swapped, backend, cfg))
        .buffer_unordered(cfg.parallelism.max(1))
        .collect::<Vec<_>>()
        .await
        .into_iter()
        .collect::<Result<_>>()?;
    results.sort_by_key(|r| (r.theme, r.index));

    let mut tally = JudgeTally::default();
    let (mut judged, mut flagged, mut unjudged) = (0, 0, 0);
    for r in &results {
        match r.outcome {
            Outcome::Unjudged => unjudged += 1,
            o => {
                judged += 1;
                flagged += u64::from(o == Outcome::FlaggedTie);
                tally.record(r.theme, r.verdict.expect("judged items carry a verdict"));
            }
        }
    }
    let total = tally.total();
    let tests = Tests {
        total: if total.total() > 0 { Some(significance_tests(total, cfg.alternative)?) } else { None },
        per_theme: tally
            .per_theme
            .iter()
            .filter(|(_, c)| c.total() > 0)
            .map(|(t, c)| Ok((*t, significance_tests(*c, cfg.alternative)?)))
            .collect::<Result<_>>()?,
    };
    Ok(JudgeReport { tally, judged, flagged, unjudged, tests, items: results })
}
