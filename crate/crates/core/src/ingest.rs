//! Corpus preparation: deduplication, length filtering, sentence counting and
//! stratified sampling over (theme, sentence-count bin) cells.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Read};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::model::{Contribution, Theme};

/// Single-period abbreviations that do not end a sentence. Matched
/// case-insensitively on the word preceding the period. Single letters
/// (initials) are also treated as abbreviations.
const ABBREVIATIONS: &[&str] = &[
    "m", "mm", "mme", "mmes", "mlle", "mlles", "dr", "pr", "me", "st", "ste", "cf", "ex", "p",
    "pp", "art", "av", "bd", "fig", "n", "no", "vol", "env", "hab", "resp", "cie", "jr", "sr",
    "vs", "éd", "chap", "coll", "dept", "dép", "min", "max", "approx",
];

const TERMINALS: &[char] = &['.', '!', '?', '…'];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub min_chars: usize,
    pub max_chars: usize,
    /// Lower edges of the sentence-count bins; the last bin is open-ended.
    pub length_bins: Vec<usize>,
    pub sample_size: Option<usize>,
    pub seed: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            min_chars: 30,
            max_chars: 600,
            length_bins: vec![1, 2, 3, 4, 5],
            sample_size: None,
            seed: 0,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_chars == 0 || self.min_chars >= self.max_chars {
            return Err(CoreError::Config(format!(
                "need 0 < min_chars < max_chars, got {} and {}",
                self.min_chars, self.max_chars
            )));
        }
        if self.length_bins.is_empty() || self.length_bins.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoreError::Config(
                "length bin edges must be non-empty and strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn bin_of(&self, sentence_count: usize) -> usize {
        self.length_bins
            .iter()
            .rposition(|&edge| edge <= sentence_count)
            .unwrap_or(0)
    }

    pub fn bin_label(&self, bin: usize) -> String {
        match self.length_bins.get(bin + 1) {
            Some(next) if *next == self.length_bins[bin] + 1 => self.length_bins[bin].to_string(),
            Some(next) => format!("{}-{}", self.length_bins[bin], next - 1),
            None => format!(">={}", self.length_bins[bin]),
        }
    }
}

/// A contribution as found in a raw export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawContribution {
    #[serde(default)]
    pub id: Option<String>,
    pub theme: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinCount {
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub input: usize,
    pub kept: usize,
    pub deduplicated: usize,
    pub filtered: usize,
    pub filtered_short: usize,
    pub filtered_long: usize,
    pub per_theme: BTreeMap<Theme, usize>,
    pub length_histogram: Vec<BinCount>,
}

impl CorpusSummary {
    pub fn is_consistent(&self) -> bool {
        self.input == self.kept + self.deduplicated + self.filtered
            && self.filtered == self.filtered_short + self.filtered_long
            && self.per_theme.values().sum::<usize>() == self.kept
            && self.length_histogram.iter().map(|b| b.count).sum::<usize>() == self.kept
    }
}

/// Counts sentences with a deterministic rule: a sentence ends at a maximal
/// run of `. ! ? …` followed by whitespace or the end of the text, unless the
/// run is a single period closing a known abbreviation or an initial.
/// Pieces without any alphanumeric character are not counted; non-empty text
/// always has at least one sentence.
pub fn count_sentences(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    if chars.iter().all(|c| c.is_whitespace()) {
        return 0;
    }
    let mut count = 0;
    let mut piece_has_word = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if TERMINALS.contains(&c) {
            let run_start = i;
            while i < chars.len() && TERMINALS.contains(&chars[i]) {
                i += 1;
            }
            let at_boundary = i == chars.len() || chars[i].is_whitespace();
            let single_period = i - run_start == 1 && chars[run_start] == '.';
            if at_boundary && !(single_period && is_abbreviation(&chars[..run_start])) {
                if piece_has_word {
                    count += 1;
                }
                piece_has_word = false;
            }
            continue;
        }
        if c.is_alphanumeric() {
            piece_has_word = true;
        }
        i += 1;
    }
    if piece_has_word {
        count += 1;
    }
    count.max(1)
}

fn is_abbreviation(before: &[char]) -> bool {
    let word: String = before
        .iter()
        .rev()
        .take_while(|c| c.is_alphabetic())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    if word.is_empty() {
        return false;
    }
    let preceded_ok = before
        .len()
        .checked_sub(word.chars().count() + 1)
        .map(|i| !before[i].is_alphanumeric())
        .unwrap_or(true);
    if !preceded_ok {
        return false;
    }
    if word.chars().count() == 1 {
        return true;
    }
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

/// Identifier derived from the text when the export carries none.
pub fn derived_id(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    format!("c{}", &hex::encode(digest)[..12])
}

/// Applies deduplication (exact match after trimming), the length filter and
/// sentence counting. Output is sorted by contribution id.
pub fn prepare_corpus<I>(raw: I, cfg: &IngestConfig) -> Result<(Vec<Contribution>, CorpusSummary)>
where
    I: IntoIterator<Item = Result<RawContribution>>,
{
    cfg.validate()?;
    let mut seen_texts: HashSet<String> = HashSet::new();
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut kept = Vec::new();
    let mut summary = CorpusSummary {
        input: 0,
        kept: 0,
        deduplicated: 0,
        filtered: 0,
        filtered_short: 0,
        filtered_long: 0,
        per_theme: Theme::ALL.iter().map(|t| (*t, 0)).collect(),
        length_histogram: (0..cfg.length_bins.len())
            .map(|b| BinCount {
                label: cfg.bin_label(b),
                count: 0,
            })
            .collect(),
    };

    for (i, item) in raw.into_iter().enumerate() {
        let line = i + 1;
        let item = item?;
        summary.input += 1;
        let theme: Theme = item.theme.parse().map_err(|e: CoreError| CoreError::Input {
            line,
            message: e.to_string(),
        })?;
        let text = item.text.trim().to_string();
        if !seen_texts.insert(text.clone()) {
            summary.deduplicated += 1;
            continue;
        }
        let len = text.chars().count();
        if len < cfg.min_chars {
            summary.filtered_short += 1;
            continue;
        }
        if len > cfg.max_chars {
            summary.filtered_long += 1;
            continue;
        }
        let id = item
            .id
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| derived_id(&text));
        if let Some(prev) = ids.insert(id.clone(), line) {
            return Err(CoreError::Input {
                line,
                message: format!("duplicate id {id:?} (first seen on line {prev})"),
            });
        }
        let c = Contribution::new(id, theme, text);
        *summary.per_theme.entry(theme).or_default() += 1;
        summary.length_histogram[cfg.bin_of(c.sentence_count)].count += 1;
        kept.push(c);
    }
    summary.filtered = summary.filtered_short + summary.filtered_long;
    summary.kept = kept.len();
    kept.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((kept, summary))
}

/// Reads raw contributions from JSON lines with fields `id`, `theme`, `text`.
pub fn read_raw_jsonl(reader: impl BufRead) -> impl Iterator<Item = Result<RawContribution>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Err(e) => Some(Err(CoreError::Input {
                line: i + 1,
                message: e.to_string(),
            })),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(serde_json::from_str(&l).map_err(|e| CoreError::Input {
                line: i + 1,
                message: e.to_string(),
            })),
        })
}

/// Reads raw contributions from CSV with a header row naming `id`, `theme`
/// and `text` (the `id` column is optional).
pub fn read_raw_csv(reader: impl Read) -> impl Iterator<Item = Result<RawContribution>> {
    csv::Reader::from_reader(reader)
        .into_deserialize::<RawContribution>()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| CoreError::Input {
                // header is line 1
                line: e.position().map(|p| p.line() as usize).unwrap_or(i + 2),
                message: e.to_string(),
            })
        })
}

/// Draws a sample balanced across (theme, length-bin) cells.
///
/// Cell quotas differ by at most one between cells that still have
/// unsampled members; cells smaller than their fair share are taken whole.
/// Without a sample size the whole corpus is returned in shuffled order.
pub fn stratified_sample(corpus: &[Contribution], cfg: &IngestConfig) -> Result<Vec<Contribution>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let Some(n) = cfg.sample_size else {
        let mut all: Vec<Contribution> = corpus.to_vec();
        all.sort_by(|a, b| a.id.cmp(&b.id));
        all.shuffle(&mut rng);
        return Ok(all);
    };
    if n > corpus.len() {
        return Err(CoreError::InvalidArgument(format!(
            "sample size {n} exceeds corpus size {}",
            corpus.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    let mut cells: BTreeMap<(Theme, usize), Vec<&Contribution>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for c in corpus {
        if seen.insert(c.id.as_str()) {
            cells.entry((c.theme, cfg.bin_of(c.sentence_count))).or_default().push(c);
        }
    }
    if seen.len() < n {
        return Err(CoreError::InvalidArgument(format!(
            "sample size {n} exceeds the {} distinct contributions",
            seen.len()
        )));
    }
    for theme in Theme::ALL {
        for bin in 0..cfg.length_bins.len() {
            if !cells.contains_key(&(theme, bin)) {
                tracing::warn!(%theme, bin = %cfg.bin_label(bin), "empty sampling cell skipped");
            }
        }
    }
    for members in cells.values_mut() {
        members.sort_by(|a, b| a.id.cmp(&b.id));
    }

    let keys: Vec<(Theme, usize)> = cells.keys().copied().collect();
    let caps: Vec<usize> = keys.iter().map(|k| cells[k].len()).collect();
    let mut quotas = vec![0usize; keys.len()];
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.shuffle(&mut rng);
    let mut remaining = n;
    while remaining > 0 {
        let active: Vec<usize> = order.iter().copied().filter(|&i| quotas[i] < caps[i]).collect();
        let share = remaining / active.len();
        if share == 0 {
            for &i in active.iter().take(remaining) {
                quotas[i] += 1;
            }
            break;
        }
        for &i in &active {
            let add = share.min(caps[i] - quotas[i]);
            quotas[i] += add;
            remaining -= add;
        }
    }

    let mut out = Vec::with_capacity(n);
    for (i, key) in keys.iter().enumerate() {
        let mut members = cells[key].clone();
        members.shuffle(&mut rng);
        out.extend(members.into_iter().take(quotas[i]).cloned());
    }
    out.shuffle(&mut rng);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(theme: &str, text: &str) -> Result<RawContribution> {
        Ok(RawContribution {
            id: None,
            theme: theme.into(),
            text: text.into(),
        })
    }

    #[test]
    fn sentence_counting() {
        assert_eq!(count_sentences("Bonjour. Merci! Vraiment?"), 3);
        assert_eq!(count_sentences("Merci ! Vraiment ?"), 2);
        assert_eq!(count_sentences("Pas de ponctuation"), 1);
        assert_eq!(count_sentences("Attendez... Quoi?!"), 2);
        assert_eq!(count_sentences("M. Dupont est venu. Mme. Durand aussi."), 2);
        assert_eq!(count_sentences("Le taux est de 3.5 pour cent."), 1);
        assert_eq!(count_sentences("J. Martin a raison."), 1);
        assert_eq!(count_sentences("Fin… Suite"), 2);
        assert_eq!(count_sentences(""), 0);
        assert_eq!(count_sentences("..."), 1);
    }

    #[test]
    fn short_texts_are_filtered() {
        let cfg = IngestConfig::default();
        let (out, s) = prepare_corpus(vec![raw("taxation", "trop court")], &cfg).unwrap();
        assert!(out.is_empty());
        assert_eq!((s.filtered, s.filtered_short), (1, 1));
        assert!(s.is_consistent());
    }

    #[test]
    fn duplicates_are_removed_after_trim() {
        let cfg = IngestConfig::default();
        let t = "Il faut taxer le kérosène des avions, c'est injuste.";
        let (out, s) = prepare_corpus(
            vec![raw("ecology", t), raw("ecology", &format!("  {t}\n"))],
            &cfg,
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(s.deduplicated, 1);
        assert!(s.is_consistent());
    }

    #[test]
    fn long_texts_are_filtered_and_bad_theme_reports_line() {
        let cfg = IngestConfig::default();
        let long = "a".repeat(601);
        let (_, s) = prepare_corpus(vec![raw("democracy", &long)], &cfg).unwrap();
        assert_eq!(s.filtered_long, 1);
        let err = prepare_corpus(
            vec![raw("democracy", &"b".repeat(40)), raw("sport", &"c".repeat(40))],
            &cfg,
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::Input { line: 2, .. }), "{err}");
    }

    #[test]
    fn bins() {
        let cfg = IngestConfig::default();
        assert_eq!(cfg.bin_of(1), 0);
        assert_eq!(cfg.bin_of(4), 3);
        assert_eq!(cfg.bin_of(9), 4);
        assert_eq!(cfg.bin_label(4), ">=5");
        assert_eq!(cfg.bin_label(0), "1");
    }

    fn corpus_cells() -> Vec<Contribution> {
        let mut v = Vec::new();
        for (ti, theme) in Theme::ALL.iter().enumerate() {
            v.push(Contribution::new(format!("t{ti}a"), *theme, "Une seule phrase assez longue ici"));
            v.push(Contribution::new(
                format!("t{ti}b"),
                *theme,
                "Première phrase. Deuxième phrase ici.",
            ));
        }
        v
    }

    #[test]
    fn exact_divisibility_gives_one_per_cell() {
        let corpus = corpus_cells();
        let cfg = IngestConfig {
            length_bins: vec![1, 2],
            sample_size: Some(8),
            ..IngestConfig::default()
        };
        let s = stratified_sample(&corpus, &cfg).unwrap();
        assert_eq!(s.len(), 8);
        let ids: HashSet<_> = s.iter().map(|c| c.id.clone()).collect();
        assert_eq!(ids.len(), 8);
    }

    #[test]
    fn zero_sample_and_oversized_sample() {
        let corpus = corpus_cells();
        let mut cfg = IngestConfig {
            sample_size: Some(0),
            ..IngestConfig::default()
        };
        assert!(stratified_sample(&corpus, &cfg).unwrap().is_empty());
        cfg.sample_size = Some(100);
        assert!(stratified_sample(&corpus, &cfg).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let corpus = corpus_cells();
        let cfg = IngestConfig {
            sample_size: Some(5),
            seed: 42,
            ..IngestConfig::default()
        };
        let a = stratified_sample(&corpus, &cfg).unwrap();
        let b = stratified_sample(&corpus, &cfg).unwrap();
        assert_eq!(a, b);
        let c = stratified_sample(&corpus, &IngestConfig { sample_size: None, ..cfg }).unwrap();
        assert_eq!(c.len(), corpus.len());
    }
}
