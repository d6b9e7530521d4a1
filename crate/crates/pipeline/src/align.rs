//! Locating extractive model outputs in their source text.

use clarify_core::model::CharSpan;
use clarify_core::textmetrics::levenshtein;
use serde::{Deserialize, Serialize};

/// Minimum normalized character similarity of every matched segment for a
/// non-exact alignment to be kept.
pub const FUZZY_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignStatus {
    Exact,
    FuzzyFlagged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub spans: Vec<CharSpan>,
    /// Share of the generated characters found in the source.
    pub coverage: f64,
    pub status: AlignStatus,
    /// Lowest segment similarity; 1 for exact alignments, 0 when nothing matched.
    pub similarity: f64,
}

impl AlignmentResult {
    fn failed(coverage: f64, similarity: f64) -> Self {
        AlignmentResult { spans: Vec::new(), coverage, status: AlignStatus::Failed, similarity }
    }

    pub fn is_usable(&self) -> bool {
        self.status != AlignStatus::Failed
    }
}

/// Aligns `generated` against the whole of `source`.
pub fn align_extractive(source: &str, generated: &str) -> AlignmentResult {
    let chars: Vec<char> = source.chars().collect();
    let view: Vec<usize> = (0..chars.len()).collect();
    align_in_view(&chars, &view, generated)
}

/// Aligns `generated` against the text covered by `spans` only, as when
/// typed segments are located inside an argumentative unit.
pub fn align_within(source: &str, spans: &[CharSpan], generated: &str) -> AlignmentResult {
    let chars: Vec<char> = source.chars().collect();
    let view: Vec<usize> = spans.iter().flat_map(|s| s.start..s.end.min(chars.len())).collect();
    align_in_view(&chars, &view, generated)
}

/// Whitespace-collapsed (and optionally case- and punctuation-folded) text
/// with the source index of every character.
struct Normalized {
    text: String,
    /// Source index per char of `text`.
    map: Vec<usize>,
    /// Char index per byte offset of `text`, valid at char boundaries.
    byte_to_char: Vec<usize>,
}

impl Normalized {
    fn new(source: &[char], view: &[usize], fold: bool) -> Self {
        let mut text = String::new();
        let mut map = Vec::new();
        let mut pending: Option<usize> = None;
        let mut prev: Option<usize> = None;
        for &idx in view {
            let ch = source[idx];
            if prev.is_some_and(|p| idx != p + 1) && !map.is_empty() && pending.is_none() {
                pending = Some(idx);
            }
            prev = Some(idx);
            let separator = ch.is_whitespace() || (fold && !ch.is_alphanumeric());
            if separator {
                if !map.is_empty() && pending.is_none() {
                    pending = Some(idx);
                }
                continue;
            }
            if let Some(sp) = pending.take() {
                text.push(' ');
                map.push(sp);
            }
            if fold {
                for lc in ch.to_lowercase() {
                    text.push(lc);
                    map.push(idx);
                }
            } else {
                text.push(ch);
                map.push(idx);
            }
        }
        let mut byte_to_char = vec![0; text.len() + 1];
        for (ci, (bi, _)) in text.char_indices().enumerate() {
            byte_to_char[bi] = ci;
        }
        byte_to_char[text.len()] = map.len();
        Normalized { text, map, byte_to_char }
    }

    /// Byte ranges of the space-separated words.
    fn words(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, b) in self.text.bytes().enumerate() {
            if b == b' ' {
                out.push((start, i));
                start = i + 1;
            }
        }
        if start < self.text.len() {
            out.push((start, self.text.len()));
        }
        out
    }
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(char::is_alphanumeric)
}

/// First occurrence of `needle` at or after byte `from`, preferring
/// occurrences that do not cut through a word.
fn find_from(hay: &str, needle: &str, from: usize) -> Option<usize> {
    let first = hay[from..].find(needle)? + from;
    let mut pos = first;
    loop {
        let before = hay[..pos].chars().next_back();
        let after = hay[pos + needle.len()..].chars().next();
        let head_ok = !is_word_char(needle.chars().next()) || !is_word_char(before);
        let tail_ok = !is_word_char(needle.chars().next_back()) || !is_word_char(after);
        if head_ok && tail_ok {
            return Some(pos);
        }
        let step = hay[pos..].chars().next().map_or(1, char::len_utf8);
        match hay[pos + step..].find(needle) {
            Some(off) => pos = pos + step + off,
            None => return Some(first),
        }
    }
}

/// A run of generated words found verbatim in the source.
struct Piece {
    words: (usize, usize),
    src: (usize, usize),
}

/// Greedy left-to-right longest-prefix matching. Returns the pieces and the
/// indices of words that could not be placed.
fn greedy(src: &Normalized, gen: &Normalized) -> (Vec<Piece>, Vec<usize>) {
    let words = gen.words();
    let mut pieces = Vec::new();
    let mut unmatched = Vec::new();
    let mut p = 0;
    let mut i = 0;
    while i < words.len() {
        let mut best: Option<(usize, usize)> = None;
        let mut j = i + 1;
        while j <= words.len() {
            let needle = &gen.text[words[i].0..words[j - 1].1];
            match find_from(&src.text, needle, p) {
                Some(at) => {
                    best = Some((j, at));
                    j += 1;
                }
                None => break,
            }
        }
        match best {
            Some((j, at)) => {
                let len = words[j - 1].1 - words[i].0;
                pieces.push(Piece { words: (i, j), src: (at, at + len) });
                p = at + len;
                i = j;
            }
            None => {
                unmatched.push(i);
                i += 1;
            }
        }
    }
    (pieces, unmatched)
}

/// Source spans covered by a byte range of the normalized source, split
/// wherever the underlying source skips non-whitespace material.
fn source_spans(chars: &[char], src: &Normalized, range: (usize, usize), out: &mut Vec<CharSpan>) {
    let (a, b) = (src.byte_to_char[range.0], src.byte_to_char[range.1]);
    let mut current: Option<(usize, usize)> = None;
    for (k, ch) in src.text.chars().enumerate().take(b).skip(a) {
        if ch == ' ' {
            continue;
        }
        let idx = src.map[k];
        current = match current {
            Some((s, e)) if idx < e => Some((s, e)),
            Some((s, e)) if chars[e..idx].iter().all(|c| c.is_whitespace()) => Some((s, idx + 1)),
            Some((s, e)) => {
                out.push(CharSpan::new(s, e));
                Some((idx, idx + 1))
            }
            None => Some((idx, idx + 1)),
        };
    }
    if let Some((s, e)) = current {
        out.push(CharSpan::new(s, e));
    }
}

/// Sorts and joins spans separated only by whitespace.
fn tidy(chars: &[char], mut spans: Vec<CharSpan>) -> Vec<CharSpan> {
    spans.sort();
    let mut out: Vec<CharSpan> = Vec::with_capacity(spans.len());
    for s in spans {
        if let Some(last) = out.last_mut() {
            if s.start <= last.end || chars[last.end..s.start].iter().all(|c| c.is_whitespace()) {
                last.end = last.end.max(s.end);
                continue;
            }
        }
        out.push(s);
    }
    out
}

/// Byte offset `n` words before `at` in space-separated `text`.
fn extend_back(text: &str, at: usize, n: usize) -> usize {
    let mut pos = at;
    for _ in 0..n {
        let head = text[..pos].trim_end_matches(' ');
        if head.is_empty() {
            break;
        }
        pos = head.rfind(' ').map_or(0, |i| i + 1);
    }
    pos
}

/// Byte offset `n` words after `at` in space-separated `text`.
fn extend_forward(text: &str, at: usize, n: usize) -> usize {
    let mut pos = at;
    for _ in 0..n {
        let rest = &text[pos..];
        let skipped = rest.len() - rest.trim_start_matches(' ').len();
        if skipped == rest.len() {
            break;
        }
        let start = pos + skipped;
        pos = text[start..].find(' ').map_or(text.len(), |i| start + i);
    }
    pos
}

fn collapse_ws(chars: impl Iterator<Item = char>) -> String {
    let s: String = chars.collect();
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// One minus the Levenshtein distance over the longer length, in characters.
pub fn similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

fn align_in_view(chars: &[char], view: &[usize], generated: &str) -> AlignmentResult {
    let gen_chars: Vec<char> = generated.chars().collect();
    let gen_view: Vec<usize> = (0..gen_chars.len()).collect();

    let src = Normalized::new(chars, view, false);
    let gen = Normalized::new(&gen_chars, &gen_view, false);
    if gen.text.is_empty() {
        return AlignmentResult::failed(0.0, 0.0);
    }
    let (pieces, unmatched) = greedy(&src, &gen);
    if unmatched.is_empty() {
        let mut spans = Vec::new();
        for p in &pieces {
            source_spans(chars, &src, p.src, &mut spans);
        }
        return AlignmentResult { spans: tidy(chars, spans), coverage: 1.0, status: AlignStatus::Exact, similarity: 1.0 };
    }

    let src = Normalized::new(chars, view, true);
    let gen = Normalized::new(&gen_chars, &gen_view, true);
    let words = gen.words();
    if words.is_empty() {
        return AlignmentResult::failed(0.0, 0.0);
    }
    let (pieces, unmatched) = greedy(&src, &gen);
    let word_chars = |w: &(usize, usize)| gen.text[w.0..w.1].chars().count();
    let total: usize = words.iter().map(word_chars).sum();
    let missed: usize = unmatched.iter().map(|&i| word_chars(&words[i])).sum();
    let coverage = 1.0 - missed as f64 / total as f64;
    if pieces.is_empty() {
        return AlignmentResult::failed(coverage, 0.0);
    }

    // Pieces separated by unplaced words form one segment; leading and
    // trailing unplaced words belong to the nearest segment.
    let mut groups: Vec<(usize, usize)> = vec![(0, 0)];
    for k in 1..pieces.len() {
        if pieces[k].words.0 > pieces[k - 1].words.1 {
            groups.last_mut().expect("non-empty").1 = k;
        } else {
            groups.push((k, k));
        }
    }
    let mut spans = Vec::new();
    let mut min_sim = 1.0f64;
    let last_group = groups.len() - 1;
    for (g, &(first, last)) in groups.iter().enumerate() {
        let w_start = if g == 0 { 0 } else { pieces[first].words.0 };
        let w_end = if g == last_group { words.len() } else { pieces[last].words.1 };
        let gen_lo = gen.map[gen.byte_to_char[words[w_start].0]];
        let gen_hi = gen.map[gen.byte_to_char[words[w_end - 1].1] - 1] + 1;
        let lead = pieces[first].words.0 - w_start;
        let trail = w_end - pieces[last].words.1;
        let range = (extend_back(&src.text, pieces[first].src.0, lead), extend_forward(&src.text, pieces[last].src.1, trail));
        let mut seg_spans = Vec::new();
        source_spans(chars, &src, range, &mut seg_spans);
        let lo = seg_spans.first().expect("piece covers a character").start;
        let hi = seg_spans.last().expect("piece covers a character").end;
        let g_text = collapse_ws(gen_chars[gen_lo..gen_hi].iter().copied());
        let s_text = collapse_ws(view.iter().filter(|&&i| i >= lo && i < hi).map(|&i| chars[i]));
        min_sim = min_sim.min(similarity(&g_text, &s_text));
        spans.extend(seg_spans);
    }
    if min_sim < FUZZY_THRESHOLD {
        return AlignmentResult::failed(coverage, min_sim);
    }
    AlignmentResult { spans: tidy(chars, spans), coverage, status: AlignStatus::FuzzyFlagged, similarity: min_sim }
}
