//! Shared domain types for consultation contributions and their annotations.
//!
//! All character offsets are Unicode scalar-value indices into the
//! contribution text, never byte offsets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// The four consultation themes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theme {
    Taxation,
    Ecology,
    StateOrganization,
    Democracy,
}

impl Theme {
    pub const ALL: [Theme; 4] = [
        Theme::Taxation,
        Theme::Ecology,
        Theme::StateOrganization,
        Theme::Democracy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Theme::Taxation => "taxation",
            Theme::Ecology => "ecology",
            Theme::StateOrganization => "state_organization",
            Theme::Democracy => "democracy",
        }
    }

    /// Human readable label, used when a theme is substituted into prompts.
    pub fn label(self, language: &str) -> &'static str {
        match (self, language) {
            (Theme::Taxation, "fr") => "la fiscalité et les dépenses publiques",
            (Theme::Ecology, "fr") => "la transition écologique",
            (Theme::StateOrganization, "fr") => "l'organisation de l'État et des services publics",
            (Theme::Democracy, "fr") => "la démocratie et la citoyenneté",
            (Theme::Taxation, _) => "taxation and public spending",
            (Theme::Ecology, _) => "ecological transition",
            (Theme::StateOrganization, _) => "organization of the state and public services",
            (Theme::Democracy, _) => "democracy and citizenship",
        }
    }
}

impl fmt::Display for Theme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Theme {
    type Err = CoreError;

    /// Accepts the canonical names as well as the export names used by the
    /// open-data dumps of the consultation platform.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .map(|c| match c {
                'é' | 'è' | 'É' | 'È' => 'e',
                '-' | ' ' | '\'' => '_',
                c => c.to_ascii_lowercase(),
            })
            .collect();
        let theme = match norm.as_str() {
            "taxation" | "fiscalite" | "la_fiscalite_et_les_depenses_publiques" | "tax" => {
                Theme::Taxation
            }
            "ecology" | "ecologie" | "la_transition_ecologique" | "transition_ecologique" | "eco" => {
                Theme::Ecology
            }
            "state_organization" | "organisation_de_letat_et_des_services_publics"
            | "organisation_de_l_etat_et_des_services_publics" | "organisation" | "org" => {
                Theme::StateOrganization
            }
            "democracy" | "democratie" | "democratie_et_citoyennete" | "dem" => Theme::Democracy,
            _ => return Err(CoreError::UnknownTheme(s.to_string())),
        };
        Ok(theme)
    }
}

/// One citizen text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contribution {
    pub id: String,
    pub theme: Theme,
    pub text: String,
    pub sentence_count: usize,
    pub char_length: usize,
}

impl Contribution {
    /// Builds a contribution, deriving `char_length` and `sentence_count`.
    pub fn new(id: impl Into<String>, theme: Theme, text: impl Into<String>) -> Self {
        let text = text.into();
        Contribution {
            id: id.into(),
            theme,
            sentence_count: crate::ingest::count_sentences(&text),
            char_length: text.chars().count(),
            text,
        }
    }

    /// Text covered by `span`. Out-of-range spans are clipped.
    pub fn slice(&self, span: CharSpan) -> String {
        char_slice(&self.text, span)
    }
}

/// Substring of `text` between two character offsets.
pub fn char_slice(text: &str, span: CharSpan) -> String {
    text.chars()
        .skip(span.start)
        .take(span.end.saturating_sub(span.start))
        .collect()
}

/// Half-open character range `[start, end)`, serialized as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        CharSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &CharSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl From<(usize, usize)> for CharSpan {
    fn from((start, end): (usize, usize)) -> Self {
        CharSpan { start, end }
    }
}

impl From<CharSpan> for (usize, usize) {
    fn from(s: CharSpan) -> Self {
        (s.start, s.end)
    }
}

impl fmt::Display for CharSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Merges spans into sorted, disjoint, non-adjacent intervals.
pub fn merge_spans(spans: &[CharSpan]) -> Vec<CharSpan> {
    let mut sorted: Vec<CharSpan> = spans.iter().copied().filter(|s| !s.is_empty()).collect();
    sorted.sort();
    let mut out: Vec<CharSpan> = Vec::with_capacity(sorted.len());
    for s in sorted {
        match out.last_mut() {
            Some(last) if s.start <= last.end => last.end = last.end.max(s.end),
            _ => out.push(s),
        }
    }
    out
}

/// Whether `inner` lies entirely within the union of `spans`.
pub fn covered_by(inner: &CharSpan, spans: &[CharSpan]) -> bool {
    merge_spans(spans).iter().any(|s| s.contains(inner))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentType {
    Statement,
    Solution,
    Premise,
}

impl SegmentType {
    pub const ALL: [SegmentType; 3] = [
        SegmentType::Statement,
        SegmentType::Solution,
        SegmentType::Premise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SegmentType::Statement => "statement",
            SegmentType::Solution => "solution",
            SegmentType::Premise => "premise",
        }
    }
}

impl fmt::Display for SegmentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSegment {
    pub span: CharSpan,
    pub kind: SegmentType,
}

impl LabeledSegment {
    pub fn new(start: usize, end: usize, kind: SegmentType) -> Self {
        LabeledSegment {
            span: CharSpan::new(start, end),
            kind,
        }
    }
}

/// A possibly non-contiguous group of spans addressing one topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentativeUnit {
    /// Identifier unique within its record; clarification events refer to it.
    pub id: String,
    pub spans: Vec<CharSpan>,
    pub segments: Vec<LabeledSegment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clarification: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_model: Option<String>,
}

impl ArgumentativeUnit {
    pub fn new(id: impl Into<String>, spans: Vec<CharSpan>, segments: Vec<LabeledSegment>) -> Self {
        ArgumentativeUnit {
            id: id.into(),
            spans,
            segments,
            clarification: None,
            source_model: None,
        }
    }

    /// Text of the unit: its spans joined by single spaces.
    pub fn text(&self, source: &str) -> String {
        self.spans
            .iter()
            .map(|s| char_slice(source, *s))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Texts of the segments of one kind, in document order.
    pub fn segment_texts(&self, source: &str, kind: SegmentType) -> Vec<String> {
        let mut segs: Vec<&LabeledSegment> =
            self.segments.iter().filter(|s| s.kind == kind).collect();
        segs.sort_by_key(|s| s.span);
        segs.iter().map(|s| char_slice(source, s.span)).collect()
    }
}

/// The four clarification error categories.
///
/// Declaration order is the reporting priority: when an edit carries several
/// labels, the first one in this order is reported as dominant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorLabel {
    OverAnalysis,
    Miscomprehension,
    OverSpecificity,
    Misformulation,
}

/// Highest-priority label of a set, if any.
pub fn dominant_error(labels: &BTreeSet<ErrorLabel>) -> Option<ErrorLabel> {
    labels.iter().next().copied()
}

/// One clarification attempt for one argumentative unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClarificationEvent {
    pub au_ref: String,
    pub backend: String,
    pub attempt_index: u32,
    pub accepted: bool,
    /// ROUGE-L F1 between the backend output and the final text; present iff accepted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_quality: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub error_labels: BTreeSet<ErrorLabel>,
    /// Text produced by the backend for this attempt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Final human-validated clarification (accepted attempts only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_text: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Phase1,
    Phase2,
    Automatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Completed,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NotUnderstandable,
    HateSpeech,
    TooLong,
    PersonalInfo,
}

/// One annotator's (or pipeline run's) annotation of one contribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub contribution_id: String,
    pub annotator_id: String,
    pub phase: Phase,
    pub units: Vec<ArgumentativeUnit>,
    #[serde(default)]
    pub events: Vec<ClarificationEvent>,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<SkipReason>,
}

impl AnnotationRecord {
    pub fn completed(
        contribution_id: impl Into<String>,
        annotator_id: impl Into<String>,
        phase: Phase,
        units: Vec<ArgumentativeUnit>,
    ) -> Self {
        AnnotationRecord {
            contribution_id: contribution_id.into(),
            annotator_id: annotator_id.into(),
            phase,
            units,
            events: Vec::new(),
            status: RecordStatus::Completed,
            skip_reason: None,
        }
    }

    pub fn skipped(
        contribution_id: impl Into<String>,
        annotator_id: impl Into<String>,
        phase: Phase,
        reason: SkipReason,
    ) -> Self {
        AnnotationRecord {
            contribution_id: contribution_id.into(),
            annotator_id: annotator_id.into(),
            phase,
            units: Vec::new(),
            events: Vec::new(),
            status: RecordStatus::Skipped,
            skip_reason: Some(reason),
        }
    }

    /// All labeled segments of the record.
    pub fn segments(&self) -> impl Iterator<Item = &LabeledSegment> {
        self.units.iter().flat_map(|u| u.segments.iter())
    }
}

/// A broken invariant, naming the offending element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    ContributionLength { declared: usize, actual: usize },
    SentenceCount { text_chars: usize },
    EmptySpan { unit: usize, span: CharSpan },
    SpanOutOfBounds { unit: usize, span: CharSpan, char_length: usize },
    UnitSpansUnsorted { unit: usize },
    UnitSpansOverlap { unit: usize, first: CharSpan, second: CharSpan },
    UnitWithoutSegments { unit: usize },
    EmptySegment { unit: usize, segment: usize },
    SegmentNotContained { unit: usize, segment: usize, span: CharSpan },
    SegmentsOverlap { unit: usize, first: usize, second: usize },
    UnitsOverlap { first: usize, second: usize },
    DuplicateUnitId { id: String },
    CompletedWithoutUnits,
    SkippedWithUnits { units: usize },
    SkippedWithoutReason,
    QualityPresence { event: usize, accepted: bool },
    QualityRange { event: usize, value: f64 },
    UnknownUnitRef { event: usize, au_ref: String },
    AttemptSequence { au_ref: String, detail: String },
}

impl Eq for Violation {}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            ContributionLength { declared, actual } => {
                write!(f, "char_length {declared} does not match text length {actual}")
            }
            SentenceCount { text_chars } => {
                write!(f, "sentence_count is 0 for non-empty text of {text_chars} chars")
            }
            EmptySpan { unit, span } => write!(f, "unit {unit}: empty span {span}"),
            SpanOutOfBounds { unit, span, char_length } => {
                write!(f, "unit {unit}: span {span} exceeds text length {char_length}")
            }
            UnitSpansUnsorted { unit } => write!(f, "unit {unit}: spans not sorted by start"),
            UnitSpansOverlap { unit, first, second } => {
                write!(f, "unit {unit}: spans {first} and {second} overlap")
            }
            UnitWithoutSegments { unit } => write!(f, "unit {unit}: no segment"),
            EmptySegment { unit, segment } => write!(f, "unit {unit}: segment {segment} is empty"),
            SegmentNotContained { unit, segment, span } => {
                write!(f, "unit {unit}: segment {segment} {span} not contained in the unit spans")
            }
            SegmentsOverlap { unit, first, second } => {
                write!(f, "unit {unit}: segments {first} and {second} overlap")
            }
            UnitsOverlap { first, second } => write!(f, "units {first} and {second} overlap"),
            DuplicateUnitId { id } => write!(f, "duplicate unit id {id:?}"),
            CompletedWithoutUnits => f.write_str("completed record has no unit"),
            SkippedWithUnits { units } => write!(f, "skipped record carries {units} units"),
            SkippedWithoutReason => f.write_str("skipped record has no skip_reason"),
            QualityPresence { event, accepted } => write!(
                f,
                "event {event}: observed_quality presence must match accepted={accepted}"
            ),
            QualityRange { event, value } => {
                write!(f, "event {event}: observed_quality {value} outside [0, 1]")
            }
            UnknownUnitRef { event, au_ref } => {
                write!(f, "event {event}: au_ref {au_ref:?} names no unit")
            }
            AttemptSequence { au_ref, detail } => write!(f, "events of {au_ref:?}: {detail}"),
        }
    }
}

/// Checks every structural invariant of `record` against `contribution`.
///
/// Returns an empty list iff the record is well formed. Errors only when the
/// record belongs to another contribution.
pub fn validate_record(
    record: &AnnotationRecord,
    contribution: &Contribution,
) -> Result<Vec<Violation>, CoreError> {
    if record.contribution_id != contribution.id {
        return Err(CoreError::ContributionMismatch {
            record: record.contribution_id.clone(),
            contribution: contribution.id.clone(),
        });
    }
    let mut out = Vec::new();

    let actual = contribution.text.chars().count();
    if contribution.char_length != actual {
        out.push(Violation::ContributionLength {
            declared: contribution.char_length,
            actual,
        });
    }
    if actual > 0 && contribution.sentence_count == 0 {
        out.push(Violation::SentenceCount { text_chars: actual });
    }

    match record.status {
        RecordStatus::Completed => {
            if record.units.is_empty() {
                out.push(Violation::CompletedWithoutUnits);
            }
        }
        RecordStatus::Skipped => {
            if !record.units.is_empty() {
                out.push(Violation::SkippedWithUnits {
                    units: record.units.len(),
                });
            }
            if record.skip_reason.is_none() {
                out.push(Violation::SkippedWithoutReason);
            }
        }
    }

    let mut seen_ids = BTreeSet::new();
    for (ui, unit) in record.units.iter().enumerate() {
        if !seen_ids.insert(unit.id.as_str()) {
            out.push(Violation::DuplicateUnitId {
                id: unit.id.clone(),
            });
        }
        validate_unit(ui, unit, actual, &mut out);
    }

    // Cross-unit overlap is reported once per unit pair; segment overlap is
    // only checked within a unit since segments are contained in their unit.
    for i in 0..record.units.len() {
        for j in i + 1..record.units.len() {
            let shared = record.units[i]
                .spans
                .iter()
                .any(|a| record.units[j].spans.iter().any(|b| a.overlaps(b)));
            if shared {
                out.push(Violation::UnitsOverlap { first: i, second: j });
            }
        }
    }

    validate_events(record, &mut out);
    Ok(out)
}

fn validate_unit(ui: usize, unit: &ArgumentativeUnit, char_length: usize, out: &mut Vec<Violation>) {
    for span in &unit.spans {
        if span.is_empty() {
            out.push(Violation::EmptySpan { unit: ui, span: *span });
        } else if span.end > char_length {
            out.push(Violation::SpanOutOfBounds {
                unit: ui,
                span: *span,
                char_length,
            });
        }
    }
    if unit.spans.windows(2).any(|w| w[1].start < w[0].start) {
        out.push(Violation::UnitSpansUnsorted { unit: ui });
    }
    for i in 0..unit.spans.len() {
        for j in i + 1..unit.spans.len() {
            if unit.spans[i].overlaps(&unit.spans[j]) {
                out.push(Violation::UnitSpansOverlap {
                    unit: ui,
                    first: unit.spans[i],
                    second: unit.spans[j],
                });
            }
        }
    }
    if unit.segments.is_empty() {
        out.push(Violation::UnitWithoutSegments { unit: ui });
    }
    let merged = merge_spans(&unit.spans);
    for (si, seg) in unit.segments.iter().enumerate() {
        if seg.span.is_empty() {
            out.push(Violation::EmptySegment { unit: ui, segment: si });
            continue;
        }
        if !merged.iter().any(|s| s.contains(&seg.span)) {
            out.push(Violation::SegmentNotContained {
                unit: ui,
                segment: si,
                span: seg.span,
            });
        }
    }
    for i in 0..unit.segments.len() {
        for j in i + 1..unit.segments.len() {
            if unit.segments[i].span.overlaps(&unit.segments[j].span) {
                out.push(Violation::SegmentsOverlap {
                    unit: ui,
                    first: i,
                    second: j,
                });
            }
        }
    }
}

fn validate_events(record: &AnnotationRecord, out: &mut Vec<Violation>) {
    let unit_ids: BTreeSet<&str> = record.units.iter().map(|u| u.id.as_str()).collect();
    let mut per_unit: BTreeMap<&str, Vec<&ClarificationEvent>> = BTreeMap::new();
    for (ei, ev) in record.events.iter().enumerate() {
        if ev.accepted != ev.observed_quality.is_some() {
            out.push(Violation::QualityPresence {
                event: ei,
                accepted: ev.accepted,
            });
        }
        if let Some(q) = ev.observed_quality {
            if !(0.0..=1.0).contains(&q) {
                out.push(Violation::QualityRange { event: ei, value: q });
            }
        }
        if !unit_ids.contains(ev.au_ref.as_str()) {
            out.push(Violation::UnknownUnitRef {
                event: ei,
                au_ref: ev.au_ref.clone(),
            });
        }
        per_unit.entry(ev.au_ref.as_str()).or_default().push(ev);
    }
    for (au_ref, mut evs) in per_unit {
        evs.sort_by_key(|e| e.attempt_index);
        let k = evs.len();
        let contiguous = evs
            .iter()
            .enumerate()
            .all(|(i, e)| e.attempt_index as usize == i + 1);
        let detail = if !contiguous {
            Some("attempt indices must form 1..K".to_string())
        } else if evs[..k - 1].iter().any(|e| e.accepted) {
            Some("only the last attempt may be accepted".to_string())
        } else if record.status == RecordStatus::Completed && !evs[k - 1].accepted {
            Some("last attempt of a completed record must be accepted".to_string())
        } else if record.phase == Phase::Phase2 && k != 1 {
            Some(format!("phase 2 allows a single attempt, found {k}"))
        } else {
            None
        };
        if let Some(detail) = detail {
            out.push(Violation::AttemptSequence {
                au_ref: au_ref.to_string(),
                detail,
            });
        }
    }
}
