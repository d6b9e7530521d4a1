//! One contribution through extraction, structure detection and clarification.

use std::collections::BTreeMap;
use std::sync::Arc;

use clarify_core::model::{
    validate_record, AnnotationRecord, ArgumentativeUnit, CharSpan, Contribution, LabeledSegment, Phase, SegmentType,
    Theme,
};
use clarify_gateway::{
    parse_stage_output, BackendPool, ChatBackend, Completion, GatewayError, Message, ParsedOutput, PromptLibrary,
    Stage,
};
use serde::{Deserialize, Serialize};

use crate::align::{align_extractive, align_within, AlignStatus};
use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantineEntry {
    pub contribution_id: String,
    pub stage: Stage,
    /// Offending generated unit or segment, when only part of the output was rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<String>,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub units_exact: u64,
    pub units_fuzzy: u64,
    pub units_rejected: u64,
    pub segments_rejected: u64,
    pub reprompts: u64,
    pub misformulations: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Counters {
    pub fn add(&mut self, o: &Counters) {
        self.units_exact += o.units_exact;
        self.units_fuzzy += o.units_fuzzy;
        self.units_rejected += o.units_rejected;
        self.segments_rejected += o.segments_rejected;
        self.reprompts += o.reprompts;
        self.misformulations += o.misformulations;
        self.prompt_tokens += o.prompt_tokens;
        self.completion_tokens += o.completion_tokens;
    }
}

/// Everything produced for one contribution; the unit of checkpointing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub contribution_id: String,
    pub theme: Theme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<AnnotationRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quarantine: Vec<QuarantineEntry>,
    /// Alignment status per unit id of the record.
    #[serde(default)]
    pub alignment: BTreeMap<String, AlignStatus>,
    pub counters: Counters,
}

/// Backends and settings shared by all contributions of a run.
#[derive(Clone)]
pub struct StageContext {
    pub cfg: PipelineConfig,
    pub library: &'static PromptLibrary,
    extract: Arc<dyn ChatBackend>,
    detect: Arc<dyn ChatBackend>,
    clarify: Arc<dyn ChatBackend>,
}

impl std::fmt::Debug for StageContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StageContext").field("cfg", &self.cfg).finish()
    }
}

impl StageContext {
    pub fn new(cfg: PipelineConfig, pool: &BackendPool) -> Result<Self> {
        cfg.validate()?;
        let library = PromptLibrary::builtin();
        for stage in [Stage::AuExtraction, Stage::AsDetection, Stage::Clarification] {
            library.get(stage, &cfg.language, None)?;
        }
        Ok(StageContext {
            extract: pool.get(&cfg.stages.au_extraction)?,
            detect: pool.get(&cfg.stages.as_detection)?,
            clarify: pool.get(&cfg.stages.clarification)?,
            cfg,
            library,
        })
    }

    fn backend(&self, stage: Stage) -> &Arc<dyn ChatBackend> {
        match stage {
            Stage::AuExtraction => &self.extract,
            Stage::AsDetection => &self.detect,
            _ => &self.clarify,
        }
    }
}

enum StageResult {
    Parsed(ParsedOutput),
    Unparseable { raw: String, message: String },
}

fn vars(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Render, complete and parse; on a parse failure the model is re-prompted
/// once with the format reminder.
async fn run_stage(
    ctx: &StageContext,
    stage: Stage,
    variant: Option<&str>,
    vars: &BTreeMap<String, String>,
    contribution_id: &str,
    counters: &mut Counters,
) -> Result<StageResult> {
    let mut messages = ctx.library.render(stage, &ctx.cfg.language, variant, vars, ctx.cfg.one_shot)?;
    let backend = ctx.backend(stage);
    let call = |messages: Vec<Message>| async move {
        backend.complete(&messages).await.map_err(|source| PipelineError::Backend {
            contribution_id: contribution_id.to_string(),
            source,
        })
    };
    let first: Completion = call(messages.clone()).await?;
    tally(counters, &first);
    let message = match parse_stage_output(stage, &first.text) {
        Ok(p) => return Ok(StageResult::Parsed(p)),
        Err(e) => e.to_string(),
    };
    tracing::debug!(contribution_id, ?stage, %message, "re-prompting");
    counters.reprompts += 1;
    messages.push(Message::assistant(first.text));
    messages.push(Message::user(ctx.library.format_reminder(stage, &ctx.cfg.language)?));
    let second = call(messages).await?;
    tally(counters, &second);
    Ok(match parse_stage_output(stage, &second.text) {
        Ok(p) => StageResult::Parsed(p),
        Err(GatewayError::Parse { message, raw, .. }) => StageResult::Unparseable { raw, message },
        Err(e) => StageResult::Unparseable { raw: second.text, message: format!("{message}; {e}") },
    })
}

fn tally(c: &mut Counters, completion: &Completion) {
    c.prompt_tokens += completion.usage.prompt_tokens;
    c.completion_tokens += completion.usage.completion_tokens;
}

struct Draft {
    spans: Vec<CharSpan>,
    status: AlignStatus,
}

impl Outcome {
    fn quarantined(c: &Contribution, stage: Stage, reason: String, raw: Option<String>, mut counters: Counters, mut entries: Vec<QuarantineEntry>) -> Self {
        entries.push(QuarantineEntry { contribution_id: c.id.clone(), stage, item: None, reason, raw });
        counters.units_exact = 0;
        counters.units_fuzzy = 0;
        Outcome {
            contribution_id: c.id.clone(),
            theme: c.theme,
            record: None,
            quarantine: entries,
            alignment: BTreeMap::new(),
            counters,
        }
    }
}

/// Runs the three stages for one contribution.
///
/// Backend failures are errors; unusable model outputs end in quarantine
/// entries and never in the record.
pub async fn process_contribution(ctx: &StageContext, c: &Contribution) -> Result<Outcome> {
    let mut counters = Counters::default();
    let mut entries = Vec::new();
    let entry = |stage, item: String, reason: String| QuarantineEntry {
        contribution_id: c.id.clone(),
        stage,
        item: Some(item),
        reason,
        raw: None,
    };

    let units_raw = match run_stage(ctx, Stage::AuExtraction, None, &vars(&[("contribution", c.text.clone())]), &c.id, &mut counters).await? {
        StageResult::Parsed(ParsedOutput::Units(u)) => u,
        StageResult::Parsed(_) => unreachable!("extraction parses to units"),
        StageResult::Unparseable { raw, message } => {
            return Ok(Outcome::quarantined(c, Stage::AuExtraction, message, Some(raw), counters, entries));
        }
    };

    let mut drafts: Vec<Draft> = Vec::new();
    for unit in units_raw {
        let a = align_extractive(&c.text, &unit);
        if a.status == AlignStatus::Failed {
            counters.units_rejected += 1;
            entries.push(entry(Stage::AuExtraction, unit, format!("not found in the contribution (similarity {:.3})", a.similarity)));
            continue;
        }
        let clash = drafts.iter().any(|d| d.spans.iter().any(|s| a.spans.iter().any(|t| s.overlaps(t))));
        if clash {
            counters.units_rejected += 1;
            entries.push(entry(Stage::AuExtraction, unit, "overlaps an earlier unit".into()));
            continue;
        }
        drafts.push(Draft { spans: a.spans, status: a.status });
    }
    drafts.sort_by_key(|d| d.spans[0].start);

    let mut units = Vec::new();
    let mut alignment = BTreeMap::new();
    for (i, d) in drafts.into_iter().enumerate() {
        let id = format!("au{}", i + 1);
        let mut unit = ArgumentativeUnit::new(id.clone(), d.spans, Vec::new());
        let unit_text = unit.text(&c.text);
        let v = vars(&[("contribution", c.text.clone()), ("argumentative unit", unit_text.clone())]);
        let segments = match run_stage(ctx, Stage::AsDetection, None, &v, &c.id, &mut counters).await? {
            StageResult::Parsed(ParsedOutput::Segments(s)) => s,
            StageResult::Parsed(_) => unreachable!("detection parses to segments"),
            StageResult::Unparseable { raw, message } => {
                return Ok(Outcome::quarantined(c, Stage::AsDetection, format!("{id}: {message}"), Some(raw), counters, entries));
            }
        };
        for (kind, text) in segments {
            let a = align_within(&c.text, &unit.spans, &text);
            if a.status == AlignStatus::Failed {
                counters.segments_rejected += 1;
                entries.push(entry(Stage::AsDetection, text, format!("{id}: not found in the unit")));
                continue;
            }
            if unit.segments.iter().any(|s| a.spans.iter().any(|t| s.span.overlaps(t))) {
                counters.segments_rejected += 1;
                entries.push(entry(Stage::AsDetection, text, format!("{id}: overlaps an earlier segment")));
                continue;
            }
            unit.segments.extend(a.spans.into_iter().map(|span| LabeledSegment { span, kind }));
        }
        if unit.segments.is_empty() {
            counters.units_rejected += 1;
            entries.push(entry(Stage::AsDetection, unit_text, format!("{id}: no segment could be placed")));
            continue;
        }
        unit.segments.sort_by_key(|s| s.span);
        match d.status {
            AlignStatus::Exact => counters.units_exact += 1,
            _ => counters.units_fuzzy += 1,
        }
        alignment.insert(id, d.status);
        units.push(unit);
    }
    if units.is_empty() {
        return Ok(Outcome::quarantined(c, Stage::AuExtraction, "no usable argumentative unit".into(), None, counters, entries));
    }

    let variant = ctx.cfg.clarification_variant.clone();
    for unit in &mut units {
        let v = if variant == "annotation" {
            let join = |k| unit.segment_texts(&c.text, k).join(" ");
            vars(&[
                ("contribution", c.text.clone()),
                ("theme", c.theme.label(&ctx.cfg.language).to_string()),
                ("statements", join(SegmentType::Statement)),
                ("premises", join(SegmentType::Premise)),
                ("solutions", join(SegmentType::Solution)),
            ])
        } else {
            vars(&[("contribution", c.text.clone()), ("argumentative unit", unit.text(&c.text))])
        };
        match run_stage(ctx, Stage::Clarification, Some(&variant), &v, &c.id, &mut counters).await? {
            StageResult::Parsed(ParsedOutput::Clarification(cl)) => {
                counters.misformulations += u64::from(cl.misformulation);
                unit.clarification = Some(cl.text);
                unit.source_model = Some(ctx.clarify.name().to_string());
            }
            StageResult::Parsed(_) => unreachable!("clarification parses to text"),
            StageResult::Unparseable { raw, message } => {
                return Ok(Outcome::quarantined(c, Stage::Clarification, format!("{}: {message}", unit.id), Some(raw), counters, entries));
            }
        }
    }

    let record = AnnotationRecord::completed(c.id.clone(), ctx.cfg.run_id.clone(), Phase::Automatic, units);
    let violations = validate_record(&record, c)?;
    if !violations.is_empty() {
        let reason = violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        return Ok(Outcome::quarantined(c, Stage::AsDetection, format!("invalid record: {reason}"), None, counters, entries));
    }
    Ok(Outcome { contribution_id: c.id.clone(), theme: c.theme, record: Some(record), quarantine: entries, alignment, counters })
}
