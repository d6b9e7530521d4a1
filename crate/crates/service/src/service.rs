//! Campaign logic. Every mutation is journaled before it touches the state.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use clarify_core::model::{
    validate_record, AnnotationRecord, ArgumentativeUnit, ClarificationEvent, Contribution, ErrorLabel, Phase,
    RecordStatus, SegmentType, SkipReason,
};
use clarify_core::textmetrics::rouge_l_f1;
use clarify_gateway::{parse_clarification, BackendPool, ChatBackend, Message, PromptLibrary, Stage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::{Clock, Millis};
use crate::config::{validate_accounts, AccountSpec, CampaignConfig};
use crate::error::{Result, ServiceError};
use crate::journal::{read_snapshot, write_snapshot, Event, Journal, JournalEntry};
use crate::state::{Draft, ExportFilter, ExportStream, State};
use crate::tutorial::{tutorial_score, TutorialItem};

fn seeded_hash(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let d = h.finalize();
    u64::from_be_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Corpus, tutorial and the fixed per-contribution decisions derived from
/// the campaign seed.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub config: CampaignConfig,
    pub contributions: Vec<Contribution>,
    pub tutorial: Vec<TutorialItem>,
    index: HashMap<String, usize>,
    /// Contribution indices in dispatch order.
    order: Vec<usize>,
    rank: Vec<usize>,
    doubles: BTreeSet<usize>,
    phase2_from_rank: usize,
    fingerprint: String,
}

impl Campaign {
    pub fn new(config: CampaignConfig, contributions: Vec<Contribution>, tutorial: Vec<TutorialItem>) -> Result<Self> {
        config.validate()?;
        if tutorial.is_empty() {
            return Err(ServiceError::Config("tutorial has no item".into()));
        }
        let mut index = HashMap::new();
        for (i, c) in contributions.iter().enumerate() {
            if index.insert(c.id.clone(), i).is_some() {
                return Err(ServiceError::Config(format!("duplicate contribution id {}", c.id)));
            }
        }
        for t in &tutorial {
            if index.contains_key(&t.contribution.id) {
                return Err(ServiceError::Config(format!("tutorial id {} is also a corpus id", t.contribution.id)));
            }
        }
        let n = contributions.len();
        let ranked = |salt: &str| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by_key(|&i| (seeded_hash(config.seed, &[salt, &contributions[i].id]), contributions[i].id.clone()));
            idx
        };
        let order = ranked("dispatch");
        let mut rank = vec![0; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        let n_doubles = (config.overlap_fraction * n as f64).round() as usize;
        let doubles = ranked("overlap").into_iter().take(n_doubles).collect();
        let phase2_from_rank = (config.phase2_start_fraction * n as f64).floor() as usize;

        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&(
            &config.campaign_id,
            &config.language,
            config.one_shot,
            &config.backends,
            &config.clarification_variant,
            config.overlap_fraction.to_bits(),
            config.phase2_start_fraction.to_bits(),
            config.seed,
            config.tutorial_lambda.to_bits(),
            config.tutorial_min_f1.to_bits(),
        ))?);
        for c in &contributions {
            h.update(serde_json::to_vec(c)?);
        }
        for t in &tutorial {
            h.update(serde_json::to_vec(t)?);
        }
        let fingerprint = hex::encode(&h.finalize()[..16]);

        Ok(Campaign { config, contributions, tutorial, index, order, rank, doubles, phase2_from_rank, fingerprint })
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn contribution(&self, id: &str) -> Option<&Contribution> {
        self.index.get(id).map(|&i| &self.contributions[i])
    }

    pub fn is_double(&self, id: &str) -> bool {
        self.index.get(id).is_some_and(|i| self.doubles.contains(i))
    }

    pub fn double_count(&self) -> usize {
        self.doubles.len()
    }

    /// Annotators wanted on `id`.
    pub fn target(&self, id: &str) -> usize {
        if self.is_double(id) {
            2
        } else {
            1
        }
    }

    /// Records the campaign is complete with.
    pub fn expected_annotations(&self) -> usize {
        self.contributions.len() + self.doubles.len()
    }

    /// Phase 2 covers the tail of the dispatch order.
    pub fn phase_of(&self, id: &str) -> Phase {
        match self.index.get(id) {
            Some(&i) if self.rank[i] >= self.phase2_from_rank => Phase::Phase2,
            _ => Phase::Phase1,
        }
    }

    /// Backend for one attempt, a pure function of the attempt coordinates.
    pub fn choose_backend(&self, annotator: &str, contribution_id: &str, au_id: &str, attempt: u32) -> &str {
        let h = seeded_hash(self.config.seed, &["backend", annotator, contribution_id, au_id, &attempt.to_string()]);
        &self.config.backends[(h % self.config.backends.len() as u64) as usize]
    }

    fn tutorial_index(&self, id: &str) -> Option<usize> {
        self.tutorial.iter().position(|t| t.contribution.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub annotator_id: String,
    pub name: String,
    pub tutorial_passed: bool,
    pub tutorial_validated: usize,
    pub tutorial_total: usize,
    pub completed: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftView {
    pub attempt: u32,
    pub backend: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Tutorial {
        /// 1-based position among the tutorial items.
        index: usize,
        of: usize,
        contribution: Contribution,
    },
    Annotate {
        contribution: Contribution,
        phase: Phase,
        expires_at: Millis,
        drafts: BTreeMap<String, DraftView>,
    },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegenerateRequest {
    pub contribution_id: String,
    pub unit: ArgumentativeUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regenerated {
    pub au_id: String,
    pub attempt: u32,
    pub backend: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub contribution_id: String,
    pub units: Vec<ArgumentativeUnit>,
    /// Error categories the annotator assigns to each unit's accepted edit.
    #[serde(default)]
    pub error_labels: BTreeMap<String, BTreeSet<ErrorLabel>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubmitResponse {
    Tutorial { item: usize, f1: f64, passed: bool, remaining: usize },
    Accepted { record: AnnotationRecord, revision: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub contributions: usize,
    pub double_annotated: usize,
    pub expected_annotations: usize,
    pub submitted: usize,
    pub skipped: usize,
    pub active_leases: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ServiceOptions {
    /// Journal entries between snapshots; 0 disables snapshots.
    pub snapshot_interval: u64,
    /// fsync each journal append.
    pub sync: bool,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        ServiceOptions { snapshot_interval: 100, sync: true }
    }
}

struct Inner {
    state: State,
    journal: Journal,
    since_snapshot: u64,
}

pub struct Service {
    campaign: Campaign,
    by_token: HashMap<String, AccountSpec>,
    admin_token: Option<String>,
    pool: BackendPool,
    library: &'static PromptLibrary,
    clock: Arc<dyn Clock>,
    dir: PathBuf,
    options: ServiceOptions,
    inner: Mutex<Inner>,
}

impl Service {
    /// Opens or resumes the campaign stored in `dir`.
    pub fn open(
        dir: &Path,
        campaign: Campaign,
        accounts: Vec<AccountSpec>,
        admin_token: Option<String>,
        pool: BackendPool,
        clock: Arc<dyn Clock>,
        options: ServiceOptions,
    ) -> Result<Self> {
        validate_accounts(&accounts)?;
        for name in &campaign.config.backends {
            pool.get(name)?;
        }
        let library = PromptLibrary::builtin();
        library.get(Stage::Clarification, &campaign.config.language, Some(&campaign.config.clarification_variant))?;

        let (journal, entries) = Journal::open(dir, options.sync)?;
        let last = entries.last().map_or(0, |e| e.seq);
        let mut state = match read_snapshot(dir) {
            Some(s) if s.last_seq <= last && entries.iter().any(|e| e.seq == s.last_seq && e.at == s.last_at) => s,
            Some(s) if s.last_seq == 0 => s,
            Some(s) => {
                tracing::warn!(snapshot = s.last_seq, journal = last, "snapshot does not match the journal, replaying");
                State::default()
            }
            None => State::default(),
        };
        let from = state.last_seq;
        for e in entries.iter().filter(|e| e.seq > from) {
            state.apply(e)?;
        }

        let by_token = accounts.into_iter().map(|a| (a.token.clone(), a)).collect();
        let svc = Service {
            campaign,
            by_token,
            admin_token: admin_token.filter(|t| !t.is_empty()),
            pool,
            library,
            clock,
            dir: dir.to_path_buf(),
            options,
            inner: Mutex::new(Inner { state, journal, since_snapshot: 0 }),
        };
        {
            let mut inner = svc.lock();
            match inner.state.fingerprint.clone() {
                None => {
                    let event = Event::CampaignStarted {
                        fingerprint: svc.campaign.fingerprint.clone(),
                        tutorial_items: svc.campaign.tutorial.len(),
                    };
                    svc.append(&mut inner, event)?;
                }
                Some(found) if found != svc.campaign.fingerprint => {
                    return Err(ServiceError::CampaignMismatch { found, expected: svc.campaign.fingerprint.clone() })
                }
                Some(_) => {}
            }
        }
        Ok(svc)
    }

    pub fn campaign(&self) -> &Campaign {
        &self.campaign
    }

    /// Copy of the current state.
    pub fn state(&self) -> State {
        self.lock().state.clone()
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Current time, never earlier than the last journaled entry.
    fn now(&self, inner: &Inner) -> Millis {
        self.clock.now().max(inner.state.last_at)
    }

    fn append(&self, inner: &mut Inner, event: Event) -> Result<()> {
        let entry = JournalEntry { seq: inner.state.last_seq + 1, at: self.now(inner), event };
        inner.journal.append(&entry)?;
        inner.state.apply(&entry)?;
        inner.since_snapshot += 1;
        if self.options.snapshot_interval > 0 && inner.since_snapshot >= self.options.snapshot_interval {
            write_snapshot(&self.dir, &inner.state)?;
            inner.since_snapshot = 0;
        }
        Ok(())
    }

    fn account(&self, token: &str) -> Result<&AccountSpec> {
        self.by_token.get(token).ok_or(ServiceError::Unauthenticated)
    }

    fn admin(&self, token: &str) -> Result<()> {
        match &self.admin_token {
            Some(t) if t == token => Ok(()),
            _ if self.by_token.contains_key(token) => Err(ServiceError::Forbidden),
            Some(_) => Err(ServiceError::Unauthenticated),
            None => Err(ServiceError::Forbidden),
        }
    }

    fn require_tutorial(state: &State, annotator: &str) -> Result<()> {
        if state.annotators.get(annotator).is_some_and(|a| a.tutorial_done) {
            Ok(())
        } else {
            Err(ServiceError::TutorialPending)
        }
    }

    /// Phase under which `annotator` may work on `contribution_id` now: from
    /// a live lease, or from an earlier record when resubmitting.
    fn access(state: &State, annotator: &str, contribution_id: &str, now: Millis) -> Result<Phase> {
        if let Some(l) = state.live_lease(contribution_id, now) {
            if l.annotator == annotator {
                return Ok(l.phase);
            }
        }
        if let Some(r) = state.record(contribution_id, annotator) {
            return Ok(r.record.phase);
        }
        Err(ServiceError::Conflict(format!("no active lease on {contribution_id}")))
    }

    fn contribution(&self, id: &str) -> Result<&Contribution> {
        self.campaign.contribution(id).ok_or_else(|| ServiceError::NotFound(format!("contribution {id}")))
    }

    pub fn login(&self, token: &str) -> Result<Profile> {
        let account = self.account(token)?;
        let inner = self.lock();
        let a = inner.state.annotators.get(&account.id).cloned().unwrap_or_default();
        Ok(Profile {
            annotator_id: account.id.clone(),
            name: account.name.clone(),
            tutorial_passed: a.tutorial_done,
            tutorial_validated: a.tutorial_passed.len(),
            tutorial_total: self.campaign.tutorial.len(),
            completed: a.completed,
        })
    }

    pub fn next_task(&self, token: &str) -> Result<Task> {
        let who = self.account(token)?.id.clone();
        let mut inner = self.lock();
        let now = self.now(&inner);
        let annotator = inner.state.annotators.get(&who).cloned().unwrap_or_default();
        if !annotator.tutorial_done {
            let i = (0..self.campaign.tutorial.len())
                .find(|i| !annotator.tutorial_passed.contains(i))
                .expect("tutorial not done implies a pending item");
            return Ok(Task::Tutorial {
                index: i + 1,
                of: self.campaign.tutorial.len(),
                contribution: self.campaign.tutorial[i].contribution.clone(),
            });
        }
        if let Some((cid, _)) = inner.state.held_by(&who, now) {
            let cid = cid.to_string();
            return Ok(self.annotate_task(&inner.state, &who, &cid));
        }
        if self.campaign.config.quota.is_some_and(|q| annotator.completed >= q) {
            return Ok(Task::None);
        }
        let state = &inner.state;
        let pick = self
            .campaign
            .order
            .iter()
            .map(|&i| &self.campaign.contributions[i].id)
            .filter(|cid| {
                state.submitted(cid) < self.campaign.target(cid)
                    && state.record(cid, &who).is_none()
                    && state.live_lease(cid, now).is_none()
            })
            .min_by_key(|cid| (state.submitted(cid), self.campaign.rank[self.campaign.index[*cid]]))
            .cloned();
        let Some(cid) = pick else {
            return Ok(Task::None);
        };
        let event = Event::Assigned {
            annotator: who.clone(),
            contribution_id: cid.clone(),
            phase: self.campaign.phase_of(&cid),
            expires_at: now + self.campaign.config.lease_ms(),
        };
        self.append(&mut inner, event)?;
        Ok(self.annotate_task(&inner.state, &who, &cid))
    }

    fn annotate_task(&self, state: &State, who: &str, cid: &str) -> Task {
        let lease = state.leases.get(cid).expect("task is leased");
        let drafts = state
            .drafts_of(who, cid)
            .map(|m| {
                m.iter()
                    .map(|(au, d)| {
                        (au.clone(), DraftView { attempt: d.attempt, backend: d.backend.clone(), text: d.output.clone() })
                    })
                    .collect()
            })
            .unwrap_or_default();
        Task::Annotate {
            contribution: self.campaign.contribution(cid).expect("leased ids come from the corpus").clone(),
            phase: lease.phase,
            expires_at: lease.expires_at,
            drafts,
        }
    }

    fn check_unit(&self, who: &str, phase: Phase, c: &Contribution, unit: &ArgumentativeUnit) -> Result<()> {
        let probe = AnnotationRecord::completed(c.id.clone(), who, phase, vec![unit.clone()]);
        let violations = validate_record(&probe, c)?;
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ServiceError::Violations(violations))
        }
    }

    /// Generates the first clarification of a unit, or replaces the current
    /// one. Replacing is refused in phase 2.
    pub async fn regenerate(&self, token: &str, req: RegenerateRequest) -> Result<Regenerated> {
        let who = self.account(token)?.id.clone();
        let c = self.contribution(&req.contribution_id)?;
        let au = req.unit.id.clone();
        let (previous, attempt, backend_name) = {
            let inner = self.lock();
            Self::require_tutorial(&inner.state, &who)?;
            let phase = Self::access(&inner.state, &who, &c.id, self.now(&inner))?;
            self.check_unit(&who, phase, c, &req.unit)?;
            let previous = inner.state.drafts_of(&who, &c.id).and_then(|m| m.get(&au)).cloned();
            if previous.is_some() && phase == Phase::Phase2 {
                return Err(ServiceError::Policy("phase 2 keeps the first generated clarification".into()));
            }
            let attempt = previous.as_ref().map_or(1, |d| d.attempt + 1);
            let backend = self.campaign.choose_backend(&who, &c.id, &au, attempt).to_string();
            (previous, attempt, backend)
        };

        let unit_text = req.unit.text(&c.text);
        let output = self.clarify(&backend_name, c, &req.unit, &unit_text).await?;

        let mut inner = self.lock();
        Self::access(&inner.state, &who, &c.id, self.now(&inner))?;
        let current = inner.state.drafts_of(&who, &c.id).and_then(|m| m.get(&au)).map(|d| d.attempt);
        if current != previous.as_ref().map(|d| d.attempt) {
            return Err(ServiceError::Conflict(format!("unit {au} was regenerated concurrently")));
        }
        let superseded = previous.map(|d| ClarificationEvent {
            au_ref: au.clone(),
            backend: d.backend,
            attempt_index: d.attempt,
            accepted: false,
            observed_quality: None,
            error_labels: BTreeSet::new(),
            output: Some(d.output),
            final_text: None,
        });
        let event = Event::Regenerated {
            annotator: who,
            contribution_id: c.id.clone(),
            au_id: au.clone(),
            unit_text,
            attempt,
            backend: backend_name.clone(),
            output: output.clone(),
            superseded,
        };
        self.append(&mut inner, event)?;
        Ok(Regenerated { au_id: au, attempt, backend: backend_name, text: output })
    }

    async fn clarify(&self, backend: &str, c: &Contribution, unit: &ArgumentativeUnit, unit_text: &str) -> Result<String> {
        let cfg = &self.campaign.config;
        let mut vars = BTreeMap::new();
        vars.insert("contribution".to_string(), c.text.clone());
        if cfg.clarification_variant == "annotation" {
            vars.insert("theme".into(), c.theme.label(&cfg.language).to_string());
            for (key, kind) in
                [("statements", SegmentType::Statement), ("premises", SegmentType::Premise), ("solutions", SegmentType::Solution)]
            {
                vars.insert(key.into(), unit.segment_texts(&c.text, kind).join(" "));
            }
        } else {
            vars.insert("argumentative unit".into(), unit_text.to_string());
        }
        let mut messages =
            self.library.render(Stage::Clarification, &cfg.language, Some(&cfg.clarification_variant), &vars, cfg.one_shot)?;
        let backend: Arc<dyn ChatBackend> = self.pool.get(backend)?;
        let unavailable = |e: clarify_gateway::GatewayError| ServiceError::Backend(e.to_string());
        let first = backend.complete(&messages).await.map_err(unavailable)?;
        if let Ok(cl) = parse_clarification(&first.text) {
            return Ok(cl.text);
        }
        messages.push(Message::assistant(first.text));
        messages.push(Message::user(self.library.format_reminder(Stage::Clarification, &cfg.language)?));
        let second = backend.complete(&messages).await.map_err(unavailable)?;
        parse_clarification(&second.text)
            .map(|cl| cl.text)
            .map_err(|e| ServiceError::Backend(format!("unusable clarification from {backend}: {e}", backend = backend.name())))
    }

    pub fn submit(&self, token: &str, req: SubmitRequest) -> Result<SubmitResponse> {
        let who = self.account(token)?.id.clone();
        if let Some(item) = self.campaign.tutorial_index(&req.contribution_id) {
            return self.submit_tutorial(&who, item, &req.units);
        }
        let c = self.contribution(&req.contribution_id)?;
        let mut inner = self.lock();
        Self::require_tutorial(&inner.state, &who)?;
        let phase = Self::access(&inner.state, &who, &c.id, self.now(&inner))?;

        let empty = BTreeMap::new();
        let drafts = inner.state.drafts_of(&who, &c.id).unwrap_or(&empty);
        let mut units = req.units;
        let mut events = Vec::new();
        for unit in &mut units {
            let d: &Draft = drafts
                .get(&unit.id)
                .ok_or_else(|| ServiceError::BadRequest(format!("unit {} has no generated clarification", unit.id)))?;
            let final_text = unit.clarification.clone().unwrap_or_else(|| d.output.clone());
            unit.clarification = Some(final_text.clone());
            unit.source_model = Some(d.backend.clone());
            events.extend(d.rejected.iter().cloned());
            events.push(ClarificationEvent {
                au_ref: unit.id.clone(),
                backend: d.backend.clone(),
                attempt_index: d.attempt,
                accepted: true,
                observed_quality: Some(rouge_l_f1(&final_text, &d.output)),
                error_labels: req.error_labels.get(&unit.id).cloned().unwrap_or_default(),
                output: Some(d.output.clone()),
                final_text: Some(final_text),
            });
        }
        let mut record = AnnotationRecord::completed(c.id.clone(), who.clone(), phase, units);
        record.events = events;
        let violations = validate_record(&record, c)?;
        if !violations.is_empty() {
            return Err(ServiceError::Violations(violations));
        }
        self.append(&mut inner, Event::Submitted { record: record.clone() })?;
        let revision = inner.state.record(&c.id, &who).map_or(1, |r| r.revision);
        Ok(SubmitResponse::Accepted { record, revision })
    }

    fn submit_tutorial(&self, who: &str, item: usize, units: &[ArgumentativeUnit]) -> Result<SubmitResponse> {
        let cfg = &self.campaign.config;
        let f1 = tutorial_score(&self.campaign.tutorial[item], units, cfg.tutorial_lambda);
        let passed = f1 >= cfg.tutorial_min_f1;
        let mut inner = self.lock();
        let event = Event::TutorialAttempt { annotator: who.to_string(), item, f1, passed };
        self.append(&mut inner, event)?;
        let done = inner.state.annotators.get(who).map_or(0, |a| a.tutorial_passed.len());
        Ok(SubmitResponse::Tutorial { item: item + 1, f1, passed, remaining: self.campaign.tutorial.len() - done })
    }

    pub fn skip(&self, token: &str, contribution_id: &str, reason: SkipReason) -> Result<AnnotationRecord> {
        let who = self.account(token)?.id.clone();
        let c = self.contribution(contribution_id)?;
        let mut inner = self.lock();
        Self::require_tutorial(&inner.state, &who)?;
        let phase = Self::access(&inner.state, &who, &c.id, self.now(&inner))?;
        let record = AnnotationRecord::skipped(c.id.clone(), who, phase, reason);
        self.append(&mut inner, Event::Skipped { record: record.clone() })?;
        Ok(record)
    }

    pub fn my_annotations(&self, token: &str) -> Result<Vec<AnnotationRecord>> {
        let who = self.account(token)?.id.clone();
        let inner = self.lock();
        Ok(inner.state.records.values().filter_map(|m| m.get(&who)).map(|r| r.record.clone()).collect())
    }

    pub fn progress(&self) -> Progress {
        let inner = self.lock();
        let now = self.now(&inner);
        let s = &inner.state;
        Progress {
            contributions: self.campaign.contributions.len(),
            double_annotated: self.campaign.double_count(),
            expected_annotations: self.campaign.expected_annotations(),
            submitted: s.record_count(),
            skipped: s
                .records
                .values()
                .flat_map(|m| m.values())
                .filter(|r| r.record.status == RecordStatus::Skipped)
                .count(),
            active_leases: s.leases.values().filter(|l| l.expires_at > now).count(),
        }
    }

    pub fn admin_annotations(&self, token: &str) -> Result<(Progress, Vec<AnnotationRecord>)> {
        self.admin(token)?;
        let records = self.filtered(&ExportFilter::default());
        Ok((self.progress(), records))
    }

    fn filtered(&self, filter: &ExportFilter) -> Vec<AnnotationRecord> {
        let inner = self.lock();
        inner
            .state
            .records
            .values()
            .flat_map(|m| m.values())
            .map(|r| &r.record)
            .filter(|r| filter.phase.is_none_or(|p| r.phase == p))
            .filter(|r| filter.annotator.as_ref().is_none_or(|a| &r.annotator_id == a))
            .cloned()
            .collect()
    }

    /// JSON lines of the latest records, or of their clarification events,
    /// ordered by contribution id then annotator id.
    pub fn export(&self, token: &str, filter: ExportFilter) -> Result<String> {
        self.admin(token)?;
        let records = self.filtered(&filter);
        let lines = match filter.stream {
            ExportStream::Records => records.iter().map(serde_json::to_string).collect::<serde_json::Result<Vec<_>>>()?,
            ExportStream::Events => {
                records.iter().flat_map(|r| &r.events).map(serde_json::to_string).collect::<serde_json::Result<Vec<_>>>()?
            }
        };
        let out: String = lines.into_iter().map(|l| l + "\n").collect();
        let mut inner = self.lock();
        self.append(&mut inner, Event::Exported { filter })?;
        Ok(out)
    }
}

