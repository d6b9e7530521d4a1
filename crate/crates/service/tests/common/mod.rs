#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use clarify_core::model::{ArgumentativeUnit, CharSpan, Contribution, LabeledSegment, SegmentType, Theme};
use clarify_gateway::{BackendPool, ChatBackend, ScriptedBackend};
use clarify_service::{
    builtin_tutorial, AccountSpec, Campaign, CampaignConfig, ManualClock, RegenerateRequest, Service, ServiceOptions,
    SubmitRequest, SubmitResponse, Task,
};

pub const ADMIN: &str = "admin-secret";
pub const BACKENDS: [&str; 4] = ["m1", "m2", "m3", "m4"];
pub const MINUTE: i64 = 60_000;

pub fn corpus(n: usize) -> Vec<Contribution> {
    (0..n)
        .map(|i| {
            Contribution::new(
                format!("c{i:04}"),
                Theme::ALL[i % 4],
                format!("Il faut financer le projet numéro {i}. Cela aiderait les habitants du quartier {i}."),
            )
        })
        .collect()
}

pub fn accounts(n: usize) -> Vec<AccountSpec> {
    (1..=n).map(|i| AccountSpec { id: format!("a{i}"), name: format!("Annotator {i}"), token: format!("tok{i}") }).collect()
}

pub fn token(i: usize) -> String {
    format!("tok{i}")
}

pub fn config() -> CampaignConfig {
    CampaignConfig::new(BACKENDS.iter().map(|s| s.to_string()).collect())
}

pub fn scripted_pool() -> BackendPool {
    let mut pool = BackendPool::default();
    for b in BACKENDS {
        pool.insert(Arc::new(ScriptedBackend::new(b))).unwrap();
    }
    pool
}

pub fn pool_of(backends: Vec<Arc<dyn ChatBackend>>) -> BackendPool {
    let mut pool = BackendPool::default();
    for b in backends {
        pool.insert(b).unwrap();
    }
    pool
}

pub struct Harness {
    pub service: Service,
    pub clock: Arc<ManualClock>,
}

pub fn open(dir: &Path, cfg: CampaignConfig, corpus: Vec<Contribution>, n_accounts: usize, opts: ServiceOptions) -> Harness {
    open_with_pool(dir, cfg, corpus, n_accounts, opts, scripted_pool())
}

pub fn open_with_pool(
    dir: &Path,
    cfg: CampaignConfig,
    corpus: Vec<Contribution>,
    n_accounts: usize,
    opts: ServiceOptions,
    pool: BackendPool,
) -> Harness {
    let clock = Arc::new(ManualClock::new(1_700_000_000_000));
    let campaign = Campaign::new(cfg, corpus, builtin_tutorial()).unwrap();
    let service =
        Service::open(dir, campaign, accounts(n_accounts), Some(ADMIN.into()), pool, clock.clone(), opts).unwrap();
    Harness { service, clock }
}

pub fn pass_tutorial(svc: &Service, token: &str) {
    for item in builtin_tutorial() {
        let r = svc
            .submit(token, SubmitRequest { contribution_id: item.contribution.id.clone(), units: item.gold, error_labels: Default::default() })
            .unwrap();
        assert!(matches!(r, SubmitResponse::Tutorial { passed: true, .. }));
    }
}

/// One unit covering the first sentence, typed as a solution.
pub fn first_sentence_unit(c: &Contribution) -> ArgumentativeUnit {
    let dot = c.text.chars().position(|ch| ch == '.').expect("synthetic texts have a full stop");
    ArgumentativeUnit::new("au1", vec![CharSpan::new(0, dot + 1)], vec![LabeledSegment::new(0, dot, SegmentType::Solution)])
}

pub fn leased(task: &Task) -> &Contribution {
    match task {
        Task::Annotate { contribution, .. } => contribution,
        other => panic!("expected an annotation task, got {other:?}"),
    }
}

/// Generates, optionally regenerates, then submits the first-sentence unit.
pub async fn annotate(svc: &Service, token: &str, c: &Contribution, regenerations: u32, edit: Option<&str>) {
    let mut unit = first_sentence_unit(c);
    let req = RegenerateRequest { contribution_id: c.id.clone(), unit: unit.clone() };
    for _ in 0..=regenerations {
        svc.regenerate(token, req.clone()).await.unwrap();
    }
    unit.clarification = edit.map(str::to_string);
    svc.submit(token, SubmitRequest { contribution_id: c.id.clone(), units: vec![unit], error_labels: Default::default() })
        .unwrap();
}

/// Live states after every journal entry, and every snapshot seen.
pub struct Recording {
    pub states: std::collections::BTreeMap<u64, clarify_service::State>,
    pub snapshots: std::collections::BTreeMap<u64, Vec<u8>>,
}

impl Recording {
    fn observe(&mut self, svc: &Service, dir: &Path) {
        let s = svc.state();
        self.states.insert(s.last_seq, s);
        if let Ok(bytes) = std::fs::read(dir.join("snapshot.json")) {
            let snap: clarify_service::Snapshot = serde_json::from_slice(&bytes).unwrap();
            self.snapshots.insert(snap.state.last_seq, bytes);
        }
    }
}

/// A campaign mixing regenerations, skips, expired leases, resubmissions
/// and exports, observed after every call.
pub async fn mixed_scenario(h: &Harness, dir: &Path, annotators: usize) -> Recording {
    use clarify_core::model::{Phase, SkipReason};
    let svc = &h.service;
    let mut rec = Recording { states: Default::default(), snapshots: Default::default() };
    rec.observe(svc, dir);
    for i in 1..=annotators {
        for item in builtin_tutorial() {
            let req = SubmitRequest { contribution_id: item.contribution.id.clone(), units: item.gold, error_labels: Default::default() };
            svc.submit(&token(i), req).unwrap();
            rec.observe(svc, dir);
        }
    }
    let mut step = 0usize;
    loop {
        let mut progressed = false;
        for i in 1..=annotators {
            let tok = token(i);
            step += 1;
            let task = svc.next_task(&tok).unwrap();
            rec.observe(svc, dir);
            let Task::Annotate { contribution: c, phase, .. } = task else { continue };
            progressed = true;
            if step % 11 == 0 {
                let unit = first_sentence_unit(&c);
                svc.regenerate(&tok, RegenerateRequest { contribution_id: c.id.clone(), unit }).await.unwrap();
                rec.observe(svc, dir);
                h.clock.advance(61 * MINUTE);
                continue;
            }
            if step % 7 == 0 {
                svc.skip(&tok, &c.id, SkipReason::NotUnderstandable).unwrap();
                rec.observe(svc, dir);
                continue;
            }
            let mut unit = first_sentence_unit(&c);
            let existing = svc.state().drafts_of(&format!("a{i}"), &c.id).map_or(0, |d| d.len());
            let regens = if phase == Phase::Phase1 { step % 3 } else { 0 };
            for k in 0..=regens {
                if existing > 0 && (phase == Phase::Phase2 || k == 0) {
                    continue;
                }
                let req = RegenerateRequest { contribution_id: c.id.clone(), unit: unit.clone() };
                svc.regenerate(&tok, req).await.unwrap();
                rec.observe(svc, dir);
            }
            if step % 2 == 0 {
                unit.clarification = Some(format!("Financer le projet {step}."));
            }
            let req = SubmitRequest { contribution_id: c.id.clone(), units: vec![unit.clone()], error_labels: Default::default() };
            svc.submit(&tok, req.clone()).unwrap();
            rec.observe(svc, dir);
            if step % 9 == 0 {
                svc.submit(&tok, req).unwrap();
                rec.observe(svc, dir);
            }
            if step % 13 == 0 {
                svc.export(ADMIN, Default::default()).unwrap();
                rec.observe(svc, dir);
            }
            h.clock.advance(3 * MINUTE);
        }
        if !progressed {
            break;
        }
    }
    rec
}
