mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use clarify_core::model::{
    ArgumentativeUnit, CharSpan, ClarificationEvent, ErrorLabel, LabeledSegment, Phase, RecordStatus, SegmentType,
    SkipReason, Violation,
};
use clarify_core::quality::{fit_mle, FitConfig, LikelihoodForm, QualityDataset};
use clarify_core::textmetrics::rouge_l_f1;
use clarify_gateway::{ChatBackend, FnBackend, GatewayError};
use clarify_service::{
    Event, ExportFilter, ExportStream, RegenerateRequest, ServiceError, ServiceOptions, SubmitRequest, SubmitResponse,
    Task,
};
use common::*;

fn fast() -> ServiceOptions {
    ServiceOptions { snapshot_interval: 0, sync: false }
}

fn journal_events(dir: &std::path::Path) -> Vec<Event> {
    std::fs::read_to_string(dir.join("journal.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<clarify_service::JournalEntry>(l).unwrap().event)
        .collect()
}

#[tokio::test]
async fn tutorial_gates_annotation() {
    let dir = tempfile::tempdir().unwrap();
    let h = open(dir.path(), config(), corpus(4), 1, fast());
    let svc = &h.service;
    let tok = token(1);

    assert!(matches!(svc.next_task("nope"), Err(ServiceError::Unauthenticated)));
    let Task::Tutorial { index, of, contribution } = svc.next_task(&tok).unwrap() else { panic!("tutorial expected") };
    assert_eq!((index, of), (1, 3));
    assert_eq!(contribution.id, "tutorial-1");

    let c = svc.campaign().contributions[0].clone();
    let regen = RegenerateRequest { contribution_id: c.id.clone(), unit: first_sentence_unit(&c) };
    assert!(matches!(svc.regenerate(&tok, regen).await, Err(ServiceError::TutorialPending)));
    assert!(matches!(svc.skip(&tok, &c.id, SkipReason::TooLong), Err(ServiceError::TutorialPending)));

    let wrong = SubmitRequest { contribution_id: "tutorial-1".into(), units: vec![], error_labels: BTreeMap::new() };
    let SubmitResponse::Tutorial { passed, f1, remaining, .. } = svc.submit(&tok, wrong).unwrap() else { panic!() };
    assert!(!passed && f1 == 0.0 && remaining == 3);
    assert!(matches!(svc.next_task(&tok).unwrap(), Task::Tutorial { index: 1, .. }));

    pass_tutorial(svc, &tok);
    let p = svc.login(&tok).unwrap();
    assert!(p.tutorial_passed);
    assert_eq!((p.tutorial_validated, p.tutorial_total), (3, 3));
    assert!(matches!(svc.next_task(&tok).unwrap(), Task::Annotate { .. }));
}

#[tokio::test]
async fn regeneration_logs_rejected_attempts_and_unedited_text_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config();
    cfg.phase2_start_fraction = 1.0;
    let h = open(dir.path(), cfg, corpus(3), 1, fast());
    let svc = &h.service;
    let tok = token(1);
    pass_tutorial(svc, &tok);
    let task = svc.next_task(&tok).unwrap();
    let c = leased(&task).clone();
    let unit = first_sentence_unit(&c);
    let req = RegenerateRequest { contribution_id: c.id.clone(), unit: unit.clone() };

    let first = svc.regenerate(&tok, req.clone()).await.unwrap();
    assert_eq!(first.attempt, 1);
    let second = svc.regenerate(&tok, req).await.unwrap();
    assert_eq!(second.attempt, 2);
    let superseded = journal_events(dir.path())
        .into_iter()
        .find_map(|e| match e {
            Event::Regenerated { attempt: 2, superseded, .. } => superseded,
            _ => None,
        })
        .unwrap();
    assert_eq!((superseded.attempt_index, superseded.accepted), (1, false));
    assert_eq!(superseded.output.as_deref(), Some(first.text.as_str()));
    assert_eq!(superseded.backend, first.backend);

    let Task::Annotate { drafts, .. } = svc.next_task(&tok).unwrap() else { panic!() };
    assert_eq!(drafts["au1"].attempt, 2);

    let labels = BTreeMap::from([("au1".to_string(), BTreeSet::from([ErrorLabel::Misformulation]))]);
    let resp = svc
        .submit(&tok, SubmitRequest { contribution_id: c.id.clone(), units: vec![unit], error_labels: labels })
        .unwrap();
    let SubmitResponse::Accepted { record, revision } = resp else { panic!() };
    assert_eq!(revision, 1);
    assert_eq!(record.phase, Phase::Phase1);
    let ks: Vec<(u32, bool)> = record.events.iter().map(|e| (e.attempt_index, e.accepted)).collect();
    assert_eq!(ks, vec![(1, false), (2, true)]);
    let accepted = &record.events[1];
    assert_eq!(accepted.observed_quality, Some(1.0));
    assert_eq!(accepted.final_text.as_deref(), Some(second.text.as_str()));
    assert!(accepted.error_labels.contains(&ErrorLabel::Misformulation));
    assert_eq!(record.units[0].source_model.as_deref(), Some(second.backend.as_str()));
    assert_eq!(svc.login(&tok).unwrap().completed, 1);
}

#[tokio::test]
async fn phase_two_keeps_the_first_clarification() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config();
    cfg.phase2_start_fraction = 0.0;
    let h = open(dir.path(), cfg, corpus(2), 1, fast());
    let svc = &h.service;
    let tok = token(1);
    pass_tutorial(svc, &tok);
    let task = svc.next_task(&tok).unwrap();
    let Task::Annotate { phase, .. } = &task else { panic!() };
    assert_eq!(*phase, Phase::Phase2);
    let c = leased(&task).clone();
    let req = RegenerateRequest { contribution_id: c.id.clone(), unit: first_sentence_unit(&c) };
    svc.regenerate(&tok, req.clone()).await.unwrap();
    let before = journal_events(dir.path()).len();
    assert!(matches!(svc.regenerate(&tok, req).await, Err(ServiceError::Policy(_))));
    assert_eq!(journal_events(dir.path()).len(), before);

    let mut unit = first_sentence_unit(&c);
    unit.clarification = Some("Financer le projet.".into());
    let SubmitResponse::Accepted { record, .. } = svc
        .submit(&tok, SubmitRequest { contribution_id: c.id.clone(), units: vec![unit], error_labels: BTreeMap::new() })
        .unwrap()
    else {
        panic!()
    };
    assert_eq!(record.events.len(), 1);
    let e = &record.events[0];
    let expected = rouge_l_f1("Financer le projet.", e.output.as_deref().unwrap());
    assert_eq!(e.observed_quality, Some(expected));
    assert!(expected < 1.0);
}

#[tokio::test]
async fn invalid_records_are_rejected_with_their_violations() {
    let dir = tempfile::tempdir().unwrap();
    let h = open(dir.path(), config(), corpus(2), 1, fast());
    let svc = &h.service;
    let tok = token(1);
    pass_tutorial(svc, &tok);
    let c = leased(&svc.next_task(&tok).unwrap()).clone();
    let mut unit = first_sentence_unit(&c);
    svc.regenerate(&tok, RegenerateRequest { contribution_id: c.id.clone(), unit: unit.clone() }).await.unwrap();

    unit.segments.push(LabeledSegment::new(unit.spans[0].end + 1, unit.spans[0].end + 5, SegmentType::Premise));
    let err = svc
        .submit(&tok, SubmitRequest { contribution_id: c.id.clone(), units: vec![unit.clone()], error_labels: BTreeMap::new() })
        .unwrap_err();
    let ServiceError::Violations(v) = err else { panic!("{err:?}") };
    assert!(v.iter().any(|x| matches!(x, Violation::SegmentNotContained { unit: 0, segment: 1, .. })));

    let unknown = ArgumentativeUnit::new("au9", vec![CharSpan::new(0, 3)], vec![LabeledSegment::new(0, 3, SegmentType::Statement)]);
    let err = svc
        .submit(&tok, SubmitRequest { contribution_id: c.id.clone(), units: vec![unknown], error_labels: BTreeMap::new() })
        .unwrap_err();
    assert!(matches!(err, ServiceError::BadRequest(_)));
    assert!(svc.state().leases.contains_key(&c.id), "a rejected submission keeps the lease");
}

#[tokio::test]
async fn skipping_persists_and_releases() {
    let dir = tempfile::tempdir().unwrap();
    let h = open(dir.path(), config(), corpus(2), 1, fast());
    let svc = &h.service;
    let tok = token(1);
    pass_tutorial(svc, &tok);
    let c = leased(&svc.next_task(&tok).unwrap()).clone();
    let rec = svc.skip(&tok, &c.id, SkipReason::HateSpeech).unwrap();
    assert_eq!(rec.status, RecordStatus::Skipped);
    assert_eq!(rec.skip_reason, Some(SkipReason::HateSpeech));
    assert!(svc.state().leases.is_empty());
    assert_eq!(svc.my_annotations(&tok).unwrap(), vec![rec]);
    let next = leased(&svc.next_task(&tok).unwrap()).clone();
    assert_ne!(next.id, c.id);
}

#[tokio::test]
async fn campaign_runs_dry_and_respects_quota() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config();
    cfg.overlap_fraction = 0.5;
    let h = open(dir.path(), cfg, corpus(6), 3, fast());
    let svc = &h.service;
    for i in 1..=3 {
        pass_tutorial(svc, &token(i));
    }
    assert_eq!(svc.campaign().double_count(), 3);
    loop {
        let mut progressed = false;
        for i in 1..=3 {
            let tok = token(i);
            if let Task::Annotate { contribution, .. } = svc.next_task(&tok).unwrap() {
                annotate(svc, &tok, &contribution, 0, None).await;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    let state = svc.state();
    assert_eq!(state.record_count(), 9);
    for c in &svc.campaign().contributions {
        assert_eq!(state.submitted(&c.id), svc.campaign().target(&c.id));
    }
    for i in 1..=3 {
        assert_eq!(svc.next_task(&token(i)).unwrap(), Task::None);
    }

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config();
    cfg.quota = Some(1);
    let h = open(dir.path(), cfg, corpus(4), 1, fast());
    pass_tutorial(&h.service, &token(1));
    let c = leased(&h.service.next_task(&token(1)).unwrap()).clone();
    annotate(&h.service, &token(1), &c, 0, None).await;
    assert_eq!(h.service.next_task(&token(1)).unwrap(), Task::None);
}

#[tokio::test]
async fn expired_leases_return_to_the_pool_and_keep_drafts() {
    let dir = tempfile::tempdir().unwrap();
    let h = open(dir.path(), config(), corpus(1), 2, fast());
    let svc = &h.service;
    pass_tutorial(svc, &token(1));
    pass_tutorial(svc, &token(2));
    let c = leased(&svc.next_task(&token(1)).unwrap()).clone();
    let unit = first_sentence_unit(&c);
    svc.regenerate(&token(1), RegenerateRequest { contribution_id: c.id.clone(), unit: unit.clone() }).await.unwrap();
    assert_eq!(svc.next_task(&token(2)).unwrap(), Task::None, "leased to one annotator at a time");

    h.clock.advance(59 * MINUTE);
    assert_eq!(svc.next_task(&token(2)).unwrap(), Task::None);
    h.clock.advance(MINUTE);
    let again = leased(&svc.next_task(&token(2)).unwrap()).clone();
    assert_eq!(again.id, c.id);

    let stale = svc
        .submit(&token(1), SubmitRequest { contribution_id: c.id.clone(), units: vec![unit], error_labels: BTreeMap::new() })
        .unwrap_err();
    assert!(matches!(stale, ServiceError::Conflict(_)));
    let state = svc.state();
    assert_eq!(state.drafts_of("a1", &c.id).unwrap()["au1"].attempt, 1);
    assert_eq!(state.leases[&c.id].annotator, "a2");
}

#[tokio::test]
async fn backend_failure_is_retriable_and_unlogged() {
    let dir = tempfile::tempdir().unwrap();
    let failing: Vec<Arc<dyn ChatBackend>> = BACKENDS
        .iter()
        .map(|n| {
            Arc::new(FnBackend::new(*n, |_| Err(GatewayError::Backend { backend: "x".into(), message: "down".into() })))
                as Arc<dyn ChatBackend>
        })
        .collect();
    let h = open_with_pool(dir.path(), config(), corpus(1), 1, fast(), pool_of(failing));
    let svc = &h.service;
    pass_tutorial(svc, &token(1));
    let c = leased(&svc.next_task(&token(1)).unwrap()).clone();
    let before = journal_events(dir.path()).len();
    let err = svc
        .regenerate(&token(1), RegenerateRequest { contribution_id: c.id.clone(), unit: first_sentence_unit(&c) })
        .await
        .unwrap_err();
    assert!(matches!(err, ServiceError::Backend(_)));
    assert_eq!(journal_events(dir.path()).len(), before);
    assert!(svc.state().drafts.is_empty());
}

#[tokio::test]
async fn export_is_admin_only_ordered_and_auditable() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config();
    cfg.overlap_fraction = 1.0;
    cfg.phase2_start_fraction = 0.5;
    let h = open(dir.path(), cfg, corpus(8), 2, fast());
    let svc = &h.service;

    let empty = ExportFilter::default();
    assert_eq!(svc.export(ADMIN, empty.clone()).unwrap(), "");
    assert_eq!(svc.export(ADMIN, ExportFilter { stream: ExportStream::Events, ..empty.clone() }).unwrap(), "");
    assert!(matches!(svc.export(&token(1), empty.clone()), Err(ServiceError::Forbidden)));
    assert!(matches!(svc.export("nobody", empty.clone()), Err(ServiceError::Unauthenticated)));

    pass_tutorial(svc, &token(1));
    pass_tutorial(svc, &token(2));
    let first = leased(&svc.next_task(&token(1)).unwrap()).clone();
    annotate(svc, &token(1), &first, 1, Some("Financer le projet.")).await;
    let records = svc.export(ADMIN, empty.clone()).unwrap();
    assert_eq!(records.lines().count(), 1);
    let events = svc.export(ADMIN, ExportFilter { stream: ExportStream::Events, ..empty.clone() }).unwrap();
    assert_eq!(events.lines().count(), 2);

    let edits = ["Financer le projet.", "Il faut financer ce projet.", "Aider le quartier."];
    let mut round = 0;
    loop {
        let mut progressed = false;
        for i in [2, 1] {
            if let Task::Annotate { contribution, phase, .. } = svc.next_task(&token(i)).unwrap() {
                let regens = if phase == Phase::Phase1 { (round % 3) as u32 } else { 0 };
                annotate(svc, &token(i), &contribution, regens, Some(edits[round % 3])).await;
                round += 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    assert_eq!(svc.state().record_count(), 16);

    let records: Vec<clarify_core::model::AnnotationRecord> =
        svc.export(ADMIN, empty.clone()).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let keys: Vec<(String, String)> =
        records.iter().map(|r| (r.contribution_id.clone(), r.annotator_id.clone())).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(keys.len(), 16);

    let events: Vec<ClarificationEvent> = svc
        .export(ADMIN, ExportFilter { stream: ExportStream::Events, ..empty.clone() })
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let flattened: Vec<ClarificationEvent> = records.iter().flat_map(|r| r.events.clone()).collect();
    assert_eq!(events, flattened);
    for e in events.iter().filter(|e| e.accepted) {
        let recomputed = rouge_l_f1(e.final_text.as_deref().unwrap(), e.output.as_deref().unwrap());
        assert_eq!(e.observed_quality, Some(recomputed));
    }

    let phase2 = svc.export(ADMIN, ExportFilter { phase: Some(Phase::Phase2), ..empty.clone() }).unwrap();
    assert_eq!(phase2.lines().count(), 8);
    let mine = svc.export(ADMIN, ExportFilter { annotator: Some("a1".into()), ..empty.clone() }).unwrap();
    assert_eq!(mine.lines().count(), 8);

    let data = QualityDataset::from_events(&events).unwrap();
    assert!(data.max_attempt() >= 2);
    let fit = fit_mle(&data, &FitConfig::default(), LikelihoodForm::StandardCensored).unwrap();
    assert!(!fit.backends.is_empty());
    assert!(fit.backends.iter().filter_map(|b| b.mean).all(|m| m > 0.0 && m < 1.0));

    let (progress, all) = svc.admin_annotations(ADMIN).unwrap();
    assert_eq!((progress.expected_annotations, progress.submitted, all.len()), (16, 16, 16));
}

#[tokio::test]
async fn resubmission_supersedes_the_previous_record() {
    let dir = tempfile::tempdir().unwrap();
    let h = open(dir.path(), config(), corpus(2), 1, fast());
    let svc = &h.service;
    pass_tutorial(svc, &token(1));
    let c = leased(&svc.next_task(&token(1)).unwrap()).clone();
    annotate(svc, &token(1), &c, 0, None).await;
    let mut unit = first_sentence_unit(&c);
    unit.clarification = Some("Financer le projet.".into());
    let SubmitResponse::Accepted { revision, record } = svc
        .submit(&token(1), SubmitRequest { contribution_id: c.id.clone(), units: vec![unit], error_labels: BTreeMap::new() })
        .unwrap()
    else {
        panic!()
    };
    assert_eq!(revision, 2);
    assert_eq!(svc.login(&token(1)).unwrap().completed, 1);
    let exported = svc.export(ADMIN, ExportFilter::default()).unwrap();
    assert_eq!(exported.lines().count(), 1);
    assert_eq!(serde_json::from_str::<clarify_core::model::AnnotationRecord>(exported.trim()).unwrap(), record);
}

#[test]
fn overlap_fraction_selects_an_exact_double_set() {
    let mut cfg = config();
    cfg.overlap_fraction = 322.0 / 1231.0;
    let campaign = clarify_service::Campaign::new(cfg.clone(), corpus(1231), clarify_service::builtin_tutorial()).unwrap();
    assert_eq!(campaign.double_count(), 322);
    assert_eq!(campaign.expected_annotations(), 1553);
    let phase2 = campaign.contributions.iter().filter(|c| campaign.phase_of(&c.id) == Phase::Phase2).count();
    assert_eq!(phase2, 1231 - 923);

    let again = clarify_service::Campaign::new(cfg.clone(), corpus(1231), clarify_service::builtin_tutorial()).unwrap();
    assert_eq!(again.fingerprint(), campaign.fingerprint());
    cfg.seed = 1;
    let reseeded = clarify_service::Campaign::new(cfg, corpus(1231), clarify_service::builtin_tutorial()).unwrap();
    let differs = campaign.contributions.iter().any(|c| campaign.is_double(&c.id) != reseeded.is_double(&c.id));
    assert!(differs);
    assert_eq!(reseeded.double_count(), 322);
}
