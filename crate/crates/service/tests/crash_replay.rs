mod common;

use std::collections::BTreeMap;

use clarify_service::{Event, JournalEntry, ServiceOptions};
use common::*;

const CRASH_POINTS: usize = 50;

fn config_for_replay() -> clarify_service::CampaignConfig {
    let mut cfg = config();
    cfg.overlap_fraction = 0.3;
    cfg.seed = 5;
    cfg
}

#[tokio::test]
async fn every_crash_point_replays_to_the_live_state() {
    let live = tempfile::tempdir().unwrap();
    let opts = ServiceOptions { snapshot_interval: 7, sync: true };
    let h = open(live.path(), config_for_replay(), corpus(30), 3, opts);
    let rec = mixed_scenario(&h, live.path(), 3).await;
    let journal = std::fs::read_to_string(live.path().join("journal.jsonl")).unwrap();
    let lines: Vec<&str> = journal.lines().collect();
    let last = lines.len() as u64;
    assert_eq!(rec.states.keys().copied().collect::<Vec<_>>(), (1..=last).collect::<Vec<_>>());
    assert!(last as usize > CRASH_POINTS * 2, "scenario too short: {last}");
    assert!(rec.snapshots.len() > 5);

    let points: Vec<u64> = (0..CRASH_POINTS).map(|i| 1 + (i as u64 * (last - 1)) / (CRASH_POINTS as u64 - 1)).collect();
    for (i, &p) in points.iter().enumerate() {
        let dir = tempfile::tempdir().unwrap();
        let mut body: String = lines[..p as usize].iter().map(|l| format!("{l}\n")).collect();
        if i % 2 == 1 && p < last {
            let next = lines[p as usize];
            body.push_str(&next[..next.len() / 2]);
        }
        std::fs::write(dir.path().join("journal.jsonl"), &body).unwrap();
        let snapshot = if i % 5 == 4 {
            rec.snapshots.values().next_back()
        } else {
            rec.snapshots.range(..=p).next_back().map(|(_, b)| b)
        };
        if let Some(bytes) = snapshot {
            std::fs::write(dir.path().join("snapshot.json"), bytes).unwrap();
        }
        let reopened = open(dir.path(), config_for_replay(), corpus(30), 3, opts);
        assert_eq!(reopened.service.state(), rec.states[&p], "crash point {p}");
        let kept = std::fs::read_to_string(dir.path().join("journal.jsonl")).unwrap();
        assert_eq!(kept.lines().count() as u64, p);
    }

    let final_state = &rec.states[&last];
    drop(h);
    std::fs::remove_file(live.path().join("snapshot.json")).unwrap();
    let full = open(live.path(), config_for_replay(), corpus(30), 3, opts);
    assert_eq!(&full.service.state(), final_state);
}

#[tokio::test]
async fn journal_invariants_hold() {
    let live = tempfile::tempdir().unwrap();
    let h = open(live.path(), config_for_replay(), corpus(30), 3, ServiceOptions { snapshot_interval: 0, sync: false });
    mixed_scenario(&h, live.path(), 3).await;
    let campaign = h.service.campaign();
    let entries: Vec<JournalEntry> = std::fs::read_to_string(live.path().join("journal.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();

    let mut holder: BTreeMap<String, (String, i64)> = BTreeMap::new();
    let mut expired_with_drafts = 0;
    for (i, e) in entries.iter().enumerate() {
        assert_eq!(e.seq, i as u64 + 1);
        if i > 0 {
            assert!(e.at >= entries[i - 1].at);
        }
        match &e.event {
            Event::Assigned { annotator, contribution_id, expires_at, .. } => {
                if let Some((other, until)) = holder.get(contribution_id) {
                    assert!(*until <= e.at, "{contribution_id} leased to {other} and {annotator} at once");
                    expired_with_drafts += 1;
                }
                holder.insert(contribution_id.clone(), (annotator.clone(), *expires_at));
            }
            Event::Submitted { record } | Event::Skipped { record } => {
                if holder.get(&record.contribution_id).is_some_and(|(a, _)| a == &record.annotator_id) {
                    holder.remove(&record.contribution_id);
                }
            }
            Event::Regenerated { annotator, contribution_id, au_id, attempt, backend, .. } => {
                assert_eq!(campaign.choose_backend(annotator, contribution_id, au_id, *attempt), backend);
            }
            _ => {}
        }
    }
    assert!(expired_with_drafts > 0, "scenario exercises lease expiry");

    let state = h.service.state();
    for c in &campaign.contributions {
        let annotators = state.records.get(&c.id).map_or(0, |m| m.len());
        assert_eq!(annotators, campaign.target(&c.id), "{}", c.id);
    }
    let resubmitted = state.records.values().flat_map(|m| m.values()).filter(|r| r.revision > 1).count();
    assert!(resubmitted > 0);
}

#[test]
fn foreign_campaign_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let opts = ServiceOptions { snapshot_interval: 0, sync: false };
    drop(open(dir.path(), config_for_replay(), corpus(5), 1, opts));
    let mut other = config_for_replay();
    other.overlap_fraction = 0.5;
    let campaign = clarify_service::Campaign::new(other, corpus(5), clarify_service::builtin_tutorial()).unwrap();
    let err = clarify_service::Service::open(
        dir.path(),
        campaign,
        accounts(1),
        None,
        scripted_pool(),
        std::sync::Arc::new(clarify_service::ManualClock::new(0)),
        opts,
    )
    .err()
    .unwrap();
    assert!(matches!(err, clarify_service::ServiceError::CampaignMismatch { .. }));
}
