mod common;

use std::collections::BTreeSet;

use clarify_core::model::{ClarificationEvent, Phase};
use clarify_core::textmetrics::rouge_l_f1;
use clarify_service::{ExportFilter, ExportStream, ServiceOptions, Task};
use common::*;

#[tokio::test]
async fn full_campaign_meets_the_overlap_target() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config();
    cfg.overlap_fraction = 322.0 / 1231.0;
    let h = open(dir.path(), cfg, corpus(1231), 5, ServiceOptions { snapshot_interval: 500, sync: false });
    let svc = &h.service;
    for i in 1..=5 {
        pass_tutorial(svc, &token(i));
    }
    let mut n = 0;
    loop {
        let mut progressed = false;
        for i in 1..=5 {
            if let Task::Annotate { contribution, phase, .. } = svc.next_task(&token(i)).unwrap() {
                let regens = if phase == Phase::Phase1 { (n % 2) as u32 } else { 0 };
                annotate(svc, &token(i), &contribution, regens, (n % 3 == 0).then_some("Financer le projet.")).await;
                n += 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    let campaign = svc.campaign();
    let state = svc.state();
    assert_eq!(state.record_count(), 1553);
    let mut doubles = 0;
    for c in &campaign.contributions {
        let who: BTreeSet<&String> = state.records[&c.id].keys().collect();
        assert_eq!(who.len(), campaign.target(&c.id));
        doubles += usize::from(who.len() == 2);
    }
    assert_eq!(doubles, 322);

    let events: Vec<ClarificationEvent> = svc
        .export(ADMIN, ExportFilter { stream: ExportStream::Events, ..Default::default() })
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let accepted: Vec<&ClarificationEvent> = events.iter().filter(|e| e.accepted).collect();
    assert_eq!(accepted.len(), 1553);
    for e in accepted {
        assert_eq!(e.observed_quality, Some(rouge_l_f1(e.final_text.as_deref().unwrap(), e.output.as_deref().unwrap())));
    }
}
