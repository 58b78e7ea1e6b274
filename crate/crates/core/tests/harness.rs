use std::collections::BTreeMap;

use spatial_env::harness::{replay_log, Corruption, run_selfplay, HarnessConfig, LogRecord};
use spatial_env::rewards::RuleJudge;

fn records(log: &[u8]) -> Vec<spatial_env::harness::IterationLog> {
    std::str::from_utf8(log)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| match serde_json::from_str(l).unwrap() {
            LogRecord::Iteration(r) => r,
            LogRecord::Header { .. } => panic!("second header"),
        })
        .collect()
}

#[test]
fn clean_questioner_yields_only_valid_questions() {
    let cfg = HarnessConfig::default();
    let mut log = Vec::new();
    run_selfplay(&cfg, 11, 150, &mut log, None).unwrap();
    let mut bad: BTreeMap<String, usize> = BTreeMap::new();
    for rec in records(&log) {
        for rep in &rec.representatives {
            if !rep.verdict.valid {
                let q = &rec.candidates[rep.index].output;
                *bad.entry(format!("{} {:?} {}", rec.task, rep.verdict.code, q)).or_default() += 1;
            }
        }
    }
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn full_injection_sends_every_labelled_task_to_the_explanation_branch() {
    let mut cfg = HarnessConfig::default();
    cfg.questioner.invalid_injection_rate = 1.0;
    let mut log = Vec::new();
    run_selfplay(&cfg, 5, 150, &mut log, None).unwrap();
    for rec in records(&log) {
        if !Corruption::ALL.iter().any(|c| c.applies_to(rec.task)) {
            continue;
        }
        for rep in &rec.representatives {
            assert!(!rep.verdict.valid, "{} {}", rec.task, rec.candidates[rep.index].output);
            assert!(rep.solver_rewards.iter().all(|r| r.f_explain.is_some()));
        }
    }
}

#[test]
fn replay_reproduces_rewards() {
    let mut cfg = HarnessConfig::default();
    cfg.questioner.invalid_injection_rate = 0.3;
    let mut log = Vec::new();
    run_selfplay(&cfg, 2, 60, &mut log, None).unwrap();
    let report = replay_log(&log[..], &RuleJudge).unwrap();
    assert!(report.ok(), "{:?}", report.mismatches);
    assert_eq!(report.iterations, 60);
}
