use std::process::Command;

use anonq::harness::{
    replay_lemma1, replay_qsv, replay_qsym, verify_lemma1, verify_qsv, zqle_stats, zqle_success, Bounds, CampaignSpec, GraphSource,
    Mode, Numberings,
};

fn ring2() -> CampaignSpec {
    let mut s = CampaignSpec::new(Vec::new(), GraphSource::Fixtures(vec!["ring(2)".into()]));
    s.numberings = Numberings::Given;
    s
}

#[test]
fn corrupt_w_failures_replay_to_a_wrong_output() {
    let mut s = ring2();
    s.corrupt_w = true;
    let report = verify_qsv(&s).unwrap();
    assert!(!report.ok());
    let bad = report.failures().find(|r| r.replay.is_some()).expect("a failure with a handle");
    let h = bad.replay.as_ref().unwrap();
    assert_eq!(h.input, bad.input);
    let out = replay_qsv(h, true).unwrap();
    let expect = bad.expected.as_bool().unwrap();
    assert!(out.iter().any(|&v| v != expect), "replay gave {out:?}");
}

#[test]
fn honest_runs_pass_with_full_mass() {
    let mut s = ring2();
    s.bounds = Bounds::Offsets(vec![0, 1]);
    let report = verify_qsv(&s).unwrap();
    assert!(report.ok());
    assert_eq!(report.summary.instances, 8);
    for r in &report.records {
        assert!((r.mass - 1.0).abs() < 1e-9);
        assert!(r.replay.is_none());
    }
}

#[test]
fn lemma1_handles_replay() {
    let report = verify_lemma1(&ring2()).unwrap();
    assert!(report.ok());
    // Build a handle by hand: the correct guess at x = 10, first branch.
    let mut h = anonq::harness::Replay {
        graph: "2 2\n0 1 1 1\n1 0 1 1\n".into(),
        input: "10".into(),
        upper_bound: 2,
        variant: Some("1,2".into()),
        lanes: Vec::new(),
        seed: Some(3),
    };
    let outs = replay_lemma1(&h).unwrap();
    assert!(outs.iter().all(|o| o.verdict() == Some(true)));
    h.variant = None;
    assert!(replay_lemma1(&h).is_err());
}

#[test]
fn qsym_handles_replay_exactly() {
    let mut h = anonq::harness::Replay {
        graph: "2 2\n0 1 1 1\n1 0 1 1\n".into(),
        input: "11".into(),
        upper_bound: 2,
        variant: Some("exactly2".into()),
        lanes: Vec::new(),
        seed: None,
    };
    let law = replay_qsym(&h).unwrap();
    assert_eq!(law.len(), 1);
    assert_eq!(law[0].0, vec![true, true]);
    assert!((law[0].1 - 1.0).abs() < 1e-9);
    h.variant = Some("T0(k=1,tail=1)".into());
    h.seed = Some(9);
    assert_eq!(replay_qsym(&h).unwrap()[0].0, vec![true, true]);
    h.variant = Some("nope".into());
    assert!(replay_qsym(&h).is_err());
}

#[test]
fn sampled_election_is_sound() {
    let mut s = ring2();
    s.mode = Mode::Sample { seed: 5, trials: 400 };
    let report = zqle_stats(&s).unwrap();
    assert!(report.ok());
    let exact = zqle_stats(&ring2()).unwrap();
    let p = zqle_success(&exact.records[0]).unwrap();
    assert!((p - 0.5).abs() < 1e-9);
}

#[test]
fn branch_mode_refuses_large_graphs() {
    let s = CampaignSpec::new(Vec::new(), GraphSource::Fixtures(vec!["ring(5)".into()]));
    assert!(verify_qsv(&s).is_err());
}

fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_anonq")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap())
}

#[test]
fn cli_reports_jsonl_and_exit_codes() {
    let (code, text) = cli(&["verify", "qsv", "--n", "2"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    let last: serde_json::Value = serde_json::from_str(lines[4]).unwrap();
    assert_eq!(last["summary"]["passed"], 4);

    let (code, _) = cli(&["verify", "qsv", "--fixture", "ring(2)", "--corrupt-w"]);
    assert_eq!(code, 1);
    let (code, _) = cli(&["verify", "qsv", "--fixture", "no-such-graph"]);
    assert_eq!(code, 2);

    let (code, text) = cli(&["meter", "--bounds", "2,3", "--rings", "2"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(v["summary"]["extra"]["fit"]["max_residual"], 0.0);
    assert_eq!(v["summary"]["extra"]["fit"]["slope"], 5.0);
}
