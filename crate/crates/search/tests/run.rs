use std::fs;

use seqnas_core::SpaceSpec;
use seqnas_search::{execute, parse_path, PathResult, RunConfig, RunMode, RunOutput, SearchResult};

fn config(dir: &std::path::Path, extra: &[&str]) -> RunConfig {
    let mut ov = vec![format!("run.output_dir={}", dir.display())];
    ov.extend(extra.iter().map(|s| s.to_string()));
    RunConfig::parse_with_overrides("", &ov).unwrap()
}

#[test]
fn two_step_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), &[]);
    let out = execute(&cfg, &RunMode::TwoStep).unwrap();
    let RunOutput::Search(res) = out else {
        panic!("expected a search result")
    };
    for f in [
        "config.snapshot",
        "step1_scores.jsonl",
        "step2_history.jsonl",
        "result.json",
        "timing.json",
    ] {
        assert!(tmp.path().join(f).is_file(), "{f}");
    }
    let written: SearchResult =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(written.best_arch, res.best_arch);
    assert_eq!(written.cost, res.cost);
    let rows = fs::read_to_string(tmp.path().join("step1_scores.jsonl")).unwrap();
    assert_eq!(rows.lines().count(), 6);
    let hist = fs::read_to_string(tmp.path().join("step2_history.jsonl")).unwrap();
    assert!(hist
        .lines()
        .all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
    let timing: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("timing.json")).unwrap()).unwrap();
    assert!(timing["wall_time_secs"].as_f64().unwrap() >= 0.0);
}

#[test]
fn snapshot_reproduces_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        &["run.seed=9", "reg.beta=0.3", "surrogate.w_path=0.2"],
    );
    execute(&cfg, &RunMode::Step1Only).unwrap();
    let snap = fs::read_to_string(tmp.path().join("config.snapshot")).unwrap();
    assert_eq!(RunConfig::parse(&snap).unwrap(), cfg);
}

#[test]
fn step1_only_writes_a_path_result() {
    let tmp = tempfile::tempdir().unwrap();
    execute(&config(tmp.path(), &[]), &RunMode::Step1Only).unwrap();
    let r: PathResult =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(r.scores.len(), 6);
    assert!(!tmp.path().join("step2_history.jsonl").exists());
}

#[test]
fn step2_only_uses_the_given_path() {
    let tmp = tempfile::tempdir().unwrap();
    let path = parse_path("BABA@1,3,5,7", &SpaceSpec::desk()).unwrap();
    let out = execute(&config(tmp.path(), &[]), &RunMode::Step2Only(path)).unwrap();
    let RunOutput::Search(res) = out else {
        panic!("expected a search result")
    };
    assert_eq!(res.best_path, "BABA@1,3,5,7");
    assert!(res.scores.is_empty());
}

#[test]
fn random_mode_writes_its_scores() {
    let tmp = tempfile::tempdir().unwrap();
    execute(
        &config(tmp.path(), &["run.random_candidates=4"]),
        &RunMode::Random,
    )
    .unwrap();
    let rows = fs::read_to_string(tmp.path().join("random_scores.jsonl")).unwrap();
    assert_eq!(rows.lines().count(), 4);
}

#[test]
fn neural_step2_saves_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        &[
            "run.backend=neural",
            "data.n=40",
            "run.batch=8",
            "run.step2_epochs=1",
        ],
    );
    let path = parse_path("AABB@1,3,5,7", &cfg.run.space).unwrap();
    execute(&cfg, &RunMode::Step2Only(path)).unwrap();
    let ck = tmp.path().join("checkpoints");
    assert!(ck.join("supernet.bin").is_file());
    assert!(ck.join("supernet.json").is_file());
    let hist = fs::read_to_string(tmp.path().join("step2_history.jsonl")).unwrap();
    assert_eq!(hist.lines().count(), 4);
}

#[test]
fn path_text_round_trips_and_rejects_bad_input() {
    let space = SpaceSpec::desk();
    let p = parse_path("ABBA@1,2,5,8", &space).unwrap();
    assert_eq!(p.to_string(), "ABBA@1,2,5,8");
    for bad in [
        "ABBA",
        "ABBA@1,2,5",
        "AAAA@1,2,3,4",
        "ABBA@1,x,5,8",
        "ABBA@0,2,5,8",
    ] {
        assert!(parse_path(bad, &space).is_err(), "{bad}");
    }
}
