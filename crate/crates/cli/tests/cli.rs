use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn seqnas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqnas"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout(o)).unwrap()
}

const ALL_MB3E1: &str = "path=AABB@1,3,5,7;ops=mb3e1,mb3e1,mb3e1,mb3e1,mb3e1,mb3e1,mb3e1,mb3e1";
const ALL_MB5E6: &str = "path=AABB@1,3,5,7;ops=mb5e6,mb5e6,mb5e6,mb5e6,mb5e6,mb5e6,mb5e6,mb5e6";

#[test]
fn enumerate_counts_and_lists() {
    assert_eq!(
        stdout(&seqnas(&["enumerate", "--L", "15", "--a", "2", "--b", "3"])),
        "30030\n"
    );
    let both = stdout(&seqnas(&[
        "enumerate",
        "--L",
        "15",
        "--a",
        "2",
        "--b",
        "3",
        "--archs",
    ]));
    assert_eq!(both, "30030\n142569272143588290\n");
    let list = stdout(&seqnas(&[
        "enumerate",
        "--L",
        "5",
        "--a",
        "2",
        "--b",
        "3",
        "--list",
    ]));
    assert_eq!(list.lines().count(), 10);
    assert!(list.lines().all(|l| l.ends_with("@1,2,3,4,5")));
}

#[test]
fn enumerate_rejects_an_invalid_space() {
    let o = seqnas(&["enumerate", "--L", "4", "--a", "2", "--b", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("a + b"));
}

#[test]
fn cost_reports_documented_keys() {
    let small = json(&seqnas(&["cost", ALL_MB3E1]));
    let big = json(&seqnas(&["cost", ALL_MB5E6]));
    for v in [&small, &big] {
        assert_eq!(v["per_layer"].as_array().unwrap().len(), 8);
        let sum: u64 = v["per_layer"]
            .as_array()
            .unwrap()
            .iter()
            .map(|l| l["macs"].as_u64().unwrap())
            .sum();
        assert_eq!(v["total_macs"].as_u64().unwrap(), sum);
        assert!(v["total_params"].as_u64().is_some());
    }
    assert!(big["total_macs"].as_u64() > small["total_macs"].as_u64());
}

#[test]
fn cost_of_all_skip_is_zero() {
    // Stride-free, channel-preserving space where skip is legal everywhere.
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("space.cfg");
    fs::write(
        &cfg,
        "[space]\nL = 3\na = 0\nb = 0\nc1 = 4\nc2 = 4\nstem_channels = 8\nchannels =\n",
    )
    .unwrap();
    let o = seqnas(&[
        "cost",
        "path=@;ops=skip,skip,skip",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(json(&o)["total_macs"], 0);
}

#[test]
fn cost_rejects_bad_text() {
    let o = seqnas(&["cost", "path=AABB@1,3,5,7;ops=mb3e1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gendata_then_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d.bin");
    stdout(&seqnas(&[
        "gendata",
        "--seed",
        "1",
        "--n",
        "100",
        "--out",
        data.to_str().unwrap(),
    ]));
    let bytes = fs::read(&data).unwrap();
    assert_eq!(&bytes[..4], b"SQDS");
    let n = u32::from_le_bytes(bytes[24..28].try_into().unwrap());
    assert_eq!(n, 100);
    let arch = tmp.path().join("arch.txt");
    fs::write(&arch, format!("{ALL_MB3E1}\n")).unwrap();
    let rep = json(&seqnas(&[
        "eval",
        "--arch",
        arch.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--epochs",
        "1",
    ]));
    for key in ["val_loss", "seq_accuracy", "frame_accuracy"] {
        assert!(rep[key].as_f64().unwrap().is_finite(), "{key}");
    }
    assert_eq!(rep["train_curve"].as_array().unwrap().len(), 1);
}

#[test]
fn search_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &Path| {
        stdout(&seqnas(&[
            "search",
            "--backend",
            "surrogate",
            "--seed",
            "7",
            "--output-dir",
            dir.to_str().unwrap(),
        ]));
        fs::read(dir.join("result.json")).unwrap()
    };
    let a = run(&tmp.path().join("a"));
    let b = run(&tmp.path().join("a"));
    assert_eq!(a, b);
    let c = run(&tmp.path().join("c"));
    assert_eq!(a, c);
}

#[test]
fn search_modes_and_random() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let s1 = json(&seqnas(&["search", "--step1-only", "--output-dir", dir]));
    assert_eq!(s1["scores"].as_array().unwrap().len(), 6);
    let s2 = json(&seqnas(&[
        "search",
        "--step2-only",
        "--path",
        "BBAA@1,3,5,7",
        "--output-dir",
        dir,
    ]));
    assert_eq!(s2["best_path"], "BBAA@1,3,5,7");
    let r = json(&seqnas(&[
        "random",
        "--n",
        "3",
        "--set",
        "reg.beta=0.3",
        "--output-dir",
        dir,
    ]));
    assert_eq!(r["scores"].as_array().unwrap().len(), 3);
}

#[test]
fn failures_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let missing = seqnas(&[
        "search",
        "--config",
        "/nonexistent/run.cfg",
        "--output-dir",
        dir,
    ]);
    assert_eq!(missing.status.code(), Some(2));
    let unknown = seqnas(&["search", "--set", "run.colour=blue", "--output-dir", dir]);
    assert_eq!(unknown.status.code(), Some(2));
    let infeasible = seqnas(&["search", "--set", "run.budget_macs=10", "--output-dir", dir]);
    assert_eq!(infeasible.status.code(), Some(3));
    let diverge = seqnas(&[
        "search",
        "--backend",
        "neural",
        "--step1-only",
        "--set",
        "optim.weight_lr=1e30",
        "--set",
        "data.n=40",
        "--set",
        "run.step1_epochs=1",
        "--output-dir",
        dir,
    ]);
    assert_eq!(
        diverge.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&diverge.stderr)
    );
}
