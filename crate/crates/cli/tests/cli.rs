use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn leosim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leosim")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) {
    let out = leosim(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn offline_then_online_with_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("kepler_offline.toml");
    let (off, sp, on) = (dir.path().join("off"), dir.path().join("sp"), dir.path().join("on"));
    run_ok(&["offline", "--config", s(&cfg), "--duration", "0.2", "--out-dir", s(&off)]);
    for f in ["model.json", "target_model.json", "latency.csv", "rewards.csv", "epsilon.csv", "effective_config.toml"] {
        assert!(off.join(f).exists(), "{f}");
    }
    assert!(fs::read_to_string(off.join("latency.csv")).unwrap().lines().count() > 1);

    run_ok(&["baseline", "--config", s(&cfg), "--duration", "0.2", "--out-dir", s(&sp)]);
    let model = off.join("model.json");
    run_ok(&[
        "online", "--config", s(&cfg), "--duration", "0.2", "--model", s(&model), "--anticipation", "--baseline-dir", s(&sp),
        "--out-dir", s(&on),
    ]);
    let cmp = fs::read_to_string(on.join("comparison.csv")).unwrap();
    assert_eq!(cmp.lines().next().unwrap(), "percentile,policy_s,baseline_s,gap_s");
    assert_eq!(cmp.lines().count(), 100);
    assert!(on.join("agents.json").exists());

    // the per-agent archive feeds both a follow-up run and the cka subcommand
    let archive = on.join("agents.json");
    let again = dir.path().join("again");
    run_ok(&["online", "--config", s(&cfg), "--duration", "0.1", "--model", s(&archive), "--inference", "--out-dir", s(&again)]);
    let cka = dir.path().join("cka");
    run_ok(&["cka", "--config", s(&cfg), "--model", s(&model), "--model", s(&model), "--out-dir", s(&cka)]);
    let text = fs::read_to_string(cka.join("cka.csv")).unwrap();
    assert_eq!(text, "agent_i,agent_j,value\n0,0,1\n0,1,1\n1,1,1\n");
}

#[test]
fn overrides_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "topology", "--config", s(&config("kepler_offline.toml")), "--duration", "16", "--gateways", "5", "--seed", "40",
        "--out-dir", s(dir.path()),
    ]);
    let echo = fs::read_to_string(dir.path().join("effective_config.toml")).unwrap();
    assert!(echo.contains("horizon_s = 16.0"));
    assert!(echo.contains("count = 5"));
    assert!(echo.contains("topology = 40"));
    assert!(echo.contains("traffic = 41"));
    assert!(dir.path().join("topology.csv").exists());
    assert!(dir.path().join("packets.csv").exists());
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("kepler_offline.toml");
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(k.to_string());
        run_ok(&["baseline", "--config", s(&cfg), "--policy", "q-routing", "--duration", "0.3", "--seed", "9", "--out-dir", s(&out)]);
        outputs.push(fs::read(out.join("latency.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn zero_horizon_saves_an_untrained_model() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["offline", "--config", s(&config("kepler_offline.toml")), "--duration", "0", "--out-dir", s(dir.path())]);
    assert_eq!(fs::read_to_string(dir.path().join("latency.csv")).unwrap().lines().count(), 1);
    assert!(dir.path().join("model.json").exists());
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("kepler_offline.toml");
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "horizon_s = 1.0\nbogus = 2\n[constellation]\npreset = \"kepler\"\n").unwrap();
    let junk = dir.path().join("junk.json");
    fs::write(&junk, "{}").unwrap();
    let out_dir = dir.path().join("o");
    let cases: Vec<Vec<&str>> = vec![
        vec!["offline", "--config", s(&bad)],
        vec!["offline", "--config", "/does/not/exist.toml"],
        vec!["baseline", "--config", s(&cfg), "--policy", "flooding"],
        vec!["offline", "--config", s(&cfg), "--gateways", "0"],
        vec!["offline", "--config", s(&cfg), "--duration", "-1"],
        vec!["online", "--config", s(&cfg), "--model", s(&junk), "--out-dir", s(&out_dir)],
        vec!["online", "--config", s(&cfg), "--model", s(&junk), "--fl"],
        vec!["offline"],
        vec![],
    ];
    for args in cases {
        let out = leosim(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
        assert!(out.stdout.is_empty());
    }
    assert!(!out_dir.exists());
}

#[test]
fn fl_needs_a_cluster_period() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("kepler_offline.toml");
    let model = dir.path().join("m");
    run_ok(&["offline", "--config", s(&cfg), "--duration", "0", "--out-dir", s(&model)]);
    let m = model.join("model.json");
    let x = dir.path().join("x");
    let out = leosim(&["online", "--config", s(&cfg), "--duration", "0.1", "--model", s(&m), "--fl", "--out-dir", s(&x)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!x.exists());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cluster_period_s"));
}
