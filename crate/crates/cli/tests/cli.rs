//! The `poolsel` binary: flags, config files, stage composition and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn poolsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poolsel")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = poolsel(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn results(out: &Path) -> PathBuf {
    out.join("results")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn small(out: &Path, seed: &str) -> Vec<String> {
    ["--out", out.to_str().unwrap(), "--seed", seed, "--n-solvers", "12", "--n-instances", "20", "--n-tests", "8"]
        .map(String::from)
        .to_vec()
}

fn args(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn same_seed_same_bytes() {
    let (a, b, c) = (scratch("det-a"), scratch("det-b"), scratch("det-c"));
    for (dir, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let mut v = vec!["run".to_string()];
        v.extend(small(dir, seed));
        ok(&args(&v));
    }
    for name in ["pools.json", "raw.jsonl", "filtered.json", "theta.json", "selection.json"] {
        let x = fs::read(results(&a).join(name)).unwrap();
        assert_eq!(x, fs::read(results(&b).join(name)).unwrap(), "{name}");
    }
    assert_ne!(fs::read(results(&a).join("theta.json")).unwrap(), fs::read(results(&c).join("theta.json")).unwrap());
}

#[test]
fn artifacts_carry_a_schema_version() {
    let out = scratch("schema");
    let mut v = vec!["run".to_string()];
    v.extend(small(&out, "1"));
    let stdout = ok(&args(&v));
    assert!(stdout.starts_with("selected "));
    for name in ["pools.json", "filtered.json", "theta.json", "selection.json"] {
        assert_eq!(read_json(&results(&out).join(name))["schema_version"], 1, "{name}");
    }
    let raw = fs::read_to_string(results(&out).join("raw.jsonl")).unwrap();
    let header: Value = serde_json::from_str(raw.lines().next().unwrap()).unwrap();
    assert_eq!(header["schema_version"], 1);
    assert_eq!(raw.lines().count(), 1 + 12 * 20);
    assert!(results(&out).join("selected_solver.json").is_file());
}

#[test]
fn stages_reproduce_a_full_run() {
    let (full, staged) = (scratch("full"), scratch("staged"));
    let mut v = vec!["run".to_string()];
    v.extend(small(&full, "3"));
    ok(&args(&v));
    for stage in ["generate", "evaluate", "filter", "characterize", "select"] {
        let mut v = vec!["stage".to_string(), stage.to_string()];
        v.extend(small(&staged, "3"));
        ok(&args(&v));
    }
    for name in ["pools.json", "raw.jsonl", "filtered.json", "theta.json", "selection.json"] {
        let x = fs::read(results(&full).join(name)).unwrap();
        assert_eq!(x, fs::read(results(&staged).join(name)).unwrap(), "{name}");
    }
}

#[test]
fn stage_without_inputs_names_the_missing_artifact() {
    let out = scratch("missing");
    let o = poolsel(&["stage", "select", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("missing artifact") && err.contains("pools.json"), "{err}");
}

#[test]
fn bench_requires_precomputed_results() {
    let out = scratch("bench-missing");
    let o = poolsel(&["bench", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no precomputed results"));
}

#[test]
fn bench_prints_and_saves_the_grid() {
    let out = scratch("bench");
    let o = out.to_str().unwrap();
    ok(&["run", "--out", o, "--n-solvers", "30", "--n-instances", "30", "--n-tests", "10"]);
    let stdout = ok(&["bench", "--out", o, "--reps", "30", "--grid", "1,5,20,50", "--seed", "2"]);
    let saved = fs::read_to_string(results(&out).join("bench.csv")).unwrap();
    assert_eq!(stdout, saved);
    let rows: Vec<&str> = saved.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("1,30,10,30,"));
    assert!(rows[3].starts_with("50,30,10,30,"));

    let explicit = ok(&["bench", "--out", o, "--reps", "5", "--grid", "4x6x3", "--csv", out.join("g.csv").to_str().unwrap()]);
    assert!(explicit.lines().nth(1).unwrap().starts_with("4,6,3,5,"));
}

#[test]
fn max_iters_caps_the_fit() {
    let out = scratch("iters");
    let mut v = vec!["run".to_string(), "--max-iters".to_string(), "2".to_string()];
    v.extend(small(&out, "5"));
    ok(&args(&v));
    let theta = read_json(&results(&out).join("theta.json"));
    assert_eq!(theta["diagnostics"]["iterations"], 2);
    assert_eq!(theta["diagnostics"]["loglik_trace"].as_array().unwrap().len(), 3);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = scratch("config");
    let out = dir.join("out");
    let cfg = dir.join("poolsel.toml");
    fs::write(
        &cfg,
        format!(
            "seed = 11\nn_solvers = 9\nn_instances = 14\nn_tests = 5\nsource = \"synthetic\"\n\
             p_miss = 250\np_fail = \"auto\"\nout = {:?}\n\n[endpoint]\nurl = \"http://127.0.0.1:9/\"\nmodel = \"m\"\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    ok(&["run", "--config", c, "--n-tests", "6"]);
    let pools = read_json(&results(&out).join("pools.json"));
    assert_eq!(pools["seed"], 11);
    assert_eq!(pools["pools"]["solvers"].as_array().unwrap().len(), 9);
    assert_eq!(pools["pools"]["instances"].as_array().unwrap().len(), 14);
    assert_eq!(pools["pools"]["tests"].as_array().unwrap().len(), 6);
    let sel = read_json(&results(&out).join("selection.json"));
    assert_eq!(sel["report"]["p_miss"], 250.0);
    assert_eq!(sel["config"]["p_fail"], "auto");

    fs::write(&cfg, "seeds = 3\n").unwrap();
    let o = poolsel(&["run", "--config", c]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("seeds"));
}

#[test]
fn bad_penalty_is_rejected() {
    let out = scratch("penalty");
    let o = poolsel(&["run", "--out", out.to_str().unwrap(), "--p-miss", "lots"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("penalty"));
}

#[test]
fn nothing_to_select_exits_with_two() {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/wscp");
    let dir = scratch("all-broken");
    for sub in ["solvers", "instances", "tests"] {
        fs::create_dir_all(dir.join(sub)).unwrap();
    }
    fs::copy(corpus.join("runner.py"), dir.join("runner.py")).unwrap();
    fs::copy(corpus.join("solvers/crasher.py"), dir.join("solvers/crasher.py")).unwrap();
    fs::copy(corpus.join("instances/02_single.json"), dir.join("instances/02_single.json")).unwrap();
    fs::copy(corpus.join("tests/validator.py"), dir.join("tests/validator.py")).unwrap();
    let o = poolsel(&["run", "--fixtures-dir", dir.to_str().unwrap(), "--out", dir.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("interpretable"));
}

#[test]
fn remote_source_needs_an_endpoint() {
    let out = scratch("remote");
    let o = poolsel(&["run", "--source", "remote", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("endpoint url"));
}
