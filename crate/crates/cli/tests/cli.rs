use depforge_core::workbench::{load_results, ResultData, Status};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn corpus(file: &str) -> String {
    corpus_dir().join(file).display().to_string()
}

fn depforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depforge")).args(args).env_remove("DEPFORGE_SEED").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `(file, argv, expected exit code)` for every `// expect:` line of the
/// top-level corpus files. The model path is inserted after the subcommand.
pub fn annotations() -> Vec<(String, Vec<String>, i32)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "dep"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(&f).unwrap();
        for line in text.lines() {
            let Some(rest) = line.trim().strip_prefix("// expect:") else { continue };
            let (cmd, want) = rest.rsplit_once("=>").unwrap();
            let mut argv = shlex::split(cmd.trim()).unwrap();
            argv.insert(1, f.display().to_string());
            out.push((f.file_name().unwrap().to_string_lossy().into_owned(), argv, want.trim().parse().unwrap()));
        }
    }
    out
}

#[test]
fn corpus_exit_codes() {
    let cases = annotations();
    assert!(cases.len() >= 40, "{}", cases.len());
    let mut failures = Vec::new();
    for (file, argv, want) in &cases {
        let args: Vec<&str> = argv.iter().map(|s| s.as_str()).collect();
        let o = depforge(&args);
        if code(&o) != *want {
            failures.push(format!("{file}: {} => {} (want {want})\n{}", argv.join(" "), code(&o), stderr(&o)));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn every_subcommand_is_exercised_by_the_corpus() {
    let cases = annotations();
    for sub in [
        "validate",
        "instantiate",
        "check-ltl",
        "check-refinement",
        "verify",
        "fta",
        "fmea",
        "reliability",
        "tradeoff",
        "export-dot",
    ] {
        assert!(cases.iter().any(|(_, a, _)| a[0] == sub), "{sub}");
    }
    for c in 0..=2 {
        assert!(cases.iter().any(|(_, _, w)| *w == c), "exit code {c}");
    }
}

#[test]
fn fta_writes_the_tree_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ft.json");
    let o = depforge(&[
        "fta",
        &corpus("redundant_pair.dep"),
        "--tle",
        "all_failed",
        "--max-order",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let file = load_results(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(file.results.len(), 1);
    let r = &file.results[0];
    assert!(r.invocation.as_deref().unwrap().starts_with("depforge fta "));
    let ResultData::FaultTree { tree } = &r.data else { panic!("{r:?}") };
    assert_eq!(tree.gates.len(), 1);
    assert_eq!(tree.gates[0].inputs, ["Gen1.fault", "Gen2.fault"]);
    let p = tree.top.probability.unwrap();
    assert!((p - 0.05 * 0.05).abs() < 1e-15, "{p}");
}

#[test]
fn broken_refinement_prints_a_counterexample() {
    let o = depforge(&["check-refinement", &corpus("broken_chain.dep"), "--component", "System"]);
    assert_eq!(code(&o), 1);
    let s = stdout(&o);
    assert!(s.contains("Violated"), "{s}");
    assert!(s.contains("counterexample"), "{s}");
    assert!(s.contains("loop start"), "{s}");
}

#[test]
fn broken_model_lists_diagnostics() {
    let o = depforge(&["validate", &corpus("broken.dep")]);
    assert_eq!(code(&o), 2);
    let e = stderr(&o);
    assert!(e.matches("error:").count() >= 2, "{e}");
    assert!(e.contains("broken.dep:"), "{e}");
}

#[test]
fn usage_errors_exit_with_2() {
    for args in [
        &["validate", "--no-such-flag", "x.dep"][..],
        &["no-such-command"],
        &["fta", "x.dep"],
        &["export-dot", "x.dep", "--kind", "pie"],
    ] {
        let o = depforge(args);
        assert_eq!(code(&o), 2, "{args:?}");
        assert!(stderr(&o).contains("Usage"), "{args:?}: {}", stderr(&o));
    }
    let o = depforge(&["validate", "/no/such/file.dep"]);
    assert_eq!(code(&o), 2);
    let o = depforge(&["--help"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn state_cap_exhaustion_exits_with_3() {
    let o = depforge(&[
        "--state-cap",
        "1",
        "check-ltl",
        &corpus("power_system.dep"),
        "--formula",
        "X G supply > 0",
        "--faults",
        "free",
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("cap"));
}

fn reliability_json(dir: &Path, name: &str, seed_arg: Option<&str>, env_seed: Option<&str>) -> serde_json::Value {
    let out = dir.join(name);
    let mut args = vec![
        "reliability".to_string(),
        corpus("reliability_single.dep"),
        "--tle".into(),
        "failed".into(),
        "--mission-time".into(),
        "10".into(),
        "--trials".into(),
        "2000".into(),
        "--out".into(),
        out.display().to_string(),
    ];
    if let Some(s) = seed_arg {
        args.extend(["--seed".to_string(), s.to_string()]);
    }
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_depforge"));
    cmd.args(&args).env_remove("DEPFORGE_SEED");
    if let Some(s) = env_seed {
        cmd.env("DEPFORGE_SEED", s);
    }
    let o = cmd.output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    v["results"][0]["data"].clone()
}

#[test]
fn seed_defaults_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let env = reliability_json(dir.path(), "a.json", None, Some("42"));
    let flag = reliability_json(dir.path(), "b.json", Some("42"), None);
    assert_eq!(env, flag);
    assert_eq!(env["estimates"][0]["seed"], 42);
    let overridden = reliability_json(dir.path(), "c.json", Some("43"), Some("42"));
    assert_eq!(overridden["estimates"][0]["seed"], 43);
    let o = Command::new(env!("CARGO_BIN_EXE_depforge"))
        .args(["reliability", &corpus("reliability_single.dep"), "--tle", "failed", "--mission-time", "1"])
        .env("DEPFORGE_SEED", "seven")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn tradeoff_is_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for jobs in ["1", "4"] {
        let out = dir.path().join(format!("t{jobs}.json"));
        let o = depforge(&[
            "--jobs",
            jobs,
            "tradeoff",
            &corpus("reliability_parallel.dep"),
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let file = load_results(&std::fs::read_to_string(out).unwrap()).unwrap();
        let ResultData::Tradeoff { matrix } = &file.results[0].data else { panic!() };
        outs.push(matrix.clone());
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn report_from_stored_results() {
    let dir = tempfile::tempdir().unwrap();
    let ft = dir.path().join("ft.json");
    let rf = dir.path().join("rf.json");
    let model = corpus("power_system.dep");
    assert_eq!(code(&depforge(&["fta", &model, "--tle", "no_power", "--out", ft.to_str().unwrap()])), 0);
    assert_eq!(code(&depforge(&["check-refinement", &model, "--out", rf.to_str().unwrap()])), 0);
    let html = dir.path().join("r.html");
    let o = depforge(&[
        "report",
        &model,
        "--results",
        ft.to_str().unwrap(),
        "--results",
        rf.to_str().unwrap(),
        "--out",
        html.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc = std::fs::read_to_string(&html).unwrap();
    assert_eq!(doc.matches("id=\"result-").count(), 2);
    assert!(doc.contains("depforge fta "));

    let o = depforge(&["report", &model, "--format", "latex"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("No analyses run."));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema_version": 99, "results": []}"#).unwrap();
    let o = depforge(&["report", &model, "--results", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("schema version"));
}

#[test]
fn csv_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("fmea.csv");
    let o = depforge(&[
        "fmea",
        &corpus("redundant_pair.dep"),
        "--tle",
        "all_failed",
        "--cardinality",
        "2",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("cardinality,components,failure_mode,local_effect,system_effects,probability"));
    assert!(text.contains("all_failed"));

    let csv = dir.path().join("rel.csv");
    let o = depforge(&[
        "reliability",
        &corpus("reliability_single.dep"),
        "--tle",
        "failed",
        "--mission-time",
        "10",
        "--trials",
        "1000",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("reward,"), "{text}");
}

#[test]
fn threshold_failures_are_negative() {
    let model = corpus("reliability_single.dep");
    let o = depforge(&[
        "reliability",
        &model,
        "--tle",
        "failed",
        "--mission-time",
        "10",
        "--trials",
        "1000",
        "--threshold",
        "0.99",
    ]);
    assert_eq!(code(&o), 1);
    let o = depforge(&["fta", &corpus("series_pair.dep"), "--tle", "any_failed", "--threshold", "0.01"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn dot_export_is_deterministic() {
    let args = ["export-dot", &corpus("tmr.dep"), "--kind", "contract-tree"];
    let a = stdout(&depforge(&args));
    assert!(a.starts_with("digraph"));
    assert_eq!(a, stdout(&depforge(&args)));
    let o = depforge(&["export-dot", &corpus("redundant_pair.dep"), "--kind", "fault-tree"]);
    assert_eq!(code(&o), 2, "fault trees need --tle");
}

#[test]
fn validation_status_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.json");
    let o = depforge(&["validate", &corpus("tmr.dep"), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let file = load_results(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(file.results[0].status, Status::Positive);
}
