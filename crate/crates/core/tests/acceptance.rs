//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line to
//! the uncaptured stderr handle; the test fails if any criterion fails.

mod common;

use common::contracts::{corpus, corpus_instances, erasure_oracle, small_valid_composites};
use common::fta::{brute_force, nondegenerate_models};
use common::*;
use depforge_core::contract::{
    check_refinement, contract_safety_tree, generate_obligations, verify_composite, MissingContractPolicy,
    ObligationStatus, Overall,
};
use depforge_core::dsl::{load_model, parse_expr, parse_ltl, parse_model, serialize_model, SourceFile};
use depforge_core::engine::{check_ltl, check_reachable, FaultMode, Limits, Outcome, System};
use depforge_core::expr::Ltl;
use depforge_core::instance::{instantiate, list_configurations, InstanceModel};
use depforge_core::model::{ArchitectureModel, CheckKind};
use depforge_core::safety::{basic_events, compute_fault_tree, fmea, format_probability, minimal_cut_sets};
use depforge_core::san::{simulate, to_san};
use depforge_core::validate::validate_core;
use depforge_core::workbench::{
    contract_tree_dot, fault_tree_dot, generate_report, internal_block_dot, run_tradeoff, tradeoff_result,
    validation_result, Analysis, CellStatus, ReportFormat, ReportMeta, ResultsFile,
};
use quick_xml::events::Event;
use quick_xml::Reader;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

const SKIP: MissingContractPolicy = MissingContractPolicy::Skip;

type Verdict = Result<String, String>;
type Weakening = Box<dyn Fn(&Ltl) -> Ltl>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

fn within(elapsed: Duration, budget_secs: f64, what: &str) -> Result<(), String> {
    let s = elapsed.as_secs_f64();
    if s < budget_secs {
        Ok(())
    } else {
        Err(format!("{what} took {s:.2} s, budget {budget_secs} s"))
    }
}

fn model(file: &str) -> ArchitectureModel {
    load_model(&corpus(file)).unwrap()
}

fn corpus_instance(file: &str, config: &str) -> InstanceModel {
    let m = model(file);
    let cfg = list_configurations(&m).configurations.into_iter().find(|c| c.name == config || config.is_empty());
    instantiate(&m, &cfg.unwrap()).unwrap()
}

fn corpus_files() -> Vec<std::path::PathBuf> {
    let mut files: Vec<_> = std::fs::read_dir(corpus(""))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "dep"))
        .collect();
    files.sort();
    files
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

const GENERATOR: &str = r#"
model Gen {
  block Generator {
    out energy: 0..5 = 5;
    error_model GenFault {
      normal Ok;
      error Err;
      initial Ok;
      fault fault: Ok -> Err probability 0.05;
      effect Err: energy stuck_at 0;
    }
  }
  root Generator;
}"#;

fn generator_fault() -> Verdict {
    let start = Instant::now();
    let inst = instance(GENERATOR);
    let events = basic_events(&inst);
    ensure!(
        events.len() == 1 && events[0].probability() == Some(0.05),
        "expected one fault with p = 0.05, got {events:?}"
    );
    let sys = System::from_instance(&inst, "").map_err(|e| e.to_string())?;
    let cond = expr("energy == 0");
    let run = |mode: &FaultMode| check_reachable(&sys, &cond, mode, Limits::default()).map_err(|e| e.to_string());

    let nominal = run(&FaultMode::AllInactive)?;
    ensure!(nominal.result == Outcome::Unreachable, "reachable without faults");
    for mode in [FaultMode::Free, FaultMode::Only(BTreeSet::from(["fault".to_string()]))] {
        let v = run(&mode)?;
        ensure!(v.result == Outcome::Reachable, "unreachable under {mode:?}");
        let w = v.witness.ok_or("no witness")?;
        ensure!(w.steps.iter().any(|s| s.raised.contains(&"fault".to_string())), "witness never raises the fault");
        sys.replay(&w, &mode).map_err(|e| format!("witness does not replay: {e}"))?;
    }
    within(start.elapsed(), 1.0, "generator check")?;
    Ok(format!("reachable only with the fault, {:.0} ms", start.elapsed().as_secs_f64() * 1e3))
}

const FTA_SEED: u64 = 2024;
const FTA_MODELS: usize = 25;

fn fta_oracle() -> Verdict {
    let start = Instant::now();
    let models = nondegenerate_models(FTA_SEED, FTA_MODELS);
    ensure!(models.len() >= 20, "only {} models", models.len());
    let mut max_events = 0;
    for (i, m) in models.iter().enumerate() {
        ensure!(m.ids.len() <= 12, "model {i} has {} events", m.ids.len());
        max_events = max_events.max(m.ids.len());
        let inst = instance(&m.src);
        let tle = inst.event("top").unwrap();
        let n = m.ids.len();
        let (sets, total) = brute_force(m);
        let mcs = minimal_cut_sets(&inst, tle, n, Limits::default()).map_err(|e| e.to_string())?;
        let got: Vec<Vec<String>> = mcs.cut_sets.iter().map(|c| c.events.clone()).collect();
        ensure!(got == sets, "model {i}: cut sets {got:?} vs oracle {sets:?}");
        let ft = compute_fault_tree(&inst, tle, n, Limits::default()).map_err(|e| e.to_string())?;
        let p = ft.top.probability.unwrap_or(0.0);
        ensure!((p - total).abs() <= 1e-12, "model {i}: top {p} vs oracle {total}");
    }
    within(start.elapsed(), 60.0, "FTA corpus")?;
    Ok(format!("{} models, up to {max_events} events, {:.1} s", models.len(), start.elapsed().as_secs_f64()))
}

fn redundancy_arithmetic() -> Verdict {
    let start = Instant::now();
    let p = 0.05f64;
    let top = |file: &str, cfg: &str, event: &str| -> Result<f64, String> {
        let inst = corpus_instance(file, cfg);
        let tle = inst.event(event).ok_or(format!("no event {event}"))?;
        let ft = compute_fault_tree(&inst, tle, 3, Limits::default()).map_err(|e| e.to_string())?;
        ft.top.probability.ok_or("no probability".into())
    };
    let cases = [
        ("redundant_pair.dep", "", "all_failed", p * p, "0.0025"),
        ("series_pair.dep", "", "any_failed", 1.0 - (1.0 - p) * (1.0 - p), "0.0975"),
        ("generator_array.dep", "N3", "all_failed", p * p * p, "0.000125"),
    ];
    let mut shown = Vec::new();
    for (file, cfg, event, want, text) in cases {
        let got = top(file, cfg, event)?;
        ensure!((got - want).abs() <= 1e-15 * want.max(1.0), "{file}: {got} vs {want}");
        ensure!(format_probability(got) == text, "{file}: printed {} vs {text}", format_probability(got));
        shown.push(text);
    }
    within(start.elapsed(), 1.0, "redundancy arithmetic")?;
    Ok(shown.join(", "))
}

fn fmea_consistency() -> Verdict {
    let models = nondegenerate_models(FTA_SEED, FTA_MODELS);
    let mut effective_total = 0;
    for (i, m) in models.iter().enumerate() {
        let inst = instance(&m.src);
        let tle = inst.event("top").unwrap().clone();
        let mcs = minimal_cut_sets(&inst, &tle, 1, Limits::default()).map_err(|e| e.to_string())?;
        let singles: BTreeSet<String> = mcs.cut_sets.iter().map(|c| c.events[0].clone()).collect();
        let table = fmea(&inst, std::slice::from_ref(&tle), 1, Limits::default()).map_err(|e| e.to_string())?;
        let effective: BTreeSet<String> =
            table.rows.iter().filter(|r| !r.system_effects.is_empty()).map(|r| r.failure_mode[0].clone()).collect();
        ensure!(effective == singles, "model {i}: FMEA {effective:?} vs cut sets {singles:?}");
        effective_total += effective.len();
    }
    Ok(format!("{} models, {effective_total} single-point failures matched", models.len()))
}

fn ltl_soundness() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut violated, mut max_states) = (0, 0);
    let pairs = 120;
    for i in 0..pairs {
        let (src, faulty) = random_machine(&mut rng);
        let sys = system(&src);
        let mut atoms = vec!["x == 0", "x == 2", "y", "i"];
        if faulty {
            atoms.push("E == Bad");
        }
        let mode = if faulty && rng.random_bool(0.5) { FaultMode::Free } else { FaultMode::AllInactive };
        let space = check_reachable(&sys, &expr("false"), &mode, Limits::default()).map_err(|e| e.to_string())?;
        ensure!(space.states <= 500, "pair {i}: {} joint states", space.states);
        max_states = max_states.max(space.states);
        let f = random_formula(&mut rng, &atoms, 3);
        let v = check_ltl(&sys, &f, &mode, Limits::default()).map_err(|e| e.to_string())?;
        let oracle = oracle_holds(&sys, &f, &mode);
        ensure!((v.result == Outcome::Holds) == oracle, "pair {i}: checker {:?}, oracle {oracle}, {f}", v.result);
        if let Some(w) = v.witness {
            violated += 1;
            sys.replay(&w, &mode).map_err(|e| format!("pair {i}: witness does not replay: {e}"))?;
            ensure!(!trace_satisfies(&sys, &w, &f), "pair {i}: witness satisfies {f}");
        }
    }
    within(start.elapsed(), 120.0, "LTL pairs")?;
    Ok(format!(
        "{pairs} pairs, {violated} violations replayed, at most {max_states} joint states, {:.1} s",
        start.elapsed().as_secs_f64()
    ))
}

/// Replaces the guarantee of sub `path` with `f(old)`.
fn weaken(inst: &InstanceModel, path: &str, f: impl Fn(&Ltl) -> Ltl) -> InstanceModel {
    let mut out = inst.clone();
    let sub = out.root.children.iter_mut().find(|c| c.path == path).unwrap();
    sub.contracts[0].guarantee = f(&sub.contracts[0].guarantee);
    out
}

fn contract_refinement() -> Verdict {
    let chain = &corpus_instances("monitor_chain.dep")[0];
    let v = check_refinement(chain, "", SKIP, Limits::default()).map_err(|e| e.to_string())?;
    ensure!(v.overall == Overall::Valid, "monitor chain refinement is {:?}", v.overall);

    let mut weakenings = 0;
    for sub in ["s1", "s2"] {
        let variants: [(&str, Weakening); 2] = [
            ("true", Box::new(|_| Ltl::True)),
            ("next to eventually", Box::new(|g| parse_ltl(&g.to_string().replace(" X ", " F ")).unwrap())),
        ];
        for (label, f) in variants {
            let weak = weaken(chain, sub, f);
            let set = generate_obligations(&weak, "", SKIP).map_err(|e| e.to_string())?;
            let v = check_refinement(&weak, "", SKIP, Limits::default()).map_err(|e| e.to_string())?;
            ensure!(v.overall == Overall::Invalid, "{sub} {label}: still {:?}", v.overall);
            let bad: Vec<_> = v.obligations.iter().filter(|r| r.status == ObligationStatus::Violated).collect();
            ensure!(!bad.is_empty(), "{sub} {label}: no violated obligation");
            for r in bad {
                let w = r.witness.as_ref().ok_or(format!("{sub} {label}: no witness"))?;
                let sat = w.satisfies(&r.obligation.formula, &set.vocabulary).map_err(|e| e.to_string())?;
                ensure!(!sat, "{sub} {label}: witness satisfies the obligation");
            }
            weakenings += 1;
        }
    }

    let (mut checked, mut capped) = (0, 0);
    for path in corpus_files().iter().filter(|p| !p.ends_with("broken.dep")) {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        for inst in corpus_instances(&name) {
            for c in inst.instances().iter().filter(|c| !c.is_leaf() && !c.contracts.is_empty()) {
                let Ok(verdict) = verify_composite(&inst, &c.path, SKIP, Limits::default()) else { continue };
                if !verdict.correct {
                    continue;
                }
                let k = &c.contracts[0];
                let sys = System::from_instance(&inst, &c.path).map_err(|e| e.to_string())?;
                let f = Ltl::implies(k.assumption.clone(), k.guarantee.clone());
                match check_ltl(&sys, &f, &FaultMode::AllInactive, Limits::default()) {
                    Ok(v) => {
                        ensure!(v.result == Outcome::Holds, "{name} `{}`: product violates A -> G", c.path);
                        checked += 1;
                    }
                    Err(e) if e.is_resource() => capped += 1,
                    Err(e) => return Err(format!("{name} `{}`: {e}", c.path)),
                }
            }
        }
    }
    ensure!(checked > 0, "no composite product fitted the cap");
    Ok(format!(
        "chain valid, {weakenings} weakenings invalid with replayable words, {checked} products hold ({capped} over cap)"
    ))
}

fn contract_trees() -> Verdict {
    let cases = small_valid_composites();
    ensure!(!cases.is_empty(), "no corpus hierarchies");
    for (label, inst, comp) in &cases {
        let t = contract_safety_tree(inst, comp, SKIP, Limits::default()).map_err(|e| format!("{label}: {e}"))?;
        let name = if comp.is_empty() { inst.root.block.clone() } else { comp.clone() };
        let got = t.combinations(&name);
        let want = erasure_oracle(inst, comp);
        ensure!(got == want, "{label}: {got:?} vs oracle {want:?}");
    }
    Ok(format!("{} hierarchies match the erasure oracle", cases.len()))
}

fn system_ok(san: &depforge_core::san::StochasticActivityNetwork, t: f64, trials: u64, seed: u64) -> (f64, (f64, f64)) {
    let est = simulate(san, t, trials, seed).unwrap();
    let e = est.iter().find(|e| e.reward_name == "system_ok").unwrap();
    (e.point_estimate, e.ci95)
}

fn monte_carlo() -> Verdict {
    let r = |lambda: f64, t: f64| (-lambda * t).exp();
    let cases = [
        ("reliability_single.dep", "failed", 10.0, r(0.1, 10.0)),
        ("reliability_series.dep", "any_failed", 5.0, r(0.1, 5.0) * r(0.1, 5.0)),
        ("reliability_parallel.dep", "all_failed", 10.0, 1.0 - (1.0 - r(0.1, 10.0)).powi(2)),
    ];
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for (file, event, t, truth) in cases {
        let inst = corpus_instance(file, "");
        let san = to_san(&inst, inst.event(event).unwrap()).map_err(|e| e.to_string())?;
        let (est, _) = system_ok(&san, t, 100_000, 1);
        if (est - truth).abs() > 0.01 {
            failures.push(format!("{file}: {est} vs {truth}"));
        }
        let start = Instant::now();
        let covered = (0..100u64)
            .into_par_iter()
            .filter(|&seed| {
                let (_, (lo, hi)) = system_ok(&san, t, 100_000, 1000 + seed);
                lo <= truth && truth <= hi
            })
            .count();
        if covered < 93 {
            failures.push(format!("{file}: ci95 covers the true value in {covered}/100 runs"));
        }
        if let Err(e) = within(start.elapsed(), 60.0, file) {
            failures.push(e);
        }
        notes.push(format!("{}: |err| {:.4}, cover {covered}/100", file.trim_end_matches(".dep"), (est - truth).abs()));
    }
    if failures.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(failures.join("; "))
    }
}

/// Every analysis on several corpus models, serialized as one results file
/// per model, plus tradeoff matrices, SAN estimates and DOT views.
fn analysis_outputs(seed: u64) -> Vec<String> {
    let mut out = Vec::new();
    let power = model("power_system.dep");
    let a = Analysis::new(&power, None, Limits::default()).unwrap();
    let results = vec![
        validation_result(&power),
        a.instantiate_result(),
        a.fta_result("no_power", 2, None).unwrap(),
        a.fmea_result(&["no_power".into()], 2).unwrap(),
        a.refinement_result(None).unwrap(),
        a.verification_result(None).unwrap(),
        a.check_ltl_result("X G supply > 0", &FaultMode::Free, None).unwrap(),
        a.reachability_result("gen1.energy == 0", &FaultMode::Free, true, None).unwrap(),
        a.contract_tree_result(None).unwrap(),
    ];
    out.push(ResultsFile::new(&power.name, results).to_json());

    let par = model("reliability_parallel.dep");
    let a = Analysis::new(&par, None, Limits::default()).unwrap();
    let r = a.reliability_result("all_failed", 10.0, 20_000, seed, Some(0.5)).unwrap();
    out.push(ResultsFile::new(&par.name, vec![r]).to_json());

    for file in ["generator_array.dep", "reliability_parallel.dep", "monitor_chain.dep"] {
        let m = model(file);
        let cfgs = list_configurations(&m).configurations;
        let matrix = run_tradeoff(&m, &cfgs, &m.checks, seed, Limits::default()).unwrap();
        out.push(ResultsFile::new(&m.name, vec![tradeoff_result(&m, matrix)]).to_json());
    }

    let inst = corpus_instance("reliability_series.dep", "");
    let san = to_san(&inst, inst.event("any_failed").unwrap()).unwrap();
    out.push(serde_json::to_string(&simulate(&san, 5.0, 20_000, seed).unwrap()).unwrap());

    let pair = corpus_instance("redundant_pair.dep", "");
    let ft = compute_fault_tree(&pair, pair.event("all_failed").unwrap(), 2, Limits::default()).unwrap();
    out.push(fault_tree_dot(&ft));
    let tmr = &corpus_instances("tmr.dep")[0];
    out.push(contract_tree_dot(&contract_safety_tree(tmr, "", SKIP, Limits::default()).unwrap()));
    out.push(internal_block_dot(&power, &power.root).unwrap());
    out
}

fn determinism() -> Verdict {
    let n = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4).max(4);
    let one = in_pool(1, || analysis_outputs(7));
    let many = in_pool(n, || analysis_outputs(7));
    let again = in_pool(n, || analysis_outputs(7));
    ensure!(one.len() == many.len(), "output counts differ");
    for (i, (a, b)) in one.iter().zip(&many).enumerate() {
        ensure!(a == b, "output {i} differs between 1 and {n} threads");
    }
    ensure!(many == again, "outputs differ between identical runs");
    let bytes: usize = one.iter().map(String::len).sum();
    Ok(format!("{} outputs ({bytes} bytes) identical at 1 and {n} threads", one.len()))
}

const FUZZ_EXECUTIONS: usize = 1_000_000;
const FUZZ_CHUNK: usize = 5_000;

const TOKENS: &[&str] = &[
    "model",
    "block",
    "root",
    "sub",
    "in",
    "out",
    "connect",
    "->",
    "contract",
    "assume:",
    "guarantee:",
    "behavior",
    "states",
    "initial",
    "transition",
    "when",
    "do",
    "error_model",
    "normal",
    "error",
    "failure",
    "fault",
    "threat",
    "repair",
    "probability",
    "rate",
    "effect",
    "stuck_at",
    "event",
    "check",
    "fta",
    "max_order",
    "refinement",
    "reliability",
    "at",
    "trials",
    "ltl",
    "reachable",
    "configuration",
    "requirement",
    "import",
    "param",
    "{",
    "}",
    "(",
    ")",
    "[",
    "]",
    ";",
    ":",
    ",",
    ".",
    "..",
    "=",
    "==",
    "!=",
    "<=",
    ">=",
    "&&",
    "||",
    "!",
    "+",
    "-",
    "*",
    "G",
    "F",
    "X",
    "U",
    "R",
    "true",
    "false",
    "0",
    "1e-3",
    "99999999999999999999999",
    "-9223372036854775808",
    "0.05",
    "\"",
    "\"text\"",
    "//",
    "/*",
    "*/",
    "\n",
    " ",
    "\t",
    "\u{0}",
    "é",
    "\u{202e}",
    "x",
    "a.b.c",
];

fn mutate(rng: &mut ChaCha8Rng, seeds: &[Vec<u8>]) -> Vec<u8> {
    match rng.random_range(0..20) {
        0 => (0..rng.random_range(0..256)).map(|_| rng.random()).collect(),
        1 => {
            let n = rng.random_range(0..80);
            (0..n).flat_map(|_| TOKENS[rng.random_range(0..TOKENS.len())].bytes().chain(*b" ")).collect()
        }
        _ => {
            let mut b = seeds[rng.random_range(0..seeds.len())].clone();
            for _ in 0..rng.random_range(1..=6) {
                let len = b.len();
                let at = rng.random_range(0..=len);
                match rng.random_range(0..6) {
                    0 if len > 0 => b[at.min(len - 1)] = rng.random(),
                    1 => {
                        let t = TOKENS[rng.random_range(0..TOKENS.len())];
                        b.splice(at..at, t.bytes());
                    }
                    2 => {
                        let end = (at + rng.random_range(0..64)).min(len);
                        b.drain(at..end);
                    }
                    3 => {
                        let end = (at + rng.random_range(0..128)).min(len);
                        let piece = b[at..end].to_vec();
                        let to = rng.random_range(0..=len);
                        b.splice(to..to, piece);
                    }
                    4 => b.truncate(at),
                    _ => {
                        let other = &seeds[rng.random_range(0..seeds.len())];
                        let from = rng.random_range(0..=other.len());
                        let end = (from + rng.random_range(0..256)).min(other.len());
                        b.splice(at..at, other[from..end].iter().copied());
                    }
                }
            }
            b
        }
    }
}

fn fuzz_one(bytes: &[u8]) {
    let text = String::from_utf8_lossy(bytes).into_owned();
    if let Ok(m) = parse_model(&[SourceFile::new("fuzz.dep", text.clone())]) {
        let _ = validate_core(&m);
        let _ = serialize_model(&m);
    }
    let cut = (0..=text.len().min(64)).rev().find(|&i| text.is_char_boundary(i)).unwrap_or(0);
    let fragment = &text[..cut];
    let _ = parse_expr(fragment);
    let _ = parse_ltl(fragment);
}

fn round_trip_and_fuzz() -> Verdict {
    let files = corpus_files();
    let mut round_tripped = 0;
    for path in files.iter().filter(|p| !p.ends_with("broken.dep")) {
        let m = load_model(path).map_err(|d| format!("{}: {d:?}", path.display()))?;
        let text = serialize_model(&m);
        let again = parse_model(&[SourceFile::new("printed.dep", text.clone())])
            .map_err(|d| format!("{}: reparse failed {d:?}", path.display()))?;
        ensure!(again == m, "{}: reparsed model differs", path.display());
        ensure!(serialize_model(&again) == text, "{}: printer not idempotent", path.display());
        round_tripped += 1;
    }

    let seeds: Vec<Vec<u8>> = files.iter().map(|p| std::fs::read(p).unwrap()).collect();
    let start = Instant::now();
    let hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let crashes: Vec<Vec<u8>> = (0..FUZZ_EXECUTIONS / FUZZ_CHUNK)
        .into_par_iter()
        .flat_map_iter(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(chunk as u64);
            let mut bad = Vec::new();
            for _ in 0..FUZZ_CHUNK {
                let input = mutate(&mut rng, &seeds);
                if catch_unwind(AssertUnwindSafe(|| fuzz_one(&input))).is_err() {
                    bad.push(input);
                }
            }
            bad
        })
        .collect();
    std::panic::set_hook(hook);
    if let Some(first) = crashes.first() {
        return Err(format!(
            "{} of {FUZZ_EXECUTIONS} inputs panicked; first: {:?}",
            crashes.len(),
            String::from_utf8_lossy(first)
        ));
    }
    Ok(format!(
        "{round_tripped} corpus models round-trip, {FUZZ_EXECUTIONS} fuzz executions without a panic in {:.1} s",
        start.elapsed().as_secs_f64()
    ))
}

/// Well-formedness check for the rendered HTML; returns every `id` value.
fn xml_ids(html: &str) -> Result<Vec<String>, String> {
    let mut reader = Reader::from_str(html);
    reader.config_mut().check_end_names = true;
    let mut ids = Vec::new();
    let mut depth = 0i32;
    loop {
        match reader.read_event().map_err(|e| format!("malformed HTML at {}: {e}", reader.buffer_position()))? {
            Event::Eof => break,
            Event::Start(e) => {
                depth += 1;
                for a in e.attributes() {
                    let a = a.map_err(|e| e.to_string())?;
                    if a.key.as_ref() == b"id" {
                        ids.push(a.unescape_value().map_err(|e| e.to_string())?.into_owned());
                    }
                }
            }
            Event::End(_) => depth -= 1,
            _ => {}
        }
    }
    ensure!(depth == 0, "unbalanced HTML elements");
    Ok(ids)
}

/// Structural LaTeX check: known commands only, balanced groups and
/// environments, no raw special characters and no `\\[` misparse.
fn latex_structure(tex: &str) -> Result<(), String> {
    const COMMANDS: &[&str] = &[
        "documentclass",
        "usepackage",
        "begin",
        "end",
        "section",
        "subsection",
        "label",
        "item",
        "textbf",
        "ttfamily",
        "hline",
        "mbox",
        "textbackslash",
        "textasciitilde",
        "textasciicircum",
        "textless",
        "textgreater",
        "textbar",
    ];
    let chars: Vec<char> = tex.chars().collect();
    let mut groups = 0i32;
    let mut envs: Vec<String> = Vec::new();
    let mut i = 0;
    let read_arg = |from: usize| -> Option<(String, usize)> {
        if chars.get(from) != Some(&'{') {
            return None;
        }
        let end = chars[from..].iter().position(|&c| c == '}')? + from;
        Some((chars[from + 1..end].iter().collect(), end + 1))
    };
    while i < chars.len() {
        let c = chars[i];
        match c {
            '\\' => {
                let next = *chars.get(i + 1).ok_or("trailing backslash")?;
                if next.is_ascii_alphabetic() {
                    let len = chars[i + 1..].iter().take_while(|c| c.is_ascii_alphabetic()).count();
                    let name: String = chars[i + 1..i + 1 + len].iter().collect();
                    ensure!(COMMANDS.contains(&name.as_str()), "unknown command \\{name}");
                    let after = i + 1 + len;
                    if name == "begin" || name == "end" {
                        let (env, next_i) = read_arg(after).ok_or(format!("\\{name} without argument"))?;
                        if name == "begin" {
                            envs.push(env);
                        } else {
                            ensure!(envs.pop().as_deref() == Some(env.as_str()), "mismatched \\end{{{env}}}");
                        }
                        i = next_i;
                        continue;
                    }
                    if name == "label" {
                        let (key, next_i) = read_arg(after).ok_or("\\label without argument")?;
                        let safe = key.chars().all(|c| c.is_ascii_alphanumeric() || "-_:.".contains(c));
                        ensure!(safe, "unsafe label key {key:?}");
                        i = next_i;
                        continue;
                    }
                    i = after;
                    continue;
                }
                match next {
                    '\\' => {
                        let rest = chars[i + 2..].iter().find(|c| !c.is_whitespace());
                        ensure!(rest != Some(&'['), "line break followed by `[`");
                    }
                    '&' | '%' | '$' | '#' | '_' | '{' | '}' => {}
                    other => return Err(format!("unexpected escape \\{other}")),
                }
                i += 2;
                continue;
            }
            '{' => groups += 1,
            '}' => {
                groups -= 1;
                ensure!(groups >= 0, "unbalanced closing brace");
            }
            '%' | '$' | '#' | '_' | '^' => return Err(format!("raw special character `{c}`")),
            '&' => ensure!(envs.iter().any(|e| e == "longtable"), "`&` outside a table"),
            c if (c as u32) > 0xff => return Err(format!("character {c:?} has no default glyph")),
            _ => {}
        }
        i += 1;
    }
    ensure!(groups == 0, "unbalanced braces");
    ensure!(envs.is_empty(), "unclosed environments {envs:?}");
    Ok(())
}

/// Runs a TeX engine on the document when one is installed.
fn latex_compile(tex: &str) -> Option<Result<(), String>> {
    let engine = ["pdflatex", "lualatex", "xelatex"]
        .into_iter()
        .find(|e| std::process::Command::new(e).arg("--version").output().is_ok())?;
    let dir = std::env::temp_dir().join(format!("depforge-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).ok()?;
    std::fs::write(dir.join("report.tex"), tex).ok()?;
    let out = std::process::Command::new(engine)
        .args(["-interaction=nonstopmode", "-halt-on-error", "report.tex"])
        .current_dir(&dir)
        .output()
        .ok()?;
    let _ = std::fs::remove_dir_all(&dir);
    Some(if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{engine} failed: {}",
            String::from_utf8_lossy(&out.stdout).lines().rev().take(5).collect::<Vec<_>>().join(" | ")
        ))
    })
}

/// Probability that a predicate over N independent faults of probability
/// `p` holds, by enumerating all 2^N outcomes.
fn enumerate(n: u32, p: f64, pred: impl Fn(u32) -> bool) -> f64 {
    (0..1u32 << n)
        .filter(|&m| pred(m))
        .map(|m| (0..n).map(|i| if m & (1 << i) != 0 { p } else { 1.0 - p }).product::<f64>())
        .sum()
}

fn end_to_end() -> Verdict {
    let m = model("generator_array.dep");
    let cfgs: Vec<_> = list_configurations(&m)
        .configurations
        .into_iter()
        .filter(|c| matches!(c.bindings.get("N"), Some(2 | 3)))
        .collect();
    ensure!(cfgs.len() == 2, "expected configurations N=2 and N=3");
    let checks: Vec<_> = m
        .checks
        .iter()
        .filter(|c| matches!(c.kind, CheckKind::FtaTopProbability { .. } | CheckKind::Refinement { .. }))
        .cloned()
        .collect();
    ensure!(checks.iter().any(|c| matches!(c.kind, CheckKind::Refinement { .. })), "no refinement check");
    let matrix = run_tradeoff(&m, &cfgs, &checks, 0, Limits::default()).map_err(|e| e.to_string())?;
    ensure!(matrix.rows.len() == 2 && matrix.checks.len() == checks.len(), "matrix shape");
    for cfg in &cfgs {
        let n = cfg.bindings["N"] as u32;
        let all_mask = (1u32 << n) - 1;
        for check in &checks {
            let cell = matrix.cell(&cfg.name, &check.name).ok_or("missing cell")?;
            match &check.kind {
                CheckKind::FtaTopProbability { event, threshold, .. } => {
                    let want = match event.as_str() {
                        "all_failed" => enumerate(n, 0.05, |mask| mask == all_mask),
                        "any_failed" => enumerate(n, 0.05, |mask| mask != 0),
                        other => return Err(format!("no oracle for event {other}")),
                    };
                    let got = cell.value.ok_or("cell without value")?;
                    ensure!((got - want).abs() < 1e-12, "{} {}: {got} vs {want}", cfg.name, check.name);
                    let status = if want <= *threshold { CellStatus::Pass } else { CellStatus::Fail };
                    ensure!(cell.status == status, "{} {}: {:?}", cfg.name, check.name, cell.status);
                }
                _ => {
                    let inst = instantiate(&m, cfg).map_err(|e| e.to_string())?;
                    let v = check_refinement(&inst, "", SKIP, Limits::default()).map_err(|e| e.to_string())?;
                    let valid = v.obligations.iter().all(|r| r.status == ObligationStatus::Holds);
                    let status = if valid { CellStatus::Pass } else { CellStatus::Fail };
                    ensure!(cell.status == status, "{} {}: {:?}", cfg.name, check.name, cell.status);
                }
            }
        }
    }

    let a = Analysis::new(&m, Some("N3"), Limits::default()).map_err(|e| e.to_string())?;
    let results = vec![
        tradeoff_result(&m, matrix),
        a.fta_result("all_failed", 3, None).map_err(|e| e.to_string())?,
        a.refinement_result(None).map_err(|e| e.to_string())?,
    ];
    let file = ResultsFile::new(&m.name, results.clone());
    let meta = ReportMeta {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        timestamp: "2000-01-01T00:00:00Z".into(),
        invocation: "depforge report generator_array.dep --results results.json".into(),
    };
    let html = generate_report(&m, &file, ReportFormat::Html, &meta);
    let ids = xml_ids(&html)?;
    for r in &results {
        let anchor = format!("result-{}", r.id);
        let n = ids.iter().filter(|i| **i == anchor).count();
        ensure!(n == 1, "HTML anchor {anchor} appears {n} times");
    }
    let tex = generate_report(&m, &file, ReportFormat::Latex, &meta);
    for r in &results {
        let label = format!("\\label{{result-{}}}", r.id);
        let n = tex.matches(&label).count();
        ensure!(n == 1, "LaTeX {label} appears {n} times");
    }
    ensure!(tex.matches("\\label{result-").count() == results.len(), "extra LaTeX result labels");
    latex_structure(&tex)?;
    let latex = match latex_compile(&tex) {
        Some(r) => {
            r?;
            "LaTeX compiled"
        }
        None => "LaTeX structurally checked (no TeX engine installed)",
    };
    Ok(format!(
        "2x{} matrix matches enumeration; HTML well-formed; {latex}; {} results once each",
        checks.len(),
        results.len()
    ))
}

#[test]
fn acceptance_criteria() {
    type Criterion = (&'static str, fn() -> Verdict);
    let criteria: [Criterion; 11] = [
        ("generator fault reproduction", generator_fault),
        ("FTA oracle equivalence", fta_oracle),
        ("redundancy arithmetic", redundancy_arithmetic),
        ("FMEA consistency", fmea_consistency),
        ("LTL checker soundness", ltl_soundness),
        ("contract refinement", contract_refinement),
        ("contract-based safety tree", contract_trees),
        ("Monte-Carlo vs analytic", monte_carlo),
        ("determinism", determinism),
        ("round-trip and parser robustness", round_trip_and_fuzz),
        ("end-to-end tradeoff and report", end_to_end),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    let _ = writeln!(err);
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = catch_unwind(run).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        let line = match &verdict {
            Ok(detail) => format!("criterion {:>2} PASS {name} ({detail}) [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed.push(i + 1);
                format!("criterion {:>2} FAIL {name}: {detail} [{secs:.1} s]", i + 1)
            }
        };
        let _ = writeln!(err, "{line}");
    }
    let _ = writeln!(err, "acceptance: {}/{} criteria pass", criteria.len() - failed.len(), criteria.len());
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
