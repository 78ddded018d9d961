mod common;

use common::fta::*;
use common::*;
use depforge_core::engine::Limits;
use depforge_core::instance::{instantiate, InstanceModel};
use depforge_core::safety::{
    basic_events, compute_fault_tree, fmea, format_probability, minimal_cut_sets, SafetyError,
};
use std::collections::BTreeSet;
use std::path::Path;

fn corpus_instance(file: &str, config: &str) -> InstanceModel {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(file);
    let model = depforge_core::dsl::load_model(&path).unwrap();
    let cfg = depforge_core::instance::select_configuration(&model, Some(config).filter(|c| !c.is_empty())).unwrap();
    instantiate(&model, &cfg).unwrap()
}

fn top(inst: &InstanceModel, event: &str, order: usize) -> f64 {
    let tle = inst.event(event).unwrap();
    compute_fault_tree(inst, tle, order, Limits::default()).unwrap().top.probability.unwrap()
}

#[test]
fn redundancy_arithmetic() {
    let p = 0.05f64;
    let pair = corpus_instance("redundant_pair.dep", "");
    assert!((top(&pair, "all_failed", 2) - p * p).abs() < 1e-15);
    let series = corpus_instance("series_pair.dep", "");
    assert!((top(&series, "any_failed", 2) - (1.0 - (1.0 - p).powi(2))).abs() < 1e-15);

    let n2 = corpus_instance("generator_array.dep", "N2");
    let n3 = corpus_instance("generator_array.dep", "N3");
    assert_eq!(format_probability(top(&n2, "all_failed", 3)), "0.0025");
    assert_eq!(format_probability(top(&n3, "all_failed", 3)), "0.000125");
    assert!((top(&n3, "all_failed", 3) - p.powi(3)).abs() < 1e-18);
    assert_eq!(format_probability(top(&n2, "any_failed", 3)), "0.0975");
    assert_eq!(format_probability(top(&n3, "any_failed", 3)), "0.142625");
}

#[test]
fn redundant_pair_tree_shape() {
    let pair = corpus_instance("redundant_pair.dep", "");
    let ft = compute_fault_tree(&pair, pair.event("all_failed").unwrap(), 2, Limits::default()).unwrap();
    assert_eq!(ft.gates.len(), 1);
    assert_eq!(ft.gates[0].inputs, vec!["Gen1.fault", "Gen2.fault"]);
    assert_eq!(ft.basic_events.len(), 2);
    assert!(ft.basic_events.iter().all(|e| e.probability == Some(0.05)));

    let order1 = compute_fault_tree(&pair, pair.event("all_failed").unwrap(), 1, Limits::default()).unwrap();
    assert!(order1.gates.is_empty());
}

#[test]
fn fmea_rows_for_the_pairs() {
    let pair = corpus_instance("redundant_pair.dep", "");
    let tles = vec![pair.event("all_failed").unwrap().clone()];
    let single = fmea(&pair, &tles, 1, Limits::default()).unwrap();
    assert_eq!(single.rows.len(), 2);
    assert!(single.rows.iter().all(|r| r.system_effects.is_empty()));
    assert_eq!(single.rows[0].local_effect, vec!["Gen1.GenFault = Err"]);
    let double = fmea(&pair, &tles, 2, Limits::default()).unwrap();
    assert_eq!(double.rows.len(), 1);
    assert_eq!(double.rows[0].system_effects, vec!["all_failed"]);
    assert_eq!(format_probability(double.rows[0].probability.unwrap()), "0.0025");

    let series = corpus_instance("series_pair.dep", "");
    let tles = vec![series.event("any_failed").unwrap().clone()];
    let single = fmea(&series, &tles, 1, Limits::default()).unwrap();
    assert!(single.rows.iter().all(|r| r.system_effects == vec!["any_failed"]));
    let csv = single.to_csv();
    assert!(csv.starts_with("cardinality,components,failure_mode,local_effect,system_effects,probability"));
    assert_eq!(csv.lines().count(), 3);
    assert!(matches!(fmea(&series, &tles, 3, Limits::default()), Err(SafetyError::InvalidCardinality(3))));
}

#[test]
fn rate_faults_refuse_quantification() {
    let inst = corpus_instance("reliability_parallel.dep", "");
    let ft = compute_fault_tree(&inst, inst.event("all_failed").unwrap(), 2, Limits::default()).unwrap();
    assert_eq!(ft.gates.len(), 1);
    assert!(ft.top.probability.is_none());
    assert!(ft.quantitative_note.unwrap().contains("rates"));
}

#[test]
fn degenerate_top_event_is_flagged() {
    let src = r#"
model D {
  block G {
    out e: 0..5 = 0;
    error_model F {
      normal Ok;
      error Err;
      fault f: Ok -> Err probability 0.1;
      effect Err: e stuck_at 1;
    }
  }
  event low: e == 0;
  root G;
}"#;
    let inst = instance(src);
    let r = minimal_cut_sets(&inst, inst.event("low").unwrap(), 1, Limits::default()).unwrap();
    assert!(r.degenerate);
    assert!(r.cut_sets.is_empty());
    assert!(!r.warnings.is_empty());
}

#[test]
fn zero_order_is_rejected() {
    let pair = corpus_instance("redundant_pair.dep", "");
    let e = minimal_cut_sets(&pair, pair.event("all_failed").unwrap(), 0, Limits::default()).unwrap_err();
    assert!(matches!(e, SafetyError::InvalidOrder));
}

#[test]
fn cut_sets_and_top_probability_match_brute_force() {
    let mut nonempty = 0;
    let mut multi = 0;
    for m in nondegenerate_models(3, 40) {
        let inst = instance(&m.src);
        assert_eq!(basic_events(&inst).iter().map(|e| e.id.clone()).collect::<Vec<_>>(), m.ids);
        let tle = inst.event("top").unwrap();
        let n = m.ids.len();
        let ft = compute_fault_tree(&inst, tle, n, Limits::default()).unwrap();
        let (sets, total) = brute_force(&m);
        let got: Vec<Vec<String>> = ft.gates.iter().map(|g| g.inputs.clone()).collect();
        assert_eq!(got, sets, "{}", m.src);
        let p = ft.top.probability.unwrap_or(0.0);
        assert!((p - total).abs() < 1e-12, "{p} vs {total}\n{}", m.src);
        nonempty += !sets.is_empty() as usize;
        multi += sets.iter().any(|s| s.len() > 1) as usize;
    }
    assert!(nonempty > 20 && multi > 5, "{nonempty} nonempty, {multi} with multi-event sets");
}

#[test]
fn single_fault_fmea_rows_are_the_single_cut_sets() {
    for m in nondegenerate_models(5, 25) {
        let inst = instance(&m.src);
        let tle = inst.event("top").unwrap().clone();
        let mcs = minimal_cut_sets(&inst, &tle, 1, Limits::default()).unwrap();
        let singles: BTreeSet<String> = mcs.cut_sets.iter().map(|c| c.events[0].clone()).collect();
        let table = fmea(&inst, &[tle], 1, Limits::default()).unwrap();
        assert_eq!(table.rows.len(), m.ids.len());
        let effective: BTreeSet<String> =
            table.rows.iter().filter(|r| !r.system_effects.is_empty()).map(|r| r.failure_mode[0].clone()).collect();
        assert_eq!(effective, singles, "{}", m.src);
    }
}

#[test]
fn cut_set_order_limit_truncates() {
    for m in nondegenerate_models(9, 10) {
        let inst = instance(&m.src);
        let tle = inst.event("top").unwrap();
        let (sets, _) = brute_force(&m);
        for k in 1..=3 {
            let r = minimal_cut_sets(&inst, tle, k, Limits::default()).unwrap();
            let want: Vec<Vec<String>> = sets.iter().filter(|s| s.len() <= k).cloned().collect();
            assert_eq!(r.cut_sets.iter().map(|c| c.events.clone()).collect::<Vec<_>>(), want);
        }
    }
}
