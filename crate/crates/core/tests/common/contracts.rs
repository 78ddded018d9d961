//! Corpus access and the guarantee-erasure oracle for contract trees.

use super::typed_valid;
use depforge_core::contract::{check_refinement, generate_obligations, MissingContractPolicy, ObligationKind, Overall};
use depforge_core::engine::Limits;
use depforge_core::expr::Ltl;
use depforge_core::instance::{instantiate, list_configurations, InstanceModel};
use std::path::{Path, PathBuf};

const SKIP: MissingContractPolicy = MissingContractPolicy::Skip;

pub fn corpus(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(file)
}

pub fn corpus_instances(file: &str) -> Vec<InstanceModel> {
    let model = depforge_core::dsl::load_model(&corpus(file)).unwrap();
    list_configurations(&model).configurations.iter().map(|c| instantiate(&model, c).unwrap()).collect()
}

/// Minimal sets of subs whose guarantee erasure breaks entailment, found by
/// trying all subsets with the typed validity oracle.
pub fn erasure_oracle(inst: &InstanceModel, component: &str) -> Vec<Vec<String>> {
    let set = generate_obligations(inst, component, SKIP).unwrap();
    let comp = inst.find(component).unwrap();
    let subs: Vec<&str> = comp.children.iter().filter(|c| !c.contracts.is_empty()).map(|c| c.path.as_str()).collect();
    let ent = set.obligations.iter().find(|o| o.kind == ObligationKind::Entailment).unwrap();
    // Entailment is `(A && G1 && ... && Gn) -> G`; rebuild it from its parts.
    let Ltl::Implies(ctx, goal) = &ent.formula else { panic!("{}", ent.formula) };
    let mut parts = Vec::new();
    fn flatten(f: &Ltl, out: &mut Vec<Ltl>) {
        match f {
            Ltl::And(a, b) => {
                flatten(a, out);
                flatten(b, out);
            }
            other => out.push(other.clone()),
        }
    }
    flatten(ctx, &mut parts);
    let assumption_parts = parts.len() - subs.len();
    let n = subs.len();
    let mut breaking: Vec<u32> = Vec::new();
    for m in 0u32..(1 << n) {
        let kept =
            parts.iter().enumerate().filter(|(i, _)| *i < assumption_parts || m & (1 << (i - assumption_parts)) == 0);
        let f = Ltl::implies(Ltl::conj(kept.map(|(_, p)| p.clone())), (**goal).clone());
        if !typed_valid(&f, &set.vocabulary) {
            breaking.push(m);
        }
    }
    let mut sets: Vec<Vec<String>> = breaking
        .iter()
        .filter(|&&m| !breaking.iter().any(|&o| o != m && o & m == o))
        .map(|&m| {
            let mut v: Vec<String> = (0..n).filter(|i| m & (1 << i) != 0).map(|i| subs[i].to_string()).collect();
            v.sort();
            v
        })
        .collect();
    sets.sort();
    sets
}

/// Every corpus composite with at most three contracted subs and a valid
/// refinement.
pub fn small_valid_composites() -> Vec<(String, InstanceModel, String)> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(corpus("")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "dep") || path.ends_with("broken.dep") {
            continue;
        }
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        for inst in corpus_instances(&name) {
            let comps: Vec<String> = inst
                .instances()
                .iter()
                .filter(|c| !c.is_leaf() && !c.contracts.is_empty())
                .filter(|c| c.children.iter().filter(|s| !s.contracts.is_empty()).count() <= 3)
                .map(|c| c.path.clone())
                .collect();
            for c in comps {
                let v = check_refinement(&inst, &c, SKIP, Limits::default()).unwrap();
                if v.overall == Overall::Valid {
                    out.push((format!("{name}:{}:{c}", inst.configuration.name), inst.clone(), c));
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}
