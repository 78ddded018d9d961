//! Assume-guarantee contracts: refinement obligations, leaf verification and
//! contract-based fault trees.
//!
//! A component's default contract is the first one it declares. Connected
//! ports are identified by rewriting every port to the port that ultimately
//! drives it inside the composite, so obligations range over one shared
//! vocabulary.

use crate::engine::{
    check_ltl, ltl_valid, EngineError, FaultMode, Limits, Outcome, System, Validity, Verdict, Vocabulary, WordWitness,
};
use crate::expr::{Expr, Ltl, Path};
use crate::instance::{ComponentInstance, InstanceModel};
use crate::model::Contract;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize, JsonSchema)]
pub enum ContractError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("no component instance `{0}`")]
    UnknownComponent(String),
    #[error("`{0}` is not a composite component")]
    NotComposite(String),
    #[error("`{0}` is not a leaf component")]
    NotLeaf(String),
    #[error("component `{0}` has no contract")]
    MissingContract(String),
    #[error("component `{component}` has no contract `{contract}`")]
    UnknownContract { component: String, contract: String },
    #[error("the refinement of `{0}` does not hold, so its contract fault tree is undefined")]
    RefinementInvalid(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

impl ContractError {
    pub fn is_resource(&self) -> bool {
        match self {
            ContractError::Engine(e) => e.is_resource(),
            ContractError::Inconclusive(_) => true,
            _ => false,
        }
    }
}

/// What to do with a sub-component that has no contract.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum MissingContractPolicy {
    /// Leave the sub-component out and record a warning.
    #[default]
    Skip,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObligationKind {
    /// The assumption of sub-component `sub` follows from the context.
    Discharge { sub: String },
    /// The composite guarantee follows from the sub-component guarantees.
    Entailment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Obligation {
    pub kind: ObligationKind,
    pub formula: Ltl,
    /// Qualified names of the contracts involved, e.g. `s1.Relay`.
    pub contracts: Vec<String>,
}

/// A contract after connected ports have been identified.
#[derive(Debug, Clone, PartialEq)]
struct Unified {
    name: String,
    assumption: Ltl,
    guarantee: Ltl,
}

/// Obligations of one composite and the vocabulary they range over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ObligationSet {
    pub component: String,
    pub contract: String,
    pub obligations: Vec<Obligation>,
    pub vocabulary: Vocabulary,
    pub warnings: Vec<String>,
}

struct Prepared {
    component: String,
    top: Unified,
    subs: Vec<(String, Unified)>,
    vocabulary: Vocabulary,
    warnings: Vec<String>,
}

fn display_path(c: &ComponentInstance) -> String {
    if c.path.is_empty() {
        c.block.clone()
    } else {
        c.path.clone()
    }
}

fn contract_of<'a>(c: &'a ComponentInstance, name: Option<&str>) -> Result<&'a Contract, ContractError> {
    match name {
        None => c.contracts.first().ok_or_else(|| ContractError::MissingContract(display_path(c))),
        Some(n) => c
            .contracts
            .iter()
            .find(|k| k.name == n)
            .ok_or_else(|| ContractError::UnknownContract { component: display_path(c), contract: n.to_string() }),
    }
}

fn find<'a>(inst: &'a InstanceModel, path: &str) -> Result<&'a ComponentInstance, ContractError> {
    inst.find(path).ok_or_else(|| ContractError::UnknownComponent(path.to_string()))
}

fn qualified_contract(c: &ComponentInstance, k: &Contract) -> String {
    if c.path.is_empty() {
        format!("{}.{}", c.block, k.name)
    } else {
        format!("{}.{}", c.path, k.name)
    }
}

/// Rewrites every port name to its representative driver.
fn rename(f: &Ltl, rep: &HashMap<String, String>) -> Ltl {
    f.map_atoms(&mut |e: &Expr| {
        e.map_refs(&mut |p: &Path| {
            let name = p.to_string();
            match rep.get(&name) {
                Some(r) => Expr::Ref(Path::parse_ground(r).unwrap_or_else(|| p.clone())),
                None => Expr::Ref(p.clone()),
            }
        })
    })
}

fn prepare(
    composite: &ComponentInstance,
    contract: Option<&str>,
    policy: MissingContractPolicy,
) -> Result<Prepared, ContractError> {
    if composite.is_leaf() {
        return Err(ContractError::NotComposite(display_path(composite)));
    }
    let top = contract_of(composite, contract)?;
    let mut driver: HashMap<String, String> =
        composite.connections.iter().map(|c| (c.target.clone(), c.source.clone())).collect();
    let mut rep: HashMap<String, String> = HashMap::new();
    let keys: Vec<String> = driver.keys().cloned().collect();
    for k in keys {
        let mut cur = k.clone();
        let mut seen = BTreeSet::new();
        while let Some(next) = driver.get(&cur) {
            if !seen.insert(cur.clone()) {
                return Err(EngineError::Composition(format!("connection cycle through `{k}`")).into());
            }
            cur = next.clone();
        }
        rep.insert(k, cur);
    }
    driver.clear();

    let mut vocabulary = Vocabulary::new();
    let mut add_ports = |c: &ComponentInstance| {
        for p in &c.ports {
            let name = rep.get(&p.global).unwrap_or(&p.global);
            vocabulary.insert(name.clone(), p.ty.clone());
        }
        if let Some(sm) = &c.behavior {
            for v in &sm.variables {
                vocabulary.insert(c.qualify(&v.name), v.ty.clone());
            }
        }
    };
    add_ports(composite);
    for ch in &composite.children {
        add_ports(ch);
    }

    let unify = |c: &ComponentInstance, k: &Contract| Unified {
        name: qualified_contract(c, k),
        assumption: rename(&k.assumption, &rep),
        guarantee: rename(&k.guarantee, &rep),
    };
    let mut warnings = Vec::new();
    let mut subs = Vec::new();
    for ch in &composite.children {
        match ch.contracts.first() {
            Some(k) => subs.push((ch.path.clone(), unify(ch, k))),
            None => match policy {
                MissingContractPolicy::Fail => return Err(ContractError::MissingContract(ch.path.clone())),
                MissingContractPolicy::Skip => {
                    warnings.push(format!("sub-component `{}` has no contract and is skipped", ch.path))
                }
            },
        }
    }
    Ok(Prepared { component: display_path(composite), top: unify(composite, top), subs, vocabulary, warnings })
}

impl Prepared {
    /// `(A && conj of G_j for j kept) -> goal`.
    fn implication(&self, keep: &dyn Fn(usize) -> bool, goal: &Ltl) -> Ltl {
        let ctx = std::iter::once(self.top.assumption.clone())
            .chain(self.subs.iter().enumerate().filter(|(j, _)| keep(*j)).map(|(_, (_, u))| u.guarantee.clone()));
        Ltl::implies(Ltl::conj(ctx), goal.clone())
    }

    fn obligations(&self) -> Vec<Obligation> {
        let mut out = Vec::new();
        for (i, (path, u)) in self.subs.iter().enumerate() {
            let mut contracts = vec![self.top.name.clone()];
            contracts.extend(self.subs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, (_, v))| v.name.clone()));
            contracts.push(u.name.clone());
            out.push(Obligation {
                kind: ObligationKind::Discharge { sub: path.clone() },
                formula: self.implication(&|j| j != i, &u.assumption),
                contracts,
            });
        }
        let mut contracts = vec![self.top.name.clone()];
        contracts.extend(self.subs.iter().map(|(_, u)| u.name.clone()));
        out.push(Obligation {
            kind: ObligationKind::Entailment,
            formula: self.implication(&|_| true, &self.top.guarantee),
            contracts,
        });
        out
    }
}

pub fn generate_obligations(
    inst: &InstanceModel,
    component: &str,
    policy: MissingContractPolicy,
) -> Result<ObligationSet, ContractError> {
    let p = prepare(find(inst, component)?, None, policy)?;
    Ok(ObligationSet {
        component: p.component.clone(),
        contract: p.top.name.clone(),
        obligations: p.obligations(),
        vocabulary: p.vocabulary.clone(),
        warnings: p.warnings.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ObligationStatus {
    Holds,
    Violated,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ObligationResult {
    pub obligation: Obligation,
    pub status: ObligationStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<WordWitness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Overall {
    Valid,
    Invalid,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RefinementVerdict {
    pub component: String,
    pub contract: String,
    pub overall: Overall,
    pub obligations: Vec<ObligationResult>,
    pub warnings: Vec<String>,
}

fn decide(
    f: &Ltl,
    vocab: &Vocabulary,
    limits: Limits,
) -> Result<(ObligationStatus, Option<WordWitness>, Option<String>), ContractError> {
    match ltl_valid(f, vocab, limits) {
        Ok(Validity::Valid) => Ok((ObligationStatus::Holds, None, None)),
        Ok(Validity::Invalid { counterexample }) => Ok((ObligationStatus::Violated, Some(counterexample), None)),
        Err(e) if e.is_resource() => Ok((ObligationStatus::Inconclusive, None, Some(e.to_string()))),
        Err(e) => Err(e.into()),
    }
}

pub fn check_refinement(
    inst: &InstanceModel,
    component: &str,
    policy: MissingContractPolicy,
    limits: Limits,
) -> Result<RefinementVerdict, ContractError> {
    let set = generate_obligations(inst, component, policy)?;
    let results = set
        .obligations
        .par_iter()
        .map(|o| {
            decide(&o.formula, &set.vocabulary, limits).map(|(status, witness, reason)| ObligationResult {
                obligation: o.clone(),
                status,
                witness,
                reason,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let overall = if results.iter().any(|r| r.status == ObligationStatus::Violated) {
        Overall::Invalid
    } else if results.iter().any(|r| r.status == ObligationStatus::Inconclusive) {
        Overall::Inconclusive
    } else {
        Overall::Valid
    };
    Ok(RefinementVerdict {
        component: set.component,
        contract: set.contract,
        overall,
        obligations: results,
        warnings: set.warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LeafVerdict {
    pub component: String,
    pub contract: String,
    pub verdict: Verdict,
    /// The assumption admits no execution, so the contract holds vacuously.
    pub vacuous: bool,
    pub warnings: Vec<String>,
}

/// Checks `A -> G` of the leaf's default contract on its machine with every
/// fault inactive.
pub fn verify_leaf(inst: &InstanceModel, component: &str, limits: Limits) -> Result<LeafVerdict, ContractError> {
    let leaf = find(inst, component)?;
    if !leaf.is_leaf() {
        return Err(ContractError::NotLeaf(display_path(leaf)));
    }
    let k = contract_of(leaf, None)?;
    let sys = System::from_instance(inst, &leaf.path)?;
    let f = Ltl::implies(k.assumption.clone(), k.guarantee.clone());
    let verdict = check_ltl(&sys, &f, &FaultMode::AllInactive, limits)?;
    let mut vocab = Vocabulary::new();
    for p in &leaf.ports {
        vocab.insert(p.global.clone(), p.ty.clone());
    }
    if let Some(sm) = &leaf.behavior {
        for v in &sm.variables {
            vocab.insert(leaf.qualify(&v.name), v.ty.clone());
        }
    }
    let vacuous = matches!(ltl_valid(&Ltl::not(k.assumption.clone()), &vocab, limits), Ok(Validity::Valid));
    let mut warnings = Vec::new();
    if vacuous {
        warnings.push(format!(
            "assumption of `{}` is unsatisfiable; the contract holds vacuously",
            qualified_contract(leaf, k)
        ));
    }
    Ok(LeafVerdict { component: display_path(leaf), contract: qualified_contract(leaf, k), verdict, vacuous, warnings })
}

/// Refinement of every composite and verification of every leaf in a
/// sub-tree. The composite is correct when all refinements are valid and all
/// leaves verify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CompositeVerdict {
    pub component: String,
    pub refinements: Vec<RefinementVerdict>,
    pub leaves: Vec<LeafVerdict>,
    pub correct: bool,
}

pub fn verify_composite(
    inst: &InstanceModel,
    component: &str,
    policy: MissingContractPolicy,
    limits: Limits,
) -> Result<CompositeVerdict, ContractError> {
    let root = find(inst, component)?;
    let mut all = Vec::new();
    fn walk<'a>(c: &'a ComponentInstance, out: &mut Vec<&'a ComponentInstance>) {
        out.push(c);
        for ch in &c.children {
            walk(ch, out);
        }
    }
    walk(root, &mut all);
    let mut refinements = Vec::new();
    let mut leaves = Vec::new();
    for c in all {
        if c.contracts.is_empty() {
            continue;
        }
        if c.is_leaf() {
            leaves.push(verify_leaf(inst, &c.path, limits)?);
        } else {
            refinements.push(check_refinement(inst, &c.path, policy, limits)?);
        }
    }
    let correct = refinements.iter().all(|r| r.overall == Overall::Valid)
        && leaves.iter().all(|l| l.verdict.result == Outcome::Holds);
    Ok(CompositeVerdict { component: display_path(root), refinements, leaves, correct })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum CftGate {
    Or,
    And,
    /// Failure of a leaf contract.
    LeafFailure,
    /// Failure of the environment to satisfy the root assumption.
    EnvironmentFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct CftNode {
    pub id: String,
    pub label: String,
    pub gate: CftGate,
    pub children: Vec<String>,
}

/// Fault tree whose events are contract failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ContractFaultTree {
    pub component: String,
    pub top: String,
    /// Nodes in creation order, top first.
    pub nodes: Vec<CftNode>,
}

impl ContractFaultTree {
    pub fn node(&self, id: &str) -> Option<&CftNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Ids of the basic events (leaf and environment failures).
    pub fn leaves(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.gate, CftGate::LeafFailure | CftGate::EnvironmentFailure))
            .map(|n| n.id.as_str())
            .collect()
    }

    /// Gate combinations under the failure node of `component`, each as
    /// the sorted list of sub-component paths whose joint failure breaks
    /// its guarantee.
    pub fn combinations(&self, component: &str) -> Vec<Vec<String>> {
        let Some(node) = self.node(&failure_id(component)) else {
            return Vec::new();
        };
        let mut out: Vec<Vec<String>> = node
            .children
            .iter()
            .filter_map(|c| {
                let n = self.node(c)?;
                match n.gate {
                    CftGate::EnvironmentFailure => None,
                    CftGate::And => Some(n.children.iter().map(|x| component_of(x)).collect()),
                    _ => Some(vec![component_of(c)]),
                }
            })
            .collect();
        for v in &mut out {
            v.sort();
        }
        out.sort();
        out
    }
}

fn failure_id(path: &str) -> String {
    format!("fail:{path}")
}

fn component_of(id: &str) -> String {
    id.strip_prefix("fail:").unwrap_or(id).to_string()
}

/// Inclusion-minimal sets of sub indices whose guarantees, when erased,
/// break the entailment obligation.
fn erasure_sets(p: &Prepared, limits: Limits) -> Result<Vec<Vec<usize>>, ContractError> {
    let n = p.subs.len();
    let holds = |erased: u64| -> Result<bool, ContractError> {
        let f = p.implication(&|j| erased & (1 << j) == 0, &p.top.guarantee);
        match decide(&f, &p.vocabulary, limits)? {
            (ObligationStatus::Holds, ..) => Ok(true),
            (ObligationStatus::Violated, ..) => Ok(false),
            (ObligationStatus::Inconclusive, _, reason) => Err(ContractError::Inconclusive(reason.unwrap_or_default())),
        }
    };
    if !holds(0)? {
        return Err(ContractError::RefinementInvalid(p.component.clone()));
    }
    let mut found: Vec<u64> = Vec::new();
    for k in 1..=n {
        let cands: Vec<u64> =
            (0u64..(1 << n)).filter(|m| m.count_ones() as usize == k && !found.iter().any(|f| f & m == *f)).collect();
        let hits = cands.par_iter().map(|&m| holds(m).map(|h| (!h).then_some(m))).collect::<Result<Vec<_>, _>>()?;
        found.extend(hits.into_iter().flatten());
    }
    let mut sets: Vec<Vec<usize>> = found.into_iter().map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect()).collect();
    sets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(sets)
}

/// Builds the contract fault tree of `component` bottom-up by guarantee
/// erasure.
pub fn contract_safety_tree(
    inst: &InstanceModel,
    component: &str,
    policy: MissingContractPolicy,
    limits: Limits,
) -> Result<ContractFaultTree, ContractError> {
    let root = find(inst, component)?;
    let top_name = display_path(root);
    let mut nodes = Vec::new();
    let mut seen = BTreeSet::new();
    build_node(root, true, policy, limits, &mut nodes, &mut seen)?;
    Ok(ContractFaultTree { component: top_name.clone(), top: failure_id(&top_name), nodes })
}

fn build_node(
    c: &ComponentInstance,
    is_top: bool,
    policy: MissingContractPolicy,
    limits: Limits,
    nodes: &mut Vec<CftNode>,
    seen: &mut BTreeSet<String>,
) -> Result<String, ContractError> {
    let name = display_path(c);
    let id = failure_id(&name);
    if !seen.insert(id.clone()) {
        return Ok(id);
    }
    let contract = contract_of(c, None)?;
    let label = format!("{} fails", qualified_contract(c, contract));
    if c.is_leaf() {
        nodes.push(CftNode { id: id.clone(), label, gate: CftGate::LeafFailure, children: Vec::new() });
        return Ok(id);
    }
    let at = nodes.len();
    nodes.push(CftNode { id: id.clone(), label, gate: CftGate::Or, children: Vec::new() });
    let p = prepare(c, None, policy)?;
    let mut children = Vec::new();
    if is_top {
        let env = format!("env:{name}");
        nodes.push(CftNode {
            id: env.clone(),
            label: format!("environment of {name} violates the assumption"),
            gate: CftGate::EnvironmentFailure,
            children: Vec::new(),
        });
        children.push(env);
    }
    for (g, set) in erasure_sets(&p, limits)?.into_iter().enumerate() {
        let mut ids = Vec::new();
        for i in set {
            let sub = c.children.iter().find(|ch| ch.path == p.subs[i].0).expect("sub exists");
            ids.push(build_node(sub, false, policy, limits, nodes, seen)?);
        }
        if ids.len() == 1 {
            children.push(ids.pop().unwrap_or_default());
        } else {
            let gid = format!("and:{name}:{}", g + 1);
            nodes.push(CftNode {
                id: gid.clone(),
                label: format!(
                    "joint failure of {}",
                    ids.iter().map(|x| component_of(x)).collect::<Vec<_>>().join(", ")
                ),
                gate: CftGate::And,
                children: ids,
            });
            children.push(gid);
        }
    }
    nodes[at].children = children;
    Ok(id)
}
