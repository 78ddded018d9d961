//! Core well-formedness rules of an architecture model.
//!
//! Findings are data: validation never fails, it reports. Element paths use
//! the form `Block.ports.name`, `Block.connections[2]`, `requirements.R1`.

use crate::dsl::Severity;
use crate::expr::{Const, Expr, Ltl, Path, ValueType};
use crate::model::*;
use crate::typing::{self, Resolver, Ty};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Finding {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.findings.iter().any(|f| f.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding { severity: Severity::Error, path: path.into(), message: message.into() });
    }
}

/// Which names an expression inside a block may see.
#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Scope {
    /// Guards and updates of the nominal machine.
    Behavior,
    /// Contract atoms: ports, plus variables for leaf blocks.
    Contract,
    /// Vulnerability guards: ports and variables.
    Guard,
    /// Instance-rooted conditions (top-level events, checks).
    Hierarchical,
}

pub(crate) struct BlockResolver<'a> {
    pub model: &'a ArchitectureModel,
    pub block: &'a BlockDef,
    pub scope: Scope,
    /// Extra integer names such as a fan-out index variable.
    pub ints: &'a [String],
}

impl Resolver for BlockResolver<'_> {
    fn resolve(&self, path: &Path, bound: &[String]) -> Result<Ty, String> {
        let _ = bound;
        if self.scope == Scope::Hierarchical {
            return resolve_hierarchical(self.model, self.block, path, true);
        }
        let [seg] = path.0.as_slice() else {
            return Err(format!("`{path}` is not visible here; only names of this block may be used"));
        };
        if self.ints.contains(&seg.name) && seg.index.is_none() {
            return Ok(Ty::Int);
        }
        resolve_local(self.block, &seg.name, seg.index.is_some(), self.scope, true)
    }
}

fn resolve_local(b: &BlockDef, name: &str, indexed: bool, scope: Scope, params: bool) -> Result<Ty, String> {
    if let Some(p) = b.port(name) {
        return match (p.multiplicity.is_some(), indexed) {
            (true, false) => Err(format!("port array `{name}` must be indexed")),
            (false, true) => Err(format!("port `{name}` is not an array")),
            _ => Ok(Ty::from(&p.ty)),
        };
    }
    let vars_visible = match scope {
        Scope::Behavior | Scope::Guard | Scope::Hierarchical => true,
        Scope::Contract => !b.is_composite(),
    };
    if vars_visible {
        if let Some(v) = b.behavior.as_ref().and_then(|sm| sm.variables.iter().find(|v| v.name == name)) {
            if indexed {
                return Err(format!("variable `{name}` is not an array"));
            }
            return Ok(Ty::from(&v.ty));
        }
    }
    if scope == Scope::Hierarchical {
        if let Some(em) = b.error_models.iter().find(|e| e.name == name) {
            if indexed {
                return Err(format!("error model `{name}` is not an array"));
            }
            return Ok(Ty::from(&em.state_type()));
        }
    }
    if params && !indexed && b.parameter(name).is_some() {
        return Ok(Ty::Int);
    }
    Err(format!("unknown name `{name}` in block `{}`", b.name))
}

/// Resolves `sub[i].sub2.port` style paths starting at `block`.
pub(crate) fn resolve_hierarchical(
    model: &ArchitectureModel,
    block: &BlockDef,
    path: &Path,
    params: bool,
) -> Result<Ty, String> {
    let mut cur = block;
    let n = path.0.len();
    for (k, seg) in path.0.iter().enumerate() {
        if k + 1 == n {
            return resolve_local(cur, &seg.name, seg.index.is_some(), Scope::Hierarchical, params && k == 0);
        }
        let Some(sub) = cur.sub(&seg.name) else {
            return Err(format!("`{}` is not a sub-component of `{}` (in `{path}`)", seg.name, cur.name));
        };
        match (sub.multiplicity.is_some(), seg.index.is_some()) {
            (true, false) => return Err(format!("sub-component array `{}` must be indexed", seg.name)),
            (false, true) => return Err(format!("sub-component `{}` is not an array", seg.name)),
            _ => {}
        }
        cur = model.block(&sub.block).ok_or_else(|| format!("unknown block `{}`", sub.block))?;
    }
    Err("empty path".into())
}

fn ltl_atoms_typecheck(f: &Ltl, r: &dyn Resolver) -> Result<(), String> {
    let mut res = Ok(());
    f.visit_atoms(&mut |a| {
        if res.is_ok() {
            res = typing::check_against(a, &Ty::Bool, r);
        }
    });
    res
}

fn likelihood_ok(l: Likelihood) -> Result<(), String> {
    match l {
        Likelihood::Probability(p) if !(p > 0.0 && p <= 1.0) => Err(format!("probability {p} is not in (0, 1]")),
        Likelihood::Rate(r) if !(r > 0.0 && r.is_finite()) => Err(format!("rate {r} must be positive")),
        _ => Ok(()),
    }
}

/// Checks every core invariant of the model.
pub fn validate_core(model: &ArchitectureModel) -> ValidationReport {
    let mut rep = ValidationReport::default();

    let mut seen = HashSet::new();
    for b in &model.blocks {
        if !seen.insert(b.name.as_str()) {
            rep.error(&b.name, format!("duplicate block name `{}`", b.name));
        }
    }
    if model.root_block().is_none() {
        rep.error("model.root", format!("root block `{}` does not exist", model.root));
    }
    check_hierarchy_acyclic(model, &mut rep);

    let mut fault_names: HashMap<String, String> = HashMap::new();
    for b in &model.blocks {
        validate_block(model, b, &mut rep, &mut fault_names);
    }
    validate_requirements(model, &mut rep);
    validate_configurations(model, &mut rep);
    validate_events_and_checks(model, &mut rep);
    rep
}

fn check_hierarchy_acyclic(model: &ArchitectureModel, rep: &mut ValidationReport) {
    let index: HashMap<&str, usize> = model.blocks.iter().enumerate().map(|(i, b)| (b.name.as_str(), i)).collect();
    let mut state = vec![0u8; model.blocks.len()];
    fn dfs(
        i: usize,
        model: &ArchitectureModel,
        index: &HashMap<&str, usize>,
        state: &mut [u8],
        rep: &mut ValidationReport,
    ) {
        state[i] = 1;
        let b = &model.blocks[i];
        for s in &b.subcomponents {
            let Some(&j) = index.get(s.block.as_str()) else { continue };
            match state[j] {
                0 => dfs(j, model, index, state, rep),
                1 => rep.error(
                    format!("{}.subcomponents.{}", b.name, s.name),
                    format!("block `{}` contains itself through `{}`", s.block, b.name),
                ),
                _ => {}
            }
        }
        state[i] = 2;
    }
    for i in 0..model.blocks.len() {
        if state[i] == 0 {
            dfs(i, model, &index, &mut state, rep);
        }
    }
}

fn check_type(ty: &ValueType, path: &str, rep: &mut ValidationReport) {
    match ty {
        ValueType::Int { lo, hi } if lo > hi => rep.error(path, format!("empty integer range {lo}..{hi}")),
        ValueType::Enum { labels } => {
            if labels.is_empty() {
                rep.error(path, "enumeration needs at least one label");
            }
            let mut s = HashSet::new();
            for l in labels {
                if !s.insert(l) {
                    rep.error(path, format!("duplicate enumeration label `{l}`"));
                }
            }
        }
        _ => {}
    }
}

fn check_param_expr(b: &BlockDef, e: &Expr, extra: &[String], path: &str, what: &str, rep: &mut ValidationReport) {
    let mut bad = Vec::new();
    e.visit_refs(&mut |p| match p.single_name() {
        Some(n) if b.parameter(n).is_some() || extra.iter().any(|x| x == n) => {}
        _ => bad.push(p.to_string()),
    });
    for n in bad {
        rep.error(path, format!("{what} references `{n}`, which is not a parameter of `{}`", b.name));
    }
    if let Expr::Bool(_) | Expr::Quant { .. } = e {
        rep.error(path, format!("{what} must be an integer expression"));
    }
}

fn validate_block(
    model: &ArchitectureModel,
    b: &BlockDef,
    rep: &mut ValidationReport,
    fault_names: &mut HashMap<String, String>,
) {
    let bn = &b.name;
    // Parameters, ports, sub-components, variables and error models share
    // one namespace because expressions refer to all of them by name.
    let dup = |kind: &str, name: &str, rep: &mut ValidationReport, names: &mut HashSet<String>| {
        if !names.insert(name.to_string()) {
            rep.error(format!("{bn}.{kind}.{name}"), format!("duplicate name `{name}` in block `{bn}`"));
        }
    };
    let mut owned: HashSet<String> = HashSet::new();

    for p in &b.parameters {
        dup("parameters", &p.name, rep, &mut owned);
        let path = format!("{bn}.parameters.{}", p.name);
        if let Some((lo, hi)) = p.bounds {
            if lo > hi {
                rep.error(&path, format!("empty parameter range {lo}..{hi}"));
            }
            if let Some(d) = p.default {
                if d < lo || d > hi {
                    rep.error(&path, format!("default {d} is outside {lo}..{hi}"));
                }
            }
        }
    }
    for p in &b.ports {
        dup("ports", &p.name, rep, &mut owned);
        let path = format!("{bn}.ports.{}", p.name);
        check_type(&p.ty, &path, rep);
        if let Some(m) = &p.multiplicity {
            check_param_expr(b, m, &[], &path, "port multiplicity", rep);
        }
        if let Some(init) = &p.init {
            if p.direction == Direction::In {
                rep.error(&path, "only out-ports may declare an initial value");
            } else if p.ty.encode(init).is_none() {
                rep.error(&path, format!("initial value {init} is outside {}", p.ty));
            }
        }
    }
    for s in &b.subcomponents {
        dup("subcomponents", &s.name, rep, &mut owned);
        let path = format!("{bn}.subcomponents.{}", s.name);
        let Some(sb) = model.block(&s.block) else {
            rep.error(&path, format!("unknown block `{}`", s.block));
            continue;
        };
        if let Some(m) = &s.multiplicity {
            check_param_expr(b, m, &[], &path, "sub-component multiplicity", rep);
        }
        for (k, e) in &s.bindings {
            if sb.parameter(k).is_none() {
                rep.error(&path, format!("block `{}` has no parameter `{k}`", sb.name));
            }
            check_param_expr(b, e, &[], &path, "parameter binding", rep);
        }
        let mut bound = HashSet::new();
        for (k, _) in &s.bindings {
            if !bound.insert(k) {
                rep.error(&path, format!("parameter `{k}` bound twice"));
            }
        }
    }
    if let Some(sm) = &b.behavior {
        for v in &sm.variables {
            dup("variables", &v.name, rep, &mut owned);
            let path = format!("{bn}.behavior.{}", v.name);
            check_type(&v.ty, &path, rep);
            if v.ty.encode(&v.init).is_none() {
                rep.error(&path, format!("initial value {} is outside {}", v.init, v.ty));
            }
        }
    }
    for em in &b.error_models {
        dup("error_models", &em.name, rep, &mut owned);
    }
    let mut contract_names = HashSet::new();
    for c in &b.contracts {
        if !contract_names.insert(c.name.as_str()) {
            rep.error(format!("{bn}.contracts.{}", c.name), format!("duplicate contract name `{}`", c.name));
        }
    }

    for (i, c) in b.connections.iter().enumerate() {
        validate_connection(model, b, i, c, rep);
    }

    if b.is_composite() && b.behavior.is_some() {
        rep.error(format!("{bn}.behavior"), "a composite block cannot have a nominal behavior");
    }
    if b.is_composite() && !b.error_models.is_empty() {
        rep.error(format!("{bn}.error_models"), "error models can only be attached to leaf blocks");
    }
    if let Some(sm) = &b.behavior {
        validate_machine(model, b, sm, rep);
    }
    for em in &b.error_models {
        validate_error_model(model, b, em, rep, fault_names);
    }
    for c in &b.contracts {
        let r = BlockResolver { model, block: b, scope: Scope::Contract, ints: &[] };
        for (part, f) in [("assumption", &c.assumption), ("guarantee", &c.guarantee)] {
            if let Err(m) = ltl_atoms_typecheck(f, &r) {
                rep.error(format!("{bn}.contracts.{}.{part}", c.name), m);
            }
        }
    }
}

fn validate_connection(model: &ArchitectureModel, b: &BlockDef, i: usize, c: &Connection, rep: &mut ValidationReport) {
    let path = format!("{}.connections[{i}]", b.name);
    let extra: Vec<String> = c.forall.iter().cloned().collect();
    let mut end = |r: &PortRef, is_source: bool| -> Option<ValueType> {
        for idx in [&r.sub_index, &r.port_index].into_iter().flatten() {
            check_param_expr(b, idx, &extra, &path, "connection index", rep);
        }
        let (owner, own) = match &r.sub {
            None => {
                if r.sub_index.is_some() {
                    rep.error(&path, "malformed port reference");
                    return None;
                }
                (b, true)
            }
            Some(s) => {
                let Some(sub) = b.sub(s) else {
                    rep.error(&path, format!("`{s}` is not a sub-component of `{}`", b.name));
                    return None;
                };
                if sub.multiplicity.is_some() != r.sub_index.is_some() {
                    let m = if r.sub_index.is_some() { "is not an array" } else { "is an array and must be indexed" };
                    rep.error(&path, format!("sub-component `{s}` {m}"));
                    return None;
                }
                (model.block(&sub.block)?, false)
            }
        };
        let Some(p) = owner.port(&r.port) else {
            rep.error(&path, format!("block `{}` has no port `{}`", owner.name, r.port));
            return None;
        };
        if p.multiplicity.is_some() != r.port_index.is_some() {
            let m = if r.port_index.is_some() { "is not an array" } else { "is an array and must be indexed" };
            rep.error(&path, format!("port `{r}` {m}"));
            return None;
        }
        let want = match (is_source, own) {
            (true, false) | (false, true) => Direction::Out,
            _ => Direction::In,
        };
        if p.direction != want {
            let role = if is_source { "source" } else { "target" };
            rep.error(
                &path,
                format!(
                    "direction mismatch: {role} `{r}` must be an {} port of {}",
                    if want == Direction::Out { "out" } else { "in" },
                    if own { "the owner" } else { "a sub-component" }
                ),
            );
            return None;
        }
        Some(p.ty.clone())
    };
    let s = end(&c.source, true);
    let t = end(&c.target, false);
    if let (Some(s), Some(t)) = (s, t) {
        if s != t {
            rep.error(&path, format!("type mismatch: `{}` is {s} but `{}` is {t}", c.source, c.target));
        }
    }
    if let Some(v) = &c.forall {
        let uses = |r: &PortRef| {
            [&r.sub_index, &r.port_index]
                .into_iter()
                .flatten()
                .any(|e| typing::referenced_names(e).iter().any(|n| n == v))
        };
        if !uses(&c.source) && !uses(&c.target) {
            rep.error(&path, format!("fan-out variable `{v}` does not index any array"));
        }
    }
}

fn validate_machine(model: &ArchitectureModel, b: &BlockDef, sm: &StateMachine, rep: &mut ValidationReport) {
    let bn = &b.name;
    let mut states = HashSet::new();
    for s in &sm.states {
        if !states.insert(s.as_str()) {
            rep.error(format!("{bn}.behavior"), format!("duplicate state `{s}`"));
        }
    }
    if sm.states.is_empty() {
        rep.error(format!("{bn}.behavior"), "state machine declares no states");
    }
    if !states.contains(sm.initial.as_str()) {
        rep.error(format!("{bn}.behavior"), format!("initial state `{}` does not exist", sm.initial));
    }
    let r = BlockResolver { model, block: b, scope: Scope::Behavior, ints: &[] };
    for (i, t) in sm.transitions.iter().enumerate() {
        let path = format!("{bn}.behavior.transitions[{i}]");
        for s in [&t.source, &t.target] {
            if !states.contains(s.as_str()) {
                rep.error(&path, format!("unknown state `{s}`"));
            }
        }
        if let Some(g) = &t.guard {
            if let Err(m) = typing::check_against(g, &Ty::Bool, &r) {
                rep.error(&path, m);
            }
        }
        let mut assigned = HashSet::new();
        for u in &t.updates {
            if !assigned.insert(u.target.as_str()) {
                rep.error(&path, format!("`{}` assigned twice", u.target));
            }
            let target_ty = if let Some(v) = sm.variables.iter().find(|v| v.name == u.target) {
                Some(&v.ty)
            } else if let Some(p) = b.port(&u.target).filter(|p| p.direction == Direction::Out) {
                if p.multiplicity.is_some() {
                    rep.error(&path, format!("cannot assign the port array `{}`", u.target));
                    None
                } else {
                    Some(&p.ty)
                }
            } else {
                rep.error(&path, format!("`{}` is not a variable or out-port of `{bn}`", u.target));
                None
            };
            if let Some(ty) = target_ty {
                if let Err(m) = typing::check_against(&u.value, &Ty::from(ty), &r) {
                    rep.error(&path, m);
                }
            }
        }
    }
}

fn validate_error_model(
    model: &ArchitectureModel,
    b: &BlockDef,
    em: &ErrorModel,
    rep: &mut ValidationReport,
    fault_names: &mut HashMap<String, String>,
) {
    let base = format!("{}.error_models.{}", b.name, em.name);
    let mut states = HashSet::new();
    for s in &em.states {
        if !states.insert(s.name.as_str()) {
            rep.error(&base, format!("duplicate error state `{}`", s.name));
        }
    }
    match em.state(&em.initial) {
        None => rep.error(&base, format!("initial state `{}` does not exist", em.initial)),
        Some(s) if s.kind != StateKind::Normal => {
            rep.error(&base, format!("initial state `{}` must be tagged normal", em.initial))
        }
        _ => {}
    }
    let gr = BlockResolver { model, block: b, scope: Scope::Guard, ints: &[] };
    for t in &em.transitions {
        let name = t.trigger.name();
        let path = format!("{base}.transitions.{name}");
        for s in [&t.source, &t.target] {
            if em.state(s).is_none() {
                rep.error(&path, format!("unknown state `{s}`"));
            }
        }
        if let Some(l) = t.trigger.likelihood() {
            if let Err(m) = likelihood_ok(l) {
                rep.error(&path, m);
            }
        }
        // Fault and threat names identify basic events and must be unique
        // across the whole model; repairs share the namespace to keep ids
        // unambiguous.
        let owner = format!("{}.{}", b.name, em.name);
        match fault_names.get(name) {
            Some(prev) => rep.error(&path, format!("event name `{name}` is already used in `{prev}`")),
            None => {
                fault_names.insert(name.to_string(), owner);
            }
        }
        if let Some(g) = &t.guard {
            if !matches!(t.trigger, Trigger::Threat { .. }) {
                rep.error(&path, "only threat transitions may carry a vulnerability guard");
            } else if let Err(m) = typing::check_against(g, &Ty::Bool, &gr) {
                rep.error(&path, m);
            }
        }
    }
    let mut seen_state = HashSet::new();
    for group in &em.effects {
        let path = format!("{base}.effects.{}", group.state);
        if !seen_state.insert(group.state.as_str()) {
            rep.error(&path, "effects for this state are declared in two groups");
        }
        match em.state(&group.state) {
            None => rep.error(&path, format!("unknown state `{}`", group.state)),
            Some(s) if s.kind == StateKind::Normal => {
                rep.error(&path, "effects can only be attached to error or failure states")
            }
            _ => {}
        }
        let mut stuck: BTreeMap<&str, &Const> = BTreeMap::new();
        for e in &group.effects {
            let Effect::StuckAt { target, value } = e else { continue };
            let ty = b
                .behavior
                .as_ref()
                .and_then(|sm| sm.variables.iter().find(|v| &v.name == target))
                .map(|v| &v.ty)
                .or_else(|| {
                    b.port(target).filter(|p| p.direction == Direction::Out && p.multiplicity.is_none()).map(|p| &p.ty)
                });
            match ty {
                None => rep.error(
                    &path,
                    format!("effect target `{target}` is not a variable or scalar out-port of `{}`", b.name),
                ),
                Some(ty) if ty.encode(value).is_none() => rep.error(
                    &path,
                    format!("effect value out of domain: {target} stuck_at {value} but the domain is {ty}"),
                ),
                _ => {}
            }
            if let Some(prev) = stuck.insert(target, value) {
                if prev != value {
                    rep.error(&path, format!("conflicting effects on `{target}`: stuck at {prev} and {value}"));
                }
            }
        }
    }
}

fn validate_requirements(model: &ArchitectureModel, rep: &mut ValidationReport) {
    let mut ids = HashSet::new();
    for r in &model.requirements {
        if !ids.insert(r.id.as_str()) {
            rep.error(format!("requirements.{}", r.id), "duplicate requirement id");
        }
    }
    for r in &model.requirements {
        let path = format!("requirements.{}", r.id);
        for s in &r.satisfied_by {
            let ok = match s.split_once('.') {
                None => model.block(s).is_some(),
                Some((b, c)) => model.block(b).is_some_and(|b| b.contract(c).is_some()),
            };
            if !ok {
                rep.error(&path, format!("`{s}` does not name a block or contract"));
            }
        }
        if let Some(p) = &r.parent {
            if !ids.contains(p.as_str()) {
                rep.error(&path, format!("parent requirement `{p}` does not exist"));
            }
        }
    }
    // Parent links form a forest: walking up from any node must terminate.
    let parent: HashMap<&str, &str> =
        model.requirements.iter().filter_map(|r| r.parent.as_deref().map(|p| (r.id.as_str(), p))).collect();
    let mut reported = HashSet::new();
    for r in &model.requirements {
        let mut cur = r.id.as_str();
        let mut steps = 0;
        while let Some(&p) = parent.get(cur) {
            cur = p;
            steps += 1;
            if steps > parent.len() {
                if reported.insert(cur) {
                    rep.error(format!("requirements.{}", r.id), "parent links form a cycle");
                }
                break;
            }
        }
    }
}

fn validate_configurations(model: &ArchitectureModel, rep: &mut ValidationReport) {
    let Some(root) = model.root_block() else { return };
    let mut names = HashSet::new();
    for c in &model.configurations {
        let path = format!("configurations.{}", c.name);
        if !names.insert(c.name.as_str()) {
            rep.error(&path, "duplicate configuration name");
        }
        for (k, v) in &c.bindings {
            match root.parameter(k) {
                None => rep.error(&path, format!("root block `{}` has no parameter `{k}`", root.name)),
                Some(p) => {
                    if let Some((lo, hi)) = p.bounds {
                        if *v < lo || *v > hi {
                            rep.error(&path, format!("{k} = {v} is outside {lo}..{hi}"));
                        }
                    }
                }
            }
        }
        for p in &root.parameters {
            if !c.bindings.contains_key(&p.name) && p.default.is_none() {
                rep.error(&path, format!("parameter `{}` is not bound", p.name));
            }
        }
        if !rep.has_errors() {
            let env: HashMap<String, i64> = root
                .parameters
                .iter()
                .filter_map(|p| c.bindings.get(&p.name).copied().or(p.default).map(|v| (p.name.clone(), v)))
                .collect();
            check_multiplicities(model, root, &env, &path, 0, rep);
        }
    }
}

/// Evaluates multiplicities through the hierarchy under one configuration.
fn check_multiplicities(
    model: &ArchitectureModel,
    b: &BlockDef,
    env: &HashMap<String, i64>,
    cfg_path: &str,
    depth: usize,
    rep: &mut ValidationReport,
) {
    if depth > model.blocks.len() {
        return;
    }
    let lookup = |n: &str| env.get(n).copied();
    for p in &b.ports {
        if let Some(m) = &p.multiplicity {
            match typing::eval_int(m, &lookup) {
                Ok(k) if k < 1 => rep.error(
                    format!("{}.ports.{}", b.name, p.name),
                    format!("multiplicity evaluates to < 1 ({k}) under {cfg_path}"),
                ),
                Err(e) => rep.error(format!("{}.ports.{}", b.name, p.name), e),
                _ => {}
            }
        }
    }
    for s in &b.subcomponents {
        let path = format!("{}.subcomponents.{}", b.name, s.name);
        if let Some(m) = &s.multiplicity {
            match typing::eval_int(m, &lookup) {
                Ok(k) if k < 1 => rep.error(&path, format!("multiplicity evaluates to < 1 ({k}) under {cfg_path}")),
                Err(e) => rep.error(&path, e),
                _ => {}
            }
        }
        let Some(sb) = model.block(&s.block) else { continue };
        let mut sub_env = HashMap::new();
        for p in &sb.parameters {
            let v = match s.bindings.iter().find(|(k, _)| *k == p.name) {
                Some((_, e)) => typing::eval_int(e, &lookup).ok(),
                None => p.default,
            };
            match v {
                Some(v) => {
                    if let Some((lo, hi)) = p.bounds {
                        if v < lo || v > hi {
                            rep.error(&path, format!("{} = {v} is outside {lo}..{hi} under {cfg_path}", p.name));
                        }
                    }
                    sub_env.insert(p.name.clone(), v);
                }
                None => rep.error(&path, format!("parameter `{}` of `{}` is not bound", p.name, sb.name)),
            }
        }
        check_multiplicities(model, sb, &sub_env, cfg_path, depth + 1, rep);
    }
}

fn validate_events_and_checks(model: &ArchitectureModel, rep: &mut ValidationReport) {
    let Some(root) = model.root_block() else { return };
    let r = BlockResolver { model, block: root, scope: Scope::Hierarchical, ints: &[] };
    let mut names = HashSet::new();
    for e in &model.events {
        let path = format!("events.{}", e.name);
        if !names.insert(e.name.as_str()) {
            rep.error(&path, "duplicate event name");
        }
        if let Err(m) = typing::check_against(&e.condition, &Ty::Bool, &r) {
            rep.error(&path, m);
        }
    }
    let mut names = HashSet::new();
    for c in &model.checks {
        let path = format!("checks.{}", c.name);
        if !names.insert(c.name.as_str()) {
            rep.error(&path, "duplicate check name");
        }
        let threshold = |t: f64, rep: &mut ValidationReport| {
            if !(0.0..=1.0).contains(&t) {
                rep.error(&path, format!("threshold {t} is not in [0, 1]"));
            }
        };
        let event = |e: &str, rep: &mut ValidationReport| {
            if model.event(e).is_none() {
                rep.error(&path, format!("unknown top-level event `{e}`"));
            }
        };
        match &c.kind {
            CheckKind::Refinement { component } | CheckKind::LeafVerification { component } => {
                if let Err(m) = resolve_component_path(model, component) {
                    rep.error(&path, m);
                }
            }
            CheckKind::Ltl { formula, .. } => {
                if let Err(m) = ltl_atoms_typecheck(formula, &r) {
                    rep.error(&path, m);
                }
            }
            CheckKind::FtaTopProbability { event: e, max_order, threshold: t } => {
                event(e, rep);
                threshold(*t, rep);
                if *max_order < 1 {
                    rep.error(&path, "max_order must be at least 1");
                }
            }
            CheckKind::Reliability { event: e, threshold: t, mission_time, trials } => {
                event(e, rep);
                threshold(*t, rep);
                if !(*mission_time > 0.0 && mission_time.is_finite()) {
                    rep.error(&path, "mission time must be positive");
                }
                if *trials < 100 {
                    rep.error(&path, "at least 100 trials are required");
                }
            }
            CheckKind::Reachability { condition, .. } => {
                if let Err(m) = typing::check_against(condition, &Ty::Bool, &r) {
                    rep.error(&path, m);
                }
            }
        }
    }
}

/// Resolves a component path such as `gen[1]` or `a.b` to its block
/// definition ("" is the root).
pub fn resolve_component_path<'a>(model: &'a ArchitectureModel, component: &str) -> Result<&'a BlockDef, String> {
    let mut cur = model.root_block().ok_or_else(|| format!("root block `{}` does not exist", model.root))?;
    if component.is_empty() {
        return Ok(cur);
    }
    let path = Path::parse_ground(component).ok_or_else(|| format!("`{component}` is not a component path"))?;
    // The root block name itself is accepted as an alias of the root.
    if path.single_name() == Some(cur.name.as_str()) && cur.sub(&cur.name).is_none() {
        return Ok(cur);
    }
    for seg in &path.0 {
        let sub =
            cur.sub(&seg.name).ok_or_else(|| format!("`{}` is not a sub-component of `{}`", seg.name, cur.name))?;
        if sub.multiplicity.is_some() != seg.index.is_some() {
            return Err(format!("`{}` in `{component}` has the wrong indexing", seg.name));
        }
        cur = model.block(&sub.block).ok_or_else(|| format!("unknown block `{}`", sub.block))?;
    }
    Ok(cur)
}
