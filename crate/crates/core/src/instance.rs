//! Instantiation of parameterized architectures.
//!
//! Every expression in an [`InstanceModel`] is ground: parameters are
//! replaced by their values, quantifiers are expanded, names are qualified
//! with the instance path (`gen[1].energy`) and enumeration labels become
//! [`Expr::Label`].

use crate::dsl::Severity;
use crate::expr::{Const, Expr, Ltl, Path, Quantifier, Segment, ValueType};
use crate::model::*;
use crate::typing;
use crate::validate::Finding;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize, JsonSchema)]
pub enum InstanceError {
    #[error("unbound parameter `{param}` of block `{block}`")]
    UnboundParameter { block: String, param: String },
    #[error("parameter `{param}` of block `{block}` = {value} is outside {lo}..{hi}")]
    ParameterOutOfBounds { block: String, param: String, value: i64, lo: i64, hi: i64 },
    #[error("multiplicity evaluates to < 1 ({value}) for `{element}`")]
    Multiplicity { element: String, value: i64 },
    #[error("index {index} out of range 0..{len} in `{element}`")]
    IndexOutOfRange { element: String, index: i64, len: usize },
    #[error("unknown block `{0}`")]
    UnknownBlock(String),
    #[error("configuration binds `{0}`, which is not a parameter of the root block")]
    UnknownParameter(String),
    #[error("{0}")]
    Eval(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct InstancePort {
    /// Local name including the index, e.g. `in[2]`.
    pub name: String,
    /// Qualified name, e.g. `col.in[2]`.
    pub global: String,
    pub direction: Direction,
    pub ty: ValueType,
    pub init: Option<Const>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct InstanceConnection {
    /// Path of the composite that declares the connection.
    pub owner: String,
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ComponentInstance {
    /// Instance path; `""` for the root.
    pub path: String,
    pub block: String,
    pub parameters: BTreeMap<String, i64>,
    pub ports: Vec<InstancePort>,
    pub contracts: Vec<Contract>,
    /// Nominal machine with qualified names (leaves only).
    pub behavior: Option<StateMachine>,
    /// Error models with qualified guards and effect targets.
    pub error_models: Vec<ErrorModel>,
    pub children: Vec<ComponentInstance>,
    pub connections: Vec<InstanceConnection>,
    pub allocation: Option<String>,
}

impl ComponentInstance {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Qualifies a local name with this instance's path.
    pub fn qualify(&self, local: &str) -> String {
        if self.path.is_empty() {
            local.to_string()
        } else {
            format!("{}.{local}", self.path)
        }
    }

    pub fn port(&self, name: &str) -> Option<&InstancePort> {
        self.ports.iter().find(|p| p.name == name)
    }

    /// Basic-event id of a fault or threat of this instance.
    pub fn event_id(&self, fault: &str) -> String {
        self.qualify(fault)
    }

    fn walk<'a>(&'a self, out: &mut Vec<&'a ComponentInstance>) {
        out.push(self);
        for c in &self.children {
            c.walk(out);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TopLevelEvent {
    pub name: String,
    pub condition: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct InstanceModel {
    pub model: String,
    pub configuration: Configuration,
    pub root: ComponentInstance,
    pub events: Vec<TopLevelEvent>,
}

impl InstanceModel {
    /// All instances in depth-first declaration order, root first.
    pub fn instances(&self) -> Vec<&ComponentInstance> {
        let mut out = Vec::new();
        self.root.walk(&mut out);
        out
    }

    pub fn leaves(&self) -> Vec<&ComponentInstance> {
        self.instances().into_iter().filter(|c| c.is_leaf()).collect()
    }

    /// Finds an instance by path. The root is found by `""` or by the root
    /// block's name.
    pub fn find(&self, path: &str) -> Option<&ComponentInstance> {
        if path.is_empty() || (path == self.root.block && self.root.children.iter().all(|c| c.path != path)) {
            return Some(&self.root);
        }
        self.instances().into_iter().find(|c| c.path == path)
    }

    pub fn connections(&self) -> Vec<&InstanceConnection> {
        self.instances().into_iter().flat_map(|c| c.connections.iter()).collect()
    }

    pub fn event(&self, name: &str) -> Option<&TopLevelEvent> {
        self.events.iter().find(|e| e.name == name)
    }
}

/// Result of [`list_configurations`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ConfigurationList {
    pub configurations: Vec<Configuration>,
    pub warnings: Vec<String>,
}

/// Declared configurations in order, or an implicit `default` when none are
/// declared and every root parameter has a default.
pub fn list_configurations(model: &ArchitectureModel) -> ConfigurationList {
    if !model.configurations.is_empty() {
        return ConfigurationList { configurations: model.configurations.clone(), warnings: Vec::new() };
    }
    let Some(root) = model.root_block() else {
        return ConfigurationList {
            configurations: Vec::new(),
            warnings: vec![format!("root block `{}` does not exist", model.root)],
        };
    };
    let missing: Vec<&str> = root.parameters.iter().filter(|p| p.default.is_none()).map(|p| p.name.as_str()).collect();
    if !missing.is_empty() {
        return ConfigurationList {
            configurations: Vec::new(),
            warnings: vec![format!(
                "no configurations declared and parameter(s) {} have no default",
                missing.join(", ")
            )],
        };
    }
    let bindings = root.parameters.iter().filter_map(|p| p.default.map(|d| (p.name.clone(), d))).collect();
    ConfigurationList { configurations: vec![Configuration { name: "default".into(), bindings }], warnings: Vec::new() }
}

/// The configuration with the given name, or the only/implicit one when
/// `name` is `None`.
pub fn select_configuration(model: &ArchitectureModel, name: Option<&str>) -> Result<Configuration, String> {
    let list = list_configurations(model);
    match name {
        Some(n) => {
            list.configurations.into_iter().find(|c| c.name == n).ok_or_else(|| format!("unknown configuration `{n}`"))
        }
        None => list
            .configurations
            .into_iter()
            .next()
            .ok_or_else(|| list.warnings.into_iter().next().unwrap_or_else(|| "model has no configuration".into())),
    }
}

fn check_bounds(p: &Parameter, block: &str, value: i64) -> Result<(), InstanceError> {
    if let Some((lo, hi)) = p.bounds {
        if value < lo || value > hi {
            return Err(InstanceError::ParameterOutOfBounds {
                block: block.into(),
                param: p.name.clone(),
                value,
                lo,
                hi,
            });
        }
    }
    Ok(())
}

/// Expands `model` under `config` into a flat instance tree.
pub fn instantiate(model: &ArchitectureModel, config: &Configuration) -> Result<InstanceModel, InstanceError> {
    let root = model.root_block().ok_or_else(|| InstanceError::UnknownBlock(model.root.clone()))?;
    for k in config.bindings.keys() {
        if root.parameter(k).is_none() {
            return Err(InstanceError::UnknownParameter(k.clone()));
        }
    }
    let mut env = BTreeMap::new();
    for p in &root.parameters {
        let v = config
            .bindings
            .get(&p.name)
            .copied()
            .or(p.default)
            .ok_or_else(|| InstanceError::UnboundParameter { block: root.name.clone(), param: p.name.clone() })?;
        check_bounds(p, &root.name, v)?;
        env.insert(p.name.clone(), v);
    }
    let root_inst = build(model, root, Vec::new(), env, 0)?;
    let g = Grounder { block: root, prefix: &[], env: &root_inst.parameters };
    let events = model
        .events
        .iter()
        .map(|e| Ok(TopLevelEvent { name: e.name.clone(), condition: g.expr(&e.condition)? }))
        .collect::<Result<_, InstanceError>>()?;
    Ok(InstanceModel { model: model.name.clone(), configuration: config.clone(), root: root_inst, events })
}

/// Grounds a root-scoped condition (CLI input, checks) against an instance.
pub fn ground_condition(model: &ArchitectureModel, inst: &InstanceModel, e: &Expr) -> Result<Expr, InstanceError> {
    let root = model.root_block().ok_or_else(|| InstanceError::UnknownBlock(model.root.clone()))?;
    Grounder { block: root, prefix: &[], env: &inst.root.parameters }.expr(e)
}

/// Grounds a root-scoped LTL formula against an instance.
pub fn ground_formula(model: &ArchitectureModel, inst: &InstanceModel, f: &Ltl) -> Result<Ltl, InstanceError> {
    let root = model.root_block().ok_or_else(|| InstanceError::UnknownBlock(model.root.clone()))?;
    Grounder { block: root, prefix: &[], env: &inst.root.parameters }.ltl(f)
}

const MAX_DEPTH: usize = 64;

fn build(
    model: &ArchitectureModel,
    b: &BlockDef,
    prefix: Vec<Segment>,
    env: BTreeMap<String, i64>,
    depth: usize,
) -> Result<ComponentInstance, InstanceError> {
    if depth > MAX_DEPTH {
        return Err(InstanceError::Eval(format!("block hierarchy deeper than {MAX_DEPTH} at `{}`", b.name)));
    }
    let path = Path(prefix.clone()).to_string();
    let g = Grounder { block: b, prefix: &prefix, env: &env };
    let qualify = |local: &str| if path.is_empty() { local.to_string() } else { format!("{path}.{local}") };

    let mut ports = Vec::new();
    for p in &b.ports {
        match &p.multiplicity {
            None => ports.push(InstancePort {
                name: p.name.clone(),
                global: qualify(&p.name),
                direction: p.direction,
                ty: p.ty.clone(),
                init: p.init.clone(),
            }),
            Some(m) => {
                let k = g.multiplicity(m, &qualify(&p.name))?;
                for i in 0..k {
                    let name = format!("{}[{i}]", p.name);
                    ports.push(InstancePort {
                        global: qualify(&name),
                        name,
                        direction: p.direction,
                        ty: p.ty.clone(),
                        init: p.init.clone(),
                    });
                }
            }
        }
    }

    let mut children = Vec::new();
    let mut sizes: HashMap<&str, Option<usize>> = HashMap::new();
    let mut sub_envs: HashMap<&str, BTreeMap<String, i64>> = HashMap::new();
    for s in &b.subcomponents {
        let sb = model.block(&s.block).ok_or_else(|| InstanceError::UnknownBlock(s.block.clone()))?;
        let mut sub_env = BTreeMap::new();
        for p in &sb.parameters {
            let v = match s.bindings.iter().find(|(k, _)| *k == p.name) {
                Some((_, e)) => g.int(e, &[])?,
                None => p
                    .default
                    .ok_or_else(|| InstanceError::UnboundParameter { block: sb.name.clone(), param: p.name.clone() })?,
            };
            check_bounds(p, &sb.name, v)?;
            sub_env.insert(p.name.clone(), v);
        }
        sub_envs.insert(&s.name, sub_env.clone());
        match &s.multiplicity {
            None => {
                sizes.insert(&s.name, None);
                let mut pre = prefix.clone();
                pre.push(Segment::plain(&s.name));
                children.push(build(model, sb, pre, sub_env, depth + 1)?);
            }
            Some(m) => {
                let k = g.multiplicity(m, &qualify(&s.name))?;
                sizes.insert(&s.name, Some(k as usize));
                for i in 0..k {
                    let mut pre = prefix.clone();
                    pre.push(Segment::indexed(&s.name, i));
                    children.push(build(model, sb, pre, sub_env.clone(), depth + 1)?);
                }
            }
        }
    }

    let mut connections = Vec::new();
    for (ci, c) in b.connections.iter().enumerate() {
        let element = format!("{}.connections[{ci}]", b.name);
        let port_len = |r: &PortRef| -> Option<usize> {
            let owner = match &r.sub {
                None => b,
                Some(s) => model.block(&b.sub(s)?.block)?,
            };
            let env_owner = match &r.sub {
                None => &env,
                Some(s) => sub_envs.get(s.as_str())?,
            };
            let m = owner.port(&r.port)?.multiplicity.as_ref()?;
            typing::eval_int(m, &|n| env_owner.get(n).copied()).ok().map(|v| v as usize)
        };
        let range: Vec<Option<i64>> = match &c.forall {
            None => vec![None],
            Some(v) => {
                let uses =
                    |e: &Option<Expr>| e.as_ref().is_some_and(|e| typing::referenced_names(e).iter().any(|n| n == v));
                let len = [&c.source, &c.target]
                    .into_iter()
                    .find_map(|r| {
                        if uses(&r.sub_index) {
                            r.sub.as_deref().and_then(|s| sizes.get(s).copied().flatten())
                        } else if uses(&r.port_index) {
                            port_len(r)
                        } else {
                            None
                        }
                    })
                    .ok_or_else(|| {
                        InstanceError::Eval(format!("cannot determine the range of `{v}` in `{element}`"))
                    })?;
                (0..len as i64).map(Some).collect()
            }
        };
        for iv in range {
            let q: Vec<(String, i64)> = match (&c.forall, iv) {
                (Some(v), Some(i)) => vec![(v.clone(), i)],
                _ => Vec::new(),
            };
            let end = |r: &PortRef| -> Result<String, InstanceError> {
                let mut local = String::new();
                if let Some(s) = &r.sub {
                    local.push_str(s);
                    if let Some(ix) = &r.sub_index {
                        let i = g.int(ix, &q)?;
                        let len = sizes.get(s.as_str()).copied().flatten().unwrap_or(0);
                        if i < 0 || i as usize >= len {
                            return Err(InstanceError::IndexOutOfRange { element: element.clone(), index: i, len });
                        }
                        local.push_str(&format!("[{i}]"));
                    }
                    local.push('.');
                }
                local.push_str(&r.port);
                if let Some(ix) = &r.port_index {
                    let i = g.int(ix, &q)?;
                    let len = port_len(r).unwrap_or(0);
                    if i < 0 || i as usize >= len {
                        return Err(InstanceError::IndexOutOfRange { element: element.clone(), index: i, len });
                    }
                    local.push_str(&format!("[{i}]"));
                }
                Ok(qualify(&local))
            };
            let source = end(&c.source)?;
            let target = end(&c.target)?;
            connections.push(InstanceConnection { owner: path.clone(), source, target });
        }
    }

    let contracts = b
        .contracts
        .iter()
        .map(|c| {
            Ok(Contract { name: c.name.clone(), assumption: g.ltl(&c.assumption)?, guarantee: g.ltl(&c.guarantee)? })
        })
        .collect::<Result<_, InstanceError>>()?;

    let behavior = match &b.behavior {
        None => None,
        Some(sm) => Some(StateMachine {
            variables: sm
                .variables
                .iter()
                .map(|v| VarDecl { name: qualify(&v.name), ty: v.ty.clone(), init: v.init.clone() })
                .collect(),
            states: sm.states.clone(),
            initial: sm.initial.clone(),
            transitions: sm
                .transitions
                .iter()
                .map(|t| {
                    Ok(Transition {
                        source: t.source.clone(),
                        target: t.target.clone(),
                        guard: t.guard.as_ref().map(|e| g.expr(e)).transpose()?,
                        updates: t
                            .updates
                            .iter()
                            .map(|u| Ok(Assignment { target: qualify(&u.target), value: g.expr(&u.value)? }))
                            .collect::<Result<_, InstanceError>>()?,
                    })
                })
                .collect::<Result<_, InstanceError>>()?,
        }),
    };

    let error_models = b
        .error_models
        .iter()
        .map(|em| {
            Ok(ErrorModel {
                name: em.name.clone(),
                states: em.states.clone(),
                initial: em.initial.clone(),
                transitions: em
                    .transitions
                    .iter()
                    .map(|t| {
                        Ok(ErrorTransition { guard: t.guard.as_ref().map(|e| g.expr(e)).transpose()?, ..t.clone() })
                    })
                    .collect::<Result<_, InstanceError>>()?,
                effects: em
                    .effects
                    .iter()
                    .map(|se| StateEffects {
                        state: se.state.clone(),
                        effects: se
                            .effects
                            .iter()
                            .map(|e| match e {
                                Effect::StuckAt { target, value } => {
                                    Effect::StuckAt { target: qualify(target), value: value.clone() }
                                }
                                other => other.clone(),
                            })
                            .collect(),
                    })
                    .collect(),
            })
        })
        .collect::<Result<_, InstanceError>>()?;

    Ok(ComponentInstance {
        path,
        block: b.name.clone(),
        parameters: env.clone(),
        ports,
        contracts,
        behavior,
        error_models,
        children,
        connections,
        allocation: b.allocation.clone(),
    })
}

/// Rewrites expressions of one block into ground, qualified form.
struct Grounder<'a> {
    block: &'a BlockDef,
    prefix: &'a [Segment],
    env: &'a BTreeMap<String, i64>,
}

impl Grounder<'_> {
    fn int(&self, e: &Expr, q: &[(String, i64)]) -> Result<i64, InstanceError> {
        typing::eval_int(e, &|n| {
            q.iter().rev().find(|(k, _)| k == n).map(|(_, v)| *v).or_else(|| self.env.get(n).copied())
        })
        .map_err(InstanceError::Eval)
    }

    fn multiplicity(&self, e: &Expr, element: &str) -> Result<i64, InstanceError> {
        let k = self.int(e, &[])?;
        if k < 1 {
            return Err(InstanceError::Multiplicity { element: element.into(), value: k });
        }
        Ok(k)
    }

    fn is_local_value(&self, name: &str) -> bool {
        let b = self.block;
        b.port(name).is_some()
            || b.error_models.iter().any(|e| e.name == name)
            || b.behavior.as_ref().is_some_and(|sm| sm.variables.iter().any(|v| v.name == name))
    }

    fn expr(&self, e: &Expr) -> Result<Expr, InstanceError> {
        self.expr_q(e, &mut Vec::new())
    }

    fn expr_q(&self, e: &Expr, q: &mut Vec<(String, i64)>) -> Result<Expr, InstanceError> {
        Ok(match e {
            Expr::Bool(_) | Expr::Int(_) | Expr::Label(_) => e.clone(),
            Expr::Ref(p) => {
                if let Some(n) = p.single_name() {
                    if let Some((_, v)) = q.iter().rev().find(|(k, _)| k == n) {
                        return Ok(Expr::Int(*v));
                    }
                    if !self.is_local_value(n) {
                        if let Some(v) = self.env.get(n) {
                            return Ok(Expr::Int(*v));
                        }
                        if self.block.sub(n).is_none() {
                            return Ok(Expr::Label(n.to_string()));
                        }
                    }
                }
                let mut segs = self.prefix.to_vec();
                for s in &p.0 {
                    let index = match &s.index {
                        None => None,
                        Some(ix) => Some(Box::new(Expr::Int(self.int(ix, q)?))),
                    };
                    segs.push(Segment { name: s.name.clone(), index });
                }
                Expr::Ref(Path(segs))
            }
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(self.expr_q(a, q)?)),
            Expr::Binary(op, a, b) => Expr::bin(*op, self.expr_q(a, q)?, self.expr_q(b, q)?),
            Expr::Quant { kind, var, bound, body } => {
                let n = self.int(bound, q)?;
                let mut parts = Vec::new();
                for i in 0..n.max(0) {
                    q.push((var.clone(), i));
                    let part = self.expr_q(body, q);
                    q.pop();
                    parts.push(part?);
                }
                let (op, unit) = match kind {
                    Quantifier::Forall => (crate::expr::BinOp::And, true),
                    Quantifier::Exists => (crate::expr::BinOp::Or, false),
                };
                parts.into_iter().reduce(|a, b| Expr::bin(op, a, b)).unwrap_or(Expr::Bool(unit))
            }
        })
    }

    fn ltl(&self, f: &Ltl) -> Result<Ltl, InstanceError> {
        let err = RefCell::new(None);
        let out = f.map_atoms(&mut |a| match self.expr(a) {
            Ok(e) => e,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                a.clone()
            }
        });
        match err.into_inner() {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }
}

/// Instance-level analogue of [`crate::validate::validate_core`]: resolved
/// connections, single drivers and unique paths.
pub fn validate_instance(inst: &InstanceModel) -> Vec<Finding> {
    let mut out = Vec::new();
    let mut err = |path: &str, msg: String| {
        out.push(Finding { severity: Severity::Error, path: path.to_string(), message: msg });
    };
    let instances = inst.instances();
    let mut paths = HashSet::new();
    let mut ports: HashMap<String, (&InstancePort, bool)> = HashMap::new();
    for c in &instances {
        if !paths.insert(c.path.as_str()) {
            err(&c.path, "duplicate instance path".into());
        }
        for p in &c.ports {
            ports.insert(p.global.clone(), (p, c.path.is_empty()));
        }
    }
    let mut drivers: HashMap<&str, &str> = HashMap::new();
    for c in inst.connections() {
        let at = format!("{} -> {}", c.source, c.target);
        match (ports.get(&c.source), ports.get(&c.target)) {
            (Some((s, _)), Some((t, _))) => {
                if s.ty != t.ty {
                    err(&at, format!("type mismatch: {} vs {}", s.ty, t.ty));
                }
            }
            _ => err(&at, "connection endpoint does not resolve to a port".into()),
        }
        if let Some(prev) = drivers.insert(&c.target, &c.source) {
            err(&at, format!("`{}` is driven by both `{prev}` and `{}`", c.target, c.source));
        }
    }
    for c in &instances {
        if c.is_leaf() && c.children.is_empty() && !c.connections.is_empty() {
            err(&c.path, "a leaf instance cannot declare connections".into());
        }
        if !c.contracts.iter().all(|k| is_ground_ltl(&k.assumption) && is_ground_ltl(&k.guarantee)) {
            err(&c.path, "contract atoms are not ground".into());
        }
    }
    out
}

fn is_ground_ltl(f: &Ltl) -> bool {
    let mut ok = true;
    f.visit_atoms(&mut |a| ok &= is_ground(a));
    ok
}

fn is_ground(e: &Expr) -> bool {
    match e {
        Expr::Quant { .. } => false,
        Expr::Ref(p) => p.is_ground(),
        Expr::Unary(_, a) => is_ground(a),
        Expr::Binary(_, a, b) => is_ground(a) && is_ground(b),
        _ => true,
    }
}
