//! The architecture model: block hierarchy, behavior, error models,
//! contracts, requirements and parameter configurations.
//!
//! All views of a system (requirements, structure, behavior, dependability
//! annotations, deployment tags) are facets of this one value. It is
//! immutable once built and freely shared between analyses.

use crate::expr::{Const, Expr, Ltl, ValueType};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
pub struct ArchitectureModel {
    pub name: String,
    pub blocks: Vec<BlockDef>,
    pub requirements: Vec<Requirement>,
    pub configurations: Vec<Configuration>,
    /// Named top-level events, conditions over the root instance.
    pub events: Vec<TopLevelEventDecl>,
    pub checks: Vec<CheckDecl>,
    pub root: String,
}

impl ArchitectureModel {
    pub fn block(&self, name: &str) -> Option<&BlockDef> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn root_block(&self) -> Option<&BlockDef> {
        self.block(&self.root)
    }

    pub fn event(&self, name: &str) -> Option<&TopLevelEventDecl> {
        self.events.iter().find(|e| e.name == name)
    }

    pub fn configuration(&self, name: &str) -> Option<&Configuration> {
        self.configurations.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
pub struct BlockDef {
    pub name: String,
    pub parameters: Vec<Parameter>,
    pub ports: Vec<PortDef>,
    pub subcomponents: Vec<SubcomponentDef>,
    pub connections: Vec<Connection>,
    pub contracts: Vec<Contract>,
    pub behavior: Option<StateMachine>,
    pub error_models: Vec<ErrorModel>,
    /// Hardware node tag from the deployment view; not analysis-bearing.
    pub allocation: Option<String>,
}

impl BlockDef {
    pub fn is_composite(&self) -> bool {
        !self.subcomponents.is_empty()
    }

    pub fn port(&self, name: &str) -> Option<&PortDef> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn sub(&self, name: &str) -> Option<&SubcomponentDef> {
        self.subcomponents.iter().find(|s| s.name == name)
    }

    pub fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn contract(&self, name: &str) -> Option<&Contract> {
        self.contracts.iter().find(|c| c.name == name)
    }
}

/// Integer parameter with optional bounds and default.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Parameter {
    pub name: String,
    pub bounds: Option<(i64, i64)>,
    pub default: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PortDef {
    pub name: String,
    pub direction: Direction,
    pub ty: ValueType,
    /// `Some` for port arrays (`in x: bool[N]`).
    pub multiplicity: Option<Expr>,
    /// Initial value of an out-port; defaults to the domain minimum.
    pub init: Option<Const>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SubcomponentDef {
    pub name: String,
    pub block: String,
    /// Bindings of the sub-block's parameters, over this block's parameters.
    pub bindings: Vec<(String, Expr)>,
    /// `Some` for sub-component arrays (`sub gen: Generator[N]`).
    pub multiplicity: Option<Expr>,
}

/// One end of a connection: `[sub[idx].]port[idx]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct PortRef {
    pub sub: Option<String>,
    pub sub_index: Option<Expr>,
    pub port: String,
    pub port_index: Option<Expr>,
}

impl PortRef {
    pub fn own(port: &str) -> Self {
        PortRef { sub: None, sub_index: None, port: port.into(), port_index: None }
    }

    pub fn of_sub(sub: &str, port: &str) -> Self {
        PortRef { sub: Some(sub.into()), sub_index: None, port: port.into(), port_index: None }
    }
}

impl std::fmt::Display for PortRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(s) = &self.sub {
            write!(f, "{s}")?;
            if let Some(i) = &self.sub_index {
                write!(f, "[{i}]")?;
            }
            write!(f, ".")?;
        }
        write!(f, "{}", self.port)?;
        if let Some(i) = &self.port_index {
            write!(f, "[{i}]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Connection {
    /// Index variable of a fan-out connection (`connect all i: ...`).
    pub forall: Option<String>,
    pub source: PortRef,
    pub target: PortRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct VarDecl {
    pub name: String,
    pub ty: ValueType,
    pub init: Const,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Assignment {
    pub target: String,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Transition {
    pub source: String,
    pub target: String,
    pub guard: Option<Expr>,
    pub updates: Vec<Assignment>,
}

/// Synchronous nominal behavior of a leaf block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct StateMachine {
    pub variables: Vec<VarDecl>,
    pub states: Vec<String>,
    pub initial: String,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Normal,
    Error,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ErrorState {
    pub name: String,
    pub kind: StateKind,
}

/// Per-demand probability or occurrence rate (per hour).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    Probability(f64),
    Rate(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trigger {
    InternalFault { name: String, likelihood: Likelihood },
    Threat { name: String, agent: String, likelihood: Option<Likelihood> },
    Repair { name: String, rate: Option<f64> },
}

impl Trigger {
    pub fn name(&self) -> &str {
        match self {
            Trigger::InternalFault { name, .. } | Trigger::Threat { name, .. } | Trigger::Repair { name, .. } => name,
        }
    }

    /// Faults and threats are basic events; repairs are not.
    pub fn is_basic_event(&self) -> bool {
        !matches!(self, Trigger::Repair { .. })
    }

    pub fn likelihood(&self) -> Option<Likelihood> {
        match self {
            Trigger::InternalFault { likelihood, .. } => Some(*likelihood),
            Trigger::Threat { likelihood, .. } => *likelihood,
            Trigger::Repair { rate, .. } => rate.map(Likelihood::Rate),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ErrorTransition {
    pub source: String,
    pub target: String,
    pub trigger: Trigger,
    /// Vulnerability condition; only meaningful on threats.
    pub guard: Option<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum CiaProperty {
    Confidentiality,
    Integrity,
    Availability,
}

impl CiaProperty {
    pub const ALL: [CiaProperty; 3] = [CiaProperty::Confidentiality, CiaProperty::Integrity, CiaProperty::Availability];

    pub fn keyword(self) -> &'static str {
        match self {
            CiaProperty::Confidentiality => "confidentiality",
            CiaProperty::Integrity => "integrity",
            CiaProperty::Availability => "availability",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Effect {
    StuckAt { target: String, value: Const },
    CiaLoss { property: CiaProperty },
}

/// Effects attached to one error/failure state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct StateEffects {
    pub state: String,
    pub effects: Vec<Effect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ErrorModel {
    pub name: String,
    pub states: Vec<ErrorState>,
    pub initial: String,
    pub transitions: Vec<ErrorTransition>,
    pub effects: Vec<StateEffects>,
}

impl ErrorModel {
    pub fn state(&self, name: &str) -> Option<&ErrorState> {
        self.states.iter().find(|s| s.name == name)
    }

    pub fn effects_of<'a>(&'a self, state: &'a str) -> impl Iterator<Item = &'a Effect> + 'a {
        self.effects.iter().filter(move |e| e.state == state).flat_map(|e| e.effects.iter())
    }

    /// The enumeration type that exposes the layer's current state as a name.
    pub fn state_type(&self) -> ValueType {
        ValueType::Enum { labels: self.states.iter().map(|s| s.name.clone()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Contract {
    pub name: String,
    pub assumption: Ltl,
    pub guarantee: Ltl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Requirement {
    pub id: String,
    pub text: String,
    /// `Block` or `Block.Contract` references.
    pub satisfied_by: Vec<String>,
    pub parent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Configuration {
    pub name: String,
    pub bindings: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct TopLevelEventDecl {
    pub name: String,
    pub condition: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum FaultModeDecl {
    Inactive,
    Free,
}

/// A named check run by trade-off analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CheckDecl {
    pub name: String,
    pub kind: CheckKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckKind {
    /// Contract refinement of the component at `component` ("" = root).
    Refinement {
        component: String,
    },
    LeafVerification {
        component: String,
    },
    Ltl {
        formula: Ltl,
        faults: FaultModeDecl,
    },
    /// Passes when the top-event probability is at most `threshold`.
    FtaTopProbability {
        event: String,
        max_order: usize,
        threshold: f64,
    },
    /// Passes when the reliability at `mission_time` is at least `threshold`.
    Reliability {
        event: String,
        threshold: f64,
        mission_time: f64,
        trials: u64,
    },
    Reachability {
        condition: Expr,
        faults: FaultModeDecl,
        expect_reachable: bool,
    },
}
