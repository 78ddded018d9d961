//! Executable semantics: fault injection, the synchronous joint system,
//! LTL model checking, reachability and LTL validity.
//!
//! All components step simultaneously. A joint state holds, per leaf, the
//! nominal mode and registers (out-ports and variables), one state per
//! error layer, the free inputs read in that step, and the set of basic
//! events raised so far. In every step each leaf takes one enabled nominal
//! transition (or stutters), each error layer optionally takes one enabled
//! fault/threat or repair, fresh inputs are chosen, and the stuck-at effects
//! of the resulting error states overwrite the stored values.

mod cexpr;
mod check;
mod ltl;
mod machine;
mod system;
mod witness;

pub use cexpr::{compile, compile_as, compile_bool, CExpr, SlotTable};
pub(crate) use check::search_reachable;
pub use check::{check_ltl, check_reachable, ltl_valid, Validity, Vocabulary, WordWitness};
pub use ltl::{Automaton, Nnf};
pub use machine::{inject_faults, ExtendedMachine};
pub use system::{State, System};
pub use witness::{Snapshot, Trace};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Default bound on distinct joint states explored by a single search.
pub const DEFAULT_STATE_CAP: usize = 5_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize, JsonSchema)]
pub enum EngineError {
    #[error("state-space cap of {0} joint states exceeded")]
    StateCap(usize),
    #[error("automaton cap exceeded ({0} nodes)")]
    AutomatonCap(usize),
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("composition error: {0}")]
    Composition(String),
    #[error("unknown basic event `{0}`")]
    UnknownEvent(String),
    #[error("{0}")]
    Model(String),
    #[error("witness does not replay: {0}")]
    Replay(String),
}

impl EngineError {
    /// True for resource exhaustion (exit code 3 at the command line).
    pub fn is_resource(&self) -> bool {
        matches!(self, EngineError::StateCap(_) | EngineError::AutomatonCap(_))
    }
}

/// Which activation flags may be raised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum FaultMode {
    AllInactive,
    Free,
    /// Exactly these basic events may activate.
    Only(BTreeSet<String>),
}

impl From<crate::model::FaultModeDecl> for FaultMode {
    fn from(d: crate::model::FaultModeDecl) -> Self {
        match d {
            crate::model::FaultModeDecl::Inactive => FaultMode::AllInactive,
            crate::model::FaultModeDecl::Free => FaultMode::Free,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Holds,
    Violated,
    Reachable,
    Unreachable,
}

impl Outcome {
    /// Holds and Reachable are the positive answers of their questions.
    pub fn is_positive(self) -> bool {
        matches!(self, Outcome::Holds | Outcome::Reachable)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Verdict {
    pub result: Outcome,
    pub witness: Option<Trace>,
    /// Distinct joint states explored.
    pub states: usize,
}

/// Search limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub state_cap: usize,
    pub automaton_cap: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { state_cap: DEFAULT_STATE_CAP, automaton_cap: 100_000 }
    }
}
