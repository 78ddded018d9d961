//! Orchestration: named analyses with stored results, trade-off matrices,
//! reports and diagrams.

mod analysis;
mod dot;
mod report;
mod results;
mod tradeoff;

pub use analysis::{resolve_component, validation_result, Analysis};
pub use dot::{block_definition_dot, contract_tree_dot, fault_tree_dot, internal_block_dot};
pub use report::{generate_report, ReportFormat, ReportMeta};
pub use results::{load_results, AnalysisResult, ResultData, ResultsFile, Status, SCHEMA_VERSION};
pub use tradeoff::{run_tradeoff, tradeoff_result, Cell, CellStatus, Comparison, TradeoffMatrix, TradeoffRow};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkbenchError {
    /// Malformed model or request.
    #[error("{0}")]
    Model(String),
    /// A state, automaton or event cap was exceeded.
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("results file: {0}")]
    Schema(String),
}

impl WorkbenchError {
    pub fn is_resource(&self) -> bool {
        matches!(self, WorkbenchError::Resource(_))
    }
}

impl From<crate::engine::EngineError> for WorkbenchError {
    fn from(e: crate::engine::EngineError) -> Self {
        if e.is_resource() {
            WorkbenchError::Resource(e.to_string())
        } else {
            WorkbenchError::Model(e.to_string())
        }
    }
}

impl From<crate::safety::SafetyError> for WorkbenchError {
    fn from(e: crate::safety::SafetyError) -> Self {
        if e.is_resource() {
            WorkbenchError::Resource(e.to_string())
        } else {
            WorkbenchError::Model(e.to_string())
        }
    }
}

impl From<crate::contract::ContractError> for WorkbenchError {
    fn from(e: crate::contract::ContractError) -> Self {
        if e.is_resource() {
            WorkbenchError::Resource(e.to_string())
        } else {
            WorkbenchError::Model(e.to_string())
        }
    }
}

impl From<crate::san::SanError> for WorkbenchError {
    fn from(e: crate::san::SanError) -> Self {
        WorkbenchError::Model(e.to_string())
    }
}

impl From<crate::instance::InstanceError> for WorkbenchError {
    fn from(e: crate::instance::InstanceError) -> Self {
        WorkbenchError::Model(e.to_string())
    }
}
