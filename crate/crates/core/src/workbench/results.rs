use super::tradeoff::TradeoffMatrix;
use super::WorkbenchError;
use crate::contract::{CompositeVerdict, ContractFaultTree, LeafVerdict, RefinementVerdict};
use crate::engine::Verdict;
use crate::instance::InstanceModel;
use crate::safety::{FaultTree, FmeaTable};
use crate::san::ReliabilityEstimate;
use crate::trace::TraceMatrix;
use crate::validate::ValidationReport;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Version of the stored-results format; other versions are rejected.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Positive,
    Negative,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum ResultData {
    Validation { report: ValidationReport, traceability: TraceMatrix },
    Instance { instance: InstanceModel },
    Ltl { formula: String, faults: String, verdict: Verdict },
    Reachability { condition: String, faults: String, verdict: Verdict },
    Refinement { verdict: RefinementVerdict },
    Verification { verdict: CompositeVerdict },
    LeafVerification { verdict: LeafVerdict },
    FaultTree { tree: FaultTree },
    Fmea { table: FmeaTable },
    Reliability { estimates: Vec<ReliabilityEstimate>, places: usize, activities: usize },
    Tradeoff { matrix: TradeoffMatrix },
    ContractTree { tree: ContractFaultTree },
}

/// One analysis outcome with everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AnalysisResult {
    /// Unique within a results file; reports anchor on it.
    pub id: String,
    pub title: String,
    pub configuration: String,
    /// Analysis inputs such as the top-level event or mission time.
    pub inputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invocation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub status: Status,
    pub summary: String,
    pub data: ResultData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ResultsFile {
    pub schema_version: u32,
    pub tool_version: String,
    pub model: String,
    pub results: Vec<AnalysisResult>,
}

impl ResultsFile {
    pub fn new(model: &str, results: Vec<AnalysisResult>) -> Self {
        ResultsFile {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            model: model.to_string(),
            results,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }
}

/// Parses a stored results file, rejecting other schema versions.
pub fn load_results(text: &str) -> Result<ResultsFile, WorkbenchError> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| WorkbenchError::Schema(e.to_string()))?;
    match v.get("schema_version").and_then(|s| s.as_u64()) {
        Some(n) if n == SCHEMA_VERSION as u64 => {}
        Some(n) => return Err(WorkbenchError::Schema(format!("unsupported schema version {n}"))),
        None => return Err(WorkbenchError::Schema("missing schema_version".into())),
    }
    serde_json::from_value(v).map_err(|e| WorkbenchError::Schema(e.to_string()))
}
