use super::analysis::Analysis;
use super::results::{AnalysisResult, ResultData, Status};
use super::WorkbenchError;
use crate::engine::{FaultMode, Limits};
use crate::model::{ArchitectureModel, CheckDecl, CheckKind, Configuration};
use crate::safety::format_probability;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Pass,
    Fail,
    Inconclusive,
}

/// How a numeric cell value is compared with its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Cell {
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
    pub detail: String,
}

impl Cell {
    /// Status implied by value, threshold and comparison; `None` for
    /// qualitative cells.
    pub fn recompute(&self) -> Option<CellStatus> {
        let (v, t, c) = (self.value?, self.threshold?, self.comparison?);
        let ok = match c {
            Comparison::AtMost => v <= t,
            Comparison::AtLeast => v >= t,
        };
        Some(if ok { CellStatus::Pass } else { CellStatus::Fail })
    }

    fn inconclusive(detail: String) -> Cell {
        Cell { status: CellStatus::Inconclusive, value: None, threshold: None, comparison: None, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TradeoffRow {
    pub configuration: String,
    pub cells: Vec<Cell>,
}

/// Configurations as rows, declared checks as columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TradeoffMatrix {
    pub checks: Vec<String>,
    pub rows: Vec<TradeoffRow>,
    pub seed: u64,
}

impl TradeoffMatrix {
    pub fn cell(&self, configuration: &str, check: &str) -> Option<&Cell> {
        let col = self.checks.iter().position(|c| c == check)?;
        self.rows.iter().find(|r| r.configuration == configuration).map(|r| &r.cells[col])
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.cells.iter().all(|c| c.status == CellStatus::Pass))
    }

    pub fn any_fail(&self) -> bool {
        self.rows.iter().any(|r| r.cells.iter().any(|c| c.status == CellStatus::Fail))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["configuration".to_string()];
        header.extend(self.checks.iter().cloned());
        let _ = w.write_record(&header);
        for r in &self.rows {
            let mut rec = vec![r.configuration.clone()];
            rec.extend(r.cells.iter().map(|c| c.text()));
            let _ = w.write_record(&rec);
        }
        String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
    }
}

impl Cell {
    /// Short rendering for tables: status plus value when present.
    pub fn text(&self) -> String {
        let s = match self.status {
            CellStatus::Pass => "pass",
            CellStatus::Fail => "fail",
            CellStatus::Inconclusive => "inconclusive",
        };
        match self.value {
            Some(v) => format!("{s} ({})", format_probability(v)),
            None => s.to_string(),
        }
    }
}

fn status_cell(r: &AnalysisResult) -> CellStatus {
    match r.status {
        Status::Positive => CellStatus::Pass,
        Status::Negative => CellStatus::Fail,
        Status::Inconclusive => CellStatus::Inconclusive,
    }
}

fn run_check(model: &ArchitectureModel, cfg: &Configuration, check: &CheckDecl, seed: u64, limits: Limits) -> Cell {
    match evaluate(model, cfg, check, seed, limits) {
        Ok(c) => c,
        Err(e) => Cell::inconclusive(e.to_string()),
    }
}

fn evaluate(
    model: &ArchitectureModel,
    cfg: &Configuration,
    check: &CheckDecl,
    seed: u64,
    limits: Limits,
) -> Result<Cell, WorkbenchError> {
    let a = Analysis::for_configuration(model, cfg, limits)?;
    let qualitative = |r: AnalysisResult| Cell {
        status: status_cell(&r),
        value: None,
        threshold: None,
        comparison: None,
        detail: r.summary,
    };
    Ok(match &check.kind {
        CheckKind::Refinement { component } => qualitative(a.refinement_result(Some(component))?),
        CheckKind::LeafVerification { component } => qualitative(a.verification_result(Some(component))?),
        CheckKind::Ltl { formula, faults } => qualitative(a.ltl_result(formula, &FaultMode::from(*faults), None)?),
        CheckKind::Reachability { condition, faults, expect_reachable } => {
            qualitative(a.reachability_expr_result(condition, &FaultMode::from(*faults), *expect_reachable, None)?)
        }
        CheckKind::FtaTopProbability { event, max_order, threshold } => {
            let r = a.fta_result(event, *max_order, Some(*threshold))?;
            let value = match &r.data {
                ResultData::FaultTree { tree } => tree.top.probability,
                _ => None,
            };
            Cell {
                status: status_cell(&r),
                value,
                threshold: Some(*threshold),
                comparison: Some(Comparison::AtMost),
                detail: r.summary,
            }
        }
        CheckKind::Reliability { event, threshold, mission_time, trials } => {
            let r = a.reliability_result(event, *mission_time, *trials, seed, Some(*threshold))?;
            let value = match &r.data {
                ResultData::Reliability { estimates, .. } => {
                    estimates.iter().find(|e| e.reward_name == "system_ok").map(|e| e.point_estimate)
                }
                _ => None,
            };
            Cell {
                status: status_cell(&r),
                value,
                threshold: Some(*threshold),
                comparison: Some(Comparison::AtLeast),
                detail: r.summary,
            }
        }
    })
}

/// Evaluates every check under every configuration. Cells are computed in
/// parallel; row and column order follow the inputs. A check that cannot
/// be evaluated yields an inconclusive cell.
pub fn run_tradeoff(
    model: &ArchitectureModel,
    configs: &[Configuration],
    checks: &[CheckDecl],
    seed: u64,
    limits: Limits,
) -> Result<TradeoffMatrix, WorkbenchError> {
    if configs.is_empty() {
        return Err(WorkbenchError::Model("trade-off analysis needs at least one configuration".into()));
    }
    if checks.is_empty() {
        return Err(WorkbenchError::Model("trade-off analysis needs at least one check".into()));
    }
    let report = crate::validate::validate_core(model);
    if let Some(e) = report.errors().next() {
        return Err(WorkbenchError::Model(e.to_string()));
    }
    let jobs: Vec<(usize, usize)> = (0..configs.len()).flat_map(|r| (0..checks.len()).map(move |c| (r, c))).collect();
    let cells: Vec<Cell> =
        jobs.par_iter().map(|&(r, c)| run_check(model, &configs[r], &checks[c], seed, limits)).collect();
    let mut it = cells.into_iter();
    let rows = configs
        .iter()
        .map(|cfg| TradeoffRow { configuration: cfg.name.clone(), cells: it.by_ref().take(checks.len()).collect() })
        .collect();
    Ok(TradeoffMatrix { checks: checks.iter().map(|c| c.name.clone()).collect(), rows, seed })
}

/// Wraps a matrix as a stored result. Any failing cell makes it negative;
/// otherwise any inconclusive cell makes it inconclusive.
pub fn tradeoff_result(model: &ArchitectureModel, matrix: TradeoffMatrix) -> AnalysisResult {
    let status = if matrix.any_fail() {
        Status::Negative
    } else if matrix.all_pass() {
        Status::Positive
    } else {
        Status::Inconclusive
    };
    AnalysisResult {
        id: format!("tradeoff-{}", model.name),
        title: format!("Trade-off analysis of {}", model.name),
        configuration: matrix.rows.iter().map(|r| r.configuration.as_str()).collect::<Vec<_>>().join(", "),
        inputs: [("checks".to_string(), matrix.checks.join(", "))].into_iter().collect(),
        invocation: None,
        seed: Some(matrix.seed),
        status,
        summary: format!("{} configuration(s) x {} check(s)", matrix.rows.len(), matrix.checks.len()),
        data: ResultData::Tradeoff { matrix },
    }
}
