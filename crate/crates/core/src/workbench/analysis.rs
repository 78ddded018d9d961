use super::results::{AnalysisResult, ResultData, Status};
use super::WorkbenchError;
use crate::contract::{
    check_refinement, contract_safety_tree, verify_composite, verify_leaf, MissingContractPolicy, Overall,
};
use crate::dsl::Severity;
use crate::dsl::{parse_expr, parse_ltl};
use crate::engine::{check_ltl, check_reachable, FaultMode, Limits, Outcome, System};
use crate::expr::{Expr, Ltl};
use crate::instance::{
    ground_condition, ground_formula, instantiate, list_configurations, select_configuration, validate_instance,
    InstanceModel, TopLevelEvent,
};
use crate::model::{ArchitectureModel, Configuration};
use crate::safety::{compute_fault_tree, fmea, format_probability};
use crate::san::{simulate, to_san};
use crate::trace::trace_requirements;
use crate::validate::validate_core;
use std::collections::BTreeMap;

/// Identifier-safe rendering for result ids.
fn slug(parts: &[&str]) -> String {
    let mut out = String::new();
    for p in parts.iter().filter(|p| !p.is_empty()) {
        if !out.is_empty() {
            out.push('-');
        }
        for ch in p.chars() {
            if ch.is_ascii_alphanumeric() || ch == '_' {
                out.push(ch);
            } else if !out.ends_with('_') {
                out.push('_');
            }
        }
    }
    out
}

fn fault_mode_name(m: &FaultMode) -> String {
    match m {
        FaultMode::AllInactive => "inactive".into(),
        FaultMode::Free => "free".into(),
        FaultMode::Only(set) => set.iter().cloned().collect::<Vec<_>>().join(","),
    }
}

fn diagnostics(d: Vec<crate::dsl::Diagnostic>) -> WorkbenchError {
    WorkbenchError::Model(d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("\n"))
}

/// Maps a user-facing component name to an instance path: the root may be
/// named by its block.
pub fn resolve_component(inst: &InstanceModel, name: Option<&str>) -> Result<String, WorkbenchError> {
    match name {
        None | Some("") => Ok(String::new()),
        Some(n) if inst.find(n).is_some() => Ok(n.to_string()),
        Some(n) if n == inst.root.block => Ok(String::new()),
        Some(n) => Err(WorkbenchError::Model(format!("no component instance `{n}`"))),
    }
}

/// Static checks of the model and of every configuration's instance.
pub fn validation_result(model: &ArchitectureModel) -> AnalysisResult {
    let mut report = validate_core(model);
    if !report.has_errors() {
        let list = list_configurations(model);
        for w in list.warnings {
            report.findings.push(crate::validate::Finding {
                severity: Severity::Warning,
                path: "model".into(),
                message: w,
            });
        }
        for cfg in &list.configurations {
            match instantiate(model, cfg) {
                Ok(inst) => report.findings.extend(validate_instance(&inst).into_iter().map(|mut f| {
                    f.path = format!("{}@{}", f.path, cfg.name);
                    f
                })),
                Err(e) => report.findings.push(crate::validate::Finding {
                    severity: Severity::Error,
                    path: format!("configuration {}", cfg.name),
                    message: e.to_string(),
                }),
            }
        }
    }
    let errors = report.findings.iter().filter(|f| f.severity == Severity::Error).count();
    let warnings = report.findings.len() - errors;
    AnalysisResult {
        id: slug(&["validation", &model.name]),
        title: format!("Validation of {}", model.name),
        configuration: "all".into(),
        inputs: BTreeMap::new(),
        invocation: None,
        seed: None,
        status: if errors == 0 { Status::Positive } else { Status::Negative },
        summary: format!("{errors} error(s), {warnings} warning(s)"),
        data: ResultData::Validation { report, traceability: trace_requirements(model) },
    }
}

/// An instantiated configuration ready for analyses.
pub struct Analysis<'a> {
    pub model: &'a ArchitectureModel,
    pub inst: InstanceModel,
    pub limits: Limits,
    pub policy: MissingContractPolicy,
}

impl<'a> Analysis<'a> {
    pub fn new(model: &'a ArchitectureModel, config: Option<&str>, limits: Limits) -> Result<Self, WorkbenchError> {
        let rep = validate_core(model);
        if rep.has_errors() {
            let msgs: Vec<String> =
                rep.findings.iter().filter(|f| f.severity == Severity::Error).map(|f| f.to_string()).collect();
            return Err(WorkbenchError::Model(msgs.join("\n")));
        }
        let cfg = select_configuration(model, config).map_err(WorkbenchError::Model)?;
        Self::for_configuration(model, &cfg, limits)
    }

    /// Like [`Analysis::new`] for a configuration that need not be declared
    /// in the model; skips model validation.
    pub fn for_configuration(
        model: &'a ArchitectureModel,
        cfg: &Configuration,
        limits: Limits,
    ) -> Result<Self, WorkbenchError> {
        let inst = instantiate(model, cfg)?;
        Ok(Analysis { model, inst, limits, policy: MissingContractPolicy::Skip })
    }

    pub fn config(&self) -> &str {
        &self.inst.configuration.name
    }

    fn result(
        &self,
        id: &[&str],
        title: String,
        inputs: &[(&str, String)],
        status: Status,
        summary: String,
        data: ResultData,
    ) -> AnalysisResult {
        let mut parts = id.to_vec();
        parts.push(self.config());
        AnalysisResult {
            id: slug(&parts),
            title,
            configuration: self.config().to_string(),
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            invocation: None,
            seed: None,
            status,
            summary,
            data,
        }
    }

    fn event(&self, name: &str) -> Result<&TopLevelEvent, WorkbenchError> {
        self.inst.event(name).ok_or_else(|| WorkbenchError::Model(format!("no top-level event `{name}`")))
    }

    fn component(&self, name: Option<&str>) -> Result<String, WorkbenchError> {
        resolve_component(&self.inst, name)
    }

    fn display(&self, path: &str) -> String {
        if path.is_empty() {
            self.inst.root.block.clone()
        } else {
            path.to_string()
        }
    }

    pub fn instantiate_result(&self) -> AnalysisResult {
        let n = self.inst.instances().len();
        self.result(
            &["instance"],
            format!("Instance of {} under {}", self.model.name, self.config()),
            &[],
            Status::Positive,
            format!("{n} component instance(s), {} leaf instance(s)", self.inst.leaves().len()),
            ResultData::Instance { instance: self.inst.clone() },
        )
    }

    pub fn check_ltl_result(
        &self,
        formula: &str,
        mode: &FaultMode,
        component: Option<&str>,
    ) -> Result<AnalysisResult, WorkbenchError> {
        let f = parse_ltl(formula).map_err(diagnostics)?;
        self.ltl_result(&f, mode, component)
    }

    pub fn ltl_result(
        &self,
        f: &Ltl,
        mode: &FaultMode,
        component: Option<&str>,
    ) -> Result<AnalysisResult, WorkbenchError> {
        let formula = &f.to_string();
        let f = ground_formula(self.model, &self.inst, f)?;
        let scope = self.component(component)?;
        let sys = System::from_instance(&self.inst, &scope)?;
        let verdict = check_ltl(&sys, &f, mode, self.limits)?;
        let holds = verdict.result == Outcome::Holds;
        let faults = fault_mode_name(mode);
        Ok(self.result(
            &["ltl", &scope, formula],
            format!("LTL check on {}", self.display(&scope)),
            &[("formula", formula.to_string()), ("faults", faults.clone()), ("component", self.display(&scope))],
            if holds { Status::Positive } else { Status::Negative },
            format!("{formula} {} ({} states)", if holds { "holds" } else { "is violated" }, verdict.states),
            ResultData::Ltl { formula: formula.to_string(), faults, verdict },
        ))
    }

    /// Positive when reachability matches `expect_reachable`.
    pub fn reachability_result(
        &self,
        condition: &str,
        mode: &FaultMode,
        expect_reachable: bool,
        component: Option<&str>,
    ) -> Result<AnalysisResult, WorkbenchError> {
        let e = parse_expr(condition).map_err(diagnostics)?;
        self.reachability_expr_result(&e, mode, expect_reachable, component)
    }

    pub fn reachability_expr_result(
        &self,
        e: &Expr,
        mode: &FaultMode,
        expect_reachable: bool,
        component: Option<&str>,
    ) -> Result<AnalysisResult, WorkbenchError> {
        let condition = &e.to_string();
        let e = ground_condition(self.model, &self.inst, e)?;
        let scope = self.component(component)?;
        let sys = System::from_instance(&self.inst, &scope)?;
        let verdict = check_reachable(&sys, &e, mode, self.limits)?;
        let reachable = verdict.result == Outcome::Reachable;
        let faults = fault_mode_name(mode);
        Ok(self.result(
            &[if expect_reachable { "reachable" } else { "unreachable" }, &scope, condition],
            format!("Reachability on {}", self.display(&scope)),
            &[
                ("condition", condition.to_string()),
                ("faults", faults.clone()),
                ("expected", if expect_reachable { "reachable" } else { "unreachable" }.to_string()),
            ],
            if reachable == expect_reachable { Status::Positive } else { Status::Negative },
            format!(
                "{condition} is {} ({} states)",
                if reachable { "reachable" } else { "unreachable" },
                verdict.states
            ),
            ResultData::Reachability { condition: condition.to_string(), faults, verdict },
        ))
    }

    pub fn refinement_result(&self, component: Option<&str>) -> Result<AnalysisResult, WorkbenchError> {
        let path = self.component(component)?;
        let v = check_refinement(&self.inst, &path, self.policy, self.limits)?;
        let status = match v.overall {
            Overall::Valid => Status::Positive,
            Overall::Invalid => Status::Negative,
            Overall::Inconclusive => Status::Inconclusive,
        };
        let failed = v.obligations.iter().filter(|o| o.status != crate::contract::ObligationStatus::Holds).count();
        Ok(self.result(
            &["refinement", &path],
            format!("Contract refinement of {}", v.contract),
            &[("component", self.display(&path))],
            status,
            format!("{:?}: {} obligation(s), {failed} not discharged", v.overall, v.obligations.len()).to_lowercase(),
            ResultData::Refinement { verdict: v },
        ))
    }

    /// Leaf verification for a leaf; refinement of every composite plus
    /// verification of every leaf for a composite.
    pub fn verification_result(&self, component: Option<&str>) -> Result<AnalysisResult, WorkbenchError> {
        let path = self.component(component)?;
        let c = self.inst.find(&path).ok_or_else(|| WorkbenchError::Model(format!("no component `{path}`")))?;
        if c.is_leaf() {
            let v = verify_leaf(&self.inst, &path, self.limits)?;
            let holds = v.verdict.result == Outcome::Holds;
            let vac = if v.vacuous { " (vacuously)" } else { "" };
            return Ok(self.result(
                &["verify", &path],
                format!("Verification of {}", v.contract),
                &[("component", self.display(&path))],
                if holds { Status::Positive } else { Status::Negative },
                format!("{} {}{vac}", v.contract, if holds { "holds" } else { "is violated" }),
                ResultData::LeafVerification { verdict: v },
            ));
        }
        let v = verify_composite(&self.inst, &path, self.policy, self.limits)?;
        let inconclusive = v.refinements.iter().any(|r| r.overall == Overall::Inconclusive);
        let status = if v.correct {
            Status::Positive
        } else if inconclusive {
            Status::Inconclusive
        } else {
            Status::Negative
        };
        Ok(self.result(
            &["verify", &path],
            format!("Compositional verification of {}", self.display(&path)),
            &[("component", self.display(&path))],
            status,
            format!(
                "{} refinement(s), {} leaf contract(s); {}",
                v.refinements.len(),
                v.leaves.len(),
                if v.correct { "correct" } else { "not shown correct" }
            ),
            ResultData::Verification { verdict: v },
        ))
    }

    /// Fault tree of `event`; negative when the top probability exceeds
    /// `threshold`, inconclusive when a threshold is given but no
    /// probability can be computed.
    pub fn fta_result(
        &self,
        event: &str,
        max_order: usize,
        threshold: Option<f64>,
    ) -> Result<AnalysisResult, WorkbenchError> {
        let tle = self.event(event)?;
        let tree = compute_fault_tree(&self.inst, tle, max_order, self.limits)?;
        let p = tree.top.probability;
        let status = match (threshold, p) {
            (None, _) => Status::Positive,
            (Some(_), None) => Status::Inconclusive,
            (Some(t), Some(p)) if p <= t => Status::Positive,
            _ => Status::Negative,
        };
        let mut inputs = vec![("event", event.to_string()), ("max_order", max_order.to_string())];
        if let Some(t) = threshold {
            inputs.push(("threshold", t.to_string()));
        }
        let prob = p.map_or_else(|| "no probability".to_string(), |p| format!("p={}", format_probability(p)));
        Ok(self.result(
            &["fta", event],
            format!("Fault tree of {event}"),
            &inputs,
            status,
            format!("{} minimal cut set(s), {prob}", tree.gates.len()),
            ResultData::FaultTree { tree },
        ))
    }

    pub fn fmea_result(&self, events: &[String], cardinality: usize) -> Result<AnalysisResult, WorkbenchError> {
        let tles = if events.is_empty() {
            self.inst.events.clone()
        } else {
            events.iter().map(|e| self.event(e).cloned()).collect::<Result<Vec<_>, _>>()?
        };
        let table = fmea(&self.inst, &tles, cardinality, self.limits)?;
        let effective = table.rows.iter().filter(|r| !r.system_effects.is_empty()).count();
        let names: Vec<&str> = tles.iter().map(|t| t.name.as_str()).collect();
        Ok(self.result(
            &["fmea", &names.join("_"), &cardinality.to_string()],
            format!("FMEA (cardinality {cardinality})"),
            &[("events", names.join(", ")), ("cardinality", cardinality.to_string())],
            Status::Positive,
            format!("{} failure mode(s), {effective} with system effects", table.rows.len()),
            ResultData::Fmea { table },
        ))
    }

    /// Monte-Carlo reliability of the system with respect to `event`;
    /// negative when `system_ok` falls below `threshold`.
    pub fn reliability_result(
        &self,
        event: &str,
        mission_time: f64,
        trials: u64,
        seed: u64,
        threshold: Option<f64>,
    ) -> Result<AnalysisResult, WorkbenchError> {
        let tle = self.event(event)?;
        let san = to_san(&self.inst, tle)?;
        let estimates = simulate(&san, mission_time, trials, seed)?;
        let ok = estimates.iter().find(|e| e.reward_name == "system_ok").map(|e| e.point_estimate).unwrap_or(0.0);
        let status = match threshold {
            Some(t) if ok < t => Status::Negative,
            _ => Status::Positive,
        };
        let mut inputs = vec![
            ("event", event.to_string()),
            ("mission_time", mission_time.to_string()),
            ("trials", trials.to_string()),
            ("seed", seed.to_string()),
        ];
        if let Some(t) = threshold {
            inputs.push(("threshold", t.to_string()));
        }
        let mut r = self.result(
            &["reliability", event],
            format!("Reliability with respect to {event}"),
            &inputs,
            status,
            format!("R({mission_time}) = {ok} over {trials} trials"),
            ResultData::Reliability {
                estimates,
                places: san.places.len(),
                activities: san.timed_activities.len() + san.instantaneous_activities.len(),
            },
        );
        r.seed = Some(seed);
        Ok(r)
    }

    pub fn contract_tree_result(&self, component: Option<&str>) -> Result<AnalysisResult, WorkbenchError> {
        let path = self.component(component)?;
        let tree = contract_safety_tree(&self.inst, &path, self.policy, self.limits)?;
        let n = tree.leaves().len();
        Ok(self.result(
            &["contract_tree", &path],
            format!("Contract fault tree of {}", tree.component),
            &[("component", self.display(&path))],
            Status::Positive,
            format!("{} node(s), {n} basic failure(s)", tree.nodes.len()),
            ResultData::ContractTree { tree },
        ))
    }
}
