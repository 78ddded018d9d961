//! Fault tree analysis and FMEA over instance models with injected faults.
//!
//! A set of basic events is a cut set of a top-level event when the event's
//! condition is reachable with exactly those events allowed to activate.
//! Activation is latched, so the cut sets are upward closed and minimal cut
//! sets can be found level by level with superset pruning.

use crate::engine::{search_reachable, CExpr, EngineError, Limits, System};
use crate::instance::{InstanceModel, TopLevelEvent};
use crate::model::{Likelihood, StateKind};
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Hard cap on basic events for the exact engine.
pub const MAX_BASIC_EVENTS: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize, JsonSchema)]
pub enum SafetyError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{count} basic events exceed the cap of {cap}")]
    TooManyEvents { count: usize, cap: usize },
    #[error("maximum order must be at least 1")]
    InvalidOrder,
    #[error("FMEA cardinality must be 1 or 2, got {0}")]
    InvalidCardinality(usize),
}

impl SafetyError {
    pub fn is_resource(&self) -> bool {
        match self {
            SafetyError::Engine(e) => e.is_resource(),
            SafetyError::TooManyEvents { .. } => true,
            _ => false,
        }
    }
}

/// A fault or threat of some leaf instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct BasicEvent {
    /// Qualified id, e.g. `gen[0].fault`.
    pub id: String,
    /// Instance path of the owning component.
    pub component: String,
    pub name: String,
    /// Qualified error layer, e.g. `gen[0].GenFault`.
    pub layer: String,
    /// Error or failure state the event leads to.
    pub target: String,
    pub target_kind: StateKind,
    pub likelihood: Option<Likelihood>,
    pub threat: bool,
}

impl BasicEvent {
    pub fn probability(&self) -> Option<f64> {
        match self.likelihood {
            Some(Likelihood::Probability(p)) => Some(p),
            _ => None,
        }
    }
}

/// Basic events of an instance in the order the joint system numbers them.
pub fn basic_events(inst: &InstanceModel) -> Vec<BasicEvent> {
    let mut out = Vec::new();
    for leaf in inst.leaves() {
        for em in &leaf.error_models {
            for t in em.transitions.iter().filter(|t| t.trigger.is_basic_event()) {
                let target_kind = em.states.iter().find(|s| s.name == t.target).map_or(StateKind::Error, |s| s.kind);
                out.push(BasicEvent {
                    id: leaf.event_id(t.trigger.name()),
                    component: leaf.path.clone(),
                    name: t.trigger.name().to_string(),
                    layer: leaf.qualify(&em.name),
                    target: t.target.clone(),
                    target_kind,
                    likelihood: t.trigger.likelihood(),
                    threat: matches!(t.trigger, crate::model::Trigger::Threat { .. }),
                });
            }
        }
    }
    out
}

/// An inclusion-minimal set of basic events whose activation makes the
/// top-level event reachable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
pub struct CutSet {
    /// Sorted event ids.
    pub events: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct McsResult {
    pub event: String,
    pub max_order: usize,
    /// Ordered by size, then lexicographically.
    pub cut_sets: Vec<CutSet>,
    /// True when the condition is reachable with every fault inactive.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

/// Prepared analysis context: the joint system and its basic events.
pub struct SafetyContext {
    pub system: System,
    pub events: Vec<BasicEvent>,
    pub limits: Limits,
}

impl SafetyContext {
    pub fn new(inst: &InstanceModel, limits: Limits) -> Result<SafetyContext, SafetyError> {
        let system = System::from_instance(inst, "")?;
        let events = basic_events(inst);
        debug_assert_eq!(events.iter().map(|e| e.id.as_str()).collect::<Vec<_>>(), system.events());
        if events.len() > MAX_BASIC_EVENTS {
            return Err(SafetyError::TooManyEvents { count: events.len(), cap: MAX_BASIC_EVENTS });
        }
        Ok(SafetyContext { system, events, limits })
    }

    pub fn condition(&self, tle: &TopLevelEvent) -> Result<CExpr, SafetyError> {
        Ok(self.system.compile_condition(&tle.condition)?)
    }

    /// Is the condition reachable when exactly the events in `mask` may
    /// activate?
    pub fn reachable(&self, cond: &CExpr, mask: u64) -> Result<bool, SafetyError> {
        Ok(search_reachable(&self.system, cond, mask, self.limits.state_cap)?.0.is_some())
    }

    fn ids(&self, mask: u64) -> Vec<String> {
        let mut v: Vec<String> =
            (0..self.events.len()).filter(|i| mask & (1 << i) != 0).map(|i| self.events[i].id.clone()).collect();
        v.sort();
        v
    }
}

/// Visits every `k`-subset of `0..n` as a bit mask, in colexicographic order.
fn subsets(n: usize, k: usize) -> Vec<u64> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    if k == 0 {
        return vec![0];
    }
    let mut m: u64 = (1 << k) - 1;
    let limit = 1u64 << n;
    while m < limit {
        out.push(m);
        // Gosper's hack.
        let c = m & m.wrapping_neg();
        let r = m + c;
        m = (((r ^ m) >> 2) / c) | r;
    }
    out
}

pub fn minimal_cut_sets(
    inst: &InstanceModel,
    tle: &TopLevelEvent,
    max_order: usize,
    limits: Limits,
) -> Result<McsResult, SafetyError> {
    let ctx = SafetyContext::new(inst, limits)?;
    mcs_in(&ctx, tle, max_order)
}

pub fn mcs_in(ctx: &SafetyContext, tle: &TopLevelEvent, max_order: usize) -> Result<McsResult, SafetyError> {
    if max_order == 0 {
        return Err(SafetyError::InvalidOrder);
    }
    let cond = ctx.condition(tle)?;
    let mut result =
        McsResult { event: tle.name.clone(), max_order, cut_sets: Vec::new(), degenerate: false, warnings: Vec::new() };
    if ctx.reachable(&cond, 0)? {
        result.degenerate = true;
        result.warnings.push(format!(
            "top-level event `{}` is reachable with all faults inactive; the analysis is degenerate",
            tle.name
        ));
        return Ok(result);
    }
    let n = ctx.events.len();
    let mut found: Vec<u64> = Vec::new();
    for k in 1..=max_order.min(n) {
        let candidates: Vec<u64> = subsets(n, k).into_iter().filter(|m| !found.iter().any(|f| f & m == *f)).collect();
        let hits: Vec<u64> = candidates
            .par_iter()
            .map(|&m| ctx.reachable(&cond, m).map(|r| r.then_some(m)))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .flatten()
            .collect();
        found.extend(hits);
    }
    let mut sets: Vec<CutSet> = found.iter().map(|&m| CutSet { events: ctx.ids(m) }).collect();
    sets.sort_by(|a, b| a.events.len().cmp(&b.events.len()).then_with(|| a.events.cmp(&b.events)));
    result.cut_sets = sets;
    Ok(result)
}

/// Exact probability that at least one of the sets is fully activated,
/// with independent activations. Sets are bit masks over `p`.
pub fn union_probability(sets: &[u64], p: &[f64]) -> f64 {
    fn go(sets: Vec<u64>, p: &[f64], memo: &mut HashMap<Vec<u64>, f64>) -> f64 {
        if sets.is_empty() {
            return 0.0;
        }
        if sets.contains(&0) {
            return 1.0;
        }
        if let Some(&v) = memo.get(&sets) {
            return v;
        }
        let mut counts = [0u32; 64];
        for s in &sets {
            for (i, c) in counts.iter_mut().enumerate() {
                *c += ((s >> i) & 1) as u32;
            }
        }
        let e = (0..64).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap_or(0);
        let bit = 1u64 << e;
        let mut with: Vec<u64> = sets.iter().map(|s| s & !bit).collect();
        with.sort_unstable();
        with.dedup();
        let mut without: Vec<u64> = sets.iter().copied().filter(|s| s & bit == 0).collect();
        without.sort_unstable();
        let v = p[e] * go(with, p, memo) + (1.0 - p[e]) * go(without, p, memo);
        memo.insert(sets, v);
        v
    }
    let mut s = sets.to_vec();
    s.sort_unstable();
    s.dedup();
    go(s, p, &mut HashMap::new())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TreeEvent {
    pub id: String,
    pub component: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AndGate {
    pub id: String,
    /// Basic-event ids.
    pub inputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TopGate {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
}

/// Two-level OR-of-ANDs tree with one AND gate per minimal cut set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FaultTree {
    pub top: TopGate,
    pub gates: Vec<AndGate>,
    pub basic_events: Vec<TreeEvent>,
    pub max_order: usize,
    /// Why probabilities are absent, when they are.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantitative_note: Option<String>,
    pub warnings: Vec<String>,
}

pub fn compute_fault_tree(
    inst: &InstanceModel,
    tle: &TopLevelEvent,
    max_order: usize,
    limits: Limits,
) -> Result<FaultTree, SafetyError> {
    let ctx = SafetyContext::new(inst, limits)?;
    let mcs = mcs_in(&ctx, tle, max_order)?;
    Ok(fault_tree_from(&ctx.events, &mcs))
}

/// Builds the tree for an MCS result over the given basic events.
pub fn fault_tree_from(events: &[BasicEvent], mcs: &McsResult) -> FaultTree {
    let mut used: Vec<&BasicEvent> =
        events.iter().filter(|e| mcs.cut_sets.iter().any(|c| c.events.contains(&e.id))).collect();
    used.sort_by(|a, b| a.id.cmp(&b.id));

    let rates: Vec<&str> =
        used.iter().filter(|e| matches!(e.likelihood, Some(Likelihood::Rate(_)))).map(|e| e.id.as_str()).collect();
    let missing: Vec<&str> = used.iter().filter(|e| e.likelihood.is_none()).map(|e| e.id.as_str()).collect();
    let note = if !rates.is_empty() {
        Some(format!(
            "quantitative analysis refused: basic events with rates instead of per-demand probabilities ({}); use the reliability analysis for rate models",
            rates.join(", ")
        ))
    } else if !missing.is_empty() {
        Some(format!("no probability for basic events {}", missing.join(", ")))
    } else {
        None
    };
    let quantitative = note.is_none();
    let prob = |id: &str| -> Option<f64> {
        if !quantitative {
            return None;
        }
        used.iter().find(|e| e.id == id).and_then(|e| e.probability())
    };
    let gates: Vec<AndGate> = mcs
        .cut_sets
        .iter()
        .enumerate()
        .map(|(i, c)| AndGate {
            id: format!("cs{}", i + 1),
            inputs: c.events.clone(),
            probability: if quantitative { c.events.iter().map(|e| prob(e)).product() } else { None },
        })
        .collect();
    let top_p = if mcs.degenerate {
        Some(1.0)
    } else if quantitative {
        let idx = |id: &String| used.iter().position(|e| &e.id == id).unwrap();
        let masks: Vec<u64> =
            mcs.cut_sets.iter().map(|c| c.events.iter().fold(0u64, |m, e| m | (1 << idx(e)))).collect();
        let p: Vec<f64> = used.iter().map(|e| e.probability().unwrap_or(0.0)).collect();
        Some(union_probability(&masks, &p))
    } else {
        None
    };
    FaultTree {
        top: TopGate { name: mcs.event.clone(), probability: top_p },
        gates,
        basic_events: used
            .iter()
            .map(|e| TreeEvent { id: e.id.clone(), component: e.component.clone(), probability: prob(&e.id) })
            .collect(),
        max_order: mcs.max_order,
        quantitative_note: note,
        warnings: mcs.warnings.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FmeaRow {
    pub cardinality: usize,
    pub components: Vec<String>,
    /// Basic-event ids of the failure mode.
    pub failure_mode: Vec<String>,
    /// Error or failure state reached per event, as `layer = state`.
    pub local_effect: Vec<String>,
    /// Top-level events made reachable.
    pub system_effects: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FmeaTable {
    pub cardinality: usize,
    pub rows: Vec<FmeaRow>,
    pub warnings: Vec<String>,
}

pub fn fmea(
    inst: &InstanceModel,
    tles: &[TopLevelEvent],
    cardinality: usize,
    limits: Limits,
) -> Result<FmeaTable, SafetyError> {
    if !(1..=2).contains(&cardinality) {
        return Err(SafetyError::InvalidCardinality(cardinality));
    }
    let ctx = SafetyContext::new(inst, limits)?;
    let conds = tles.iter().map(|t| ctx.condition(t)).collect::<Result<Vec<_>, _>>()?;
    let mut warnings = Vec::new();
    for (t, c) in tles.iter().zip(&conds) {
        if ctx.reachable(c, 0)? {
            warnings.push(format!("top-level event `{}` is reachable with all faults inactive", t.name));
        }
    }
    let masks = subsets(ctx.events.len(), cardinality);
    let effects: Vec<Vec<String>> = masks
        .par_iter()
        .map(|&m| {
            let mut hit = Vec::new();
            for (t, c) in tles.iter().zip(&conds) {
                if ctx.reachable(c, m)? {
                    hit.push(t.name.clone());
                }
            }
            Ok(hit)
        })
        .collect::<Result<Vec<_>, SafetyError>>()?;
    let mut rows: Vec<FmeaRow> = masks
        .iter()
        .zip(effects)
        .map(|(&m, system_effects)| {
            let mut evs: Vec<&BasicEvent> =
                (0..ctx.events.len()).filter(|i| m & (1 << i) != 0).map(|i| &ctx.events[i]).collect();
            evs.sort_by(|a, b| (&a.component, &a.name).cmp(&(&b.component, &b.name)));
            FmeaRow {
                cardinality,
                components: evs.iter().map(|e| e.component.clone()).collect(),
                failure_mode: evs.iter().map(|e| e.id.clone()).collect(),
                local_effect: evs.iter().map(|e| format!("{} = {}", e.layer, e.target)).collect(),
                system_effects,
                probability: evs.iter().map(|e| e.probability()).product(),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &FmeaRow| {
            (
                r.cardinality,
                r.components.clone(),
                r.failure_mode.iter().map(|f| f.rsplit('.').next().unwrap_or(f).to_string()).collect::<Vec<_>>(),
            )
        };
        key(a).cmp(&key(b))
    });
    Ok(FmeaTable { cardinality, rows, warnings })
}

/// Formats a probability with at most 12 significant digits, so that
/// `0.05 * 0.05` prints as `0.0025`.
pub fn format_probability(p: f64) -> String {
    let rounded: f64 = format!("{p:.11e}").parse().unwrap_or(p);
    format!("{rounded}")
}

impl FmeaTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let _ = w.write_record([
            "cardinality",
            "components",
            "failure_mode",
            "local_effect",
            "system_effects",
            "probability",
        ]);
        for r in &self.rows {
            let _ = w.write_record([
                r.cardinality.to_string(),
                r.components.join(";"),
                r.failure_mode.join(";"),
                r.local_effect.join(";"),
                r.system_effects.join(";"),
                r.probability.map(format_probability).unwrap_or_default(),
            ]);
        }
        String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
    }
}
