//! Requirement traceability.

use crate::model::ArchitectureModel;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    /// Has its own `satisfied_by` links.
    Direct,
    /// No direct links, but every child requirement is satisfied.
    Indirect,
    Unsatisfied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct TraceRow {
    pub requirement: String,
    pub parent: Option<String>,
    pub children: Vec<String>,
    pub elements: Vec<String>,
    pub status: TraceStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct TraceMatrix {
    /// Traceable elements: every block and every `Block.Contract`.
    pub elements: Vec<String>,
    pub rows: Vec<TraceRow>,
    pub orphan_requirements: Vec<String>,
    pub orphan_elements: Vec<String>,
}

impl TraceMatrix {
    pub fn row(&self, id: &str) -> Option<&TraceRow> {
        self.rows.iter().find(|r| r.requirement == id)
    }

    /// Whether requirement `id` is linked to `element` directly.
    pub fn cell(&self, id: &str, element: &str) -> bool {
        self.row(id).is_some_and(|r| r.elements.iter().any(|e| e == element))
    }
}

/// Builds the requirement × element matrix. Expects a validated model (in
/// particular, acyclic parent links).
pub fn trace_requirements(model: &ArchitectureModel) -> TraceMatrix {
    let mut elements = Vec::new();
    for b in &model.blocks {
        elements.push(b.name.clone());
        for c in &b.contracts {
            elements.push(format!("{}.{}", b.name, c.name));
        }
    }

    let mut children: HashMap<&str, Vec<String>> = HashMap::new();
    for r in &model.requirements {
        if let Some(p) = &r.parent {
            children.entry(p.as_str()).or_default().push(r.id.clone());
        }
    }

    let by_id: HashMap<&str, usize> = model.requirements.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let mut memo: Vec<Option<TraceStatus>> = vec![None; model.requirements.len()];
    fn status(
        i: usize,
        model: &ArchitectureModel,
        by_id: &HashMap<&str, usize>,
        children: &HashMap<&str, Vec<String>>,
        memo: &mut Vec<Option<TraceStatus>>,
        depth: usize,
    ) -> TraceStatus {
        if let Some(s) = memo[i] {
            return s;
        }
        let r = &model.requirements[i];
        let s = if !r.satisfied_by.is_empty() {
            TraceStatus::Direct
        } else {
            let kids = children.get(r.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            let all = !kids.is_empty()
                && depth <= model.requirements.len()
                && kids.iter().all(|k| {
                    by_id.get(k.as_str()).is_some_and(|&j| {
                        status(j, model, by_id, children, memo, depth + 1) != TraceStatus::Unsatisfied
                    })
                });
            if all {
                TraceStatus::Indirect
            } else {
                TraceStatus::Unsatisfied
            }
        };
        memo[i] = Some(s);
        s
    }

    let mut rows = Vec::new();
    let mut covered = BTreeSet::new();
    for (i, r) in model.requirements.iter().enumerate() {
        let st = status(i, model, &by_id, &children, &mut memo, 0);
        for e in &r.satisfied_by {
            covered.insert(e.clone());
            // A contract link covers its block, and a block link covers the
            // block's contracts.
            match e.split_once('.') {
                Some((b, _)) => {
                    covered.insert(b.to_string());
                }
                None => {
                    if let Some(b) = model.block(e) {
                        for c in &b.contracts {
                            covered.insert(format!("{}.{}", b.name, c.name));
                        }
                    }
                }
            }
        }
        rows.push(TraceRow {
            requirement: r.id.clone(),
            parent: r.parent.clone(),
            children: children.get(r.id.as_str()).cloned().unwrap_or_default(),
            elements: r.satisfied_by.clone(),
            status: st,
        });
    }
    let orphan_requirements =
        rows.iter().filter(|r| r.status == TraceStatus::Unsatisfied).map(|r| r.requirement.clone()).collect();
    let orphan_elements = elements.iter().filter(|e| !covered.contains(*e)).cloned().collect();
    TraceMatrix { elements, rows, orphan_requirements, orphan_elements }
}
