use super::WorkbenchError;
use crate::contract::{CftGate, ContractFaultTree};
use crate::model::{ArchitectureModel, PortRef};
use crate::safety::{format_probability, FaultTree};
use std::fmt::Write;

fn q(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n"))
}

fn prob_label(name: &str, p: Option<f64>) -> String {
    match p {
        Some(p) => format!("{name}\np={}", format_probability(p)),
        None => name.to_string(),
    }
}

/// OR gate over the cut sets; cut sets of order one feed the top gate
/// directly, larger ones through an AND gate.
pub fn fault_tree_dot(tree: &FaultTree) -> String {
    let mut out = String::from("digraph fault_tree {\n  rankdir=TB;\n");
    let top = prob_label(&tree.top.name, tree.top.probability);
    let _ = writeln!(out, "  top [shape=invtrapezium, label={}, gate=\"or\"];", q(&top));
    for e in &tree.basic_events {
        let label = prob_label(&e.id, e.probability);
        let _ = writeln!(out, "  {} [shape=circle, label={}];", q(&format!("ev:{}", e.id)), q(&label));
    }
    for g in &tree.gates {
        if g.inputs.len() == 1 {
            let _ = writeln!(out, "  top -> {};", q(&format!("ev:{}", g.inputs[0])));
            continue;
        }
        let label = prob_label("AND", g.probability);
        let _ = writeln!(out, "  {} [shape=house, label={}, gate=\"and\"];", q(&g.id), q(&label));
        let _ = writeln!(out, "  top -> {};", q(&g.id));
        for i in &g.inputs {
            let _ = writeln!(out, "  {} -> {};", q(&g.id), q(&format!("ev:{i}")));
        }
    }
    out.push_str("}\n");
    out
}

pub fn contract_tree_dot(tree: &ContractFaultTree) -> String {
    let mut out = String::from("digraph contract_tree {\n  rankdir=TB;\n");
    for n in &tree.nodes {
        let (shape, gate) = match n.gate {
            CftGate::Or => ("invtrapezium", "or"),
            CftGate::And => ("house", "and"),
            CftGate::LeafFailure => ("circle", "leaf"),
            CftGate::EnvironmentFailure => ("diamond", "environment"),
        };
        let _ = writeln!(out, "  {} [shape={shape}, label={}, gate=\"{gate}\"];", q(&n.id), q(&n.label));
    }
    for n in &tree.nodes {
        for c in &n.children {
            let _ = writeln!(out, "  {} -> {};", q(&n.id), q(c));
        }
    }
    out.push_str("}\n");
    out
}

/// Block containment view: one node per block, one edge per sub-component
/// declaration.
pub fn block_definition_dot(model: &ArchitectureModel) -> String {
    let mut out = String::from("digraph block_definition {\n  rankdir=TB;\n  node [shape=box];\n");
    for b in &model.blocks {
        let _ = writeln!(out, "  {};", q(&b.name));
    }
    for b in &model.blocks {
        for s in &b.subcomponents {
            let label = match &s.multiplicity {
                Some(m) => format!("{}[{m}]", s.name),
                None => s.name.clone(),
            };
            let _ = writeln!(
                out,
                "  {} -> {} [arrowtail=diamond, dir=back, label={}];",
                q(&b.name),
                q(&s.block),
                q(&label)
            );
        }
    }
    out.push_str("}\n");
    out
}

fn end_node(r: &PortRef) -> String {
    match &r.sub {
        Some(s) => format!("sub:{s}"),
        None => format!("port:{}", r.port),
    }
}

/// Internal view of one block: sub-components as boxes, the block's own
/// connected ports as ellipses and one edge per connection declaration.
pub fn internal_block_dot(model: &ArchitectureModel, block: &str) -> Result<String, WorkbenchError> {
    let b = model.block(block).ok_or_else(|| WorkbenchError::Model(format!("unknown block `{block}`")))?;
    let mut out = format!("digraph internal_block {{\n  label={};\n", q(&b.name));
    if b.subcomponents.is_empty() && b.connections.is_empty() {
        let _ = writeln!(out, "  {} [shape=box];", q(&format!("block:{}", b.name)));
        out.push_str("}\n");
        return Ok(out);
    }
    for s in &b.subcomponents {
        let label = match &s.multiplicity {
            Some(m) => format!("{}: {}[{m}]", s.name, s.block),
            None => format!("{}: {}", s.name, s.block),
        };
        let _ = writeln!(out, "  {} [shape=box, label={}];", q(&format!("sub:{}", s.name)), q(&label));
    }
    let mut own: Vec<&str> = b
        .connections
        .iter()
        .flat_map(|c| [&c.source, &c.target])
        .filter(|r| r.sub.is_none())
        .map(|r| r.port.as_str())
        .collect();
    own.sort();
    own.dedup();
    for p in own {
        let _ = writeln!(out, "  {} [shape=ellipse, label={}];", q(&format!("port:{p}")), q(p));
    }
    for c in &b.connections {
        let mut label = format!("{} -> {}", c.source, c.target);
        if let Some(v) = &c.forall {
            label = format!("all {v}: {label}");
        }
        let _ = writeln!(out, "  {} -> {} [label={}];", q(&end_node(&c.source)), q(&end_node(&c.target)), q(&label));
    }
    out.push_str("}\n");
    Ok(out)
}
