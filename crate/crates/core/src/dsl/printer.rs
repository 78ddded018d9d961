use crate::expr::Const;
use crate::model::*;
use std::fmt::Write;

/// Canonical text of a model: declaration order preserved, two-space
/// indentation, one declaration per line, newline-terminated.
pub fn serialize_model(model: &ArchitectureModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "model {} {{", model.name);
    for b in &model.blocks {
        block(&mut out, b);
    }
    for r in &model.requirements {
        requirement(&mut out, r);
    }
    for c in &model.configurations {
        if c.bindings.is_empty() {
            let _ = writeln!(out, "  configuration {} {{}}", c.name);
            continue;
        }
        let _ = writeln!(out, "  configuration {} {{", c.name);
        for (k, v) in &c.bindings {
            let _ = writeln!(out, "    {k} = {v};");
        }
        out.push_str("  }\n");
    }
    for e in &model.events {
        let _ = writeln!(out, "  event {}: {};", e.name, e.condition);
    }
    for c in &model.checks {
        let _ = writeln!(out, "  check {}: {};", c.name, check_kind(&c.kind));
    }
    let _ = writeln!(out, "  root {};", model.root);
    out.push_str("}\n");
    out
}

fn number(x: f64) -> String {
    format!("{x}")
}

fn faults(m: FaultModeDecl) -> &'static str {
    match m {
        FaultModeDecl::Inactive => "inactive",
        FaultModeDecl::Free => "free",
    }
}

fn check_kind(k: &CheckKind) -> String {
    let with_component = |kw: &str, c: &str| {
        if c.is_empty() {
            kw.to_string()
        } else {
            format!("{kw} {c}")
        }
    };
    match k {
        CheckKind::Refinement { component } => with_component("refinement", component),
        CheckKind::LeafVerification { component } => with_component("verify", component),
        CheckKind::Ltl { formula, faults: f } => format!("ltl {formula} faults {}", faults(*f)),
        CheckKind::FtaTopProbability { event, max_order, threshold } => {
            format!("fta {event} max_order {max_order} <= {}", number(*threshold))
        }
        CheckKind::Reliability { event, threshold, mission_time, trials } => {
            format!("reliability {event} >= {} at {} trials {trials}", number(*threshold), number(*mission_time))
        }
        CheckKind::Reachability { condition, faults: f, expect_reachable } => {
            format!("{} {condition} faults {}", if *expect_reachable { "reachable" } else { "unreachable" }, faults(*f))
        }
    }
}

fn escape(s: &str) -> String {
    let mut o = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => o.push_str("\\\""),
            '\\' => o.push_str("\\\\"),
            '\n' => o.push_str("\\n"),
            '\t' => o.push_str("\\t"),
            c => o.push(c),
        }
    }
    o
}

fn requirement(out: &mut String, r: &Requirement) {
    let _ = write!(out, "  requirement {} \"{}\"", r.id, escape(&r.text));
    if r.satisfied_by.is_empty() && r.parent.is_none() {
        out.push_str(";\n");
        return;
    }
    out.push_str(" {\n");
    if !r.satisfied_by.is_empty() {
        let _ = writeln!(out, "    satisfied_by {};", r.satisfied_by.join(", "));
    }
    if let Some(p) = &r.parent {
        let _ = writeln!(out, "    parent {p};");
    }
    out.push_str("  }\n");
}

fn constant(c: &Const) -> String {
    c.to_string()
}

fn block(out: &mut String, b: &BlockDef) {
    let empty = b.parameters.is_empty()
        && b.ports.is_empty()
        && b.subcomponents.is_empty()
        && b.connections.is_empty()
        && b.allocation.is_none()
        && b.contracts.is_empty()
        && b.behavior.is_none()
        && b.error_models.is_empty();
    if empty {
        let _ = writeln!(out, "  block {} {{}}", b.name);
        return;
    }
    let _ = writeln!(out, "  block {} {{", b.name);
    for p in &b.parameters {
        let _ = write!(out, "    param {}", p.name);
        if let Some((lo, hi)) = p.bounds {
            let _ = write!(out, ": {lo}..{hi}");
        }
        if let Some(d) = p.default {
            let _ = write!(out, " = {d}");
        }
        out.push_str(";\n");
    }
    for p in &b.ports {
        let dir = match p.direction {
            Direction::In => "in",
            Direction::Out => "out",
        };
        let _ = write!(out, "    {dir} {}: {}", p.name, p.ty);
        if let Some(m) = &p.multiplicity {
            let _ = write!(out, "[{m}]");
        }
        if let Some(i) = &p.init {
            let _ = write!(out, " = {}", constant(i));
        }
        out.push_str(";\n");
    }
    for s in &b.subcomponents {
        let _ = write!(out, "    sub {}: {}", s.name, s.block);
        if !s.bindings.is_empty() {
            let items: Vec<String> = s.bindings.iter().map(|(k, e)| format!("{k} = {e}")).collect();
            let _ = write!(out, "({})", items.join(", "));
        }
        if let Some(m) = &s.multiplicity {
            let _ = write!(out, "[{m}]");
        }
        out.push_str(";\n");
    }
    for c in &b.connections {
        out.push_str("    connect ");
        if let Some(v) = &c.forall {
            let _ = write!(out, "all {v}: ");
        }
        let _ = writeln!(out, "{} -> {};", c.source, c.target);
    }
    if let Some(a) = &b.allocation {
        let _ = writeln!(out, "    allocate {a};");
    }
    for c in &b.contracts {
        let _ = writeln!(out, "    contract {} {{", c.name);
        let _ = writeln!(out, "      assume: {};", c.assumption);
        let _ = writeln!(out, "      guarantee: {};", c.guarantee);
        out.push_str("    }\n");
    }
    if let Some(sm) = &b.behavior {
        out.push_str("    behavior {\n");
        for v in &sm.variables {
            let _ = writeln!(out, "      var {}: {} = {};", v.name, v.ty, constant(&v.init));
        }
        if !sm.states.is_empty() {
            let _ = writeln!(out, "      states {};", sm.states.join(", "));
        }
        if !sm.initial.is_empty() {
            let _ = writeln!(out, "      initial {};", sm.initial);
        }
        for t in &sm.transitions {
            let _ = write!(out, "      transition {} -> {}", t.source, t.target);
            if let Some(g) = &t.guard {
                let _ = write!(out, " when {g}");
            }
            if !t.updates.is_empty() {
                out.push_str(" do {");
                for u in &t.updates {
                    let _ = write!(out, " {} = {};", u.target, u.value);
                }
                out.push_str(" }");
            }
            out.push_str(";\n");
        }
        out.push_str("    }\n");
    }
    for em in &b.error_models {
        let _ = writeln!(out, "    error_model {} {{", em.name);
        let mut i = 0;
        while i < em.states.len() {
            let kind = em.states[i].kind;
            let mut j = i;
            while j < em.states.len() && em.states[j].kind == kind {
                j += 1;
            }
            let kw = match kind {
                StateKind::Normal => "normal",
                StateKind::Error => "error",
                StateKind::Failure => "failure",
            };
            let names: Vec<&str> = em.states[i..j].iter().map(|s| s.name.as_str()).collect();
            let _ = writeln!(out, "      {kw} {};", names.join(", "));
            i = j;
        }
        if !em.initial.is_empty() {
            let _ = writeln!(out, "      initial {};", em.initial);
        }
        for t in &em.transitions {
            let (kw, name) = match &t.trigger {
                Trigger::InternalFault { name, .. } => ("fault", name.clone()),
                Trigger::Threat { name, agent, .. } => ("threat", format!("{name} by {agent}")),
                Trigger::Repair { name, .. } => ("repair", name.clone()),
            };
            let _ = write!(out, "      {kw} {name}: {} -> {}", t.source, t.target);
            match t.trigger.likelihood() {
                Some(Likelihood::Probability(p)) => {
                    let _ = write!(out, " probability {}", number(p));
                }
                Some(Likelihood::Rate(r)) => {
                    let _ = write!(out, " rate {}", number(r));
                }
                None => {}
            }
            if let Some(g) = &t.guard {
                let _ = write!(out, " when {g}");
            }
            out.push_str(";\n");
        }
        for group in &em.effects {
            for e in &group.effects {
                match e {
                    Effect::StuckAt { target, value } => {
                        let _ = writeln!(out, "      effect {}: {target} stuck_at {};", group.state, constant(value));
                    }
                    Effect::CiaLoss { property } => {
                        let _ = writeln!(out, "      effect {}: loss {};", group.state, property.keyword());
                    }
                }
            }
        }
        out.push_str("    }\n");
    }
    out.push_str("  }\n");
}
