use super::results::{AnalysisResult, ResultData, ResultsFile, Status};
use crate::model::{ArchitectureModel, Direction};
use crate::safety::format_probability;
use crate::trace::{trace_requirements, TraceStatus};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Html,
    Latex,
}

/// Provenance printed in the report header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ReportMeta {
    pub tool_version: String,
    /// Render time, as supplied by the caller.
    pub timestamp: String,
    pub invocation: String,
}

/// Format-neutral document body.
enum Block {
    Heading(u8, String, Option<String>),
    Para(String),
    Table(Vec<String>, Vec<Vec<String>>),
    Pre(String),
}

fn status_text(s: Status) -> &'static str {
    match s {
        Status::Positive => "pass",
        Status::Negative => "fail",
        Status::Inconclusive => "inconclusive",
    }
}

fn opt_p(p: Option<f64>) -> String {
    p.map_or_else(|| "n/a".to_string(), format_probability)
}

fn structure(model: &ArchitectureModel, out: &mut Vec<Block>) {
    out.push(Block::Heading(1, "Architecture".into(), Some("structure".into())));
    out.push(Block::Para(format!("Model {} with root block {}.", model.name, model.root)));
    out.push(Block::Heading(2, "Blocks".into(), None));
    out.push(Block::Table(
        vec!["Block".into(), "Kind".into(), "Parameters".into(), "Sub-components".into()],
        model
            .blocks
            .iter()
            .map(|b| {
                let params: Vec<String> = b
                    .parameters
                    .iter()
                    .map(|p| match p.bounds {
                        Some((lo, hi)) => format!("{} in {lo}..{hi}", p.name),
                        None => p.name.clone(),
                    })
                    .collect();
                let subs: Vec<String> = b
                    .subcomponents
                    .iter()
                    .map(|s| match &s.multiplicity {
                        Some(m) => format!("{}: {}[{m}]", s.name, s.block),
                        None => format!("{}: {}", s.name, s.block),
                    })
                    .collect();
                vec![
                    b.name.clone(),
                    if b.is_composite() { "composite" } else { "leaf" }.into(),
                    params.join(", "),
                    subs.join(", "),
                ]
            })
            .collect(),
    ));
    out.push(Block::Heading(2, "Ports".into(), None));
    out.push(Block::Table(
        vec!["Block".into(), "Port".into(), "Direction".into(), "Type".into()],
        model
            .blocks
            .iter()
            .flat_map(|b| {
                b.ports.iter().map(move |p| {
                    let name = match &p.multiplicity {
                        Some(m) => format!("{}[{m}]", p.name),
                        None => p.name.clone(),
                    };
                    let dir = if p.direction == Direction::In { "in" } else { "out" };
                    vec![b.name.clone(), name, dir.into(), p.ty.to_string()]
                })
            })
            .collect(),
    ));
    out.push(Block::Heading(2, "Contracts".into(), None));
    out.push(Block::Table(
        vec!["Contract".into(), "Assumption".into(), "Guarantee".into()],
        model
            .blocks
            .iter()
            .flat_map(|b| {
                b.contracts.iter().map(move |c| {
                    vec![format!("{}.{}", b.name, c.name), c.assumption.to_string(), c.guarantee.to_string()]
                })
            })
            .collect(),
    ));
    out.push(Block::Heading(2, "Requirements".into(), None));
    out.push(Block::Table(
        vec!["Id".into(), "Text".into(), "Parent".into(), "Satisfied by".into()],
        model
            .requirements
            .iter()
            .map(|r| {
                vec![r.id.clone(), r.text.clone(), r.parent.clone().unwrap_or_default(), r.satisfied_by.join(", ")]
            })
            .collect(),
    ));
    let trace = trace_requirements(model);
    out.push(Block::Heading(2, "Traceability".into(), None));
    if trace.rows.is_empty() {
        out.push(Block::Para("No requirements declared.".into()));
    } else {
        let mut header = vec!["Requirement".to_string(), "Status".to_string()];
        header.extend(trace.elements.iter().cloned());
        let rows = trace
            .rows
            .iter()
            .map(|r| {
                let status = match r.status {
                    TraceStatus::Direct => "direct",
                    TraceStatus::Indirect => "indirect",
                    TraceStatus::Unsatisfied => "unsatisfied",
                };
                let mut row = vec![r.requirement.clone(), status.to_string()];
                row.extend(
                    trace.elements.iter().map(|e| if trace.cell(&r.requirement, e) { "x" } else { "" }.to_string()),
                );
                row
            })
            .collect();
        out.push(Block::Table(header, rows));
        if !trace.orphan_elements.is_empty() {
            out.push(Block::Para(format!("Elements without requirements: {}.", trace.orphan_elements.join(", "))));
        }
    }
}

fn details(r: &AnalysisResult, out: &mut Vec<Block>) {
    match &r.data {
        ResultData::Validation { report, .. } => {
            if !report.findings.is_empty() {
                out.push(Block::Pre(report.findings.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("\n")));
            }
        }
        ResultData::Instance { instance } => out.push(Block::Table(
            vec!["Instance".into(), "Block".into(), "Parameters".into()],
            instance
                .instances()
                .iter()
                .map(|c| {
                    let params: Vec<String> = c.parameters.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    let path = if c.path.is_empty() { c.block.clone() } else { c.path.clone() };
                    vec![path, c.block.clone(), params.join(", ")]
                })
                .collect(),
        )),
        ResultData::Ltl { verdict, .. } | ResultData::Reachability { verdict, .. } => {
            if let Some(w) = &verdict.witness {
                out.push(Block::Pre(w.to_text()));
            }
        }
        ResultData::Refinement { verdict } => {
            out.push(Block::Table(
                vec!["Obligation".into(), "Status".into()],
                verdict
                    .obligations
                    .iter()
                    .map(|o| vec![o.obligation.formula.to_string(), format!("{:?}", o.status)])
                    .collect(),
            ));
            for w in verdict.obligations.iter().filter_map(|o| o.witness.as_ref()) {
                out.push(Block::Pre(w.to_text()));
            }
        }
        ResultData::Verification { verdict } => {
            let mut rows: Vec<Vec<String>> = verdict
                .refinements
                .iter()
                .map(|v| vec![format!("refinement {}", v.contract), format!("{:?}", v.overall)])
                .collect();
            rows.extend(
                verdict.leaves.iter().map(|l| vec![format!("leaf {}", l.contract), format!("{:?}", l.verdict.result)]),
            );
            out.push(Block::Table(vec!["Step".into(), "Outcome".into()], rows));
        }
        ResultData::LeafVerification { verdict } => {
            if let Some(w) = &verdict.verdict.witness {
                out.push(Block::Pre(w.to_text()));
            }
        }
        ResultData::FaultTree { tree } => {
            out.push(Block::Table(
                vec!["Cut set".into(), "Events".into(), "Probability".into()],
                tree.gates.iter().map(|g| vec![g.id.clone(), g.inputs.join(", "), opt_p(g.probability)]).collect(),
            ));
            if let Some(n) = &tree.quantitative_note {
                out.push(Block::Para(n.clone()));
            }
        }
        ResultData::Fmea { table } => out.push(Block::Table(
            vec![
                "Components".into(),
                "Failure mode".into(),
                "Local effect".into(),
                "System effects".into(),
                "Probability".into(),
            ],
            table
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.components.join(", "),
                        r.failure_mode.join(", "),
                        r.local_effect.join(", "),
                        r.system_effects.join(", "),
                        opt_p(r.probability),
                    ]
                })
                .collect(),
        )),
        ResultData::Reliability { estimates, .. } => out.push(Block::Table(
            vec!["Reward".into(), "Estimate".into(), "95% interval".into(), "Trials".into()],
            estimates
                .iter()
                .map(|e| {
                    vec![
                        e.reward_name.clone(),
                        format!("{:.6}", e.point_estimate),
                        format!("[{:.6}, {:.6}]", e.ci95.0, e.ci95.1),
                        e.trials.to_string(),
                    ]
                })
                .collect(),
        )),
        ResultData::Tradeoff { matrix } => {
            let mut header = vec!["Configuration".to_string()];
            header.extend(matrix.checks.iter().cloned());
            out.push(Block::Table(
                header,
                matrix
                    .rows
                    .iter()
                    .map(|r| {
                        let mut row = vec![r.configuration.clone()];
                        row.extend(r.cells.iter().map(|c| c.text()));
                        row
                    })
                    .collect(),
            ));
        }
        ResultData::ContractTree { tree } => out.push(Block::Table(
            vec!["Node".into(), "Gate".into(), "Inputs".into()],
            tree.nodes.iter().map(|n| vec![n.label.clone(), format!("{:?}", n.gate), n.children.join(", ")]).collect(),
        )),
    }
}

/// Result anchors, made unique by numbering repeats.
fn anchors(results: &[AnalysisResult]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    results
        .iter()
        .map(|r| {
            let base = format!("result-{}", r.id);
            let mut a = base.clone();
            let mut n = 2;
            while !seen.insert(a.clone()) {
                a = format!("{base}-{n}");
                n += 1;
            }
            a
        })
        .collect()
}

/// Report category of a result.
fn category(d: &ResultData) -> usize {
    match d {
        ResultData::Validation { .. } | ResultData::Instance { .. } => 0,
        ResultData::Refinement { .. }
        | ResultData::Verification { .. }
        | ResultData::LeafVerification { .. }
        | ResultData::ContractTree { .. } => 1,
        ResultData::Ltl { .. } | ResultData::Reachability { .. } => 2,
        ResultData::FaultTree { .. } => 3,
        ResultData::Fmea { .. } => 4,
        ResultData::Reliability { .. } => 5,
        ResultData::Tradeoff { .. } => 6,
    }
}

const CATEGORIES: [&str; 7] = [
    "Validation",
    "Contract checks",
    "Model checking",
    "Fault tree analysis",
    "FMEA",
    "Reliability",
    "Trade-off analysis",
];

fn analyses(results: &ResultsFile, out: &mut Vec<Block>) {
    out.push(Block::Heading(1, "Analysis results".into(), Some("results".into())));
    if results.results.is_empty() {
        out.push(Block::Para("No analyses run.".into()));
        return;
    }
    let overview = CATEGORIES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let of: Vec<&AnalysisResult> = results.results.iter().filter(|r| category(&r.data) == i).collect();
            let text = if of.is_empty() {
                "not run".to_string()
            } else {
                let count = |s| of.iter().filter(|r| r.status == s).count();
                format!(
                    "{} pass, {} fail, {} inconclusive",
                    count(Status::Positive),
                    count(Status::Negative),
                    count(Status::Inconclusive)
                )
            };
            vec![name.to_string(), text]
        })
        .collect();
    out.push(Block::Table(vec!["Analysis".into(), "Outcome".into()], overview));
    for (r, anchor) in results.results.iter().zip(anchors(&results.results)) {
        out.push(Block::Heading(2, r.title.clone(), Some(anchor)));
        let mut rows = vec![
            vec!["Status".to_string(), status_text(r.status).to_string()],
            vec!["Configuration".to_string(), r.configuration.clone()],
            vec!["Summary".to_string(), r.summary.clone()],
        ];
        rows.extend(r.inputs.iter().map(|(k, v)| vec![k.clone(), v.clone()]));
        if let Some(s) = r.seed {
            rows.push(vec!["Seed".into(), s.to_string()]);
        }
        if let Some(i) = &r.invocation {
            rows.push(vec!["Invocation".into(), i.clone()]);
        }
        out.push(Block::Table(vec!["Field".into(), "Value".into()], rows));
        details(r, out);
    }
}

fn html_escape(s: &str) -> String {
    let mut o = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => o.push_str("&amp;"),
            '<' => o.push_str("&lt;"),
            '>' => o.push_str("&gt;"),
            '"' => o.push_str("&quot;"),
            '\'' => o.push_str("&#39;"),
            _ => o.push(c),
        }
    }
    o
}

fn latex_escape(s: &str) -> String {
    let mut o = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => o.push_str("\\textbackslash{}"),
            '&' | '%' | '$' | '#' | '_' | '{' | '}' => {
                o.push('\\');
                o.push(c);
            }
            '~' => o.push_str("\\textasciitilde{}"),
            '^' => o.push_str("\\textasciicircum{}"),
            '<' => o.push_str("\\textless{}"),
            '>' => o.push_str("\\textgreater{}"),
            '|' => o.push_str("\\textbar{}"),
            // Brackets would otherwise be read as optional arguments after
            // `\\` or inside `\item[..]`.
            '[' | ']' => {
                o.push('{');
                o.push(c);
                o.push('}');
            }
            '\n' | '\r' => o.push(' '),
            // Outside Latin-1 a default pdflatex setup has no glyph.
            c if (c as u32) > 0xff => {
                let _ = write!(o, "(U+{:04X})", c as u32);
            }
            _ => o.push(c),
        }
    }
    o
}

fn render_html(title: &str, header: &[(String, String)], body: &[Block]) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\"/>");
    let _ = writeln!(o, "<title>{}</title>", html_escape(title));
    o.push_str(
        "<style>table{border-collapse:collapse}td,th{border:1px solid #999;padding:2px 6px}</style>\n</head>\n<body>\n",
    );
    let _ = writeln!(o, "<h1>{}</h1>\n<dl class=\"meta\">", html_escape(title));
    for (k, v) in header {
        let _ = writeln!(o, "<dt>{}</dt><dd>{}</dd>", html_escape(k), html_escape(v));
    }
    o.push_str("</dl>\n");
    for b in body {
        match b {
            Block::Heading(level, text, anchor) => {
                let id = anchor.as_ref().map(|a| format!(" id=\"{}\"", html_escape(a))).unwrap_or_default();
                let l = level + 1;
                let _ = writeln!(o, "<h{l}{id}>{}</h{l}>", html_escape(text));
            }
            Block::Para(t) => {
                let _ = writeln!(o, "<p>{}</p>", html_escape(t));
            }
            Block::Pre(t) => {
                let _ = writeln!(o, "<pre>{}</pre>", html_escape(t));
            }
            Block::Table(head, rows) => {
                if rows.is_empty() {
                    o.push_str("<p>None.</p>\n");
                    continue;
                }
                o.push_str("<table>\n<tr>");
                for h in head {
                    let _ = write!(o, "<th>{}</th>", html_escape(h));
                }
                o.push_str("</tr>\n");
                for r in rows {
                    o.push_str("<tr>");
                    for c in r {
                        let _ = write!(o, "<td>{}</td>", html_escape(c));
                    }
                    o.push_str("</tr>\n");
                }
                o.push_str("</table>\n");
            }
        }
    }
    o.push_str("</body>\n</html>\n");
    o
}

fn render_latex(title: &str, header: &[(String, String)], body: &[Block]) -> String {
    let mut o = String::new();
    o.push_str("\\documentclass{article}\n\\usepackage[T1]{fontenc}\n\\usepackage{longtable}\n\\begin{document}\n");
    let _ = writeln!(o, "\\section*{{{}}}", latex_escape(title));
    o.push_str("\\begin{description}\n");
    for (k, v) in header {
        let _ = writeln!(o, "\\item[{}] {}", latex_escape(k), latex_escape(v));
    }
    o.push_str("\\end{description}\n");
    for b in body {
        match b {
            Block::Heading(level, text, anchor) => {
                let cmd = if *level == 1 { "section" } else { "subsection" };
                let _ = write!(o, "\\{cmd}{{{}}}", latex_escape(text));
                if let Some(a) = anchor {
                    let _ = write!(o, "\\label{{{a}}}");
                }
                o.push('\n');
            }
            Block::Para(t) => {
                let _ = writeln!(o, "{}\n", latex_escape(t));
            }
            Block::Pre(t) => {
                o.push_str("\\begin{flushleft}\\ttfamily\n");
                for line in t.lines() {
                    let _ = writeln!(o, "\\mbox{{}}{}\\\\", latex_escape(line).replace(' ', "~"));
                }
                o.push_str("\\end{flushleft}\n");
            }
            Block::Table(head, rows) => {
                if rows.is_empty() {
                    o.push_str("None.\n\n");
                    continue;
                }
                let cols = vec!["l"; head.len()].join("|");
                let _ = writeln!(o, "\\begin{{longtable}}{{|{cols}|}}\n\\hline");
                let h: Vec<String> = head.iter().map(|c| format!("\\textbf{{{}}}", latex_escape(c))).collect();
                let _ = writeln!(o, "{} \\\\\n\\hline", h.join(" & "));
                for r in rows {
                    let cells: Vec<String> = r.iter().map(|c| latex_escape(c)).collect();
                    let _ = writeln!(o, "{} \\\\", cells.join(" & "));
                }
                o.push_str("\\hline\n\\end{longtable}\n");
            }
        }
    }
    o.push_str("\\end{document}\n");
    o
}

/// Renders the architecture and the stored results as one document.
pub fn generate_report(
    model: &ArchitectureModel,
    results: &ResultsFile,
    format: ReportFormat,
    meta: &ReportMeta,
) -> String {
    let seeds: BTreeSet<u64> = results.results.iter().filter_map(|r| r.seed).collect();
    let header = vec![
        ("Tool version".to_string(), meta.tool_version.clone()),
        ("Generated".to_string(), meta.timestamp.clone()),
        ("Invocation".to_string(), meta.invocation.clone()),
        ("Model".to_string(), model.name.clone()),
        (
            "Seeds".to_string(),
            if seeds.is_empty() {
                "none".to_string()
            } else {
                seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
            },
        ),
    ];
    let mut body = Vec::new();
    structure(model, &mut body);
    analyses(results, &mut body);
    let title = format!("Dependability report: {}", model.name);
    match format {
        ReportFormat::Html => render_html(&title, &header, &body),
        ReportFormat::Latex => render_latex(&title, &header, &body),
    }
}
