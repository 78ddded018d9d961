//! Textual concrete syntax (`.dep` files): parser, canonical printer and
//! diagnostics.
//!
//! A model may span several files through `import "relative/path.dep";`.
//! Imported files contribute top-level items; exactly one file (the first
//! source) carries the `model NAME { ... }` wrapper.

mod lexer;
mod parser;
mod printer;

pub use parser::{parse_expr, parse_ltl};
pub use printer::serialize_model;

use crate::model::ArchitectureModel;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::path::{Component, Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub path: String,
    pub text: String,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Self {
        SourceFile { path: path.into(), text: text.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

/// 1-based line/column position plus length in characters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
pub struct Span {
    pub line: u32,
    pub column: u32,
    pub length: u32,
}

impl Span {
    pub fn new(line: u32, column: u32, length: u32) -> Self {
        Span { line, column, length }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Diagnostic {
    pub file: String,
    pub severity: Severity,
    pub span: Span,
    pub message: String,
}

impl Diagnostic {
    pub(crate) fn error(file: &str, span: Span, message: impl Into<String>) -> Self {
        Diagnostic { file: file.to_string(), severity: Severity::Error, span, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}:{}: {sev}: {}", self.file, self.span.line, self.span.column, self.message)
    }
}

fn sort_diagnostics(diags: &mut [Diagnostic]) {
    diags.sort_by(|a, b| (&a.file, a.span.line, a.span.column).cmp(&(&b.file, b.span.line, b.span.column)));
}

/// Lexically normalizes `a/./b/../c` to `a/c`.
fn normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for comp in path.components() {
        match comp {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other.as_os_str()),
        }
    }
    out
}

fn resolve_import(from: &str, target: &str) -> String {
    let base = Path::new(from).parent().unwrap_or(Path::new(""));
    normalize(&base.join(target)).to_string_lossy().into_owned()
}

/// Parses a model from its source files. The first file is the main file;
/// others are only used when reached through `import`.
///
/// Name resolution beyond syntax is left to [`crate::validate::validate_core`].
pub fn parse_model(sources: &[SourceFile]) -> Result<ArchitectureModel, Vec<Diagnostic>> {
    let Some(main) = sources.first() else {
        return Err(vec![Diagnostic::error("<none>", Span::new(1, 1, 0), "no source files given")]);
    };
    let parsed: Vec<(parser::FileAst, Vec<Diagnostic>)> =
        sources.par_iter().map(|s| parser::parse_file(&s.path, &s.text)).collect();

    let by_path: HashMap<String, usize> = sources
        .iter()
        .enumerate()
        .map(|(i, s)| (normalize(Path::new(&s.path)).to_string_lossy().into_owned(), i))
        .collect();

    let mut diags = Vec::new();
    let mut order = Vec::new();
    let mut state = vec![0u8; sources.len()]; // 0 new, 1 on stack, 2 done
    visit_imports(0, sources, &parsed, &by_path, &mut state, &mut order, &mut diags);

    for &i in &order {
        diags.extend(parsed[i].1.iter().cloned());
    }

    let mut model = ArchitectureModel::default();
    let mut root: Option<(String, String, Span)> = None;
    for &i in &order {
        let file = &parsed[i].0;
        if i != 0 {
            if let Some((_, span)) = &file.model_name {
                diags.push(Diagnostic::error(&sources[i].path, *span, "imported file must not declare a model"));
            }
        }
        for item in file.items.iter().cloned() {
            match item {
                parser::Item::Block(b) => model.blocks.push(b),
                parser::Item::Requirement(r) => model.requirements.push(r),
                parser::Item::Configuration(c) => model.configurations.push(c),
                parser::Item::Event(e) => model.events.push(e),
                parser::Item::Check(c) => model.checks.push(c),
                parser::Item::Root(name, span) => {
                    if let Some((_, prev_file, prev)) = &root {
                        diags.push(Diagnostic::error(
                            &sources[i].path,
                            span,
                            format!("duplicate root declaration (first at {prev_file}:{})", prev.line),
                        ));
                    } else {
                        root = Some((name, sources[i].path.clone(), span));
                    }
                }
            }
        }
    }
    match &parsed[0].0.model_name {
        Some((name, _)) => model.name = name.clone(),
        None if parsed[0].1.is_empty() => {
            diags.push(Diagnostic::error(&main.path, Span::new(1, 1, 0), "missing `model NAME { ... }` declaration"))
        }
        None => {}
    }
    match root {
        Some((name, _, _)) => model.root = name,
        None if diags.is_empty() => {
            diags.push(Diagnostic::error(&main.path, parsed[0].0.end_span, "missing `root BLOCK` declaration"))
        }
        None => {}
    }
    if diags.iter().any(|d| d.severity == Severity::Error) {
        sort_diagnostics(&mut diags);
        return Err(diags);
    }
    Ok(model)
}

fn visit_imports(
    i: usize,
    sources: &[SourceFile],
    parsed: &[(parser::FileAst, Vec<Diagnostic>)],
    by_path: &HashMap<String, usize>,
    state: &mut [u8],
    order: &mut Vec<usize>,
    diags: &mut Vec<Diagnostic>,
) {
    state[i] = 1;
    for (target, span) in &parsed[i].0.imports {
        let key = resolve_import(&sources[i].path, target);
        match by_path.get(&key) {
            None => {
                diags.push(Diagnostic::error(&sources[i].path, *span, format!("cannot find imported file `{target}`")))
            }
            Some(&j) if state[j] == 1 => {
                diags.push(Diagnostic::error(&sources[i].path, *span, format!("import cycle through `{target}`")))
            }
            Some(&j) if state[j] == 2 => {}
            Some(&j) => visit_imports(j, sources, parsed, by_path, state, order, diags),
        }
    }
    state[i] = 2;
    order.push(i);
}

/// Reads a main file and everything it transitively imports from disk.
pub fn load_sources(path: &Path) -> Result<Vec<SourceFile>, Vec<Diagnostic>> {
    let main = normalize(path).to_string_lossy().into_owned();
    let mut files: Vec<SourceFile> = Vec::new();
    let mut pending = vec![(main, None::<(String, Span)>)];
    let mut diags = Vec::new();
    while let Some((p, origin)) = pending.pop() {
        if files.iter().any(|f| f.path == p) {
            continue;
        }
        let bytes = match std::fs::read(&p) {
            Ok(b) => b,
            Err(e) => {
                let (file, span) = origin.unwrap_or((p.clone(), Span::new(1, 1, 0)));
                diags.push(Diagnostic::error(&file, span, format!("cannot read `{p}`: {e}")));
                continue;
            }
        };
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let (ast, _) = parser::parse_file(&p, &text);
        for (target, span) in &ast.imports {
            pending.push((resolve_import(&p, target), Some((p.clone(), *span))));
        }
        files.push(SourceFile { path: p, text });
    }
    if diags.is_empty() {
        Ok(files)
    } else {
        sort_diagnostics(&mut diags);
        Err(diags)
    }
}

/// Convenience: load from disk and parse.
pub fn load_model(path: &Path) -> Result<ArchitectureModel, Vec<Diagnostic>> {
    parse_model(&load_sources(path)?)
}
