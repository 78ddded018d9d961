use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use depforge_core::dsl::load_model;
use depforge_core::engine::{FaultMode, Limits};
use depforge_core::instance::list_configurations;
use depforge_core::model::ArchitectureModel;
use depforge_core::safety::format_probability;
use depforge_core::san::estimates_to_csv;
use depforge_core::workbench::{
    block_definition_dot, contract_tree_dot, fault_tree_dot, generate_report, internal_block_dot, load_results,
    run_tradeoff, tradeoff_result, validation_result, Analysis, AnalysisResult, ReportFormat, ReportMeta, ResultData,
    ResultsFile, Status, WorkbenchError,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Dependability analysis workbench for `.dep` architecture models.
#[derive(Parser)]
#[command(name = "depforge", version)]
struct Cli {
    /// Worker threads for parallel analyses (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Bound on explored joint states per search.
    #[arg(long, global = true)]
    state_cap: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Model file.
    model: PathBuf,
    /// Configuration to instantiate (default: the first declared).
    #[arg(long)]
    config: Option<String>,
    /// Also write the results as JSON to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model for well-formedness.
    Validate(Common),
    /// Expand a configuration into its instance tree.
    Instantiate(Common),
    /// Model-check an LTL formula or a reachability question.
    CheckLtl {
        #[command(flatten)]
        common: Common,
        /// Passes when the formula holds on every run.
        #[arg(long, group = "query")]
        formula: Option<String>,
        /// Passes when the condition is reachable.
        #[arg(long, group = "query")]
        reachable: Option<String>,
        /// Passes when the condition is unreachable.
        #[arg(long, group = "query")]
        unreachable: Option<String>,
        /// `inactive`, `free` or a comma-separated list of basic events.
        #[arg(long, default_value = "inactive")]
        faults: String,
        /// Restrict the system to this sub-component.
        #[arg(long)]
        component: Option<String>,
    },
    /// Check that a composite's contract is refined by its sub-components.
    CheckRefinement {
        #[command(flatten)]
        common: Common,
        /// Composite instance path (default: the root).
        #[arg(long)]
        component: Option<String>,
    },
    /// Verify a leaf against its contracts, or a composite compositionally.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Instance path (default: the root).
        #[arg(long)]
        component: Option<String>,
    },
    /// Fault tree analysis of a top-level event.
    Fta {
        #[command(flatten)]
        common: Common,
        /// Top-level event.
        #[arg(long)]
        tle: String,
        /// Largest cut set size to search.
        #[arg(long, default_value_t = 2)]
        max_order: usize,
        /// Fail when the top probability exceeds this value.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Failure modes and effects table.
    Fmea {
        #[command(flatten)]
        common: Common,
        /// Top-level events to consider (default: all).
        #[arg(long)]
        tle: Vec<String>,
        /// Number of simultaneous failure modes per row, 1 or 2.
        #[arg(long, default_value_t = 1)]
        cardinality: usize,
        /// Write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Monte-Carlo reliability estimate at a mission time.
    Reliability {
        #[command(flatten)]
        common: Common,
        /// Top-level event whose absence counts as success.
        #[arg(long)]
        tle: String,
        /// Hours.
        #[arg(long)]
        mission_time: f64,
        /// Simulated runs.
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        /// Defaults to DEPFORGE_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        /// Fail when the reliability is below this value.
        #[arg(long)]
        threshold: Option<f64>,
        /// Write the estimates as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the model's declared checks under every configuration.
    Tradeoff {
        /// Model file.
        model: PathBuf,
        /// Restrict to these configurations.
        #[arg(long = "config")]
        configs: Vec<String>,
        /// Seed for reliability checks; defaults to DEPFORGE_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the results as JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the matrix as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Render the model and stored results as HTML or LaTeX.
    Report {
        /// Model file.
        model: PathBuf,
        /// Stored results files.
        #[arg(long)]
        results: Vec<PathBuf>,
        /// Output format.
        #[arg(long, value_enum, default_value = "html")]
        format: Format,
        /// Write the document here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit a Graphviz diagram.
    ExportDot {
        /// Model file.
        model: PathBuf,
        /// Configuration to instantiate (default: the first declared).
        #[arg(long)]
        config: Option<String>,
        /// Write the diagram here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Diagram to draw.
        #[arg(long, value_enum)]
        kind: DotKind,
        /// Top-level event, for fault trees.
        #[arg(long)]
        tle: Option<String>,
        /// Largest cut set size, for fault trees.
        #[arg(long, default_value_t = 2)]
        max_order: usize,
        /// Component, for contract trees.
        #[arg(long)]
        component: Option<String>,
        /// Block, for the internal view (default: the root block).
        #[arg(long)]
        block: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Html,
    Latex,
}

#[derive(Clone, Copy, ValueEnum)]
enum DotKind {
    FaultTree,
    ContractTree,
    Bdd,
    Ibd,
}

enum Failure {
    Usage(String),
    Model(String),
    Resource(String),
}

impl From<WorkbenchError> for Failure {
    fn from(e: WorkbenchError) -> Self {
        if e.is_resource() {
            Failure::Resource(e.to_string())
        } else {
            Failure::Model(e.to_string())
        }
    }
}

const EXIT_NEGATIVE: u8 = 1;
const EXIT_MODEL: u8 = 2;
const EXIT_RESOURCE: u8 = 3;

fn invocation() -> String {
    std::env::args()
        .enumerate()
        .map(|(i, a)| if i == 0 { "depforge".to_string() } else { a })
        .map(|a| {
            if !a.is_empty() && a.chars().all(|c| c.is_ascii_alphanumeric() || "-_./=,:".contains(c)) {
                a
            } else {
                format!("'{}'", a.replace('\'', "'\\''"))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn load(path: &Path) -> Result<ArchitectureModel, Failure> {
    load_model(path).map_err(|d| Failure::Model(d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("\n")))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn seed(explicit: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = explicit {
        return Ok(s);
    }
    match std::env::var("DEPFORGE_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| Failure::Usage(format!("DEPFORGE_SEED is not an integer: `{v}`"))),
        Err(_) => Ok(0),
    }
}

fn fault_mode(text: &str) -> FaultMode {
    match text {
        "inactive" => FaultMode::AllInactive,
        "free" => FaultMode::Free,
        list => FaultMode::Only(list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()),
    }
}

fn label(s: Status) -> &'static str {
    match s {
        Status::Positive => "pass",
        Status::Negative => "FAIL",
        Status::Inconclusive => "inconclusive",
    }
}

/// Prints a result and, where useful, its evidence.
fn print_result(r: &AnalysisResult) {
    println!("[{}] {} ({}): {}", label(r.status), r.title, r.configuration, r.summary);
    match &r.data {
        ResultData::Validation { report, .. } => {
            for f in &report.findings {
                println!("  {f}");
            }
        }
        ResultData::Instance { instance } => {
            for c in instance.instances() {
                let path = if c.path.is_empty() { c.block.as_str() } else { c.path.as_str() };
                let params: Vec<String> = c.parameters.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!("  {path}: {} {}", c.block, params.join(" "));
            }
        }
        ResultData::Ltl { verdict, .. } | ResultData::Reachability { verdict, .. } => {
            if let Some(w) = &verdict.witness {
                print!("{}", indent(&w.to_text()));
            }
        }
        ResultData::Refinement { verdict } => {
            for o in &verdict.obligations {
                println!("  {:?}: {}", o.status, o.obligation.formula);
                if let Some(w) = &o.witness {
                    println!("    counterexample (repeats from step {}):", w.loop_start);
                    print!("{}", indent(&indent(&w.to_text())));
                }
            }
            for w in &verdict.warnings {
                println!("  warning: {w}");
            }
        }
        ResultData::Verification { verdict } => {
            for v in &verdict.refinements {
                println!("  refinement {}: {:?}", v.contract, v.overall);
            }
            for l in &verdict.leaves {
                println!("  leaf {}: {:?}", l.contract, l.verdict.result);
                if let Some(w) = &l.verdict.witness {
                    print!("{}", indent(&w.to_text()));
                }
            }
        }
        ResultData::LeafVerification { verdict } => {
            for w in &verdict.warnings {
                println!("  warning: {w}");
            }
            if let Some(w) = &verdict.verdict.witness {
                print!("{}", indent(&w.to_text()));
            }
        }
        ResultData::FaultTree { tree } => {
            for g in &tree.gates {
                let p = g.probability.map(|p| format!(" p={}", format_probability(p))).unwrap_or_default();
                println!("  {}: {{{}}}{p}", g.id, g.inputs.join(", "));
            }
            if let Some(n) = &tree.quantitative_note {
                println!("  note: {n}");
            }
            for w in &tree.warnings {
                println!("  warning: {w}");
            }
        }
        ResultData::Fmea { table } => {
            for row in &table.rows {
                let effects =
                    if row.system_effects.is_empty() { "-".to_string() } else { row.system_effects.join(", ") };
                println!("  {} -> {}", row.failure_mode.join(" + "), effects);
            }
            for w in &table.warnings {
                println!("  warning: {w}");
            }
        }
        ResultData::Reliability { estimates, .. } => {
            for e in estimates {
                println!("  {}: {:.6} [{:.6}, {:.6}]", e.reward_name, e.point_estimate, e.ci95.0, e.ci95.1);
            }
        }
        ResultData::Tradeoff { matrix } => {
            println!("  configuration | {}", matrix.checks.join(" | "));
            for row in &matrix.rows {
                let cells: Vec<String> = row.cells.iter().map(|c| c.text()).collect();
                println!("  {} | {}", row.configuration, cells.join(" | "));
            }
            for (row, c) in matrix.rows.iter().flat_map(|r| r.cells.iter().map(move |c| (r, c))) {
                if c.status != depforge_core::workbench::CellStatus::Pass {
                    println!("  {}: {}", row.configuration, c.detail);
                }
            }
        }
        ResultData::ContractTree { tree } => {
            for n in &tree.nodes {
                println!("  {} {:?} [{}]", n.label, n.gate, n.children.join(", "));
            }
        }
    }
}

fn indent(text: &str) -> String {
    text.lines().map(|l| format!("  {l}\n")).collect()
}

fn finish(model: &ArchitectureModel, mut results: Vec<AnalysisResult>, out: Option<&Path>) -> Result<u8, Failure> {
    let inv = invocation();
    for r in &mut results {
        r.invocation = Some(inv.clone());
        print_result(r);
    }
    if let Some(path) = out {
        write_file(path, &ResultsFile::new(&model.name, results.clone()).to_json())?;
    }
    let code = if results.iter().any(|r| r.status == Status::Negative) {
        EXIT_NEGATIVE
    } else if results.iter().any(|r| r.status == Status::Inconclusive) {
        EXIT_RESOURCE
    } else {
        0
    };
    Ok(code)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let mut limits = Limits::default();
    if let Some(cap) = cli.state_cap {
        limits.state_cap = cap;
    }
    match cli.command {
        Command::Validate(c) => {
            let model = load(&c.model)?;
            let r = validation_result(&model);
            let negative = r.status != Status::Positive;
            finish(&model, vec![r], c.out.as_deref())?;
            Ok(if negative { EXIT_MODEL } else { 0 })
        }
        Command::Instantiate(c) => {
            let model = load(&c.model)?;
            let a = Analysis::new(&model, c.config.as_deref(), limits)?;
            finish(&model, vec![a.instantiate_result()], c.out.as_deref())
        }
        Command::CheckLtl { common: c, formula, reachable, unreachable, faults, component } => {
            let model = load(&c.model)?;
            let a = Analysis::new(&model, c.config.as_deref(), limits)?;
            let mode = fault_mode(&faults);
            let r = match (formula, reachable, unreachable) {
                (Some(f), _, _) => a.check_ltl_result(&f, &mode, component.as_deref())?,
                (_, Some(e), _) => a.reachability_result(&e, &mode, true, component.as_deref())?,
                (_, _, Some(e)) => a.reachability_result(&e, &mode, false, component.as_deref())?,
                _ => return Err(Failure::Usage("one of --formula, --reachable or --unreachable is required".into())),
            };
            finish(&model, vec![r], c.out.as_deref())
        }
        Command::CheckRefinement { common: c, component } => {
            let model = load(&c.model)?;
            let a = Analysis::new(&model, c.config.as_deref(), limits)?;
            finish(&model, vec![a.refinement_result(component.as_deref())?], c.out.as_deref())
        }
        Command::Verify { common: c, component } => {
            let model = load(&c.model)?;
            let a = Analysis::new(&model, c.config.as_deref(), limits)?;
            finish(&model, vec![a.verification_result(component.as_deref())?], c.out.as_deref())
        }
        Command::Fta { common: c, tle, max_order, threshold } => {
            let model = load(&c.model)?;
            let a = Analysis::new(&model, c.config.as_deref(), limits)?;
            finish(&model, vec![a.fta_result(&tle, max_order, threshold)?], c.out.as_deref())
        }
        Command::Fmea { common: c, tle, cardinality, csv } => {
            let model = load(&c.model)?;
            let a = Analysis::new(&model, c.config.as_deref(), limits)?;
            let r = a.fmea_result(&tle, cardinality)?;
            if let (Some(path), ResultData::Fmea { table }) = (&csv, &r.data) {
                write_file(path, &table.to_csv())?;
            }
            finish(&model, vec![r], c.out.as_deref())
        }
        Command::Reliability { common: c, tle, mission_time, trials, seed: s, threshold, csv } => {
            let model = load(&c.model)?;
            let a = Analysis::new(&model, c.config.as_deref(), limits)?;
            let r = a.reliability_result(&tle, mission_time, trials, seed(s)?, threshold)?;
            if let (Some(path), ResultData::Reliability { estimates, .. }) = (&csv, &r.data) {
                write_file(path, &estimates_to_csv(estimates))?;
            }
            finish(&model, vec![r], c.out.as_deref())
        }
        Command::Tradeoff { model: path, configs, seed: s, out, csv } => {
            let model = load(&path)?;
            let all = list_configurations(&model).configurations;
            let selected = if configs.is_empty() {
                all
            } else {
                configs
                    .iter()
                    .map(|n| {
                        all.iter()
                            .find(|c| &c.name == n)
                            .cloned()
                            .ok_or_else(|| Failure::Model(format!("unknown configuration `{n}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?
            };
            let seed = seed(s)?;
            let matrix = run_tradeoff(&model, &selected, &model.checks, seed, limits)?;
            if let Some(p) = &csv {
                write_file(p, &matrix.to_csv())?;
            }
            let r = tradeoff_result(&model, matrix);
            finish(&model, vec![r], out.as_deref())
        }
        Command::Report { model: path, results, format, out } => {
            let model = load(&path)?;
            let mut all = Vec::new();
            for p in &results {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", p.display())))?;
                all.extend(load_results(&text)?.results);
            }
            let meta = ReportMeta {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                invocation: invocation(),
            };
            let fmt = match format {
                Format::Html => ReportFormat::Html,
                Format::Latex => ReportFormat::Latex,
            };
            let doc = generate_report(&model, &ResultsFile::new(&model.name, all), fmt, &meta);
            match out {
                Some(p) => write_file(&p, &doc)?,
                None => print!("{doc}"),
            }
            Ok(0)
        }
        Command::ExportDot { model: path, config, out, kind, tle, max_order, component, block } => {
            let model = load(&path)?;
            let dot = match kind {
                DotKind::Bdd => block_definition_dot(&model),
                DotKind::Ibd => internal_block_dot(&model, block.as_deref().unwrap_or(&model.root))?,
                DotKind::FaultTree => {
                    let tle = tle.ok_or_else(|| Failure::Usage("--tle is required for fault trees".into()))?;
                    let a = Analysis::new(&model, config.as_deref(), limits)?;
                    match a.fta_result(&tle, max_order, None)?.data {
                        ResultData::FaultTree { tree } => fault_tree_dot(&tree),
                        _ => unreachable!("fta_result yields a fault tree"),
                    }
                }
                DotKind::ContractTree => {
                    let a = Analysis::new(&model, config.as_deref(), limits)?;
                    match a.contract_tree_result(component.as_deref())?.data {
                        ResultData::ContractTree { tree } => contract_tree_dot(&tree),
                        _ => unreachable!("contract_tree_result yields a contract tree"),
                    }
                }
            };
            match &out {
                Some(p) => write_file(p, &dot)?,
                None => print!("{dot}"),
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            if !e.to_string().contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(EXIT_MODEL);
        }
    };
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: cannot configure {j} worker threads: {e}");
            return ExitCode::from(EXIT_MODEL);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(m)) | Err(Failure::Model(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_MODEL)
        }
        Err(Failure::Resource(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RESOURCE)
        }
    }
}
