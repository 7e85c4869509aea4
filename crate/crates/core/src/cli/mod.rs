//! Command-line front end: argument parsing, command dispatch and reports.

pub mod format;
pub mod report;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::error::Error;
use crate::isolation::{allowed_under_allocation, PivotRule};
use crate::polygraph::{is_acyclic_polygraph, reduce_to_schedule, verify_reduction, Polygraph, ReductionLimits};
use crate::robustness::{
    decide, decide_by_split, enumerate_allowed_schedules, RobustnessMode, RobustnessVerdict, SearchLimits, Workload,
};
use crate::schedule::{validate_schedule, Schedule};
use crate::serializability::{is_conflict_serializable, is_view_serializable, serialization_graph, ViewLimits};
use format::{
    parse_polygraph, parse_schedule, parse_schedule_unchecked, parse_workload, render_schedule, render_workload,
};
use report::Report;

#[derive(Parser, Debug)]
#[command(
    name = "vrobust",
    version,
    about = "Serializability, isolation-level admissibility and robustness of multiversion schedules"
)]
pub struct Cli {
    /// Print the report as report-v1 JSON.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check that a schedule document is well-formed.
    CheckSchedule(ScheduleArgs),
    /// Decide conflict- or view-serializability of a schedule.
    Serializable {
        #[arg(long, value_enum)]
        mode: SerialMode,
        #[command(flatten)]
        schedule: ScheduleArgs,
        /// Transaction bound for the view search.
        #[arg(long, env = "VROBUST_VIEW_MAX_TXNS", default_value_t = ViewLimits::default().max_txns)]
        view_max_txns: usize,
        /// Operation bound for the view search.
        #[arg(long, env = "VROBUST_VIEW_MAX_OPS", default_value_t = ViewLimits::default().max_ops)]
        view_max_ops: usize,
    },
    /// Check a schedule against the workload's allocation.
    Allowed {
        #[command(flatten)]
        schedule: ScheduleArgs,
        /// Read the dangerous-structure commit clause strictly.
        #[arg(long)]
        strict_pivot: bool,
    },
    /// Decide robustness of a workload against its allocation.
    Robust {
        workload: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = MethodArg::Enumerate)]
        method: MethodArg,
        #[command(flatten)]
        limits: LimitArgs,
        #[arg(long)]
        strict_pivot: bool,
        /// Write the counterexample's workload and schedule documents into this directory.
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// List every schedule allowed under the workload's allocation.
    Enumerate {
        workload: PathBuf,
        #[arg(long)]
        count_only: bool,
        #[command(flatten)]
        limits: LimitArgs,
        #[arg(long)]
        strict_pivot: bool,
    },
    /// Polygraph tools.
    #[command(subcommand)]
    Polygraph(PolygraphCommand),
}

#[derive(Subcommand, Debug)]
pub enum PolygraphCommand {
    /// Decide acyclicity by trying every choice resolution.
    Acyclic {
        polygraph: PathBuf,
        #[arg(long, env = "VROBUST_MAX_CHOICES", default_value_t = crate::polygraph::DEFAULT_MAX_CHOICES)]
        max_choices: usize,
    },
    /// Build the schedule whose view-serializability matches the polygraph's acyclicity.
    Reduce {
        polygraph: PathBuf,
        /// Schedule document output.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Workload document output; defaults to the schedule path with `.workload` appended.
        #[arg(long)]
        workload_output: Option<PathBuf>,
    },
    /// Run both oracles on the reduction and check its properties.
    Verify {
        polygraph: PathBuf,
        #[arg(long, env = "VROBUST_MAX_CHOICES", default_value_t = crate::polygraph::DEFAULT_MAX_CHOICES)]
        max_choices: usize,
    },
}

#[derive(Args, Debug)]
pub struct ScheduleArgs {
    pub schedule: PathBuf,
    #[arg(long)]
    pub workload: PathBuf,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct LimitArgs {
    #[arg(long, env = "VROBUST_MAX_TXNS", default_value_t = SearchLimits::default().max_txns)]
    pub max_txns: usize,
    #[arg(long, env = "VROBUST_MAX_OPS", default_value_t = SearchLimits::default().max_ops)]
    pub max_ops: usize,
    #[arg(long, env = "VROBUST_MAX_CANDIDATES", default_value_t = SearchLimits::default().max_candidates)]
    pub max_candidates: u64,
    #[arg(long, env = "VROBUST_BUDGET_MS", default_value_t = SearchLimits::default().budget.as_millis() as u64)]
    pub budget_ms: u64,
}

impl LimitArgs {
    pub fn limits(&self) -> SearchLimits {
        SearchLimits {
            max_txns: self.max_txns,
            max_ops: self.max_ops,
            max_candidates: self.max_candidates,
            budget: Duration::from_millis(self.budget_ms),
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SerialMode {
    Conflict,
    View,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Conflict,
    View,
    ExactConflict,
    ExactView,
}

impl From<ModeArg> for RobustnessMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Conflict => RobustnessMode::Conflict,
            ModeArg::View => RobustnessMode::View,
            ModeArg::ExactConflict => RobustnessMode::ExactConflict,
            ModeArg::ExactView => RobustnessMode::ExactView,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodArg {
    Split,
    Enumerate,
    Both,
}

/// Anything that ends a command before it produces a verdict.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: format::ParseError },
    #[error(transparent)]
    Analysis(#[from] Error),
    #[error("split search and enumeration disagree: split says {split}, enumeration says {enumeration}")]
    Disagreement { split: bool, enumeration: bool },
}

type CliResult<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn load_workload(path: &Path) -> CliResult<Workload> {
    parse_workload(&read(path)?).map_err(|source| CliError::Parse { path: path.display().to_string(), source })
}

fn load_schedule(args: &ScheduleArgs, checked: bool) -> CliResult<(Workload, Schedule)> {
    let w = load_workload(&args.workload)?;
    let text = read(&args.schedule)?;
    let parsed = if checked { parse_schedule(&text, &w.txns) } else { parse_schedule_unchecked(&text, &w.txns) };
    let s = parsed.map_err(|source| CliError::Parse { path: args.schedule.display().to_string(), source })?;
    Ok((w, s))
}

fn load_polygraph(path: &Path) -> CliResult<Polygraph> {
    parse_polygraph(&read(path)?).map_err(|source| CliError::Parse { path: path.display().to_string(), source })
}

/// Writes via a sibling temporary file so readers never see partial output.
fn write_atomically(path: &Path, contents: &str) -> CliResult<()> {
    let io = |source| CliError::Io { path: path.display().to_string(), source };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn ids(list: &[crate::schedule::TxnId]) -> Vec<String> {
    list.iter().map(ToString::to_string).collect()
}

/// The result of `robust`, with the second opinion when both methods ran.
#[derive(Clone, Debug)]
pub struct RobustOutcome {
    pub verdict: RobustnessVerdict,
    pub cross_check: Option<RobustnessVerdict>,
}

/// Runs the requested decision procedure(s). With both, the enumeration
/// verdict is reported and the split verdict must agree with it.
pub fn decide_robustness(
    w: &Workload,
    mode: RobustnessMode,
    method: MethodArg,
    limits: &SearchLimits,
) -> CliResult<RobustOutcome> {
    match method {
        MethodArg::Enumerate => Ok(RobustOutcome { verdict: decide(w, mode, limits)?, cross_check: None }),
        MethodArg::Split => Ok(RobustOutcome { verdict: decide_by_split(w, mode, limits)?, cross_check: None }),
        MethodArg::Both => {
            let split = decide_by_split(w, mode, limits)?;
            let enumeration = decide(w, mode, limits)?;
            if split.robust != enumeration.robust {
                return Err(CliError::Disagreement { split: split.robust, enumeration: enumeration.robust });
            }
            Ok(RobustOutcome { verdict: enumeration, cross_check: Some(split) })
        }
    }
}

fn with_pivot(mut w: Workload, strict: bool) -> Workload {
    if strict {
        w.alloc = w.alloc.with_pivot(PivotRule::Strict);
    }
    w
}

fn indent(text: &str) -> String {
    text.lines().map(|l| format!("  {l}\n")).collect()
}

fn counterexample_json(w: &Workload, v: &RobustnessVerdict) -> serde_json::Value {
    match &v.counterexample {
        None => serde_json::Value::Null,
        Some(cx) => {
            let sub = w.restrict(&cx.subset);
            json!({
                "subset": ids(&cx.subset),
                "order": format::render_order(&cx.schedule),
                "schedule": render_schedule(&cx.schedule),
                "workload": render_workload(&Workload::new(cx.schedule.transactions().to_vec(), sub.alloc)),
            })
        }
    }
}

fn execute(cli: &Cli, report: &mut Report) -> CliResult<()> {
    match &cli.command {
        Command::CheckSchedule(args) => {
            let (_, s) = load_schedule(args, false)?;
            let violations = validate_schedule(&s);
            report.violations = violations.iter().map(ToString::to_string).collect();
            report.details = json!({ "violations": violations });
            let n = violations.len();
            report.verdict(n == 0, if n == 0 { "well-formed".to_string() } else { format!("{n} violation(s)") });
        }
        Command::Serializable { mode, schedule, view_max_txns, view_max_ops } => {
            let (_, s) = load_schedule(schedule, true)?;
            match mode {
                SerialMode::Conflict => {
                    let (ok, cycle) = is_conflict_serializable(&s);
                    let graph = serialization_graph(&s);
                    let edges: Vec<[String; 2]> =
                        graph.edge_pairs().iter().map(|(a, b)| [a.to_string(), b.to_string()]).collect();
                    report.details = json!({
                        "mode": "conflict",
                        "serializable": ok,
                        "cycle": cycle.as_deref().map(ids),
                        "edges": edges,
                    });
                    let summary = match &cycle {
                        None => "conflict-serializable".to_string(),
                        Some(c) => format!("not conflict-serializable, cycle {}", ids(c).join(" -> ")),
                    };
                    report.text = format!(
                        "  edges: {}\n",
                        edges.iter().map(|[a, b]| format!("{a}->{b}")).collect::<Vec<_>>().join(" ")
                    );
                    report.verdict(ok, summary);
                }
                SerialMode::View => {
                    let limits = ViewLimits { max_txns: *view_max_txns, max_ops: *view_max_ops };
                    let v = is_view_serializable(&s, limits)?;
                    report.details = json!({
                        "mode": "view",
                        "serializable": v.verdict,
                        "witness": v.witness.as_deref().map(ids),
                        "exhausted": v.exhausted,
                    });
                    let summary = match &v.witness {
                        Some(order) => format!("view-serializable, witness {}", ids(order).join(" ")),
                        None => format!("not view-serializable ({} serial orders ruled out)", v.exhausted),
                    };
                    report.verdict(v.verdict, summary);
                }
            }
        }
        Command::Allowed { schedule, strict_pivot } => {
            let (w, s) = load_schedule(schedule, true)?;
            let w = with_pivot(w, *strict_pivot);
            let r = allowed_under_allocation(&s, &w.alloc)?;
            report.violations = r
                .violations
                .iter()
                .map(|v| {
                    let clause = serde_json::to_value(v.clause).expect("clauses serialize");
                    let clause = clause.as_str().unwrap_or_default().to_string();
                    match v.txn {
                        Some(t) => format!("{t}: {clause}"),
                        None => clause,
                    }
                })
                .collect();
            report.text = r.dangerous_structures.iter().map(|d| format!("  dangerous structure {d}\n")).collect();
            report.details = serde_json::to_value(&r).expect("reports serialize");
            report.verdict(r.allowed, if r.allowed { "allowed" } else { "not allowed" });
        }
        Command::Robust { workload, mode, method, limits, strict_pivot, emit } => {
            let w = with_pivot(load_workload(workload)?, *strict_pivot);
            let limits = limits.limits();
            report.limits = Some(limits);
            let out = decide_robustness(&w, (*mode).into(), *method, &limits)?;
            let v = &out.verdict;
            let cx = counterexample_json(&w, v);
            report.details = json!({
                "mode": v.mode,
                "method": v.method,
                "robust": v.robust,
                "examined": v.examined,
                "counterexample": cx,
                "cross_check": out.cross_check.as_ref().map(|c| json!({ "method": c.method, "robust": c.robust, "examined": c.examined })),
            });
            let method_name = match v.method {
                crate::robustness::Method::SplitSearch => "split search",
                crate::robustness::Method::Enumeration => "enumeration",
            };
            let mut summary = format!(
                "{} ({} mode, {}, {} candidates)",
                if v.robust { "robust" } else { "not robust" },
                v.mode,
                method_name,
                v.examined
            );
            if out.cross_check.is_some() {
                summary.push_str(", split search agrees");
            }
            if let Some(c) = &v.counterexample {
                report.text = format!(
                    "counterexample over {{{}}}:\n{}",
                    ids(&c.subset).join(", "),
                    indent(&render_schedule(&c.schedule))
                );
                if let Some(dir) = emit {
                    fs::create_dir_all(dir)
                        .map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
                    write_atomically(&dir.join("counterexample.schedule"), cx["schedule"].as_str().unwrap_or(""))?;
                    write_atomically(&dir.join("counterexample.workload"), cx["workload"].as_str().unwrap_or(""))?;
                }
            }
            report.verdict(v.robust, summary);
        }
        Command::Enumerate { workload, count_only, limits, strict_pivot } => {
            let w = with_pivot(load_workload(workload)?, *strict_pivot);
            let limits = limits.limits();
            report.limits = Some(limits);
            let all = enumerate_allowed_schedules(&w, &limits)?;
            let docs: Vec<String> = all.iter().map(render_schedule).collect();
            report.details = if *count_only {
                json!({ "count": all.len() })
            } else {
                json!({ "count": all.len(), "schedules": docs })
            };
            if !count_only {
                report.text = docs.iter().enumerate().map(|(i, d)| format!("# schedule {}\n{d}", i + 1)).collect();
            }
            report.verdict(true, format!("{} allowed schedule(s)", all.len()));
        }
        Command::Polygraph(PolygraphCommand::Acyclic { polygraph, max_choices }) => {
            let p = load_polygraph(polygraph)?;
            let (ok, witness) = is_acyclic_polygraph(&p, *max_choices)?;
            report.details = json!({ "acyclic": ok, "witness": witness });
            if let Some(w) = &witness {
                let edges: Vec<String> = w.extra_edges.iter().map(|(a, b)| format!("{a}->{b}")).collect();
                report.text = format!("  resolved choices: {}\n", edges.join(" "));
            }
            report.verdict(ok, if ok { "acyclic" } else { "cyclic under every resolution" });
        }
        Command::Polygraph(PolygraphCommand::Reduce { polygraph, output, workload_output }) => {
            let p = load_polygraph(polygraph)?;
            let red = reduce_to_schedule(&p)?;
            let txns = red.transactions().to_vec();
            let alloc = crate::isolation::Allocation::uniform(
                txns.iter().map(|t| t.id()),
                crate::isolation::IsolationLevel::RC,
            );
            let workload_doc = render_workload(&Workload::new(txns, alloc));
            let schedule_doc = render_schedule(&red.schedule);
            let nodes: serde_json::Map<String, serde_json::Value> =
                red.node_txns.iter().map(|(n, t)| (n.clone(), json!(t.to_string()))).collect();
            let mut details = json!({
                "transactions": red.transactions().len(),
                "operations": red.schedule.op_count(),
                "node_transactions": nodes,
            });
            match output {
                Some(path) => {
                    let wpath = workload_output.clone().unwrap_or_else(|| {
                        let mut p = path.as_os_str().to_owned();
                        p.push(".workload");
                        PathBuf::from(p)
                    });
                    write_atomically(&wpath, &workload_doc)?;
                    write_atomically(path, &schedule_doc)?;
                    details["schedule_path"] = json!(path.display().to_string());
                    details["workload_path"] = json!(wpath.display().to_string());
                }
                None => {
                    details["schedule"] = json!(schedule_doc);
                    details["workload"] = json!(workload_doc);
                    report.text = format!("{workload_doc}\n{schedule_doc}");
                }
            }
            report.details = details;
            report.verdict(
                true,
                format!("{} transactions, {} operations", red.transactions().len(), red.schedule.op_count()),
            );
        }
        Command::Polygraph(PolygraphCommand::Verify { polygraph, max_choices }) => {
            let p = load_polygraph(polygraph)?;
            let limits = ReductionLimits { max_choices: *max_choices, ..ReductionLimits::default() };
            let r = verify_reduction(&p, &limits)?;
            report.violations = r.checks.iter().filter(|c| !c.holds).map(|c| c.name.to_string()).collect();
            report.text =
                r.checks.iter().map(|c| format!("  {} {}\n", if c.holds { "ok  " } else { "FAIL" }, c.name)).collect();
            let summary = format!(
                "{} (acyclic: {}, view-serializable: {})",
                if r.passed { "reduction verified" } else { "reduction check failed" },
                r.acyclic,
                r.view_serializable
            );
            report.details = serde_json::to_value(&r).expect("reports serialize");
            report.verdict(r.passed, summary);
        }
    }
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::CheckSchedule(_) => "check-schedule",
        Command::Serializable { .. } => "serializable",
        Command::Allowed { .. } => "allowed",
        Command::Robust { .. } => "robust",
        Command::Enumerate { .. } => "enumerate",
        Command::Polygraph(PolygraphCommand::Acyclic { .. }) => "polygraph acyclic",
        Command::Polygraph(PolygraphCommand::Reduce { .. }) => "polygraph reduce",
        Command::Polygraph(PolygraphCommand::Verify { .. }) => "polygraph verify",
    }
}

/// Runs an already parsed command line. Returns the exit code and the text to print.
pub fn run_cli(cli: &Cli, argv: Vec<String>) -> (i32, String) {
    let started = Instant::now();
    let mut report = Report::new(command_name(&cli.command), argv);
    if let Err(e) = execute(cli, &mut report) {
        let analysis = match &e {
            CliError::Analysis(inner) => Some(inner),
            _ => None,
        };
        report.fail(e.to_string(), analysis);
    }
    report.elapsed_ms = started.elapsed().as_millis() as u64;
    let text = report.render(cli.json);
    (report.exit_code, text)
}

/// Parses `args` (program name first) and runs the command. Usage errors
/// exit with 2 and clap's message.
pub fn run<I, T>(args: I) -> (i32, String)
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match Cli::try_parse_from(&args) {
        Ok(cli) => run_cli(&cli, argv),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            (code, e.to_string())
        }
    }
}
