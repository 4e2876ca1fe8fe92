use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use atomip::config::{ConfigError, RunConfig};
use atomip::control::{optimize_protocol, ControlError, OptimizationReport};
use atomip::dynamics::{initial_state, run_protocol_with, InitialState, ProtocolParams};
use atomip::encoding::{build_level_scheme, build_templates, HamiltonianTemplate, LevelScheme};
use atomip::model::{
    brute_force_optimum, format_rational, rational_serde, BruteForce, Linearity, Metrics, ModelError, Problem, Rational,
    VariableCounts, DEFAULT_ENUMERATION_CAP,
};
use atomip::objective::{report_stride, AccumulatorConfig, CostTable, ObjectiveAccumulator, ObjectiveReport};
use atomip::parser::{format_problem, parse_problem};
use atomip::relaxation::{relaxed_value, GridConfig, RelaxedValue};
use atomip::{solve_bnb, BnbConfig, BnbStatus};

mod report;

use report::RunReport;

const EXIT_PARSE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_UNSUPPORTED: u8 = 4;
const EXIT_OPTIMIZER: u8 = 5;

#[derive(Parser)]
#[command(name = "atomip", version, about = "Integer programs on a simulated multi-level atom")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a problem file and print it in canonical form.
    Parse { path: PathBuf },
    /// Hardness metrics B1, B2, B3 with the integer and relaxed optima.
    Metrics {
        path: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize a coupling protocol and decode the best feasible assignment.
    Solve {
        path: PathBuf,
        #[command(flatten)]
        flags: SolveFlags,
    },
    /// Classical LP branch and bound (linear problems only).
    Bnb {
        path: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive search over every assignment.
    Brute { path: PathBuf },
}

#[derive(Args)]
struct SolveFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    /// Simulation step in µs.
    #[arg(long)]
    dt: Option<f64>,
    /// Reporting step in µs.
    #[arg(long = "report-dt")]
    report_dt: Option<f64>,
    /// Objective evaluations per restart.
    #[arg(long)]
    budget: Option<usize>,
    /// Readout horizon in µs.
    #[arg(long)]
    horizon: Option<f64>,
    /// Run configuration file (TOML).
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Embed wall-clock timing in the report (breaks byte-identical reruns).
    #[arg(long)]
    timing: bool,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let code = match e {
            ModelError::CapExceeded { .. } => EXIT_UNSUPPORTED,
            _ => EXIT_PARSE,
        };
        Failure::new(code, e.to_string())
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
}

fn load(path: &Path) -> Result<(Problem, String), Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let problem = parse_problem(&text).map_err(|e| {
        let line = text.lines().nth(e.span.line.saturating_sub(1)).unwrap_or("");
        let caret = format!("{}{}", " ".repeat(e.span.column.saturating_sub(1)), "^".repeat(e.span.length.max(1)));
        Failure::new(EXIT_PARSE, format!("{}:{}: {}\n  {line}\n  {caret}", path.display(), e.span, e.message))
    })?;
    let canonical = format_problem(&problem);
    Ok((problem, canonical))
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_failure(&path, e))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report types serialize");
    bytes.push(b'\n');
    bytes
}

/// Assignment keyed by variable name, in declaration order.
struct Named(Vec<(String, i64)>);

impl Serialize for Named {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl Named {
    fn display(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|(n, v)| format!("{n}={v}")).collect();
        parts.join(" ")
    }
}

fn named(p: &Problem, x: &[i64]) -> Named {
    Named(p.variables().iter().zip(x).map(|(v, &x)| (v.name.clone(), x)).collect())
}

fn cmd_parse(path: &Path) -> Result<(), Failure> {
    let (_, canonical) = load(path)?;
    print!("{canonical}");
    Ok(())
}

#[derive(Serialize)]
struct MetricsResult {
    b1: f64,
    b2: f64,
    b3: f64,
    #[serde(serialize_with = "rational_serde::serialize")]
    v_int: Rational,
    #[serde(serialize_with = "rational_serde::serialize")]
    v_cont: Rational,
    /// `simplex` (exact) or `grid` (lower bound).
    v_cont_method: &'static str,
    counts: VariableCounts,
    v_int_f64: f64,
    v_cont_f64: f64,
}

fn cmd_metrics(path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let (p, canonical) = load(path)?;
    let v_int = match brute_force_optimum(&p, DEFAULT_ENUMERATION_CAP)? {
        BruteForce::Optimal { value, .. } => value,
        BruteForce::Infeasible => return Err(Failure::new(EXIT_UNSUPPORTED, "problem is infeasible; metrics undefined")),
    };
    let (v_cont, method) = match relaxed_value(&p, &GridConfig::default()) {
        Ok(RelaxedValue::Exact(v)) => (v, "simplex"),
        Ok(RelaxedValue::GridLowerBound(v)) => (v, "grid"),
        Ok(RelaxedValue::Infeasible) => return Err(Failure::new(EXIT_UNSUPPORTED, "relaxation is infeasible")),
        Err(e) => return Err(Failure::new(EXIT_UNSUPPORTED, e.to_string())),
    };
    let m = Metrics::compute(&p, v_int, v_cont);
    let result = MetricsResult {
        b1: m.b1,
        b2: m.b2,
        b3: m.b3,
        v_int_f64: atomip::model::to_f64(&m.v_int),
        v_cont_f64: atomip::model::to_f64(&m.v_cont),
        v_int: m.v_int,
        v_cont: m.v_cont,
        v_cont_method: method,
        counts: m.counts,
    };
    let report = RunReport::new("metrics", path, &canonical, None, None, &result);
    let bytes = to_json(&report);
    if let Some(dir) = out {
        write_file(dir, "report.json", &bytes)?;
    }
    print!("{}", String::from_utf8_lossy(&to_json(&result)));
    Ok(())
}

#[derive(Serialize)]
struct BruteResult {
    status: &'static str,
    value: Option<String>,
    argmax: Vec<Named>,
}

fn cmd_brute(path: &Path) -> Result<(), Failure> {
    let (p, _) = load(path)?;
    let result = match brute_force_optimum(&p, DEFAULT_ENUMERATION_CAP)? {
        BruteForce::Optimal { value, argmax } => BruteResult {
            status: "optimal",
            value: Some(format_rational(&value)),
            argmax: argmax.iter().map(|x| named(&p, x)).collect(),
        },
        BruteForce::Infeasible => BruteResult {
            status: "infeasible",
            value: None,
            argmax: Vec::new(),
        },
    };
    match &result.value {
        Some(v) => println!("{v}"),
        None => println!("infeasible"),
    }
    for x in &result.argmax {
        println!("  {}", x.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct BnbSummary {
    status: BnbStatus,
    value: Option<String>,
    assignment: Option<Named>,
    node_count: usize,
}

fn cmd_bnb(path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let (p, canonical) = load(path)?;
    if p.classify() != Linearity::Linear {
        return Err(Failure::new(EXIT_UNSUPPORTED, "branch and bound supports linear problems only"));
    }
    let res = solve_bnb(&p, &BnbConfig::default()).map_err(|e| Failure::new(EXIT_UNSUPPORTED, e.to_string()))?;
    let summary = BnbSummary {
        status: res.status,
        value: res.value.as_ref().map(format_rational),
        assignment: res.assignment.as_ref().map(|x| named(&p, x)),
        node_count: res.node_count,
    };
    if let Some(dir) = out {
        let report = RunReport::new("bnb", path, &canonical, None, None, &summary);
        write_file(dir, "report.json", &to_json(&report))?;
        write_file(dir, "bnb_trace.json", &to_json(&res.trace))?;
    }
    print!("{}", String::from_utf8_lossy(&to_json(&summary)));
    Ok(())
}

#[derive(Serialize)]
struct TemplateInfo {
    constraint: String,
    slots: Vec<String>,
}

#[derive(Serialize)]
struct EncodingInfo {
    dimension: usize,
    initial_state: InitialState,
    initial_levels: Vec<String>,
    templates: Vec<TemplateInfo>,
}

#[derive(Serialize)]
struct Solution {
    #[serde(serialize_with = "rational_serde::serialize")]
    cost: Rational,
    assignment: Named,
    first_time_us: f64,
    restart: usize,
    /// Constraints re-checked exactly on the decoded assignment.
    verified: bool,
    /// Brute-force optimum, when the search space is small enough.
    reference_optimum: Option<String>,
}

#[derive(Serialize)]
struct TrajectoryInfo {
    /// Which protocol `trajectory.csv` replays.
    source: &'static str,
    total_time_us: f64,
    o_fine: f64,
    o_report: f64,
    n_tau_report: usize,
    n_t_report: usize,
}

#[derive(Serialize)]
struct SolveResult {
    encoding: EncodingInfo,
    solution: Option<Solution>,
    trajectory: Option<TrajectoryInfo>,
    optimization: Option<OptimizationReport>,
    error: Option<String>,
    timing_ms: Option<u128>,
}

fn level_name(p: &Problem, scheme: &LevelScheme, g: usize) -> String {
    let (m, k) = scheme.locate(g);
    format!("{}_{}", p.variables()[m].name, scheme.value(m, k))
}

fn template_info(p: &Problem, t: &HamiltonianTemplate) -> TemplateInfo {
    TemplateInfo {
        constraint: p.constraints()[t.constraint].name.clone(),
        slots: t.slots.iter().map(|s| s.to_string()).collect(),
    }
}

/// Replays `params`, writing decimated rows to CSV and scoring both grids.
#[allow(clippy::too_many_arguments)]
fn replay(
    p: &Problem,
    scheme: &LevelScheme,
    templates: &[HamiltonianTemplate],
    table: &CostTable,
    config: &RunConfig,
    params: &ProtocolParams,
    source: &'static str,
) -> Result<(TrajectoryInfo, Vec<u8>), Failure> {
    let ctl = &config.control;
    let stride = report_stride(ctl.dt_us, config.report_dt_us);
    let init = initial_state(scheme, templates, ctl.initial_state);
    let mut fine = ObjectiveAccumulator::new(table, scheme, AccumulatorConfig::default());
    let mut coarse = ObjectiveAccumulator::new(table, scheme, AccumulatorConfig { stride, readout_horizon_us: None });
    let mut csv = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t_us".to_string()];
    header.extend((0..scheme.dimension()).map(|g| format!("p_{}", level_name(p, scheme, g))));
    header.extend(p.variables().iter().map(|v| format!("x_{}", v.name)));
    header.extend(["feasible".to_string(), "cost".to_string()]);
    let mut csv_error = None;
    if let Err(e) = csv.write_record(&header) {
        csv_error = Some(e);
    }
    let summary = run_protocol_with(scheme, templates, params, &ctl.bounds, ctl.dt_us, &init, |k, t, pops| {
        fine.push(k, t, pops);
        if let Some((levels, feasible, cost)) = coarse.push(k, t, pops) {
            let mut row = vec![format!("{t:.4}")];
            row.extend(pops.iter().map(|v| format!("{v:.9}")));
            row.extend(table.assignment(levels).iter().map(|v| v.to_string()));
            row.push(u8::from(feasible).to_string());
            row.push(cost.to_string());
            if let Err(e) = csv.write_record(&row) {
                csv_error.get_or_insert(e);
            }
        }
    })
    .map_err(|e| Failure::new(EXIT_OPTIMIZER, e.to_string()))?;
    if let Some(e) = csv_error {
        return Err(Failure::new(EXIT_IO, e.to_string()));
    }
    let fine: ObjectiveReport = fine.finish()?;
    let coarse: ObjectiveReport = coarse.finish()?;
    let bytes = csv.into_inner().map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
    Ok((
        TrajectoryInfo {
            source,
            total_time_us: summary.total_time,
            o_fine: fine.o,
            o_report: coarse.o,
            n_tau_report: coarse.n_tau,
            n_t_report: coarse.n_t,
        },
        bytes,
    ))
}

fn load_config(flags: &SolveFlags) -> Result<RunConfig, Failure> {
    let mut config = match &flags.policy {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            RunConfig::from_toml(&text).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    let c = &mut config.control;
    if let Some(v) = flags.seed {
        c.seed = v;
    }
    if let Some(v) = flags.restarts {
        c.restarts = v;
    }
    if let Some(v) = flags.layers {
        c.layers = v;
    }
    if let Some(v) = flags.dt {
        c.dt_us = v;
    }
    if let Some(v) = flags.budget {
        c.budget = v;
    }
    if let Some(v) = flags.horizon {
        c.readout_horizon_us = Some(v);
    }
    if let Some(v) = flags.report_dt {
        config.report_dt_us = v;
    }
    if !(config.report_dt_us > 0.0 && config.report_dt_us.is_finite()) {
        return Err(Failure::new(EXIT_PARSE, ConfigError::ReportStep.to_string()));
    }
    config.control.validate().map_err(|e| Failure::new(EXIT_PARSE, e.to_string()))?;
    Ok(config)
}

fn cmd_solve(path: &Path, flags: &SolveFlags) -> Result<(), Failure> {
    let started = Instant::now();
    let (p, canonical) = load(path)?;
    let config = load_config(flags)?;
    let policy = config
        .coupling_policy(&p)
        .map_err(|e| Failure::new(EXIT_PARSE, e.to_string()))?;
    let scheme = build_level_scheme(&p);
    let templates = build_templates(&p, &scheme, &policy).map_err(|e| Failure::new(EXIT_UNSUPPORTED, e.to_string()))?;
    let init = initial_state(&scheme, &templates, config.control.initial_state);
    let encoding = EncodingInfo {
        dimension: scheme.dimension(),
        initial_state: config.control.initial_state,
        initial_levels: init
            .populations()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(g, _)| level_name(&p, &scheme, g))
            .collect(),
        templates: templates.iter().map(|t| template_info(&p, t)).collect(),
    };
    let table = CostTable::new(&p)?;
    let reference = match brute_force_optimum(&p, 1 << 20) {
        Ok(b) => b.value().map(format_rational),
        Err(_) => None,
    };

    let outcome = optimize_protocol(&p, &scheme, &templates, &config.control);
    let mut result = SolveResult {
        encoding,
        solution: None,
        trajectory: None,
        optimization: None,
        error: None,
        timing_ms: None,
    };
    let mut failure = None;
    match outcome {
        Ok(opt) => {
            result.solution = opt.best_feasible.as_ref().map(|r| Solution {
                verified: p.is_feasible(&r.assignment).unwrap_or(false),
                cost: r.cost.clone(),
                assignment: named(&p, &r.assignment),
                first_time_us: r.time_us,
                restart: r.restart,
                reference_optimum: reference.clone(),
            });
            let (params, source) = match &opt.best_feasible {
                Some(r) => (&r.params, "readout"),
                None => (&opt.best_params, "best-objective"),
            };
            let (info, csv) = replay(&p, &scheme, &templates, &table, &config, params, source)?;
            write_file(&flags.out, "trajectory.csv", &csv)?;
            result.trajectory = Some(info);
            result.optimization = Some(opt);
        }
        Err(e @ (ControlError::Evaluation { .. } | ControlError::Optimizer { .. })) => {
            result.error = Some(e.to_string());
            failure = Some(Failure::new(EXIT_OPTIMIZER, e.to_string()));
        }
        Err(e) => return Err(Failure::new(EXIT_PARSE, e.to_string())),
    }
    let elapsed = started.elapsed();
    if flags.timing {
        result.timing_ms = Some(elapsed.as_millis());
    }
    let report = RunReport::new("solve", path, &canonical, Some(config.control.seed), Some(&config), &result);
    write_file(&flags.out, "report.json", &to_json(&report))?;
    eprintln!("solve finished in {:.1} s", elapsed.as_secs_f64());
    if let Some(f) = failure {
        return Err(f);
    }
    match &result.solution {
        Some(s) => println!(
            "best feasible cost {} at t = {} µs: {}",
            format_rational(&s.cost),
            s.first_time_us,
            s.assignment.display()
        ),
        None => println!("no feasible decoded assignment"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Parse { path } => cmd_parse(path),
        Command::Metrics { path, out } => cmd_metrics(path, out.as_deref()),
        Command::Solve { path, flags } => cmd_solve(path, flags),
        Command::Bnb { path, out } => cmd_bnb(path, out.as_deref()),
        Command::Brute { path } => cmd_brute(path),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::report::digest;

    #[test]
    fn digests_are_stable() {
        let d = digest("var x in 0..1\nmaximize x\n");
        assert_eq!(d.len(), 64);
        assert_eq!(d, digest("var x in 0..1\nmaximize x\n"));
    }
}
