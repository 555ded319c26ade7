//! `geoha` command-line driver: simulate strategies, train CPT snapshots,
//! and assemble comparison reports from run artifacts.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use geoha_core::artifacts::{self, MetricsRow};
use geoha_core::bundled;
use geoha_core::config::{self, PersonaRegistry, PriorsFile};
use geoha_core::pipeline::{Pipeline, PipelineConfig};
use geoha_core::policy::Thresholds;
use geoha_core::quorum::Persona;
use geoha_core::simulator::{run_sequence, Scenario, ScenarioRun, Strategy, TimelineEvent};
use geoha_core::telemetry::Baselines;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_THRESHOLD: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "geoha", version, about = "Predictive Geo-HA arbitration simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run scenarios under one or all strategies and write artifacts.
    Simulate(SimulateArgs),
    /// Replay scenarios with learning on and persist the learned tables.
    Learn(LearnArgs),
    /// Build the strategy comparison from existing artifacts.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Scenario file, repeatable; `bundled:<name>` selects a built-in fixture.
    #[arg(long = "scenario")]
    pub scenarios: Vec<String>,
    /// Expert priors JSON (defaults to the bundled priors).
    #[arg(long)]
    pub priors: Option<PathBuf>,
    /// Site baselines JSON (defaults to the bundled baselines).
    #[arg(long)]
    pub baselines: Option<PathBuf>,
    /// Persona registry; supplies baselines, priors and snapshot.
    #[arg(long)]
    pub personas: Option<PathBuf>,
    /// Persona id within the registry (defaults to the first entry).
    #[arg(long, requires = "personas")]
    pub persona: Option<String>,
    #[arg(long = "cpt-in")]
    pub cpt_in: Option<PathBuf>,
    #[arg(long = "cpt-out")]
    pub cpt_out: Option<PathBuf>,
    /// Overrides scenario seeds; scenario i runs with seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "c-fp", default_value_t = 3.0)]
    pub c_fp: f64,
    #[arg(long = "c-fn", default_value_t = 7.0)]
    pub c_fn: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_parser = parse_strategy, conflicts_with = "all_strategies", default_value = "adaptive")]
    pub strategy: Strategy,
    #[arg(long = "all-strategies")]
    pub all_strategies: bool,
    #[arg(long = "out-dir", default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LearnArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long = "out-dir", default_value = "out")]
    pub out_dir: PathBuf,
    /// Event whose rows make up the comparison table.
    #[arg(long, default_value = "event3")]
    pub event: String,
    /// Exit with status 3 if the table misses the reference targets.
    #[arg(long)]
    pub check: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: geoha_core::Error| e.to_string())
}

/// An error paired with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_CONFIG,
            error: error.into(),
        }
    }

    pub fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            error: error.into(),
        }
    }
}

impl From<geoha_core::Error> for Failure {
    fn from(e: geoha_core::Error) -> Self {
        use geoha_core::Error as E;
        match e {
            E::Config(_) | E::Json(_) => Failure::config(e),
            _ => Failure::runtime(e),
        }
    }
}

type CmdResult<T> = Result<T, Failure>;

/// Parse arguments, run the command, and return the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a).map(|s| print!("{}", s.table)),
        Command::Learn(a) => cmd_learn(a).map(|s| print!("{s}")),
        Command::Report(a) => cmd_report(a).map(|r| print!("{}", r.table)),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct EffectiveConfig<'a> {
    command: &'a str,
    scenarios: Vec<(String, u64)>,
    strategies: Vec<Strategy>,
    persona: String,
    baselines: String,
    priors: String,
    cpt_in: Option<&'a Path>,
    cpt_out: Option<&'a Path>,
    out_dir: Option<&'a Path>,
    pipeline: PipelineConfig,
}

fn announce(cfg: &EffectiveConfig<'_>) {
    match serde_json::to_string(cfg) {
        Ok(json) => eprintln!("effective config: {json}"),
        Err(e) => log::warn!("cannot render effective config: {e}"),
    }
}

/// Everything needed to build a fresh persona for each run.
struct Model {
    persona_id: String,
    quota: usize,
    baselines: Baselines,
    baselines_src: String,
    priors: PriorsFile,
    priors_src: String,
    snapshot: Option<PathBuf>,
    cfg: PipelineConfig,
}

impl Model {
    fn load(a: &ModelArgs) -> CmdResult<Self> {
        let thresholds = Thresholds::from_costs(a.c_fp, a.c_fn, a.delta)?;
        let cfg = PipelineConfig {
            thresholds,
            ..PipelineConfig::default()
        };
        let mut persona_id = "default".to_string();
        let mut quota = config::DEFAULT_QUOTA;
        let mut baselines_path = a.baselines.clone();
        let mut priors_path = a.priors.clone();
        let mut snapshot = a.cpt_in.clone();
        if let Some(reg_path) = &a.personas {
            let reg = PersonaRegistry::load(reg_path)?;
            let entry = match &a.persona {
                Some(id) => reg
                    .get(id)
                    .ok_or_else(|| Failure::config(anyhow!("persona `{id}` not in {}", reg_path.display())))?,
                None => reg
                    .personas
                    .first()
                    .ok_or_else(|| Failure::config(anyhow!("{} lists no personas", reg_path.display())))?,
            };
            persona_id = entry.persona_id.clone();
            quota = entry.quota;
            baselines_path.get_or_insert(entry.baselines.clone());
            priors_path.get_or_insert(entry.priors.clone());
            if snapshot.is_none() {
                snapshot = entry.cpt_snapshot.clone();
            }
        }
        let (baselines, baselines_src) = match &baselines_path {
            Some(p) => (config::load_baselines(p)?, p.display().to_string()),
            None => (bundled::baselines()?, "bundled".into()),
        };
        let (priors, priors_src) = match &priors_path {
            Some(p) => (PriorsFile::load(p)?, p.display().to_string()),
            None => (bundled::priors()?, "bundled".into()),
        };
        if let Some(s) = &snapshot {
            if !s.exists() {
                return Err(Failure::config(anyhow!("CPT snapshot {} not found", s.display())));
            }
        }
        Ok(Self {
            persona_id,
            quota,
            baselines,
            baselines_src,
            priors,
            priors_src,
            snapshot,
            cfg,
        })
    }

    fn persona(&self) -> CmdResult<Persona> {
        let mut pipeline = Pipeline::new(self.cfg, self.baselines.clone(), &self.priors)?;
        if let Some(path) = &self.snapshot {
            let (cpts, counts) = config::load_snapshot(path)?;
            pipeline.restore(cpts, counts);
        }
        Ok(Persona::new(self.persona_id.clone(), pipeline, self.quota)?)
    }
}

fn load_scenarios(a: &ModelArgs) -> CmdResult<Vec<Scenario>> {
    let mut out = Vec::with_capacity(a.scenarios.len());
    for (i, arg) in a.scenarios.iter().enumerate() {
        let mut s = match arg.strip_prefix("bundled:") {
            Some(name) => bundled::scenario(name)?,
            None => Scenario::load(Path::new(arg))?,
        };
        if let Some(seed) = a.seed {
            s.seed = seed.wrapping_add(i as u64);
        }
        out.push(s);
    }
    Ok(out)
}

fn effective<'a>(
    command: &'a str,
    model: &'a Model,
    args: &'a ModelArgs,
    scenarios: &[Scenario],
    strategies: Vec<Strategy>,
    out_dir: Option<&'a Path>,
) -> EffectiveConfig<'a> {
    EffectiveConfig {
        command,
        scenarios: scenarios.iter().map(|s| (s.name.clone(), s.seed)).collect(),
        strategies,
        persona: model.persona_id.clone(),
        baselines: model.baselines_src.clone(),
        priors: model.priors_src.clone(),
        cpt_in: model.snapshot.as_deref(),
        cpt_out: args.cpt_out.as_deref(),
        out_dir,
        pipeline: model.cfg,
    }
}

#[derive(Debug, Clone)]
pub struct SimulateSummary {
    pub runs: Vec<ScenarioRun>,
    pub table: String,
}

pub fn cmd_simulate(a: &SimulateArgs) -> CmdResult<SimulateSummary> {
    if a.model.scenarios.is_empty() {
        return Err(Failure::config(anyhow!("at least one --scenario is required")));
    }
    let model = Model::load(&a.model)?;
    let scenarios = load_scenarios(&a.model)?;
    let strategies = if a.all_strategies {
        Strategy::ALL.to_vec()
    } else {
        vec![a.strategy]
    };
    announce(&effective("simulate", &model, &a.model, &scenarios, strategies.clone(), Some(&a.out_dir)));

    // Run everything before touching the output directory.
    let mut per_strategy = Vec::new();
    for &strategy in &strategies {
        let seq: Vec<Scenario> = scenarios.iter().cloned().map(|s| s.with_strategy(strategy)).collect();
        let mut persona = model.persona()?;
        let runs = run_sequence(&seq, &mut persona)?;
        per_strategy.push((strategy, runs, persona));
    }

    fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))
        .map_err(Failure::runtime)?;
    let mut all_runs = Vec::new();
    let mut rows = Vec::new();
    for (strategy, runs, mut persona) in per_strategy {
        let strategy_rows: Vec<MetricsRow> = runs.iter().map(MetricsRow::from_run).collect();
        for run in &runs {
            artifacts::write_run(&a.out_dir, run)?;
        }
        fs::write(
            artifacts::metrics_path(&a.out_dir, strategy),
            artifacts::metrics_csv(&strategy_rows)?,
        )
        .map_err(Failure::runtime)?;
        if strategy.learns() {
            let (cpts, counts) = persona.checkpoint();
            config::save_snapshot(&a.out_dir.join("cpt_adaptive.json"), &cpts, &counts)?;
            if let Some(out) = &a.model.cpt_out {
                config::save_snapshot(out, &cpts, &counts)?;
            }
        }
        rows.extend(strategy_rows);
        all_runs.extend(runs);
    }
    Ok(SimulateSummary {
        runs: all_runs,
        table: render_metrics(&rows),
    })
}

fn cell(v: Option<f64>, signed: bool) -> String {
    match v {
        Some(x) if signed => format!("{x:+.0}"),
        Some(x) => format!("{x:.1}"),
        None => "-".into(),
    }
}

fn render_metrics(rows: &[MetricsRow]) -> String {
    let mut out = format!(
        "{:<12} {:<12} {:>10} {:>10} {:>8} {:>12}\n",
        "strategy", "event", "detect_s", "exec_s", "total_s", "improve_pct"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:<12} {:>10} {:>10} {:>8} {:>12}",
            r.strategy.as_str(),
            r.event,
            cell(r.detection_s, true),
            cell(r.execution_s, false),
            cell(r.total_s, false),
            cell(r.improvement_pct, false),
        );
    }
    out
}

pub fn cmd_learn(a: &LearnArgs) -> CmdResult<String> {
    let out = a
        .model
        .cpt_out
        .clone()
        .ok_or_else(|| Failure::config(anyhow!("learn needs --cpt-out")))?;
    let model = Model::load(&a.model)?;
    let scenarios: Vec<Scenario> = load_scenarios(&a.model)?
        .into_iter()
        .map(|s| s.with_strategy(Strategy::Adaptive))
        .collect();
    announce(&effective("learn", &model, &a.model, &scenarios, vec![Strategy::Adaptive], None));
    let mut persona = model.persona()?;
    run_sequence(&scenarios, &mut persona)?;
    let (cpts, counts) = persona.checkpoint();
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Failure::runtime)?;
    }
    config::save_snapshot(&out, &cpts, &counts)?;

    let mut table = format!("{:<8} {:<8} {:>10} {:>6}\n", "source", "target", "p", "n_obs");
    for (target, source, e) in cpts.iter() {
        let _ = writeln!(table, "{:<8} {:<8} {:>10.4} {:>6}", source, target, e.probability, e.n_obs);
    }
    Ok(table)
}

/// Reference rows: (strategy, detection_s, total_s, improvement_pct).
pub const REFERENCE: [(Strategy, f64, f64, f64); 4] = [
    (Strategy::Reactive15, 15.0, 45.0, 0.0),
    (Strategy::Reactive5, 5.0, 35.0, 22.2),
    (Strategy::Static, -5.0, 25.0, 44.4),
    (Strategy::Adaptive, -20.0, 10.0, 77.8),
];
pub const TIME_TOLERANCE: f64 = 2.0;
pub const IMPROVEMENT_TOLERANCE: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct Report {
    pub rows: BTreeMap<Strategy, MetricsRow>,
    pub missing: Vec<Strategy>,
    pub misses: Vec<String>,
    pub table: String,
}

pub fn cmd_report(a: &ReportArgs) -> CmdResult<Report> {
    eprintln!(
        "effective config: {}",
        serde_json::to_string(a).map_err(Failure::runtime)?
    );
    let mut rows = BTreeMap::new();
    let mut all_rows = Vec::new();
    let mut missing = Vec::new();
    for strategy in Strategy::ALL {
        let path = artifacts::metrics_path(&a.out_dir, strategy);
        let Ok(text) = fs::read_to_string(&path) else {
            missing.push(strategy);
            continue;
        };
        let parsed = artifacts::parse_metrics_csv(&text)?;
        match parsed.iter().find(|r| r.event == a.event) {
            Some(r) => {
                rows.insert(strategy, r.clone());
            }
            None => missing.push(strategy),
        }
        all_rows.extend(parsed);
    }

    let mut table = format!(
        "{:<12} {:>10} {:>8} {:>12}\n",
        "strategy", "detect_s", "total_s", "improve_pct"
    );
    for r in rows.values() {
        let _ = writeln!(
            table,
            "{:<12} {:>10} {:>8} {:>12}",
            r.strategy.as_str(),
            cell(r.detection_s, true),
            cell(r.total_s, false),
            cell(r.improvement_pct, false)
        );
    }

    let report_dir = a.out_dir.join("report");
    if !rows.is_empty() {
        fs::create_dir_all(&report_dir).map_err(Failure::runtime)?;
        let comparison: Vec<MetricsRow> = rows.values().cloned().collect();
        fs::write(report_dir.join("comparison.csv"), artifacts::metrics_csv(&comparison)?)
            .map_err(Failure::runtime)?;
        write_breakdown(&report_dir, &all_rows)?;
        write_posterior_evolution(&a.out_dir, &report_dir, &a.event)?;
        write_timeline(&a.out_dir, &report_dir, &a.event)?;
    }

    let mut misses = Vec::new();
    for (strategy, det, total, imp) in REFERENCE {
        let Some(r) = rows.get(&strategy) else { continue };
        let near = |v: Option<f64>, want: f64, tol: f64| v.is_some_and(|x| (x - want).abs() <= tol);
        if !near(r.detection_s, det, TIME_TOLERANCE) {
            misses.push(format!("{strategy}: detection {:?}, expected {det}", r.detection_s));
        }
        if !near(r.total_s, total, TIME_TOLERANCE) {
            misses.push(format!("{strategy}: total {:?}, expected {total}", r.total_s));
        }
        if strategy != Strategy::Reactive15 && !near(r.improvement_pct, imp, IMPROVEMENT_TOLERANCE) {
            misses.push(format!("{strategy}: improvement {:?}, expected {imp}", r.improvement_pct));
        }
    }

    let report = Report {
        rows,
        missing,
        misses,
        table,
    };
    if !report.missing.is_empty() {
        print!("{}", report.table);
        let names: Vec<&str> = report.missing.iter().map(|s| s.as_str()).collect();
        return Err(Failure::runtime(anyhow!(
            "no `{}` metrics for: {}",
            a.event,
            names.join(", ")
        )));
    }
    if a.check && !report.misses.is_empty() {
        print!("{}", report.table);
        return Err(Failure {
            code: EXIT_THRESHOLD,
            error: anyhow!("reference check failed:\n  {}", report.misses.join("\n  ")),
        });
    }
    Ok(report)
}

/// Detection versus execution per strategy and event.
fn write_breakdown(dir: &Path, rows: &[MetricsRow]) -> CmdResult<()> {
    let mut out = String::from("strategy,event,detection_s,execution_s\n");
    for r in rows {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", r.strategy, r.event, f(r.detection_s), f(r.execution_s));
    }
    fs::write(dir.join("breakdown.csv"), out).map_err(Failure::runtime)
}

/// Switchover posterior over time for the Bayesian strategies.
fn write_posterior_evolution(out_dir: &Path, dir: &Path, event: &str) -> CmdResult<()> {
    let mut out = String::from("strategy,t,target,p_eff,posterior,contributors\n");
    for strategy in [Strategy::Static, Strategy::Adaptive] {
        let path = artifacts::RunFiles::new(out_dir, event, strategy).posterior;
        let Ok(text) = fs::read_to_string(&path) else { continue };
        for line in text.lines().skip(1) {
            let _ = writeln!(out, "{strategy},{line}");
        }
    }
    fs::write(dir.join("posterior_evolution.csv"), out).map_err(Failure::runtime)
}

/// Flattened event timelines for all strategies.
fn write_timeline(out_dir: &Path, dir: &Path, event: &str) -> CmdResult<()> {
    let mut out = String::from("strategy,t,kind,detail\n");
    for strategy in Strategy::ALL {
        let path = artifacts::RunFiles::new(out_dir, event, strategy).timeline;
        let Ok(text) = fs::read_to_string(&path) else { continue };
        for line in text.lines() {
            let entry: geoha_core::simulator::TimelineEntry = serde_json::from_str(line).map_err(Failure::runtime)?;
            let (kind, detail) = describe(&entry.event);
            let _ = writeln!(out, "{strategy},{},{kind},{detail}", entry.t);
        }
    }
    fs::write(dir.join("timeline.csv"), out).map_err(Failure::runtime)
}

fn describe(e: &TimelineEvent) -> (&'static str, String) {
    match e {
        TimelineEvent::Injection { injection, service_id } => {
            let name = serde_json::to_value(injection)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default();
            ("injection", format!("{name} {service_id}"))
        }
        TimelineEvent::Cascade { source, target, delay } => ("cascade", format!("{source}->{target} {delay}s")),
        TimelineEvent::PosteriorCrossing {
            target,
            posterior,
            direction,
            ..
        } => ("crossing", format!("{target} {direction:?} {posterior:.4}")),
        TimelineEvent::Decision { decision, posterior } => ("decision", format!("{decision} {posterior:.4}")),
        TimelineEvent::Detection { source } => ("detection", format!("{source:?}")),
        TimelineEvent::SwitchoverStart => ("switchover_start", String::new()),
        TimelineEvent::SwitchoverComplete => ("switchover_complete", String::new()),
    }
}

/// Logging is configured from `GEOHA_LOG_LEVEL` (default `warn`).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("GEOHA_LOG_LEVEL", "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}
