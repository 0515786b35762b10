//! Command-line harness: reads a JSON config, runs one pipeline and writes
//! its outputs plus a `manifest.json` into a single output directory.
//!
//! Everything is computed in memory before the output directory is touched,
//! so a failed run leaves nothing behind.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use littlemix::diagnostics::{
    burn_in, dependency_matrix_finite, dependency_opnorm, mu_min, truncated_noise_diag, BurnInParams,
    DEFAULT_DEPENDENCY_CAP,
};
use littlemix::estimators::{excess_risk_exact, excess_risk_mc, fit, empirical_risk, OptimizerOpts};
use littlemix::experiments::{
    bound_vs_actual, burn_in_detect, mixing_sweep, parameter_recovery_curve, risk_curve, ExperimentResult,
    SeedLedger, SweepConfig,
};
use littlemix::hypotheses::HypothesisSpec;
use littlemix::processes::{average_gramian, default_trunc_radius, ProcessSpec, DEFAULT_TRUNC_BETA};
use littlemix::seeds::{derive_seed, stream, DERIVATION_RULE};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Fit,
    Diagnose,
    Experiment,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    /// Overrides `master_seed` in the config file. When neither is given a
    /// seed is drawn from OS entropy and recorded in the manifest.
    pub master_seed: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<littlemix::Error> for CliError {
    fn from(e: littlemix::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

#[derive(Parser)]
#[command(name = "littlemix", version, about = "Least-squares learning on dependent data")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Sample trajectories from a process.
    Simulate(Flags),
    /// Simulate one trajectory, fit the estimator and score it.
    Fit(Flags),
    /// Dependency matrix or Gramian, burn-in and noise diagnostics.
    Diagnose(Flags),
    /// Replicate sweep over a T grid (and optionally a process parameter).
    Experiment(Flags),
}

#[derive(Args)]
struct Flags {
    /// JSON config for the command.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

/// Parses `args` (program name first) and runs; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let (command, flags) = match cli.command {
        Sub::Simulate(f) => (Command::Simulate, f),
        Sub::Fit(f) => (Command::Fit, f),
        Sub::Diagnose(f) => (Command::Diagnose, f),
        Sub::Experiment(f) => (Command::Experiment, f),
    };
    run(&RunConfig {
        command,
        config_path: flags.config,
        out_dir: flags.out,
        threads: flags.threads,
        master_seed: flags.seed,
    })
}

pub fn run(cfg: &RunConfig) -> i32 {
    match execute(cfg) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Command,
    /// The config as run, with the master seed filled in.
    pub config: Value,
    pub seeds: Value,
    pub threads: usize,
    pub outputs: Vec<String>,
}

/// Files produced by a command, as (name inside out_dir, contents).
type Outputs = Vec<(String, Vec<u8>)>;

/// Runs the command and writes its outputs; returns the manifest written.
pub fn execute(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let text = fs::read_to_string(&cfg.config_path)
        .map_err(|e| invalid(format!("cannot read config {}: {e}", cfg.config_path.display())))?;
    let mut config: Value = serde_json::from_str(&text).map_err(|e| invalid(format!("config is not valid JSON: {e}")))?;
    let obj = config.as_object_mut().ok_or_else(|| invalid("config must be a JSON object"))?;
    let master_seed = match (cfg.master_seed, obj.get("master_seed")) {
        (Some(s), _) => s,
        (None, Some(v)) => v.as_u64().ok_or_else(|| invalid("master_seed must be a nonnegative integer"))?,
        (None, None) => rand::random(),
    };
    obj.insert("master_seed".into(), json!(master_seed));

    let threads = match cfg.threads {
        Some(0) => return Err(invalid("--threads must be at least 1")),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    check_out_dir(&cfg.out_dir)?;
    let job = Job::parse(cfg.command, &config)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid(format!("cannot build thread pool: {e}")))?;
    let (outputs, seed_paths) = pool.install(|| job.run(master_seed))?;

    let manifest = Manifest {
        tool: "littlemix",
        version: env!("CARGO_PKG_VERSION"),
        command: cfg.command,
        config,
        seeds: json!({
            "master_seed": master_seed,
            "derivation_rule": DERIVATION_RULE,
            "paths": seed_paths,
        }),
        threads,
        outputs: outputs.iter().map(|(n, _)| n.clone()).collect(),
    };
    fs::create_dir_all(&cfg.out_dir).map_err(|e| invalid(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    let manifest_bytes = to_json(&manifest)?;
    for (name, bytes) in outputs.iter().chain(std::iter::once(&(MANIFEST.to_string(), manifest_bytes))) {
        let path = cfg.out_dir.join(name);
        fs::write(&path, bytes).map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(manifest)
}

fn check_out_dir(dir: &Path) -> Result<(), CliError> {
    if dir.exists() && !dir.is_dir() {
        return Err(invalid(format!("{} exists and is not a directory", dir.display())));
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_vec_pretty(v).map_err(|e| CliError::Numeric(e.to_string()))?;
    s.push(b'\n');
    Ok(s)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> littlemix::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn one() -> usize {
    1
}

fn default_n_eval() -> usize {
    200
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    process: ProcessSpec,
    #[serde(rename = "T")]
    t_len: usize,
    #[serde(default = "one")]
    n_traj: usize,
    #[allow(dead_code)]
    master_seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FitConfig {
    process: ProcessSpec,
    family: HypothesisSpec,
    #[serde(rename = "T")]
    t_len: usize,
    #[serde(default)]
    optimizer: OptimizerOpts,
    #[serde(default = "default_n_eval")]
    n_eval: usize,
    #[allow(dead_code)]
    master_seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseProbe {
    d: usize,
    /// Defaults to the β = 4 radius for the config's T.
    radius: Option<f64>,
    n_mc: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagnoseConfig {
    process: ProcessSpec,
    #[serde(rename = "T")]
    t_len: usize,
    #[serde(default)]
    burn_in: Vec<BurnInParams>,
    truncated_noise: Option<NoiseProbe>,
    #[allow(dead_code)]
    master_seed: u64,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
enum Analysis {
    #[default]
    RiskCurve,
    ParameterRecovery,
    MixingSweep,
    BoundVsActual,
}

fn default_slope_tol() -> f64 {
    0.3
}

/// Experiment configs are a sweep config with two extra keys.
#[derive(Deserialize)]
struct ExperimentExtras {
    #[serde(default)]
    analysis: Analysis,
    #[serde(default = "default_slope_tol")]
    slope_tol: f64,
}

enum Job {
    Simulate(SimulateConfig),
    Fit(FitConfig),
    Diagnose(DiagnoseConfig),
    Experiment(Box<SweepConfig>, ExperimentExtras),
}

fn parse<T: for<'de> Deserialize<'de>>(v: &Value) -> Result<T, CliError> {
    T::deserialize(v).map_err(|e| invalid(format!("config does not match the schema: {e}")))
}

impl Job {
    fn parse(command: Command, config: &Value) -> Result<Job, CliError> {
        let job = match command {
            Command::Simulate => {
                let c: SimulateConfig = parse(config)?;
                if c.t_len == 0 || c.n_traj == 0 {
                    return Err(invalid("T and n_traj must be at least 1"));
                }
                Job::Simulate(c)
            }
            Command::Fit => {
                let c: FitConfig = parse(config)?;
                if c.t_len == 0 || c.n_eval == 0 {
                    return Err(invalid("T and n_eval must be at least 1"));
                }
                c.family.truth(&c.process)?;
                Job::Fit(c)
            }
            Command::Diagnose => {
                let c: DiagnoseConfig = parse(config)?;
                if c.t_len == 0 {
                    return Err(invalid("T must be at least 1"));
                }
                if matches!(c.process, ProcessSpec::FiniteChain(_)) && c.t_len > DEFAULT_DEPENDENCY_CAP {
                    return Err(invalid(format!("T above {DEFAULT_DEPENDENCY_CAP} is too large for a dense dependency matrix")));
                }
                Job::Diagnose(c)
            }
            Command::Experiment => {
                let mut sweep = config.clone();
                let map = sweep.as_object_mut().expect("checked to be an object");
                let extras = json!({
                    "analysis": map.remove("analysis").unwrap_or(json!("risk_curve")),
                    "slope_tol": map.remove("slope_tol").unwrap_or(json!(default_slope_tol())),
                });
                let extras: ExperimentExtras = parse(&extras)?;
                let sweep: SweepConfig = parse(&sweep)?;
                if sweep.outputs.is_some() {
                    return Err(invalid("`outputs` cannot be set here; files go to --out"));
                }
                sweep.validate()?;
                if !(extras.slope_tol > 0.0) {
                    return Err(invalid("slope_tol must be positive"));
                }
                Job::Experiment(Box::new(sweep), extras)
            }
        };
        Ok(job)
    }

    fn run(&self, master: u64) -> Result<(Outputs, Vec<String>), CliError> {
        match self {
            Job::Simulate(c) => simulate(c, master),
            Job::Fit(c) => fit_one(c, master),
            Job::Diagnose(c) => diagnose(c, master),
            Job::Experiment(sweep, extras) => experiment(sweep, extras),
        }
    }
}

fn simulate(c: &SimulateConfig, master: u64) -> Result<(Outputs, Vec<String>), CliError> {
    let mut out = Vec::new();
    let mut summary = Vec::new();
    for k in 0..c.n_traj {
        let seed = derive_seed(master, &[stream::TRAIN, k as u64]);
        let batch = c.process.simulate(c.t_len, seed)?;
        out.push((format!("trajectory_{k:03}.csv"), csv_bytes(|w| batch.write_csv(w))?));
        summary.push(json!({ "trajectory": k, "seed": seed, "truncated": batch.truncated_flag }));
    }
    out.push(("simulate.json".into(), to_json(&summary)?));
    Ok((out, vec![format!("trajectory k = derive(master, [{}, k])", stream::TRAIN)]))
}

fn fit_one(c: &FitConfig, master: u64) -> Result<(Outputs, Vec<String>), CliError> {
    let batch = c.process.simulate(c.t_len, derive_seed(master, &[stream::TRAIN, 0]))?;
    let mut opts = c.optimizer.clone();
    opts.seed = derive_seed(master, &[stream::RESTART, 0]);
    let fitted = fit(&batch, &c.family, &c.process, &opts)?;
    let truth = c.family.truth(&c.process)?;
    let risk = match excess_risk_exact(&fitted.parameter, &truth, &c.process, c.t_len) {
        Err(littlemix::Error::Unsupported(_)) => excess_risk_mc(
            &fitted.parameter,
            &truth,
            &c.process,
            c.t_len,
            c.n_eval,
            derive_seed(master, &[stream::EVAL, 0]),
        )?,
        other => other?,
    };
    let report = json!({
        "parameter": fitted.parameter,
        "parameter_matrix": fitted.parameter.matrix().map(rows),
        "empirical_risk": fitted.empirical_risk,
        "truth_empirical_risk": empirical_risk(&batch, &truth)?,
        "optimizer_trace": fitted.optimizer_trace,
        "excess_risk": risk,
        "truncated": batch.truncated_flag,
    });
    let out = vec![
        ("trajectory.csv".to_string(), csv_bytes(|w| batch.write_csv(w))?),
        ("fit.json".to_string(), to_json(&report)?),
    ];
    let paths = vec![
        format!("trajectory = derive(master, [{}, 0])", stream::TRAIN),
        format!("eval = derive(master, [{}, 0])", stream::EVAL),
        format!("optimizer = derive(master, [{}, 0])", stream::RESTART),
    ];
    Ok((out, paths))
}

/// Row-major nested lists.
fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_csv(m: &nalgebra::DMatrix<f64>) -> Vec<u8> {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s.into_bytes()
}

fn diagnose(c: &DiagnoseConfig, master: u64) -> Result<(Outputs, Vec<String>), CliError> {
    let mut out = Vec::new();
    let mut report = serde_json::Map::new();
    report.insert("T".into(), json!(c.t_len));
    match &c.process {
        ProcessSpec::FiniteChain(spec) => {
            let g = dependency_matrix_finite(spec, c.t_len, DEFAULT_DEPENDENCY_CAP)?;
            report.insert("gamma_opnorm".into(), json!(dependency_opnorm(&g)));
            report.insert("mu_min".into(), json!(mu_min(spec, c.t_len)));
            out.push(("gamma.csv".into(), csv_bytes(|w| g.write_csv(w))?));
        }
        ProcessSpec::Lds(_) | ProcessSpec::Glm(_) => {
            let (a, h) = match &c.process {
                ProcessSpec::Lds(s) => (s.a_star(), s.h()),
                ProcessSpec::Glm(s) => (s.a_star(), s.h()),
                ProcessSpec::FiniteChain(_) => unreachable!(),
            };
            // For GLM dynamics this is the Gramian of the linearized system.
            let gbar = average_gramian(a, h, c.t_len);
            let eig = gbar.clone().symmetric_eigenvalues();
            report.insert("gramian_eig_min".into(), json!(eig.min()));
            report.insert("gramian_eig_max".into(), json!(eig.max()));
            out.push(("gramian.csv".into(), matrix_csv(&gbar)));
        }
    }
    if !c.burn_in.is_empty() {
        let reports = c.burn_in.iter().map(burn_in).collect::<littlemix::Result<Vec<_>>>()?;
        report.insert("burn_in".into(), json!(reports));
    }
    let mut paths = Vec::new();
    if let Some(p) = &c.truncated_noise {
        let radius = p.radius.unwrap_or_else(|| default_trunc_radius(p.d, c.t_len, DEFAULT_TRUNC_BETA));
        let seed = derive_seed(master, &[stream::PROBE, 0]);
        report.insert("truncated_noise".into(), json!(truncated_noise_diag(p.d, radius, p.n_mc, seed)?));
        paths.push(format!("truncated noise = derive(master, [{}, 0])", stream::PROBE));
    }
    out.push(("diagnose.json".into(), to_json(&report)?));
    Ok((out, paths))
}

fn experiment_files(res: &ExperimentResult) -> Result<Outputs, CliError> {
    let mut out = vec![
        ("experiment.csv".to_string(), csv_bytes(|w| res.write_rows(w))?),
        ("experiment.agg.csv".to_string(), csv_bytes(|w| res.write_aggregates(w))?),
    ];
    if res.rows.iter().any(|r| r.recovery.is_some()) {
        out.push(("experiment.recovery.csv".into(), csv_bytes(|w| res.write_recovery(w))?));
    }
    Ok(out)
}

fn experiment(sweep: &SweepConfig, extras: &ExperimentExtras) -> Result<(Outputs, Vec<String>), CliError> {
    let (mut out, ledger) = match extras.analysis {
        Analysis::RiskCurve => {
            let res = risk_curve(sweep)?;
            (experiment_files(&res)?, res.seeds)
        }
        Analysis::ParameterRecovery => {
            let res = parameter_recovery_curve(sweep)?;
            (experiment_files(&res)?, res.seeds)
        }
        Analysis::MixingSweep => {
            let rep = mixing_sweep(sweep)?;
            let mut out = experiment_files(&rep.result)?;
            let detected: Vec<Value> = burn_in_detect(&rep.result, extras.slope_tol)
                .into_iter()
                .map(|(param, d)| json!({ "param": param, "burn_in": format!("{d:?}"), "horizon": d.as_horizon() }))
                .collect();
            let summary = json!({ "mixing": rep, "slope_tol": extras.slope_tol, "burn_in": detected });
            out.push(("mixing.json".into(), to_json(&summary)?));
            (out, rep.result.seeds)
        }
        Analysis::BoundVsActual => {
            let table = bound_vs_actual(sweep)?;
            let mut out = experiment_files(&table.experiment)?;
            out.push(("bound.json".into(), to_json(&table)?));
            (out, table.experiment.seeds)
        }
    };
    let SeedLedger { paths, .. } = ledger;
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok((out, paths))
}
