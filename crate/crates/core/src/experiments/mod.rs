//! Seeded replicate sweeps over horizons and process parameters.
//!
//! Every (cell, replicate) pair derives its own training, evaluation and
//! restart seeds from the master seed, so the output is byte-identical for
//! any thread count.

mod bound;
mod mixing;

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{martingale_complexity_general, martingale_complexity_linear};
use crate::error::{Error, Result};
use crate::estimators::{
    empirical_risk, excess_risk_exact, excess_risk_mc_with_covariance, fit, OptimizerOpts, RiskEstimate,
};
use crate::hypotheses::{HypothesisSpec, Member};
use crate::linalg::{lambda_min, opnorm, spectral_radius};
use crate::processes::{average_gramian, GlmSpec, LdsSpec, ProcessSpec, TrajectoryBatch};
use crate::seeds::{derive_seed, stream, DERIVATION_RULE};

pub use bound::{bound_vs_actual, BoundRow};
pub use mixing::{burn_in_detect, mixing_sweep, BurnInDetection, MixingReport};

/// Exact column order of the per-replicate CSV.
pub const CSV_HEADER: [&str; 10] = [
    "cell_id",
    "T",
    "param",
    "replicate",
    "excess_risk",
    "risk_se",
    "m_t",
    "fit_iters",
    "projection_active",
    "notes",
];

/// Note written when the fit's empirical risk exceeds the truth's.
pub const ERM_FLAG: &str = "erm_dominance_failed";

/// How a value from `param_grid` modifies the process template.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    /// The parameter is only a label.
    #[default]
    None,
    /// Rescales A⋆ to the given spectral radius.
    SpectralRadius,
    /// Scales H for dynamics, or sets the observation noise std for chains.
    NoiseScale,
}

fn default_n_eval() -> usize {
    200
}

fn default_param_grid() -> Vec<f64> {
    vec![0.0]
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub process_template: ProcessSpec,
    #[serde(default)]
    pub param_role: ParamRole,
    pub family: HypothesisSpec,
    #[serde(rename = "T_grid")]
    pub t_grid: Vec<usize>,
    #[serde(default = "default_param_grid")]
    pub param_grid: Vec<f64>,
    pub n_rep: usize,
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerOpts,
    /// Record the per-replicate offset complexity M_T.
    #[serde(default = "default_true")]
    pub compute_m_t: bool,
    /// Per-replicate CSV path; aggregates and seeds go next to it.
    #[serde(default)]
    pub outputs: Option<PathBuf>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_grid.is_empty() || self.param_grid.is_empty() {
            return Err(Error::invalid("T_grid and param_grid must be nonempty"));
        }
        if self.t_grid.contains(&0) {
            return Err(Error::invalid("T_grid entries must be positive"));
        }
        if self.n_rep < 2 {
            return Err(Error::invalid("n_rep must be at least 2"));
        }
        if self.n_eval < 2 {
            return Err(Error::invalid("n_eval must be at least 2"));
        }
        self.family.validate()?;
        for &p in &self.param_grid {
            let process = self.instantiate(p)?;
            self.family.truth(&process).map_err(|e| e.context(&format!("param {p}")))?;
        }
        Ok(())
    }

    /// The process for one parameter value.
    pub fn instantiate(&self, param: f64) -> Result<ProcessSpec> {
        let t = &self.process_template;
        match (self.param_role, t) {
            (ParamRole::None, _) => Ok(t.clone()),
            (ParamRole::SpectralRadius, ProcessSpec::Lds(s)) => {
                let a = rescale_radius(s.a_star(), param)?;
                Ok(ProcessSpec::Lds(LdsSpec::new(a, s.h().clone(), s.trunc_radius())?))
            }
            (ParamRole::SpectralRadius, ProcessSpec::Glm(s)) => {
                let a = rescale_radius(s.a_star(), param)?;
                let ratio = (opnorm(&a) / opnorm(s.a_star()).max(f64::MIN_POSITIVE)).powi(2);
                let rho = (s.rho() * ratio).clamp(1e-12, 1.0 - 1e-12);
                Ok(ProcessSpec::Glm(GlmSpec::new(a, s.h().clone(), s.link(), s.p_star().clone(), rho, s.trunc_radius())?))
            }
            (ParamRole::NoiseScale, ProcessSpec::Lds(s)) => {
                Ok(ProcessSpec::Lds(LdsSpec::new(s.a_star().clone(), s.h() * param, s.trunc_radius())?))
            }
            (ParamRole::NoiseScale, ProcessSpec::Glm(s)) => Ok(ProcessSpec::Glm(GlmSpec::new(
                s.a_star().clone(),
                s.h() * param,
                s.link(),
                s.p_star().clone(),
                s.rho(),
                s.trunc_radius(),
            )?)),
            (ParamRole::NoiseScale, ProcessSpec::FiniteChain(c)) => {
                Ok(ProcessSpec::FiniteChain(c.with_noise_std(param)?))
            }
            (ParamRole::SpectralRadius, ProcessSpec::FiniteChain(_)) => {
                Err(Error::invalid("param_role spectral_radius needs a dynamics process"))
            }
        }
    }

    pub fn n_cells(&self) -> usize {
        self.t_grid.len() * self.param_grid.len()
    }

    /// Cells are numbered parameter-major: cell = param_index·|T_grid| + T_index.
    pub fn cell(&self, cell_id: usize) -> (usize, f64) {
        let n_t = self.t_grid.len();
        (self.t_grid[cell_id % n_t], self.param_grid[cell_id / n_t])
    }
}

fn rescale_radius(a: &DMatrix<f64>, target: f64) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&target) {
        return Err(Error::invalid(format!("spectral radius {target} must lie in [0, 1)")));
    }
    let rad = spectral_radius(a);
    if rad > 0.0 {
        Ok(a * (target / rad))
    } else if target == 0.0 {
        Ok(a.clone())
    } else {
        Err(Error::invalid("cannot rescale a nilpotent A_star to a positive spectral radius"))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentRow {
    pub cell_id: usize,
    #[serde(rename = "T")]
    pub t_len: usize,
    pub param: f64,
    pub replicate: usize,
    pub excess_risk: f64,
    pub risk_se: f64,
    pub m_t: f64,
    pub fit_iters: usize,
    pub projection_active: bool,
    pub notes: String,
    #[serde(skip)]
    pub recovery: Option<RecoveryInfo>,
}

/// Parameter-recovery quantities for matrix families.
#[derive(Clone, Debug, Serialize)]
pub struct RecoveryInfo {
    /// ‖Â − A⋆‖_F².
    pub param_error_sq: f64,
    /// λ_min of the average covariance, exact for LDS, empirical on the risk
    /// trajectories otherwise.
    pub lambda_min_gbar: f64,
    pub zeta: f64,
    /// ‖H‖²d_x²/(T λ_min ζ²).
    pub bound_side: f64,
    /// excess risk ≥ ζ² λ_min ‖Â − A⋆‖_F².
    pub conversion_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CellAggregate {
    pub cell_id: usize,
    #[serde(rename = "T")]
    pub t_len: usize,
    pub param: f64,
    pub n_rep: usize,
    pub mean_risk: f64,
    pub risk_sd: f64,
    pub risk_se: f64,
    pub mean_m_t: f64,
    pub m_t_se: f64,
    pub n_flagged: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedLedger {
    pub master_seed: u64,
    pub derivation_rule: String,
    /// How each replicate's seeds are derived from the master seed.
    pub paths: Vec<String>,
}

impl SeedLedger {
    pub fn new(master_seed: u64) -> Self {
        SeedLedger {
            master_seed,
            derivation_rule: DERIVATION_RULE.to_string(),
            paths: vec![
                format!("train = derive(master, [{}, cell_id, replicate])", stream::TRAIN),
                format!("eval = derive(master, [{}, cell_id, replicate])", stream::EVAL),
                format!("optimizer = derive(master, [{}, cell_id, replicate])", stream::RESTART),
            ],
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    pub aggregates: Vec<CellAggregate>,
    pub seeds: SeedLedger,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

pub fn aggregate(rows: &[ExperimentRow]) -> Vec<CellAggregate> {
    let mut out: Vec<CellAggregate> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let id = rows[start].cell_id;
        let end = start + rows[start..].iter().take_while(|r| r.cell_id == id).count();
        let cell = &rows[start..end];
        let risks: Vec<f64> = cell.iter().map(|r| r.excess_risk).collect();
        let mts: Vec<f64> = cell.iter().map(|r| r.m_t).collect();
        let (mean_risk, risk_sd) = mean_sd(&risks);
        let (mean_m_t, m_t_sd) = mean_sd(&mts);
        let n = cell.len();
        out.push(CellAggregate {
            cell_id: id,
            t_len: cell[0].t_len,
            param: cell[0].param,
            n_rep: n,
            mean_risk,
            risk_sd,
            risk_se: risk_sd / (n as f64).sqrt(),
            mean_m_t,
            m_t_se: m_t_sd / (n as f64).sqrt(),
            n_flagged: cell.iter().filter(|r| !r.notes.is_empty()).count(),
        });
        start = end;
    }
    out
}

fn zeta_of(f: &Member) -> f64 {
    match f {
        Member::Glm { link, .. } => link.zeta,
        _ => 1.0,
    }
}

fn noise_opnorm(process: &ProcessSpec) -> f64 {
    match process {
        ProcessSpec::Lds(s) => opnorm(s.h()),
        ProcessSpec::Glm(s) => opnorm(s.h()),
        ProcessSpec::FiniteChain(c) => c.noise_std(),
    }
}

fn replicate_offset_complexity(
    cfg: &SweepConfig,
    batch: &TrajectoryBatch,
    f_star: &Member,
    opts: &OptimizerOpts,
) -> Result<f64> {
    if !cfg.compute_m_t {
        return Ok(f64::NAN);
    }
    match &cfg.family {
        // Closed form of the unconstrained supremum; dominates the ball value.
        HypothesisSpec::LinearBall { .. } => martingale_complexity_linear(batch),
        HypothesisSpec::GlmBall { .. } => {
            let single = OptimizerOpts { restarts: 1, ..opts.clone() };
            martingale_complexity_general(batch, &cfg.family, f_star, &single)
        }
        _ => martingale_complexity_general(batch, &cfg.family, f_star, opts),
    }
}

fn run_replicate(
    cfg: &SweepConfig,
    process: &ProcessSpec,
    f_star: &Member,
    cell_id: usize,
    replicate: usize,
) -> Result<ExperimentRow> {
    let (t_len, param) = cfg.cell(cell_id);
    let path = [cell_id as u64, replicate as u64];
    let batch = process.simulate(t_len, derive_seed(cfg.master_seed, &[stream::TRAIN, path[0], path[1]]))?;
    let opts = OptimizerOpts {
        seed: derive_seed(cfg.master_seed, &[stream::RESTART, path[0], path[1]]),
        ..cfg.optimizer.clone()
    };
    let fitted = fit(&batch, &cfg.family, process, &opts)?;
    let eval_seed = derive_seed(cfg.master_seed, &[stream::EVAL, path[0], path[1]]);
    let (risk, mc_cov): (RiskEstimate, Option<DMatrix<f64>>) =
        match excess_risk_exact(&fitted.parameter, f_star, process, t_len) {
            Ok(r) => (r, None),
            Err(Error::Unsupported(_)) => {
                let (r, c) = excess_risk_mc_with_covariance(&fitted.parameter, f_star, process, t_len, cfg.n_eval, eval_seed)?;
                (r, Some(c))
            }
            Err(e) => return Err(e),
        };
    let m_t = replicate_offset_complexity(cfg, &batch, f_star, &opts)?;

    let star_risk = empirical_risk(&batch, f_star)?;
    let tol = 1e-9 * star_risk.max(1.0);
    let notes = if fitted.empirical_risk > star_risk + tol { ERM_FLAG.to_string() } else { String::new() };

    let recovery = match (fitted.parameter.matrix(), f_star.matrix()) {
        (Some(a_hat), Some(a_star)) => {
            let delta = a_hat - a_star;
            let lam = match (&mc_cov, process) {
                (Some(c), _) => lambda_min(c),
                (None, ProcessSpec::Lds(s)) => lambda_min(&average_gramian(s.a_star(), s.h(), t_len)),
                _ => f64::NAN,
            };
            let zeta = zeta_of(f_star);
            let e2 = delta.norm_squared();
            let h = noise_opnorm(process);
            let d = process.d_x() as f64;
            let lower = zeta * zeta * lam * e2;
            Some(RecoveryInfo {
                param_error_sq: e2,
                lambda_min_gbar: lam,
                zeta,
                bound_side: h * h * d * d / (t_len as f64 * lam * zeta * zeta),
                conversion_ok: risk.value >= lower * (1.0 - 1e-9) - 1e-15,
            })
        }
        _ => None,
    };

    Ok(ExperimentRow {
        cell_id,
        t_len,
        param,
        replicate,
        excess_risk: risk.value,
        risk_se: risk.std_error,
        m_t,
        fit_iters: fitted.optimizer_trace.iterations,
        projection_active: fitted.optimizer_trace.projection_active,
        notes,
        recovery,
    })
}

/// Simulates, fits and evaluates every (T, param, replicate) cell.
pub fn risk_curve(cfg: &SweepConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let processes: Vec<(ProcessSpec, Member)> = cfg
        .param_grid
        .iter()
        .map(|&p| {
            let proc_ = cfg.instantiate(p)?;
            let truth = cfg.family.truth(&proc_)?;
            Ok((proc_, truth))
        })
        .collect::<Result<_>>()?;
    let n_t = cfg.t_grid.len();
    let jobs: Vec<(usize, usize)> =
        (0..cfg.n_cells()).flat_map(|c| (0..cfg.n_rep).map(move |r| (c, r))).collect();
    let rows: Vec<ExperimentRow> = jobs
        .par_iter()
        .map(|&(cell, rep)| {
            let (process, truth) = &processes[cell / n_t];
            run_replicate(cfg, process, truth, cell, rep).map_err(|e| {
                let (t, p) = cfg.cell(cell);
                e.context(&format!("cell {cell} (T={t}, param={p}) replicate {rep}"))
            })
        })
        .collect::<Result<_>>()?;
    let aggregates = aggregate(&rows);
    Ok(ExperimentResult { rows, aggregates, seeds: SeedLedger::new(cfg.master_seed) })
}

/// Same sweep, with the recovery columns checked on every replicate.
pub fn parameter_recovery_curve(cfg: &SweepConfig) -> Result<ExperimentResult> {
    if !matches!(cfg.family, HypothesisSpec::LinearBall { .. } | HypothesisSpec::GlmBall { .. }) {
        return Err(Error::invalid("parameter recovery needs a linear or GLM family"));
    }
    let res = risk_curve(cfg)?;
    for r in &res.rows {
        let info = r.recovery.as_ref().expect("matrix families carry recovery info");
        if !(info.lambda_min_gbar > 0.0) {
            return Err(Error::numeric(format!(
                "cell {} replicate {}: average covariance is singular",
                r.cell_id, r.replicate
            )));
        }
    }
    Ok(res)
}

/// `out.csv` → `out.<suffix>`.
pub fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

impl ExperimentResult {
    pub fn write_rows<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(CSV_HEADER)?;
        for r in &self.rows {
            wr.write_record([
                r.cell_id.to_string(),
                r.t_len.to_string(),
                r.param.to_string(),
                r.replicate.to_string(),
                r.excess_risk.to_string(),
                r.risk_se.to_string(),
                r.m_t.to_string(),
                r.fit_iters.to_string(),
                r.projection_active.to_string(),
                r.notes.clone(),
            ])?;
        }
        wr.flush().map_err(Error::from)
    }

    pub fn write_aggregates<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for a in &self.aggregates {
            wr.serialize(a)?;
        }
        wr.flush().map_err(Error::from)
    }

    pub fn write_recovery<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "cell_id",
            "T",
            "param",
            "replicate",
            "param_error_sq",
            "lambda_min_gbar",
            "zeta",
            "bound_side",
            "excess_risk",
            "conversion_ok",
        ])?;
        for r in &self.rows {
            if let Some(i) = &r.recovery {
                wr.write_record([
                    r.cell_id.to_string(),
                    r.t_len.to_string(),
                    r.param.to_string(),
                    r.replicate.to_string(),
                    i.param_error_sq.to_string(),
                    i.lambda_min_gbar.to_string(),
                    i.zeta.to_string(),
                    i.bound_side.to_string(),
                    r.excess_risk.to_string(),
                    i.conversion_ok.to_string(),
                ])?;
            }
        }
        wr.flush().map_err(Error::from)
    }

    /// Writes `path`, `<stem>.agg.csv` and `<stem>.seeds.json`, plus
    /// `<stem>.recovery.csv` when the family has matrix parameters.
    pub fn write_outputs(&self, path: &Path) -> Result<Vec<PathBuf>> {
        let mut written = vec![path.to_path_buf()];
        self.write_rows(fs::File::create(path)?)?;
        let agg = sibling_path(path, "agg.csv");
        self.write_aggregates(fs::File::create(&agg)?)?;
        written.push(agg);
        let seeds = sibling_path(path, "seeds.json");
        fs::write(&seeds, serde_json::to_string_pretty(&self.seeds)?)?;
        written.push(seeds);
        if self.rows.iter().any(|r| r.recovery.is_some()) {
            let rec = sibling_path(path, "recovery.csv");
            self.write_recovery(fs::File::create(&rec)?)?;
            written.push(rec);
        }
        Ok(written)
    }
}

/// Least-squares slope of log(mean risk) on log T.
pub fn loglog_slope(points: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.1 > 0.0)
        .map(|&(t, r)| ((t as f64).ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// (T, mean risk) pairs of one parameter value, in grid order.
pub fn curve(aggs: &[CellAggregate], param: f64) -> Vec<(usize, f64)> {
    aggs.iter().filter(|a| a.param == param).map(|a| (a.t_len, a.mean_risk)).collect()
}
