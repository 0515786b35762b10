//! Least-squares estimators and excess-risk evaluation.

pub(crate) mod glm;
mod risk;

pub use glm::{erm_glm, OptimizerOpts};
pub use risk::{excess_risk_exact, excess_risk_mc, excess_risk_mc_with_covariance, RiskEstimate, RiskMethod, gramian_risk};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hypotheses::{HypothesisSpec, Member};
use crate::linalg::{pinv, project_frobenius};
use crate::processes::{ProcessSpec, TrajectoryBatch};

/// Singular values below this fraction of the largest are treated as zero.
pub const PINV_REL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Default, Serialize)]
pub struct OptimizerTrace {
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub restarts_used: usize,
    pub projection_active: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub parameter: Member,
    pub empirical_risk: f64,
    pub optimizer_trace: OptimizerTrace,
}

/// (1/T) Σ ‖Y_t − f(X_t)‖².
pub fn empirical_risk(batch: &TrajectoryBatch, f: &Member) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut s = 0.0;
    for t in 0..batch.len() {
        let pred = match (&batch.states, f) {
            (Some(st), Member::Table { values, .. }) => values[st[t]].clone(),
            _ => f.eval(&batch.xs[t])?,
        };
        s += (&batch.ys[t] - pred).norm_squared();
    }
    Ok(s / batch.len() as f64)
}

/// Σ X_t X_tᵀ and Σ Y_t X_tᵀ.
pub(crate) fn moments(batch: &TrajectoryBatch) -> (DMatrix<f64>, DMatrix<f64>) {
    let (dx, dy) = (batch.d_x(), batch.d_y());
    let mut sxx = DMatrix::zeros(dx, dx);
    let mut syx = DMatrix::zeros(dy, dx);
    for (x, y) in batch.xs.iter().zip(&batch.ys) {
        sxx.ger(1.0, x, x, 1.0);
        syx.ger(1.0, y, x, 1.0);
    }
    (sxx, syx)
}

/// Least squares over {‖A‖_F ≤ B} by pseudo-inverse, then radial projection.
pub fn lse_linear(batch: &TrajectoryBatch, b: f64) -> Result<FitResult> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let (sxx, syx) = moments(batch);
    let a_hat = &syx * pinv(&sxx, PINV_REL_TOL);
    let (a, active) = project_frobenius(&a_hat, b);
    let member = Member::Linear(a);
    let empirical_risk = empirical_risk(batch, &member)?;
    Ok(FitResult {
        parameter: member,
        empirical_risk,
        optimizer_trace: OptimizerTrace { projection_active: active, ..Default::default() },
    })
}

/// Exhaustive search over a finite table; ties go to the lowest index.
pub fn erm_finite(batch: &TrajectoryBatch, family: &HypothesisSpec, atoms: &[DVector<f64>]) -> Result<FitResult> {
    let n = match family {
        HypothesisSpec::FiniteTable { functions } => functions.len(),
        _ => return Err(Error::invalid("erm_finite needs a finite table family")),
    };
    let states: Vec<usize> = match &batch.states {
        Some(s) => s.clone(),
        None => batch
            .xs
            .iter()
            .map(|x| {
                atoms
                    .iter()
                    .position(|a| (a - x).amax() <= 1e-12)
                    .ok_or_else(|| Error::invalid("batch contains a state that is not an atom"))
            })
            .collect::<Result<_>>()?,
    };
    let mut best: Option<(f64, Member)> = None;
    for i in 0..n {
        let m = family.table_member(i, atoms)?;
        let Member::Table { values, .. } = &m else { unreachable!() };
        let risk = states
            .iter()
            .zip(&batch.ys)
            .map(|(&s, y)| (y - &values[s]).norm_squared())
            .sum::<f64>()
            / batch.len() as f64;
        if best.as_ref().is_none_or(|(r, _)| risk < *r) {
            best = Some((risk, m));
        }
    }
    let (empirical_risk, parameter) = best.ok_or_else(|| Error::invalid("empty table family"))?;
    Ok(FitResult { parameter, empirical_risk, optimizer_trace: OptimizerTrace::default() })
}

/// Dispatches to the estimator matching the family.
pub fn fit(batch: &TrajectoryBatch, family: &HypothesisSpec, process: &ProcessSpec, opts: &OptimizerOpts) -> Result<FitResult> {
    match (family, process) {
        (HypothesisSpec::LinearBall { b, .. }, _) => lse_linear(batch, *b),
        (HypothesisSpec::GlmBall { b, link, .. }, _) => erm_glm(batch, *b, *link, opts),
        (HypothesisSpec::FiniteTable { .. }, ProcessSpec::FiniteChain(c)) => erm_finite(batch, family, c.atoms()),
        _ => Err(Error::Unsupported(format!(
            "no estimator for this family on a {} process",
            process.kind()
        ))),
    }
}
