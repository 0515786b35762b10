use serde::Serialize;

use super::{curve, risk_curve, ExperimentResult, SweepConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct MixingRow {
    pub param: f64,
    pub t_max: usize,
    /// T · mean excess risk at the largest horizon.
    pub scaled_risk: f64,
    /// (T_min · risk at T_min) / (T_max · risk at T_max). Values above 1 mean
    /// the short-horizon risk sits above the 1/T extrapolation.
    pub small_t_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MixingReport {
    pub rows: Vec<MixingRow>,
    /// max over parameters of the scaled risk divided by the min.
    pub invariance: f64,
    #[serde(skip)]
    pub result: ExperimentResult,
}

/// Risk curves over a parameter grid (typically ρ), summarised by how much
/// T·risk at the largest horizon moves with the parameter.
pub fn mixing_sweep(cfg: &SweepConfig) -> Result<MixingReport> {
    let result = risk_curve(cfg)?;
    let t_min = *cfg.t_grid.iter().min().expect("validated nonempty");
    let t_max = *cfg.t_grid.iter().max().expect("validated nonempty");
    let at = |param: f64, t: usize| {
        result
            .aggregates
            .iter()
            .find(|a| a.param == param && a.t_len == t)
            .map(|a| a.mean_risk * t as f64)
            .expect("every cell is aggregated")
    };
    let rows: Vec<MixingRow> = cfg
        .param_grid
        .iter()
        .map(|&param| {
            let scaled_risk = at(param, t_max);
            MixingRow { param, t_max, scaled_risk, small_t_ratio: at(param, t_min) / scaled_risk }
        })
        .collect();
    let hi = rows.iter().map(|r| r.scaled_risk).fold(f64::NEG_INFINITY, f64::max);
    let lo = rows.iter().map(|r| r.scaled_risk).fold(f64::INFINITY, f64::min);
    if !(lo > 0.0) {
        return Err(Error::numeric("a parameter has zero risk at the largest T; the invariance ratio is undefined"));
    }
    Ok(MixingReport { rows, invariance: hi / lo, result })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "T", rename_all = "snake_case")]
pub enum BurnInDetection {
    Reached(usize),
    NotReached,
    /// Fewer than four grid points.
    InsufficientGrid,
}

impl BurnInDetection {
    /// Orders detections with "not reached" above every grid point.
    pub fn as_horizon(&self) -> f64 {
        match self {
            BurnInDetection::Reached(t) => *t as f64,
            _ => f64::INFINITY,
        }
    }
}

/// Smallest grid T from which every later local log-log slope stays in
/// −1 ± `slope_tol`. `points` must be sorted by T.
pub fn detect_curve(points: &[(usize, f64)], slope_tol: f64) -> BurnInDetection {
    if points.len() < 4 {
        return BurnInDetection::InsufficientGrid;
    }
    let slopes: Vec<f64> = points
        .windows(2)
        .map(|w| {
            let (t0, r0) = w[0];
            let (t1, r1) = w[1];
            if r0 > 0.0 && r1 > 0.0 {
                (r1 / r0).ln() / (t1 as f64 / t0 as f64).ln()
            } else {
                f64::NAN
            }
        })
        .collect();
    let mut start = slopes.len();
    while start > 0 && (slopes[start - 1] + 1.0).abs() <= slope_tol {
        start -= 1;
    }
    if start == slopes.len() {
        BurnInDetection::NotReached
    } else {
        BurnInDetection::Reached(points[start].0)
    }
}

/// Burn-in horizon per parameter value, in `param_grid` order of appearance.
pub fn burn_in_detect(result: &ExperimentResult, slope_tol: f64) -> Vec<(f64, BurnInDetection)> {
    let aggs = &result.aggregates;
    let mut params: Vec<f64> = Vec::new();
    for a in aggs {
        if !params.contains(&a.param) {
            params.push(a.param);
        }
    }
    params
        .into_iter()
        .map(|p| {
            let mut pts = curve(aggs, p);
            pts.sort_by_key(|x| x.0);
            (p, detect_curve(&pts, slope_tol))
        })
        .collect()
}
