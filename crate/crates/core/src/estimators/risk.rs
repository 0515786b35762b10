use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hypotheses::Member;
use crate::processes::{average_gramian, propagated_marginals, visit_dynamics, LinkFn, ProcessSpec};
use crate::seeds::{derive_seed, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMethod {
    ExactGramian,
    ExactMarginal,
    MonteCarlo,
}

/// Excess risk ‖f̂ − f⋆‖²_{L²} with its Monte Carlo standard error.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RiskEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: RiskMethod,
}

fn linear_delta(f_hat: &Member, f_star: &Member) -> Option<DMatrix<f64>> {
    let lin = |m: &Member| match m {
        Member::Linear(a) => Some(a.clone()),
        Member::Glm { a, link } if link.is_identity() => Some(a.clone()),
        _ => None,
    };
    Some(lin(f_hat)? - lin(f_star)?)
}

/// tr(Δ Γ̄ Δᵀ), the excess risk of a linear estimate under average covariance Γ̄.
pub fn gramian_risk(delta: &DMatrix<f64>, gbar: &DMatrix<f64>) -> f64 {
    (delta * gbar * delta.transpose()).trace()
}

pub fn excess_risk_exact(f_hat: &Member, f_star: &Member, process: &ProcessSpec, t_len: usize) -> Result<RiskEstimate> {
    if t_len == 0 {
        return Err(Error::invalid("T must be at least 1"));
    }
    match process {
        ProcessSpec::FiniteChain(chain) => {
            let mut mean = vec![0.0; chain.num_states()];
            for mu in propagated_marginals(chain, t_len) {
                for (m, p) in mean.iter_mut().zip(mu.iter()) {
                    *m += p / t_len as f64;
                }
            }
            let mut value = 0.0;
            for (k, atom) in chain.atoms().iter().enumerate() {
                let d = f_hat.eval_state(k, atom)? - f_star.eval_state(k, atom)?;
                value += mean[k] * d.norm_squared();
            }
            Ok(RiskEstimate { value, std_error: 0.0, method: RiskMethod::ExactMarginal })
        }
        ProcessSpec::Lds(lds) if lds.trunc_radius().is_none() => {
            let delta = linear_delta(f_hat, f_star).ok_or_else(|| {
                Error::Unsupported("exact LDS risk needs linear members; use excess_risk_mc".into())
            })?;
            let gbar = average_gramian(lds.a_star(), lds.h(), t_len);
            Ok(RiskEstimate { value: gramian_risk(&delta, &gbar), std_error: 0.0, method: RiskMethod::ExactGramian })
        }
        _ => Err(Error::Unsupported(format!(
            "no closed-form risk for this pairing on a {} process; use excess_risk_mc",
            process.kind()
        ))),
    }
}

fn matrix_member(m: &Member) -> Option<(&DMatrix<f64>, Option<LinkFn>)> {
    match m {
        Member::Linear(a) => Some((a, None)),
        Member::Glm { a, link } => Some((a, Some(*link).filter(|l| !l.is_identity()))),
        _ => None,
    }
}

/// Streams one evaluation trajectory without allocating per step. Applies to
/// dynamics processes with matrix members; None means use the generic path.
fn fast_dynamics_risk(
    f_hat: &Member,
    f_star: &Member,
    process: &ProcessSpec,
    t_len: usize,
    seed: u64,
) -> Option<(f64, DMatrix<f64>)> {
    let (a, h, link, radius) = match process {
        ProcessSpec::Lds(s) => (s.a_star(), s.h(), None, s.trunc_radius()),
        ProcessSpec::Glm(s) => (s.a_star(), s.h(), Some(s.link()), s.trunc_radius()),
        ProcessSpec::FiniteChain(_) => return None,
    };
    let (ah, lh) = matrix_member(f_hat)?;
    let (as_, ls) = matrix_member(f_star)?;
    let d = a.nrows();
    if ah.ncols() != d || as_.ncols() != d || ah.nrows() != as_.nrows() {
        return None;
    }
    let apply = |l: Option<LinkFn>, z: f64| l.map_or(z, |l| l.apply(z));
    let mut s = 0.0;
    let mut cov = DMatrix::zeros(d, d);
    visit_dynamics(a, h, link, radius, t_len, seed, |x| {
        for i in 0..ah.nrows() {
            let zh: f64 = (0..d).map(|j| ah[(i, j)] * x[j]).sum();
            let zs: f64 = (0..d).map(|j| as_[(i, j)] * x[j]).sum();
            let diff = apply(lh, zh) - apply(ls, zs);
            s += diff * diff;
        }
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += x[i] * x[j];
            }
        }
    });
    Some((s / t_len as f64, cov / t_len as f64))
}

pub fn excess_risk_mc(
    f_hat: &Member,
    f_star: &Member,
    process: &ProcessSpec,
    t_len: usize,
    n_eval: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    excess_risk_mc_with_covariance(f_hat, f_star, process, t_len, n_eval, seed).map(|(r, _)| r)
}

/// MC excess risk together with the empirical average covariance (1/(nT)) Σ X̃X̃ᵀ
/// of the same evaluation trajectories.
pub fn excess_risk_mc_with_covariance(
    f_hat: &Member,
    f_star: &Member,
    process: &ProcessSpec,
    t_len: usize,
    n_eval: usize,
    seed: u64,
) -> Result<(RiskEstimate, DMatrix<f64>)> {
    if n_eval < 2 {
        return Err(Error::invalid("n_eval must be at least 2"));
    }
    let d = process.d_x();
    let per: Vec<(f64, DMatrix<f64>)> = (0..n_eval)
        .into_par_iter()
        .map(|i| -> Result<(f64, DMatrix<f64>)> {
            let seed_i = derive_seed(seed, &[stream::EVAL, i as u64]);
            if let Some(r) = fast_dynamics_risk(f_hat, f_star, process, t_len, seed_i) {
                return Ok(r);
            }
            let batch = process.simulate(t_len, seed_i)?;
            let mut s = 0.0;
            let mut cov = DMatrix::zeros(d, d);
            for (t, x) in batch.xs.iter().enumerate() {
                let (a, b) = match &batch.states {
                    Some(st) => (f_hat.eval_state(st[t], x)?, f_star.eval_state(st[t], x)?),
                    None => (f_hat.eval(x)?, f_star.eval(x)?),
                };
                s += (a - b).norm_squared();
                cov.ger(1.0, x, x, 1.0);
            }
            Ok((s / t_len as f64, cov / t_len as f64))
        })
        .collect::<Result<_>>()?;
    let n = n_eval as f64;
    let mean = per.iter().map(|p| p.0).sum::<f64>() / n;
    let var = per.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mut cov = DMatrix::zeros(d, d);
    for (_, c) in &per {
        cov += c;
    }
    Ok((
        RiskEstimate { value: mean, std_error: (var / n).sqrt(), method: RiskMethod::MonteCarlo },
        cov / n,
    ))
}
