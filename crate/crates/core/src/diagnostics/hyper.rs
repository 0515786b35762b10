use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hypotheses::Member;
use crate::processes::{propagated_marginals, FiniteChainSpec, ProcessSpec};
use crate::seeds::{derive_seed, rng_from_seed, stream, Rng};

/// Scalings used for the exponent fit; all in (0, 1] so star-shaped families stay closed.
const FIT_SCALES: [f64; 4] = [0.125, 0.25, 0.5, 1.0];

/// Estimated trajectory (C, α)-hypercontractivity constant of a sampled family.
#[derive(Clone, Debug, Serialize)]
pub struct HyperEstimate {
    pub c_hat: f64,
    pub alpha: f64,
    /// Slope of log m4 on log m2 across members and scalings; None when the
    /// second moments do not vary.
    pub alpha_fit: Option<f64>,
    pub n_mc: usize,
    pub n_funcs: usize,
    pub family_descriptor: String,
    /// Moments computed from exact marginals rather than simulation.
    pub exact: bool,
    /// The supremum is only taken over sampled members, so the true constant
    /// can be larger.
    pub lower_bound: bool,
}

/// (1/T) Σ_t μ_t, the law of a uniformly chosen time index.
pub fn averaged_marginal(spec: &FiniteChainSpec, t_len: usize) -> DVector<f64> {
    let mut mean = DVector::zeros(spec.num_states());
    for mu in propagated_marginals(spec, t_len) {
        mean += mu;
    }
    mean / t_len as f64
}

/// Trajectory moments E[(1/T)Σ‖f(X_t)‖^k] for k = 2 and an arbitrary power, exactly.
pub fn chain_moments(spec: &FiniteChainSpec, mu_bar: &DVector<f64>, f: &Member, power: f64) -> Result<(f64, f64)> {
    let mut m2 = 0.0;
    let mut mp = 0.0;
    for (k, atom) in spec.atoms().iter().enumerate() {
        let n2 = f.eval_state(k, atom)?.norm_squared();
        m2 += mu_bar[k] * n2;
        mp += mu_bar[k] * n2.powf(power / 2.0);
    }
    Ok((m2, mp))
}

/// m4 / m2^α with the 0/0 = 1 convention.
pub fn hyper_ratio(m2: f64, m4: f64, alpha: f64) -> f64 {
    if m2 <= 0.0 {
        1.0
    } else {
        m4 / m2.powf(alpha)
    }
}

fn ols_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    if sxx <= 1e-12 * n {
        return None;
    }
    Some(points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Estimates sup_f E[(1/T)Σ‖f‖⁴] / (E[(1/T)Σ‖f‖²])^α over `n_funcs` members drawn
/// from `sampler`. Finite chains use exact marginals and also scan every state
/// indicator; other processes average over `n_mc` simulated trajectories.
pub fn hyper_estimate<S>(
    process: &ProcessSpec,
    sampler: S,
    t_len: usize,
    n_mc: usize,
    n_funcs: usize,
    alpha: f64,
    seed: u64,
) -> Result<HyperEstimate>
where
    S: Fn(&mut Rng) -> Member,
{
    if n_mc < 100 {
        return Err(Error::invalid("hyper_estimate needs n_mc ≥ 100"));
    }
    if !(1.0..=2.0).contains(&alpha) {
        return Err(Error::invalid("alpha must lie in [1, 2]"));
    }
    if t_len == 0 {
        return Err(Error::invalid("T must be at least 1"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[stream::PROBE, 0]));
    let members: Vec<Member> = (0..n_funcs).map(|_| sampler(&mut rng)).collect();

    let (moments, exact, indicator_max) = match process {
        ProcessSpec::FiniteChain(chain) => {
            let mu_bar = averaged_marginal(chain, t_len);
            let moments = members
                .iter()
                .map(|f| chain_moments(chain, &mu_bar, f, 4.0))
                .collect::<Result<Vec<_>>>()?;
            // An indicator has m2 = m4 = μ̄_k.
            let ind = mu_bar.iter().map(|&m| hyper_ratio(m, m, alpha)).fold(0.0, f64::max);
            (moments, true, ind)
        }
        _ => (mc_moments(process, &members, t_len, n_mc, seed)?, false, 0.0),
    };

    let mut c_hat = indicator_max;
    let mut points = Vec::new();
    for &(m2, m4) in &moments {
        c_hat = c_hat.max(hyper_ratio(m2, m4, alpha));
        if m2 > 0.0 && m4 > 0.0 {
            for s in FIT_SCALES {
                points.push(((s * s * m2).ln(), (s.powi(4) * m4).ln()));
            }
        }
    }
    Ok(HyperEstimate {
        c_hat,
        alpha,
        alpha_fit: ols_slope(&points),
        n_mc,
        n_funcs,
        family_descriptor: format!("{} members sampled on a {} process", n_funcs, process.kind()),
        exact,
        lower_bound: true,
    })
}

fn mc_moments(process: &ProcessSpec, members: &[Member], t_len: usize, n_mc: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let per: Vec<Vec<(f64, f64)>> = (0..n_mc)
        .into_par_iter()
        .map(|i| -> Result<Vec<(f64, f64)>> {
            let batch = process.simulate(t_len, derive_seed(seed, &[stream::PROBE, 1, i as u64]))?;
            members
                .iter()
                .map(|f| {
                    let mut m2 = 0.0;
                    let mut m4 = 0.0;
                    for x in &batch.xs {
                        let n2 = f.eval(x)?.norm_squared();
                        m2 += n2;
                        m4 += n2 * n2;
                    }
                    Ok((m2 / t_len as f64, m4 / t_len as f64))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = n_mc as f64;
    Ok((0..members.len())
        .map(|j| {
            let m2 = per.iter().map(|r| r[j].0).sum::<f64>() / n;
            let m4 = per.iter().map(|r| r[j].1).sum::<f64>() / n;
            (m2, m4)
        })
        .collect())
}

/// min over t < T and states of μ_t(s).
pub fn mu_min(spec: &FiniteChainSpec, t_len: usize) -> f64 {
    propagated_marginals(spec, t_len)
        .iter()
        .flat_map(|m| m.iter().copied().collect::<Vec<_>>())
        .fold(f64::INFINITY, f64::min)
}

/// Random table member with entries uniform in [−1, 1].
pub fn random_table_member(rng: &mut Rng, spec: &FiniteChainSpec) -> Member {
    use rand::Rng as _;
    Member::Table {
        index: 0,
        values: (0..spec.num_states())
            .map(|_| DVector::from_fn(spec.d_y(), |_, _| rng.random::<f64>() * 2.0 - 1.0))
            .collect(),
        atoms: spec.atoms().to_vec(),
    }
}
