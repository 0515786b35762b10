use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::dependency::{dependency_matrix_finite, dependency_opnorm, DEFAULT_DEPENDENCY_CAP};
use super::hyper::{averaged_marginal, chain_moments, hyper_ratio};
use crate::error::{Error, Result};
use crate::hypotheses::Member;
use crate::linalg::sym_eigenvalues;
use crate::processes::{propagated_marginals, sample_path, FiniteChainSpec};
use crate::seeds::{derive_seed, rng_from_seed, stream};

/// Number of MC draws per parallel chunk; chunk seeds make results independent of thread count.
const CHUNK: usize = 4096;

fn mean_se(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let n = n as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct SamsonRow {
    pub lambda: f64,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    /// LHS exceeds RHS by more than three standard errors.
    pub violated: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SamsonReport {
    pub gamma_opnorm: f64,
    pub rows: Vec<SamsonRow>,
}

/// Compares E exp(−λΣg(X_t)) by simulation with exp(−λΣEg + λ²‖Γ‖²ΣEg²/2) computed exactly.
pub fn samson_check(
    spec: &FiniteChainSpec,
    g: &[f64],
    t_len: usize,
    lambdas: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<SamsonReport> {
    if g.len() != spec.num_states() {
        return Err(Error::invalid("g needs one value per state"));
    }
    if g.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::invalid("g must be nonnegative"));
    }
    if n_mc < 2 {
        return Err(Error::invalid("n_mc must be at least 2"));
    }
    let gamma = dependency_opnorm(&dependency_matrix_finite(spec, t_len, DEFAULT_DEPENDENCY_CAP)?);
    let (mut s1, mut s2) = (0.0, 0.0);
    for mu in propagated_marginals(spec, t_len) {
        s1 += mu.iter().zip(g).map(|(p, v)| p * v).sum::<f64>();
        s2 += mu.iter().zip(g).map(|(p, v)| p * v * v).sum::<f64>();
    }
    let sums: Vec<f64> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            sample_path(spec, t_len, derive_seed(seed, &[stream::PROBE, i as u64]))
                .iter()
                .map(|&s| g[s])
                .sum()
        })
        .collect();
    let rows = lambdas
        .iter()
        .map(|&lambda| {
            let (a, b) = sums.iter().fold((0.0, 0.0), |(a, b), &s| {
                let e = (-lambda * s).exp();
                (a + e, b + e * e)
            });
            let (lhs, lhs_se) = mean_se(a, b, n_mc);
            let rhs = (-lambda * s1 + lambda * lambda * gamma * gamma * s2 / 2.0).exp();
            SamsonRow { lambda, lhs, lhs_se, rhs, violated: lhs > rhs + 3.0 * lhs_se }
        })
        .collect();
    Ok(SamsonReport { gamma_opnorm: gamma, rows })
}

#[derive(Clone, Debug, Serialize)]
pub struct LowerIsometryReport {
    /// Frequency of: some net member has (1/T)Σ‖f‖² ≤ r²/8.
    pub p_exists: f64,
    pub se_exists: f64,
    /// Frequency of: every net member has (1/T)Σ‖f‖² ≤ r²/8.
    pub p_all: f64,
    pub se_all: f64,
    pub bound: f64,
    pub vacuous: bool,
    pub gamma_opnorm: f64,
    /// Hypercontractivity constant of the net itself at the given α.
    pub c_net: f64,
    pub within_bound: bool,
}

/// Lower-isometry event frequency for a finite net on ∂B(r) against
/// |net|·exp(−T r^{4−2α}/(8C‖Γ‖²)).
#[allow(clippy::too_many_arguments)]
pub fn lower_isometry_check(
    spec: &FiniteChainSpec,
    net: &[Member],
    r: f64,
    alpha: f64,
    c: f64,
    t_len: usize,
    n_mc: usize,
    seed: u64,
) -> Result<LowerIsometryReport> {
    if net.is_empty() || n_mc < 2 || !(r > 0.0) {
        return Err(Error::invalid("lower_isometry_check needs a nonempty net, r > 0 and n_mc ≥ 2"));
    }
    let mu_bar = averaged_marginal(spec, t_len);
    let mut c_net = 0.0f64;
    let mut tables = Vec::with_capacity(net.len());
    for (i, f) in net.iter().enumerate() {
        let (m2, m4) = chain_moments(spec, &mu_bar, f, 4.0)?;
        if (m2.sqrt() - r).abs() > 1e-9 {
            return Err(Error::invalid(format!("net member {i} has L2 norm {} instead of r = {r}", m2.sqrt())));
        }
        c_net = c_net.max(hyper_ratio(m2, m4, alpha));
        let vals: Vec<f64> = spec
            .atoms()
            .iter()
            .enumerate()
            .map(|(k, a)| f.eval_state(k, a).map(|v| v.norm_squared()))
            .collect::<Result<_>>()?;
        tables.push(vals);
    }
    if c < c_net * (1.0 - 1e-12) {
        return Err(Error::invalid(format!("C = {c} is below the net's own constant {c_net}")));
    }
    let gamma = dependency_opnorm(&dependency_matrix_finite(spec, t_len, DEFAULT_DEPENDENCY_CAP)?);
    let threshold = r * r / 8.0;
    let events: Vec<(bool, bool)> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let path = sample_path(spec, t_len, derive_seed(seed, &[stream::PROBE, i as u64]));
            let emp: Vec<f64> = tables
                .iter()
                .map(|tab| path.iter().map(|&s| tab[s]).sum::<f64>() / t_len as f64)
                .collect();
            (emp.iter().any(|&e| e <= threshold), emp.iter().all(|&e| e <= threshold))
        })
        .collect();
    let n_exists = events.iter().filter(|e| e.0).count() as f64;
    let n_all = events.iter().filter(|e| e.1).count() as f64;
    let (p_exists, se_exists) = mean_se(n_exists, n_exists, n_mc);
    let (p_all, se_all) = mean_se(n_all, n_all, n_mc);
    let exponent = -(t_len as f64) * r.powf(4.0 - 2.0 * alpha) / (8.0 * c * gamma * gamma);
    let bound = ((net.len() as f64).ln() + exponent).exp();
    Ok(LowerIsometryReport {
        p_exists,
        se_exists,
        p_all,
        se_all,
        bound,
        vacuous: bound > 1.0,
        gamma_opnorm: gamma,
        c_net,
        within_bound: p_exists <= bound + 3.0 * se_exists,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct QuadFormRow {
    pub truncated: f64,
    pub truncated_se: f64,
    pub untruncated: f64,
    pub untruncated_se: f64,
    /// SE of the paired difference untruncated − truncated.
    pub diff_se: f64,
    /// 3(tr M)², the Gaussian fourth-moment bound.
    pub gaussian_bound: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TruncatedNoiseReport {
    pub d: usize,
    pub radius: f64,
    pub n_mc: usize,
    pub truncation_prob: f64,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub mean_ok: bool,
    /// Eigenvalue range of the empirical E[W̄W̄ᵀ].
    pub cov_eig_min: f64,
    pub cov_eig_max: f64,
    /// E[W̄W̄ᵀ] = P(χ²_{d+2} ≤ R²)·I exactly.
    pub analytic_second_moment: f64,
    /// max over the (λ, u) grid of E exp(λ⟨u, W̄⟩)/exp(2λ²).
    pub mgf_max_ratio: f64,
    pub mgf_ok: bool,
    pub quad_forms: Vec<QuadFormRow>,
}

const MGF_LAMBDAS: [f64; 5] = [0.1, 0.25, 0.5, 1.0, 2.0];
const N_RANDOM_DIRECTIONS: usize = 4;
const N_QUAD_FORMS: usize = 3;

#[derive(Clone)]
struct NoiseAcc {
    s: Vec<f64>,
    ss: Vec<f64>,
    cov: DMatrix<f64>,
    mgf: Vec<(f64, f64)>,
    quad: Vec<[f64; 6]>,
}

/// Monte Carlo audit of Gaussian noise zeroed outside the radius-R ball.
pub fn truncated_noise_diag(d: usize, radius: f64, n_mc: usize, seed: u64) -> Result<TruncatedNoiseReport> {
    if d == 0 || !(radius > 0.0) || n_mc < 2 {
        return Err(Error::invalid("truncated_noise_diag needs d ≥ 1, R > 0, n_mc ≥ 2"));
    }
    let mut setup = rng_from_seed(derive_seed(seed, &[stream::PROBE, 0]));
    let mut dirs: Vec<DVector<f64>> = (0..d).map(|i| DVector::from_fn(d, |j, _| f64::from(i == j))).collect();
    for _ in 0..N_RANDOM_DIRECTIONS {
        let v = DVector::from_fn(d, |_, _| setup.sample::<f64, _>(StandardNormal));
        dirs.push(v.normalize());
    }
    let ms: Vec<DMatrix<f64>> = (0..N_QUAD_FORMS)
        .map(|_| {
            let g = DMatrix::from_fn(d, d, |_, _| setup.sample::<f64, _>(StandardNormal));
            &g * g.transpose()
        })
        .collect();
    let n_probe = dirs.len() * MGF_LAMBDAS.len();
    let empty = NoiseAcc {
        s: vec![0.0; d],
        ss: vec![0.0; d],
        cov: DMatrix::zeros(d, d),
        mgf: vec![(0.0, 0.0); n_probe],
        quad: vec![[0.0; 6]; ms.len()],
    };
    let n_chunks = n_mc.div_ceil(CHUNK);
    let parts: Vec<NoiseAcc> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from_seed(derive_seed(seed, &[stream::PROBE, 1, c as u64]));
            let mut acc = empty.clone();
            let n = CHUNK.min(n_mc - c * CHUNK);
            for _ in 0..n {
                let w = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let wb = if w.norm() <= radius { w.clone() } else { DVector::zeros(d) };
                for i in 0..d {
                    acc.s[i] += wb[i];
                    acc.ss[i] += wb[i] * wb[i];
                }
                acc.cov.ger(1.0, &wb, &wb, 1.0);
                let mut k = 0;
                for u in &dirs {
                    let p = u.dot(&wb);
                    for &l in &MGF_LAMBDAS {
                        let e = (l * p - 2.0 * l * l).exp();
                        acc.mgf[k].0 += e;
                        acc.mgf[k].1 += e * e;
                        k += 1;
                    }
                }
                for (q, m) in acc.quad.iter_mut().zip(&ms) {
                    let a = wb.dot(&(m * &wb)).powi(2);
                    let b = w.dot(&(m * &w)).powi(2);
                    q[0] += a;
                    q[1] += a * a;
                    q[2] += b;
                    q[3] += b * b;
                    q[4] += b - a;
                    q[5] += (b - a) * (b - a);
                }
            }
            acc
        })
        .collect();
    let mut tot = empty;
    for p in parts {
        for i in 0..d {
            tot.s[i] += p.s[i];
            tot.ss[i] += p.ss[i];
        }
        tot.cov += p.cov;
        for (a, b) in tot.mgf.iter_mut().zip(&p.mgf) {
            a.0 += b.0;
            a.1 += b.1;
        }
        for (a, b) in tot.quad.iter_mut().zip(&p.quad) {
            for j in 0..6 {
                a[j] += b[j];
            }
        }
    }
    let (mut mean, mut mean_se_v) = (Vec::with_capacity(d), Vec::with_capacity(d));
    for i in 0..d {
        let (m, se) = mean_se(tot.s[i], tot.ss[i], n_mc);
        mean.push(m);
        mean_se_v.push(se);
    }
    let mean_ok = mean.iter().zip(&mean_se_v).all(|(m, se)| m.abs() <= 3.0 * se);
    let ev = sym_eigenvalues(&(tot.cov / n_mc as f64));
    let mut mgf_max_ratio = 0.0f64;
    let mut mgf_ok = true;
    for &(s, ss) in &tot.mgf {
        let (m, se) = mean_se(s, ss, n_mc);
        mgf_max_ratio = mgf_max_ratio.max(m);
        mgf_ok &= m <= 1.0 + 3.0 * se;
    }
    let quad_forms = tot
        .quad
        .iter()
        .zip(&ms)
        .map(|(q, m)| {
            let (tr_, tr_se) = mean_se(q[0], q[1], n_mc);
            let (un, un_se) = mean_se(q[2], q[3], n_mc);
            let (_, diff_se) = mean_se(q[4], q[5], n_mc);
            let gaussian_bound = 3.0 * m.trace().powi(2);
            QuadFormRow {
                truncated: tr_,
                truncated_se: tr_se,
                untruncated: un,
                untruncated_se: un_se,
                diff_se,
                gaussian_bound,
                ok: tr_ <= un + 3.0 * diff_se && un <= gaussian_bound + 3.0 * un_se,
            }
        })
        .collect();
    let df = d as f64;
    let chi_d = ChiSquared::new(df).map_err(|e| Error::numeric(e.to_string()))?;
    let chi_d2 = ChiSquared::new(df + 2.0).map_err(|e| Error::numeric(e.to_string()))?;
    Ok(TruncatedNoiseReport {
        d,
        radius,
        n_mc,
        truncation_prob: 1.0 - chi_d.cdf(radius * radius),
        mean,
        mean_se: mean_se_v,
        mean_ok,
        cov_eig_min: ev[0],
        cov_eig_max: ev[d - 1],
        analytic_second_moment: chi_d2.cdf(radius * radius),
        mgf_max_ratio,
        mgf_ok,
        quad_forms,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TransferReport {
    pub chi2_max: f64,
    pub chi2: Vec<f64>,
    pub tv: Vec<f64>,
    pub c_tv: f64,
    pub c_8_to_2: f64,
    /// (1+√C_χ²)·√C_{8→2}·(1 + C_TV B²)².
    pub c_transferred: f64,
    /// Trajectory constant at α = 2 of the members rescaled onto ∂B(r).
    pub c_direct: f64,
    pub holds: bool,
}

/// Checks that stationary L⁸–L² equivalence plus ergodicity transfers to a
/// trajectory hypercontractivity constant on ∂B(r).
pub fn stationary_transfer_check(
    spec: &FiniteChainSpec,
    members: &[Member],
    r: f64,
    b: f64,
    t_len: usize,
) -> Result<TransferReport> {
    if !(r > 0.0) || t_len == 0 {
        return Err(Error::invalid("stationary_transfer_check needs r > 0 and T ≥ 1"));
    }
    let pi = spec.stationary()?;
    let marg = propagated_marginals(spec, t_len);
    let mut chi2 = Vec::with_capacity(t_len);
    let mut tv = Vec::with_capacity(t_len);
    for mu in &marg {
        let mut c = 0.0;
        for k in 0..pi.len() {
            if pi[k] <= 0.0 {
                if mu[k] > 0.0 {
                    return Err(Error::invalid(format!("marginal puts mass on state {k} where pi has none")));
                }
                continue;
            }
            c += (mu[k] - pi[k]).powi(2) / pi[k];
        }
        chi2.push(c);
        tv.push(0.5 * (mu - &pi).abs().sum());
    }
    let chi2_max = chi2.iter().copied().fold(0.0, f64::max);
    let c_tv = tv.iter().sum::<f64>() / t_len as f64 / (r * r);
    let mu_bar = averaged_marginal(spec, t_len);
    let (mut c82, mut c_direct) = (0.0f64, 0.0f64);
    for f in members {
        let (p2, p8) = chain_moments(spec, &pi, f, 8.0)?;
        c82 = c82.max(if p2 > 0.0 { p8 / p2.powi(4) } else { 1.0 });
        let (m2, _) = chain_moments(spec, &mu_bar, f, 4.0)?;
        if m2 <= 0.0 {
            continue;
        }
        let g = f.scaled(r / m2.sqrt());
        let (g2, g4) = chain_moments(spec, &mu_bar, &g, 4.0)?;
        c_direct = c_direct.max(hyper_ratio(g2, g4, 2.0));
    }
    let c_transferred = (1.0 + chi2_max.sqrt()) * c82.sqrt() * (1.0 + c_tv * b * b).powi(2);
    Ok(TransferReport {
        chi2_max,
        chi2,
        tv,
        c_tv,
        c_8_to_2: c82,
        c_transferred,
        c_direct,
        holds: c_direct <= c_transferred * (1.0 + 1e-12),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentEquivalenceReport {
    pub epsilon: f64,
    /// sup-norm bound of the member over the atoms.
    pub b: f64,
    /// ‖f‖_{L^{2+ε}} / ‖f‖_{L²}.
    pub c: f64,
    /// m4 / m2^{1+ε/2}.
    pub ratio: f64,
    /// B^{2−ε} c^{2+ε}.
    pub bound: f64,
    pub holds: bool,
}

/// Bounded members with equivalent L² and L^{2+ε} norms are hypercontractive
/// at α = 1 + ε/2 with constant B^{2−ε}c^{2+ε}; checked with exact moments.
pub fn moment_equivalence_check(
    spec: &FiniteChainSpec,
    f: &Member,
    epsilon: f64,
    t_len: usize,
) -> Result<MomentEquivalenceReport> {
    if !(epsilon > 0.0 && epsilon <= 2.0) {
        return Err(Error::invalid("epsilon must lie in (0, 2]"));
    }
    let mu_bar = averaged_marginal(spec, t_len);
    let (m2, m_eps) = chain_moments(spec, &mu_bar, f, 2.0 + epsilon)?;
    let (_, m4) = chain_moments(spec, &mu_bar, f, 4.0)?;
    let b = spec
        .atoms()
        .iter()
        .enumerate()
        .map(|(k, a)| f.eval_state(k, a).map(|v| v.norm()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let c = if m2 > 0.0 { m_eps.powf(1.0 / (2.0 + epsilon)) / m2.sqrt() } else { 1.0 };
    let ratio = hyper_ratio(m2, m4, 1.0 + epsilon / 2.0);
    let bound = b.powf(2.0 - epsilon) * c.powf(2.0 + epsilon);
    Ok(MomentEquivalenceReport { epsilon, b, c, ratio, bound, holds: m2 <= 0.0 || ratio <= bound * (1.0 + 1e-12) })
}

/// A finite net on ∂B(r) with its certified constant, ready for
/// `lower_isometry_check`.
#[derive(Clone, Debug)]
pub struct LowerIsometryScenario {
    pub name: &'static str,
    pub spec: FiniteChainSpec,
    pub net: Vec<Member>,
    pub r: f64,
    pub alpha: f64,
    pub c: f64,
    pub t_len: usize,
}

/// Scales each direction (one scalar per state) to L²(μ̄_T) norm r.
pub fn sphere_net(spec: &FiniteChainSpec, directions: &[Vec<f64>], r: f64, t_len: usize) -> Result<Vec<Member>> {
    let mu_bar = averaged_marginal(spec, t_len);
    directions
        .iter()
        .enumerate()
        .map(|(index, d)| {
            if d.len() != spec.num_states() {
                return Err(Error::invalid("net direction needs one value per state"));
            }
            let n2: f64 = d.iter().zip(mu_bar.iter()).map(|(v, p)| p * v * v).sum();
            if !(n2 > 0.0) {
                return Err(Error::invalid("net direction vanishes on the support"));
            }
            let s = r / n2.sqrt();
            Ok(Member::Table {
                index,
                values: d.iter().map(|v| DVector::from_element(1, v * s)).collect(),
                atoms: spec.atoms().to_vec(),
            })
        })
        .collect()
}

fn net_constant(spec: &FiniteChainSpec, net: &[Member], alpha: f64, t_len: usize) -> Result<f64> {
    let mu_bar = averaged_marginal(spec, t_len);
    let mut c = 0.0f64;
    for f in net {
        let (m2, m4) = chain_moments(spec, &mu_bar, f, 4.0)?;
        c = c.max(hyper_ratio(m2, m4, alpha));
    }
    Ok(c)
}

/// Indicator-and-constant nets on the two-state chains used throughout
/// (iid, p = 0.25, slow p = 0.05) and a three-state chain, at one short and one
/// long horizon each. The short horizons give vacuous bounds.
pub fn default_lower_isometry_scenarios() -> Result<Vec<LowerIsometryScenario>> {
    let two = |p: f64| FiniteChainSpec::two_state(p, crate::processes::Init::Stationary, 1.0);
    let three = FiniteChainSpec::new(
        vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.6, 0.2], vec![0.1, 0.3, 0.6]],
        vec![vec![0.0], vec![1.0], vec![2.0]],
        crate::processes::Init::Stationary,
        vec![vec![0.0], vec![1.0], vec![2.0]],
        1.0,
    )?;
    let two_dirs = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
    let three_dirs = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 1.0, 1.0]];
    let cases: Vec<(&'static str, FiniteChainSpec, &Vec<Vec<f64>>, usize)> = vec![
        ("iid_indicator_T200", two(0.5)?, &two_dirs, 200),
        ("iid_T16", two(0.5)?, &two_dirs, 16),
        ("p025_T64", two(0.25)?, &two_dirs, 64),
        ("p025_T2048", two(0.25)?, &two_dirs, 2048),
        ("p005_T256", two(0.05)?, &two_dirs, 256),
        ("p005_T2048", two(0.05)?, &two_dirs, 2048),
        ("three_state_T64", three.clone(), &three_dirs, 64),
        ("three_state_T2048", three, &three_dirs, 2048),
    ];
    cases
        .into_iter()
        .map(|(name, spec, dirs, t_len)| {
            let dirs: Vec<Vec<f64>> = if name == "iid_indicator_T200" { vec![dirs[0].clone()] } else { dirs.clone() };
            let net = sphere_net(&spec, &dirs, 1.0, t_len)?;
            let c = net_constant(&spec, &net, 2.0, t_len)?;
            Ok(LowerIsometryScenario { name, spec, net, r: 1.0, alpha: 2.0, c, t_len })
        })
        .collect()
}
