use nalgebra::DVector;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::cover::{certify, grid_net, sample_ball, CertificationReport, CoverCertificate};
use super::Member;
use crate::error::{Error, Result};
use crate::seeds::{rng_from_seed, Rng};

/// Orthonormal systems on [0, 1] with a declared growth ‖φ_n‖_∞ ≤ B n^q.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// φ_1 ≡ 1, φ_n(x) = √2 cos((n−1)πx); bound √2 with q = 0.
    Cosine,
}

impl Basis {
    /// φ_n(x) for n ≥ 1.
    pub fn eval(&self, n: usize, x: f64) -> f64 {
        match self {
            Basis::Cosine => {
                if n <= 1 {
                    1.0
                } else {
                    std::f64::consts::SQRT_2 * ((n - 1) as f64 * std::f64::consts::PI * x).cos()
                }
            }
        }
    }

    pub fn declared_bound(&self) -> (f64, f64) {
        match self {
            Basis::Cosine => (std::f64::consts::SQRT_2, 0.0),
        }
    }
}

/// {Σ θ_j φ_j : Σ θ_j²/μ_j ≤ 1} with μ_j ≤ e^{−2βj}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidSpec {
    pub beta: f64,
    #[serde(rename = "B_basis")]
    pub b_basis: f64,
    pub q_growth: f64,
    pub mu: Vec<f64>,
    pub basis: Basis,
}

impl EllipsoidSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.b_basis > 0.0 && self.q_growth >= 0.0) {
            return Err(Error::invalid("ellipsoid needs beta > 0, B_basis > 0, q_growth ≥ 0"));
        }
        if self.mu.is_empty() {
            return Err(Error::invalid("ellipsoid needs at least one decay coefficient"));
        }
        for (j, &m) in self.mu.iter().enumerate() {
            let cap = (-2.0 * self.beta * (j + 1) as f64).exp();
            if !(m > 0.0) || m > cap * (1.0 + 1e-12) {
                return Err(Error::invalid(format!(
                    "mu_{} = {m} must lie in (0, exp(-2 beta j)] = (0, {cap}]",
                    j + 1
                )));
            }
        }
        Ok(())
    }

    /// The fastest decay the family allows: μ_j = e^{−2βj}, j ≤ len.
    pub fn with_max_decay(beta: f64, b_basis: f64, q_growth: f64, len: usize, basis: Basis) -> Self {
        EllipsoidSpec {
            beta,
            b_basis,
            q_growth,
            mu: (1..=len).map(|j| (-2.0 * beta * j as f64).exp()).collect(),
            basis,
        }
    }

    /// (Σ θ_j²/μ_j)^{1/2}; `None` if θ is longer than μ.
    pub fn weighted_norm(&self, theta: &DVector<f64>) -> Option<f64> {
        if theta.len() > self.mu.len() {
            return None;
        }
        Some(theta.iter().zip(&self.mu).map(|(t, m)| t * t / m).sum::<f64>().sqrt())
    }
}

/// Smallest m ≥ 1 with m − (q/β) log m ≥ (1/β)|log(4B/(βε))|.
pub fn ellipsoid_m_eps(beta: f64, b: f64, q: f64, epsilon: f64) -> Result<usize> {
    if !(beta > 0.0 && b > 0.0 && q >= 0.0 && epsilon > 0.0) {
        return Err(Error::invalid("ellipsoid_m_eps needs beta, B, epsilon > 0 and q ≥ 0"));
    }
    let rhs = (4.0 * b / (beta * epsilon)).ln().abs() / beta;
    let lhs = |m: usize| m as f64 - (q / beta) * (m as f64).ln();
    let mut m = 1usize;
    while lhs(m) < rhs {
        m += 1;
        if m > 100_000_000 {
            return Err(Error::numeric("m_eps scan exceeded 1e8"));
        }
    }
    Ok(m)
}

/// 1 + 7K³B⁴m^{4q+2}.
pub fn ellipsoid_hyper_constant(m_eps: usize, k: f64, b: f64, q: f64) -> Result<f64> {
    if m_eps == 0 {
        return Err(Error::invalid("m_eps must be at least 1"));
    }
    if !(k >= 1.0) {
        return Err(Error::invalid("density-ratio bound K must be at least 1"));
    }
    Ok(1.0 + 7.0 * k.powi(3) * b.powi(4) * (m_eps as f64).powf(4.0 * q + 2.0))
}

pub fn ellipsoid_cover(spec: &EllipsoidSpec, epsilon: f64, cap: usize) -> Result<CoverCertificate> {
    let m = ellipsoid_m_eps(spec.beta, spec.b_basis, spec.q_growth, epsilon)?;
    ellipsoid_cover_with_m(spec, epsilon, m, cap)
}

/// Cover built at an explicit truncation dimension m.
///
/// The net lives on the weighted ball Θ_m at resolution δ = ε/(4Bm^q); stored
/// elements are coefficient vectors θ (length min(m, stored μ)).
pub fn ellipsoid_cover_with_m(spec: &EllipsoidSpec, epsilon: f64, m: usize, cap: usize) -> Result<CoverCertificate> {
    spec.validate()?;
    if !(epsilon > 0.0) || m == 0 {
        return Err(Error::invalid("ellipsoid cover needs epsilon > 0 and m ≥ 1"));
    }
    let (b, q, beta) = (spec.b_basis, spec.q_growth, spec.beta);
    let mf = m as f64;
    let delta = epsilon / (4.0 * b * mf.powf(q));
    let dim = m.min(spec.mu.len());
    let elements = grid_net(dim, 1.0, delta, cap).map(|net| {
        net.into_iter()
            .map(|u| u.iter().zip(&spec.mu).map(|(ui, mu)| ui * mu.sqrt()).collect())
            .collect()
    });
    let tail = b * mf.powf(q) * (-beta * mf).exp() / beta;
    Ok(CoverCertificate {
        epsilon,
        elements,
        log_cardinality: mf * (1.0 + 8.0 * b * mf.powf(q) / epsilon).ln(),
        sup_norm_bound: b,
        delta,
        truncation_dim: Some(m),
        tail_bound: Some(tail),
    })
}

/// A random member with coefficients drawn uniformly from Θ (all stored coordinates).
pub fn sample_ellipsoid_member(spec: &EllipsoidSpec, rng: &mut Rng) -> Member {
    let u = sample_ball(rng, spec.mu.len(), 1.0);
    let theta = DVector::from_iterator(u.len(), u.iter().zip(&spec.mu).map(|(ui, mu)| ui * mu.sqrt()));
    Member::Ellipsoid { theta, basis: spec.basis }
}

/// Probe certification against random members and random points of [0, 1].
pub fn certify_ellipsoid(
    cert: &CoverCertificate,
    spec: &EllipsoidSpec,
    n_probes: usize,
    n_points: usize,
    seed: u64,
) -> Result<CertificationReport> {
    let elems = cert
        .elements
        .as_ref()
        .ok_or_else(|| Error::invalid("cover has no materialized elements"))?;
    let elements: Vec<Member> = elems
        .iter()
        .map(|t| Member::Ellipsoid { theta: DVector::from_column_slice(t), basis: spec.basis })
        .collect();
    let mut rng = rng_from_seed(seed);
    let probes: Vec<Member> = (0..n_probes).map(|_| sample_ellipsoid_member(spec, &mut rng)).collect();
    let points: Vec<DVector<f64>> = (0..n_points)
        .map(|_| DVector::from_element(1, rng.random::<f64>()))
        .collect();
    let mut report = certify(&elements, &probes, &points, cert.epsilon, 4)?;
    report.warnings.extend(norm_precondition_warning(&probes, &points, cert.epsilon)?);
    Ok(report)
}

/// The hypercontractivity constant of a truncated ellipsoid needs
/// ε ≤ inf ‖f‖_{L²}. The infimum is only seen through `members` and the
/// empirical measure on `points`, so a violation is reported, not raised.
pub fn norm_precondition_warning(members: &[Member], points: &[DVector<f64>], epsilon: f64) -> Result<Option<String>> {
    if members.is_empty() || points.is_empty() {
        return Ok(None);
    }
    let mut smallest = f64::INFINITY;
    for f in members {
        let mut s = 0.0;
        for x in points {
            s += f.eval(x)?.norm_squared();
        }
        smallest = smallest.min((s / points.len() as f64).sqrt());
    }
    Ok((epsilon > smallest).then(|| {
        format!("epsilon {epsilon} exceeds the smallest sampled L2 norm {smallest:.3e}; C_eps may not apply")
    }))
}
