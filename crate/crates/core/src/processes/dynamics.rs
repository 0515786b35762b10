use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{LinkFn, TrajectoryBatch};
use crate::error::{Error, Result};
use crate::linalg::{mat_from_rows, mat_to_rows, opnorm, sigma_min, spectral_radius, sym_eigenvalues};
use crate::seeds::{rng_from_seed, Rng};

/// Default truncation exponent.
pub const DEFAULT_TRUNC_BETA: f64 = 4.0;

/// R = √d + √(2(1+β) log T).
pub fn default_trunc_radius(d: usize, t_len: usize, beta: f64) -> f64 {
    (d as f64).sqrt() + (2.0 * (1.0 + beta) * (t_len.max(1) as f64).ln()).sqrt()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct LdsRaw {
    #[serde(rename = "A_star")]
    a_star: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    h: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trunc_radius: Option<f64>,
}

/// X_{t+1} = A⋆X_t + HV_t with standard Gaussian (optionally truncated) V_t.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LdsRaw", into = "LdsRaw")]
pub struct LdsSpec {
    a_star: DMatrix<f64>,
    h: DMatrix<f64>,
    trunc_radius: Option<f64>,
}

impl TryFrom<LdsRaw> for LdsSpec {
    type Error = Error;
    fn try_from(r: LdsRaw) -> Result<Self> {
        LdsSpec::new(mat_from_rows(&r.a_star, "A_star")?, mat_from_rows(&r.h, "H")?, r.trunc_radius)
    }
}

impl From<LdsSpec> for LdsRaw {
    fn from(s: LdsSpec) -> Self {
        LdsRaw { a_star: mat_to_rows(&s.a_star), h: mat_to_rows(&s.h), trunc_radius: s.trunc_radius }
    }
}

fn check_radius(r: Option<f64>) -> Result<()> {
    match r {
        Some(r) if !(r > 0.0 && r.is_finite()) => {
            Err(Error::invalid(format!("trunc_radius must be positive, got {r}")))
        }
        _ => Ok(()),
    }
}

impl LdsSpec {
    pub fn new(a_star: DMatrix<f64>, h: DMatrix<f64>, trunc_radius: Option<f64>) -> Result<Self> {
        if !a_star.is_square() || h.nrows() != a_star.nrows() {
            return Err(Error::invalid("A_star must be square and H must have d_x rows"));
        }
        let rad = spectral_radius(&a_star);
        if rad >= 1.0 {
            return Err(Error::invalid(format!(
                "A_star has spectral radius {rad:.6} >= 1; only stable systems are supported"
            )));
        }
        check_radius(trunc_radius)?;
        Ok(LdsSpec { a_star, h, trunc_radius })
    }

    pub fn scalar(a: f64, h: f64, trunc_radius: Option<f64>) -> Result<Self> {
        LdsSpec::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, h), trunc_radius)
    }

    pub fn a_star(&self) -> &DMatrix<f64> {
        &self.a_star
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn trunc_radius(&self) -> Option<f64> {
        self.trunc_radius
    }

    pub fn d_x(&self) -> usize {
        self.a_star.nrows()
    }

    pub fn with_trunc_radius(&self, r: Option<f64>) -> Result<Self> {
        check_radius(r)?;
        Ok(LdsSpec { trunc_radius: r, ..self.clone() })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GlmRaw {
    #[serde(rename = "A_star")]
    a_star: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    h: Vec<Vec<f64>>,
    link: LinkFn,
    #[serde(rename = "P_star")]
    p_star: Vec<Vec<f64>>,
    rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trunc_radius: Option<f64>,
}

/// X_{t+1} = σ(A⋆X_t) + HV_t with a user-supplied diagonal Lyapunov certificate (P⋆, ρ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GlmRaw", into = "GlmRaw")]
pub struct GlmSpec {
    a_star: DMatrix<f64>,
    h: DMatrix<f64>,
    link: LinkFn,
    p_star: DMatrix<f64>,
    rho: f64,
    trunc_radius: Option<f64>,
}

impl TryFrom<GlmRaw> for GlmSpec {
    type Error = Error;
    fn try_from(r: GlmRaw) -> Result<Self> {
        GlmSpec::new(
            mat_from_rows(&r.a_star, "A_star")?,
            mat_from_rows(&r.h, "H")?,
            r.link,
            mat_from_rows(&r.p_star, "P_star")?,
            r.rho,
            r.trunc_radius,
        )
    }
}

impl From<GlmSpec> for GlmRaw {
    fn from(s: GlmSpec) -> Self {
        GlmRaw {
            a_star: mat_to_rows(&s.a_star),
            h: mat_to_rows(&s.h),
            link: s.link,
            p_star: mat_to_rows(&s.p_star),
            rho: s.rho,
            trunc_radius: s.trunc_radius,
        }
    }
}

impl GlmSpec {
    pub fn new(
        a_star: DMatrix<f64>,
        h: DMatrix<f64>,
        link: LinkFn,
        p_star: DMatrix<f64>,
        rho: f64,
        trunc_radius: Option<f64>,
    ) -> Result<Self> {
        let d = a_star.nrows();
        if !a_star.is_square() || h.shape() != (d, d) || p_star.shape() != (d, d) {
            return Err(Error::invalid("A_star, H and P_star must all be d_x × d_x"));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::invalid(format!("rho must lie in (0, 1), got {rho}")));
        }
        for i in 0..d {
            for j in 0..d {
                let v = p_star[(i, j)];
                if i != j && v != 0.0 {
                    return Err(Error::invalid("P_star must be diagonal"));
                }
                if i == j && v < 1.0 - 1e-12 {
                    return Err(Error::invalid("P_star must dominate the identity"));
                }
            }
        }
        if sigma_min(&h) <= 0.0 {
            return Err(Error::invalid("H must have full rank"));
        }
        let gap = &p_star * rho - a_star.transpose() * &p_star * &a_star;
        let lo = sym_eigenvalues(&gap)[0];
        if lo < -1e-10 {
            return Err(Error::invalid(format!(
                "Lyapunov condition A_starᵀ P_star A_star ⪯ rho P_star fails (min eigenvalue {lo:.3e})"
            )));
        }
        link.probe()?;
        check_radius(trunc_radius)?;
        Ok(GlmSpec { a_star, h, link, p_star, rho, trunc_radius })
    }

    pub fn a_star(&self) -> &DMatrix<f64> {
        &self.a_star
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn link(&self) -> LinkFn {
        self.link
    }

    pub fn p_star(&self) -> &DMatrix<f64> {
        &self.p_star
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn trunc_radius(&self) -> Option<f64> {
        self.trunc_radius
    }

    pub fn d_x(&self) -> usize {
        self.a_star.nrows()
    }

    pub fn with_trunc_radius(&self, r: Option<f64>) -> Result<Self> {
        check_radius(r)?;
        Ok(GlmSpec { trunc_radius: r, ..self.clone() })
    }

    /// ‖x‖_{P⋆}.
    pub fn p_norm(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.p_star * x)).sqrt()
    }
}

pub(crate) fn apply_link(link: Option<LinkFn>, mut v: DVector<f64>) -> DVector<f64> {
    if let Some(l) = link {
        if !l.is_identity() {
            v.iter_mut().for_each(|x| *x = l.apply(*x));
        }
    }
    v
}

fn draw_noise(rng: &mut Rng, d: usize, radius: Option<f64>, hit: &mut bool) -> DVector<f64> {
    let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    match radius {
        Some(r) if v.norm() > r => {
            *hit = true;
            DVector::zeros(d)
        }
        _ => v,
    }
}

/// Shared simulator: X_0 = HV_init, Y_t = X_{t+1} = σ(AX_t) + HV_t.
pub(crate) fn simulate_dynamics(
    a: &DMatrix<f64>,
    h: &DMatrix<f64>,
    link: Option<LinkFn>,
    radius: Option<f64>,
    t_len: usize,
    seed: u64,
) -> Result<TrajectoryBatch> {
    if t_len == 0 {
        return Err(Error::invalid("T must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let d_v = h.ncols();
    let mut hit = false;
    let v0 = draw_noise(&mut rng, d_v, radius, &mut hit);
    let mut x = h * &v0;
    let mut xs = Vec::with_capacity(t_len);
    let mut ys = Vec::with_capacity(t_len);
    let mut noise = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        let v = draw_noise(&mut rng, d_v, radius, &mut hit);
        let y = apply_link(link, a * &x) + h * &v;
        xs.push(x);
        noise.push(v);
        x = y.clone();
        ys.push(y);
    }
    Ok(TrajectoryBatch {
        xs,
        ys,
        noise,
        seed,
        truncated_flag: hit,
        states: None,
        noise_gain: h.clone(),
        init_noise: Some(v0),
    })
}

/// Allocation-free replay of `simulate_dynamics`: the same draws in the same
/// order, handing each state X_t to `visit` as a slice.
pub(crate) fn visit_dynamics<F: FnMut(&[f64])>(
    a: &DMatrix<f64>,
    h: &DMatrix<f64>,
    link: Option<LinkFn>,
    radius: Option<f64>,
    t_len: usize,
    seed: u64,
    mut visit: F,
) {
    let mut rng = rng_from_seed(seed);
    let d = a.nrows();
    let d_v = h.ncols();
    let mut v = vec![0.0; d_v];
    let mut x = vec![0.0; d];
    let mut next = vec![0.0; d];
    let draw = |rng: &mut Rng, v: &mut [f64]| {
        let mut n2 = 0.0;
        for e in v.iter_mut() {
            *e = rng.sample::<f64, _>(StandardNormal);
            n2 += *e * *e;
        }
        if radius.is_some_and(|r| n2.sqrt() > r) {
            v.iter_mut().for_each(|e| *e = 0.0);
        }
    };
    draw(&mut rng, &mut v);
    for i in 0..d {
        x[i] = (0..d_v).map(|j| h[(i, j)] * v[j]).sum();
    }
    let nonlinear = link.filter(|l| !l.is_identity());
    for _ in 0..t_len {
        draw(&mut rng, &mut v);
        visit(&x);
        for i in 0..d {
            let mut z: f64 = (0..d).map(|j| a[(i, j)] * x[j]).sum();
            if let Some(l) = nonlinear {
                z = l.apply(z);
            }
            next[i] = z + (0..d_v).map(|j| h[(i, j)] * v[j]).sum::<f64>();
        }
        std::mem::swap(&mut x, &mut next);
    }
}

pub fn simulate_lds(spec: &LdsSpec, t_len: usize, seed: u64) -> Result<TrajectoryBatch> {
    simulate_dynamics(&spec.a_star, &spec.h, None, spec.trunc_radius, t_len, seed)
}

pub fn simulate_glm(spec: &GlmSpec, t_len: usize, seed: u64) -> Result<TrajectoryBatch> {
    simulate_dynamics(&spec.a_star, &spec.h, Some(spec.link), spec.trunc_radius, t_len, seed)
}

/// Γ_t = Σ_{k=0}^t A^k H Hᵀ (A^k)ᵀ.
pub fn controllability_gramian(a: &DMatrix<f64>, h: &DMatrix<f64>, t: usize) -> Result<DMatrix<f64>> {
    if !a.is_square() || h.nrows() != a.nrows() {
        return Err(Error::invalid("A must be square with as many rows as H"));
    }
    let hh = h * h.transpose();
    let mut g = hh.clone();
    for _ in 0..t {
        g = a * &g * a.transpose() + &hh;
    }
    Ok(g)
}

/// All gramians Γ_0, …, Γ_{T−1}.
pub fn gramian_sequence(a: &DMatrix<f64>, h: &DMatrix<f64>, t_len: usize) -> Vec<DMatrix<f64>> {
    let hh = h * h.transpose();
    let mut out = Vec::with_capacity(t_len);
    let mut g = hh.clone();
    for _ in 0..t_len {
        let next = a * &g * a.transpose() + &hh;
        out.push(g);
        g = next;
    }
    out
}

/// (1/T) Σ_{t<T} Γ_t.
pub fn average_gramian(a: &DMatrix<f64>, h: &DMatrix<f64>, t_len: usize) -> DMatrix<f64> {
    let d = a.nrows();
    let mut sum = DMatrix::zeros(d, d);
    for g in gramian_sequence(a, h, t_len) {
        sum += g;
    }
    sum / t_len.max(1) as f64
}

const STABILITY_CAP: usize = 10_000;
const DECAY_WINDOW: usize = 50;

/// Smallest τ with ‖A^k‖ ≤ τρ^k, found by scanning k until the ratio has been
/// nonincreasing for a full window after its running maximum.
pub fn stability_certificate(a: &DMatrix<f64>, rho: f64) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::invalid("A must be square"));
    }
    let rad = spectral_radius(a);
    // Equality with the spectral radius is admitted: normal matrices certify
    // with τ = 1 there, and non-normal ones fail the scan below.
    if rho < rad * (1.0 - 1e-12) || !(rho < 1.0) {
        return Err(Error::invalid(format!(
            "rho = {rho} must lie in [spectral radius {rad:.6}, 1)"
        )));
    }
    let scaled = a / rho;
    let mut power = DMatrix::identity(a.nrows(), a.ncols());
    let mut tau = 1.0f64;
    let mut prev = 1.0f64;
    let mut streak = 0usize;
    for _ in 1..=STABILITY_CAP {
        power = &scaled * &power;
        let ratio = opnorm(&power);
        if !ratio.is_finite() {
            return Err(Error::numeric("A^k/rho^k overflowed during the stability scan"));
        }
        tau = tau.max(ratio);
        if ratio <= prev * (1.0 + 1e-12) {
            streak += 1;
        } else {
            streak = 0;
        }
        prev = ratio;
        if streak >= DECAY_WINDOW && ratio < tau {
            return Ok(tau);
        }
        if streak >= DECAY_WINDOW && ratio <= 1.0 + 1e-12 && tau <= 1.0 + 1e-12 {
            return Ok(tau);
        }
    }
    Err(Error::numeric(format!(
        "stability scan did not certify a peak within k = {STABILITY_CAP}"
    )))
}

#[cfg(test)]
mod tests {
    #[test]
    fn visitor_replays_simulation() {
        let spec = GlmSpec::new(
            DMatrix::from_row_slice(2, 2, &[0.4, 0.1, -0.2, 0.3]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 0.7]),
            LinkFn::leaky_relu(0.5).unwrap(),
            DMatrix::identity(2, 2) * 2.0,
            0.6,
            Some(2.0),
        )
        .unwrap();
        let batch = simulate_glm(&spec, 200, 17).unwrap();
        let mut seen = Vec::new();
        visit_dynamics(spec.a_star(), spec.h(), Some(spec.link()), spec.trunc_radius(), 200, 17, |x| {
            seen.push(x.to_vec())
        });
        for (x, s) in batch.xs.iter().zip(&seen) {
            assert!((x - DVector::from_column_slice(s)).amax() <= 1e-14);
        }
    }

    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn empirical_cov(xs: &[DVector<f64>]) -> DMatrix<f64> {
        let d = xs[0].len();
        let mut c = DMatrix::zeros(d, d);
        for x in xs {
            c += x * x.transpose();
        }
        c / xs.len() as f64
    }

    #[test]
    fn zero_dynamics_give_iid_states() {
        let spec = LdsSpec::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2), None).unwrap();
        let b = simulate_lds(&spec, 10_000, 3).unwrap();
        let c = empirical_cov(&b.xs);
        assert!(opnorm(&(c - DMatrix::identity(2, 2))) < 0.05);
    }

    #[test]
    fn scalar_stationary_variance() {
        let spec = LdsSpec::scalar(0.5, 1.0, None).unwrap();
        let b = simulate_lds(&spec, 200_000, 9).unwrap();
        let v = empirical_cov(&b.xs)[(0, 0)];
        assert!((v / (4.0 / 3.0) - 1.0).abs() < 0.05);
    }

    #[test]
    fn targets_are_next_states_plus_recorded_noise() {
        let spec = LdsSpec::new(
            DMatrix::from_row_slice(2, 2, &[0.3, 0.2, -0.1, 0.5]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
            Some(2.0),
        )
        .unwrap();
        let b = simulate_lds(&spec, 300, 4).unwrap();
        assert_eq!(b.len(), 300);
        for t in 0..300 {
            let resid = &b.ys[t] - spec.a_star() * &b.xs[t];
            assert!((resid - b.target_noise(t)).amax() < 1e-12);
            if t + 1 < 300 {
                assert_eq!(b.ys[t], b.xs[t + 1]);
            }
        }
    }

    #[test]
    fn identity_glm_matches_lds_bitwise() {
        let a = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.0, 0.3]);
        let h = DMatrix::identity(2, 2);
        let lds = LdsSpec::new(a.clone(), h.clone(), Some(3.0)).unwrap();
        let glm = GlmSpec::new(a, h, LinkFn::identity(), DMatrix::identity(2, 2), 0.5, Some(3.0)).unwrap();
        assert_eq!(simulate_lds(&lds, 500, 77).unwrap(), simulate_glm(&glm, 500, 77).unwrap());
    }

    #[test]
    fn zero_glm_dynamics_covariance_is_hht() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 2.0]);
        let glm = GlmSpec::new(
            DMatrix::zeros(2, 2),
            h.clone(),
            LinkFn::leaky_relu(0.3).unwrap(),
            DMatrix::identity(2, 2),
            0.1,
            None,
        )
        .unwrap();
        let b = simulate_glm(&glm, 50_000, 5).unwrap();
        let c = empirical_cov(&b.xs[1..]);
        assert!(opnorm(&(c - &h * h.transpose())) < 0.1);
    }

    #[test]
    fn glm_validation() {
        let link = LinkFn::leaky_relu(0.5).unwrap();
        let i2 = DMatrix::identity(2, 2);
        // A = 0.9 I violates A'PA ⪯ 0.5 P.
        assert!(GlmSpec::new(i2.clone() * 0.9, i2.clone(), link, i2.clone(), 0.5, None).is_err());
        assert!(GlmSpec::new(i2.clone() * 0.5, DMatrix::zeros(2, 2), link, i2.clone(), 0.5, None).is_err());
        assert!(GlmSpec::new(i2.clone() * 0.5, i2.clone(), link, i2.clone() * 0.5, 0.5, None).is_err());
        assert!(GlmSpec::new(i2.clone() * 0.5, i2.clone(), link, i2.clone(), 0.25, None).is_ok());
    }

    #[test]
    fn unstable_lds_rejected() {
        assert!(LdsSpec::scalar(1.0, 1.0, None).is_err());
        assert!(LdsSpec::scalar(-1.2, 1.0, None).is_err());
    }

    #[test]
    fn gramian_examples() {
        let g = controllability_gramian(&(DMatrix::identity(2, 2) * 0.5), &DMatrix::identity(2, 2), 1).unwrap();
        assert_relative_eq!(g, DMatrix::identity(2, 2) * 1.25, epsilon = 1e-15);
        let h = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let g = controllability_gramian(&DMatrix::zeros(2, 2), &h, 7).unwrap();
        assert_relative_eq!(g, &h * h.transpose(), epsilon = 1e-15);
        let shift = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e1 = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let g = controllability_gramian(&shift, &e1, 1).unwrap();
        assert_relative_eq!(g, &e1 * e1.transpose(), epsilon = 1e-15);
    }

    #[test]
    fn stability_examples() {
        assert_relative_eq!(stability_certificate(&DMatrix::from_element(1, 1, 0.5), 0.5).unwrap(), 1.0, epsilon = 1e-12);
        let diag = DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 0.1]);
        assert_relative_eq!(stability_certificate(&diag, 0.9).unwrap(), 1.0, epsilon = 1e-12);
        let jordan = DMatrix::from_row_slice(2, 2, &[0.5, 10.0, 0.0, 0.5]);
        let tau = stability_certificate(&jordan, 0.6).unwrap();
        let mut brute = 1.0f64;
        let mut p = DMatrix::identity(2, 2);
        for k in 1..=500 {
            p = &jordan * &p;
            brute = brute.max(opnorm(&p) / 0.6f64.powi(k));
        }
        assert_relative_eq!(tau, brute, max_relative = 1e-12);
        assert!(stability_certificate(&jordan, 0.5).is_err());
        assert!(matches!(stability_certificate(&jordan, 0.4), Err(Error::Invalid(_))));
    }

    #[test]
    fn truncation_flag_rate_matches_tail_arithmetic() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let spec = LdsSpec::scalar(0.5, 1.0, Some(3.0)).unwrap();
        let n = 200;
        let hits = (0..n)
            .filter(|&r| simulate_lds(&spec, 1000, 1_000 + r).unwrap().truncated_flag)
            .count() as f64
            / n as f64;
        let q = 2.0 * (1.0 - Normal::new(0.0, 1.0).unwrap().cdf(3.0));
        let expected = 1.0 - (1.0 - q).powi(1001);
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((hits - expected).abs() <= 3.0 * se, "{hits} vs {expected}");
    }

    #[test]
    fn glm_truncated_states_respect_almost_sure_bound() {
        let r = 3.0;
        let spec = GlmSpec::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            LinkFn::leaky_relu(0.5).unwrap(),
            DMatrix::from_element(1, 1, 1.0),
            0.25,
            Some(r),
        )
        .unwrap();
        let rho = spec.rho();
        let bound = 2.0 * opnorm(spec.p_star()).sqrt() * opnorm(spec.h()) * r / (1.0 - rho);
        for seed in 0..20 {
            let b = simulate_glm(&spec, 2_000, seed).unwrap();
            assert!(b.xs.iter().all(|x| spec.p_norm(x) <= bound));
        }
    }

    proptest! {
        #[test]
        fn gramians_are_monotone(
            a in proptest::collection::vec(-0.45f64..0.45, 4),
            h in proptest::collection::vec(-2.0f64..2.0, 4),
            s in 0usize..50, gap in 0usize..50,
        ) {
            let a = DMatrix::from_row_slice(2, 2, &a);
            let h = DMatrix::from_row_slice(2, 2, &h);
            let t = (s + gap).min(50);
            let diff = controllability_gramian(&a, &h, t).unwrap() - controllability_gramian(&a, &h, s).unwrap();
            prop_assert!(sym_eigenvalues(&diff)[0] >= -1e-10);
        }

        #[test]
        fn glm_is_incrementally_stable(
            x in proptest::collection::vec(-5.0f64..5.0, 2),
            y in proptest::collection::vec(-5.0f64..5.0, 2),
        ) {
            let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
            let a = DMatrix::from_row_slice(2, 2, &[0.3, 0.4, -0.2, 0.5]);
            let spec = GlmSpec::new(a.clone(), DMatrix::identity(2, 2), LinkFn::leaky_relu(0.4).unwrap(), p, 0.7, None).unwrap();
            let (x, y) = (DVector::from_vec(x), DVector::from_vec(y));
            let fx = apply_link(Some(spec.link()), &a * &x);
            let fy = apply_link(Some(spec.link()), &a * &y);
            prop_assert!(spec.p_norm(&(fx - fy)).powi(2) <= spec.rho() * spec.p_norm(&(x - y)).powi(2) + 1e-12);
        }
    }
}
