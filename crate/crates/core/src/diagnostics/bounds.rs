use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Terms of the excess-risk bound 8 E M_T + r² + B²|F_r| exp(−T r^{4−2α}/(8C‖Γ‖²)).
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub em_t: f64,
    pub r: f64,
    pub union_term: f64,
    pub total: f64,
    pub b: f64,
    pub log_card: f64,
    pub c: f64,
    pub alpha: f64,
    pub gamma_opnorm: f64,
    pub t_len: usize,
}

/// Evaluates the union term in log space so that huge covers do not overflow.
pub fn main_bound(
    em_t: f64,
    r: f64,
    b: f64,
    log_card: f64,
    c: f64,
    alpha: f64,
    gamma_opnorm: f64,
    t_len: usize,
) -> Result<BoundReport> {
    if !(1.0..=2.0).contains(&alpha) {
        return Err(Error::invalid("alpha must lie in [1, 2]"));
    }
    if !(r > 0.0 && r <= b) {
        return Err(Error::invalid("r must lie in (0, B]"));
    }
    if !(c > 0.0) || !(gamma_opnorm > 0.0) || log_card < 0.0 {
        return Err(Error::invalid("C and the dependency norm must be positive, log|F_r| nonnegative"));
    }
    let exponent = -(t_len as f64) * r.powf(4.0 - 2.0 * alpha) / (8.0 * c * gamma_opnorm * gamma_opnorm);
    let union_term = (2.0 * b.ln() + log_card + exponent).exp();
    Ok(BoundReport {
        em_t,
        r,
        union_term,
        total: 8.0 * em_t + r * r + union_term,
        b,
        log_card,
        c,
        alpha,
        gamma_opnorm,
        t_len,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainingOpts {
    pub n_gamma: usize,
    pub n_delta: usize,
    /// The grids span [lower·scale, scale].
    pub lower: f64,
    pub rel_tol: f64,
}

impl Default for ChainingOpts {
    fn default() -> Self {
        ChainingOpts { n_gamma: 64, n_delta: 64, lower: 1e-6, rel_tol: 1e-13 }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChainingResult {
    pub value: f64,
    pub gamma: f64,
    pub delta: f64,
}

/// Largest u used for the δ = 0 integral; beyond it 1/s overflows. The
/// neglected piece ∫_0^{γe^{−690}} is negligible unless logN(s) grows like
/// s^{−q} with q close to 2.
const U_MAX: f64 = 690.0;

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

fn simpson_step<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // Below ~1e-15 relative the difference is roundoff and halving never converges.
    if depth == 0 || delta.abs() <= 15.0 * tol || delta.abs() <= 1e-15 * (left + right).abs() {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature on [a, b].
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fb, fm) = (f(a), f(b), f(m));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, fa, b, fb, m, fm, whole, tol, 18)
}

/// ∫_δ^γ √logN(s) ds, substituting s = γe^{−u} to resolve the singularity at 0.
pub fn entropy_integral<F: Fn(f64) -> f64>(log_cover: &F, delta: f64, gamma: f64, rel_tol: f64) -> f64 {
    if delta >= gamma {
        return 0.0;
    }
    let u_max = if delta > 0.0 { (gamma / delta).ln() } else { U_MAX };
    let g = |u: f64| {
        let s = gamma * (-u).exp();
        if s <= 0.0 {
            0.0
        } else {
            log_cover(s).max(0.0).sqrt() * s
        }
    };
    // Split so the adaptive rule sees the decaying tail at several scales.
    let mut cuts = vec![0.0];
    let mut x = 1.0;
    while x < u_max {
        cuts.push(x);
        x *= 2.0;
    }
    cuts.push(u_max);
    let scale = (log_cover(gamma).max(0.0).sqrt() * gamma).max(f64::MIN_POSITIVE);
    cuts.windows(2).map(|w| adaptive_simpson(g, w[0], w[1], rel_tol * scale)).sum()
}

/// Grid infimum over γ ∈ [lower·scale, scale] and δ ∈ {0} ∪ [lower·scale, γ] of
/// σ²logN(γ)/T + σ√d_y·δ + (σ/√T)∫_δ^γ √logN(s) ds.
pub fn chaining_bound<F: Fn(f64) -> f64>(
    log_cover: F,
    sigma_w: f64,
    t_len: usize,
    d_y: usize,
    scale: f64,
    opts: &ChainingOpts,
) -> Result<ChainingResult> {
    if !(scale > 0.0) || !(sigma_w >= 0.0) || t_len == 0 {
        return Err(Error::invalid("chaining_bound needs scale > 0, sigma_w ≥ 0, T ≥ 1"));
    }
    if opts.n_gamma < 2 || opts.n_delta < 2 {
        return Err(Error::invalid("chaining grids need at least two points"));
    }
    let lo = opts.lower * scale;
    let gammas = log_grid(lo, scale, opts.n_gamma);
    let probe: Vec<f64> = gammas.iter().map(|&g| log_cover(g)).collect();
    if probe.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12) + 1e-300) {
        return Err(Error::invalid("log covering number must be nonincreasing in epsilon"));
    }
    let t = t_len as f64;
    let mut best = ChainingResult { value: f64::INFINITY, gamma: scale, delta: 0.0 };
    for (&gamma, &lg) in gammas.iter().zip(&probe) {
        let mut deltas = vec![0.0];
        deltas.extend(log_grid(lo, gamma, opts.n_delta - 1));
        for delta in deltas {
            let value = sigma_w * sigma_w * lg / t
                + sigma_w * (d_y as f64).sqrt() * delta
                + sigma_w / t.sqrt() * entropy_integral(&log_cover, delta, gamma, opts.rel_tol);
            if value < best.value {
                best = ChainingResult { value, gamma, delta };
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BurnInParams {
    /// log N_∞(ε) ≤ p(1/ε)^q with r² ≍ T^{−2/(2+q)+γ}.
    Nonparametric { p: f64, q: f64, gamma: f64, c: f64, gamma_opnorm_sq: f64, b: f64 },
    /// log|F_r| ≤ p log^q(1/r), ‖Γ‖² ≤ T^{b1}, C(r) ≤ r^{−b2}.
    Parametric { p: f64, q: f64, b1: f64, b2: f64, gamma: f64, alpha: f64, b: f64 },
    Lds { tau: f64, h_opnorm: f64, d_x: usize, rho: f64, mu: f64, kappa: f64 },
    Glm { p_opnorm: f64, cond_h: f64, d_x: usize, zeta: f64, rho: f64 },
    /// The α = 1 case driven by boundedness alone.
    Alpha1 { p: f64, q: f64, b: f64, gamma_opnorm: f64 },
}

/// Coefficients of the α = 1 risk bound
/// 8 E M_T + second·T^{−2/(2+q)} + prefactor·exp(rate·T^{q/(2+q)}),
/// obtained from the main bound with C = B², α = 1 and r = c T^{−1/(2+q)}.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Alpha1Terms {
    pub c: f64,
    /// c², the r² coefficient.
    pub second_coef: f64,
    /// (1/√8)(16B²p‖Γ‖²)^{2/q}, in its usual stated form.
    pub second_coef_quoted: f64,
    /// p(√8/c)^q − c²/(8B²‖Γ‖²), the exponent rate the union term actually has.
    pub third_rate: f64,
    /// −1/(16B²‖Γ‖²), in its usual stated form. The stated c does not produce it.
    pub third_rate_quoted: f64,
    /// B², carried by the union term; the stated form drops it.
    pub third_prefactor: f64,
}

impl Alpha1Terms {
    pub fn second(&self, t_len: usize, q: f64) -> f64 {
        self.second_coef * (t_len as f64).powf(-2.0 / (2.0 + q))
    }

    pub fn third(&self, t_len: usize, q: f64) -> f64 {
        self.third_prefactor * (self.third_rate * (t_len as f64).powf(q / (2.0 + q))).exp()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BurnInReport {
    /// Smallest admissible T, when the formula defines one.
    pub t_min: Option<f64>,
    pub label: &'static str,
    pub alpha1: Option<Alpha1Terms>,
}

const VARIABLE_PART: &str = "variable part, up to universal constant";

pub fn burn_in(params: &BurnInParams) -> Result<BurnInReport> {
    let exact = |t: f64| Ok(BurnInReport { t_min: Some(t), label: "explicit", alpha1: None });
    match *params {
        BurnInParams::Nonparametric { p, q, gamma, c, gamma_opnorm_sq, b } => {
            if !(q > 0.0 && q < 2.0) || !(gamma >= 0.0) || !(c > 0.0) || b < 1.0 {
                return Err(Error::invalid("nonparametric burn-in needs q in (0, 2), gamma ≥ 0, C > 0, B ≥ 1"));
            }
            let e = 0.5 * q * (2.0 / (2.0 + q) + gamma);
            if e >= 1.0 {
                return Err(Error::invalid("growth conditions unsatisfiable: (q/2)(2/(2+q) + gamma) ≥ 1"));
            }
            let t1 = (8.0 * (32.0 * p + 1.0) * c * gamma_opnorm_sq).powf(1.0 / (1.0 - e));
            let t2 = (b.ln() + 4.0 / q * (8.0 / q).ln()).powf(1.0 / e);
            exact(t1.max(t2))
        }
        BurnInParams::Parametric { p, q, b1, b2, gamma, alpha, b } => {
            let psi = 1.0 - b1 - (1.0 + gamma) * (4.0 - 2.0 * alpha + b2) / 2.0;
            if psi <= 0.0 {
                return Err(Error::invalid(format!("growth conditions unsatisfiable: psi = {psi} ≤ 0")));
            }
            if !(p > 0.0 && q >= 1.0) || b < 1.0 {
                return Err(Error::invalid("parametric burn-in needs p > 0, q ≥ 1, B ≥ 1"));
            }
            let base = (128.0 * p).powf(1.0 / psi);
            let t1 = (base * 8f64.ln().powf(q / psi))
                .max(base * (4.0 * q / psi * ((128.0 * p).powf(1.0 / q) * 8.0 * q / psi).ln()).powf(q / psi));
            let t2 = (512.0 * b.ln())
                .powf(1.0 / psi)
                .max((1024.0 / psi * (2056.0 / psi).ln()).powf(1.0 / psi));
            exact(t1.max(t2))
        }
        BurnInParams::Lds { tau, h_opnorm, d_x, rho, mu, kappa } => {
            if !(rho > 0.0 && rho < 1.0) || !(mu > 0.0) {
                return Err(Error::invalid("LDS burn-in needs rho in (0, 1) and mu > 0"));
            }
            let d = d_x as f64;
            let lead = tau.powi(4) * h_opnorm.powi(4) * d * d / ((1.0 - rho).powi(2) * mu * mu);
            let t = lead * (kappa * kappa).max(1.0 / (1.0 - rho).powi(2));
            Ok(BurnInReport { t_min: Some(t), label: VARIABLE_PART, alpha1: None })
        }
        BurnInParams::Glm { p_opnorm, cond_h, d_x, zeta, rho } => {
            if !(rho > 0.0 && rho < 1.0) || !(zeta > 0.0) {
                return Err(Error::invalid("GLM burn-in needs rho in (0, 1) and zeta > 0"));
            }
            let t = p_opnorm.powi(2) * cond_h.powi(4) * (d_x as f64).powi(4) / (zeta.powi(4) * (1.0 - rho).powi(6));
            Ok(BurnInReport { t_min: Some(t), label: VARIABLE_PART, alpha1: None })
        }
        BurnInParams::Alpha1 { p, q, b, gamma_opnorm } => {
            if !(q > 0.0 && q < 2.0) || !(p > 0.0) {
                return Err(Error::invalid("alpha1 terms need p > 0 and q in (0, 2)"));
            }
            let inner = 16.0 * b * b * p * gamma_opnorm * gamma_opnorm;
            let c = inner.powf(1.0 / q) / 8f64.sqrt();
            let g2 = gamma_opnorm * gamma_opnorm;
            Ok(BurnInReport {
                t_min: None,
                label: "alpha = 1 risk-bound coefficients",
                alpha1: Some(Alpha1Terms {
                    c,
                    second_coef: c * c,
                    second_coef_quoted: inner.powf(2.0 / q) / 8f64.sqrt(),
                    third_rate: p * (8f64.sqrt() / c).powf(q) - c * c / (8.0 * b * b * g2),
                    third_rate_quoted: -1.0 / (16.0 * b * b * g2),
                    third_prefactor: b * b,
                }),
            })
        }
    }
}
