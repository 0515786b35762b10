//! Closed-form constants for the truncated LDS and GLM processes.

use crate::error::{Error, Result};

/// ‖H‖τ(√d + √(2(1+β) log T))/(1−ρ): almost-sure bound on truncated LDS states.
pub fn lds_state_bound(h_opnorm: f64, tau: f64, d_x: usize, beta: f64, t_len: usize, rho: f64) -> f64 {
    h_opnorm * tau * crate::processes::default_trunc_radius(d_x, t_len, beta) / (1.0 - rho)
}

/// 108 τ⁴‖H‖⁴/((1−ρ)²μ²), with μ = λ_min(Γ_{κ−1}).
pub fn c_lds(tau: f64, h_opnorm: f64, rho: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0) || !(rho < 1.0) {
        return Err(Error::invalid("c_lds needs mu > 0 and rho < 1"));
    }
    Ok(108.0 * tau.powi(4) * h_opnorm.powi(4) / ((1.0 - rho).powi(2) * mu * mu))
}

/// 12√2‖H‖‖P⋆‖^{1/2}√d/(1−ρ): P⋆-norm bound on untruncated GLM states in L⁸.
pub fn glm_state_bound(h_opnorm: f64, p_opnorm: f64, d_x: usize, rho: f64) -> f64 {
    12.0 * std::f64::consts::SQRT_2 * h_opnorm * p_opnorm.sqrt() * (d_x as f64).sqrt() / (1.0 - rho)
}

/// 2‖P⋆‖^{1/2}‖H‖R/(1−ρ): almost-sure P⋆-norm bound on GLM states driven by noise truncated at R.
pub fn glm_truncated_state_bound(p_opnorm: f64, h_opnorm: f64, radius: f64, rho: f64) -> f64 {
    2.0 * p_opnorm.sqrt() * h_opnorm * radius / (1.0 - rho)
}

/// 4B_X̄⁴/(σ_min(H)⁴ζ⁴).
pub fn c_glm(b_xbar: f64, sigma_min_h: f64, zeta: f64) -> Result<f64> {
    if !(sigma_min_h > 0.0 && zeta > 0.0) {
        return Err(Error::invalid("c_glm needs sigma_min(H) > 0 and zeta > 0"));
    }
    Ok(4.0 * b_xbar.powi(4) / (sigma_min_h.powi(4) * zeta.powi(4)))
}
