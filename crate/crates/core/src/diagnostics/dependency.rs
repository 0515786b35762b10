use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::processes::{propagated_marginals, FiniteChainSpec};

/// Largest horizon for which a dense dependency matrix is built.
pub const DEFAULT_DEPENDENCY_CAP: usize = 2048;

/// Above this size the operator norm switches from SVD to Lanczos.
const SVD_LIMIT: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ExactFiniteChain,
    BoundLds,
    BoundGlm,
}

/// Upper-triangular T×T matrix of Γ_ij, unit diagonal.
#[derive(Clone, Debug, Serialize)]
pub struct DependencyMatrix {
    size: usize,
    /// Row-major, full T×T storage; entries below the diagonal are zero.
    data: Vec<f64>,
    pub provenance: Provenance,
}

impl DependencyMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.size, self.size, &self.data)
    }

    /// Long format: one row (i, j, gamma) per entry with i ≤ j.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["i", "j", "gamma"])?;
        for i in 0..self.size {
            for j in i..self.size {
                wr.write_record([i.to_string(), j.to_string(), self.get(i, j).to_string()])?;
            }
        }
        wr.flush().map_err(Error::from)
    }
}

fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Γ_ij = √(2 max_{s: μ_i(s)>0} TV(P^{j−i}(s, ·), μ_j)).
///
/// Conditioning on the whole past reduces to conditioning on X_i for a Markov
/// chain, and the supremum over past events is attained at single states.
pub fn dependency_matrix_finite(spec: &FiniteChainSpec, t_len: usize, cap: usize) -> Result<DependencyMatrix> {
    if t_len == 0 {
        return Err(Error::invalid("T must be at least 1"));
    }
    if t_len > cap {
        return Err(Error::invalid(format!(
            "T = {t_len} exceeds the dependency-matrix cap {cap} (storage is O(T²))"
        )));
    }
    let k = spec.num_states();
    let marg: Vec<Vec<f64>> = propagated_marginals(spec, t_len)
        .into_iter()
        .map(|m| m.as_slice().to_vec())
        .collect();
    let mut powers: Vec<DMatrix<f64>> = Vec::with_capacity(t_len);
    let mut pk = DMatrix::identity(k, k);
    for _ in 0..t_len {
        let next = &pk * spec.transition();
        powers.push(pk);
        pk = next;
    }
    let mut data = vec![0.0; t_len * t_len];
    let mut row = vec![0.0; k];
    for i in 0..t_len {
        data[i * t_len + i] = 1.0;
        let support: Vec<usize> = (0..k).filter(|&s| marg[i][s] > 0.0).collect();
        for j in i + 1..t_len {
            let pw = &powers[j - i];
            let mut worst = 0.0f64;
            for &s in &support {
                for (c, r) in row.iter_mut().enumerate() {
                    *r = pw[(s, c)];
                }
                worst = worst.max(tv(&row, &marg[j]));
            }
            data[i * t_len + j] = (2.0 * worst).sqrt();
        }
    }
    Ok(DependencyMatrix { size: t_len, data, provenance: Provenance::ExactFiniteChain })
}

/// Largest singular value ‖Γ_dep‖.
pub fn dependency_opnorm(g: &DependencyMatrix) -> f64 {
    let m = g.to_matrix();
    if g.size <= SVD_LIMIT {
        return m.singular_values().max();
    }
    lanczos_top(&m).sqrt()
}

/// Largest eigenvalue of MᵀM by Lanczos with full reorthogonalization, applying
/// MᵀM as two mat-vecs. Power iteration stalls here: the top eigenvalues of a
/// banded-decay Γ are separated by O(1/T²).
fn lanczos_top(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    let max_steps = n.min(600);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(max_steps);
    let (mut alphas, mut betas) = (Vec::new(), Vec::new());
    let mut q = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut last = 0.0;
    for step in 0..max_steps {
        let mut w = m.tr_mul(&(m * &q));
        let a = q.dot(&w);
        w -= &q * a;
        if let Some(prev) = basis.last() {
            w -= prev * betas[step - 1];
        }
        basis.push(q.clone());
        for b in &basis {
            let c = b.dot(&w);
            w -= b * c;
        }
        alphas.push(a);
        let beta = w.norm();
        let done = beta <= 1e-14 * a.abs().max(1.0);
        if done || step % 8 == 7 || step + 1 == max_steps {
            let k = alphas.len();
            let t = DMatrix::from_fn(k, k, |i, j| match i.abs_diff(j) {
                0 => alphas[i],
                1 => betas[i.min(j)],
                _ => 0.0,
            });
            let top = t.symmetric_eigenvalues().max();
            if done || (top - last).abs() <= 1e-14 * top {
                return top;
            }
            last = top;
        }
        betas.push(beta);
        q = w / beta;
    }
    last
}

fn clamped_log(x: f64) -> f64 {
    if x > 1.0 {
        x.ln()
    } else {
        0.0
    }
}

/// 5κ + (22/(1−ρ)) log((τ²/(4μ))[B_X̄² + d_x‖H‖²/(1−ρ)]), log clamped at 0.
pub fn dependency_bound_lds(
    tau: f64,
    rho: f64,
    kappa: usize,
    h_opnorm: f64,
    mu: f64,
    b_xbar: f64,
    d_x: usize,
) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) || !(mu > 0.0) {
        return Err(Error::invalid("dependency_bound_lds needs rho in (0, 1) and mu > 0"));
    }
    let arg = tau * tau / (4.0 * mu) * (b_xbar * b_xbar + d_x as f64 * h_opnorm * h_opnorm / (1.0 - rho));
    Ok(5.0 * kappa as f64 + 22.0 / (1.0 - rho) * clamped_log(arg))
}

/// (22/(1−ρ)) log(B√d_x(B_X̄ + B_X)/(2σ_min(H))), log clamped at 0.
pub fn dependency_bound_glm(b: f64, d_x: usize, b_xbar: f64, b_x: f64, sigma_min_h: f64, rho: f64) -> Result<f64> {
    if !(sigma_min_h > 0.0) {
        return Err(Error::invalid("sigma_min(H) must be positive"));
    }
    if !(rho > 0.0 && rho < 1.0) || !(b >= 1.0) {
        return Err(Error::invalid("dependency_bound_glm needs rho in (0, 1) and B ≥ 1"));
    }
    let arg = b * (d_x as f64).sqrt() * (b_xbar + b_x) / (2.0 * sigma_min_h);
    Ok(22.0 / (1.0 - rho) * clamped_log(arg))
}
