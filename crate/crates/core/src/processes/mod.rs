//! Covariate processes: finite Markov chains, linear dynamical systems and
//! GLM dynamics, with optional truncation of the driving noise.

mod chain;
mod dynamics;
mod link;

pub use chain::{
    propagated_marginals, sample_path, simulate_finite_chain, stationary_distribution, FiniteChainSpec, Init,
};
pub use dynamics::{
    average_gramian, controllability_gramian, default_trunc_radius, gramian_sequence, simulate_glm,
    simulate_lds, stability_certificate, GlmSpec, LdsSpec, DEFAULT_TRUNC_BETA,
};
pub use link::{LinkFn, LinkTag};

pub(crate) use dynamics::visit_dynamics;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessSpec {
    FiniteChain(FiniteChainSpec),
    Lds(LdsSpec),
    Glm(GlmSpec),
}

impl ProcessSpec {
    pub fn simulate(&self, t_len: usize, seed: u64) -> Result<TrajectoryBatch> {
        match self {
            ProcessSpec::FiniteChain(s) => simulate_finite_chain(s, t_len, seed),
            ProcessSpec::Lds(s) => simulate_lds(s, t_len, seed),
            ProcessSpec::Glm(s) => simulate_glm(s, t_len, seed),
        }
    }

    pub fn d_x(&self) -> usize {
        match self {
            ProcessSpec::FiniteChain(s) => s.d_x(),
            ProcessSpec::Lds(s) => s.d_x(),
            ProcessSpec::Glm(s) => s.d_x(),
        }
    }

    pub fn d_y(&self) -> usize {
        match self {
            ProcessSpec::FiniteChain(s) => s.d_y(),
            ProcessSpec::Lds(s) => s.d_x(),
            ProcessSpec::Glm(s) => s.d_x(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ProcessSpec::FiniteChain(_) => "finite_chain",
            ProcessSpec::Lds(_) => "lds",
            ProcessSpec::Glm(_) => "glm",
        }
    }
}

/// One realized trajectory {(X_t, Y_t)}_{t<T} with its noise record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryBatch {
    pub xs: Vec<DVector<f64>>,
    pub ys: Vec<DVector<f64>>,
    /// W_t for chains, V_t (after truncation) for dynamics.
    pub noise: Vec<DVector<f64>>,
    pub seed: u64,
    pub truncated_flag: bool,
    /// Visited state indices, for finite chains.
    pub states: Option<Vec<usize>>,
    /// Maps a noise record to its additive contribution to Y_t (H for dynamics, I for chains).
    pub noise_gain: DMatrix<f64>,
    /// The draw that produced X_0 for dynamics.
    pub init_noise: Option<DVector<f64>>,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn d_x(&self) -> usize {
        self.xs.first().map_or(0, |x| x.len())
    }

    pub fn d_y(&self) -> usize {
        self.ys.first().map_or(0, |y| y.len())
    }

    /// Additive noise in Y_t: Y_t = f⋆(X_t) + target_noise(t).
    pub fn target_noise(&self, t: usize) -> DVector<f64> {
        &self.noise_gain * &self.noise[t]
    }

    /// Columns t, x_0..x_{d−1}, y_0..y_{d−1}.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.d_x()).map(|i| format!("x_{i}")));
        header.extend((0..self.d_y()).map(|i| format!("y_{i}")));
        wr.write_record(&header)?;
        for t in 0..self.len() {
            let mut row = vec![t.to_string()];
            row.extend(self.xs[t].iter().map(|v| v.to_string()));
            row.extend(self.ys[t].iter().map(|v| v.to_string()));
            wr.write_record(&row)?;
        }
        wr.flush().map_err(Error::from)
    }
}
