use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::TrajectoryBatch;
use crate::error::{Error, Result};
use crate::linalg::{dvec, mat_from_rows, mat_to_rows};
use crate::seeds::rng_from_seed;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Initial law of a finite chain.
#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    Stationary,
    Distribution(Vec<f64>),
}

impl Serialize for Init {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Init::Stationary => s.serialize_str("stationary"),
            Init::Distribution(p) => p.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Init {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(String),
            Probs(Vec<f64>),
        }
        match Raw::deserialize(d)? {
            Raw::Name(n) if n == "stationary" => Ok(Init::Stationary),
            Raw::Name(n) => Err(serde::de::Error::custom(format!(
                "init must be a probability vector or \"stationary\", got {n:?}"
            ))),
            Raw::Probs(p) => Ok(Init::Distribution(p)),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ChainRaw {
    transition: Vec<Vec<f64>>,
    atoms: Vec<Vec<f64>>,
    init: Init,
    target_fn: Vec<Vec<f64>>,
    noise_std: f64,
}

/// Finite-state Markov chain on a set of atoms in R^{d_x}, with a tabulated
/// regression function and Gaussian target noise.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ChainRaw", into = "ChainRaw")]
pub struct FiniteChainSpec {
    p: DMatrix<f64>,
    atoms: Vec<DVector<f64>>,
    init: Init,
    mu0: DVector<f64>,
    stationary: Option<DVector<f64>>,
    target: Vec<DVector<f64>>,
    noise_std: f64,
}

impl TryFrom<ChainRaw> for FiniteChainSpec {
    type Error = Error;
    fn try_from(r: ChainRaw) -> Result<Self> {
        FiniteChainSpec::new(r.transition, r.atoms, r.init, r.target_fn, r.noise_std)
    }
}

impl From<FiniteChainSpec> for ChainRaw {
    fn from(s: FiniteChainSpec) -> Self {
        ChainRaw {
            transition: mat_to_rows(&s.p),
            atoms: s.atoms.iter().map(|a| a.as_slice().to_vec()).collect(),
            init: s.init,
            target_fn: s.target.iter().map(|a| a.as_slice().to_vec()).collect(),
            noise_std: s.noise_std,
        }
    }
}

impl FiniteChainSpec {
    pub fn new(
        transition: Vec<Vec<f64>>,
        atoms: Vec<Vec<f64>>,
        init: Init,
        target_fn: Vec<Vec<f64>>,
        noise_std: f64,
    ) -> Result<Self> {
        let p = mat_from_rows(&transition, "transition")?;
        let k = p.nrows();
        if p.ncols() != k {
            return Err(Error::invalid("transition matrix must be square"));
        }
        for i in 0..k {
            let row = p.row(i);
            if row.iter().any(|&v| v < 0.0) {
                return Err(Error::invalid(format!("transition row {i} has a negative entry")));
            }
            if (row.sum() - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::invalid(format!("transition row {i} does not sum to 1")));
            }
        }
        if atoms.len() != k || target_fn.len() != k {
            return Err(Error::invalid("atoms and target_fn need one entry per state"));
        }
        let d_x = atoms[0].len();
        let d_y = target_fn[0].len();
        if d_x == 0 || atoms.iter().any(|a| a.len() != d_x) {
            return Err(Error::invalid("atoms must share a nonzero dimension"));
        }
        if d_y == 0 || target_fn.iter().any(|a| a.len() != d_y) {
            return Err(Error::invalid("target_fn values must share a nonzero dimension"));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::invalid("noise_std must be finite and nonnegative"));
        }
        let (mu0, stationary) = match &init {
            Init::Stationary => {
                let pi = stationary_distribution(&p)?;
                (pi.clone(), Some(pi))
            }
            Init::Distribution(v) => {
                if v.len() != k || v.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                    return Err(Error::invalid("init must be a probability vector over the states"));
                }
                if (v.iter().sum::<f64>() - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::invalid("init does not sum to 1"));
                }
                (dvec(v), None)
            }
        };
        Ok(FiniteChainSpec {
            p,
            atoms: atoms.iter().map(|a| dvec(a)).collect(),
            init,
            mu0,
            stationary,
            target: target_fn.iter().map(|a| dvec(a)).collect(),
            noise_std,
        })
    }

    /// Two-state chain that flips with probability `p`.
    pub fn two_state(p: f64, init: Init, noise_std: f64) -> Result<Self> {
        FiniteChainSpec::new(
            vec![vec![1.0 - p, p], vec![p, 1.0 - p]],
            vec![vec![0.0], vec![1.0]],
            init,
            vec![vec![0.0], vec![1.0]],
            noise_std,
        )
    }

    /// Same chain with a different regression table.
    pub fn with_target(&self, target_fn: Vec<Vec<f64>>) -> Result<Self> {
        let raw: ChainRaw = self.clone().into();
        FiniteChainSpec::new(raw.transition, raw.atoms, raw.init, target_fn, raw.noise_std)
    }

    /// Same chain with a different observation noise level.
    pub fn with_noise_std(&self, noise_std: f64) -> Result<Self> {
        let raw: ChainRaw = self.clone().into();
        FiniteChainSpec::new(raw.transition, raw.atoms, raw.init, raw.target_fn, noise_std)
    }

    pub fn num_states(&self) -> usize {
        self.p.nrows()
    }

    pub fn d_x(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn d_y(&self) -> usize {
        self.target[0].len()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn atoms(&self) -> &[DVector<f64>] {
        &self.atoms
    }

    pub fn init(&self) -> &Init {
        &self.init
    }

    /// The resolved law of X_0.
    pub fn initial_law(&self) -> &DVector<f64> {
        &self.mu0
    }

    pub fn target_fn(&self) -> &[DVector<f64>] {
        &self.target
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// The stationary law; computed on demand when the chain was not started there.
    pub fn stationary(&self) -> Result<DVector<f64>> {
        match &self.stationary {
            Some(pi) => Ok(pi.clone()),
            None => stationary_distribution(&self.p),
        }
    }

    /// Index of the atom equal to `x` (to 1e-12), if any.
    pub fn atom_index(&self, x: &DVector<f64>) -> Option<usize> {
        self.atoms
            .iter()
            .position(|a| a.len() == x.len() && (a - x).amax() <= 1e-12)
    }
}

/// Stationary law of a row-stochastic matrix: null space of (Pᵀ − I) by SVD,
/// falling back to lazy power iteration when the residual is poor.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let k = p.nrows();
    let m = p.transpose() - DMatrix::identity(k, k);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("svd computed with v_t");
    let null: Vec<usize> = (0..k)
        .filter(|&i| svd.singular_values[i] <= 1e-10)
        .collect();
    if null.len() > 1 {
        return Err(Error::invalid(
            "chain is reducible: stationary distribution is not unique",
        ));
    }
    let residual = |pi: &DVector<f64>| (p.transpose() * pi - pi).amax();
    if let [i] = null[..] {
        let mut pi: DVector<f64> = v_t.row(i).transpose();
        let s = pi.sum();
        if s.abs() > 1e-300 {
            pi /= s;
            if pi.iter().all(|&x| x > -1e-12) {
                pi.iter_mut().for_each(|x| *x = x.max(0.0));
                pi /= pi.sum();
                if residual(&pi) <= 1e-12 {
                    return Ok(pi);
                }
            }
        }
    }
    // Lazy chain (P + I)/2 shares π and is aperiodic.
    let mut pi = DVector::from_element(k, 1.0 / k as f64);
    for _ in 0..1_000_000 {
        let next = (p.transpose() * &pi + &pi) * 0.5;
        let delta = (&next - &pi).amax();
        pi = next;
        if delta < 1e-15 {
            break;
        }
    }
    pi /= pi.sum();
    if residual(&pi) > 1e-10 {
        return Err(Error::numeric("stationary distribution did not converge"));
    }
    Ok(pi)
}

pub fn simulate_finite_chain(spec: &FiniteChainSpec, t_len: usize, seed: u64) -> Result<TrajectoryBatch> {
    if t_len == 0 {
        return Err(Error::invalid("T must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let k = spec.num_states();
    let d_y = spec.d_y();
    let draw = |rng: &mut crate::seeds::Rng, law: &[f64]| -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &w) in law.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        // Rounding left u above the cumulative sum: take the last state with mass.
        law.iter().rposition(|&w| w > 0.0).unwrap_or(k - 1)
    };
    let mut states = Vec::with_capacity(t_len);
    let mut xs = Vec::with_capacity(t_len);
    let mut ys = Vec::with_capacity(t_len);
    let mut noise = Vec::with_capacity(t_len);
    let mut s = draw(&mut rng, spec.initial_law().as_slice());
    for t in 0..t_len {
        if t > 0 {
            let row: Vec<f64> = spec.transition().row(s).iter().copied().collect();
            s = draw(&mut rng, &row);
        }
        let w = DVector::from_fn(d_y, |_, _| {
            let z: f64 = rng.sample(StandardNormal);
            spec.noise_std() * z
        });
        states.push(s);
        xs.push(spec.atoms()[s].clone());
        ys.push(&spec.target_fn()[s] + &w);
        noise.push(w);
    }
    Ok(TrajectoryBatch {
        xs,
        ys,
        noise,
        seed,
        truncated_flag: false,
        states: Some(states),
        noise_gain: DMatrix::identity(d_y, d_y),
        init_noise: None,
    })
}

/// State path only, without observation noise. Cheaper than a full batch for
/// Monte Carlo checks that look at states alone.
pub fn sample_path(spec: &FiniteChainSpec, t_len: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    let cum = |law: Vec<f64>| -> Vec<f64> {
        law.iter()
            .scan(0.0, |acc, &w| {
                *acc += w;
                Some(*acc)
            })
            .collect()
    };
    let init = cum(spec.initial_law().iter().copied().collect());
    let rows: Vec<Vec<f64>> = (0..spec.num_states())
        .map(|i| cum(spec.transition().row(i).iter().copied().collect()))
        .collect();
    let draw = |rng: &mut crate::seeds::Rng, c: &[f64]| -> usize {
        let u: f64 = rng.random();
        c.iter().position(|&a| u < a).unwrap_or_else(|| {
            // Rounding: fall back to the last state with mass.
            let mut k = c.len() - 1;
            while k > 0 && c[k] == c[k - 1] {
                k -= 1;
            }
            k
        })
    };
    let mut path = Vec::with_capacity(t_len);
    let mut s = draw(&mut rng, &init);
    for t in 0..t_len {
        if t > 0 {
            s = draw(&mut rng, &rows[s]);
        }
        path.push(s);
    }
    path
}

/// Marginal laws μ_0, …, μ_{T−1} of the chain.
pub fn propagated_marginals(spec: &FiniteChainSpec, t_len: usize) -> Vec<DVector<f64>> {
    let pt = spec.transition().transpose();
    let mut out = Vec::with_capacity(t_len);
    let mut mu = spec.initial_law().clone();
    for _ in 0..t_len {
        let next = &pt * &mu;
        out.push(mu);
        mu = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn absorbing_single_state() {
        let spec =
            FiniteChainSpec::new(vec![vec![1.0]], vec![vec![3.0]], Init::Stationary, vec![vec![0.0]], 0.0)
                .unwrap();
        let b = simulate_finite_chain(&spec, 5, 1).unwrap();
        assert!(b.xs.iter().all(|x| x[0] == 3.0));
        assert!(b.ys.iter().all(|y| y[0] == 0.0));
    }

    #[test]
    fn symmetric_chain_frequencies() {
        let spec = FiniteChainSpec::two_state(0.5, Init::Stationary, 0.0).unwrap();
        let b = simulate_finite_chain(&spec, 10_000, 11).unwrap();
        let ones = b.states.unwrap().iter().filter(|&&s| s == 1).count() as f64 / 1e4;
        assert!((ones - 0.5).abs() < 0.02);
    }

    #[test]
    fn two_state_marginals_match_closed_form() {
        let spec = FiniteChainSpec::two_state(0.25, Init::Distribution(vec![1.0, 0.0]), 0.0).unwrap();
        for (k, mu) in propagated_marginals(&spec, 30).iter().enumerate() {
            assert_relative_eq!(mu[0], (1.0 + 0.5f64.powi(k as i32)) / 2.0, epsilon = 1e-14);
            assert!((mu.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_init_is_invariant() {
        let spec = FiniteChainSpec::new(
            vec![vec![0.1, 0.6, 0.3], vec![0.4, 0.4, 0.2], vec![0.5, 0.0, 0.5]],
            vec![vec![0.0], vec![1.0], vec![2.0]],
            Init::Stationary,
            vec![vec![1.0], vec![0.0], vec![-1.0]],
            0.1,
        )
        .unwrap();
        let pi = spec.stationary().unwrap();
        assert!((spec.transition().transpose() * &pi - &pi).amax() < 1e-10);
        for mu in propagated_marginals(&spec, 20) {
            assert!((mu - &pi).amax() < 1e-12);
        }
    }

    #[test]
    fn cycle_rotates_point_mass() {
        let spec = FiniteChainSpec::new(
            vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]],
            vec![vec![0.0], vec![1.0], vec![2.0]],
            Init::Distribution(vec![1.0, 0.0, 0.0]),
            vec![vec![0.0]; 3],
            0.0,
        )
        .unwrap();
        for (t, mu) in propagated_marginals(&spec, 7).iter().enumerate() {
            assert_eq!(mu[t % 3], 1.0);
        }
        // The periodic chain still has a unique stationary law.
        assert!((spec.stationary().unwrap() - DVector::from_element(3, 1.0 / 3.0)).amax() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let bad = FiniteChainSpec::new(
            vec![vec![0.5, 0.6], vec![0.5, 0.5]],
            vec![vec![0.0], vec![1.0]],
            Init::Distribution(vec![1.0, 0.0]),
            vec![vec![0.0], vec![1.0]],
            0.0,
        );
        assert!(matches!(bad, Err(Error::Invalid(_))));
        let reducible = FiniteChainSpec::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.0], vec![1.0]],
            Init::Stationary,
            vec![vec![0.0], vec![1.0]],
            0.0,
        );
        assert!(matches!(reducible, Err(Error::Invalid(_))));
    }

    #[test]
    fn json_roundtrip() {
        let json = r#"{"transition":[[0.75,0.25],[0.25,0.75]],"atoms":[[0.0],[1.0]],
            "init":"stationary","target_fn":[[1.0],[-1.0]],"noise_std":0.5}"#;
        let spec: FiniteChainSpec = serde_json::from_str(json).unwrap();
        assert_relative_eq!(spec.initial_law()[0], 0.5, epsilon = 1e-12);
        let again: FiniteChainSpec =
            serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(again.transition(), spec.transition());
        assert_eq!(again.init(), &Init::Stationary);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let spec = FiniteChainSpec::two_state(0.3, Init::Stationary, 1.0).unwrap();
        let a = simulate_finite_chain(&spec, 200, 5).unwrap();
        let b = simulate_finite_chain(&spec, 200, 5).unwrap();
        assert_eq!(a, b);
    }
}
