//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use littlemix::processes::{FiniteChainSpec, Init};

/// Small chains used for exactness checks, each with the horizon at which the
/// full path space (k^T paths) stays enumerable.
pub fn chain_corpus() -> Vec<(&'static str, FiniteChainSpec, usize)> {
    let scalar = |k: usize| (0..k).map(|s| vec![s as f64]).collect::<Vec<_>>();
    vec![
        ("two_state_p025_stationary", FiniteChainSpec::two_state(0.25, Init::Stationary, 1.0).unwrap(), 16),
        ("two_state_p005_stationary", FiniteChainSpec::two_state(0.05, Init::Stationary, 1.0).unwrap(), 16),
        (
            "two_state_asymmetric_point_init",
            FiniteChainSpec::new(
                vec![vec![0.9, 0.1], vec![0.3, 0.7]],
                scalar(2),
                Init::Distribution(vec![1.0, 0.0]),
                scalar(2),
                1.0,
            )
            .unwrap(),
            14,
        ),
        (
            "three_state_lazy_cycle",
            FiniteChainSpec::new(
                vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5]],
                scalar(3),
                Init::Distribution(vec![0.6, 0.3, 0.1]),
                scalar(3),
                1.0,
            )
            .unwrap(),
            9,
        ),
        (
            "three_state_stationary",
            FiniteChainSpec::new(
                vec![vec![0.2, 0.7, 0.1], vec![0.4, 0.4, 0.2], vec![0.1, 0.3, 0.6]],
                scalar(3),
                Init::Stationary,
                scalar(3),
                1.0,
            )
            .unwrap(),
            9,
        ),
        (
            "four_state_sparse_init",
            FiniteChainSpec::new(
                vec![
                    vec![0.7, 0.1, 0.1, 0.1],
                    vec![0.2, 0.5, 0.2, 0.1],
                    vec![0.0, 0.3, 0.4, 0.3],
                    vec![0.25, 0.25, 0.25, 0.25],
                ],
                scalar(4),
                Init::Distribution(vec![0.5, 0.5, 0.0, 0.0]),
                scalar(4),
                1.0,
            )
            .unwrap(),
            7,
        ),
        (
            "four_state_stationary",
            FiniteChainSpec::new(
                vec![
                    vec![0.1, 0.6, 0.2, 0.1],
                    vec![0.3, 0.1, 0.5, 0.1],
                    vec![0.2, 0.2, 0.2, 0.4],
                    vec![0.6, 0.1, 0.1, 0.2],
                ],
                scalar(4),
                Init::Stationary,
                scalar(4),
                1.0,
            )
            .unwrap(),
            7,
        ),
    ]
}

/// Γ entries agree to 1e-12, or their squares (the TV scale) agree to 1e-12
/// near zero, where the square root would amplify roundoff in the oracle.
pub fn gamma_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 || (a * a - b * b).abs() <= 1e-12
}

/// Probability of every path of length `t_len`, indexed by the base-k code
/// Σ_t x_t k^{T−1−t} (first state most significant).
pub fn path_probabilities(spec: &FiniteChainSpec, t_len: usize) -> Vec<f64> {
    let k = spec.num_states();
    let p = spec.transition();
    let mut probs: Vec<f64> = spec.initial_law().iter().copied().collect();
    for _ in 1..t_len {
        let mut next = vec![0.0; probs.len() * k];
        for (code, pr) in probs.iter().enumerate() {
            let last = code % k;
            for s in 0..k {
                next[code * k + s] = pr * p[(last, s)];
            }
        }
        probs = next;
    }
    probs
}

/// joint[h][f]: probability of history x_0..=x_i equal to h and future block
/// x_j..x_{T−1} equal to f.
fn history_future_joint(probs: &[f64], k: usize, t_len: usize, i: usize, j: usize) -> Vec<Vec<f64>> {
    let n_hist = k.pow(i as u32 + 1);
    let n_fut = k.pow((t_len - j) as u32);
    let hist_div = k.pow((t_len - 1 - i) as u32);
    let mut joint = vec![vec![0.0; n_fut]; n_hist];
    for (code, pr) in probs.iter().enumerate() {
        joint[code / hist_div][code % n_fut] += pr;
    }
    joint
}

fn tv_to(law: &[f64], mass: f64, uncond: &[f64]) -> f64 {
    0.5 * law.iter().zip(uncond).map(|(a, b)| (a / mass - b).abs()).sum::<f64>()
}

/// Γ_ij² = 2 max over histories x_0..=x_i of positive probability of the TV
/// distance between the law of the whole future block X_j..X_{T−1} given the
/// history and its unconditional law. No Markov reduction is used.
pub fn brute_force_gamma(spec: &FiniteChainSpec, t_len: usize) -> Vec<Vec<f64>> {
    let k = spec.num_states();
    let probs = path_probabilities(spec, t_len);
    let mut g = vec![vec![0.0; t_len]; t_len];
    for i in 0..t_len {
        g[i][i] = 1.0;
        for j in i + 1..t_len {
            let joint = history_future_joint(&probs, k, t_len, i, j);
            let mut uncond = vec![0.0; joint[0].len()];
            for row in &joint {
                for (u, v) in uncond.iter_mut().zip(row) {
                    *u += v;
                }
            }
            let worst = joint
                .iter()
                .map(|row| (row, row.iter().sum::<f64>()))
                .filter(|(_, m)| *m > 0.0)
                .map(|(row, m)| tv_to(row, m, &uncond))
                .fold(0.0, f64::max);
            g[i][j] = (2.0 * worst).sqrt();
        }
    }
    g
}

/// Same quantity with the supremum taken over every event of σ(X_0..X_i),
/// i.e. every nonempty set of positive-probability histories. Exponential in
/// the number of histories, so tiny chains only.
pub fn brute_force_gamma_events(spec: &FiniteChainSpec, t_len: usize) -> Vec<Vec<f64>> {
    let k = spec.num_states();
    let probs = path_probabilities(spec, t_len);
    let mut g = vec![vec![0.0; t_len]; t_len];
    for i in 0..t_len {
        g[i][i] = 1.0;
        for j in i + 1..t_len {
            let joint = history_future_joint(&probs, k, t_len, i, j);
            let hists: Vec<&Vec<f64>> = joint.iter().filter(|r| r.iter().sum::<f64>() > 0.0).collect();
            assert!(hists.len() <= 16, "event enumeration is limited to 16 histories");
            let n_fut = joint[0].len();
            let mut uncond = vec![0.0; n_fut];
            for row in &hists {
                for (u, v) in uncond.iter_mut().zip(row.iter()) {
                    *u += v;
                }
            }
            let mut worst = 0.0f64;
            for mask in 1u32..(1 << hists.len()) {
                let mut law = vec![0.0; n_fut];
                for (b, row) in hists.iter().enumerate() {
                    if mask & (1 << b) != 0 {
                        for (l, v) in law.iter_mut().zip(row.iter()) {
                            *l += v;
                        }
                    }
                }
                let mass: f64 = law.iter().sum();
                worst = worst.max(tv_to(&law, mass, &uncond));
            }
            g[i][j] = (2.0 * worst).sqrt();
        }
    }
    g
}
