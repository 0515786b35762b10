//! Invariants checked on random instances.

use littlemix::diagnostics::*;
use littlemix::estimators::{empirical_risk, lse_linear};
use littlemix::hypotheses::Member;
use littlemix::processes::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn stochastic_rows(k: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.05f64..1.0, k), k).prop_map(|rows| {
        rows.into_iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            })
            .collect()
    })
}

fn random_chain() -> impl Strategy<Value = FiniteChainSpec> {
    (2usize..=4).prop_flat_map(stochastic_rows).prop_map(|p| {
        let k = p.len();
        let scalar: Vec<Vec<f64>> = (0..k).map(|s| vec![s as f64]).collect();
        FiniteChainSpec::new(p, scalar.clone(), Init::Stationary, scalar, 1.0).unwrap()
    })
}

/// Stable d×d matrix: random entries rescaled to spectral norm `norm` < 1.
fn stable_matrix(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (prop::collection::vec(-1.0f64..1.0, d * d), 0.0f64..0.95).prop_map(move |(v, norm)| {
        let m = DMatrix::from_vec(d, d, v);
        let s = m.singular_values().max();
        if s > 0.0 {
            m * (norm / s)
        } else {
            m
        }
    })
}

fn random_lds() -> impl Strategy<Value = LdsSpec> {
    (1usize..=3).prop_flat_map(|d| (stable_matrix(d), prop::collection::vec(-1.0f64..1.0, d * d))).prop_map(|(a, h)| {
        let d = a.nrows();
        let h = DMatrix::from_vec(d, d, h) + DMatrix::identity(d, d) * 0.5;
        LdsSpec::new(a, h, None).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dependency_opnorm_is_between_one_and_t(spec in random_chain(), t_len in 2usize..40) {
        let g = dependency_matrix_finite(&spec, t_len, DEFAULT_DEPENDENCY_CAP).unwrap();
        let norm = dependency_opnorm(&g);
        prop_assert!(norm >= 1.0 - 1e-12 && norm <= t_len as f64 + 1e-12);
        let off_diag_zero = (0..t_len).all(|i| (i + 1..t_len).all(|j| g.get(i, j) == 0.0));
        prop_assert_eq!(off_diag_zero, (norm - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn same_seed_gives_identical_trajectories(spec in random_lds(), t_len in 1usize..200, seed in any::<u64>()) {
        let a = simulate_lds(&spec, t_len, seed).unwrap();
        let b = simulate_lds(&spec, t_len, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn projection_lands_on_the_ball_boundary(spec in random_lds(), b in 0.01f64..2.0, seed in any::<u64>()) {
        let batch = simulate_lds(&spec, 60, seed).unwrap();
        let fit = lse_linear(&batch, b).unwrap();
        let norm = fit.parameter.matrix().unwrap().norm();
        if fit.optimizer_trace.projection_active {
            prop_assert!((norm - b).abs() <= 1e-9 * b.max(1.0));
        } else {
            prop_assert!(norm <= b + 1e-12);
        }
    }

    #[test]
    fn unconstrained_lse_dominates_the_truth(spec in random_lds(), seed in any::<u64>()) {
        let batch = simulate_lds(&spec, 80, seed).unwrap();
        let fit = lse_linear(&batch, 1e6).unwrap();
        prop_assert!(!fit.optimizer_trace.projection_active);
        let truth = Member::Linear(spec.a_star().clone());
        let star = empirical_risk(&batch, &truth).unwrap();
        prop_assert!(fit.empirical_risk <= star + 1e-9 * star.max(1.0));
    }

    #[test]
    fn unconstrained_complexity_dominates_the_ball(spec in random_lds(), b in 0.05f64..3.0, seed in any::<u64>()) {
        let batch = simulate_lds(&spec, 50, seed).unwrap();
        let d = spec.d_x();
        let family = littlemix::hypotheses::HypothesisSpec::LinearBall { b: b + spec.a_star().norm(), d_x: d, d_y: d };
        let truth = Member::Linear(spec.a_star().clone());
        let general = martingale_complexity_general(&batch, &family, &truth, &Default::default()).unwrap();
        let linear = martingale_complexity_linear(&batch).unwrap();
        prop_assert!(linear + 1e-9 * linear.max(1.0) >= general, "linear {} < ball {}", linear, general);
    }

    #[test]
    fn chaining_is_monotone_in_t_and_sigma(
        p in 0.1f64..5.0,
        q in 0.2f64..1.5,
        sigma in 0.1f64..3.0,
        t_len in 4usize..5000,
    ) {
        let opts = ChainingOpts { n_gamma: 16, n_delta: 16, ..Default::default() };
        let at = |s: f64, t: usize| chaining_bound(|e| p * e.powf(-q), s, t, 1, 1.0, &opts).unwrap().value;
        let base = at(sigma, t_len);
        prop_assert!(at(sigma, 2 * t_len) <= base * (1.0 + 1e-12));
        prop_assert!(at(1.5 * sigma, t_len) >= base * (1.0 - 1e-12));
    }
}

/// logN(ε) = d² log(1 + c/ε) gives a value of order d²/T up to logs. With a
/// large c the log factor is nearly flat over the grid.
#[test]
fn parametric_entropy_gives_inverse_t_slope() {
    for d in [1.0f64, 2.0] {
        let pts: Vec<(f64, f64)> = (8..=16)
            .map(|k| {
                let t = 1usize << k;
                let v = chaining_bound(|e| d * d * (1.0 + 1e6 / e).ln(), 1.0, t, d as usize, 1.0, &ChainingOpts::default())
                    .unwrap()
                    .value;
                ((t as f64).ln(), v.ln())
            })
            .collect();
        let n = pts.len() as f64;
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 1.0).abs() <= 0.05, "d = {d}: slope {slope}");
    }
}

#[test]
fn singleton_entropy_gives_near_zero() {
    let v = chaining_bound(|_| 0.0, 2.0, 100, 1, 1.0, &ChainingOpts::default()).unwrap().value;
    assert!(v <= 1e-6 * 2.0, "{v}");
}
