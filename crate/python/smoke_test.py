"""Smoke test for the littlemix_py extension.

Build and install it first:

    pip install --no-build-isolation ./crates/python
"""

import json
import math

import littlemix_py as lm

QUARTER_CHAIN = {
    "kind": "finite_chain",
    "transition": [[0.75, 0.25], [0.25, 0.75]],
    "atoms": [[0.0], [1.0]],
    "init": "stationary",
    "target_fn": [[0.0], [1.0]],
    "noise_std": 1.0,
}


def check_chain():
    chain = lm.Process(json.dumps(QUARTER_CHAIN))
    assert chain.kind == "finite_chain" and chain.d_x == 1
    gamma = chain.dependency_matrix(10)
    for i in range(10):
        for j in range(i, 10):
            assert abs(gamma[i][j] - 0.5 ** ((j - i) / 2)) < 1e-12
    traj = chain.simulate(100, 7)
    assert len(traj) == 100 and len(traj.states) == 100
    again = chain.simulate(100, 7)
    assert traj.ys == again.ys
    print(f"chain: Γ law ok, ‖Γ‖ at T=64 = {chain.dependency_opnorm(64):.4f}")


def check_lds_fit():
    lds = lm.Process(json.dumps({"kind": "lds", "A_star": [[0.5]], "H": [[1.0]]}))
    family = lm.Family(json.dumps({"kind": "linear_ball", "B": 10.0, "d_x": 1, "d_y": 1}))
    report = family.fit(lds, lds.simulate(4000, 3))
    a_hat = report["parameter_matrix"][0][0]
    risk = report["excess_risk"]["value"]
    assert abs(a_hat - 0.5) < 0.1, a_hat
    assert 0 < risk < 0.01, risk
    print(f"lds fit: A_hat = {a_hat:.4f}, excess risk = {risk:.2e}")


def check_sweep():
    sweep = {
        "process_template": {"kind": "lds", "A_star": [[0.5]], "H": [[1.0]]},
        "family": {"kind": "linear_ball", "B": 10.0, "d_x": 1, "d_y": 1},
        "T_grid": [64, 256, 1024],
        "n_rep": 50,
        "master_seed": 11,
        "compute_m_t": False,
    }
    res = lm.risk_curve(json.dumps(sweep))
    means = [a["mean_risk"] for a in res["aggregates"]]
    slope = math.log(means[-1] / means[0]) / math.log(16)
    assert -1.4 < slope < -0.6, slope
    print(f"risk curve: mean risks {['%.2e' % m for m in means]}, slope {slope:.2f}")


def check_errors():
    try:
        lm.Process(json.dumps({"kind": "lds", "A_star": [[1.5]], "H": [[1.0]]}))
    except ValueError:
        pass
    else:
        raise AssertionError("unstable system accepted")
    rep = lm.burn_in(json.dumps({"kind": "glm", "p_opnorm": 1.0, "cond_h": 1.0, "d_x": 1, "zeta": 1.0, "rho": 0.5}))
    assert abs(rep["t_min"] - 64.0) < 1e-9, rep


if __name__ == "__main__":
    print("littlemix_py", lm.__version__)
    check_chain()
    check_lds_fit()
    check_sweep()
    check_errors()
    print("smoke test passed")
