"""Smoke test for the panelconv_py extension.

Build and install first, e.g.
    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml
then run `python python/smoke_test.py`.
"""

import math

import panelconv_py as pc


def check(cond, msg):
    if not cond:
        raise AssertionError(msg)
    print("ok:", msg)


def main():
    spec = {
        "n": 40,
        "t": 30,
        "factor": {"kind": "random-walk-with-drift", "mu": 0.02, "sigma": 0.02},
        "heterogeneity": {
            "alpha": {"mean": 0.1, "sigma_eta": 0.1},
            "gamma": {"mean": 1.0, "sigma_eta": 0.3},
            "rho": {"kind": "fixed", "value": 0.7},
            "sigma_u": {"kind": "fixed", "value": 0.05},
        },
        "seed": 5,
    }
    panel, truth = pc.simulate(spec)
    check(len(panel) == 40 and panel.variables == ["y"], "simulate returns a 40-country panel")
    check(truth["parameters"]["rho"][0] == 0.7, "truth record carries planted rho")

    lags = {"lags": {"p": 1, "q": 1, "default_rule": False}}
    twfe = pc.estimate("twfe", panel, "y", lags)
    dccep = pc.estimate("dccep", panel, "y", lags, jackknife=True)
    check(twfe["names"][0] == "L.y", "first coefficient is the lagged level")
    check(abs(dccep["phi"]["estimate"] - 0.3) < 3 * dccep["phi"]["std_error"], "DCCEP-HJK phi near 0.3")

    small = pc.Panel(["a", "a", "a", "b", "b", "b"], [1, 2, 3, 1, 2, 3], {"y": [1.0, 2.0, None, 0.5, 0.7, 0.9]})
    check(math.isnan(small.series("y", "a")[2]), "missing cells map to NaN")

    b = pc.barro_bias(0.8, 10, 1.0)
    check(abs(b["value"] - 0.803) < 5e-4, "Barro bias closed form 0.803")
    check(abs(pc.phi_from_growth_slope(-0.0876, 29) - 0.0032) < 1e-4, "phi from growth slope")
    check(abs(pc.twfe_stationary_bias(0.5, 1.0, 0.5, 1.0)["value"] - 0.207) < 1e-3, "stationary-factor bias")

    z = {c: [a] for c, a in zip(truth["countries"], truth["parameters"]["alpha"])}
    out = pc.two_step_estimate(panel, "y", z, ["alpha"], options=lags)
    check(out["second_stage"]["n"] == 40, "two-step second stage uses all countries")

    mc = pc.montecarlo(
        {"dgp": spec, "replications": 4, "estimators": [{"kind": "twfe", "options": lags}]}, seed=1
    )
    check(len(mc["rows"]) == 4 and mc["summaries"][0]["failures"] == 0, "Monte Carlo runs four replications")

    try:
        pc.estimate("nope", panel, "y")
    except ValueError:
        print("ok: unknown estimator raises ValueError")
    else:
        raise AssertionError("expected ValueError")
    print("smoke test passed")


if __name__ == "__main__":
    main()
