"""Smoke test for the pyadafilter extension module.

Build and run from the repository root:

    cargo build -p adafilter-py --features extension-module --release
    cp target/release/libpyadafilter.so python/pyadafilter.so
    python3 python/smoke_test.py
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pyadafilter as af  # noqa: E402

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
HEADLINE = os.path.join(ROOT, "models", "headline.json")


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol


def main():
    assert close(af.tv_norm([1.0, 0.0], [0.0, 1.0]), 2.0)
    assert close(af.hilbert_metric([0.5, 0.5], [0.25, 0.75]), math.log(3.0))
    eps, lam = af.mixing_constant([[0.9, 0.1], [0.1, 0.9]])
    assert close(eps, 1.0 / 3.0) and len(lam) == 2
    assert close(af.birkhoff_tau([[0.9, 0.1], [0.1, 0.9]]), 0.8)
    pi = af.stationary_dist([[0.8, 0.2], [0.3, 0.7]])
    assert close(pi[0], 0.6) and close(pi[1], 0.4)
    assert close(af.prokhorov_distance([0.0], [1.0], [0.0], [1.0]), 0.0, 1e-6)

    model = af.Model.load(HEADLINE)
    assert (model.states, model.params, model.alpha) == (2, 21, 10)
    states, ys = model.simulate(model.alpha, 200, 42)
    assert len(states) == len(ys) == 200
    assert model.simulate(model.alpha, 200, 42) == (states, ys)

    exact = model.filter(ys)
    z = exact["param_posterior"][-1]
    assert close(sum(z), 1.0, 1e-12)
    pf = model.particle_filter(ys, 5000, 42)
    gap = sum(abs(a - b) for a, b in zip(pf["state_marginal"][-1], exact["state_marginal"][-1]))
    assert gap < 0.1, gap

    post = model.posterior(model.alpha, 0.1, 500, [1, 2, 3])
    assert post["mass_outside"][-1] < post["mass_outside"][0]

    gaps = model.stability(model.alpha, [0.9, 0.1], [0.1, 0.9], 300, [1, 2])
    assert len(gaps) == 300

    try:
        af.Model.from_json('{"states": 2}')
    except ValueError as e:
        assert "/h" in str(e)
    else:
        raise AssertionError("invalid model accepted")

    with tempfile.TemporaryDirectory() as out:
        h1 = af.run_experiment("simulate", HEADLINE, os.path.join(out, "a"), n=10, seeds=[42])
        h2 = af.run_experiment("simulate", HEADLINE, os.path.join(out, "b"), n=10, seeds=[42])
        assert h1 == h2
        with open(os.path.join(out, "a", "trajectory.csv")) as fa, open(os.path.join(out, "b", "trajectory.csv")) as fb:
            assert fa.read() == fb.read()

    print("pyadafilter smoke test passed (version %s)" % af.__version__)


if __name__ == "__main__":
    main()
