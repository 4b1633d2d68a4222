"""Timing comparison of the numba-compiled kernels vs the numpy fallback.

Runs the hot-kernel battery in the current process, then re-launches itself
with NEURALSCR_BACKEND=numpy in a subprocess and prints both columns.

    python benchmarks/bench_backends.py
"""

import json
import math
import os
import subprocess
import sys
import time

import numpy as np


def build_problem(n=2000, nodes=32, seed=0):
    import warnings

    warnings.filterwarnings("ignore")
    from neuralscr.core import ModelState
    from neuralscr.em import nelson_aalen_seed
    from neuralscr.frailty import posterior
    from neuralscr.neural import NeuralRisk, _loss_inputs, init_network
    from neuralscr.simulate import SimConfig, simulate

    ds, _ = simulate(SimConfig(n=n, theta=0.5, risk_kind="linear", seed=seed))
    rng = np.random.default_rng(seed)
    risk = NeuralRisk([init_network(ds.p, 2, nodes, rng) for _ in range(3)])
    b1, b2, b3 = nelson_aalen_seed(ds)
    state = ModelState(b1, b2, b3, theta=0.5, risk_model=risk)
    post = posterior(ds, state)
    x, ev, lam, const = _loss_inputs(ds, post, state)
    return ds, state, post, risk, (x, ev, lam, const)


def time_call(fn, repeats=5):
    fn()  # warm-up / compile
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_battery():
    from neuralscr import _backend, _kernels
    from neuralscr.em import EMConfig, m_step, run_em
    from neuralscr.neural import NeuralRiskSpec, TrainConfig

    ds, state, post, risk, (x, ev, lam, const) = build_problem()
    xi = math.log(0.5)
    results = {"backend": _backend.BACKEND}

    results["digamma (n=100k)"] = time_call(
        lambda: _kernels.digamma_vec(np.linspace(0.01, 50, 100_000))
    )
    jt = np.linspace(0.01, 3.0, 800)
    js = np.full(800, 0.01)
    padded = np.concatenate(([0.0], np.cumsum(js)))
    t_eval = np.random.default_rng(0).uniform(0, 3, 100_000)
    results["step eval (n=100k)"] = time_call(
        lambda: _kernels.step_cumulative(jt, padded, t_eval)
    )
    results["m_step (n=2000)"] = time_call(lambda: m_step(ds, post, state))
    results["train 100 epochs (n=2000, 3x32x2 nets)"] = time_call(
        lambda: _kernels.train_networks(
            risk.W, risk.B, risk.dims, x, ev, lam, post.mean, post.log_mean,
            const, xi, 1e-3, 0.05, 0.1, 1e-3, 100, 42, 1,
        ),
        repeats=3,
    )

    def em_fit():
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            spec = NeuralRiskSpec(
                train=TrainConfig(nodes=32, hidden_layers=2, l2_rate=1e-3,
                                  dropout_fraction=0.0, learning_rate=1e-3, seed=0),
                theta_init=0.5,
            )
            run_em(ds, spec, EMConfig(max_iterations=15, tolerance=1e-9,
                                      n_step_epochs_per_iteration=10, seed=0))

    results["neural EM, 15 iterations (n=2000)"] = time_call(em_fit, repeats=2)
    return results


def main():
    mine = run_battery()
    env = dict(os.environ)
    env["NEURALSCR_BACKEND"] = "numpy"
    proc = subprocess.run(
        [sys.executable, __file__, "--battery-json"],
        capture_output=True, text=True, env=env, check=True,
    )
    other = json.loads(proc.stdout.splitlines()[-1])

    left, right = mine, other
    if left["backend"] == "numpy" and right["backend"] == "numpy":
        print("numba not available: both columns use the numpy path")
    name_w = max(len(k) for k in left if k != "backend")
    print(f"{'kernel':<{name_w}}  {left['backend']:>12}  {right['backend']:>12}  speedup")
    for key, val in left.items():
        if key == "backend":
            continue
        ratio = other[key] / val if val > 0 else float("nan")
        print(f"{key:<{name_w}}  {val * 1e3:>10.2f}ms  {other[key] * 1e3:>10.2f}ms  {ratio:>6.1f}x")


if __name__ == "__main__":
    if "--battery-json" in sys.argv:
        print(json.dumps(run_battery()))
    else:
        main()
