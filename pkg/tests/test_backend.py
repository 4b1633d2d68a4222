"""Backend parity: the jitted kernels and the pure-numpy path must agree.

Runs a small battery through the current backend in-process, then re-runs it
in a subprocess with NEURALSCR_BACKEND=numpy and compares bit patterns.
"""

import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from neuralscr import _backend

BATTERY = r"""
import json, math, sys
import numpy as np
from neuralscr import _backend, _kernels

rng = np.random.default_rng(12345)
out = {"backend": _backend.BACKEND}

x = rng.uniform(0.01, 20.0, size=64)
out["digamma"] = _kernels.digamma_vec(x).tolist()

jt = np.sort(rng.uniform(0.1, 3.0, size=9))
js = rng.uniform(0.05, 0.4, size=9)
padded = np.concatenate(([0.0], np.cumsum(js)))
t = rng.uniform(0.0, 3.5, size=40)
out["cum"] = _kernels.step_cumulative(jt, padded, t).tolist()
out["jump"] = _kernels.step_jump_at(jt, js, np.concatenate((jt[:4], t[:6]))).tolist()

ev = np.sort(rng.uniform(0.1, 2.0, size=15))
risk_t = rng.uniform(0.05, 3.0, size=50)
w = rng.uniform(0.2, 2.0, size=50)
u, jumps = _kernels.breslow_jumps(ev, risk_t, w)
out["breslow"] = [u.tolist(), jumps.tolist()]

out["uniform"] = _kernels.uniform_block(987654321, 32).tolist()

dims = np.array([2, 4, 4, 1], dtype=np.int64)
W = np.zeros((3, 3, 4, 4)); B = np.zeros((3, 3, 4))
for g in range(3):
    for l in range(3):
        din, dout = dims[l], dims[l + 1]
        W[g, l, :dout, :din] = rng.normal(0, 0.5, size=(dout, din))
        if l < 2:
            B[g, l, :dout] = rng.normal(0, 0.2, size=dout)
X = rng.normal(size=(30, 2))
evm = (rng.random((3, 30)) < 0.4).astype(float)
lam = rng.uniform(0.05, 0.6, size=(3, 30))
egam = rng.uniform(0.5, 1.8, size=30)
elog = rng.normal(-0.1, 0.3, size=30)
out["forward"] = _kernels.net_forward(W, B, dims, 1, np.ascontiguousarray(X)).tolist()
out["loss"] = _kernels.q_loss_eval(W, B, dims, np.ascontiguousarray(X), evm, lam,
                                   egam, elog, 1.2, math.log(0.6), 1e-3)
Wt, Bt, xi, trace, div = _kernels.train_networks(
    W, B, dims, np.ascontiguousarray(X), evm, lam, egam, elog, 1.2, math.log(0.6),
    1e-2, 0.05, 0.25, 1e-3, 8, 777, 1)
out["trained_W"] = Wt.ravel()[::7].tolist()
out["trained_xi"] = xi
out["trace"] = trace.tolist()
json.dump(out, sys.stdout)
"""


def run_battery(env_backend=None):
    env = dict(os.environ)
    if env_backend:
        env["NEURALSCR_BACKEND"] = env_backend
    proc = subprocess.run(
        [sys.executable, "-c", BATTERY], capture_output=True, text=True, env=env,
        check=True,
    )
    return json.loads(proc.stdout)


class TestBackendParity:
    def test_numpy_fallback_matches_active_backend(self):
        active = run_battery()
        fallback = run_battery("numpy")
        assert fallback["backend"] == "numpy"
        for key in ("digamma", "cum", "jump", "uniform", "forward", "trace", "trained_W"):
            np.testing.assert_allclose(
                active[key], fallback[key], rtol=1e-12, atol=1e-14,
                err_msg=f"kernel {key} differs between backends",
            )
        assert active["loss"] == pytest.approx(fallback["loss"], rel=1e-12)
        assert active["trained_xi"] == pytest.approx(fallback["trained_xi"], rel=1e-10)
        np.testing.assert_allclose(active["breslow"][0], fallback["breslow"][0])
        np.testing.assert_allclose(active["breslow"][1], fallback["breslow"][1], rtol=1e-12)

    def test_invalid_backend_warns_and_falls_back(self):
        env = dict(os.environ)
        env["NEURALSCR_BACKEND"] = "gpu"
        proc = subprocess.run(
            [sys.executable, "-W", "always", "-c",
             "from neuralscr import _backend; print(_backend.BACKEND)"],
            capture_output=True, text=True, env=env, check=True,
        )
        assert proc.stdout.strip() in ("numba", "numpy")
        assert "unrecognized" in proc.stderr

    def test_backend_reported(self):
        assert _backend.BACKEND in ("numba", "numpy")
        assert _backend.USE_NUMBA == (_backend.BACKEND == "numba")
