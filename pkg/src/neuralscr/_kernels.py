"""Hot numeric kernels, compiled with numba when available.

Everything here is written in the restricted numpy subset that numba's
nopython mode accepts, so the exact same source serves as the pure-numpy
fallback (see :mod:`neuralscr._backend`).  Python-facing wrappers with
validation live in the regular modules; these functions assume clean inputs.

Dropout masks come from a counter-based splitmix64 stream keyed on
(seed, epoch, sub-network, layer), so both backends draw identical masks
and no global generator state is touched.
"""

from __future__ import annotations

import math

import numpy as np

from ._backend import kernel

# ---------------------------------------------------------------------------
# digamma: recurrence shift above 6, then the asymptotic (Bernoulli) series
# through y**-12.  Accurate to ~1e-12 for x >= 1e-3.
# ---------------------------------------------------------------------------


@kernel
def digamma_vec(x):
    shift = (
        1.0 / x
        + 1.0 / (x + 1.0)
        + 1.0 / (x + 2.0)
        + 1.0 / (x + 3.0)
        + 1.0 / (x + 4.0)
        + 1.0 / (x + 5.0)
        + 1.0 / (x + 6.0)
    )
    y = x + 7.0
    u = 1.0 / (y * y)
    corr = u * (
        1.0 / 12.0
        - u * (1.0 / 120.0 - u * (1.0 / 252.0 - u * (1.0 / 240.0 - u * (1.0 / 132.0 - u * (691.0 / 32760.0)))))
    )
    return np.log(y) - 0.5 / y - corr - shift


@kernel
def digamma_scalar(x):
    shift = 0.0
    for j in range(7):
        shift += 1.0 / (x + j)
    y = x + 7.0
    u = 1.0 / (y * y)
    corr = u * (
        1.0 / 12.0
        - u * (1.0 / 120.0 - u * (1.0 / 252.0 - u * (1.0 / 240.0 - u * (1.0 / 132.0 - u * (691.0 / 32760.0)))))
    )
    return math.log(y) - 0.5 / y - corr - shift


# ---------------------------------------------------------------------------
# Step cumulative hazard evaluation.
# ---------------------------------------------------------------------------


@kernel
def step_cumulative(jump_times, padded_cum, t):
    """Lambda(t) for a right-continuous step function.

    padded_cum must be [0, cumsum(jump_sizes)...] so that index 0 encodes
    Lambda(t) = 0 before the first jump.
    """
    idx = np.searchsorted(jump_times, t, side="right")
    return padded_cum[idx]


@kernel
def step_jump_at(jump_times, jump_sizes, t):
    """Jump size at exactly t (0.0 where t is not a jump time)."""
    n = jump_times.shape[0]
    idx = np.searchsorted(jump_times, t, side="left")
    idx_c = np.minimum(idx, n - 1)
    hit = (idx < n) & (jump_times[idx_c] == t)
    return np.where(hit, jump_sizes[idx_c], 0.0)


# ---------------------------------------------------------------------------
# Breslow-type jump updates: one jump per distinct event time,
# jump = event count / weighted at-risk sum.
# ---------------------------------------------------------------------------


@kernel
def breslow_jumps(event_times, at_risk_times, at_risk_weights):
    u = np.unique(event_times)
    ev_sorted = np.sort(event_times)
    left = np.searchsorted(ev_sorted, u, side="left")
    right = np.searchsorted(ev_sorted, u, side="right")
    counts = (right - left).astype(np.float64)

    order = np.argsort(at_risk_times)
    rt = at_risk_times[order]
    rw = at_risk_weights[order]
    csum = np.concatenate((np.zeros(1), np.cumsum(rw)))
    total = csum[-1]
    idx = np.searchsorted(rt, u, side="left")
    denom = total - csum[idx]
    return u, counts / denom


# ---------------------------------------------------------------------------
# Counter-based uniforms (splitmix64) for dropout masks.
# ---------------------------------------------------------------------------


@kernel
def uniform_block(key, count):
    """`count` uniforms in [0, 1) from the splitmix64 stream at `key`."""
    idx = np.arange(count).astype(np.uint64)
    z = np.uint64(key) + (idx + np.uint64(1)) * np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


# ---------------------------------------------------------------------------
# Multi-task risk networks.
#
# The three sub-networks share one architecture and are packed into padded
# tensors: W has shape (3, L, kmax, kmax), B has shape (3, L, kmax), and
# dims = [p, k_1, ..., k_{L-1}, 1] gives the live block of each layer.
# Hidden activations are relu, the output layer is linear with its bias
# pinned at zero (never updated).  Padding entries stay exactly zero.
#
# Risk values are reference-centered: h(x) = F(x) - F(0), so the covariate
# origin carries unit relative risk and the baselines keep the reference
# scale (otherwise a constant shift of h against the baselines is a flat
# direction of the likelihood).  The kernels append a zero row to the batch
# and subtract its output; during training that row bypasses dropout.
# ---------------------------------------------------------------------------


@kernel
def net_forward(W, B, dims, g, X):
    """Deterministic centered forward pass of sub-network g: (n,) output."""
    n = X.shape[0]
    n_layers = dims.shape[0] - 1
    Xa = np.zeros((n + 1, X.shape[1]))
    Xa[:n] = X
    A = Xa
    for l in range(n_layers):
        din = dims[l]
        dout = dims[l + 1]
        Wl = np.ascontiguousarray(W[g, l, :dout, :din])
        Z = np.dot(A, Wl.T) + B[g, l, :dout]
        if l < n_layers - 1:
            A = np.maximum(Z, 0.0)
        else:
            A = Z
    out = np.empty(n)
    out[:] = A[:n, 0] - A[n, 0]
    return out


@kernel
def q_loss_eval(W, B, dims, X, ev, lam, egam, elog, const_q123, xi, l2):
    """Full-objective value -(Q1+Q2+Q3+Q4)/n + l2 * sum of squared weights
    and biases.

    ev and lam are (3, n): per-transition event indicators and frozen
    cumulative-baseline terms Lambda_g(.) (without exp(h)).  Penalizing the
    hidden biases keeps the sub-networks close to the positively-homogeneous
    subclass, which pins the additive level of h against the baselines.
    """
    n = X.shape[0]
    nf = float(n)
    q = const_q123
    for g in range(3):
        h = net_forward(W, B, dims, g, X)
        q += np.sum(ev[g] * h - egam * lam[g] * np.exp(h))
    theta = math.exp(xi)
    inv_t = 1.0 / theta
    q += (
        -nf * xi * inv_t
        + (inv_t - 1.0) * np.sum(elog)
        - inv_t * np.sum(egam)
        - nf * math.lgamma(inv_t)
    )
    return -q / nf + l2 * (np.sum(W * W) + np.sum(B * B))


@kernel
def loss_and_grads(W, B, dims, X, ev, lam, egam, elog, const_q123, xi, l2,
                   dropout_q, rng_key, train_xi):
    """Training loss with dropout plus reverse-mode gradients.

    Returns (loss, dW, dB, dxi).  Dropout masks are drawn from the splitmix64
    stream at rng_key; dropout_q = 0.0 gives a deterministic pass.
    """
    n = X.shape[0]
    nf = float(n)
    na = n + 1  # batch plus the reference (zero-covariate) row
    n_layers = dims.shape[0] - 1
    kmax = W.shape[2]

    dW = np.zeros_like(W)
    dB = np.zeros_like(B)

    Xa = np.zeros((na, X.shape[1]))
    Xa[:n] = X

    q = const_q123
    for g in range(3):
        # only the live blocks are ever written and read back
        zs = np.empty((n_layers, na, kmax))
        ins = np.empty((n_layers, na, kmax))
        masks = np.empty((n_layers, na, kmax))
        A = Xa
        for l in range(n_layers):
            din = dims[l]
            dout = dims[l + 1]
            ins[l, :, :din] = A
            Wl = np.ascontiguousarray(W[g, l, :dout, :din])
            Z = np.dot(np.ascontiguousarray(A), Wl.T) + B[g, l, :dout]
            zs[l, :, :dout] = Z
            if l < n_layers - 1:
                H = np.maximum(Z, 0.0)
                if dropout_q > 0.0:
                    u = uniform_block(
                        np.uint64(rng_key) + np.uint64(g * 16 + l) * np.uint64(0xD1B54A32D192ED03),
                        na * dout,
                    ).reshape(na, dout)
                    mask = np.where(u < dropout_q, 0.0, 1.0 / (1.0 - dropout_q))
                    mask[na - 1] = 1.0  # the reference row stays deterministic
                    masks[l, :, :dout] = mask
                    H = H * mask
                else:
                    masks[l, :, :dout] = 1.0
                A = H
            else:
                A = Z

        h = np.empty(n)
        h[:] = A[:n, 0] - A[n, 0]
        eh = np.exp(h)
        q += np.sum(ev[g] * h - egam * lam[g] * eh)

        # d(loss)/dh_g with loss = -Q/n + penalty; the reference output
        # receives minus the total upstream gradient
        dh = -(ev[g] - egam * lam[g] * eh) / nf
        dZ = np.empty((na, 1))
        dZ[:n, 0] = dh
        dZ[n, 0] = -np.sum(dh)
        for l in range(n_layers - 1, -1, -1):
            din = dims[l]
            dout = dims[l + 1]
            Ain = np.ascontiguousarray(ins[l, :, :din])
            dW[g, l, :dout, :din] += np.dot(np.ascontiguousarray(dZ.T), Ain)
            if l < n_layers - 1:
                dB[g, l, :dout] += dZ.sum(axis=0)
            if l > 0:
                Wl = np.ascontiguousarray(W[g, l, :dout, :din])
                dA = np.dot(np.ascontiguousarray(dZ), Wl)
                dH = dA * masks[l - 1, :, :din]
                dZ = np.ascontiguousarray(
                    np.where(zs[l - 1, :, :din] > 0.0, dH, 0.0)
                )

    theta = math.exp(xi)
    inv_t = 1.0 / theta
    sum_elog = np.sum(elog)
    sum_egam = np.sum(egam)
    q += -nf * xi * inv_t + (inv_t - 1.0) * sum_elog - inv_t * sum_egam - nf * math.lgamma(inv_t)

    loss = -q / nf + l2 * (np.sum(W * W) + np.sum(B * B))
    dW += 2.0 * l2 * W
    dB += 2.0 * l2 * B

    dxi = 0.0
    if train_xi != 0:
        dq4_dxi = inv_t * (nf * (xi - 1.0 + digamma_scalar(inv_t)) - sum_elog + sum_egam)
        dxi = -dq4_dxi / nf
    return loss, dW, dB, dxi


@kernel
def train_networks(W0, B0, dims, X, ev, lam, egam, elog, const_q123, xi0,
                   lr, lr_xi, dropout_q, l2, epochs, seed, train_xi):
    """Full-batch adaptive-moment training of the three sub-networks and xi.

    Runs `epochs` updates, recording the deterministic (dropout-off) loss
    before every update and once after the last; returns the parameters that
    achieved the lowest recorded loss.  The scalar xi gets its own step size
    lr_xi.

    Returns (W, B, xi, trace, diverged) where trace holds the recorded
    losses and diverged is 1 if a non-finite loss cut training short.
    """
    W = W0.copy()
    B = B0.copy()
    xi = xi0

    mW = np.zeros_like(W)
    vW = np.zeros_like(W)
    mB = np.zeros_like(B)
    vB = np.zeros_like(B)
    mxi = 0.0
    vxi = 0.0
    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    bestW = W.copy()
    bestB = B.copy()
    best_xi = xi
    best_loss = np.inf

    trace = np.full(epochs + 1, np.nan)
    diverged = 0

    for epoch in range(epochs + 1):
        if epoch < epochs:
            epoch_key = (
                np.uint64(seed) * np.uint64(0x9E3779B97F4A7C15)
                + np.uint64(epoch) * np.uint64(0xBF58476D1CE4E5B9)
            )
            train_loss, dW, dB, dxi = loss_and_grads(
                W, B, dims, X, ev, lam, egam, elog, const_q123, xi, l2,
                dropout_q, epoch_key, train_xi,
            )
            # with dropout off the training pass already is the exact loss
            if dropout_q > 0.0:
                cur = q_loss_eval(W, B, dims, X, ev, lam, egam, elog, const_q123, xi, l2)
            else:
                cur = train_loss
        else:
            cur = q_loss_eval(W, B, dims, X, ev, lam, egam, elog, const_q123, xi, l2)
        trace[epoch] = cur
        if not np.isfinite(cur):
            diverged = 1
            break
        if cur < best_loss:
            best_loss = cur
            bestW[:] = W
            bestB[:] = B
            best_xi = xi
        if epoch == epochs:
            break

        t = float(epoch + 1)
        bc1 = 1.0 - beta1 ** t
        bc2 = 1.0 - beta2 ** t

        mW = beta1 * mW + (1.0 - beta1) * dW
        vW = beta2 * vW + (1.0 - beta2) * dW * dW
        W -= lr * (mW / bc1) / (np.sqrt(vW / bc2) + eps)

        mB = beta1 * mB + (1.0 - beta1) * dB
        vB = beta2 * vB + (1.0 - beta2) * dB * dB
        B -= lr * (mB / bc1) / (np.sqrt(vB / bc2) + eps)

        if train_xi != 0:
            mxi = beta1 * mxi + (1.0 - beta1) * dxi
            vxi = beta2 * vxi + (1.0 - beta2) * dxi * dxi
            xi -= lr_xi * (mxi / bc1) / (math.sqrt(vxi / bc2) + eps)

    return bestW, bestB, best_xi, trace, diverged
