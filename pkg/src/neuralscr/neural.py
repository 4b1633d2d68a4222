"""Multi-task risk networks and the N-step trainer.

Three fully-connected sub-networks (relu hidden layers, linear output with
its bias pinned at zero) produce the transition log-risks h1, h2, h3; the
frailty variance rides along as a trainable parameter xi = log(theta).  The
training objective is the negative expected complete-data log likelihood
divided by n, with the E-step posterior moments and the M-step baselines
frozen, plus an optional squared-weight penalty.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .core import Dataset, ModelState
from .em import EMConfig, NonFiniteQError, q_function
from .frailty import FrailtyPosterior
from .likelihood import evaluate_terms


class DivergedLossWarning(UserWarning):
    pass


def derive_seed(*parts) -> int:
    """Stable 32-bit stream seed from integer parts."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    dropout_fraction: float = 0.1
    l2_rate: float = 1e-4
    epochs: int = 10
    full_batch: bool = True
    hidden_layers: int = 2
    nodes: int = 32
    grid: tuple = ()
    seed: int = 0
    # the scalar log-variance moves on a gentler landscape than the weights
    xi_learning_rate: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.dropout_fraction < 1.0:
            raise ValueError("dropout_fraction must be in [0, 1)")
        if self.l2_rate < 0:
            raise ValueError("l2_rate must be nonnegative")
        if not self.full_batch:
            raise ValueError("only full-batch training is supported")
        if self.hidden_layers < 1 or self.nodes < 1:
            raise ValueError("need at least one hidden layer and one node")


def default_grid() -> tuple:
    """Hyperparameter grid: (nodes, hidden_layers, lr, dropout, l2) tuples."""
    return tuple(
        itertools.product((16, 32, 64), (1, 2), (1e-2, 1e-3), (0.0, 0.1, 0.3), (0.0, 1e-4, 1e-3))
    )


class RiskNetwork:
    """One sub-network: weight matrices W_l (k_out x k_in) and bias vectors."""

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must pair up")
        if self.weights[-1].shape[0] != 1:
            raise ValueError("output layer must have a single unit")
        if np.any(self.biases[-1] != 0.0):
            raise ValueError("output bias is constrained to zero")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim] + [w.shape[0] for w in self.weights]


def init_network(p: int, hidden_layers: int, nodes: int, rng) -> RiskNetwork:
    """Variance-preserving uniform init (+-sqrt(6/(fan_in+fan_out))), zero biases."""
    dims = [p] + [nodes] * hidden_layers + [1]
    weights, biases = [], []
    for din, dout in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / (din + dout))
        weights.append(rng.uniform(-bound, bound, size=(dout, din)))
        biases.append(np.zeros(dout))
    return RiskNetwork(weights, biases)


def forward(network: RiskNetwork, x, training: bool = False,
            dropout: float = 0.0, rng=None) -> float | np.ndarray:
    """h(x): relu hidden layers, linear output.

    With training=True, hidden activations are dropped with probability
    `dropout` and survivors rescaled by 1/(1-dropout) (inverted dropout);
    prediction passes are deterministic.
    """
    single = np.ndim(x) == 1
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if a.shape[1] != network.input_dim:
        raise ValueError(
            f"expected covariate dimension {network.input_dim}, got {a.shape[1]}"
        )
    n_layers = len(network.weights)
    for l, (w, b) in enumerate(zip(network.weights, network.biases)):
        z = a @ w.T + b
        if l < n_layers - 1:
            a = np.maximum(z, 0.0)
            if training and dropout > 0.0:
                if rng is None:
                    raise ValueError("training-mode dropout needs an rng")
                mask = rng.random(a.shape) >= dropout
                a = a * mask / (1.0 - dropout)
        else:
            a = z
    out = a[:, 0]
    return float(out[0]) if single else out


def pack_networks(networks: Sequence[RiskNetwork]):
    """Pad the three sub-networks into (3, L, kmax, kmax) / (3, L, kmax) tensors."""
    if len(networks) != 3:
        raise ValueError("expected three sub-networks")
    dims0 = networks[0].layer_dims
    for net in networks[1:]:
        if net.layer_dims != dims0:
            raise ValueError("sub-networks must share one architecture")
    dims = np.asarray(dims0, dtype=np.int64)
    n_layers = len(dims0) - 1
    kmax = int(max(dims0))
    W = np.zeros((3, n_layers, kmax, kmax))
    B = np.zeros((3, n_layers, kmax))
    for g, net in enumerate(networks):
        for l, (w, b) in enumerate(zip(net.weights, net.biases)):
            W[g, l, : w.shape[0], : w.shape[1]] = w
            B[g, l, : b.shape[0]] = b
    return W, B, dims


def unpack_networks(W: np.ndarray, B: np.ndarray, dims: np.ndarray) -> list[RiskNetwork]:
    nets = []
    n_layers = len(dims) - 1
    for g in range(3):
        weights = [W[g, l, : dims[l + 1], : dims[l]].copy() for l in range(n_layers)]
        biases = [B[g, l, : dims[l + 1]].copy() for l in range(n_layers)]
        nets.append(RiskNetwork(weights, biases))
    return nets


class NeuralRisk:
    """Risk model backed by the packed three-network tensors.

    Risk values are reference-centered, h_g(x) = F_g(x) - F_g(0), so a
    zero-covariate subject carries unit relative risk and the baselines keep
    the reference scale; without this anchor a constant shift of h against
    the baselines is a flat direction of the likelihood.
    """

    def __init__(self, networks: Sequence[RiskNetwork]):
        self.W, self.B, self.dims = pack_networks(networks)

    @classmethod
    def _from_packed(cls, W, B, dims) -> "NeuralRisk":
        obj = cls.__new__(cls)
        obj.W, obj.B, obj.dims = W, B, dims
        return obj

    @property
    def networks(self) -> list[RiskNetwork]:
        return unpack_networks(self.W, self.B, self.dims)

    def values(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(np.atleast_2d(x), dtype=float)
        cols = [_kernels.net_forward(self.W, self.B, self.dims, g, x) for g in range(3)]
        return np.column_stack(cols)


def _loss_inputs(dataset: Dataset, posteriors: FrailtyPosterior, state: ModelState):
    """Frozen arrays feeding the training kernels, plus the h/xi-free constant."""
    terms = evaluate_terms(dataset, state)
    ev = np.vstack([terms.ev1, terms.ev2, terms.ev3])
    lam = np.vstack([terms.lam1, terms.lam2, terms.lam3])
    const = float(np.sum((dataset.delta1 + dataset.delta2) * posteriors.log_mean))
    for g, haz in enumerate((terms.haz1, terms.haz2, terms.haz3)):
        mask = ev[g] > 0
        if not np.any(mask):
            continue
        if np.any(haz[mask] <= 0):
            raise NonFiniteQError(
                f"zero jump size at an observed transition-{g + 1} event time"
            )
        const += float(np.sum(ev[g][mask] * np.log(haz[mask])))
    x = np.ascontiguousarray(dataset.x, dtype=float)
    return x, ev, lam, const


def loss(dataset: Dataset, posteriors: FrailtyPosterior, state: ModelState,
         l2_rate: float = 0.0) -> float:
    """-(Q1+Q2+Q3+Q4)/n plus l2_rate times the sum of squared weights and
    biases.

    Constant-in-(h, xi) pieces (jump-size logs, posterior E[log gamma] event
    terms) are kept so the value matches the Q trace.  Biases share the
    penalty so near-constant level shifts of h (built from saturated hidden
    units) stay expensive relative to genuine shape.
    """
    qv = q_function(dataset, posteriors, state)
    penalty = 0.0
    if l2_rate > 0 and isinstance(state.risk_model, NeuralRisk):
        risk = state.risk_model
        penalty = l2_rate * float(np.sum(risk.W**2) + np.sum(risk.B**2))
    return -qv.total / dataset.n + penalty


@dataclass
class TrainStepInfo:
    loss_trace: np.ndarray
    best_loss: float
    diverged: bool


def train_step(
    dataset: Dataset,
    posteriors: FrailtyPosterior,
    state: ModelState,
    config: TrainConfig,
    epochs: Optional[int] = None,
    seed: Optional[int] = None,
    train_xi: bool = True,
):
    """Full-batch adaptive-moment training of the sub-networks and xi.

    Posteriors and baselines stay frozen; returns the parameters with the
    lowest recorded deterministic loss, the new theta, and a trace.
    """
    risk = state.risk_model
    if not isinstance(risk, NeuralRisk):
        raise TypeError("train_step requires a NeuralRisk model")
    x, ev, lam, const = _loss_inputs(dataset, posteriors, state)
    n_epochs = config.epochs if epochs is None else epochs
    kernel_seed = config.seed if seed is None else seed
    with np.errstate(over="ignore", invalid="ignore"):
        W, B, xi, trace, diverged = _kernels.train_networks(
            risk.W, risk.B, risk.dims, x, ev, lam,
            posteriors.mean, posteriors.log_mean, const,
            math.log(state.theta),
            config.learning_rate, config.xi_learning_rate,
            config.dropout_fraction, config.l2_rate,
            n_epochs, kernel_seed, 1 if train_xi else 0,
        )
    if diverged:
        warnings.warn(
            "training loss became non-finite; keeping the best finite parameters",
            DivergedLossWarning,
            stacklevel=2,
        )
    new_risk = NeuralRisk._from_packed(W, B, risk.dims)
    finite = trace[np.isfinite(trace)]
    info = TrainStepInfo(
        loss_trace=trace,
        best_loss=float(finite.min()) if len(finite) else float("nan"),
        diverged=bool(diverged),
    )
    return new_risk, float(xi), info


def loss_gradients(dataset, posteriors, state, config: TrainConfig, train_xi: bool = True):
    """Analytic (loss, dW, dB, dxi) without dropout, for gradient checks."""
    risk = state.risk_model
    x, ev, lam, const = _loss_inputs(dataset, posteriors, state)
    value, dW, dB, dxi = _kernels.loss_and_grads(
        risk.W, risk.B, risk.dims, x, ev, lam,
        posteriors.mean, posteriors.log_mean, const,
        math.log(state.theta), config.l2_rate, 0.0, 0, 1 if train_xi else 0,
    )
    return float(value), dW, dB, float(dxi)


@dataclass
class NeuralRiskSpec:
    """N-step strategy for :func:`neuralscr.em.run_em`."""

    train: TrainConfig = TrainConfig()
    theta_init: Optional[float] = None

    def initial_theta(self, dataset: Dataset) -> float:
        if self.theta_init is not None:
            return self.theta_init
        from .weibull import fit_parametric

        return fit_parametric(dataset).theta

    def initial_risk_model(self, dataset: Dataset, rng):
        nets = [
            init_network(dataset.p, self.train.hidden_layers, self.train.nodes, rng)
            for _ in range(3)
        ]
        return NeuralRisk(nets)

    def update(self, dataset, posteriors, state, config: EMConfig, iteration: int):
        new_risk, xi, _ = train_step(
            dataset, posteriors, state, self.train,
            epochs=config.n_step_epochs_per_iteration,
            seed=derive_seed(config.seed, self.train.seed, iteration),
        )
        return new_risk, math.exp(xi)


def mise(h_true, h_fitted, covariates) -> float:
    """Mean squared difference of two log-risk surfaces over a sample."""
    x = np.atleast_2d(np.asarray(covariates, dtype=float))
    if len(x) == 0:
        raise ValueError("covariates must be nonempty")

    def evaluate(fn):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error")
                vals = np.asarray(fn(x), dtype=float)
            if vals.shape == (len(x),):
                return vals
        except Exception:
            pass
        return np.array([float(fn(row)) for row in x])

    diff = evaluate(h_true) - evaluate(h_fitted)
    return float(np.mean(diff**2))


def grid_search(
    dataset: Dataset,
    folds: int,
    grid: Sequence[tuple],
    base_config: TrainConfig = TrainConfig(),
    em_config: EMConfig = EMConfig(),
    horizon: Optional[float] = None,
    seed: int = 0,
    theta_init: Optional[float] = None,
    return_scores: bool = False,
):
    """Pick the grid point with the best cross-validated integrated BBS.

    Grid entries are (nodes, hidden_layers, learning_rate, dropout, l2);
    ties break toward the smaller network, then the lower learning rate.
    With return_scores=True also returns [(point, mean_ibbs), ...].
    """
    from .harness import cv

    if folds < 2:
        raise ValueError("folds must be >= 2")
    if not grid:
        raise ValueError("grid must be nonempty")
    if horizon is None:
        horizon = float(np.quantile(dataset.y2, 0.8))

    results = []
    scores = []
    for point in grid:
        nodes, layers, lr, dropout, l2 = point
        cfg = replace(
            base_config,
            nodes=int(nodes), hidden_layers=int(layers),
            learning_rate=float(lr), dropout_fraction=float(dropout),
            l2_rate=float(l2),
        )
        res = cv(
            dataset, "neural", folds=folds, horizon=horizon, seed=seed,
            em_config=em_config, train_config=cfg, theta_init=theta_init,
        )
        n_params = layers * nodes + nodes * nodes * (layers - 1) + nodes
        results.append((res.mean_ibbs, n_params, lr, cfg))
        scores.append((tuple(point), res.mean_ibbs))
    results.sort(key=lambda r: (r[0], r[1], r[2]))
    if return_scores:
        return results[0][3], scores
    return results[0][3]
