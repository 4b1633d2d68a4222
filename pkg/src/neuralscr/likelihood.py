"""Complete-data, case-based, and observed-data log likelihoods.

All three transition hazards share a subject-level Gamma frailty gamma with
mean 1 and variance theta, multiplying lambda_0g(.) exp(h_g(x)).  The
complete-data likelihood treats gamma as known; the observed-data version
integrates it out in closed form (the Gamma posterior is conjugate).

For step baselines the event-term weight lambda_0g(Y) is the jump size at Y;
for Weibull baselines it is the density-form hazard.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import (
    Dataset,
    ModelState,
    NonFiniteLikelihoodError,
    ObservedRecord,
)

THETA_FRAILTY_FREE = 1e-12  # below this, use the theta -> 0 limit formulas


@dataclass
class SubjectTerms:
    """Per-subject model evaluations shared by the E/M/N machinery.

    lam1, lam2: Lambda01(y1), Lambda02(y1) -- transition-2 exposure ends at
    the first event, so both use y1.  lam3 = delta1 * Lambda03(y2 - y1) on
    the sojourn scale.  haz* are event-term weights at the event times.
    """

    h: np.ndarray          # (n, 3)
    eh: np.ndarray         # (n, 3) exp(h)
    lam1: np.ndarray
    lam2: np.ndarray
    lam3: np.ndarray
    haz1: np.ndarray
    haz2: np.ndarray
    haz3: np.ndarray
    ev1: np.ndarray        # delta1
    ev2: np.ndarray        # (1 - delta1) * delta2
    ev3: np.ndarray        # delta1 * delta2

    @property
    def b_tilde_sum(self) -> np.ndarray:
        """Lambda01 e^h1 + Lambda02 e^h2 + delta1 Lambda03 e^h3."""
        return (
            self.lam1 * self.eh[:, 0]
            + self.lam2 * self.eh[:, 1]
            + self.lam3 * self.eh[:, 2]
        )


def evaluate_terms(dataset: Dataset, state: ModelState) -> SubjectTerms:
    h = state.risk_values(dataset.x)
    soj = dataset.sojourn
    d1 = dataset.delta1
    d2 = dataset.delta2
    return SubjectTerms(
        h=h,
        eh=np.exp(h),
        lam1=state.lambda01.cumulative(dataset.y1),
        lam2=state.lambda02.cumulative(dataset.y1),
        lam3=d1 * state.lambda03.cumulative(soj),
        haz1=state.lambda01.hazard_at(dataset.y1),
        haz2=state.lambda02.hazard_at(dataset.y2),
        haz3=state.lambda03.hazard_at(soj),
        ev1=d1,
        ev2=(1.0 - d1) * d2,
        ev3=d1 * d2,
    )


def _event_log_terms(terms: SubjectTerms) -> np.ndarray:
    """Sum over transitions of ev_g * log(lambda_0g(Y) e^{h_g}).

    Raises when an event sits where the baseline carries no mass.
    """
    out = np.zeros_like(terms.ev1)
    for ev, haz, g in ((terms.ev1, terms.haz1, 0), (terms.ev2, terms.haz2, 1),
                       (terms.ev3, terms.haz3, 2)):
        mask = ev > 0
        if not np.any(mask):
            continue
        if np.any(haz[mask] <= 0):
            raise NonFiniteLikelihoodError(
                f"zero baseline hazard at an observed transition-{g + 1} event time"
            )
        out[mask] += ev[mask] * (np.log(haz[mask]) + terms.h[mask, g])
    return out


def complete_data_log_likelihood(dataset: Dataset, gamma, state: ModelState) -> float:
    """log of the augmented (gamma-known) likelihood, summed over subjects."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (dataset.n,):
        raise ValueError("gamma must have one entry per subject")
    theta = state.theta
    inv_t = 1.0 / theta
    terms = evaluate_terms(dataset, state)
    log_gamma_prior = (
        -inv_t * math.log(theta)
        - math.lgamma(inv_t)
        + (inv_t - 1.0) * np.log(gamma)
        - gamma / theta
    )
    ll = (
        log_gamma_prior
        + (dataset.delta1 + dataset.delta2) * np.log(gamma)
        + _event_log_terms(terms)
        - gamma * terms.b_tilde_sum
    )
    return float(np.sum(ll))


def case_log_likelihood(record: ObservedRecord, gamma: float, state: ModelState) -> float:
    """Per-subject complete-data log likelihood via the four-case product.

    Dispatches on (delta1, delta2): both events, terminal only, non-terminal
    only, neither.  Serves as an independent oracle for
    :func:`complete_data_log_likelihood` (matches it term for term, gamma
    prior included).
    """
    theta = state.theta
    inv_t = 1.0 / theta
    x = np.atleast_2d(record.covariates)
    h1, h2, h3 = state.risk_values(x)[0]
    y1, y2 = record.y1, record.y2
    d1, d2 = int(record.delta1), int(record.delta2)
    soj = max(y2 - y1, 0.0)

    log_prior = (
        -inv_t * math.log(theta)
        - math.lgamma(inv_t)
        + (inv_t - 1.0) * math.log(gamma)
        - gamma / theta
    )
    # S(y1, y1 | gamma): event-free through the first transition time
    log_s_first = -gamma * (
        state.lambda01.cumulative(y1) * math.exp(h1)
        + state.lambda02.cumulative(y1) * math.exp(h2)
    )
    # S_{2|1}(y2 | y1, gamma): sojourn survival after the non-terminal event
    log_s_sojourn = -gamma * state.lambda03.cumulative(soj) * math.exp(h3)

    def event(haz, h, label):
        if haz <= 0:
            raise NonFiniteLikelihoodError(
                f"zero baseline hazard at the observed {label} event time"
            )
        return math.log(gamma * haz) + h

    if d1 == 1 and d2 == 1:
        return (
            log_prior
            + log_s_first
            + event(state.lambda01.hazard_at(y1), h1, "transition-1")
            + log_s_sojourn
            + event(state.lambda03.hazard_at(soj), h3, "transition-3")
        )
    if d1 == 0 and d2 == 1:
        return (
            log_prior
            + log_s_first
            + event(state.lambda02.hazard_at(y2), h2, "transition-2")
        )
    if d1 == 1 and d2 == 0:
        return (
            log_prior
            + log_s_first
            + event(state.lambda01.hazard_at(y1), h1, "transition-1")
            + log_s_sojourn
        )
    return log_prior + log_s_first


def observed_log_likelihood(dataset: Dataset, state: ModelState) -> float:
    """Marginal (gamma integrated out) log likelihood of the observed data.

    Per subject: log Gamma(a~) - log Gamma(1/theta) - (1/theta) log theta
    - a~ log(b~) + event terms; a~, b~ are the posterior Gamma parameters.
    """
    theta = state.theta
    if theta <= 0:
        raise ValueError("theta must be positive")
    inv_t = 1.0 / theta
    terms = evaluate_terms(dataset, state)
    a_tilde = inv_t + dataset.delta1 + dataset.delta2
    b_tilde = inv_t + terms.b_tilde_sum
    ll = (
        gammaln(a_tilde)
        - math.lgamma(inv_t)
        - inv_t * math.log(theta)
        - a_tilde * np.log(b_tilde)
        + _event_log_terms(terms)
    )
    return float(np.sum(ll))


def joint_event_free_survival(covariates, t, state: ModelState):
    """pi(t) = Pr(T1 > t, T2 > t | x), marginal over the Gamma frailty.

    The Laplace-transform form (1 + theta * A)^(-1/theta) with
    A = Lambda01(t) e^{h1} + Lambda02(t) e^{h2}; reduces to exp(-A) in the
    theta -> 0 limit (applied below THETA_FRAILTY_FREE).
    """
    x = np.atleast_2d(np.asarray(covariates, dtype=float))
    h = state.risk_values(x)
    eh1 = np.exp(h[:, 0])
    eh2 = np.exp(h[:, 1])
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    lam1 = np.atleast_1d(state.lambda01.cumulative(t_arr))
    lam2 = np.atleast_1d(state.lambda02.cumulative(t_arr))
    # A has shape (n, k): subjects by time points
    A = np.outer(eh1, lam1) + np.outer(eh2, lam2)
    theta = state.theta
    if theta < THETA_FRAILTY_FREE:
        pi = np.exp(-A)
    else:
        pi = np.power(1.0 + theta * A, -1.0 / theta)
    if np.ndim(covariates) == 1 and np.ndim(t) == 0:
        return float(pi[0, 0])
    if np.ndim(covariates) == 1:
        return pi[0]
    if np.ndim(t) == 0:
        return pi[:, 0]
    return pi
