import numpy as np
import pytest

from neuralscr.core import Dataset, LinearRisk, ModelState, StepHazard, ZeroRisk
from neuralscr.simulate import SimConfig, simulate


def random_step_hazard(rng, max_jumps=12, t_max=3.0):
    k = rng.integers(1, max_jumps + 1)
    times = np.sort(rng.uniform(0.05, t_max, size=k))
    times = np.unique(times)
    sizes = rng.uniform(0.01, 0.5, size=len(times))
    return StepHazard(times, sizes)


def random_dataset(rng, n=50, p=2, censoring=0.3):
    """Small valid dataset with all four observation cases represented."""
    x = rng.standard_normal((n, p)) if p else np.zeros((n, 0))
    t1 = rng.exponential(1.0, size=n)
    t2_direct = rng.exponential(1.3, size=n)
    prog = t1 < t2_direct
    soj = rng.exponential(0.7, size=n)
    t_death = np.where(prog, t1 + soj, t2_direct)
    t_prog = np.where(prog, t1, np.inf)
    c = rng.exponential(1.0 / censoring, size=n) if censoring > 0 else np.full(n, np.inf)
    y2 = np.minimum(t_death, c)
    d2 = (t_death <= c).astype(float)
    y1 = np.minimum(t_prog, y2)
    d1 = (t_prog <= y2).astype(float)
    return Dataset(y1, d1, y2, d2, x)


def random_state(rng, p=2, risk="linear"):
    if risk == "linear":
        model = LinearRisk(rng.normal(0, 0.4, size=(3, p)))
    else:
        model = ZeroRisk()
    return ModelState(
        lambda01=random_step_hazard(rng),
        lambda02=random_step_hazard(rng),
        lambda03=random_step_hazard(rng),
        theta=float(rng.uniform(0.2, 2.0)),
        risk_model=model,
    )


def event_anchored_state(rng, dataset, theta=None, risk="linear"):
    """State whose baselines jump at the dataset's own event times, so every
    event carries positive mass (valid likelihood evaluations)."""
    ev2 = (1.0 - dataset.delta1) * dataset.delta2
    ev3 = dataset.delta1 * dataset.delta2
    t1 = np.unique(dataset.y1[dataset.delta1 == 1])
    t2 = np.unique(dataset.y2[ev2 == 1])
    t3 = np.unique(dataset.sojourn[ev3 == 1])

    def hz(times):
        if len(times) == 0:
            return StepHazard.empty()
        return StepHazard(times, rng.uniform(0.02, 0.3, size=len(times)))

    if risk == "linear":
        model = LinearRisk(rng.normal(0, 0.4, size=(3, dataset.p)))
    else:
        model = ZeroRisk()
    return ModelState(
        lambda01=hz(t1),
        lambda02=hz(t2),
        lambda03=hz(t3),
        theta=float(theta if theta is not None else rng.uniform(0.2, 2.0)),
        risk_model=model,
    )


@pytest.fixture(scope="session")
def linear_sim_small():
    """One simulated linear dataset reused by several test modules."""
    return simulate(SimConfig(n=400, theta=0.5, risk_kind="linear", seed=42))
