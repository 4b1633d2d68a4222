"""File formats: dataset/trace/prediction CSVs and model snapshot JSON.

Dataset CSV: header ``y1,delta1,y2,delta2,x1,...,xp``, times as decimal
strings, indicators as 0/1.  Model snapshots are JSON: step-baseline models
carry theta, per-transition jump arrays, and the risk-model payload (neural
layer objects or linear coefficients); parametric models carry phi, beta,
theta.
"""

from __future__ import annotations

import csv
import json
from typing import Union

import numpy as np

from .core import Dataset, LinearRisk, ModelState, StepHazard, ZeroRisk
from .neural import NeuralRisk, RiskNetwork
from .weibull import ParametricModel


def _fmt(v) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# dataset CSV
# ---------------------------------------------------------------------------


def write_dataset_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["y1", "delta1", "y2", "delta2"] + [f"x{j + 1}" for j in range(dataset.p)]
        )
        for i in range(dataset.n):
            writer.writerow(
                [_fmt(dataset.y1[i]), int(dataset.delta1[i]),
                 _fmt(dataset.y2[i]), int(dataset.delta2[i])]
                + [_fmt(v) for v in dataset.x[i]]
            )


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = ["y1", "delta1", "y2", "delta2"]
        if header[:4] != expected:
            raise ValueError(f"dataset CSV must start with columns {expected}")
        p = len(header) - 4
        rows = [row for row in reader if row]
    n = len(rows)
    y1 = np.empty(n)
    d1 = np.empty(n)
    y2 = np.empty(n)
    d2 = np.empty(n)
    x = np.empty((n, p))
    for i, row in enumerate(rows):
        y1[i], d1[i], y2[i], d2[i] = (float(v) for v in row[:4])
        x[i] = [float(v) for v in row[4:]]
    return Dataset(y1, d1, y2, d2, x)


def write_truth_csv(truth, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gamma", "h1", "h2", "h3", "t1_true", "t2_true", "c"])
        for i in range(len(truth.gamma)):
            writer.writerow(
                [_fmt(truth.gamma[i])]
                + [_fmt(v) for v in truth.h[i]]
                + [_fmt(truth.t1_true[i]), _fmt(truth.t2_true[i]), _fmt(truth.c[i])]
            )


# ---------------------------------------------------------------------------
# model snapshots
# ---------------------------------------------------------------------------


def _network_to_json(net: RiskNetwork) -> list:
    layers = []
    n_layers = len(net.weights)
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        layers.append(
            {
                "W": w.tolist(),
                "b": b.tolist(),
                "activation": "relu" if l < n_layers - 1 else "linear",
            }
        )
    return layers


def _network_from_json(layers: list) -> RiskNetwork:
    return RiskNetwork(
        [np.asarray(layer["W"], dtype=float) for layer in layers],
        [np.asarray(layer["b"], dtype=float) for layer in layers],
    )


def state_to_json(state: ModelState) -> dict:
    baselines = []
    for g, hz in enumerate(state.baselines, start=1):
        if not isinstance(hz, StepHazard):
            raise TypeError("state snapshots expect step baselines; "
                            "use parametric_to_json for Weibull models")
        baselines.append(
            {
                "transition": g,
                "jump_times": hz.jump_times.tolist(),
                "jump_sizes": hz.jump_sizes.tolist(),
            }
        )
    risk = state.risk_model
    if isinstance(risk, NeuralRisk):
        risk_json = {
            "kind": "neural",
            "sub_networks": [_network_to_json(net) for net in risk.networks],
            "xi": float(np.log(state.theta)),
        }
    elif isinstance(risk, LinearRisk):
        risk_json = {"kind": "linear", "coefficients": risk.beta.tolist()}
    elif isinstance(risk, ZeroRisk):
        risk_json = {"kind": "zero"}
    else:
        raise TypeError(f"cannot serialize risk model {type(risk).__name__}")
    return {"theta": state.theta, "baselines": baselines, "risk_model": risk_json}


def state_from_json(doc: dict) -> ModelState:
    hazards = {}
    for entry in doc["baselines"]:
        hz = (
            StepHazard(entry["jump_times"], entry["jump_sizes"])
            if entry["jump_times"]
            else StepHazard.empty()
        )
        hazards[int(entry["transition"])] = hz
    risk_doc = doc["risk_model"]
    kind = risk_doc["kind"]
    if kind == "neural":
        risk = NeuralRisk([_network_from_json(layers) for layers in risk_doc["sub_networks"]])
    elif kind == "linear":
        risk = LinearRisk(np.asarray(risk_doc["coefficients"], dtype=float))
    elif kind == "zero":
        risk = ZeroRisk()
    else:
        raise ValueError(f"unknown risk model kind {kind!r}")
    return ModelState(
        lambda01=hazards[1], lambda02=hazards[2], lambda03=hazards[3],
        theta=float(doc["theta"]), risk_model=risk,
    )


def parametric_to_json(model: ParametricModel) -> dict:
    return {
        "phi": model.phi.tolist(),
        "beta": model.beta.tolist(),
        "theta": model.theta,
    }


def parametric_from_json(doc: dict) -> ParametricModel:
    return ParametricModel(
        phi=np.asarray(doc["phi"], dtype=float),
        beta=np.asarray(doc["beta"], dtype=float),
        theta=float(doc["theta"]),
    )


def save_model(model: Union[ModelState, ParametricModel], path) -> None:
    doc = (
        parametric_to_json(model)
        if isinstance(model, ParametricModel)
        else state_to_json(model)
    )
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> Union[ModelState, ParametricModel]:
    """Load either snapshot flavor, sniffing on the `phi` key."""
    with open(path) as fh:
        doc = json.load(fh)
    if "phi" in doc:
        return parametric_from_json(doc)
    return state_from_json(doc)


# ---------------------------------------------------------------------------
# run artifacts
# ---------------------------------------------------------------------------


def write_trace_csv(trace_rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "obs_loglik", "theta", "q1", "q2", "q3", "q4"])
        for row in trace_rows:
            writer.writerow([row[0]] + [_fmt(v) for v in row[1:]])


def write_predictions_csv(times, predictions, path) -> None:
    """Long-format predictions: one (subject, t, pi) row per pair."""
    predictions = np.atleast_2d(np.asarray(predictions, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject", "t", "pi"])
        for i in range(predictions.shape[0]):
            for j, t in enumerate(times):
                writer.writerow([i, _fmt(t), _fmt(predictions[i, j])])


def read_predictions_csv(path):
    """Return (times, (n, k) prediction matrix) from the long format."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["subject", "t", "pi"]:
            raise ValueError("predictions CSV must have columns subject,t,pi")
        by_time: dict = {}
        for row in reader:
            if not row:
                continue
            i, t, pi = int(row[0]), float(row[1]), float(row[2])
            by_time.setdefault(t, {})[i] = pi
    times = sorted(by_time)
    n = 1 + max(max(v) for v in by_time.values())
    preds = np.full((n, len(times)), np.nan)
    for j, t in enumerate(times):
        for i, pi in by_time[t].items():
            preds[i, j] = pi
    if np.any(np.isnan(preds)):
        raise ValueError("predictions CSV is missing (subject, t) pairs")
    return np.asarray(times), preds


def write_bbs_csv(curve, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "bbs"])
        for t, v in zip(curve.grid, curve.values):
            writer.writerow([_fmt(t), _fmt(v)])


def write_bbs_summary(curve, n_points: int, path) -> None:
    with open(path, "w") as fh:
        json.dump(
            {"ibbs": curve.integrated, "horizon": curve.horizon, "n_points": n_points},
            fh,
        )


def write_table_csv(rows: list[dict], path) -> None:
    """Generic results table; column order follows the first row."""
    if not rows:
        raise ValueError("no rows to write")
    fields = list(rows[0])
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_table_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]
