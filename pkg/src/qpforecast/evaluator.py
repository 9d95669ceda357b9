"""RMSE evaluation in original units, scatter export, unit sweeps and
multi-step horizon scoring."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .lstm_core import LstmConfig, LstmWeights, StructuralError, predict
from .pipeline import ScalerParams, SupervisedSet, unscale
from .trainer import TrainConfig, train

log = logging.getLogger(__name__)


def rmse(pred, actual) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.shape != actual.shape:
        raise StructuralError(f"prediction {pred.shape} vs actual {actual.shape}")
    if pred.size == 0:
        raise StructuralError("rmse of an empty sequence")
    return float(np.sqrt(np.mean((pred - actual) ** 2)))


@dataclass
class EvalReport:
    regime: str
    alpha: float
    eps_prime: float
    rmse: float
    per_step_rmse: list[float]
    actual: np.ndarray = field(repr=False)     # (n_test, H), original units
    predicted: np.ndarray = field(repr=False)  # (n_test, H), original units

    @property
    def n_test(self) -> int:
        return len(self.actual)

    @property
    def H(self) -> int:
        return self.actual.shape[1]

    def pairs(self, step: int = 1) -> np.ndarray:
        """(actual, predicted) columns for forecast step ``step`` (1-based)."""
        if not 1 <= step <= self.H:
            raise StructuralError(f"step {step} outside 1..{self.H}")
        return np.column_stack([self.actual[:, step - 1], self.predicted[:, step - 1]])


def _report(actual, predicted, regime, alpha, eps_prime) -> EvalReport:
    per_step = [rmse(predicted[:, k], actual[:, k]) for k in range(actual.shape[1])]
    return EvalReport(regime, alpha, eps_prime, rmse(predicted, actual), per_step,
                      actual, predicted)


def evaluate(
    weights: LstmWeights,
    scaler: ScalerParams,
    test: SupervisedSet,
    regime: str = "",
    alpha: float = math.nan,
    eps_prime: float = math.nan,
) -> EvalReport:
    """Score the model on ``test``; predictions are unscaled before any error is taken."""
    if len(test) == 0:
        raise StructuralError("empty test set")
    cfg = weights.config
    if test.W != cfg.window or test.H != cfg.output_dim:
        raise StructuralError(
            f"test windows (W={test.W}, H={test.H}) do not fit model "
            f"(W={cfg.window}, H={cfg.output_dim})"
        )
    predicted = unscale(predict(weights, test.inputs), scaler)
    actual = unscale(test.targets, scaler)
    return _report(actual, predicted, regime, alpha, eps_prime)


def recursive_forecast(weights: LstmWeights, inputs: np.ndarray, H: int) -> np.ndarray:
    """Closed-loop forecast: feed each one-step prediction back into the window.

    Works in scaled units; returns shape (samples, H).
    """
    if weights.config.output_dim != 1:
        raise StructuralError("recursive forecasting needs a one-output model")
    win = np.array(inputs, dtype=np.float64)
    out = np.empty((len(win), H))
    for k in range(H):
        nxt = predict(weights, win)[:, 0]
        out[:, k] = nxt
        win = np.column_stack([win[:, 1:], nxt])
    return out


def multistep_eval(
    model: LstmWeights | Sequence[LstmWeights],
    scaler: ScalerParams,
    test: SupervisedSet,
    H: int,
    mode: str = "direct",
) -> list[float]:
    """Per-step RMSE (original units) for forecast steps 1..H.

    ``model`` is either one network with H outputs (direct strategy), a list
    of H single-output networks where entry k forecasts step k+1, or, with
    ``mode="recursive"``, one single-output network iterated in closed loop.
    """
    if H < 2:
        raise StructuralError(f"multi-step evaluation needs H >= 2, got {H}")
    if test.H != H:
        raise StructuralError(f"test set horizon {test.H} does not match H={H}")
    if mode == "recursive":
        if not isinstance(model, LstmWeights):
            raise StructuralError("recursive mode takes a single one-step model")
        scaled = recursive_forecast(model, test.inputs, H)
    elif mode == "direct":
        if isinstance(model, LstmWeights):
            if model.config.output_dim != H:
                raise StructuralError(
                    f"model emits {model.config.output_dim} steps, expected {H}"
                )
            scaled = predict(model, test.inputs)
        else:
            models = list(model)
            if len(models) != H:
                raise StructuralError(f"{len(models)} per-horizon models for H={H}")
            scaled = np.column_stack([predict(m, test.inputs)[:, -1] for m in models])
    else:
        raise ValueError(f"unknown multi-step mode {mode!r}")
    predicted = unscale(scaled, scaler)
    actual = unscale(test.targets, scaler)
    return [rmse(predicted[:, k], actual[:, k]) for k in range(H)]


@dataclass
class SweepResult:
    units: int
    rmse: float
    error: str = ""


def unit_sweep(
    units_list: Sequence[int],
    train_set: SupervisedSet,
    test_set: SupervisedSet,
    scaler: ScalerParams,
    base_config: LstmConfig,
    train_config: TrainConfig = TrainConfig(),
    restarts: int = 1,
) -> list[SweepResult]:
    """Train and score one model per width (same width in every layer).

    Every width uses the same init seed. ``restarts > 1`` keeps the best of
    that many seeds (seed, seed+1, ...) instead. Failures are recorded per
    cell and do not stop the sweep.
    """
    if not units_list:
        raise ValueError("units_list is empty")
    results = []
    for units in units_list:
        if units < 1:
            results.append(SweepResult(units, math.nan, "units must be >= 1"))
            continue
        best = math.inf
        try:
            for r in range(restarts):
                cfg = replace(base_config, units=units)
                tc = replace(train_config, seed=train_config.seed + r)
                weights, _ = train(train_set, cfg, tc, scaler=scaler)
                best = min(best, evaluate(weights, scaler, test_set).rmse)
        except Exception as exc:  # one bad cell must not sink the sweep
            log.warning("unit sweep cell %d failed: %s", units, exc)
            results.append(SweepResult(units, math.nan, f"{type(exc).__name__}: {exc}"))
            continue
        log.info("units=%d rmse=%.6g", units, best)
        results.append(SweepResult(units, best))
    return results


def write_sweep_csv(results: Sequence[SweepResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["units", "rmse"])
        for r in results:
            w.writerow([r.units, format(r.rmse, ".17g")])


def emit_scatter(report: EvalReport, path: str | Path, step: int = 1) -> Path:
    """Write ``actual,predicted`` rows for one forecast step.

    A one-line sidecar ``<stem>.summary.txt`` carries the RMSE of that step.
    Returns the sidecar path.
    """
    path = Path(path)
    pairs = report.pairs(step)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["actual", "predicted"])
        for a, p in pairs.tolist():
            w.writerow([format(a, ".17g"), format(p, ".17g")])
    sidecar = path.with_name(path.stem + ".summary.txt")
    sidecar.write_text(
        f"rmse={format(report.per_step_rmse[step - 1], '.17g')} step={step} n={report.n_test}\n"
    )
    return sidecar


def read_scatter(path: str | Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def summary_dict(report: EvalReport, W: int, H: int, units: int, seed: int) -> dict:
    return {
        "regime": report.regime,
        "alpha": report.alpha,
        "eps_prime": report.eps_prime,
        "W": W,
        "H": H,
        "units": units,
        "seed": seed,
        "rmse": report.rmse,
        "per_step_rmse": list(report.per_step_rmse),
    }


def write_summary(summary: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
