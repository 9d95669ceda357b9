"""Chronological split, min-max scaling and sliding-window supervision."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class ConfigError(ValueError):
    pass


class DegenerateScaleError(ValueError):
    pass


@dataclass(frozen=True)
class ScalerParams:
    x_min: float
    x_max: float
    a: float = -1.0
    b: float = 1.0

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise DegenerateScaleError(
                f"x_max ({self.x_max}) must exceed x_min ({self.x_min})"
            )
        if not self.b > self.a:
            raise ConfigError(f"target range needs b > a, got [{self.a}, {self.b}]")

    @property
    def factor(self) -> float:
        """Ratio of original span to scaled span; multiplies scaled-space errors."""
        return (self.x_max - self.x_min) / (self.b - self.a)

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "a": self.a, "b": self.b}


@dataclass
class SupervisedSet:
    inputs: np.ndarray   # (samples, W)
    targets: np.ndarray  # (samples, H)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise ConfigError("inputs and targets must be 2-D (samples, length)")
        if len(self.inputs) != len(self.targets):
            raise ConfigError(
                f"{len(self.inputs)} input windows vs {len(self.targets)} targets"
            )

    @property
    def W(self) -> int:
        return self.inputs.shape[1]

    @property
    def H(self) -> int:
        return self.targets.shape[1]

    def __len__(self) -> int:
        return len(self.inputs)

    def subset(self, index) -> SupervisedSet:
        return SupervisedSet(self.inputs[index], self.targets[index])


def split(series: Sequence[float], train_fraction: float = 0.6) -> tuple[np.ndarray, np.ndarray]:
    """First ``floor(fraction * L)`` points train, the rest test. No shuffling."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    series = np.asarray(series, dtype=np.float64)
    if len(series) < 10:
        raise ConfigError(f"series needs at least 10 points, got {len(series)}")
    cut = int(np.floor(train_fraction * len(series)))
    if cut == 0 or cut == len(series):
        raise ConfigError(f"fraction {train_fraction} leaves an empty side")
    return series[:cut], series[cut:]


def fit_scaler(train: Sequence[float], a: float = -1.0, b: float = 1.0) -> ScalerParams:
    train = np.asarray(train, dtype=np.float64)
    if train.size == 0:
        raise ConfigError("cannot fit a scaler on an empty series")
    lo, hi = float(train.min()), float(train.max())
    if hi == lo:
        raise DegenerateScaleError(f"constant series (value {lo}) cannot be min-max scaled")
    return ScalerParams(lo, hi, a, b)


def scale(x, s: ScalerParams):
    """Affine map x_min -> a, x_max -> b. Works on scalars and arrays."""
    return s.a + (np.asarray(x, dtype=np.float64) - s.x_min) * (s.b - s.a) / (s.x_max - s.x_min)


def unscale(y, s: ScalerParams):
    return s.x_min + (np.asarray(y, dtype=np.float64) - s.a) * (s.x_max - s.x_min) / (s.b - s.a)


def window(series: Sequence[float], W: int = 1, H: int = 1) -> SupervisedSet:
    """Stride-1 windows: input ``series[i:i+W]``, target ``series[i+W:i+W+H]``."""
    if W < 1 or H < 1:
        raise ConfigError(f"window and horizon must be >= 1, got W={W}, H={H}")
    series = np.asarray(series, dtype=np.float64)
    if len(series) < W + H:
        raise ConfigError(
            f"series of length {len(series)} is too short; W={W}, H={H} need at least {W + H}"
        )
    frames = np.lib.stride_tricks.sliding_window_view(series, W + H)
    return SupervisedSet(frames[:, :W].copy(), frames[:, W:].copy())
