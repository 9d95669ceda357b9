"""Mini-batch Adam training of the numpy LSTM, plus checkpoint files."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lstm_core import (
    LstmConfig,
    LstmWeights,
    StructuralError,
    backward,
    forward,
    init_weights,
    mse_grad,
    mse_loss,
    predict,
)
from .pipeline import ScalerParams, SupervisedSet, unscale

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "qpforecast-lstm-checkpoint"
CHECKPOINT_VERSION = 1
CHECKPOINT_LAYOUT = (
    "blocks in order layer{l}.W (4*units x in_dim), layer{l}.U (4*units x units), "
    "layer{l}.b (4*units) for l = 0..num_layers-1, then dense.w (output_dim x units), "
    "dense.b (output_dim); gate rows stacked as input, forget, candidate, output; "
    "values flattened row-major"
)


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, block: str):
        super().__init__(f"non-finite gradient in parameter block {block}")
        self.block = block


class TrainingDiverged(RuntimeError):
    """Training loss went non-finite; ``last_good`` holds the last finite weights."""

    def __init__(self, epoch: int, last_good: LstmWeights, reason: str = ""):
        msg = f"training diverged in epoch {epoch}"
        super().__init__(f"{msg}: {reason}" if reason else msg)
        self.epoch = epoch
        self.last_good = last_good


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    shuffle: bool = True
    val_fraction: float = 0.1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if not 0 <= self.val_fraction < 1:
            raise ValueError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class OptimizerState:
    m: LstmWeights
    v: LstmWeights
    t: int = 0

    @classmethod
    def zeros(cls, weights: LstmWeights) -> OptimizerState:
        return cls(weights.zeros_like(), weights.zeros_like(), 0)


def _rebuild(template: LstmWeights, arrays: list[np.ndarray]) -> LstmWeights:
    L = template.config.num_layers
    return LstmWeights(
        template.config,
        [arrays[3 * l] for l in range(L)],
        [arrays[3 * l + 1] for l in range(L)],
        [arrays[3 * l + 2] for l in range(L)],
        arrays[3 * L],
        arrays[3 * L + 1],
    )


def adam_step(
    weights: LstmWeights,
    grads: LstmWeights,
    state: OptimizerState,
    config: TrainConfig,
) -> tuple[LstmWeights, OptimizerState]:
    """Bias-corrected adaptive-moment update. Inputs are left untouched."""
    t = state.t + 1
    b1, b2 = config.beta1, config.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    new_w, new_m, new_v = [], [], []
    for (name, w), (_, g), (_, m), (_, v) in zip(
        weights.named(), grads.named(), state.m.named(), state.v.named()
    ):
        if g.shape != w.shape:
            raise StructuralError(f"gradient for {name} has shape {g.shape}, expected {w.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(name)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        step = config.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + config.eps_hat)
        new_w.append(w - step)
        new_m.append(m)
        new_v.append(v)
    return (
        _rebuild(weights, new_w),
        OptimizerState(_rebuild(weights, new_m), _rebuild(weights, new_v), t),
    )


@dataclass
class LossHistory:
    train_loss: list[float] = field(default_factory=list)
    val_rmse: list[float] = field(default_factory=list)
    initial_loss: float = math.nan

    def __len__(self) -> int:
        return len(self.train_loss)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_rmse"])
            for e, loss in enumerate(self.train_loss, start=1):
                val = self.val_rmse[e - 1] if e - 1 < len(self.val_rmse) else math.nan
                w.writerow([e, format(loss, ".17g"), format(val, ".17g")])


def split_validation(data: SupervisedSet, fraction: float) -> tuple[SupervisedSet, SupervisedSet | None]:
    """Hold out the chronologically last ``fraction`` of the samples."""
    n_val = int(math.floor(fraction * len(data)))
    if n_val == 0:
        return data, None
    cut = len(data) - n_val
    return data.subset(slice(0, cut)), data.subset(slice(cut, None))


def _check_data(data: SupervisedSet, config: LstmConfig) -> None:
    if len(data) == 0:
        raise ValueError("training set is empty")
    if data.W != config.window:
        raise StructuralError(f"data window {data.W} vs model window {config.window}")
    if data.H != config.output_dim:
        raise StructuralError(f"data horizon {data.H} vs model outputs {config.output_dim}")


def train(
    data: SupervisedSet,
    lstm_config: LstmConfig,
    train_config: TrainConfig = TrainConfig(),
    scaler: ScalerParams | None = None,
    checkpoint_path: str | Path | None = None,
    init: LstmWeights | None = None,
) -> tuple[LstmWeights, LossHistory]:
    """Fit the network to ``data``.

    Validation RMSE is reported in original units when ``scaler`` is given,
    otherwise in scaled units. With ``checkpoint_path`` the weights are
    written after every epoch, so the file always holds the last good model.
    """
    _check_data(data, lstm_config)
    fit_set, val_set = split_validation(data, train_config.val_fraction)

    weights = init.copy() if init is not None else init_weights(lstm_config, train_config.seed)
    state = OptimizerState.zeros(weights)
    rng = np.random.default_rng([train_config.seed, 1])
    history = LossHistory()
    history.initial_loss = mse_loss(predict(weights, fit_set.inputs), fit_set.targets)

    n = len(fit_set)
    bs = train_config.batch_size
    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(n) if train_config.shuffle else np.arange(n)
        last_good = weights
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            x, y = fit_set.inputs[idx], fit_set.targets[idx]
            pred, cache = forward(weights, x)
            loss = mse_loss(pred, y)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, last_good, "loss is not finite")
            grads = backward(cache, mse_grad(pred, y))
            try:
                weights, state = adam_step(weights, grads, state, train_config)
            except NonFiniteGradientError as exc:
                raise TrainingDiverged(epoch, last_good, str(exc)) from exc
            total += loss * len(idx)
        history.train_loss.append(total / n)
        if val_set is not None:
            pv = predict(weights, val_set.inputs)
            if scaler is not None:
                pv, tv = unscale(pv, scaler), unscale(val_set.targets, scaler)
            else:
                tv = val_set.targets
            history.val_rmse.append(float(np.sqrt(np.mean((pv - tv) ** 2))))
        if checkpoint_path is not None:
            save_checkpoint(weights, scaler, checkpoint_path, extra={"epoch": epoch})
        log.info(
            "epoch %d/%d train_loss=%.6g val_rmse=%s",
            epoch, train_config.epochs, history.train_loss[-1],
            f"{history.val_rmse[-1]:.6g}" if history.val_rmse else "-",
        )
    return weights, history


def save_checkpoint(
    weights: LstmWeights,
    scaler: ScalerParams | None,
    path: str | Path,
    extra: dict | None = None,
) -> None:
    """Write a self-describing JSON checkpoint.

    Floats are written with ``repr`` precision, so loading gives back the
    exact same bits.
    """
    weights.validate()
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layout": CHECKPOINT_LAYOUT,
        "config": weights.config.to_dict(),
        "scaler": scaler.to_dict() if scaler is not None else None,
        "extra": extra or {},
        "blocks": [
            {"name": name, "shape": list(arr.shape), "length": int(arr.size),
             "values": arr.ravel().tolist()}
            for name, arr in weights.named()
        ],
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, indent=1) + "\n")
    tmp.replace(path)


def load_checkpoint(
    path: str | Path,
    expect: LstmConfig | None = None,
) -> tuple[LstmWeights, ScalerParams | None, dict]:
    """Read a checkpoint; returns ``(weights, scaler, extra)``.

    If ``expect`` is given, the stored architecture must match it.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is truncated or malformed: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {doc.get('version')!r} unsupported (expected {CHECKPOINT_VERSION})"
        )
    try:
        config = LstmConfig(**doc["config"])
    except (KeyError, TypeError, StructuralError) as exc:
        raise CheckpointError(f"bad config block: {exc}") from exc
    if expect is not None and expect != config:
        diffs = [f"{k}: file {getattr(config, k)} vs requested {getattr(expect, k)}"
                 for k in config.to_dict() if getattr(config, k) != getattr(expect, k)]
        raise CheckpointError("shape mismatch: " + "; ".join(diffs))

    template = init_weights(config, 0)
    arrays = []
    blocks = doc.get("blocks")
    if not isinstance(blocks, list) or len(blocks) != len(template.named()):
        raise CheckpointError("wrong number of parameter blocks")
    for (name, ref), block in zip(template.named(), blocks):
        try:
            values = np.asarray(block["values"], dtype=np.float64)
            shape = tuple(block["shape"])
            length = int(block["length"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"block {name}: {exc}") from exc
        if block.get("name") != name:
            raise CheckpointError(f"expected block {name}, found {block.get('name')!r}")
        if length != values.size:
            raise CheckpointError(
                f"block {name}: length field says {length} but {values.size} values present"
            )
        if shape != ref.shape or values.size != ref.size:
            raise CheckpointError(f"block {name}: shape {shape} does not match config {ref.shape}")
        if not np.all(np.isfinite(values)):
            raise CheckpointError(f"block {name} holds non-finite values")
        arrays.append(values.reshape(shape))
    weights = _rebuild(template, arrays)

    scaler = None
    if doc.get("scaler") is not None:
        try:
            scaler = ScalerParams(**doc["scaler"])
        except (TypeError, ValueError) as exc:
            raise CheckpointError(f"bad scaler block: {exc}") from exc
    return weights, scaler, doc.get("extra", {})
