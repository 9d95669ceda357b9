"""Stacked LSTM regressor written directly in numpy.

Gate parameters of one layer are stored stacked along the first axis in the
order (input i, forget f, candidate g, output o)::

    z = x W^T + h U^T + b          W: (4u, in), U: (4u, u), b: (4u,)
    i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
    c' = f * c + i * g;  h' = o * tanh(c')

A linear dense head maps the top layer's last hidden state to the H outputs.
States start at zero for every window. Everything is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GATES = ("i", "f", "g", "o")


class StructuralError(ValueError):
    """Shapes of inputs, weights or caches do not agree."""


@dataclass(frozen=True)
class LstmConfig:
    num_layers: int = 2
    units: int = 16
    input_dim: int = 1
    output_dim: int = 1
    window: int = 1

    def __post_init__(self):
        for name in ("num_layers", "units", "input_dim", "output_dim", "window"):
            if getattr(self, name) < 1:
                raise StructuralError(f"{name} must be >= 1, got {getattr(self, name)}")

    def to_dict(self) -> dict:
        return {
            "num_layers": self.num_layers,
            "units": self.units,
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "window": self.window,
        }


@dataclass
class LstmWeights:
    config: LstmConfig
    W: list[np.ndarray]
    U: list[np.ndarray]
    b: list[np.ndarray]
    dense_w: np.ndarray
    dense_b: np.ndarray

    def named(self) -> list[tuple[str, np.ndarray]]:
        """Parameter blocks in the fixed serialization order."""
        out = []
        for l in range(self.config.num_layers):
            out.append((f"layer{l}.W", self.W[l]))
            out.append((f"layer{l}.U", self.U[l]))
            out.append((f"layer{l}.b", self.b[l]))
        out.append(("dense.w", self.dense_w))
        out.append(("dense.b", self.dense_b))
        return out

    def gate(self, kind: str, layer: int, gate: str) -> np.ndarray:
        """View of one gate's block, e.g. ``gate("b", 0, "f")``."""
        u = self.config.units
        k = GATES.index(gate)
        return getattr(self, kind)[layer][k * u:(k + 1) * u]

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {name: arr.shape for name, arr in self.named()}

    def copy(self) -> LstmWeights:
        return LstmWeights(
            self.config,
            [w.copy() for w in self.W],
            [u.copy() for u in self.U],
            [b.copy() for b in self.b],
            self.dense_w.copy(),
            self.dense_b.copy(),
        )

    def zeros_like(self) -> LstmWeights:
        return LstmWeights(
            self.config,
            [np.zeros_like(w) for w in self.W],
            [np.zeros_like(u) for u in self.U],
            [np.zeros_like(b) for b in self.b],
            np.zeros_like(self.dense_w),
            np.zeros_like(self.dense_b),
        )

    def validate(self) -> None:
        cfg = self.config
        u = cfg.units
        if not (len(self.W) == len(self.U) == len(self.b) == cfg.num_layers):
            raise StructuralError("per-layer weight lists do not match num_layers")
        for l in range(cfg.num_layers):
            in_dim = cfg.input_dim if l == 0 else u
            expect = {"W": (4 * u, in_dim), "U": (4 * u, u), "b": (4 * u,)}
            for kind, shape in expect.items():
                got = getattr(self, kind)[l].shape
                if got != shape:
                    raise StructuralError(f"layer{l}.{kind} has shape {got}, expected {shape}")
        if self.dense_w.shape != (cfg.output_dim, u):
            raise StructuralError(f"dense.w has shape {self.dense_w.shape}")
        if self.dense_b.shape != (cfg.output_dim,):
            raise StructuralError(f"dense.b has shape {self.dense_b.shape}")


def init_weights(config: LstmConfig, seed: int = 0) -> LstmWeights:
    """Uniform(-k, k) with k = 1/sqrt(fan_in); forget-gate bias 1, other biases 0."""
    rng = np.random.default_rng(seed)
    u = config.units
    W, U, b = [], [], []
    for l in range(config.num_layers):
        in_dim = config.input_dim if l == 0 else u
        k_in = 1.0 / np.sqrt(in_dim)
        k_rec = 1.0 / np.sqrt(u)
        W.append(rng.uniform(-k_in, k_in, size=(4 * u, in_dim)))
        U.append(rng.uniform(-k_rec, k_rec, size=(4 * u, u)))
        bias = np.zeros(4 * u)
        bias[u:2 * u] = 1.0
        b.append(bias)
    k = 1.0 / np.sqrt(u)
    dense_w = rng.uniform(-k, k, size=(config.output_dim, u))
    dense_b = np.zeros(config.output_dim)
    return LstmWeights(config, W, U, b, dense_w, dense_b)


def sigmoid(z):
    """Logistic function, evaluated without overflow for large |z|."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass
class CellCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    z: np.ndarray  # gate pre-activations, stacked (i, f, g, o)
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray


def cell_forward(x_t, h_prev, c_prev, W, U, b):
    """Advance one LSTM layer by one time step.

    ``x_t`` is (batch, in) and the states are (batch, units); 1-D inputs are
    treated as a batch of one.
    """
    x_t = np.atleast_2d(x_t)
    h_prev = np.atleast_2d(h_prev)
    c_prev = np.atleast_2d(c_prev)
    u = U.shape[1]
    if W.shape != (4 * u, x_t.shape[1]) or U.shape != (4 * u, u) or b.shape != (4 * u,):
        raise StructuralError(
            f"cell weights W{W.shape} U{U.shape} b{b.shape} do not fit input width {x_t.shape[1]}"
        )
    if h_prev.shape[1] != u or c_prev.shape != h_prev.shape:
        raise StructuralError(f"state shapes {h_prev.shape}, {c_prev.shape} vs {u} units")

    z = x_t @ W.T + h_prev @ U.T + b
    i = sigmoid(z[:, :u])
    f = sigmoid(z[:, u:2 * u])
    g = np.tanh(z[:, 2 * u:3 * u])
    o = sigmoid(z[:, 3 * u:])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, CellCache(x_t, h_prev, c_prev, z, i, f, g, o, c, tanh_c)


@dataclass
class ForwardCache:
    weights: LstmWeights
    cells: list[list[CellCache]]  # [layer][t]
    h_top: np.ndarray
    pred_shape: tuple[int, ...]
    single: bool = field(default=False)


def _as_batch(windows, config: LstmConfig) -> tuple[np.ndarray, bool]:
    x = np.asarray(windows, dtype=np.float64)
    single = False
    if config.input_dim == 1 and x.ndim <= 2:
        if x.ndim == 1:
            x = x[None, :]
            single = True
        x = x[:, :, None]
    elif x.ndim == 2:
        x = x[None]
        single = True
    if x.ndim != 3 or x.shape[2] != config.input_dim:
        raise StructuralError(f"cannot read windows of shape {np.shape(windows)}")
    if x.shape[1] != config.window:
        raise StructuralError(
            f"window length {x.shape[1]} does not match model window {config.window}"
        )
    return x, single


def forward(weights: LstmWeights, windows, keep_cache: bool = True):
    """Run windows of shape (batch, W) -- or a single (W,) window -- through the net.

    Returns ``(pred, cache)`` with ``pred`` of shape (batch, H), or (H,) for a
    single window. ``cache`` is ``None`` when ``keep_cache`` is false.
    """
    cfg = weights.config
    x, single = _as_batch(windows, cfg)
    batch, T, _ = x.shape
    u = cfg.units
    layer_in = [x[:, t, :] for t in range(T)]
    cells: list[list[CellCache]] = []
    for l in range(cfg.num_layers):
        h = np.zeros((batch, u))
        c = np.zeros((batch, u))
        outs, caches = [], []
        for t in range(T):
            h, c, cc = cell_forward(layer_in[t], h, c, weights.W[l], weights.U[l], weights.b[l])
            outs.append(h)
            if keep_cache:
                caches.append(cc)
        cells.append(caches)
        layer_in = outs
    h_top = layer_in[-1]
    pred = h_top @ weights.dense_w.T + weights.dense_b
    cache = ForwardCache(weights, cells, h_top, pred.shape, single) if keep_cache else None
    if single:
        pred = pred[0]
    return pred, cache


def predict(weights: LstmWeights, windows, batch_size: int = 8192) -> np.ndarray:
    x = np.asarray(windows, dtype=np.float64)
    if x.ndim == 1:
        return forward(weights, x, keep_cache=False)[0]
    parts = [forward(weights, x[s:s + batch_size], keep_cache=False)[0]
             for s in range(0, len(x), batch_size)]
    return np.concatenate(parts, axis=0)


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise StructuralError(f"prediction {pred.shape} vs target {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred, target) -> np.ndarray:
    """d mse_loss / d pred."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise StructuralError(f"prediction {pred.shape} vs target {target.shape}")
    return 2.0 * (pred - target) / pred.size


def backward(cache: ForwardCache, loss_grad) -> LstmWeights:
    """Backpropagation through time; returns gradients laid out like the weights."""
    if cache is None or not cache.cells or not cache.cells[0]:
        raise StructuralError("backward needs a cache from forward(..., keep_cache=True)")
    weights = cache.weights
    cfg = weights.config
    dpred = np.asarray(loss_grad, dtype=np.float64)
    if cache.single and dpred.ndim == 1:
        dpred = dpred[None, :]
    if dpred.shape != cache.pred_shape:
        raise StructuralError(f"loss gradient {dpred.shape} does not match prediction {cache.pred_shape}")
    if len(cache.cells) != cfg.num_layers:
        raise StructuralError("cache depth does not match the model")

    grads = weights.zeros_like()
    grads.dense_w = dpred.T @ cache.h_top
    grads.dense_b = dpred.sum(axis=0)

    T = len(cache.cells[0])
    u = cfg.units
    d_above: list[np.ndarray | None] = [None] * T
    d_above[T - 1] = dpred @ weights.dense_w
    for l in reversed(range(cfg.num_layers)):
        W, U = weights.W[l], weights.U[l]
        dW, dU, db = grads.W[l], grads.U[l], grads.b[l]
        dh_next = np.zeros_like(cache.h_top)
        dc_next = np.zeros_like(cache.h_top)
        d_below: list[np.ndarray | None] = [None] * T
        for t in reversed(range(T)):
            cc = cache.cells[l][t]
            dh = dh_next if d_above[t] is None else dh_next + d_above[t]
            do = dh * cc.tanh_c
            dc = dc_next + dh * cc.o * (1.0 - cc.tanh_c ** 2)
            di = dc * cc.g
            dg = dc * cc.i
            df = dc * cc.c_prev
            dc_next = dc * cc.f
            dz = np.empty_like(cc.z)
            dz[:, :u] = di * cc.i * (1.0 - cc.i)
            dz[:, u:2 * u] = df * cc.f * (1.0 - cc.f)
            dz[:, 2 * u:3 * u] = dg * (1.0 - cc.g ** 2)
            dz[:, 3 * u:] = do * cc.o * (1.0 - cc.o)
            dW += dz.T @ cc.x
            dU += dz.T @ cc.h_prev
            db += dz.sum(axis=0)
            d_below[t] = dz @ W
            dh_next = dz @ U
        d_above = d_below
    return grads
