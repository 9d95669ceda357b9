"""Quasiperiodically forced logistic map.

    x_{n+1}   = alpha * (1 + epsilon * cos(2 pi phi_n)) * x_n * (1 - x_n)
    phi_{n+1} = (phi_n + omega) mod 1

with the golden-mean drive frequency omega = (sqrt(5) - 1) / 2 by default.
The forcing amplitude is usually quoted through the rescaled drive
eps' = epsilon / (4 / alpha - 1), which maps the admissible region
alpha * (1 + epsilon) <= 4 onto eps' in [0, 1].

All iteration here is scalar Python float arithmetic so that a stored
trajectory can be replayed bit-for-bit with :func:`step`.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

GOLDEN_OMEGA = (math.sqrt(5.0) - 1.0) / 2.0
TWO_PI = 2.0 * math.pi

DEFAULT_X0 = 0.3
DEFAULT_PHI0 = 0.0
DEFAULT_BURN_IN = 1000


class MapDomainError(ValueError):
    """Map parameters or initial conditions outside the admissible region."""


class DivergenceError(RuntimeError):
    def __init__(self, index: int, value: float):
        super().__init__(f"orbit left [0, 1] at iteration {index} (x = {value!r})")
        self.index = index
        self.value = value


class SingularTermError(ArithmeticError):
    """A log term of the Lyapunov sum was exactly zero (orbit hit x = 1/2)."""

    def __init__(self, index: int):
        super().__init__(
            f"log|f'(x)| is singular at orbit step {index}; perturb x0 and retry"
        )
        self.index = index


@dataclass(frozen=True)
class MapParams:
    alpha: float
    epsilon: float = 0.0
    omega: float = GOLDEN_OMEGA

    def __post_init__(self):
        if not 0.0 < self.alpha <= 4.0:
            raise MapDomainError(f"alpha must lie in (0, 4], got {self.alpha}")
        if not 0.0 <= self.epsilon <= 1.0:
            # epsilon > 1 turns the forcing factor negative for some phases
            raise MapDomainError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not 0.0 < self.omega < 1.0:
            raise MapDomainError(f"omega must lie in (0, 1), got {self.omega}")
        if self.alpha * (1.0 + self.epsilon) > 4.0:
            raise MapDomainError(
                f"alpha*(1+epsilon) = {self.alpha * (1.0 + self.epsilon)!r} exceeds 4; "
                "the orbit could leave [0, 1]"
            )

    @classmethod
    def from_prime(cls, alpha: float, eps_prime: float, omega: float = GOLDEN_OMEGA) -> MapParams:
        """Build parameters from the rescaled drive eps'.

        eps' = 1 puts alpha*(1+epsilon) on the boundary value 4; when rounding
        lands a hair above it, epsilon is nudged down by a few ulps.
        """
        eps = epsilon_from_prime(alpha, ScaledDrive(eps_prime))
        for _ in range(8):
            if alpha * (1.0 + eps) <= 4.0:
                break
            eps = math.nextafter(eps, 0.0)
        return cls(alpha=alpha, epsilon=eps, omega=omega)

    @property
    def eps_prime(self) -> float:
        if self.alpha >= 4.0:
            return 0.0
        return prime_from_epsilon(self.alpha, self.epsilon)


@dataclass(frozen=True)
class ScaledDrive:
    epsilon_prime: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon_prime <= 1.0:
            raise MapDomainError(f"eps' must lie in [0, 1], got {self.epsilon_prime}")


def _check_alpha_for_prime(alpha: float) -> None:
    if not 0.0 < alpha < 4.0:
        raise MapDomainError(f"rescaled drive needs alpha in (0, 4), got {alpha}")


def epsilon_from_prime(alpha: float, drive: ScaledDrive | float) -> float:
    """Raw forcing amplitude epsilon = eps' * (4/alpha - 1)."""
    _check_alpha_for_prime(alpha)
    if not isinstance(drive, ScaledDrive):
        drive = ScaledDrive(float(drive))
    return drive.epsilon_prime * (4.0 / alpha - 1.0)


def prime_from_epsilon(alpha: float, epsilon: float) -> float:
    _check_alpha_for_prime(alpha)
    return epsilon / (4.0 / alpha - 1.0)


def step(x: float, phi: float, params: MapParams) -> tuple[float, float]:
    """One application of the map."""
    assert 0.0 <= x <= 1.0, f"x = {x} outside [0, 1]"
    assert 0.0 <= phi < 1.0, f"phi = {phi} outside [0, 1)"
    x_next = params.alpha * (1.0 + params.epsilon * math.cos(TWO_PI * phi)) * x * (1.0 - x)
    phi_next = (phi + params.omega) % 1.0
    return x_next, phi_next


@dataclass
class Trajectory:
    x: np.ndarray
    phi: np.ndarray
    params: MapParams
    burn_in: int = 0
    x0: float = field(default=DEFAULT_X0)
    phi0: float = field(default=DEFAULT_PHI0)

    def __len__(self) -> int:
        return len(self.x)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "x", "phi"])
            for i, (xv, pv) in enumerate(zip(self.x.tolist(), self.phi.tolist())):
                w.writerow([i, format(xv, ".17g"), format(pv, ".17g")])

    @staticmethod
    def read_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
        """Read back the ``x`` and ``phi`` columns of an exported trajectory."""
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return data[:, 1].copy(), data[:, 2].copy()


def _check_start(x0: float, phi0: float) -> None:
    if not 0.0 < x0 < 1.0:
        raise MapDomainError(f"x0 must lie in (0, 1), got {x0}")
    if not 0.0 <= phi0 < 1.0:
        raise MapDomainError(f"phi0 must lie in [0, 1), got {phi0}")


def iterate(
    params: MapParams,
    x0: float = DEFAULT_X0,
    phi0: float = DEFAULT_PHI0,
    n: int = 100_000,
    burn_in: int = DEFAULT_BURN_IN,
) -> Trajectory:
    """Discard ``burn_in`` transient steps, then record ``n`` states.

    The recorded states start with the state reached after the transient
    (with ``burn_in=0`` the first entry is ``(x0, phi0)`` itself).
    """
    _check_start(x0, phi0)
    if n < 1:
        raise MapDomainError(f"n must be >= 1, got {n}")
    if burn_in < 0:
        raise MapDomainError(f"burn_in must be >= 0, got {burn_in}")

    alpha, eps, omega = params.alpha, params.epsilon, params.omega
    cos = math.cos
    xs = [0.0] * n
    phis = [0.0] * n
    x, phi = x0, phi0
    for i in range(burn_in + n):
        if not 0.0 <= x <= 1.0:
            raise DivergenceError(i, x)
        k = i - burn_in
        if k >= 0:
            xs[k] = x
            phis[k] = phi
            if k == n - 1:
                break
        # same expression as step(); keeps stored successors bit-exact
        x = alpha * (1.0 + eps * cos(TWO_PI * phi)) * x * (1.0 - x)
        phi = (phi + omega) % 1.0
    return Trajectory(np.array(xs), np.array(phis), params, burn_in, x0, phi0)


def lyapunov(
    params: MapParams,
    x0: float = DEFAULT_X0,
    phi0: float = DEFAULT_PHI0,
    n: int = 100_000,
    burn_in: int = DEFAULT_BURN_IN,
) -> float:
    """Orbit average of ln|alpha (1 + epsilon cos 2 pi phi) (1 - 2x)|.

    Raises :class:`SingularTermError` if a term is exactly zero rather than
    skipping it.
    """
    _check_start(x0, phi0)
    if n < 1:
        raise MapDomainError(f"n must be >= 1, got {n}")
    alpha, eps, omega = params.alpha, params.epsilon, params.omega
    cos, log = math.cos, math.log
    x, phi = x0, phi0
    for i in range(burn_in):
        x = alpha * (1.0 + eps * cos(TWO_PI * phi)) * x * (1.0 - x)
        phi = (phi + omega) % 1.0
    if not 0.0 <= x <= 1.0:
        raise DivergenceError(burn_in, x)

    total = 0.0
    for k in range(n):
        r = alpha * (1.0 + eps * cos(TWO_PI * phi))
        d = abs(r * (1.0 - 2.0 * x))
        if d == 0.0:
            raise SingularTermError(k)
        total += log(d)
        x = r * x * (1.0 - x)
        phi = (phi + omega) % 1.0
        if not 0.0 <= x <= 1.0:
            raise DivergenceError(burn_in + k + 1, x)
    return total / n


@dataclass(frozen=True)
class ScanCell:
    alpha: float
    eps_prime: float
    lam: float
    cls: str  # "chaotic" | "nonchaotic" | "error"
    message: str = ""


def classify(lam: float) -> str:
    return "chaotic" if lam > 0.0 else "nonchaotic"


def _scan_cell(args) -> ScanCell:
    alpha, eps_prime, n, burn_in, x0, phi0, omega = args
    try:
        if alpha >= 4.0:
            params = MapParams(alpha, 0.0, omega)
        else:
            params = MapParams.from_prime(alpha, eps_prime, omega)
        lam = lyapunov(params, x0, phi0, n, burn_in)
    except (SingularTermError, DivergenceError, MapDomainError) as exc:
        return ScanCell(alpha, eps_prime, math.nan, "error", str(exc))
    return ScanCell(alpha, eps_prime, lam, classify(lam))


def grid_axis(lo: float, hi: float, steps: int) -> list[float]:
    if steps < 1:
        raise MapDomainError(f"grid needs at least one step, got {steps}")
    if steps == 1:
        return [float(lo)]
    return np.linspace(lo, hi, steps).tolist()


def phase_scan(
    alpha_range: tuple[float, float, int],
    eps_prime_range: tuple[float, float, int],
    n: int = 5000,
    burn_in: int = DEFAULT_BURN_IN,
    x0: float = DEFAULT_X0,
    phi0: float = DEFAULT_PHI0,
    omega: float = GOLDEN_OMEGA,
    workers: int = 1,
) -> list[ScanCell]:
    """Lyapunov exponent over an (alpha, eps') grid, alpha-major row order.

    Each range is ``(lo, hi, steps)``; ``steps == 1`` gives the single value
    ``lo``. Per-cell failures are kept in the output with ``cls == "error"``.
    """
    alphas = grid_axis(*alpha_range)
    primes = grid_axis(*eps_prime_range)
    jobs = [(a, e, n, burn_in, x0, phi0, omega) for a in alphas for e in primes]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_scan_cell, jobs, chunksize=max(1, len(jobs) // (8 * workers))))
    return [_scan_cell(j) for j in jobs]


def write_scan_csv(cells: Sequence[ScanCell], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "eps_prime", "lambda", "class"])
        for c in cells:
            w.writerow([format(c.alpha, ".17g"), format(c.eps_prime, ".17g"),
                        format(c.lam, ".17g"), c.cls])
