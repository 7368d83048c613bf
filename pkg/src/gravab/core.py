"""Constants, time grids, 3-vectors and the time-quadrature primitive."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields, replace
from importlib import resources
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, ConvergenceError, NumericError, ValidationError

# config key -> Constants attribute
CONSTANT_KEYS = {
    "G_m3_per_kg_s2": "G",
    "hbar_J_s": "hbar",
    "eps0_F_per_m": "eps0",
    "m_Rb87_kg": "m_Rb87",
    "lambda_L_m": "lambda_L",
}


@dataclass(frozen=True)
class Constants:
    G: float
    hbar: float
    eps0: float
    m_Rb87: float
    lambda_L: float
    version: str = ""

    def __post_init__(self):
        for f in fields(self):
            if f.name == "version":
                continue
            value = getattr(self, f.name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"constant {f.name} must be finite and positive, got {value!r}")

    @property
    def coulomb(self) -> float:
        """1/(4 pi eps0)."""
        return 1.0 / (4.0 * math.pi * self.eps0)

    def with_overrides(self, overrides: Mapping[str, float]) -> "Constants":
        changes = {}
        for key, value in overrides.items():
            attr = CONSTANT_KEYS.get(key, key)
            if attr not in {f.name for f in fields(self)} or attr == "version":
                raise ConfigurationError(f"unknown constant {key!r}")
            changes[attr] = float(value)
        if not changes:
            return self
        return replace(self, version=f"{self.version}+override", **changes)


def load_constants(text: str | None = None) -> Constants:
    """Read constants from the shipped ``constants.ini`` (or from ``text``)."""
    if text is None:
        text = resources.files("gravab").joinpath("constants.ini").read_text(encoding="utf-8")
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser.read_string(text)
    section = parser["constants"]
    values = {}
    for key, attr in CONSTANT_KEYS.items():
        if key not in section:
            raise ConfigurationError(f"constants file lacks {key!r}")
        values[attr] = float(section[key])
    return Constants(version=section.get("version", ""), **values)


CONSTANTS = load_constants()


def vec3(x: Sequence[float] | np.ndarray) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise ValidationError(f"expected a 3-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"vector has non-finite components: {v}")
    return v


def unit(x) -> np.ndarray:
    v = vec3(x)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValidationError("zero vector has no direction")
    return v / n


EZ = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [t0, t1] with an odd number of samples."""

    t0: float
    t1: float
    n: int

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValidationError(f"TimeGrid needs t1 > t0 (got {self.t0}, {self.t1})")
        if self.n < 3 or self.n % 2 == 0:
            raise ValidationError(f"TimeGrid needs odd n >= 3, got {self.n}")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.n)

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / (self.n - 1)

    def refined(self) -> "TimeGrid":
        """Halve the spacing; existing nodes are kept."""
        return TimeGrid(self.t0, self.t1, 2 * self.n - 1)

    @classmethod
    def interferometer(cls, T: float, n: int = 4001) -> "TimeGrid":
        """Grid on [0, 2T]; n = 1 mod 4 puts t = T on a Simpson panel edge."""
        if (n - 1) % 4:
            raise ValidationError(f"interferometer grids need n = 1 (mod 4), got {n}")
        return cls(0.0, 2.0 * T, n)


def integrate_time(samples: Sequence[float] | np.ndarray, grid: TimeGrid) -> float:
    """Composite Simpson rule over ``grid``; exact for cubics."""
    y = np.asarray(samples, dtype=float)
    if y.shape != (grid.n,):
        raise ConfigurationError(f"got {y.shape[0] if y.ndim else 0} samples for a grid of {grid.n}")
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        raise NumericError(f"non-finite integrand sample at index {bad[0]} (t = {grid.times[bad[0]]!r})")
    w = np.empty(grid.n)
    w[0] = w[-1] = 1.0
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float(grid.dt / 3.0 * np.dot(w, y))


class Refinement(NamedTuple):
    value: float
    achieved_rel_tol: float
    n: int


MAX_REFINED_N = 2**20


def refine_until_converged(
    integral_fn: Callable[[TimeGrid], float],
    rel_tol: float,
    start: TimeGrid,
) -> Refinement:
    """Halve the grid spacing until two successive estimates agree to ``rel_tol``."""
    if not 0 < rel_tol <= 1e-2:
        raise ValidationError(f"rel_tol must lie in (0, 1e-2], got {rel_tol}")
    grid = start
    prev = cur = integral_fn(grid)
    while grid.n < MAX_REFINED_N:
        grid = grid.refined()
        cur = integral_fn(grid)
        scale = max(abs(cur), abs(prev))
        change = abs(cur - prev) / scale if scale > 0 else 0.0
        if change < rel_tol:
            return Refinement(cur, change, grid.n)
        prev = cur
    raise ConvergenceError(
        f"no convergence to rel_tol={rel_tol} by n={grid.n}", estimates=(prev, cur)
    )
