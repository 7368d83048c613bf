"""Weighted regression of phase against arm probability, reduced chi-squared
and source back-action bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .core import CONSTANTS, Constants, TimeGrid, integrate_time
from .errors import RankError, ValidationError
from .kinematics import InterferometerSpec, mach_zehnder_arms, parabolic_source
from .sources import SourceModel, field_at, total_mass

NOT_A_TARGET = (
    "published per-point uncertainties are unavailable; "
    "the quoted slope, p-value and reduced chi-squared are not acceptance targets"
)


@dataclass(frozen=True)
class PhaseDataPoint:
    p_upper: float
    phase: float
    sigma: float

    def __post_init__(self):
        if not 0.0 < self.p_upper < 1.0:
            raise ValidationError(f"p_upper must lie in (0, 1), got {self.p_upper}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        if not math.isfinite(self.phase):
            raise ValidationError("phase must be finite")


@dataclass(frozen=True)
class FitResult:
    slope: float
    slope_sigma: float
    intercept: float
    intercept_sigma: float
    p_value: float
    chi2_red: float
    dof: int
    distribution: str = "normal"


def weighted_linear_fit(data: Sequence[PhaseDataPoint], distribution: str = "normal") -> FitResult:
    """Weighted least squares phase = intercept + slope * p_upper.

    Weights are 1/sigma^2 and the parameter errors come straight from the
    covariance (not rescaled by chi-squared). The p-value is two-sided for
    slope != 0, from the normal distribution or, with ``distribution="t"``,
    Student's t with n - 2 degrees of freedom. ``chi2_red`` divides by the
    n - 2 degrees of freedom of the fitted line.
    """
    if distribution not in ("normal", "t"):
        raise ValidationError(f"distribution must be 'normal' or 't', got {distribution!r}")
    if len(data) < 3:
        raise ValidationError(f"a slope fit needs at least 3 points, got {len(data)}")
    x = np.array([d.p_upper for d in data])
    y = np.array([d.phase for d in data])
    w = 1.0 / np.array([d.sigma for d in data]) ** 2
    if len(np.unique(x)) < 2:
        raise RankError("all p_upper values coincide")
    sw = w.sum()
    xm = (w @ x) / sw
    dx = x - xm
    sxx = w @ (dx * dx)
    if not sxx > 1e-14 * (w @ (x * x)):
        raise RankError("p_upper values are numerically degenerate")
    # phases relative to the first point: identical phases give an exact zero slope
    slope = (w @ (dx * (y - y[0]))) / sxx
    ym = (w @ y) / sw
    intercept = ym - slope * xm
    slope_sigma = math.sqrt(1.0 / sxx)
    intercept_sigma = math.sqrt(1.0 / sw + xm * xm / sxx)
    dof = len(data) - 2
    resid = y - (intercept + slope * x)
    chi2_red = float(w @ (resid * resid)) / dof
    z = abs(slope) / slope_sigma
    p = 2.0 * (stats.norm.sf(z) if distribution == "normal" else stats.t.sf(z, dof))
    return FitResult(float(slope), slope_sigma, float(intercept), intercept_sigma,
                     float(min(1.0, p)), chi2_red, dof, distribution)


def reduced_chi_squared(data: Sequence[PhaseDataPoint], model_value) -> float:
    """Sum of ((phase - model) / sigma)^2 over n; the model has no fitted parameters."""
    if len(data) < 1:
        raise ValidationError("reduced chi-squared needs at least one point")
    y = np.array([d.phase for d in data])
    s = np.array([d.sigma for d in data])
    model = np.broadcast_to(np.asarray(model_value, dtype=float), y.shape)
    return float(np.sum(((y - model) / s) ** 2) / len(data))


# -- back-action ----------------------------------------------------------------

@dataclass(frozen=True)
class BackactionBounds:
    position_uncertainty: float
    max_source_deflection: float | None
    deflection_time: float | None = None

    @property
    def unobservable(self) -> bool:
        return self.max_source_deflection is not None and self.max_source_deflection < self.position_uncertainty


def source_accelerations(spec: InterferometerSpec, source: SourceModel, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Acceleration of the source on each arm's branch: -(m/M) g_source(x_i)."""
    t = grid.times
    x1, x2 = mach_zehnder_arms(spec)
    xs = parabolic_source(spec)
    mass = total_mass(source)
    scale = -spec.m / mass
    return (scale * field_at(source, x1(t) - xs(t)), scale * field_at(source, x2(t) - xs(t)))


def backaction_bounds(M: float, delta_v: float, spec: InterferometerSpec | None = None,
                      source: SourceModel | None = None, n: int = 4001,
                      constants: Constants = CONSTANTS) -> BackactionBounds:
    """Quantum position uncertainty of the source against its gravitational deflection.

    The deflection is the displacement at t = 2T from the unperturbed source
    path caused by the test particle's pull, integrated as
    d(2T) = integral of (2T - t) a(t) dt, and the larger branch is reported.
    """
    if not (M > 0 and delta_v > 0):
        raise ValidationError("M and delta_v must be positive")
    sigma_x = constants.hbar / (2.0 * M * delta_v)
    if spec is None or source is None:
        return BackactionBounds(sigma_x, None)
    grid = TimeGrid.interferometer(spec.T, n)
    lever = 2.0 * spec.T - grid.times
    worst = 0.0
    for acc in source_accelerations(spec, source, grid):
        disp = np.array([integrate_time(lever * acc[:, k], grid) for k in range(3)])
        worst = max(worst, float(np.linalg.norm(disp)))
    return BackactionBounds(sigma_x, worst, 2.0 * spec.T)
