"""Interferometer phase shifts: potential integral, field energy, semiclassical
expectation-value model, detection ports and source back-reaction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import CONSTANTS, EZ, Constants, TimeGrid, integrate_time
from .errors import ConsistencyError, ProximityError, SingularityError, ValidationError
from .kinematics import InterferometerSpec, SemiclassicalEvolution, Trajectory
from .sources import (
    PointMass,
    QuadratureSpec,
    SourceModel,
    interaction_energy_series,
    mutual_energy,
    potential_at,
)


class PhaseMethod(str, Enum):
    POTENTIAL_INTEGRAL = "PotentialIntegral"
    FIELD_ENERGY = "FieldEnergy"
    SEMICLASSICAL = "Semiclassical"


@dataclass(frozen=True)
class PhaseResult:
    delta_phi: float
    method: PhaseMethod
    quadrature_tol: float
    assumptions: tuple[str, ...] = ()

    def __post_init__(self):
        if not math.isfinite(self.delta_phi):
            raise ValidationError(f"non-finite phase {self.delta_phi!r}")


@dataclass(frozen=True)
class PortProbabilities:
    p_d1: float
    p_d2: float
    d1: float = 0.0
    d2: float = 0.0

    @property
    def literal_phase(self) -> float:
        """arccos((P(d1) - P(d2)) / (P(d1) + P(d2)))."""
        c = (self.p_d1 - self.p_d2) / (self.p_d1 + self.p_d2)
        return math.acos(min(1.0, max(-1.0, c)))


PERTURBATIVE = "phase evaluated along unperturbed arms"


def _as_source(M) -> SourceModel:
    """A bare mass becomes a point source at the body-frame origin."""
    if isinstance(M, (int, float)):
        if M < 0:
            raise ValidationError(f"source mass must be non-negative, got {M}")
        return None if M == 0 else PointMass(float(M), np.zeros(3))
    return M


def _simpson_error(samples: np.ndarray, grid: TimeGrid) -> float:
    """Relative error estimate for the Simpson integral of ``samples``.

    Richardson against the half-resolution rule when the grid halves onto
    Simpson panels, otherwise the (looser) gap to the trapezoid rule.
    """
    fine = integrate_time(samples, grid)
    if (grid.n - 1) % 4:
        gap = abs(fine - float(np.trapezoid(samples, dx=grid.dt)))
    else:
        coarse = integrate_time(samples[::2], TimeGrid(grid.t0, grid.t1, (grid.n + 1) // 2))
        gap = abs(fine - coarse) / 15.0
    scale = abs(fine)
    return gap / scale if scale > 0 else 0.0


def arm_energies(x1: Trajectory, x2: Trajectory, xs: Trajectory, m: float, M, grid: TimeGrid,
                 exclusion_radius: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Interaction energy U(x_i(t) - xs(t)) on each arm at the grid nodes."""
    source = _as_source(M)
    t = grid.times
    if source is None:
        return np.zeros(grid.n), np.zeros(grid.n)
    test = PointMass(m, np.zeros(3))
    s = xs(t)
    out = []
    for arm in (x1, x2):
        p = arm(t)
        if exclusion_radius > 0:
            try:
                potential_at(source, p - s, exclusion_radius)
            except SingularityError as exc:
                raise ProximityError(f"arm approaches the source too closely: {exc}") from exc
        try:
            out.append(mutual_energy(test, source, p, s))
        except SingularityError as exc:
            raise ProximityError(f"arm meets the source: {exc}") from exc
    return out[0], out[1]


def phase_potential_integral(x1: Trajectory, x2: Trajectory, xs: Trajectory, m: float, M, grid: TimeGrid,
                             constants: Constants = CONSTANTS, exclusion_radius: float = 0.0) -> PhaseResult:
    """(1/hbar) * integral of U(x1 - xs) - U(x2 - xs) over the grid.

    ``M`` is a mass (point source riding ``xs``) or a SourceModel given in
    its body frame. The amplitudes never enter.
    """
    u1, u2 = arm_energies(x1, x2, xs, m, M, grid, exclusion_radius)
    integrand = (u1 - u2) / constants.hbar
    return PhaseResult(
        integrate_time(integrand, grid),
        PhaseMethod.POTENTIAL_INTEGRAL,
        _simpson_error(integrand, grid),
        (PERTURBATIVE,),
    )


def source_backreaction_phase(x1: Trajectory, x2: Trajectory, xs: Trajectory, m: float, M, grid: TimeGrid,
                              constants: Constants = CONSTANTS) -> PhaseResult:
    """Phase picked up by the source branches entangled with each arm.

    The source on branch i feels the test particle at x_i; the pair energy
    is the same symmetric function, so the result is the test-particle
    phase exactly.
    """
    source = _as_source(M)
    t = grid.times
    if source is None:
        integrand = np.zeros(grid.n)
    else:
        test = PointMass(m, np.zeros(3))
        s = xs(t)
        try:
            b1 = mutual_energy(source, test, s, x1(t))
            b2 = mutual_energy(source, test, s, x2(t))
        except SingularityError as exc:
            raise ProximityError(f"arm meets the source: {exc}") from exc
        integrand = (b1 - b2) / constants.hbar
    return PhaseResult(
        integrate_time(integrand, grid),
        PhaseMethod.POTENTIAL_INTEGRAL,
        _simpson_error(integrand, grid),
        (PERTURBATIVE, "source-branch attribution"),
    )


def phase_from_field_energy(x1: Trajectory, x2: Trajectory, xs: Trajectory, m: float, M, grid: TimeGrid,
                            q: QuadratureSpec = QuadratureSpec(),
                            constants: Constants = CONSTANTS) -> PhaseResult:
    """(1/hbar) * integral of E1 - E2 with E_i the field-energy cross term."""
    source = _as_source(M)
    if source is None:
        return PhaseResult(0.0, PhaseMethod.FIELD_ENERGY, 0.0, (PERTURBATIVE,))
    t = grid.times
    test = PointMass(m, np.zeros(3))
    s = xs(t)
    shifts = np.vstack([x1(t), x2(t)])
    energies, tol = interaction_energy_series(test, source, shifts, np.vstack([s, s]), q)
    integrand = (energies[: grid.n] - energies[grid.n:]) / constants.hbar
    time_tol = _simpson_error(integrand, grid)
    return PhaseResult(
        integrate_time(integrand, grid),
        PhaseMethod.FIELD_ENERGY,
        max(tol, time_tol) if math.isfinite(time_tol) else tol,
        (PERTURBATIVE, "self energies removed; uniform-field cross energy is zero"),
    )


# -- detection ----------------------------------------------------------------

def _check_amplitudes(A1: complex, A2: complex):
    norm = abs(A1) ** 2 + abs(A2) ** 2
    if abs(norm - 1.0) > 1e-12:
        raise ValidationError(f"amplitudes are not normalized: |A1|^2 + |A2|^2 = {norm!r}")


def ports_from_phase(delta_phi: float, A1: complex, A2: complex, d1: float = 0.0, d2: float = 0.0) -> PortProbabilities:
    """Two-port interference law p_d1 = (1 + 2|A1||A2| cos dphi) / 2."""
    _check_amplitudes(A1, A2)
    p1 = 0.5 * (1.0 + 2.0 * abs(A1) * abs(A2) * math.cos(delta_phi))
    p1 = min(1.0, max(0.0, p1))
    return PortProbabilities(p1, 1.0 - p1, d1, d2)


def ports_by_amplitude_sum(delta_phi: float, A1: complex, A2: complex) -> PortProbabilities:
    """Same law from an explicit sum over paths through a balanced recombiner."""
    _check_amplitudes(A1, A2)
    b1 = A1 * np.exp(1j * delta_phi)
    out1 = (b1 + A2) / math.sqrt(2.0)
    out2 = (b1 - A2) / math.sqrt(2.0)
    return PortProbabilities(abs(out1) ** 2, abs(out2) ** 2)


@dataclass(frozen=True)
class FringeScan:
    ref_phase: np.ndarray
    p_d1: np.ndarray
    recovered_phase: float
    contrast: float
    literal_phase: float


def fringe_scan(delta_phi: float, A1: complex, A2: complex, points: int = 64) -> FringeScan:
    """Sweep an added reference phase and recover delta_phi from the fringe.

    The fringe p_d1(r) = 1/2 + C/2 cos(delta_phi + r) is fitted by linear least
    squares in (1, cos r, sin r), so the recovered phase does not depend on
    the contrast C = 2|A1||A2|.
    """
    if points < 3:
        raise ValidationError("a fringe scan needs at least 3 reference phases")
    ref = 2.0 * math.pi * np.arange(points) / points
    p = np.array([ports_from_phase(delta_phi + r, A1, A2).p_d1 for r in ref])
    design = np.column_stack([np.ones(points), np.cos(ref), np.sin(ref)])
    (_, a, b), *_ = np.linalg.lstsq(design, p, rcond=None)
    # a = C/2 cos(dphi), b = -C/2 sin(dphi)
    recovered = math.atan2(-b, a)
    return FringeScan(ref, p, recovered, 2.0 * math.hypot(a, b), ports_from_phase(delta_phi, A1, A2).literal_phase)


# -- semiclassical model -------------------------------------------------------

def _reduced_semiclassical(evo: SemiclassicalEvolution, k_eff: float) -> float:
    d = evo.deflection1[:, 2]
    mid = evo.step_count // 2
    return -k_eff * (d[0] - 2.0 * d[mid] + d[-1])


def _full_semiclassical(evo: SemiclassicalEvolution, spec: InterferometerSpec, source: SourceModel) -> float:
    """Propagation + laser + separation phase along the perturbed arms."""
    hbar, m = spec.constants.hbar, spec.m
    t = evo.times
    mid = evo.step_count // 2
    # coordinates relative to x0 keep the nanometre deflections resolvable
    x1 = evo.free1(t) - spec.x0 + evo.deflection1
    x2 = evo.free2(t) - spec.x0 + evo.deflection2
    u1, u2 = evo.velocity1, evo.velocity2
    a = evo.acceleration
    dot = lambda p, q: np.einsum("ij,ij->i", p, q)

    # L_i = m|w_i + u_i|^2/2 + m a.x_i, w the free velocity; the free kinetic
    # parts cancel between arms (equal speeds). Each half is integrated with
    # its own one-sided free velocity since w jumps at the mirror pulse.
    propagation = 0.0
    for sl, side, (lo, hi) in ((slice(0, mid + 1), "left", (0.0, spec.T)),
                               (slice(mid, None), "right", (spec.T, 2.0 * spec.T))):
        w1 = evo.free1.velocity(t[sl], side=side)
        w2 = evo.free2.velocity(t[sl], side=side)
        lag = m * (dot(w1, u1[sl]) - dot(w2, u2[sl])) \
            + 0.5 * m * (dot(u1[sl], u1[sl]) - dot(u2[sl], u2[sl])) \
            + m * dot(a[sl], x1[sl] - x2[sl])
        propagation += integrate_time(lag, TimeGrid(lo, hi, mid + 1)) / hbar

    # momentum transfers: arm 1 gets +k, -2k, +k and arm 2 -k, +2k, -k at
    # 0, T, 2T; each imprints (transfer) . x. Free and deflected parts are
    # summed separately: 0.1 m positions would swamp 1e-10 m deflections.
    kz = spec.k * EZ
    pulses = lambda y: kz @ y[0] - 2.0 * (kz @ y[mid]) + kz @ y[-1]
    f1 = evo.free1(t) - spec.x0
    f2 = evo.free2(t) - spec.x0
    laser_diff = pulses(f1 + f2) + pulses(evo.deflection1 + evo.deflection2)

    w_end1 = evo.free1.velocity(t[-1:], side="left")[0]
    w_end2 = evo.free2.velocity(t[-1:], side="left")[0]
    pbar = 0.5 * m * ((w_end1 + u1[-1]) + (w_end2 + u2[-1]))
    separation = float(pbar @ (x1[-1] - x2[-1])) / hbar
    # reported as arm 2 minus arm 1, the sign convention of the potential phase
    return -(propagation + laser_diff + separation)


def phase_semiclassical(evo: SemiclassicalEvolution, spec: InterferometerSpec, source: SourceModel,
                        consistency_tol: float = 1e-9, consistency_rel: float = 1e-12) -> PhaseResult:
    """Phase of the expectation-value-sourced model.

    Both arms feel the same uniform acceleration, so the arm difference of
    the classical action cancels and the result reduces to
    -k_eff (delta(0) - 2 delta(T) + delta(2T)) of the common vertical
    deflection. Both forms are computed and must agree to
    ``consistency_tol`` rad plus ``consistency_rel`` times the phase (the
    relative part only matters for phases far above a radian).
    """
    reduced = _reduced_semiclassical(evo, spec.k_eff)
    full = _full_semiclassical(evo, spec, source)
    if not abs(full - reduced) <= consistency_tol + consistency_rel * abs(reduced):
        raise ConsistencyError(
            f"semiclassical phase: full prescription {full!r} vs reduced functional {reduced!r}"
        )
    return PhaseResult(
        reduced,
        PhaseMethod.SEMICLASSICAL,
        evo.halving_disagreement * spec.k_eff,
        ("force sourced at x_CM = P1 x1 + P2 x2", f"RK4 steps = {evo.step_count}"),
    )


def schrodinger_newton_energy(P1: float, E1: float, E2: float) -> float:
    """|A1|^2 E1 + |A2|^2 E2."""
    if not 0.0 <= P1 <= 1.0:
        raise ValidationError(f"P1 must lie in [0, 1], got {P1}")
    return P1 * E1 + (1.0 - P1) * E2
