"""Inverse-square source models and the field-energy quadrature.

A source is one of PointMass, RingArc, UniformField or Composite. Each leaf
carries a Coupling: Newtonian gravity (attractive, strength = mass) or a
generalized inverse-square interaction such as electrostatics (strength =
signed charge).

With coupling constant K and sign s (s = -1 for gravity, +1 for Coulomb) a
leaf of strength Q at p has potential s*K*Q/|x - p| and field
F = s*K*Q*(x - p)/|x - p|**3. The field energy density is s*|F|**2/(8*pi*K),
which is -|g|**2/(8*pi*G) for gravity and eps0*|E|**2/2 for electrostatics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from .core import CONSTANTS, Constants, unit, vec3
from .errors import ConfigurationError, ConvergenceError, GeometryError, SingularityError, ValidationError

MAX_DEPTH = 4
RING_NODES = 64
RING_MAX_NODES = 4096
RING_TOL = 1e-10


@dataclass(frozen=True)
class Coupling:
    name: str
    constant: float
    sign: int

    def __post_init__(self):
        if not self.constant > 0:
            raise ValidationError("coupling constant must be positive")
        if self.sign not in (-1, 1):
            raise ValidationError("coupling sign must be +1 or -1")

    @property
    def is_gravity(self) -> bool:
        return self.name == "gravity"


def gravity(constants: Constants = CONSTANTS) -> Coupling:
    return Coupling("gravity", constants.G, -1)


def coulomb(constants: Constants = CONSTANTS) -> Coupling:
    return Coupling("coulomb", constants.coulomb, 1)


GRAVITY = gravity()

_ORIGIN = np.zeros(3)


def _strength(mass, charge, coupling):
    if coupling.is_gravity:
        if charge is not None:
            raise ValidationError("gravitational sources take a mass, not a charge")
        return mass
    if charge is None:
        raise ValidationError(f"{coupling.name} sources need a charge")
    return charge


@dataclass(frozen=True, eq=False)
class PointMass:
    mass: float
    position: np.ndarray = field(default_factory=lambda: _ORIGIN.copy())
    charge: float | None = None
    coupling: Coupling = GRAVITY

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))
        if not self.mass > 0:
            raise ValidationError(f"mass must be positive, got {self.mass}")

    @property
    def strength(self) -> float:
        return _strength(self.mass, self.charge, self.coupling)


@dataclass(frozen=True, eq=False)
class RingArc:
    """Thin circular arc of uniform line density.

    The arc starts at ``center + radius*start`` and sweeps ``arc_span``
    radians counter-clockwise about ``normal``. ``start`` defaults to a
    fixed in-plane direction.
    """

    mass: float
    radius: float
    center: np.ndarray = field(default_factory=lambda: _ORIGIN.copy())
    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    arc_span: float = 2.0 * math.pi
    start: np.ndarray | None = None
    charge: float | None = None
    coupling: Coupling = GRAVITY

    def __post_init__(self):
        if not self.mass > 0:
            raise ValidationError(f"mass must be positive, got {self.mass}")
        if not self.radius > 0:
            raise ValidationError(f"radius must be positive, got {self.radius}")
        if not 0 < self.arc_span <= 2.0 * math.pi:
            raise ValidationError(f"arc_span must lie in (0, 2pi], got {self.arc_span}")
        n = vec3(self.normal)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValidationError("ring normal must be unit length")
        object.__setattr__(self, "center", vec3(self.center))
        object.__setattr__(self, "normal", n)
        if self.start is None:
            helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
            s = helper - np.dot(helper, n) * n
        else:
            s = vec3(self.start)
            s = s - np.dot(s, n) * n
        object.__setattr__(self, "start", unit(s))

    @property
    def strength(self) -> float:
        return _strength(self.mass, self.charge, self.coupling)

    def elements(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Gauss-Legendre point elements: positions (n, 3) and strengths (n,)."""
        cache = self.__dict__.setdefault("_element_cache", {})
        if n not in cache:
            cache[n] = self._make_elements(n)
        return cache[n]

    def _make_elements(self, n: int):
        x, w = _leggauss(n)
        theta = 0.5 * self.arc_span * (x + 1.0)
        b = np.cross(self.normal, self.start)
        pos = self.center + self.radius * (np.cos(theta)[:, None] * self.start + np.sin(theta)[:, None] * b)
        return pos, 0.5 * w * self.strength


@dataclass(frozen=True, eq=False)
class UniformField:
    """Spatially uniform field; its potential is zero at ``origin``."""

    g_vector: np.ndarray
    origin: np.ndarray = field(default_factory=lambda: _ORIGIN.copy())
    coupling: Coupling = GRAVITY

    def __post_init__(self):
        object.__setattr__(self, "g_vector", vec3(self.g_vector))
        object.__setattr__(self, "origin", vec3(self.origin))


@dataclass(frozen=True, eq=False)
class Composite:
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not leaves(self):
            raise ValidationError("composite source needs at least one leaf")


Leaf = Union[PointMass, RingArc, UniformField]
SourceModel = Union[PointMass, RingArc, UniformField, Composite]


def leaves(source: SourceModel, _depth: int = 0) -> list:
    if isinstance(source, Composite):
        if _depth >= MAX_DEPTH:
            raise ValidationError(f"composite nesting deeper than {MAX_DEPTH}")
        out = []
        for part in source.parts:
            out.extend(leaves(part, _depth + 1))
        return out
    if isinstance(source, (PointMass, RingArc, UniformField)):
        return [source]
    raise ValidationError(f"not a source model: {source!r}")


def translate(source: SourceModel, shift) -> SourceModel:
    shift = vec3(shift)
    if isinstance(source, PointMass):
        return PointMass(source.mass, source.position + shift, source.charge, source.coupling)
    if isinstance(source, RingArc):
        return RingArc(source.mass, source.radius, source.center + shift, source.normal,
                       source.arc_span, source.start, source.charge, source.coupling)
    if isinstance(source, UniformField):
        return UniformField(source.g_vector, source.origin + shift, source.coupling)
    return Composite(tuple(translate(p, shift) for p in source.parts))


def total_mass(source: SourceModel) -> float:
    return sum(getattr(leaf, "mass", 0.0) for leaf in leaves(source))


@lru_cache(maxsize=None)
def _leggauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


# -- potential and field -----------------------------------------------------

def _as_points(x):
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 3:
        raise ValidationError(f"evaluation points must have 3 components, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValidationError("evaluation points must be finite")
    return pts, single


def _check_point(leaf: PointMass, pts, exclusion_radius):
    r = np.linalg.norm(pts - leaf.position, axis=-1)
    hit = r <= exclusion_radius if exclusion_radius > 0 else r == 0
    if np.any(hit):
        raise SingularityError(f"evaluation point within {exclusion_radius} m of point source at {leaf.position}")
    return r


def _check_ring(ring: RingArc, pts, exclusion_radius):
    rel = pts - ring.center
    z = rel @ ring.normal
    rho = np.linalg.norm(rel - z[:, None] * ring.normal, axis=-1)
    d = np.hypot(rho - ring.radius, z)
    hit = d <= exclusion_radius if exclusion_radius > 0 else d == 0
    if np.any(hit):
        raise SingularityError(f"evaluation point on ring arc centered at {ring.center}")


def _ring_sum(ring: RingArc, pts, kernel, power):
    """Adaptive GL sum of ``kernel(rel, r, q)`` over arc elements, doubled until stable.

    Stability is judged against the summed element magnitudes |q|/r**power,
    so sums that cancel by symmetry (the field at a full ring's centre) still
    terminate.
    """
    n = RING_NODES
    prev = None
    while n <= RING_MAX_NODES:
        pos, q = ring.elements(n)
        rel = pts[:, None, :] - pos[None, :, :]
        r = np.linalg.norm(rel, axis=-1)
        cur = kernel(rel, r, q)
        if prev is not None:
            scale = np.max((np.abs(q) / r**power).sum(axis=-1))
            if scale == 0 or np.max(np.abs(cur - prev)) <= RING_TOL * scale:
                return cur
        prev = cur
        n *= 2
    raise ConvergenceError("ring quadrature did not stabilise", estimates=(prev, cur))


def _leaf_potential(leaf, pts, exclusion_radius):
    if isinstance(leaf, PointMass):
        r = _check_point(leaf, pts, exclusion_radius)
        c = leaf.coupling
        return c.sign * c.constant * leaf.strength / r
    if isinstance(leaf, RingArc):
        _check_ring(leaf, pts, exclusion_radius)
        c = leaf.coupling
        return c.sign * c.constant * _ring_sum(leaf, pts, lambda rel, r, q: (q / r).sum(axis=-1), 1)
    return -(pts - leaf.origin) @ leaf.g_vector


def _leaf_field(leaf, pts, exclusion_radius):
    if isinstance(leaf, PointMass):
        r = _check_point(leaf, pts, exclusion_radius)
        c = leaf.coupling
        return (c.sign * c.constant * leaf.strength) * (pts - leaf.position) / r[:, None] ** 3
    if isinstance(leaf, RingArc):
        _check_ring(leaf, pts, exclusion_radius)
        c = leaf.coupling
        return c.sign * c.constant * _ring_sum(
            leaf, pts, lambda rel, r, q: np.einsum("k,nkj->nj", q, rel / r[..., None] ** 3), 2
        )
    return np.broadcast_to(leaf.g_vector, pts.shape).copy()


def potential_at(source: SourceModel, x, exclusion_radius: float = 0.0):
    """Potential per unit test strength (J/kg for gravity); zero at infinity
    for localized leaves. Accepts one point (3,) or many (N, 3)."""
    pts, single = _as_points(x)
    total = np.zeros(len(pts))
    for leaf in leaves(source):
        total = total + _leaf_potential(leaf, pts, exclusion_radius)
    return float(total[0]) if single else total


def field_at(source: SourceModel, x, exclusion_radius: float = 0.0):
    """Field F = -grad V (m/s^2 for gravity)."""
    pts, single = _as_points(x)
    total = np.zeros_like(pts)
    for leaf in leaves(source):
        total = total + _leaf_field(leaf, pts, exclusion_radius)
    return total[0] if single else total


# -- mutual (potential) energy ------------------------------------------------

def _check_coupling(a, b):
    if a.coupling.name != b.coupling.name or a.coupling.constant != b.coupling.constant:
        raise ConfigurationError(f"cannot couple {a.coupling.name} source to {b.coupling.name} source")


def _points_of(leaf, n_ring):
    if isinstance(leaf, PointMass):
        return leaf.position[None, :], np.array([leaf.strength])
    return leaf.elements(n_ring)


def _leaf_pair_energy(a, b, shift_a, shift_b):
    """Potential energy of two leaves, one value per shift row.

    Written so that swapping (a, shift_a) with (b, shift_b) is bit-identical.
    """
    _check_coupling(a, b)
    c = a.coupling
    if isinstance(a, UniformField) and isinstance(b, UniformField):
        return np.zeros(len(shift_a))
    if isinstance(b, UniformField):
        a, b, shift_a, shift_b = b, a, shift_b, shift_a
    if isinstance(a, UniformField):
        # strength-weighted potential of the localized partner in the uniform field
        pts, q = _points_of(b, RING_NODES * 2)
        rel = pts[None, :, :] + (shift_b - shift_a)[:, None, :] - a.origin
        return -(q * (rel @ a.g_vector)).sum(axis=-1)
    if isinstance(a, RingArc) and isinstance(b, PointMass):
        a, b, shift_a, shift_b = b, a, shift_b, shift_a
    if isinstance(a, RingArc) and isinstance(b, RingArc) and _ring_key(a) > _ring_key(b):
        a, b, shift_a, shift_b = b, a, shift_b, shift_a
    if isinstance(a, PointMass) and isinstance(b, PointMass):
        d = np.linalg.norm((a.position + shift_a) - (b.position + shift_b), axis=-1)
        if np.any(d == 0):
            raise SingularityError("coincident point sources")
        return c.sign * c.constant * (a.strength * b.strength) / d
    n = RING_NODES
    prev = None
    while n <= RING_MAX_NODES:
        pa, qa = _points_of(a, n)
        pb, qb = _points_of(b, n)
        xa = pa[None, :, None, :] + shift_a[:, None, None, :]
        xb = pb[None, None, :, :] + shift_b[:, None, None, :]
        d = np.linalg.norm(xa - xb, axis=-1)
        if np.any(d == 0):
            raise SingularityError("source elements coincide")
        cur = c.sign * c.constant * np.einsum("i,j,nij->n", qa, qb, 1.0 / d)
        if prev is not None and np.max(np.abs(cur - prev)) <= RING_TOL * np.max(np.abs(cur)):
            return cur
        prev = cur
        n *= 2
    raise ConvergenceError("mutual energy quadrature did not stabilise", estimates=(prev, cur))


def _ring_key(r: RingArc):
    return (r.mass, r.radius, r.arc_span, *r.center, *r.normal, *r.start)


def mutual_energy(a: SourceModel, b: SourceModel, shift_a=None, shift_b=None):
    """Interaction (potential) energy between two sources, symmetric in its arguments.

    ``shift_a`` / ``shift_b`` are optional (N, 3) rigid displacements; the
    result then has one entry per row.
    """
    single = shift_a is None and shift_b is None
    sa = np.zeros((1, 3)) if shift_a is None else np.atleast_2d(np.asarray(shift_a, float))
    sb = np.zeros((1, 3)) if shift_b is None else np.atleast_2d(np.asarray(shift_b, float))
    n = max(len(sa), len(sb))
    sa = np.broadcast_to(sa, (n, 3))
    sb = np.broadcast_to(sb, (n, 3))
    terms = [_leaf_pair_energy(la, lb, sa, sb) for la in leaves(a) for lb in leaves(b)]
    total = np.array([math.fsum(col) for col in zip(*terms)])
    return float(total[0]) if single else total


# -- field-energy quadrature -------------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    """Controls for the all-space cross-term quadrature.

    ``nodes`` Gauss-Legendre points per patch dimension (doubled until
    ``rel_tol`` is met, up to ``max_nodes``); ``angular_cells`` trapezoid
    points about each pair axis; point elements closer than twice
    ``exclusion_radius`` are rejected as overlapping.
    """

    nodes: int = 16
    angular_cells: int = 4
    exclusion_radius: float = 1e-9
    rel_tol: float = 1e-10
    max_nodes: int = 128

    def __post_init__(self):
        if self.nodes < 2 or self.angular_cells < 1:
            raise ValidationError("quadrature needs nodes >= 2 and angular_cells >= 1")
        if not self.exclusion_radius > 0:
            raise ValidationError("exclusion_radius must be positive")
        if not 0 < self.rel_tol < 1:
            raise ValidationError("rel_tol must lie in (0, 1)")


@dataclass(frozen=True)
class EnergyResult:
    value: float
    achieved_rel_tol: float
    self_energy_removed: bool = True


@lru_cache(maxsize=None)
def _prolate_nodes(n: int):
    """Nodes/weights over prolate spheroidal (mu, nu) covering all space.

    Each half nu in [0, pi/2], [pi/2, pi] holds one focus at its mu = 0
    corner. The square mu <= pi/2 is split into two Duffy triangles, which
    turns the direction-dependent cross term at the focus into a smooth
    integrand; mu > pi/2 is compactified with s = exp(pi/2 - mu).
    Returned weights include the volume Jacobian divided by c**3.
    """
    x, w = _leggauss(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    U, V = (a.ravel() for a in np.meshgrid(u, u, indexing="ij"))
    W = np.outer(wu, wu).ravel()
    L = 0.5 * math.pi
    mu = np.concatenate([L * U, L * U * V, L - np.log(U)])
    nu = np.concatenate([L * U * V, L * U, L * V])
    wt = np.concatenate([W * L * L * U, W * L * L * U, W * L / U])
    mu = np.concatenate([mu, mu])
    nu = np.concatenate([nu, math.pi - nu])
    wt = np.concatenate([wt, wt])
    sh, sn = np.sinh(mu), np.sin(nu)
    axial = np.cosh(mu) * np.cos(nu)
    radial = sh * sn
    wt = wt * sh * sn * (sh * sh + sn * sn)
    return axial, radial, wt


def _perp_basis(e):
    helper = np.where(np.abs(e[:, :1]) < 0.9, np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
    u = np.cross(e, helper)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u, np.cross(e, u)


def _point_field(p, strength, coupling, x):
    rel = x - p
    r = np.linalg.norm(rel, axis=-1, keepdims=True)
    return (coupling.sign * coupling.constant) * strength * rel / r**3


def _cross_integrals_direct(pa, qa, pb, qb, coupling, n, n_phi):
    """Integral over all space of F_a . F_b for point-element pairs (rows)."""
    # canonical orientation: the quadrature nodes do not depend on argument order
    key = pa - pb
    flip = (key[:, 0] > 0) | ((key[:, 0] == 0) & ((key[:, 1] > 0) | ((key[:, 1] == 0) & (key[:, 2] > 0))))
    lo = np.where(flip[:, None], pb, pa)
    hi = np.where(flip[:, None], pa, pb)
    c = 0.5 * np.linalg.norm(hi - lo, axis=1)
    mid = 0.5 * (lo + hi)
    e = (hi - lo) / (2.0 * c)[:, None]
    u, v = _perp_basis(e)
    axial, radial, wt = _prolate_nodes(n)
    out = np.zeros(len(pa))
    for k in range(n_phi):
        phi = 2.0 * math.pi * k / n_phi
        ring = math.cos(phi) * u + math.sin(phi) * v
        x = (mid[:, None, :]
             + (c[:, None] * axial[None, :])[..., None] * e[:, None, :]
             + (c[:, None] * radial[None, :])[..., None] * ring[:, None, :])
        fa = _point_field(pa[:, None, :], qa[:, None, None], coupling, x)
        fb = _point_field(pb[:, None, :], qb[:, None, None], coupling, x)
        dot = fa[..., 0] * fb[..., 0] + fa[..., 1] * fb[..., 1] + fa[..., 2] * fb[..., 2]
        out = out + (dot @ wt) * (2.0 * math.pi / n_phi)
    return out * c**3


@lru_cache(maxsize=None)
def _unit_pair_integral(n: int, n_phi: int) -> float:
    """Cross integral for unit strengths and unit coupling at half-separation 1."""
    unit = Coupling("unit", 1.0, 1)
    pa = np.array([[-1.0, 0.0, 0.0]])
    pb = np.array([[1.0, 0.0, 0.0]])
    return float(_cross_integrals_direct(pa, np.ones(1), pb, np.ones(1), unit, n, n_phi)[0])


def _cross_integrals(pa, qa, pb, qb, coupling, n, n_phi):
    """Same integral as the direct quadrature, by similarity.

    The nodes sit on the pair's own prolate frame, scaled by the half
    separation c, and each field falls as 1/c**2, so the quadrature result
    is exactly the unit-pair value times K**2 qa qb / c (the integrand is
    symmetric about the pair axis, so orientation does not enter).
    """
    c = 0.5 * np.linalg.norm(pa - pb, axis=1)
    return coupling.constant**2 * qa * qb * _unit_pair_integral(n, n_phi) / c


def _pair_elements(a, b, n_ring):
    pa, qa = _points_of(a, n_ring)
    pb, qb = _points_of(b, n_ring)
    ia, ib = np.meshgrid(np.arange(len(pa)), np.arange(len(pb)), indexing="ij")
    return pa[ia.ravel()], qa[ia.ravel()], pb[ib.ravel()], qb[ib.ravel()]


def _field_energy_rows(pairs, sa, sb, n, n_ring, q: QuadratureSpec):
    """Cross-term energies for each row of rigid shifts ``sa``/``sb``."""
    rows = len(sa)
    blocks = []
    for a, b in pairs:
        pa, qa, pb, qb = _pair_elements(a, b, n_ring)
        m = len(pa)
        PA = (pa[None, :, :] + sa[:, None, :]).reshape(-1, 3)
        PB = (pb[None, :, :] + sb[:, None, :]).reshape(-1, 3)
        QA = np.tile(qa, rows)
        QB = np.tile(qb, rows)
        sep = np.linalg.norm(PA - PB, axis=1)
        if np.any(sep <= 2.0 * q.exclusion_radius):
            raise GeometryError(f"sources closer than 2 x exclusion_radius ({q.exclusion_radius} m)")
        c = a.coupling
        cross = _cross_integrals(PA, QA, PB, QB, c, n, q.angular_cells)
        # cross term of |F_a + F_b|^2 is 2 F_a.F_b; energy density s|F|^2/(8 pi K)
        blocks.append((c.sign / (4.0 * math.pi * c.constant)) * cross.reshape(rows, m))
    table = np.hstack(blocks)
    return np.array([math.fsum(row) for row in table])


def _localized_pairs(a, b):
    pairs = []
    for la in leaves(a):
        for lb in leaves(b):
            _check_coupling(la, lb)
            if isinstance(la, UniformField) or isinstance(lb, UniformField):
                continue
            pairs.append((la, lb))
    return pairs


def interaction_energy_series(a: SourceModel, b: SourceModel, shift_a=None, shift_b=None,
                              q: QuadratureSpec = QuadratureSpec()):
    """Field-energy interaction for many rigid placements at once.

    Returns ``(values, achieved_rel_tol)``; row i places ``a`` at
    ``shift_a[i]`` and ``b`` at ``shift_b[i]``. Cross terms with a
    UniformField leaf are taken as zero: a uniform field has no localized
    energy difference to offer.
    """
    sa = np.zeros((1, 3)) if shift_a is None else np.atleast_2d(np.asarray(shift_a, float))
    sb = np.zeros((1, 3)) if shift_b is None else np.atleast_2d(np.asarray(shift_b, float))
    rows = max(len(sa), len(sb))
    sa = np.ascontiguousarray(np.broadcast_to(sa, (rows, 3)))
    sb = np.ascontiguousarray(np.broadcast_to(sb, (rows, 3)))
    pairs = _localized_pairs(a, b)
    if not pairs:
        return np.zeros(rows), 0.0
    has_ring = any(isinstance(x, RingArc) for p in pairs for x in p)
    n, n_ring = q.nodes, RING_NODES
    prev = cur = _field_energy_rows(pairs, sa, sb, n, n_ring, q)
    while True:
        n *= 2
        if has_ring:
            n_ring *= 2
        if n > q.max_nodes:
            raise ConvergenceError(f"field-energy quadrature not converged to {q.rel_tol}", estimates=(prev, cur))
        cur = _field_energy_rows(pairs, sa, sb, n, n_ring, q)
        scale = np.maximum(np.abs(cur), np.abs(prev))
        change = np.divide(np.abs(cur - prev), scale, out=np.zeros(rows), where=scale > 0)
        worst = float(np.max(change))
        if worst < q.rel_tol:
            return cur, worst
        prev = cur


def interaction_energy(a: SourceModel, b: SourceModel, q: QuadratureSpec = QuadratureSpec()) -> EnergyResult:
    """Field-energy interaction between two sources.

    Integrates only the cross term of the squared total field over all
    space, so both divergent self energies are removed analytically.
    """
    values, tol = interaction_energy_series(a, b, q=q)
    return EnergyResult(float(values[0]), tol)
