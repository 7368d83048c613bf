"""Branch states over classical trajectories and quantum-reference-frame
transforms between particles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import CONSTANTS, EZ, Constants, TimeGrid, integrate_time, vec3
from .errors import ConsistencyError, ScenarioError, ValidationError
from .kinematics import Trajectory, rk4
from .phase import PhaseMethod, PhaseResult
from .sources import PointMass, RingArc, SourceModel, UniformField, field_at, leaves, mutual_energy, total_mass

PATH_TOL = 1e-12
NORM_TOL = 1e-12
FIELD = "G"
FIELD_LABEL_ASSUMPTION = (
    "field labels are taken to follow the source positions relative to the frame particle; "
    "distinct labels are treated as orthogonal"
)


@dataclass(frozen=True, eq=False)
class FieldLabel:
    """Opaque gravitational-field state: sorted (particle, mass, relative path) entries."""

    entries: tuple

    def __eq__(self, other):
        if not isinstance(other, FieldLabel) or len(self.entries) != len(other.entries):
            return NotImplemented if not isinstance(other, FieldLabel) else False
        return all(
            la == lb and ma == mb and _same_path(pa, pb)
            for (la, ma, pa), (lb, mb, pb) in zip(self.entries, other.entries)
        )

    __hash__ = None


def _same_path(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and bool(np.all(np.abs(a - b) <= PATH_TOL))


@dataclass(frozen=True, eq=False)
class Branch:
    """One classical configuration: per-particle paths sampled on the state grid.

    ``tag`` is an optional caller-chosen identifier (e.g. path indices) that
    frame transforms carry along unchanged.
    """

    amplitude: complex
    paths: Mapping[str, np.ndarray]
    phase: float = 0.0
    tag: tuple = ()

    def position(self, label: str, frame: str) -> np.ndarray:
        if label == frame:
            n = len(next(iter(self.paths.values())))
            return np.zeros((n, 3))
        return self.paths[label]


@dataclass(frozen=True, eq=False)
class BranchState:
    frame: str
    particles: tuple[str, ...]
    branches: tuple[Branch, ...]
    grid: TimeGrid
    masses: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.branches:
            raise ValidationError("a state needs at least one branch")
        if self.frame in self.particles:
            raise ValidationError(f"frame particle {self.frame!r} cannot carry a path")
        if FIELD in self.particles or self.frame == FIELD:
            raise ValidationError(f"label {FIELD!r} is reserved for the field")
        for b in self.branches:
            if set(b.paths) != set(self.particles):
                raise ValidationError(f"branch paths {sorted(b.paths)} do not match particles {list(self.particles)}")
            for label, p in b.paths.items():
                if np.shape(p) != (self.grid.n, 3):
                    raise ValidationError(f"path of {label!r} must be sampled on the state grid")
        norm = sum(abs(b.amplitude) ** 2 for b in self.branches)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValidationError(f"branch amplitudes not normalized (sum |a|^2 = {norm!r})")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(sorted(self.particles + (self.frame,)))

    def field_label(self, branch: Branch) -> FieldLabel:
        """Pure function of the branch paths (frame particle at the origin)."""
        entries = []
        for label in self.labels:
            mass = self.masses.get(label, 0.0)
            if mass > 0:
                entries.append((label, mass, branch.position(label, self.frame)))
        return FieldLabel(tuple(entries))


@dataclass(frozen=True)
class FrameTransform:
    from_frame: str
    to_frame: str


@dataclass(frozen=True)
class EntanglementReport:
    bipartition: tuple[tuple[str, ...], tuple[str, ...]]
    schmidt_rank: int
    is_product: bool


def make_state(frame: str, branches: Sequence[tuple[complex, Mapping[str, Trajectory]]], grid: TimeGrid,
               masses: Mapping[str, float] | None = None, phases: Sequence[float] | None = None,
               tags: Sequence[tuple] | None = None) -> BranchState:
    """Build a state by sampling each branch's trajectories on ``grid``."""
    t = grid.times
    built = []
    particles = None
    for i, (amp, paths) in enumerate(branches):
        sampled = {label: np.asarray(tr(t), dtype=float) for label, tr in paths.items()}
        if particles is None:
            particles = tuple(sorted(sampled))
        built.append(Branch(complex(amp), sampled,
                            0.0 if phases is None else float(phases[i]),
                            () if tags is None else tuple(tags[i])))
    return BranchState(frame, particles, tuple(built), grid, dict(masses or {}))


def qrf_transform(state: BranchState, xf: FrameTransform) -> BranchState:
    """Move to the frame of particle ``xf.to_frame``.

    Every remaining path becomes (path - new frame path); the old frame
    particle enters with minus the new frame path. Amplitudes, phases and
    tags are unchanged.
    """
    if xf.from_frame != state.frame:
        raise ValidationError(f"state is in frame {state.frame!r}, not {xf.from_frame!r}")
    new = xf.to_frame
    if new == state.frame:
        return state
    if new not in state.particles:
        raise ValidationError(f"unknown frame particle {new!r}; particles are {list(state.particles)}")
    particles = tuple(sorted([p for p in state.particles if p != new] + [state.frame]))
    branches = []
    for b in state.branches:
        origin = b.paths[new]
        paths = {label: p - origin for label, p in b.paths.items() if label != new}
        paths[state.frame] = -origin
        branches.append(Branch(b.amplitude, paths, b.phase, b.tag))
    return BranchState(new, particles, tuple(branches), state.grid, state.masses)


def to_frame(state: BranchState, label: str) -> BranchState:
    return qrf_transform(state, FrameTransform(state.frame, label))


def relative_path(state: BranchState, branch: Branch, a: str, b: str) -> np.ndarray:
    """Position of ``b`` relative to ``a``; frame independent."""
    if a == state.frame:
        return branch.position(b, state.frame)
    if b == state.frame:
        return -branch.paths[a]
    return branch.paths[b] - branch.paths[a]


def _pair_energy(rel: np.ndarray, m: float, M: SourceModel | float) -> np.ndarray:
    """U(rel(t)) at every node, the source riding ``rel``."""
    source = PointMass(float(M), np.zeros(3)) if isinstance(M, (int, float)) else M
    return mutual_energy(PointMass(m, np.zeros(3)), source, None, rel)


def phase_in_frame(state: BranchState, m: float, M, grid: TimeGrid | None = None, test: str = "A",
                   source: str = "B", constants: Constants = CONSTANTS) -> PhaseResult:
    """Interferometer phase from relative test-source coordinates only."""
    if len(state.branches) != 2:
        raise ScenarioError(f"phase_in_frame needs two branches, got {len(state.branches)}")
    grid = grid or state.grid
    if grid != state.grid:
        raise ValidationError("grid must match the state's sampling grid")
    for label in (test, source):
        if label not in state.labels:
            raise ValidationError(f"unknown particle {label!r}")
    if isinstance(M, (int, float)) and M == 0:
        return PhaseResult(0.0, PhaseMethod.POTENTIAL_INTEGRAL, 0.0, (f"frame {state.frame}",))
    b1, b2 = state.branches
    u1 = _pair_energy(relative_path(state, b1, test, source), m, M)
    u2 = _pair_energy(relative_path(state, b2, test, source), m, M)
    return PhaseResult(integrate_time((u1 - u2) / constants.hbar, grid), PhaseMethod.POTENTIAL_INTEGRAL, 0.0,
                       (f"frame {state.frame}", FIELD_LABEL_ASSUMPTION))


def _configurations(state: BranchState, labels: Sequence[str]):
    """Index of each branch's configuration over ``labels`` (paths within PATH_TOL)."""
    reps: list = []
    index = []
    for b in state.branches:
        conf = []
        for label in labels:
            conf.append(state.field_label(b) if label == FIELD else b.position(label, state.frame))
        for k, rep in enumerate(reps):
            if all((x == y) if isinstance(x, FieldLabel) else _same_path(x, y) for x, y in zip(conf, rep)):
                index.append(k)
                break
        else:
            reps.append(conf)
            index.append(len(reps) - 1)
    return index, len(reps)


def entanglement_partition(state: BranchState, left: Iterable[str], right: Iterable[str] | None = None) -> EntanglementReport:
    """Schmidt rank of the branch amplitudes across ``left | right``.

    Labels are particle names or ``"G"`` for the field label; ``right``
    defaults to the particles not in ``left``.
    """
    left = tuple(sorted(set(left)))
    allowed = set(state.particles) | {FIELD}
    right = tuple(sorted(set(state.particles) - set(left))) if right is None else tuple(sorted(set(right)))
    if not left or not right:
        raise ValidationError("both sides of the bipartition need at least one label")
    bad = (set(left) | set(right)) - allowed
    if bad:
        raise ValidationError(f"unknown labels {sorted(bad)} (frame particle {state.frame!r} is the reference)")
    if set(left) & set(right):
        raise ValidationError("bipartition sides overlap")
    rows, nr = _configurations(state, left)
    cols, nc = _configurations(state, right)
    mat = np.zeros((nr, nc), dtype=complex)
    for b, i, j in zip(state.branches, rows, cols):
        mat[i, j] += b.amplitude * np.exp(1j * b.phase)
    s = np.linalg.svd(mat, compute_uv=False)
    rank = int(np.sum(s > 1e-12 * s[0])) if s[0] > 0 else 0
    return EntanglementReport((left, right), max(rank, 1), rank <= 1)


def local_field(state: BranchState, at: str, sources: Mapping[str, SourceModel]) -> list[np.ndarray]:
    """Field at particle ``at`` on every branch, each source riding its particle."""
    out = []
    for b in state.branches:
        here = b.position(at, state.frame)
        g = np.zeros_like(here)
        for label, src in sources.items():
            g = g + field_at(src, here - b.position(label, state.frame))
        out.append(g)
    return out


# -- BMV ------------------------------------------------------------------------

RECOMBINER = np.array([[1.0, 1j], [1j, 1.0]]) / math.sqrt(2.0)


@dataclass(frozen=True)
class BMVResult:
    probabilities: np.ndarray  # ports (ac, ad, bc, bd)
    frame_probabilities: np.ndarray
    witness_rank: int
    frames: tuple[str, str]


def _bmv_matrix(state: BranchState, couplings, particles, m, M, constants):
    psi = np.zeros((2, 2), dtype=complex)
    seen = set()
    for b in state.branches:
        tag = tuple(b.tag)
        if len(tag) != 2 or tag in seen or any(i not in (0, 1) for i in tag):
            raise ScenarioError(f"BMV branches need distinct (i, j) tags in {{0,1}}^2, got {tag}")
        seen.add(tag)
        if couplings is not None:
            extra = float(couplings[tag])
        else:
            rel = relative_path(state, b, *particles)
            extra = -integrate_time(_pair_energy(rel, m, M) / constants.hbar, state.grid)
        psi[tag] = b.amplitude * np.exp(1j * (b.phase + extra))
    if len(seen) != 4:
        raise ScenarioError("BMV state must hold all four path combinations")
    return psi


def _ports(psi: np.ndarray) -> np.ndarray:
    out = RECOMBINER @ psi @ RECOMBINER.T
    return (np.abs(out) ** 2).ravel()


def bmv_port_probabilities(state: BranchState, couplings: Mapping[tuple, float] | None = None,
                           pair: tuple[str, str] = ("1", "2"), m: float = 1.0, M: float = 1.0,
                           constants: Constants = CONSTANTS) -> BMVResult:
    """Joint output-port probabilities of two interferometers.

    Branch tags (i, j) give the path of each particle. ``couplings`` maps
    tags to extra phases; without it each branch gets -(1/hbar) times the
    integral of the pair energy along the relative path. The result is
    recomputed in the frame of the first particle (or the other pair member
    if that is already the frame) and must agree to 1e-12.
    """
    if len(state.branches) != 4:
        raise ScenarioError(f"BMV state needs four branches, got {len(state.branches)}")
    for label in pair:
        if label not in state.labels:
            raise ScenarioError(f"unknown particle {label!r}")
    probs = _ports(_bmv_matrix(state, couplings, pair, m, M, constants))
    target = pair[0] if pair[0] != state.frame else pair[1]
    other = to_frame(state, target)
    probs2 = _ports(_bmv_matrix(other, couplings, pair, m, M, constants))
    if np.max(np.abs(probs - probs2)) > 1e-12:
        raise ConsistencyError(f"BMV ports differ between frames {state.frame} and {target}")
    s = np.linalg.svd(_bmv_matrix(state, couplings, pair, m, M, constants), compute_uv=False)
    rank = int(np.sum(s > 1e-12 * s[0]))
    return BMVResult(probs, probs2, rank, (state.frame, target))


def bmv_state(paths1: Sequence[Trajectory], paths2: Sequence[Trajectory], grid: TimeGrid,
              labels: tuple[str, str] = ("1", "2"), frame: str = "D",
              masses: Mapping[str, float] | None = None) -> BranchState:
    """Balanced 2 x 2 product state of two two-path particles in the lab frame."""
    branches, tags = [], []
    for i, p1 in enumerate(paths1):
        for j, p2 in enumerate(paths2):
            branches.append((0.5, {labels[0]: p1, labels[1]: p2}))
            tags.append((i, j))
    return make_state(frame, branches, grid, masses, tags=tags)


# -- equivalence-principle accelerometer ----------------------------------------

@dataclass(frozen=True)
class Accelerometer:
    """Two free masses A and D = A + separation * axis, initially at rest."""

    position: np.ndarray
    separation: float
    axis: np.ndarray = field(default_factory=lambda: EZ.copy())

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))
        a = vec3(self.axis)
        object.__setattr__(self, "axis", a / np.linalg.norm(a))
        if not self.separation > 0:
            raise ValidationError("accelerometer separation must be positive")


@dataclass(frozen=True)
class EquivalenceResult:
    times: np.ndarray
    distances: tuple[np.ndarray, ...]  # A-D distance per source branch
    max_branch_difference: float
    tidal_bound: float
    source_distances: tuple[float, ...]

    @property
    def within_bound(self) -> bool:
        return self.max_branch_difference <= self.tidal_bound


def _source_distance(source: SourceModel, x: np.ndarray) -> float:
    d = math.inf
    for leaf in leaves(source):
        if isinstance(leaf, PointMass):
            d = min(d, float(np.linalg.norm(x - leaf.position)))
        elif isinstance(leaf, RingArc):
            pos, _ = leaf.elements(256)
            d = min(d, float(np.min(np.linalg.norm(pos - x, axis=1))))
    return d


def _evolve_pair(source, accel: Accelerometer, duration: float, steps: int):
    """Integrate the A-D centre and separation directly; the separation
    equation has exactly zero acceleration in a uniform field."""
    half = 0.5 * accel.separation * accel.axis

    def rhs(t, y):
        c, s = y[0], y[2]
        ga, gd = field_at(source, np.stack([c - 0.5 * s, c + 0.5 * s]))
        return np.stack([y[1], 0.5 * (ga + gd), y[3], gd - ga])

    y0 = np.stack([accel.position + half, np.zeros(3), 2.0 * half, np.zeros(3)])
    times, ys = rk4(rhs, y0, 0.0, duration, steps)
    return times, np.linalg.norm(ys[:, 2], axis=1)


def equivalence_principle_scenario(accel: Accelerometer, branches: Sequence[SourceModel], duration: float,
                                   steps: int = 2000, constants: Constants = CONSTANTS) -> EquivalenceResult:
    """A-D distance on each source branch and the tidal-order bound.

    The bound is the sum over branches of G M d tau^2 / r^3; uniform fields
    contribute nothing.
    """
    if len(branches) < 2:
        raise ScenarioError("the scenario needs at least two source branches")
    if not duration > 0:
        raise ValidationError("duration must be positive")
    series, radii, bound = [], [], 0.0
    times = None
    for src in branches:
        r = _source_distance(src, accel.position)
        if r <= 0 or accel.separation / r >= 0.1:
            raise ValidationError(
                f"accelerometer baseline {accel.separation} m is not small against source distance {r} m"
            )
        radii.append(r)
        if math.isfinite(r):
            bound += constants.G * total_mass(src) * accel.separation * duration**2 / r**3
        times, dist = _evolve_pair(src, accel, duration, steps)
        series.append(dist)
    diff = max(float(np.max(np.abs(s - series[0]))) for s in series[1:])
    return EquivalenceResult(times, tuple(series), diff, bound, tuple(radii))


# -- dumps --------------------------------------------------------------------------

def state_rows(state: BranchState):
    """Rows (branch_id, amplitude_re, amplitude_im, phase, particle, t, x, y, z)."""
    t = state.grid.times
    for i, b in enumerate(state.branches):
        for label in sorted(b.paths):
            for tk, (x, y, z) in zip(t, b.paths[label]):
                yield (i, b.amplitude.real, b.amplitude.imag, b.phase, label, tk, x, y, z)
