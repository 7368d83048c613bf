"""Scenario configuration: unit-suffixed INI parsing, model construction and
the computations behind the command-line entry points."""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .analysis import backaction_bounds
from .core import CONSTANTS, EZ, Constants, TimeGrid
from .errors import ConfigurationError, ScenarioError
from .kinematics import (
    InterferometerSpec,
    beamsplitter_amplitudes,
    mach_zehnder_arms,
    parabolic_source,
    pulse_separation_for,
    semiclassical_evolve_many,
    wavenumber_for_order,
)
from .phase import (
    PhaseMethod,
    PhaseResult,
    fringe_scan,
    phase_from_field_energy,
    phase_potential_integral,
    phase_semiclassical,
)
from .qrf import entanglement_partition, make_state, phase_in_frame, to_frame
from .sources import PointMass, QuadratureSpec, RingArc, SourceModel, UniformField, total_mass

BUNDLED = ("fig2_quantum", "appendix2_semiclassical", "frames_default")

# key -> (kind, default); kind is float, int, bool, str, vec, floats, words
SCHEMA: dict[str, dict[str, tuple[str, Any]]] = {
    "constants": {
        "G_m3_per_kg_s2": ("float", None),
        "hbar_J_s": ("float", None),
        "eps0_F_per_m": ("float", None),
        "m_Rb87_kg": ("float", None),
        "lambda_L_m": ("float", None),
    },
    "scenario": {
        "id": ("str", None),
        "methods": ("words", ("potential",)),
        "P1_values": ("floats", (0.5,)),
        "include_lower_interferometer": ("bool", False),
        "fringe_points": ("int", 64),
    },
    "interferometer": {
        "test_mass_kg": ("float", None),
        "detector_mass_kg": ("float", 1.0),
        "splitter_order": ("float", None),
        "k_per_m": ("float", None),
        "separation_m": ("float", None),
        "T_s": ("float", None),
        "x0_m": ("vec", (0.0, 0.0, 0.0)),
        "gradiometer_baseline_m": ("float", 0.24),
        "time_samples": ("int", 4001),
    },
    "source": {
        "type": ("str", "point"),
        "mass_kg": ("float", None),
        "radius_m": ("float", None),
        "arc_span_rad": ("float", 2.0 * math.pi),
        "normal_unit": ("vec", (0.0, 0.0, 1.0)),
        "start_unit": ("vec", (1.0, 0.0, 0.0)),
        "g_vector_m_per_s2": ("vec", None),
    },
    "source_trajectory": {
        "xs0_m": ("vec", None),
        "apex_below_upper_arm_m": ("float", None),
        "accel_m_per_s2": ("vec", (0.0, 0.0, 0.0)),
    },
    "quadrature": {
        "nodes": ("int", 16),
        "angular_cells": ("int", 4),
        "exclusion_radius_m": ("float", 1e-9),
        "rel_tol": ("float", 1e-10),
        "field_energy_time_samples": ("int", 65),
    },
    "semiclassical": {
        "steps": ("int", 2000),
        "halving_tol_m": ("float", 1e-9),
        "arm_clearance_m": ("float", 1e-3),
    },
    "output": {
        "dir": ("str", "out"),
    },
}

METHOD_NAMES = {
    "potential": PhaseMethod.POTENTIAL_INTEGRAL,
    "field_energy": PhaseMethod.FIELD_ENERGY,
    "semiclassical": PhaseMethod.SEMICLASSICAL,
}

ASSUMPTIONS_BASE = (
    "T derived from the arm-to-arm separation at t = T (2 hbar k T / m)",
    "pulse timing and launch profile are not published; geometry is a calibrated choice",
)


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("gravab").joinpath("scenarios", f"{name}.ini")))


def resolve_config(path_or_name: str) -> Path:
    p = Path(path_or_name)
    if p.exists():
        return p
    if path_or_name in BUNDLED:
        return bundled_path(path_or_name)
    raise ConfigurationError(f"config {path_or_name!r} not found (bundled scenarios: {', '.join(BUNDLED)})")


def config_hash(text: str) -> str:
    """Git blob hash of the config text."""
    data = text.encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and "=" in s and s.split("=", 1)[0].strip() == key:
            return i
    return None


def _convert(kind: str, raw: str, where: str):
    try:
        if kind == "float":
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError("non-finite")
            return value
        if kind == "int":
            return int(raw)
        if kind == "bool":
            lowered = raw.strip().lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError("expected true/false")
        if kind == "str":
            return raw.strip()
        if kind == "vec":
            parts = [float(v) for v in raw.replace(",", " ").split()]
            if len(parts) != 3:
                raise ValueError("expected three components")
            return tuple(parts)
        if kind == "floats":
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if kind == "words":
            return tuple(v for v in raw.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigurationError(f"{where}: cannot parse {raw!r} ({exc})") from None
    raise AssertionError(kind)


@dataclass
class ScenarioConfig:
    values: dict[str, dict[str, Any]]
    text: str
    source_name: str = "<string>"
    overrides: dict[str, str] = field(default_factory=dict)

    def get(self, section: str, key: str):
        return self.values[section][key]

    @property
    def hash(self) -> str:
        extra = "".join(f"\n# override {k} = {v}" for k, v in sorted(self.overrides.items()))
        return config_hash(self.text + extra)

    @property
    def scenario_id(self) -> str:
        return self.get("scenario", "id")


def parse_config(text: str, source_name: str = "<string>", overrides: Mapping[str, str] | None = None) -> ScenarioConfig:
    """Parse and validate a scenario; ``overrides`` maps 'section.key' to raw strings."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source_name)
    except configparser.Error as exc:
        raise ConfigurationError(f"{source_name}: {exc}") from None
    raw: dict[str, dict[str, str]] = {s: dict(parser[s]) for s in parser.sections()}
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        raw.setdefault(section, {})[key] = str(value)

    values: dict[str, dict[str, Any]] = {}
    for section, entries in raw.items():
        if section not in SCHEMA:
            raise ConfigurationError(f"{source_name}: unknown section [{section}]")
        for key in entries:
            if key in SCHEMA[section]:
                continue
            line = _line_of(text, section, key)
            where = f"{source_name}:{line} [{section}]" if line else f"{source_name} [{section}]"
            suggestions = [k for k in SCHEMA[section] if k.startswith(key + "_")]
            if suggestions:
                raise ConfigurationError(
                    f"{where}: key {key!r} has no unit suffix (expected {' or '.join(suggestions)})"
                )
            raise ConfigurationError(f"{where}: unknown key {key!r}")
    for section, keys in SCHEMA.items():
        out = values.setdefault(section, {})
        for key, (kind, default) in keys.items():
            if key in raw.get(section, {}):
                line = _line_of(text, section, key)
                where = f"{source_name}:{line} [{section}] {key}" if line else f"{source_name} [{section}] {key}"
                out[key] = _convert(kind, raw[section][key], where)
            else:
                out[key] = default
    cfg = ScenarioConfig(values, text, source_name, dict(overrides or {}))
    _validate(cfg)
    return cfg


def load_config(path_or_name: str, overrides: Mapping[str, str] | None = None) -> ScenarioConfig:
    path = resolve_config(path_or_name)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from None
    return parse_config(text, str(path), overrides)


def _require(cfg: ScenarioConfig, section: str, key: str):
    v = cfg.get(section, key)
    if v is None:
        raise ConfigurationError(f"{cfg.source_name}: [{section}] {key} is required")
    return v


def _validate(cfg: ScenarioConfig):
    _require(cfg, "scenario", "id")
    for m in cfg.get("scenario", "methods"):
        if m not in METHOD_NAMES:
            raise ConfigurationError(f"{cfg.source_name}: unknown method {m!r} (choose from {', '.join(METHOD_NAMES)})")
    if not cfg.get("scenario", "P1_values"):
        raise ConfigurationError(f"{cfg.source_name}: [scenario] P1_values is empty")
    it = cfg.values["interferometer"]
    if (it["splitter_order"] is None) == (it["k_per_m"] is None):
        raise ConfigurationError(f"{cfg.source_name}: give exactly one of splitter_order, k_per_m")
    if (it["separation_m"] is None) == (it["T_s"] is None):
        raise ConfigurationError(f"{cfg.source_name}: give exactly one of separation_m, T_s")
    tr = cfg.values["source_trajectory"]
    if (tr["xs0_m"] is None) == (tr["apex_below_upper_arm_m"] is None):
        raise ConfigurationError(f"{cfg.source_name}: give exactly one of xs0_m, apex_below_upper_arm_m")
    kind = cfg.get("source", "type")
    if kind not in ("point", "ring", "uniform"):
        raise ConfigurationError(f"{cfg.source_name}: unknown source type {kind!r}")
    if kind in ("point", "ring"):
        _require(cfg, "source", "mass_kg")
    if kind == "ring":
        _require(cfg, "source", "radius_m")
    if kind == "uniform":
        _require(cfg, "source", "g_vector_m_per_s2")


# -- model construction -----------------------------------------------------------

def build_constants(cfg: ScenarioConfig) -> Constants:
    return CONSTANTS.with_overrides({k: v for k, v in cfg.values["constants"].items() if v is not None})


def build_source(cfg: ScenarioConfig, constants: Constants | None = None) -> SourceModel | None:
    """Source in its body frame, or None for a zero-mass source."""
    s = cfg.values["source"]
    if s["type"] == "uniform":
        return UniformField(np.array(s["g_vector_m_per_s2"]))
    if s["mass_kg"] == 0:
        return None
    if s["type"] == "point":
        return PointMass(s["mass_kg"], np.zeros(3))
    return RingArc(s["mass_kg"], s["radius_m"], np.zeros(3), np.array(s["normal_unit"]),
                   arc_span=s["arc_span_rad"], start=np.array(s["start_unit"]))


def source_mass(source: SourceModel | None) -> float:
    return 0.0 if source is None else total_mass(source)


def build_spec(cfg: ScenarioConfig, P1: float, lower: bool = False, constants: Constants | None = None) -> InterferometerSpec:
    c = constants or build_constants(cfg)
    it = cfg.values["interferometer"]
    m = it["test_mass_kg"] if it["test_mass_kg"] is not None else c.m_Rb87
    k = it["k_per_m"] if it["k_per_m"] is not None else wavenumber_for_order(it["splitter_order"], c.lambda_L)
    T = it["T_s"] if it["T_s"] is not None else pulse_separation_for(it["separation_m"], m, k, c)
    x0_upper = np.array(it["x0_m"])
    x0 = x0_upper - (it["gradiometer_baseline_m"] * EZ if lower else 0.0)
    tr = cfg.values["source_trajectory"]
    if tr["xs0_m"] is not None:
        xs0 = np.array(tr["xs0_m"])
    else:
        # the source apex sits this far below the upper arm at t = T
        top = x0_upper + c.hbar * k / m * T * EZ
        xs0 = top - tr["apex_below_upper_arm_m"] * EZ
    M = source_mass(build_source(cfg, c))
    return InterferometerSpec(m=m, M=M if M > 0 else 1.0, k=k, T=T, M_D=it["detector_mass_kg"], x0=x0,
                              xs0=xs0, a_src=np.array(tr["accel_m_per_s2"]), P1=P1, constants=c)


def time_grid(cfg: ScenarioConfig, spec: InterferometerSpec, key: str = "time_samples", section: str = "interferometer") -> TimeGrid:
    return TimeGrid.interferometer(spec.T, cfg.get(section, key))


def quadrature_spec(cfg: ScenarioConfig) -> QuadratureSpec:
    q = cfg.values["quadrature"]
    return QuadratureSpec(nodes=q["nodes"], angular_cells=q["angular_cells"],
                          exclusion_radius=q["exclusion_radius_m"], rel_tol=q["rel_tol"])


# -- computations ---------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseRow:
    scenario_id: str
    method: str
    P1: float
    interferometer: str  # upper, lower or gradiometer
    delta_phi: float
    tol: float


@dataclass
class RunReport:
    scenario_id: str
    config_hash: str
    rows: list[PhaseRow]
    assumptions: list[str]
    fringes: list[tuple[float, Any]] = field(default_factory=list)
    evolutions: list[tuple[float, Any]] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)

    def primary_rows(self, gradiometer: bool) -> list[PhaseRow]:
        want = "gradiometer" if gradiometer else "upper"
        return [r for r in self.rows if r.interferometer == want]


def _quantum_phase(method: PhaseMethod, cfg, spec, source, constants) -> PhaseResult:
    x1, x2 = mach_zehnder_arms(spec)
    xs = parabolic_source(spec)
    mass = source if source is not None else 0.0
    if method is PhaseMethod.POTENTIAL_INTEGRAL:
        return phase_potential_integral(x1, x2, xs, spec.m, mass, time_grid(cfg, spec), constants)
    grid = time_grid(cfg, spec, "field_energy_time_samples", "quadrature")
    return phase_from_field_energy(x1, x2, xs, spec.m, mass, grid, quadrature_spec(cfg), constants)


def run_scenario(cfg: ScenarioConfig) -> RunReport:
    """Every configured method at every P1, for the upper interferometer and,
    when enabled, the lower one and their difference."""
    constants = build_constants(cfg)
    source = build_source(cfg, constants)
    P1s = cfg.get("scenario", "P1_values")
    gradiometer = cfg.get("scenario", "include_lower_interferometer")
    parts = ("upper", "lower") if gradiometer else ("upper",)
    sid = cfg.scenario_id
    rows: list[PhaseRow] = []
    assumptions = list(ASSUMPTIONS_BASE)
    report = RunReport(sid, cfg.hash, rows, assumptions)
    report.summary["T_s"] = build_spec(cfg, P1s[0], constants=constants).T

    for name in cfg.get("scenario", "methods"):
        method = METHOD_NAMES[name]
        results: dict[tuple[float, str], PhaseResult] = {}
        if method is PhaseMethod.SEMICLASSICAL:
            specs = [build_spec(cfg, p, part == "lower", constants) for p in P1s for part in parts]
            sc = cfg.values["semiclassical"]
            if source is None:
                raise ScenarioError(f"{sid}: the semiclassical model needs a source with mass")
            evos = semiclassical_evolve_many(specs, source, sc["steps"], sc["arm_clearance_m"], sc["halving_tol_m"])
            it = iter(zip(specs, evos))
            for p in P1s:
                for part in parts:
                    spec, evo = next(it)
                    results[p, part] = phase_semiclassical(evo, spec, source)
                    if part == "upper":
                        report.evolutions.append((p, evo))
        else:
            for part in parts:
                # the quantum phase takes no amplitude input: compute once, reuse for every P1
                spec = build_spec(cfg, 0.5, part == "lower", constants)
                res = _quantum_phase(method, cfg, spec, source, constants)
                for p in P1s:
                    results[p, part] = res
        for p in P1s:
            for part in parts:
                r = results[p, part]
                rows.append(PhaseRow(sid, method.value, p, part, r.delta_phi, r.quadrature_tol))
                for a in r.assumptions:
                    if a not in assumptions:
                        assumptions.append(a)
            if gradiometer:
                up, lo = results[p, "upper"], results[p, "lower"]
                rows.append(PhaseRow(sid, method.value, p, "gradiometer", up.delta_phi - lo.delta_phi,
                                     up.quadrature_tol + lo.quadrature_tol))
        # fringe scans recover the phase from the detection probabilities
        for p in P1s:
            target = results[p, "upper"].delta_phi
            if gradiometer:
                target -= results[p, "lower"].delta_phi
            A1, A2 = beamsplitter_amplitudes(p)
            report.fringes.append((p, method.value, fringe_scan(target, A1, A2, cfg.get("scenario", "fringe_points"))))
    return report


def backaction_report(cfg: ScenarioConfig, delta_v: float) -> dict[str, Any]:
    constants = build_constants(cfg)
    source = build_source(cfg, constants)
    if source is None:
        raise ScenarioError("back-action needs a source with mass")
    spec = build_spec(cfg, 0.5, constants=constants)
    b = backaction_bounds(source_mass(source), delta_v, spec, source, constants=constants)
    return {
        "source_mass_kg": source_mass(source),
        "delta_v_m_per_s": delta_v,
        "position_uncertainty_m": b.position_uncertainty,
        "max_source_deflection_m": b.max_source_deflection,
        "deflection_time_s": b.deflection_time,
        "deflection_below_uncertainty": b.unobservable,
    }


# -- frames -----------------------------------------------------------------------------

FRAME_TOL = 1e-12


@dataclass(frozen=True)
class FramesOutcome:
    label: str
    phase_lab: float
    phase_frame_D: float
    phase_frame_A: float
    rel_diff: float
    entangled_D: Any = None
    entangled_A: Any = None

    @property
    def passed(self) -> bool:
        return self.rel_diff <= FRAME_TOL


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def frames_case(label, x1, x2, xs, m, source, grid, P1=0.5, masses=None, constants=CONSTANTS) -> FramesOutcome:
    A1, A2 = beamsplitter_amplitudes(P1)
    M = source if source is not None else 0.0
    state_D = make_state("D", [(A1, {"A": x1, "B": xs}), (A2, {"A": x2, "B": xs})], grid,
                         masses or {"A": m, "B": source_mass(source), "D": 1.0})
    state_A = to_frame(state_D, "A")
    lab = phase_potential_integral(x1, x2, xs, m, M, grid, constants).delta_phi
    in_D = phase_in_frame(state_D, m, M, constants=constants).delta_phi
    in_A = phase_in_frame(state_A, m, M, constants=constants).delta_phi
    diff = max(_rel(lab, in_D), _rel(lab, in_A))
    ent_D = entanglement_partition(state_D, ["A", "G"], ["B"])
    ent_A = entanglement_partition(state_A, ["B"], ["D"])
    return FramesOutcome(label, lab, in_D, in_A, diff, ent_D, ent_A)


def frames_default(cfg: ScenarioConfig) -> FramesOutcome:
    constants = build_constants(cfg)
    source = build_source(cfg, constants)
    spec = build_spec(cfg, cfg.get("scenario", "P1_values")[0], constants=constants)
    x1, x2 = mach_zehnder_arms(spec)
    return frames_case(cfg.scenario_id, x1, x2, parabolic_source(spec), spec.m, source,
                       time_grid(cfg, spec), spec.P1, constants=constants)


def random_frames_case(rng: np.random.Generator, index: int, n: int = 401) -> FramesOutcome:
    """A random two-branch scenario with a point source kept clear of the arms."""
    m = 10 ** rng.uniform(-26, -24)
    M = 10 ** rng.uniform(-1, 1)
    T = rng.uniform(0.1, 1.0)
    speed = rng.uniform(0.01, 0.2)
    k = speed * m / CONSTANTS.hbar
    x0 = rng.normal(scale=0.5, size=3)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    standoff = speed * T + rng.uniform(0.05, 0.5)
    xs0 = x0 + standoff * direction
    spec = InterferometerSpec(m=m, M=M, k=k, T=T, x0=x0, xs0=xs0, a_src=rng.normal(scale=0.1, size=3),
                              P1=rng.uniform(0.05, 0.95))
    x1, x2 = mach_zehnder_arms(spec)
    return frames_case(f"random-{index}", x1, x2, parabolic_source(spec), m, PointMass(M, np.zeros(3)),
                       TimeGrid.interferometer(T, n), spec.P1)
