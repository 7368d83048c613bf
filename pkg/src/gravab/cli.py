"""Command-line entry point: gravab {run, sweep, frames, fit, energy, backaction}."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import scenario as sc
from .analysis import NOT_A_TARGET, PhaseDataPoint, reduced_chi_squared, weighted_linear_fit
from .core import CONSTANTS
from .errors import ConfigurationError, GravabError, ValidationError
from .sources import PointMass, QuadratureSpec, coulomb, gravity, interaction_energy, mutual_energy


def fmt(x) -> str:
    """17 significant digits, so floats round-trip exactly."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header_hash: str, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={header_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def write_report(path: Path, header_hash: str, items: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={header_hash}\n")
        for key, value in items.items():
            if isinstance(value, (list, tuple)):
                for i, v in enumerate(value):
                    fh.write(f"{key}[{i}] = {fmt(v)}\n")
            else:
                fh.write(f"{key} = {fmt(value)}\n")


def _overrides(args) -> dict[str, str]:
    out = {}
    if getattr(args, "steps", None) is not None:
        out["semiclassical.steps"] = str(args.steps)
    if getattr(args, "rel_tol", None) is not None:
        out["quadrature.rel_tol"] = repr(args.rel_tol)
    return out


def _out_dir(args, cfg) -> Path:
    return Path(args.out_dir) if args.out_dir else Path(cfg.get("output", "dir"))


PHASE_COLUMNS = ("scenario_id", "method", "P1", "delta_phi_rad", "tol")


def _emit_run(report: sc.RunReport, cfg: sc.ScenarioConfig, out: Path) -> list[Path]:
    h = report.config_hash
    grad = cfg.get("scenario", "include_lower_interferometer")
    written = []
    primary = report.primary_rows(grad)
    p = out / "phases.csv"
    write_csv(p, h, PHASE_COLUMNS, [(r.scenario_id, r.method, r.P1, r.delta_phi, r.tol) for r in primary])
    written.append(p)
    p = out / "phases_by_interferometer.csv"
    write_csv(p, h, PHASE_COLUMNS + ("interferometer",),
              [(r.scenario_id, r.method, r.P1, r.delta_phi, r.tol, r.interferometer) for r in report.rows])
    written.append(p)
    p = out / "fringe.csv"
    write_csv(p, h, ("method", "P1", "ref_phase", "p_d1"),
              [(m, P1, rp, pd) for P1, m, f in report.fringes for rp, pd in zip(f.ref_phase, f.p_d1)])
    written.append(p)
    if report.evolutions:
        p = out / "trajectories.csv"
        cols = ["P1", "t_s"] + [f"{n}_{c}_m" for n in ("x1", "x2", "x_cm", "xs") for c in "xyz"]

        def traj_rows():
            for P1, evo in report.evolutions:
                t = evo.times
                blocks = [evo.x1.positions, evo.x2.positions, evo.x_cm.positions, evo.xs(t)]
                for i, tk in enumerate(t):
                    yield [P1, tk] + [v for b in blocks for v in b[i]]

        write_csv(p, h, cols, traj_rows())
        written.append(p)
    items = {"scenario_id": report.scenario_id, "config_hash": h, **report.summary}
    items["primary_interferometer"] = "gradiometer (upper minus lower)" if grad else "upper"
    for r in primary:
        items[f"{r.method}.P1={fmt(r.P1)}.delta_phi_rad"] = r.delta_phi
    for P1, m, f in report.fringes:
        items[f"{m}.P1={fmt(P1)}.fringe_recovered_rad"] = f.recovered_phase
        items[f"{m}.P1={fmt(P1)}.detection_literal_rad"] = f.literal_phase
        items[f"{m}.P1={fmt(P1)}.contrast"] = f.contrast
    items["assumptions"] = report.assumptions
    p = out / "report.txt"
    write_report(p, h, items)
    written.append(p)
    return written


def cmd_run(args) -> int:
    cfg = sc.load_config(args.config, _overrides(args))
    report = sc.run_scenario(cfg)
    out = _out_dir(args, cfg)
    for p in _emit_run(report, cfg, out):
        print(f"wrote {p}")
    for r in report.primary_rows(cfg.get("scenario", "include_lower_interferometer")):
        print(f"{r.method:18s} P1={r.P1:<5g} delta_phi = {r.delta_phi:+.6f} rad")
    return 0


def cmd_sweep(args) -> int:
    key = args.key if "." in args.key else {"P1": "scenario.P1_values"}.get(args.key, args.key)
    section, _, name = key.partition(".")
    kind = sc.SCHEMA.get(section, {}).get(name, (None,))[0]
    if kind not in ("float", "int", "floats"):
        raise ValidationError(f"sweep key {args.key!r} is not a numeric setting")
    try:
        values = [float(v) for v in args.values.split(",")]
    except ValueError:
        raise ValidationError(f"sweep values must be numbers, got {args.values!r}") from None
    base = _overrides(args)
    rows, hashes = [], []
    for v in values:
        cfg = sc.load_config(args.config, {**base, key: repr(int(v)) if kind == "int" else repr(v)})
        report = sc.run_scenario(cfg)
        hashes.append(cfg.hash)
        grad = cfg.get("scenario", "include_lower_interferometer")
        rows.extend((v, r.scenario_id, r.method, r.P1, r.delta_phi, r.tol) for r in report.primary_rows(grad))
    out = Path(args.out_dir) if args.out_dir else Path(sc.load_config(args.config).get("output", "dir"))
    combined = sc.config_hash("\n".join(hashes))
    p = out / "sweep.csv"
    write_csv(p, combined, (name,) + PHASE_COLUMNS, rows)
    print(f"wrote {p}")
    for r in rows:
        print(f"{name}={fmt(r[0])} {r[2]} P1={fmt(r[3])} delta_phi = {r[4]:+.6f} rad")
    return 0


def cmd_frames(args) -> int:
    if args.seed is not None:
        rng = np.random.default_rng(args.seed)
        outcomes = [sc.random_frames_case(rng, i) for i in range(args.count)]
        h = sc.config_hash(f"frames seed={args.seed} count={args.count}")
    else:
        cfg = sc.load_config(args.config or "frames_default", _overrides(args))
        outcomes = [sc.frames_default(cfg)]
        h = cfg.hash
    rows = [(o.label, o.phase_lab, o.phase_frame_D, o.phase_frame_A, o.rel_diff,
             o.entangled_D.is_product, o.entangled_A.schmidt_rank, "PASS" if o.passed else "FAIL") for o in outcomes]
    out = Path(args.out_dir) if args.out_dir else Path("out")
    p = out / "frames.csv"
    write_csv(p, h, ("case", "delta_phi_lab_rad", "delta_phi_frame_D_rad", "delta_phi_frame_A_rad", "rel_diff",
                     "frame_D_B_product", "frame_A_BD_schmidt_rank", "verdict"), rows)
    print(f"wrote {p}")
    passed = sum(o.passed for o in outcomes)
    if len(outcomes) == 1:
        o = outcomes[0]
        print(f"frame D: delta_phi = {o.phase_frame_D:+.15e} rad; "
              f"B separable from (A, field): {o.entangled_D.is_product}")
        print(f"frame A: delta_phi = {o.phase_frame_A:+.15e} rad; "
              f"(B, D) Schmidt rank: {o.entangled_A.schmidt_rank}")
    print(f"verdict: {'PASS' if passed == len(outcomes) else 'FAIL'} ({passed}/{len(outcomes)})")
    return 0 if passed == len(outcomes) else 4


def _read_fit_csv(path: str) -> list[PhaseDataPoint]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from None
    reader = csv.DictReader(lines)
    need = {"p_upper", "phase_rad", "sigma_rad"}
    if not reader.fieldnames or not need <= set(reader.fieldnames):
        raise ConfigurationError(f"{path}: header must contain {', '.join(sorted(need))}")
    pts = []
    for i, row in enumerate(reader, 2):
        try:
            pts.append(PhaseDataPoint(float(row["p_upper"]), float(row["phase_rad"]), float(row["sigma_rad"])))
        except ValueError as exc:
            raise ConfigurationError(f"{path}:{i}: {exc}") from None
    return pts


def cmd_fit(args) -> int:
    data = _read_fit_csv(args.data)
    fit = weighted_linear_fit(data, args.distribution)
    items = {
        "points": len(data),
        "slope_rad": fit.slope,
        "slope_sigma_rad": fit.slope_sigma,
        "intercept_rad": fit.intercept,
        "intercept_sigma_rad": fit.intercept_sigma,
        "p_value": fit.p_value,
        "p_value_distribution": fit.distribution,
        "fit_chi2_red": fit.chi2_red,
        "dof": fit.dof,
    }
    if args.model_rad is not None:
        items["model_rad"] = args.model_rad
        items["model_chi2_red"] = reduced_chi_squared(data, args.model_rad)
    items["note"] = NOT_A_TARGET
    h = sc.config_hash(Path(args.data).read_text(encoding="utf-8") + f"\n{args.distribution} {args.model_rad}")
    for k, v in items.items():
        print(f"{k} = {fmt(v)}")
    if args.out_dir:
        p = Path(args.out_dir) / "fit_report.txt"
        write_report(p, h, items)
        print(f"wrote {p}")
    return 0


def cmd_energy(args) -> int:
    coupling = gravity(CONSTANTS) if args.coupling == "gravity" else coulomb(CONSTANTS)
    a = PointMass(args.mass_a_kg, [0.0, 0.0, 0.0], charge=args.charge_a_C, coupling=coupling)
    b = PointMass(args.mass_b_kg, [args.distance_m, 0.0, 0.0], charge=args.charge_b_C, coupling=coupling)
    q = QuadratureSpec(rel_tol=args.rel_tol) if args.rel_tol is not None else QuadratureSpec()
    e = interaction_energy(a, b, q)
    ref = mutual_energy(a, b)
    print(f"field_energy_J = {fmt(e.value)}")
    print(f"pair_energy_J = {fmt(ref)}")
    print(f"relative_difference = {fmt(abs(e.value - ref) / abs(ref))}")
    print(f"achieved_rel_tol = {fmt(e.achieved_rel_tol)}")
    return 0


def cmd_backaction(args) -> int:
    cfg = sc.load_config(args.config or "fig2_quantum", _overrides(args))
    items = sc.backaction_report(cfg, args.delta_v_m_per_s)
    for k, v in items.items():
        print(f"{k} = {fmt(v)}")
    if args.out_dir:
        p = Path(args.out_dir) / "backaction_report.txt"
        write_report(p, cfg.hash, items)
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gravab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="scenario INI path or bundled name (" + ", ".join(sc.BUNDLED) + ")")
        p.add_argument("--out-dir", help="output directory (default: [output] dir)")
        p.add_argument("--steps", type=int, help="override [semiclassical] steps")
        p.add_argument("--rel-tol", type=float, help="override [quadrature] rel_tol")
        p.add_argument("--seed", type=int, help="seed for randomized scenarios")

    p = sub.add_parser("run", help="compute the configured phases and write CSV outputs")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="rerun a scenario over values of one numeric key")
    common(p)
    p.add_argument("--key", required=True, help="section.key, or P1")
    p.add_argument("--values", required=True, help="comma-separated numbers")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("frames", help="compare the phase across reference frames")
    common(p, config_required=False)
    p.add_argument("--count", type=int, default=100, help="randomized cases when --seed is given")
    p.set_defaults(func=cmd_frames)

    p = sub.add_parser("fit", help="weighted slope fit of phase against upper-arm probability")
    p.add_argument("--data", required=True, help="CSV with p_upper, phase_rad, sigma_rad")
    p.add_argument("--model-rad", type=float, help="model phase for the reduced chi-squared")
    p.add_argument("--distribution", choices=("normal", "t"), default="normal")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("energy", help="field-energy check for two point sources")
    p.add_argument("--mass-a-kg", type=float, default=1.0)
    p.add_argument("--mass-b-kg", type=float, default=1.0)
    p.add_argument("--distance-m", type=float, default=1.0)
    p.add_argument("--coupling", choices=("gravity", "coulomb"), default="gravity")
    p.add_argument("--charge-a-C", type=float)
    p.add_argument("--charge-b-C", type=float)
    p.add_argument("--rel-tol", type=float)
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("backaction", help="source position uncertainty against its deflection")
    common(p, config_required=False)
    p.add_argument("--delta-v-m-per-s", type=float, default=1e-3)
    p.set_defaults(func=cmd_backaction)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GravabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
