"""Command line entry point: solve, calibrate, grid, oracle and validate."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .calibration import DEFAULT_PAIRS, calibrate, default_offsets, with_hidden_phases
from .errors import RtsAngleError
from .experiment import LAYOUT_MODES, SOLVER_MODES, GridRunConfig, run_grid, write_outputs
from .model import ScenarioConfig, load_scenario, validate_scenario
from .solver import AttenuationSet, TargetAngle, predict_peak, solve_attenuations

log = logging.getLogger("rtsangle")

ATTEN_FIELDS = ("A_l", "A_r", "A_b", "A_t")


def _scenario(path) -> ScenarioConfig:
    return load_scenario(path) if path else ScenarioConfig()


def _solver_layout(scenario: ScenarioConfig, mode: str):
    return scenario.layout.ideal_square() if mode == "ideal-square" else scenario.layout


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_solve(args) -> int:
    scenario = _scenario(args.scenario)
    layout = _solver_layout(scenario, args.solver_mode)
    attens = solve_attenuations(TargetAngle(args.azimuth, args.elevation), layout, scenario.radar)
    peak = predict_peak(attens, layout, scenario.radar)
    out = {"target": {"azimuth": args.azimuth, "elevation": args.elevation},
           "attenuations": attens.to_dict(),
           "predicted_peak": asdict(peak)}
    json.dump(out, sys.stdout, indent=2)
    print()
    return 0


def cmd_calibrate(args) -> int:
    scenario = _scenario(args.scenario)
    if args.hidden_phases is not None:
        phases = _floats(args.hidden_phases)
    elif args.seed is not None:
        phases = np.random.default_rng(args.seed).uniform(0, 2 * np.pi, 4)
    else:
        phases = None
    if phases is not None:
        scenario = with_hidden_phases(scenario, phases)
    offsets = default_offsets(scenario, args.steps)
    res = calibrate(scenario, DEFAULT_PAIRS, offsets, args.metric)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweeps.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair", "axis", "offset_s", "angle_error_deg", "peak_magnitude"])
        for s in res.sweeps:
            tag = f"{s.pair[0]}-{s.pair[1]}"
            for off, err, mag in zip(s.offsets, s.angle_errors, s.magnitudes):
                w.writerow([tag, s.axis, repr(float(off)), repr(float(err)), repr(float(mag))])
    table = {
        **res.table.to_dict(),
        "chosen_offsets_s": {f"{s.pair[0]}-{s.pair[1]}": s.chosen_offset for s in res.sweeps},
        "period_s": res.sweeps[0].period if res.sweeps else None,
        "metric": args.metric,
        "residual_coherency_deg": float(np.degrees(res.residual_coherency)),
    }
    (out / "calibration.json").write_text(json.dumps(table, indent=2))
    json.dump(table, sys.stdout, indent=2)
    print()
    return 0


def cmd_grid(args) -> int:
    scenario = _scenario(args.scenario)
    config = GridRunConfig(
        azimuths=tuple(_floats(args.azimuths)) if args.azimuths is not None else
        GridRunConfig.azimuths,
        elevations=tuple(_floats(args.elevations)) if args.elevations is not None else
        GridRunConfig.elevations,
        layout_mode=args.layout, solver_mode=args.solver_mode,
        hidden_phases=args.hidden_phases, seed=args.seed, workers=args.workers)
    result = run_grid(config, scenario)
    summary = write_outputs(result, args.out)
    failed = sum(r.error is not None for r in result.runs)
    print(f"{len(result.runs)} runs, {failed} failed, written to {args.out}")
    if summary is not None:
        for axis, series in (("azimuth", summary.azimuth), ("elevation", summary.elevation)):
            text = ", ".join(f"{k:+.2f}: {v:+.4f}" for k, v in series.items())
            print(f"mean {axis} error  {text}")
    return 0 if failed == 0 else 2


def _read_attenuations(path) -> list[AttenuationSet]:
    p = Path(path)
    if p.suffix == ".json":
        rows = json.loads(p.read_text())
    else:
        with open(p, newline="") as fh:
            rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        try:
            out.append(AttenuationSet(*(float(row[k]) for k in ATTEN_FIELDS)))
        except (KeyError, ValueError) as exc:
            raise RtsAngleError(f"bad attenuation row {row!r}: {exc}") from exc
    return out


def cmd_oracle(args) -> int:
    scenario = _scenario(args.scenario)
    layout = _solver_layout(scenario, args.solver_mode)
    w = csv.writer(sys.stdout)
    w.writerow([*ATTEN_FIELDS, "pred_az", "pred_el"])
    for attens in _read_attenuations(args.attenuations):
        peak = predict_peak(attens, layout, scenario.radar)
        w.writerow([attens.a_l, attens.a_r, attens.a_b, attens.a_t,
                    repr(peak.azimuth), repr(peak.elevation)])
    return 0


def cmd_validate(args) -> int:
    diags = validate_scenario(_scenario(args.scenario))
    for d in diags:
        print(d)
    if not diags:
        print("ok")
    return 1 if any(d.severity == "error" for d in diags) else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rtsangle",
                                     description="Superimposed RTS target angle simulation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_arg(p):
        p.add_argument("--scenario", help="scenario YAML (default: built-in measured layout)")

    def solver_arg(p):
        p.add_argument("--solver-mode", choices=SOLVER_MODES, default="reduced-layout")

    p = sub.add_parser("solve", help="attenuations for a target angle")
    p.add_argument("azimuth", type=float)
    p.add_argument("elevation", type=float)
    scenario_arg(p)
    solver_arg(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("calibrate", help="pairwise delay-sweep calibration")
    scenario_arg(p)
    p.add_argument("--hidden-phases", help="comma separated channel phases in rad")
    p.add_argument("--seed", type=int, help="draw random hidden phases from this seed")
    p.add_argument("--steps", type=int, default=201)
    p.add_argument("--metric", choices=("magnitude", "angle"), default="magnitude")
    p.add_argument("--out", default="calibration_out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("grid", help="run the set-point grid")
    scenario_arg(p)
    solver_arg(p)
    p.add_argument("--layout", choices=LAYOUT_MODES, default="ideal",
                   help="FE layout; 'scenario' uses the one in --scenario")
    p.add_argument("--azimuths", help="comma separated set points (deg)")
    p.add_argument("--elevations", help="comma separated set points (deg)")
    p.add_argument("--hidden-phases", action="store_true",
                   help="inject random channel phases and calibrate first")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="grid_out")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("oracle", help="predicted peak for each row of an attenuation file")
    p.add_argument("attenuations", help="CSV or JSON with A_l, A_r, A_b, A_t")
    scenario_arg(p)
    solver_arg(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (RtsAngleError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
