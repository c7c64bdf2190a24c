"""Desk-scale reproduction of the 6 x 5 superimposed-target measurement grid.

Every set point runs the full chain: solve attenuations, synthesize the
beat cube, range DFT, peak bin, 2-D beamforming, angle estimate. Next to
the simulated measurement each run carries the analytic prediction from
the closed-form model evaluated on the true FE positions, which is the
"simulated" reference the measurements are compared against.
"""

from __future__ import annotations

import csv
import json
import logging
import platform
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .beamforming import AngleEstimate, angle_grid, beamform_direct, estimate_angle
from .calibration import CalibrationTable, apply_calibration, calibrate, with_hidden_phases
from .errors import InvalidConfigError, RtsAngleError
from .model import FrontEndLayout, ScenarioConfig, reduce_layout
from .signal_chain import extract_peak_bin, range_dft, synthesize_cube
from .solver import (AttenuationSet, TargetAngle, coherence_trims, predict_peak_layout,
                     solve_attenuations)

log = logging.getLogger(__name__)

DEFAULT_AZIMUTHS = (-4.0, -2.4, -0.8, 0.8, 2.4, 4.0)
DEFAULT_ELEVATIONS = (-7.0, -3.5, 0.0, 3.5, 7.0)
LAYOUT_MODES = ("ideal", "table1", "mirrored", "aligned", "scenario")
SOLVER_MODES = ("reduced-layout", "ideal-square")


@dataclass(frozen=True)
class GridRunConfig:
    azimuths: tuple[float, ...] = DEFAULT_AZIMUTHS
    elevations: tuple[float, ...] = DEFAULT_ELEVATIONS
    layout_mode: str = "ideal"  # ideal | table1 | mirrored | aligned | scenario
    solver_mode: str = "reduced-layout"  # reduced-layout | ideal-square
    hidden_phases: bool = False
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.layout_mode not in LAYOUT_MODES:
            raise InvalidConfigError(f"unknown layout_mode {self.layout_mode!r}")
        if self.solver_mode not in SOLVER_MODES:
            raise InvalidConfigError(f"unknown solver_mode {self.solver_mode!r}")

    @property
    def set_points(self) -> list[tuple[float, float]]:
        return [(az, el) for el in self.elevations for az in self.azimuths]


@dataclass
class RunRecord:
    set_az: float
    set_el: float
    attens: AttenuationSet | None = None
    estimate: AngleEstimate | None = None
    predicted: TargetAngle | None = None
    range_bin: int | None = None
    error: str | None = None

    @property
    def err_az(self) -> float:
        return self.estimate.azimuth - self.set_az if self.estimate else float("nan")

    @property
    def err_el(self) -> float:
        return self.estimate.elevation - self.set_el if self.estimate else float("nan")

    def row(self) -> dict:
        a = self.attens
        e = self.estimate
        p = self.predicted
        return {
            "set_az": self.set_az, "set_el": self.set_el,
            "A_l": a.a_l if a else "", "A_r": a.a_r if a else "",
            "A_b": a.a_b if a else "", "A_t": a.a_t if a else "",
            "est_az": e.azimuth if e else "", "est_el": e.elevation if e else "",
            "err_az": self.err_az if e else "", "err_el": self.err_el if e else "",
            "sim_az": p.azimuth if p else "", "sim_el": p.elevation if p else "",
            "error": self.error or "",
        }


@dataclass
class GridRunResult:
    config: GridRunConfig
    runs: list[RunRecord]
    scenario: ScenarioConfig
    calibration: CalibrationTable | None = None
    solver_layout: FrontEndLayout | None = None

    @property
    def ok_runs(self) -> list[RunRecord]:
        return [r for r in self.runs if r.estimate is not None]


@dataclass
class Summary:
    azimuth: dict[float, float] = field(default_factory=dict)
    elevation: dict[float, float] = field(default_factory=dict)
    sim_azimuth: dict[float, float] = field(default_factory=dict)
    sim_elevation: dict[float, float] = field(default_factory=dict)


def _layout_for(config: GridRunConfig, scenario: ScenarioConfig) -> FrontEndLayout:
    r = scenario.layout.range_m
    if config.layout_mode == "ideal":
        return FrontEndLayout.square(range_m=r)
    if config.layout_mode == "table1":
        return FrontEndLayout.table1(range_m=r)
    if config.layout_mode == "mirrored":
        return FrontEndLayout.table1(range_m=r).mirrored_residuals()
    if config.layout_mode == "aligned":
        return FrontEndLayout.table1(range_m=r).aligned()
    return scenario.layout


def prepare_scenario(config: GridRunConfig, scenario: ScenarioConfig | None = None):
    """Scenario with the configured layout and coherent channels.

    Without injected hardware errors the channels get the phase trims a
    perfect calibration would produce. With ``hidden_phases`` random
    channel phases are drawn from ``seed`` and removed by the pairwise
    sweep calibration, as on the real test bench.
    """
    scenario = scenario or ScenarioConfig()
    scenario = replace(scenario, layout=_layout_for(config, scenario))
    table = None
    if config.hidden_phases:
        rng = np.random.default_rng(config.seed)
        hidden = with_hidden_phases(scenario, rng.uniform(0, 2 * np.pi, 4))
        table = calibrate(hidden).table
        scenario = apply_calibration(hidden, table)
    else:
        trims = coherence_trims(scenario.layout, scenario.radar)
        scenario = scenario.with_channels(replace(ch, phase_offset=ch.phase_offset + t)
                                          for ch, t in zip(scenario.channels, trims))
    return scenario, table


def measure(scenario: ScenarioConfig, attens: AttenuationSet, az_grid=None, el_grid=None):
    """Full chain for one attenuation setting: returns (range bin, AngleEstimate)."""
    sc = scenario.with_attenuations(attens.per_channel)
    m, x_r = extract_peak_bin(range_dft(synthesize_cube(sc)))
    az_grid = angle_grid() if az_grid is None else az_grid
    el_grid = angle_grid() if el_grid is None else el_grid
    return m, estimate_angle(beamform_direct(x_r, scenario.radar, az_grid, el_grid))


def _run_one(scenario, solver_layout, set_az, set_el) -> RunRecord:
    rec = RunRecord(set_az, set_el)
    try:
        rec.attens = solve_attenuations(TargetAngle(set_az, set_el), solver_layout,
                                        scenario.radar)
        rec.range_bin, est = measure(scenario, rec.attens)
        rec.estimate = est.with_set_point(set_az, set_el)
        rec.predicted = predict_peak_layout(rec.attens.per_channel, scenario.layout,
                                            scenario.radar)
    except RtsAngleError as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
        log.warning("run (%g, %g) failed: %s", set_az, set_el, rec.error)
    return rec


def run_grid(config: GridRunConfig, scenario: ScenarioConfig | None = None) -> GridRunResult:
    """Simulate every set point; failures are recorded per run, not raised.

    Set points must lie inside the rectangle of the layout the solver uses.
    """
    scenario, table = prepare_scenario(config, scenario)
    if config.solver_mode == "ideal-square":
        solver_layout = scenario.layout.ideal_square()
    else:
        solver_layout = scenario.layout
    points = config.set_points
    red = reduce_layout(solver_layout)
    outside = [p for p in points if not red.contains(*p)]
    if outside:
        raise InvalidConfigError(f"set points outside the FE rectangle: {outside}")
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            runs = list(pool.map(lambda p: _run_one(scenario, solver_layout, *p), points))
    else:
        runs = [_run_one(scenario, solver_layout, *p) for p in points]
    return GridRunResult(config, runs, scenario, table, solver_layout)


def _group_mean(pairs) -> dict[float, float]:
    groups = defaultdict(list)
    for key, value in pairs:
        groups[key].append(value)
    return {k: float(np.mean(v)) for k, v in sorted(groups.items())}


def summarize(result: GridRunResult) -> Summary:
    """Mean azimuth error per nominal azimuth, mean elevation error per nominal elevation."""
    ok = result.ok_runs
    if not ok:
        raise InvalidConfigError("no successful runs to summarize")
    s = Summary(
        azimuth=_group_mean((r.set_az, r.err_az) for r in ok),
        elevation=_group_mean((r.set_el, r.err_el) for r in ok),
    )
    with_pred = [r for r in ok if r.predicted is not None]
    s.sim_azimuth = _group_mean((r.set_az, r.predicted.azimuth - r.set_az) for r in with_pred)
    s.sim_elevation = _group_mean((r.set_el, r.predicted.elevation - r.set_el) for r in with_pred)
    return s


RUN_FIELDS = ["set_az", "set_el", "A_l", "A_r", "A_b", "A_t", "est_az", "est_el",
              "err_az", "err_el", "sim_az", "sim_el", "error"]


def write_runs(result: GridRunResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RUN_FIELDS)
        w.writeheader()
        for r in result.runs:
            w.writerow(r.row())


def write_summary(summary: Summary, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis", "nominal_deg", "mean_error_deg", "sim_mean_error_deg"])
        for axis, meas, sim in (("azimuth", summary.azimuth, summary.sim_azimuth),
                                ("elevation", summary.elevation, summary.sim_elevation)):
            for nominal, err in meas.items():
                w.writerow([axis, nominal, err, sim.get(nominal, "")])


def manifest(result: GridRunResult) -> dict:
    return {
        "config": asdict(result.config),
        "seed": result.config.seed,
        "scenario": result.scenario.to_dict(),
        "scenario_hash": result.scenario.digest(),
        "solver_layout": asdict(result.solver_layout) if result.solver_layout else None,
        "calibration": result.calibration.to_dict() if result.calibration else None,
        "runs": len(result.runs),
        "failed_runs": sum(r.error is not None for r in result.runs),
        "versions": {"rtsangle": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
    }


def write_outputs(result: GridRunResult, out_dir) -> Summary | None:
    """Write runs.csv first, then the manifest, then summary.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_runs(result, out / "runs.csv")
    (out / "manifest.json").write_text(json.dumps(manifest(result), indent=2))
    if not result.ok_runs:
        return None
    summary = summarize(result)
    write_summary(summary, out / "summary.csv")
    return summary
