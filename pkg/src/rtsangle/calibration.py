"""Pairwise phase-coherency calibration by delay sweeps.

Two front ends are active at a time. The RTS delay of one is swept while
the other stays fixed, and the angle of the superimposed target is watched.
A delay offset rotates the channel phase at ``f_rts + B/2`` (the IF carrier
plus the half-chirp term of the range DFT), so the error curve repeats
with period ``1 / (f_rts + B/2)``.

Sweeping the delay also slides the swept echo across the range bin, which
on its own would pull the superimposed peak toward the stronger channel.
The sweep therefore holds the two echoes at equal amplitude in the
detection bin, matching the equal-attenuation premise of the procedure.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .beamforming import AngleEstimate, locate_peak
from .errors import IncompleteCalibrationError, InvalidConfigError
from .model import NUM_CHANNELS, ScenarioConfig
from .signal_chain import channel_delays, range_bin_of_delay, range_dft, synthesize_cube
from .solver import channel_phases, coherency_check

DEFAULT_PAIRS = ((0, 1), (0, 2), (2, 3))
DEFAULT_STEPS = 201


class BinMigrationWarning(UserWarning):
    """The swept echo left the reference range bin during a sweep."""


def wrap_period(scenario: ScenarioConfig) -> float:
    """Delay offset that rotates a channel by one full phase turn."""
    return 1.0 / (scenario.rts_frequency + scenario.radar.bandwidth / 2)


def default_offsets(scenario: ScenarioConfig, steps: int = DEFAULT_STEPS) -> np.ndarray:
    p = wrap_period(scenario)
    return np.linspace(-p, p, steps)


def pair_axis(pair) -> str:
    a, b = sorted(pair)
    if (a, b) in ((0, 1), (2, 3)):
        return "azimuth"
    if (a, b) in ((0, 2), (1, 3)):
        return "elevation"
    raise InvalidConfigError(f"pair {pair} does not share a row or column")


@dataclass
class CalibrationSweep:
    pair: tuple[int, int]
    axis: str
    offsets: np.ndarray
    angle_errors: np.ndarray
    magnitudes: np.ndarray
    chosen_offset: float
    period: float
    metric: str = "angle"
    bin_migration: bool = False
    bin_offsets: np.ndarray | None = None  # swept echo minus reference bin, fractional

    def __post_init__(self):
        if len(self.offsets) > 1 and not np.all(np.diff(self.offsets) > 0):
            raise InvalidConfigError("sweep offsets must be strictly increasing")
        if len(self.angle_errors) != len(self.offsets):
            raise InvalidConfigError("one angle error per offset required")

    @property
    def step(self) -> float:
        return float(self.offsets[1] - self.offsets[0]) if len(self.offsets) > 1 else 0.0


@dataclass
class CalibrationTable:
    """Per-channel delay offsets relative to channel 0, plus amplitude trims.

    ``offsets[0]`` is always 0. ``shift`` is a common delay added to every
    channel so the delays actually programmed are non-negative.
    """

    offsets: tuple[float, ...]
    shift: float = 0.0
    gains: tuple[float, ...] = (1.0,) * NUM_CHANNELS

    @property
    def applied_delays(self) -> tuple[float, ...]:
        return tuple(o + self.shift for o in self.offsets)

    def to_dict(self) -> dict:
        return {"offsets_s": list(self.offsets), "shift_s": self.shift,
                "applied_delays_s": list(self.applied_delays), "gains": list(self.gains)}


def _pair_scenario(scenario: ScenarioConfig, pair) -> ScenarioConfig:
    channels = [replace(ch, attenuation=1.0 if q in pair else 0.0)
                for q, ch in enumerate(scenario.channels)]
    return scenario.with_channels(channels)


def _with_delay(scenario: ScenarioConfig, q: int, delay: float) -> ScenarioConfig:
    channels = list(scenario.channels)
    channels[q] = replace(channels[q], delay=delay)
    return scenario.with_channels(channels)


def _midpoint(scenario: ScenarioConfig, pair, axis: str) -> float:
    angles = scenario.layout.azimuth if axis == "azimuth" else scenario.layout.elevation
    return (angles[pair[0]] + angles[pair[1]]) / 2


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.abs(x) ** 2)))


def _pick_by_angle(errors, mags, valid, window: float = 0.95) -> int:
    """Index of smallest |error| inside the constructive-interference window."""
    inside = np.flatnonzero(valid & (mags >= window * mags[valid].max()))
    return int(inside[np.argmin(np.abs(errors[inside]))])


def run_sweep(scenario: ScenarioConfig, pair, offsets=None,
              metric: str = "magnitude") -> CalibrationSweep:
    """Sweep the delay of ``pair[1]`` against ``pair[0]`` through the full chain.

    Every offset is simulated from beat signal to angle estimate. The
    recorded error is the superimposed peak minus the pair midpoint along
    the pair's axis (degrees), alongside the peak magnitude.

    ``metric="magnitude"`` picks the offset of maximal superimposed peak
    magnitude. ``metric="angle"`` minimizes ``|error|`` within the
    constructive window around that peak. With both echoes at equal level
    the beam pattern is nearly symmetric for any phase difference, so the
    angle error carries little phase information near coherence and the
    magnitude criterion is the default.
    """
    q_ref, q_sw = pair
    axis = pair_axis(pair)
    offsets = default_offsets(scenario) if offsets is None else np.asarray(offsets, float)
    base = _pair_scenario(scenario, pair)
    # Common pre-delay keeps every programmed delay non-negative.
    pre = max(0.0, -float(offsets.min()))
    base = _with_delay(base, q_ref, scenario.channels[q_ref].delay + pre)
    sw_delay0 = scenario.channels[q_sw].delay + pre

    ref_spec = range_dft(synthesize_cube(base, channels=[q_ref]))
    power = np.sum(np.abs(ref_spec.bins) ** 2, axis=(0, 1))
    m = int(np.argmax(power))
    x_ref = ref_spec.bins[..., m]
    mid = _midpoint(scenario, pair, axis)

    errors, mags, in_bin = [], [], []
    tau_sw = float(np.mean(channel_delays(q_sw, _with_delay(base, q_sw, sw_delay0))))
    bin_offsets = np.array([range_bin_of_delay(tau_sw + off, scenario.radar) - m
                            for off in offsets])
    for off in offsets:
        sc = _with_delay(base, q_sw, sw_delay0 + off)
        spec = range_dft(synthesize_cube(sc, channels=[q_sw]))
        in_bin.append(int(np.argmax(np.sum(np.abs(spec.bins) ** 2, axis=(0, 1)))) == m)
        x_sw = spec.bins[..., m]
        x = x_ref + x_sw * (_rms(x_ref) / _rms(x_sw))
        est = locate_peak(x, scenario.radar)
        errors.append((est.azimuth if axis == "azimuth" else est.elevation) - mid)
        mags.append(est.peak_magnitude)
    errors, mags, in_bin = np.asarray(errors), np.asarray(mags), np.asarray(in_bin)
    migrated = not in_bin.all()
    if migrated:
        warnings.warn(f"pair {pair}: swept echo migrated out of range bin {m}",
                      BinMigrationWarning, stacklevel=2)

    # Past a full bin of migration the swept echo sits beyond a null of the
    # range response, with its phase flipped; only in-bin offsets are eligible.
    valid = in_bin if in_bin.any() else np.ones_like(in_bin)
    if metric == "magnitude":
        i = int(np.flatnonzero(valid)[np.argmax(mags[valid])])
    elif metric == "angle":
        i = _pick_by_angle(errors, mags, valid)
    else:
        raise InvalidConfigError(f"unknown sweep metric {metric!r}")
    chosen = float(offsets[i])
    return CalibrationSweep((q_ref, q_sw), axis, offsets, errors, mags, chosen,
                            wrap_period(scenario), metric, migrated, bin_offsets)


def estimate_period(sweep: CalibrationSweep) -> float:
    """Curve period from the sweep data alone.

    Only offsets whose swept echo stays inside the main lobe of the
    reference bin (|bin offset| < 1) are used; past a range-response null
    the echo's phase flips and the curve stops repeating. The period is the
    lag at which the magnitude curve best matches a shifted copy of itself,
    refined by a parabola through the mismatch minimum.
    """
    if sweep.bin_offsets is None:
        raise InvalidConfigError("sweep carries no bin offsets")
    ok = np.abs(sweep.bin_offsets) < 1
    mags = np.where(ok, sweep.magnitudes, np.nan)
    step = sweep.step
    n = len(mags)
    lags = np.arange(max(2, n // 8), n - n // 8)
    cost = np.full(len(lags), np.inf)
    for i, lag in enumerate(lags):
        diff = mags[lag:] - mags[:-lag]
        good = np.isfinite(diff)
        if good.sum() >= n // 8:
            cost[i] = np.mean(diff[good] ** 2)
    k = int(np.argmin(cost))
    if not np.isfinite(cost[k]):
        raise InvalidConfigError("sweep too short to show a full period")
    lag = float(lags[k])
    if 0 < k < len(lags) - 1 and np.all(np.isfinite(cost[k - 1:k + 2])):
        c0, c1, c2 = cost[k - 1:k + 2]
        den = c0 - 2 * c1 + c2
        if den > 0:
            lag += 0.5 * (c0 - c2) / den
    return lag * step


def _wrap(x: float, period: float) -> float:
    return (x + period / 2) % period - period / 2


def build_calibration(sweeps) -> CalibrationTable:
    """Chain pairwise sweep results into offsets relative to channel 0."""
    graph = {q: [] for q in range(NUM_CHANNELS)}
    for s in sweeps:
        r, w = s.pair
        graph[r].append((w, s.chosen_offset, s.period))
        graph[w].append((r, -s.chosen_offset, s.period))
    offsets = {0: 0.0}
    todo = deque([0])
    while todo:
        q = todo.popleft()
        for nb, off, period in graph[q]:
            if nb not in offsets:
                offsets[nb] = _wrap(offsets[q] + off, period)
                todo.append(nb)
    missing = sorted(set(range(NUM_CHANNELS)) - set(offsets))
    if missing:
        raise IncompleteCalibrationError(f"channels {missing} not connected to channel 0")
    values = [offsets[q] for q in range(NUM_CHANNELS)]
    return CalibrationTable(tuple(values), max(0.0, -min(values)))


def apply_calibration(scenario: ScenarioConfig, table: CalibrationTable) -> ScenarioConfig:
    """Program the table's delays and gain trims into the scenario's channels."""
    return scenario.with_channels(
        replace(ch, delay=ch.delay + d, gain_trim=g)
        for ch, d, g in zip(scenario.channels, table.applied_delays, table.gains))


def place_in_range_bin(scenario: ScenarioConfig, table: CalibrationTable) -> CalibrationTable:
    """Re-pick whole-period aliases and the common shift to share one range bin.

    Adding a whole wrap period to a channel keeps its phase but moves its
    echo in range. Channels are gathered on the shortest arc (modulo one
    period) and the common shift centres that arc on a DFT bin.
    """
    period = wrap_period(scenario)
    radar = scenario.radar
    base = np.array([float(np.mean(channel_delays(q, scenario))) for q in range(NUM_CHANNELS)])
    x = np.mod(np.asarray(table.offsets), period)
    order = np.argsort(x)
    xs = x[order]
    gaps = np.diff(np.concatenate([xs, [xs[0] + period]]))
    start = (int(np.argmax(gaps)) + 1) % NUM_CHANNELS
    unwrapped = np.empty(NUM_CHANNELS)
    for k in range(NUM_CHANNELS):
        i = (start + k) % NUM_CHANNELS
        unwrapped[order[i]] = xs[i] + (period if i < start else 0.0)
    unwrapped -= unwrapped[0]
    bins = np.array([range_bin_of_delay(t, radar) for t in base + unwrapped])
    center = (bins.max() + bins.min()) / 2
    bins_per_second = range_bin_of_delay(1.0, radar)
    min_shift = -unwrapped.min()
    k = math.ceil(center + bins_per_second * min_shift - 1e-12)
    shift = (k - center) / bins_per_second
    return CalibrationTable(tuple(float(u) for u in unwrapped), float(shift), table.gains)


def measure_gain_trims(scenario: ScenarioConfig, table: CalibrationTable) -> CalibrationTable:
    """Equalize the per-channel amplitude in the common detection bin.

    Each channel is simulated alone with its calibrated delay; the trims
    scale every channel to the level of channel 0.
    """
    sc = apply_calibration(scenario, replace(table, gains=(1.0,) * NUM_CHANNELS))
    sc = sc.with_channels(replace(ch, attenuation=1.0) for ch in sc.channels)
    spectra = [range_dft(synthesize_cube(sc, channels=[q])).bins for q in range(NUM_CHANNELS)]
    power = sum(np.sum(np.abs(b) ** 2, axis=(0, 1)) for b in spectra)
    m = int(np.argmax(power))
    levels = [_rms(b[..., m]) for b in spectra]
    gains = tuple(levels[0] / lv for lv in levels)
    return replace(table, gains=gains)


@dataclass
class CalibrationResult:
    sweeps: list[CalibrationSweep]
    table: CalibrationTable
    residual_coherency: float = field(default=0.0)


def calibrate(scenario: ScenarioConfig, pairs=DEFAULT_PAIRS, offsets=None,
              metric: str = "magnitude") -> CalibrationResult:
    """Run the pairwise sweeps and return a ready-to-apply calibration table."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BinMigrationWarning)
        sweeps = [run_sweep(scenario, p, offsets, metric) for p in pairs]
    table = build_calibration(sweeps)
    table = place_in_range_bin(scenario, table)
    table = measure_gain_trims(scenario, table)
    residual = coherency_check(channel_phases(apply_calibration(scenario, table)))
    return CalibrationResult(sweeps, table, residual)


def with_hidden_phases(scenario: ScenarioConfig, phases, gains=None) -> ScenarioConfig:
    """Inject per-channel hardware phase (and optional amplitude) mismatch."""
    gains = gains if gains is not None else [ch.gain_error for ch in scenario.channels]
    return scenario.with_channels(
        replace(ch, phase_offset=float(p), gain_error=float(g))
        for ch, p, g in zip(scenario.channels, phases, gains))


def angle_error_at(scenario: ScenarioConfig, azimuth: float, elevation: float,
                   layout=None) -> AngleEstimate:
    """Full-chain estimate for a solved target; convenience for calibration checks."""
    from .solver import TargetAngle, solve_attenuations

    attens = solve_attenuations(TargetAngle(azimuth, elevation),
                                layout if layout is not None else scenario.layout,
                                scenario.radar)
    sc = scenario.with_attenuations(attens.per_channel)
    spec = range_dft(synthesize_cube(sc))
    power = np.sum(np.abs(spec.bins) ** 2, axis=(0, 1))
    x = spec.bins[..., int(np.argmax(power))]
    return locate_peak(x, scenario.radar).with_set_point(azimuth, elevation)


__all__ = [
    "BinMigrationWarning", "CalibrationResult", "CalibrationSweep", "CalibrationTable",
    "DEFAULT_PAIRS", "angle_error_at", "apply_calibration", "build_calibration", "calibrate",
    "default_offsets", "estimate_period", "measure_gain_trims", "pair_axis", "place_in_range_bin", "run_sweep",
    "with_hidden_phases", "wrap_period",
]
