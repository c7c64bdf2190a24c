"""Attenuations that steer the superimposed four-channel target.

The superimposed beam response of the square formation factors into an
azimuth bracket and an elevation bracket. Setting the derivative of each
bracket to zero at the requested angle fixes the ratio of the left/right
and bottom/top weights independently.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .beamforming import channel_phase_closed_form, g_az, g_el
from .errors import FlatSpectrumError, UnsolvableError
from .model import FrontEndLayout, RadarConfig, ReducedLayout, ScenarioConfig, reduce_layout
from .signal_chain import element_positions

# Below this |sin(theta) - sin(alpha)| the derivative uses its series expansion.
SERIES_THRESHOLD = 1e-8
# Derivatives (per radian) below this magnitude count as zero.
ZERO_DERIVATIVE = 1e-12


@dataclass(frozen=True)
class TargetAngle:
    azimuth: float
    elevation: float
    extrapolated: bool = False


@dataclass(frozen=True)
class AttenuationSet:
    a_l: float
    a_r: float
    a_b: float
    a_t: float
    extrapolated: bool = False

    @property
    def per_channel(self) -> tuple[float, float, float, float]:
        """Channel amplitudes A_0..A_3 (bottom-left, bottom-right, top-left, top-right)."""
        return (self.a_b * self.a_l, self.a_b * self.a_r,
                self.a_t * self.a_l, self.a_t * self.a_r)

    @classmethod
    def one_hot(cls, q: int) -> AttenuationSet:
        left = q in (0, 2)
        bottom = q in (0, 1)
        return cls(float(left), float(not left), float(bottom), float(not bottom))

    def scaled(self, factor: float) -> AttenuationSet:
        return AttenuationSet(self.a_l * factor, self.a_r * factor, self.a_b * factor,
                              self.a_t * factor, self.extrapolated)

    def to_dict(self) -> dict:
        return {"A_l": self.a_l, "A_r": self.a_r, "A_b": self.a_b, "A_t": self.a_t,
                "A_q": list(self.per_channel), "extrapolated": self.extrapolated}


def _square(layout) -> ReducedLayout:
    if isinstance(layout, ReducedLayout):
        return layout
    return reduce_layout(layout)


# h(X) = (X cos X - sin X) / X**2 by its Taylor series; stable for small |X|.
_TAYLOR_LIMIT = 0.5
_TAYLOR_COEF = np.array([(-1) ** k * 2 * k / math.factorial(2 * k + 1) for k in range(1, 12)])


def _dsinc(alpha, theta, c):
    """d/d alpha of sinc(c (sin theta - sin alpha)), per radian."""
    a = np.radians(alpha)
    u = np.sin(np.radians(theta)) - np.sin(a)
    x = np.pi * c * u
    cos_a = np.cos(a)
    small = np.abs(u) < SERIES_THRESHOLD
    near = np.abs(x) < _TAYLOR_LIMIT
    x_safe = np.where(near, 1.0, x)
    quotient = (x_safe * np.cos(x_safe) - np.sin(x_safe)) / x_safe**2
    powers = x[..., None] ** (2 * np.arange(1, 12) - 1)
    h = np.where(near, powers @ _TAYLOR_COEF, quotient)
    exact = -np.pi * c * cos_a * h
    series = cos_a * (np.pi * c) ** 2 / 3 * u
    out = np.where(small, series, exact)
    return float(out) if out.ndim == 0 else out


def dg_az(alpha, theta, radar: RadarConfig):
    """d g_az / d alpha, per radian, at azimuth ``alpha`` (degrees)."""
    return _dsinc(alpha, theta, radar.num_rx * radar.rx_spacing_y / radar.wavelength)


def dg_el(beta, psi, radar: RadarConfig):
    """d g_el / d beta, per radian, at elevation ``beta`` (degrees)."""
    return _dsinc(beta, psi, radar.num_tx * radar.tx_spacing_z / radar.wavelength)


def _pair_weights(d_low: float, d_high: float, at_low: bool, at_high: bool):
    """Weights (w_low, w_high) with w_low * d_low + w_high * d_high = 0."""
    low_zero, high_zero = abs(d_low) < ZERO_DERIVATIVE, abs(d_high) < ZERO_DERIVATIVE
    if low_zero and high_zero:
        if at_low:
            return 1.0, 0.0
        if at_high:
            return 0.0, 1.0
        raise UnsolvableError("both derivatives vanish away from the front ends")
    if high_zero:
        if not at_high:
            raise UnsolvableError("denominator derivative vanishes at this angle")
        return 0.0, 1.0
    w = np.array([d_high, -d_low])
    w = w / w[np.argmax(np.abs(w))]
    return float(w[0]) + 0.0, float(w[1]) + 0.0


def _at(angle: float, fe: float) -> bool:
    return abs(math.sin(math.radians(angle)) - math.sin(math.radians(fe))) < SERIES_THRESHOLD


def solve_attenuations(target: TargetAngle, layout, radar: RadarConfig) -> AttenuationSet:
    """Attenuations placing the superimposed peak at ``target``.

    Normalized so the larger weight of each axis is 1. Targets outside the
    front-end rectangle are solved anyway and flagged; they may need a
    negative weight, which a pure attenuator cannot realize.
    """
    sq = _square(layout)
    alpha, beta = target.azimuth, target.elevation
    a_l, a_r = _pair_weights(dg_az(alpha, sq.theta_l, radar), dg_az(alpha, sq.theta_r, radar),
                             _at(alpha, sq.theta_l), _at(alpha, sq.theta_r))
    a_b, a_t = _pair_weights(dg_el(beta, sq.psi_b, radar), dg_el(beta, sq.psi_t, radar),
                             _at(beta, sq.psi_b), _at(beta, sq.psi_t))
    extrapolated = not sq.contains(alpha, beta) or min(a_l, a_r, a_b, a_t) < 0
    return AttenuationSet(a_l, a_r, a_b, a_t, extrapolated)


def azimuth_factor(alpha, attens: AttenuationSet, sq: ReducedLayout, radar: RadarConfig):
    return attens.a_l * g_az(alpha, sq.theta_l, radar) + attens.a_r * g_az(alpha, sq.theta_r, radar)


def elevation_factor(beta, attens: AttenuationSet, sq: ReducedLayout, radar: RadarConfig):
    return attens.a_b * g_el(beta, sq.psi_b, radar) + attens.a_t * g_el(beta, sq.psi_t, radar)


def superimposed_value(alpha, beta, attens: AttenuationSet, layout, radar: RadarConfig):
    """Coherent four-channel beam response with unit common phase."""
    sq = _square(layout)
    scale = radar.num_samples * radar.num_tx * radar.num_rx
    return (scale * azimuth_factor(alpha, attens, sq, radar)
            * elevation_factor(beta, attens, sq, radar) + 0j)


def _maximize(f, span: float, step: float, xtol: float) -> float:
    grid = np.arange(-span, span + step / 2, step)
    vals = np.abs(f(grid))
    if not np.any(vals > 0):
        raise FlatSpectrumError("superimposed response is zero everywhere")
    i = int(np.argmax(vals))
    if i == 0 or i == len(grid) - 1:
        return float(grid[i])
    res = minimize_scalar(lambda x: -abs(float(f(x))), method="golden",
                          bracket=(grid[i - 1], grid[i], grid[i + 1]),
                          options={"xtol": xtol})
    return float(res.x)


def predict_peak(attens: AttenuationSet, layout, radar: RadarConfig,
                 span: float = 45.0, step: float = 0.1, xtol: float = 1e-7) -> TargetAngle:
    """Numerically locate the maximum of the superimposed response.

    Grid search at ``step`` degrees, then golden-section refinement per
    axis. Independent of the derivative conditions used by the solver.
    """
    sq = _square(layout)
    alpha = _maximize(lambda a: azimuth_factor(a, attens, sq, radar), span, step, xtol)
    beta = _maximize(lambda b: elevation_factor(b, attens, sq, radar), span, step, xtol)
    return TargetAngle(alpha, beta, not sq.contains(alpha, beta))


def wrap_phase(phi):
    """Wrap to [-pi, pi)."""
    return (np.asarray(phi) + np.pi) % (2 * np.pi) - np.pi


def coherency_check(phases) -> float:
    """Largest pairwise wrapped phase difference (rad); zero when coherent."""
    phases = list(phases)
    return max((abs(float(wrap_phase(a - b))) for a, b in itertools.combinations(phases, 2)),
               default=0.0)


def channel_phases(scenario: ScenarioConfig) -> list[float]:
    """Closed-form channel phase plus the hardware phase offset, per channel."""
    return [channel_phase_closed_form(q, scenario.layout, scenario.radar, ch.delay,
                                      scenario.rts_frequency) + ch.phase_offset
            for q, ch in enumerate(scenario.channels)]


def coherence_trims(layout: FrontEndLayout, radar: RadarConfig) -> list[float]:
    """Phase offsets that make all four channels coherent at the array centroid.

    This is what a perfect phase calibration converges to: the echoes then
    share their phase at the virtual-array centre, which is where the
    real-valued sinc factors of the closed form are referenced.
    """
    y, z = element_positions(radar)
    yc, zc = float(np.mean(y)), float(np.mean(z))
    k = 2 * math.pi / radar.wavelength
    geo = []
    for theta, psi in zip(layout.azimuth, layout.elevation):
        t, p = math.radians(theta), math.radians(psi)
        geo.append(k * (yc * math.sin(t) * math.cos(p) + zc * math.sin(p)))
    return [float(wrap_phase(geo[0] - g)) for g in geo]


def layout_response(alpha, beta, amplitudes, layout: FrontEndLayout, radar: RadarConfig):
    """Closed-form coherent sum using every FE's own angles (no pair reduction)."""
    scale = radar.num_samples * radar.num_tx * radar.num_rx
    total = 0.0
    for a, theta, psi in zip(amplitudes, layout.azimuth, layout.elevation):
        total = total + a * g_az(alpha, theta, radar) * g_el(beta, psi, radar)
    return scale * total


def predict_peak_layout(amplitudes, layout: FrontEndLayout, radar: RadarConfig,
                        span: float = 20.0, step: float = 0.1) -> TargetAngle:
    """Maximum of :func:`layout_response`; the analytic reference for misaligned FEs."""
    grid = np.arange(-span, span + step / 2, step)
    vals = np.abs(layout_response(grid[:, None], grid[None, :], amplitudes, layout, radar))
    if not np.any(vals > 0):
        raise FlatSpectrumError("superimposed response is zero everywhere")
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    res = minimize(lambda p: -abs(float(layout_response(p[0], p[1], amplitudes, layout, radar))),
                   x0=[grid[i], grid[j]], method="Nelder-Mead",
                   options={"xatol": 1e-7, "fatol": 1e-9})
    az, el = (float(v) for v in res.x)
    return TargetAngle(az, el, not reduce_layout(layout).contains(az, el))
