"""Two-dimensional beamforming over the MIMO virtual array.

``beamform_direct`` is the exact steering sum. The closed-form single
channel response (product of two sinc factors) is the small-angle model
the attenuation solver works with.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintError, DimensionError, FlatSpectrumError
from .model import SPEED_OF_LIGHT, FrontEndLayout, RadarConfig
from .signal_chain import element_positions

DEFAULT_SPAN = 15.0
DEFAULT_STEP = 0.05


def angle_grid(span: float = DEFAULT_SPAN, step: float = DEFAULT_STEP,
               center: float = 0.0) -> np.ndarray:
    """Uniform grid over [center - span, center + span] in degrees."""
    n = int(round(span / step))
    return center + step * np.arange(-n, n + 1)


@dataclass(frozen=True)
class BeamSpectrum:
    values: np.ndarray  # [azimuth, elevation]
    az_grid: np.ndarray
    el_grid: np.ndarray
    spacing: str = "angle"

    def __post_init__(self):
        if self.values.shape != (len(self.az_grid), len(self.el_grid)):
            raise DimensionError("spectrum values do not match grid sizes")
        for g in (self.az_grid, self.el_grid):
            if len(g) > 1 and not np.all(np.diff(g) > 0):
                raise DimensionError("grids must be strictly increasing")

    def magnitude_db(self) -> np.ndarray:
        mag = np.abs(self.values)
        with np.errstate(divide="ignore"):
            return 20 * np.log10(mag)

    def to_csv(self, path) -> None:
        """Write one row per grid point: az, el, re, im, mag_db."""
        db = self.magnitude_db()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["az", "el", "re", "im", "mag_db"])
            for i, az in enumerate(self.az_grid):
                for j, el in enumerate(self.el_grid):
                    v = self.values[i, j]
                    w.writerow([f"{az:.6f}", f"{el:.6f}", repr(float(v.real)), repr(float(v.imag)),
                                repr(float(db[i, j]))])


@dataclass(frozen=True)
class AngleEstimate:
    azimuth: float
    elevation: float
    peak_magnitude: float
    set_point: tuple[float, float] | None = None
    boundary: bool = False

    @property
    def errors(self) -> tuple[float, float] | None:
        if self.set_point is None:
            return None
        return self.azimuth - self.set_point[0], self.elevation - self.set_point[1]

    def with_set_point(self, azimuth: float, elevation: float) -> AngleEstimate:
        return AngleEstimate(self.azimuth, self.elevation, self.peak_magnitude,
                             (azimuth, elevation), self.boundary)


def beamform_direct(x_r: np.ndarray, radar: RadarConfig, az_grid, el_grid) -> BeamSpectrum:
    """Steer the virtual array over every (azimuth, elevation) grid point."""
    x_r = np.asarray(x_r)
    if x_r.shape != (radar.num_tx, radar.num_rx):
        raise DimensionError(f"x_R shape {x_r.shape} != {(radar.num_tx, radar.num_rx)}")
    az_grid = np.atleast_1d(np.asarray(az_grid, dtype=float))
    el_grid = np.atleast_1d(np.asarray(el_grid, dtype=float))
    y, z = element_positions(radar)
    k = 2 * np.pi / radar.wavelength
    sa = np.sin(np.radians(az_grid))
    cb = np.cos(np.radians(el_grid))
    sb = np.sin(np.radians(el_grid))
    u = np.multiply.outer(sa, cb)  # sin(a) cos(b), [az, el]
    values = np.zeros(u.shape, dtype=complex)
    for yi, zi, xi in zip(y.ravel(), z.ravel(), x_r.ravel()):
        values += xi * np.exp(-1j * k * (yi * u + zi * sb[None, :]))
    return BeamSpectrum(values, az_grid, el_grid)


def g_az(alpha, theta, radar: RadarConfig):
    """Azimuth sinc factor of a channel at ``theta`` evaluated at ``alpha``."""
    c = radar.num_rx * radar.rx_spacing_y / radar.wavelength
    return np.sinc(c * (np.sin(np.radians(theta)) - np.sin(np.radians(alpha))))


def g_el(beta, psi, radar: RadarConfig):
    """Elevation sinc factor of a channel at ``psi`` evaluated at ``beta``."""
    c = radar.num_tx * radar.tx_spacing_z / radar.wavelength
    return np.sinc(c * (np.sin(np.radians(psi)) - np.sin(np.radians(beta))))


def channel_phase_closed_form(q: int, layout: FrontEndLayout, radar: RadarConfig,
                              rts_delay: float = 0.0, rts_frequency: float = 500e6) -> float:
    """Common phase of channel ``q`` after range DFT and beamforming (rad)."""
    theta = np.radians(layout.azimuth[q])
    psi = np.radians(layout.elevation[q])
    lam = radar.wavelength
    half_b = radar.bandwidth / 2
    cycles = ((radar.carrier_frequency + half_b) * 2 * layout.range_m / SPEED_OF_LIGHT
              + (rts_frequency + half_b) * rts_delay
              + np.sin(theta) * radar.rx_spacing_y / (2 * lam) * (radar.num_rx - 1)
              + np.sin(psi) * radar.tx_spacing_z / (2 * lam) * (radar.num_tx - 1))
    return float(2 * np.pi * cycles)


def channel_response_closed_form(alpha, beta, q: int, attenuation: float,
                                 layout: FrontEndLayout, radar: RadarConfig,
                                 rts_delay: float = 0.0, rts_frequency: float = 500e6):
    """Beamformed response of one RTS channel, small-angle closed form."""
    if not radar.has_simplified_geometry:
        raise ConstraintError("closed form needs tx_spacing_y == 0 and rx_spacing_z == 0")
    phase = channel_phase_closed_form(q, layout, radar, rts_delay, rts_frequency)
    gain = attenuation * radar.num_samples * radar.num_tx * radar.num_rx
    return (gain * np.exp(1j * phase)
            * g_el(beta, layout.elevation[q], radar) * g_az(alpha, layout.azimuth[q], radar))


def ideal_channel_values(q: int, layout: FrontEndLayout, radar: RadarConfig,
                         attenuation: float = 1.0) -> np.ndarray:
    """On-bin range-DFT values x_R of a single far-field channel (no RTS terms)."""
    y, z = element_positions(radar)
    theta = np.radians(layout.azimuth[q])
    psi = np.radians(layout.elevation[q])
    k = 2 * np.pi / radar.wavelength
    path = y * np.sin(theta) * np.cos(psi) + z * np.sin(psi)
    return attenuation * radar.num_samples * np.exp(1j * k * path)


def _vertex(lo: float, mid: float, hi: float) -> float:
    den = lo - 2 * mid + hi
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (lo - hi) / den, -0.5, 0.5))


def estimate_angle(spectrum: BeamSpectrum, set_point=None) -> AngleEstimate:
    """Grid peak refined by a 3-point parabola on log-magnitude per axis.

    A peak on the grid edge is returned unrefined with ``boundary`` set.
    """
    mag = np.abs(spectrum.values)
    if not np.any(mag > 0):
        raise FlatSpectrumError("beam spectrum is identically zero")
    i, j = np.unravel_index(int(np.argmax(mag)), mag.shape)
    az, el = spectrum.az_grid, spectrum.el_grid
    boundary = i in (0, len(az) - 1) or j in (0, len(el) - 1)
    a_hat, e_hat = float(az[i]), float(el[j])
    if not boundary:
        with np.errstate(divide="ignore"):
            lm = np.log(mag)
        if np.all(np.isfinite(lm[i - 1:i + 2, j])):
            a_hat += _vertex(*lm[i - 1:i + 2, j]) * (az[i + 1] - az[i - 1]) / 2
        if np.all(np.isfinite(lm[i, j - 1:j + 2])):
            e_hat += _vertex(*lm[i, j - 1:j + 2]) * (el[j + 1] - el[j - 1]) / 2
    return AngleEstimate(a_hat, e_hat, float(mag[i, j]),
                         None if set_point is None else tuple(set_point), bool(boundary))


def locate_peak(x_r: np.ndarray, radar: RadarConfig, span: float = DEFAULT_SPAN,
                step: float = DEFAULT_STEP, coarse_step: float = 0.5) -> AngleEstimate:
    """Coarse-to-fine equivalent of a full ``step`` grid over ``span``.

    Scans the full span at ``coarse_step``, then a window of two coarse
    cells around the coarse maximum at ``step``.
    """
    coarse = angle_grid(span, coarse_step)
    est = estimate_angle(beamform_direct(x_r, radar, coarse, coarse))
    half = 2 * coarse_step
    fine_az = angle_grid(half, step, _snap(est.azimuth, step))
    fine_el = angle_grid(half, step, _snap(est.elevation, step))
    fine_az = fine_az[np.abs(fine_az) <= span + 1e-9]
    fine_el = fine_el[np.abs(fine_el) <= span + 1e-9]
    fine = estimate_angle(beamform_direct(x_r, radar, fine_az, fine_el))
    edge_az = fine.azimuth in (fine_az[0], fine_az[-1])
    edge_el = fine.elevation in (fine_el[0], fine_el[-1])
    at_span = (abs(fine.azimuth) >= span - 1e-9 and edge_az) or \
              (abs(fine.elevation) >= span - 1e-9 and edge_el)
    return AngleEstimate(fine.azimuth, fine.elevation, fine.peak_magnitude, None,
                         bool(at_span))


def _snap(value: float, step: float) -> float:
    return round(value / step) * step
