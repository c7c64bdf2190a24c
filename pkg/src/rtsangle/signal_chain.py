"""Beat-signal synthesis and range processing for the radar under test.

The cube is built from the exact phase difference of the transmitted chirp
and its delayed replica. The RTS re-radiates the echo after a down/up
conversion around its intermediate frequency, so the part of the delay
spent inside the RTS accrues carrier phase at ``f_rts`` rather than at the
RF carrier.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (DimensionError, DomainError, InvalidConfigError, NoDetectionError,
                     UnsupportedRangeError)
from .model import NUM_CHANNELS, SPEED_OF_LIGHT, FrontEndLayout, RadarConfig, ScenarioConfig, check_scenario

_T_EPS = 1e-12


def chirp_phase(t, radar: RadarConfig):
    """Instantaneous transmit phase (rad) at time ``t`` within one chirp."""
    t = np.asarray(t, dtype=float)
    if np.any(t < -_T_EPS * radar.chirp_period) or np.any(t > radar.chirp_period * (1 + _T_EPS)):
        raise DomainError(f"t must lie in [0, {radar.chirp_period}]")
    out = 2 * np.pi * (radar.carrier_frequency * t + radar.slope / 2 * t**2)
    return float(out) if out.ndim == 0 else out


def beat_phase(t, tau, radar: RadarConfig):
    """phi_tx(t) - phi_tx(t - tau), expanded to avoid cancellation."""
    return 2 * np.pi * (radar.carrier_frequency * tau + radar.slope * tau * t
                        - radar.slope / 2 * tau**2)


def element_position(n_tx: int, n_rx: int, radar: RadarConfig) -> tuple[float, float]:
    """Horizontal and vertical virtual-element position in meters."""
    if not 0 <= n_tx < radar.num_tx:
        raise IndexError(f"n_tx={n_tx} outside [0, {radar.num_tx - 1}]")
    if not 0 <= n_rx < radar.num_rx:
        raise IndexError(f"n_rx={n_rx} outside [0, {radar.num_rx - 1}]")
    y = radar.tx_spacing_y * n_tx + radar.rx_spacing_y * n_rx
    z = radar.tx_spacing_z * n_tx + radar.rx_spacing_z * n_rx
    return y, z


def element_positions(radar: RadarConfig) -> tuple[np.ndarray, np.ndarray]:
    """(y, z) grids of shape (num_tx, num_rx)."""
    n_tx = np.arange(radar.num_tx)[:, None]
    n_rx = np.arange(radar.num_rx)[None, :]
    y = radar.tx_spacing_y * n_tx + radar.rx_spacing_y * n_rx
    z = radar.tx_spacing_z * n_tx + radar.rx_spacing_z * n_rx
    return y, z


def return_delay(q: int, y, z, layout: FrontEndLayout):
    """Free-space delay from front end ``q`` back to an element at (y, z)."""
    if not 0 <= q < NUM_CHANNELS:
        raise IndexError(f"channel {q} outside [0, {NUM_CHANNELS - 1}]")
    theta, psi = np.radians(layout.azimuth[q]), np.radians(layout.elevation[q])
    return (layout.range_m + np.asarray(y) * np.sin(theta) * np.cos(psi)
            + np.asarray(z) * np.sin(psi)) / SPEED_OF_LIGHT


def channel_delays(q: int, scenario: ScenarioConfig) -> np.ndarray:
    """Total delay per virtual element for channel ``q``, shape (num_tx, num_rx).

    The outbound leg is measured from the array phase centre, element (0, 0).
    """
    y, z = element_positions(scenario.radar)
    tau_tx = scenario.layout.range_m / SPEED_OF_LIGHT
    return tau_tx + return_delay(q, y, z, scenario.layout) + scenario.channels[q].delay


@dataclass(frozen=True)
class SampleCube:
    """Complex beat samples indexed [n_tx, n_rx, k]."""

    data: np.ndarray
    sample_rate: float
    scenario: ScenarioConfig | None = None

    def __post_init__(self):
        if self.data.ndim != 3:
            raise DimensionError(f"cube must be 3-D, got shape {self.data.shape}")
        if self.scenario is not None:
            r = self.scenario.radar
            if self.data.shape != (r.num_tx, r.num_rx, r.num_samples):
                raise DimensionError(
                    f"cube shape {self.data.shape} != {(r.num_tx, r.num_rx, r.num_samples)}")
        if not np.all(np.isfinite(self.data)):
            raise InvalidConfigError("cube contains non-finite samples")

    def __add__(self, other: SampleCube) -> SampleCube:
        return SampleCube(self.data + other.data, self.sample_rate, self.scenario)


def synthesize_channel(q: int, scenario: ScenarioConfig, t: np.ndarray) -> np.ndarray:
    radar = scenario.radar
    ch = scenario.channels[q]
    tau = channel_delays(q, scenario)
    f_beat = radar.slope * tau
    if np.any(f_beat >= radar.sample_rate / 2):
        raise UnsupportedRangeError(
            f"channel {q}: beat frequency {f_beat.max():.4g} Hz aliases at "
            f"sample rate {radar.sample_rate:.4g} Hz")
    # RTS-internal delay rides on the IF carrier instead of the RF carrier.
    if_correction = 2 * np.pi * (scenario.rts_frequency - radar.carrier_frequency) * ch.delay
    phase = beat_phase(t, tau[..., None], radar) + if_correction + ch.phase_offset
    return ch.amplitude * np.exp(1j * phase)


def synthesize_cube(scenario: ScenarioConfig, channels=None) -> SampleCube:
    """Noise-free (unless ``snr_db`` is set) beat-signal cube for a scenario.

    ``channels`` restricts the sum to a subset of RTS channels.
    """
    check_scenario(scenario)
    radar = scenario.radar
    t = np.arange(radar.num_samples) / radar.sample_rate
    data = np.zeros((radar.num_tx, radar.num_rx, radar.num_samples), dtype=complex)
    for q in range(NUM_CHANNELS) if channels is None else channels:
        if scenario.channels[q].amplitude == 0:
            continue
        data += synthesize_channel(q, scenario, t)
    if scenario.snr_db is not None:
        data = _add_noise(data, scenario)
    return SampleCube(data, radar.sample_rate, scenario)


def _add_noise(data: np.ndarray, scenario: ScenarioConfig) -> np.ndarray:
    # SNR is referenced to the strongest channel amplitude, per sample.
    rng = np.random.default_rng(scenario.seed)
    peak = max(ch.amplitude for ch in scenario.channels)
    sigma = peak * 10 ** (-scenario.snr_db / 20) / np.sqrt(2)
    noise = rng.normal(0, sigma, data.shape) + 1j * rng.normal(0, sigma, data.shape)
    return data + noise


@dataclass(frozen=True)
class RangeSpectrum:
    """Range-DFT output indexed [n_tx, n_rx, bin]."""

    bins: np.ndarray
    bin_resolution: float

    @property
    def num_bins(self) -> int:
        return self.bins.shape[-1]


def range_dft(cube: SampleCube, window: str | None = None) -> RangeSpectrum:
    """DFT over the sample axis; rectangular window unless one is requested."""
    x = cube.data
    if window is None and cube.scenario is not None:
        window = cube.scenario.window
    if window is not None:
        x = x * _window(window, x.shape[-1])
    n = x.shape[-1]
    return RangeSpectrum(np.fft.fft(x, axis=-1), cube.sample_rate / n)


def _window(name: str, n: int) -> np.ndarray:
    try:
        return {"hann": np.hanning, "hamming": np.hamming, "blackman": np.blackman}[name](n)
    except KeyError:
        raise InvalidConfigError(f"unknown window {name!r}") from None


def extract_peak_bin(spectrum: RangeSpectrum) -> tuple[int, np.ndarray]:
    """Pick the range bin with the largest non-coherent power sum.

    Returns the bin index and the complex value of every virtual channel
    at that bin, shape (num_tx, num_rx).
    """
    power = np.sum(np.abs(spectrum.bins) ** 2, axis=(0, 1))
    if not np.any(power > 0):
        raise NoDetectionError("range spectrum is identically zero")
    m = int(np.argmax(power))
    return m, spectrum.bins[..., m].copy()


def range_bin_of_delay(tau: float, radar: RadarConfig) -> float:
    """Fractional DFT bin of a beat tone produced by delay ``tau``."""
    return radar.slope * tau / radar.bin_resolution


def range_response(delta_bins, num_samples: int):
    """Complex DFT response of a unit tone offset ``delta_bins`` from a bin.

    Equals ``num_samples`` at zero offset.
    """
    delta = np.asarray(delta_bins, dtype=float)
    n = num_samples
    den = np.sin(np.pi * delta / n)
    small = np.abs(den) < 1e-12
    with np.errstate(invalid="ignore", divide="ignore"):
        mag = np.where(small, n * np.cos(np.pi * delta) / np.cos(np.pi * delta / n),
                       np.sin(np.pi * delta) / np.where(small, 1.0, den))
    return mag * np.exp(1j * np.pi * delta * (n - 1) / n)


# -- binary cube exchange ------------------------------------------------------

_MAGIC = b"RTSCUBE1"


def write_cube(cube: SampleCube, path) -> None:
    """Write ``cube`` as magic, header length, JSON header, complex64 LE data."""
    header = {
        "shape": list(cube.data.shape),
        "dtype": "<c8",
        "order": "C",
        "sample_rate": cube.sample_rate,
        "scenario_hash": cube.scenario.digest() if cube.scenario is not None else None,
    }
    blob = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(cube.data, dtype="<c8").tobytes())


def read_cube(path, scenario: ScenarioConfig | None = None) -> SampleCube:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise InvalidConfigError(f"{path}: not a sample cube file")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen])
    data = np.frombuffer(raw[12 + hlen:], dtype="<c8").reshape(header["shape"])
    if scenario is not None and header["scenario_hash"] not in (None, scenario.digest()):
        raise InvalidConfigError(f"{path}: cube was produced by a different scenario")
    return SampleCube(data.astype(complex), header["sample_rate"], scenario)


def read_cube_header(path) -> dict:
    raw = Path(path).read_bytes()[:4096]
    (hlen,) = struct.unpack("<I", raw[8:12])
    return json.loads(raw[12:12 + hlen])
