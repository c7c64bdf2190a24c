"""Scenario configuration, geometry and physical constants.

Units are fixed by convention: hertz, seconds, meters and linear amplitude
factors. Angles are degrees on every public surface and are converted to
radians exactly once, inside the numerical routines.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import yaml

from .errors import DegenerateLayoutError, InvalidConfigError

SPEED_OF_LIGHT = 299_792_458.0
"Vacuum speed of light c_0 in m/s. Not configurable."

NUM_CHANNELS = 4

# Front-end index convention of the square formation.
BOTTOM_LEFT, BOTTOM_RIGHT, TOP_LEFT, TOP_RIGHT = range(NUM_CHANNELS)

# Measured front-end positions (azimuth, elevation) in degrees.
TABLE1_AZIMUTH = (-5.4, 4.5, -3.4, 3.8)
TABLE1_ELEVATION = (-8.8, -7.7, 8.4, 9.9)


def wavelength(frequency: float) -> float:
    """Free-space wavelength in meters for a frequency in Hz."""
    if not frequency > 0:
        raise InvalidConfigError(f"frequency must be positive, got {frequency!r}")
    return SPEED_OF_LIGHT / frequency


@dataclass(frozen=True)
class RadarConfig:
    """FMCW MIMO radar under test.

    ``carrier_frequency`` is the chirp start frequency. Array phases are
    evaluated at the chirp centre frequency, see :attr:`wavelength`.
    Spacings left as ``None`` default to half a wavelength for the
    populated axes (RX horizontal, TX vertical) and zero otherwise.
    """

    carrier_frequency: float = 77e9
    bandwidth: float = 1e9
    chirp_period: float = 50e-6
    num_samples: int = 1024
    num_tx: int = 3
    num_rx: int = 4
    tx_spacing_y: float = 0.0
    rx_spacing_y: float | None = None
    tx_spacing_z: float | None = None
    rx_spacing_z: float = 0.0

    def __post_init__(self):
        if self.carrier_frequency > 0 and self.bandwidth > 0:
            half = self.wavelength / 2
            if self.rx_spacing_y is None:
                object.__setattr__(self, "rx_spacing_y", half)
            if self.tx_spacing_z is None:
                object.__setattr__(self, "tx_spacing_z", half)

    @property
    def center_frequency(self) -> float:
        return self.carrier_frequency + self.bandwidth / 2

    @property
    def wavelength(self) -> float:
        """Wavelength at the chirp centre frequency.

        After the range DFT, the phase of an echo grows with its delay at
        ``f_c + B/2`` (carrier plus the half-chirp term of the DFT), so this
        is the wavelength the virtual array actually sees.
        """
        return wavelength(self.center_frequency)

    @property
    def sample_rate(self) -> float:
        return self.num_samples / self.chirp_period

    @property
    def slope(self) -> float:
        return self.bandwidth / self.chirp_period

    @property
    def bin_resolution(self) -> float:
        return self.sample_rate / self.num_samples

    @property
    def has_simplified_geometry(self) -> bool:
        """True when the one-dimensional TX/RX split of the closed form holds."""
        return self.tx_spacing_y == 0 and self.rx_spacing_z == 0


class ReducedLayout(NamedTuple):
    """Left/right azimuth and bottom/top elevation of the FE square (degrees)."""

    theta_l: float
    theta_r: float
    psi_b: float
    psi_t: float
    residuals: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    @property
    def center(self) -> tuple[float, float]:
        return (self.theta_l + self.theta_r) / 2, (self.psi_b + self.psi_t) / 2

    def contains(self, azimuth: float, elevation: float) -> bool:
        return (self.theta_l <= azimuth <= self.theta_r
                and self.psi_b <= elevation <= self.psi_t)


@dataclass(frozen=True)
class FrontEndLayout:
    """Angular positions of the four RTS front ends as seen by the radar.

    Index convention: 0 bottom-left, 1 bottom-right, 2 top-left, 3 top-right.
    """

    range_m: float = 1.0
    azimuth: tuple[float, float, float, float] = TABLE1_AZIMUTH
    elevation: tuple[float, float, float, float] = TABLE1_ELEVATION

    def __post_init__(self):
        object.__setattr__(self, "azimuth", tuple(float(a) for a in self.azimuth))
        object.__setattr__(self, "elevation", tuple(float(e) for e in self.elevation))

    @classmethod
    def square(cls, azimuth=(-5.0, 5.0), elevation=(-8.0, 8.0), range_m=1.0):
        """Perfectly aligned square with left/right and bottom/top angles."""
        az_l, az_r = azimuth
        el_b, el_t = elevation
        return cls(range_m, (az_l, az_r, az_l, az_r), (el_b, el_b, el_t, el_t))

    @classmethod
    def table1(cls, range_m=1.0):
        return cls(range_m, TABLE1_AZIMUTH, TABLE1_ELEVATION)

    def position(self, q: int) -> tuple[float, float]:
        return self.azimuth[q], self.elevation[q]

    def mirrored_residuals(self) -> FrontEndLayout:
        """Reflect every FE about its pair means, negating the misalignment."""
        red = reduce_layout(self)
        az = [2 * m - a for a, m in zip(self.azimuth,
                                        (red.theta_l, red.theta_r, red.theta_l, red.theta_r))]
        el = [2 * m - e for e, m in zip(self.elevation,
                                        (red.psi_b, red.psi_b, red.psi_t, red.psi_t))]
        return FrontEndLayout(self.range_m, tuple(az), tuple(el))

    def aligned(self) -> FrontEndLayout:
        """Perfect square at the pair means: the layout with its residuals removed."""
        red = reduce_layout(self)
        return FrontEndLayout.square((red.theta_l, red.theta_r), (red.psi_b, red.psi_t),
                                     self.range_m)

    def ideal_square(self) -> FrontEndLayout:
        """Boresight-centred square with the same spans as the reduced layout."""
        red = reduce_layout(self)
        half_az = (red.theta_r - red.theta_l) / 2
        half_el = (red.psi_t - red.psi_b) / 2
        return FrontEndLayout.square((-half_az, half_az), (-half_el, half_el), self.range_m)


def reduce_layout(layout: FrontEndLayout) -> ReducedLayout:
    """Collapse the four FE positions to left/right/bottom/top angles.

    Pairs that should share an angle are averaged; the absolute pair
    differences are returned as ``residuals`` (left, right, bottom, top).
    """
    az, el = layout.azimuth, layout.elevation
    theta_l = (az[0] + az[2]) / 2
    theta_r = (az[1] + az[3]) / 2
    psi_b = (el[0] + el[1]) / 2
    psi_t = (el[2] + el[3]) / 2
    if theta_l >= theta_r:
        raise DegenerateLayoutError(f"left azimuth {theta_l} not below right azimuth {theta_r}")
    if psi_b >= psi_t:
        raise DegenerateLayoutError(f"bottom elevation {psi_b} not below top elevation {psi_t}")
    residuals = (abs(az[0] - az[2]), abs(az[1] - az[3]),
                 abs(el[0] - el[1]), abs(el[2] - el[3]))
    return ReducedLayout(theta_l, theta_r, psi_b, psi_t, residuals)


@dataclass(frozen=True)
class RtsChannel:
    """One RTS channel.

    ``attenuation`` is the commanded amplitude factor and ``delay`` the
    RTS-internal delay. ``phase_offset`` and ``gain_error`` model hardware
    mismatch between channels; ``gain_trim`` is the amplitude correction a
    calibration applies. The emitted amplitude is
    ``attenuation * gain_error * gain_trim``.
    """

    attenuation: float = 1.0
    delay: float = 0.0
    phase_offset: float = 0.0
    gain_error: float = 1.0
    gain_trim: float = 1.0

    @property
    def amplitude(self) -> float:
        return self.attenuation * self.gain_error * self.gain_trim


@dataclass(frozen=True)
class ScenarioConfig:
    radar: RadarConfig = field(default_factory=RadarConfig)
    layout: FrontEndLayout = field(default_factory=FrontEndLayout)
    channels: tuple[RtsChannel, ...] = tuple(RtsChannel() for _ in range(NUM_CHANNELS))
    rts_frequency: float = 500e6
    closed_form: bool = False
    window: str | None = None
    snr_db: float | None = None
    seed: int = 0

    def with_channels(self, channels) -> ScenarioConfig:
        return replace(self, channels=tuple(channels))

    def with_attenuations(self, attenuations) -> ScenarioConfig:
        return self.with_channels(
            replace(ch, attenuation=float(a)) for ch, a in zip(self.channels, attenuations))

    def only(self, active) -> ScenarioConfig:
        """Copy with every channel outside ``active`` switched off."""
        active = set(active)
        return self.with_channels(
            ch if q in active else replace(ch, attenuation=0.0)
            for q, ch in enumerate(self.channels))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layout"]["azimuth"] = list(self.layout.azimuth)
        d["layout"]["elevation"] = list(self.layout.elevation)
        d["channels"] = [asdict(ch) for ch in self.channels]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioConfig:
        d = dict(d)
        radar = RadarConfig(**d.pop("radar", {}))
        layout_d = dict(d.pop("layout", {}))
        layout = FrontEndLayout(
            range_m=layout_d.get("range_m", 1.0),
            azimuth=tuple(layout_d.get("azimuth", TABLE1_AZIMUTH)),
            elevation=tuple(layout_d.get("elevation", TABLE1_ELEVATION)),
        )
        channels = tuple(RtsChannel(**ch) for ch in d.pop("channels", [{}] * NUM_CHANNELS))
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise InvalidConfigError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(radar=radar, layout=layout, channels=channels, **d)

    def digest(self) -> str:
        """Stable short hash identifying this scenario."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_scenario(path) -> ScenarioConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return ScenarioConfig.from_dict(data)


def save_scenario(scenario: ScenarioConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(scenario.to_dict(), sort_keys=False))


@dataclass(frozen=True)
class Diagnostic:
    field: str
    rule: str
    severity: str = "error"

    def __str__(self):
        return f"{self.severity}: {self.field}: {self.rule}"


def validate_scenario(scenario: ScenarioConfig) -> list[Diagnostic]:
    """Check every configuration invariant, one diagnostic per violation."""
    out = []
    r = scenario.radar

    def need(ok, name, rule, severity="error"):
        if not ok:
            out.append(Diagnostic(name, rule, severity))

    need(r.carrier_frequency > 0, "radar.carrier_frequency", "must be > 0")
    need(r.bandwidth > 0, "radar.bandwidth", "must be > 0")
    need(r.chirp_period > 0, "radar.chirp_period", "must be > 0")
    need(r.num_samples >= 2, "radar.num_samples", "must be >= 2")
    need(r.num_tx >= 1, "radar.num_tx", "must be >= 1")
    need(r.num_rx >= 1, "radar.num_rx", "must be >= 1")
    for name in ("tx_spacing_y", "rx_spacing_y", "tx_spacing_z", "rx_spacing_z"):
        value = getattr(r, name)
        need(value is not None and math.isfinite(value), f"radar.{name}", "must be finite")
    if scenario.closed_form:
        need(r.tx_spacing_y == 0, "radar.tx_spacing_y",
             "closed-form response assumes zero horizontal TX spacing", "warning")
        need(r.rx_spacing_z == 0, "radar.rx_spacing_z",
             "closed-form response assumes zero vertical RX spacing", "warning")

    lay = scenario.layout
    need(lay.range_m > 0, "layout.range_m", "must be > 0")
    need(len(lay.azimuth) == NUM_CHANNELS, "layout.azimuth", "needs exactly 4 entries")
    need(len(lay.elevation) == NUM_CHANNELS, "layout.elevation", "needs exactly 4 entries")
    for q, (az, el) in enumerate(zip(lay.azimuth, lay.elevation)):
        need(-90 < az < 90, f"layout.azimuth[{q}]", "must lie in (-90, 90) degrees")
        need(-90 < el < 90, f"layout.elevation[{q}]", "must lie in (-90, 90) degrees")
    if len(lay.azimuth) == len(lay.elevation) == NUM_CHANNELS:
        try:
            reduce_layout(lay)
        except DegenerateLayoutError as exc:
            out.append(Diagnostic("layout", str(exc)))

    need(len(scenario.channels) == NUM_CHANNELS, "channels", "needs exactly 4 entries")
    for q, ch in enumerate(scenario.channels):
        need(ch.attenuation >= 0, f"channels[{q}].attenuation", "must be >= 0")
        need(ch.gain_error >= 0, f"channels[{q}].gain_error", "must be >= 0")
        need(ch.gain_trim >= 0, f"channels[{q}].gain_trim", "must be >= 0")
        need(ch.delay >= 0, f"channels[{q}].delay", "must be >= 0")
        need(math.isfinite(ch.phase_offset), f"channels[{q}].phase_offset", "must be finite")
    need(scenario.rts_frequency > 0, "rts_frequency", "must be > 0")
    need(scenario.window in (None, "hann", "hamming", "blackman"), "window",
         "must be one of none, hann, hamming, blackman")
    return out


def check_scenario(scenario: ScenarioConfig) -> None:
    """Raise :class:`InvalidConfigError` listing every hard violation."""
    errors = [d for d in validate_scenario(scenario) if d.severity == "error"]
    if errors:
        raise InvalidConfigError("; ".join(str(d) for d in errors))
