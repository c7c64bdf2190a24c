import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import C0, chirp_phase_by_integration, far_field_delay
from rtsangle.errors import DimensionError, DomainError, NoDetectionError, UnsupportedRangeError
from rtsangle.model import FrontEndLayout, RadarConfig, RtsChannel, ScenarioConfig
from rtsangle.signal_chain import (RangeSpectrum, SampleCube, beat_phase, channel_delays,
                                   chirp_phase, element_position, extract_peak_bin,
                                   range_bin_of_delay, range_dft, range_response, read_cube,
                                   read_cube_header, return_delay, synthesize_cube, write_cube)

# Trapezoidal integral of the instantaneous frequency at T/2, frozen.
CHIRP_PHASE_HALF = 12134401.624490578
# Far-field path of FE0 (measured layout) to element (0, 3), frozen.
FE0_ELEMENT_03_DELAY = 3.333840944094635e-09


def boresight_scenario(range_m=0.3, rts_delay=0.0, **kw):
    """Channel 0 on boresight, the others parked off axis and switched off."""
    layout = FrontEndLayout(range_m, (0.0, 5.0, 0.0, 5.0), (0.0, 0.0, 8.0, 8.0))
    chans = (RtsChannel(1.0, rts_delay),) + (RtsChannel(0.0),) * 3
    return ScenarioConfig(layout=layout, channels=chans, **kw)


def test_chirp_phase_endpoints(radar):
    assert chirp_phase(0.0, radar) == 0.0
    T = radar.chirp_period
    expect = 2 * math.pi * (radar.carrier_frequency * T + radar.bandwidth * T / 2)
    assert chirp_phase(T, radar) == pytest.approx(expect, rel=1e-15)


def test_chirp_phase_matches_integrated_frequency(radar):
    assert chirp_phase(25e-6, radar) == pytest.approx(CHIRP_PHASE_HALF, rel=1e-12)
    oracle = chirp_phase_by_integration(25e-6, 77e9, 1e9, 50e-6)
    assert oracle == pytest.approx(CHIRP_PHASE_HALF, rel=1e-12)


@pytest.mark.parametrize("t", [-1e-9, 51e-6])
def test_chirp_phase_domain(radar, t):
    with pytest.raises(DomainError):
        chirp_phase(t, radar)


@given(st.floats(0, 50e-6), st.floats(0, 100e-9))
def test_beat_phase_is_phase_difference(t, tau):
    radar = RadarConfig()
    # Reference in extended precision, valid also for t < tau.
    f, s = np.longdouble(radar.carrier_frequency), np.longdouble(radar.slope)
    tl, taul = np.longdouble(t), np.longdouble(tau)
    ref = 2 * np.pi * (f * tl + s / 2 * tl**2 - f * (tl - taul) - s / 2 * (tl - taul) ** 2)
    assert beat_phase(t, tau, radar) == pytest.approx(float(ref), abs=1e-6)


def test_element_positions(radar):
    lam = radar.wavelength
    assert element_position(0, 0, radar) == (0, 0)
    assert element_position(0, 3, radar) == pytest.approx((3 * lam / 2, 0))
    assert element_position(2, 0, radar) == pytest.approx((0, lam))
    with pytest.raises(IndexError):
        element_position(3, 0, radar)
    with pytest.raises(IndexError):
        element_position(0, 4, radar)


def test_return_delay_boresight():
    lay = FrontEndLayout(1.0, (0, 5, 0, 5), (0, 0, 8, 8))
    for y, z in [(0, 0), (0.01, -0.02), (1.0, 1.0)]:
        assert return_delay(0, y, z, lay) == pytest.approx(1.0 / C0, rel=1e-15)


def test_return_delay_thirty_degrees(radar):
    lam = radar.wavelength
    lay = FrontEndLayout(1.0, (30, 35, 30, 35), (0, 0, 8, 8))
    assert return_delay(0, lam / 2, 0, lay) == pytest.approx((1 + lam / 4) / C0, rel=1e-13)


def test_return_delay_matches_far_field_geometry(table1, radar):
    y, _ = element_position(0, 3, radar)
    got = return_delay(0, y, 0.0, table1.layout)
    assert got == pytest.approx(FE0_ELEMENT_03_DELAY, rel=1e-12)
    oracle = far_field_delay(1.0, -5.4, -8.8, y, 0.0)
    assert got == pytest.approx(oracle, rel=1e-9)


def test_channel_delays_outbound_leg(table1):
    d = channel_delays(0, table1)
    assert d.shape == (3, 4)
    assert d[0, 0] == pytest.approx(2.0 / C0, rel=1e-15)


def test_zero_amplitude_channel_gives_zero_cube():
    sc = boresight_scenario()
    sc = sc.with_attenuations([0, 0, 0, 0])
    assert not np.any(synthesize_cube(sc).data)


def test_peak_bin_from_beat_frequency():
    sc = boresight_scenario(range_m=1.0, rts_delay=20e-9)
    tau = 2 * 1.0 / C0 + 20e-9
    f_b = sc.radar.bandwidth / sc.radar.chirp_period * tau
    expect = round(f_b / (sc.radar.sample_rate / sc.radar.num_samples))
    m, _ = extract_peak_bin(range_dft(synthesize_cube(sc)))
    assert m == expect == 27


def test_on_bin_magnitude_and_phase():
    # Total delay 3 ns lands exactly on bin 3 at element (0, 0).
    rts = 3e-9 - 0.6 / C0
    sc = boresight_scenario(range_m=0.3, rts_delay=rts)
    m, x = extract_peak_bin(range_dft(synthesize_cube(sc)))
    N = sc.radar.num_samples
    assert m == 3
    np.testing.assert_allclose(np.abs(x), N, rtol=1e-2)
    # Leading-order phase: carrier over the free-space path, IF over the RTS delay.
    tau = 3e-9
    approx = 2 * math.pi * (77e9 * (tau - rts) + 500e6 * rts)
    residual = abs(np.angle(x[0, 0] * np.exp(-1j * approx)))
    assert residual < 1e-3
    # Exact on-bin value includes the dropped square term.
    exact = approx - math.pi * sc.radar.slope * tau**2
    assert abs(np.angle(x[0, 0] * np.exp(-1j * exact))) < 1e-6


def test_rts_delay_step_phase_change():
    r = RadarConfig()
    base = 3e-9 - 0.6 / C0
    xs = []
    for rts in (base, base + 1e-9):
        _, x = extract_peak_bin(range_dft(synthesize_cube(boresight_scenario(0.3, rts))))
        xs.append(x[0, 0])
    d_rts = 1e-9
    tau1, tau2 = 3e-9, 4e-9
    expect = 2 * math.pi * 500e6 * d_rts - math.pi * r.slope * (tau2**2 - tau1**2)
    assert abs(np.angle(xs[1] / xs[0] * np.exp(-1j * expect))) < 1e-6


def test_destructive_pair_cancels():
    sc = ScenarioConfig(layout=FrontEndLayout.square())
    chans = (RtsChannel(1.0, 0.0, 0.0), RtsChannel(1.0, 0.0, math.pi),
             RtsChannel(0.0), RtsChannel(0.0))
    sc = sc.with_channels(chans)
    one = range_dft(synthesize_cube(sc, channels=[0])).bins[0, 0]
    both = range_dft(synthesize_cube(sc)).bins[0, 0]
    m = int(np.argmax(np.abs(one)))
    assert abs(both[m]) < 1e-6 * abs(one[m])


def test_two_equal_delay_channels_share_bin(ideal):
    spec = range_dft(synthesize_cube(ideal.only([0, 1])))
    m, _ = extract_peak_bin(spec)
    for q in (0, 1):
        assert extract_peak_bin(range_dft(synthesize_cube(ideal, channels=[q])))[0] == m


def test_aliasing_guard():
    sc = boresight_scenario(range_m=1.0, rts_delay=600e-9)
    with pytest.raises(UnsupportedRangeError):
        synthesize_cube(sc)
    # Just inside the Nyquist limit is fine.
    synthesize_cube(boresight_scenario(range_m=1.0, rts_delay=500e-9))


def test_cube_is_sum_of_single_channel_cubes(table1):
    sc = table1.with_attenuations([0.3, 1.0, 0.7, 0.2]).with_channels(
        replace(c, phase_offset=p, delay=d) for c, p, d in
        zip(table1.with_attenuations([0.3, 1.0, 0.7, 0.2]).channels,
            (0.1, 2.0, -1.0, 3.0), (0, 1e-10, 2e-10, 5e-11)))
    total = synthesize_cube(sc).data
    parts = sum(synthesize_cube(sc, channels=[q]).data for q in range(4))
    np.testing.assert_array_max_ulp(total.real, parts.real, maxulp=4)
    np.testing.assert_array_max_ulp(total.imag, parts.imag, maxulp=4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.complex_numbers(max_magnitude=10, allow_nan=False),
       st.complex_numbers(max_magnitude=10, allow_nan=False))
def test_range_dft_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(3, 4, 64)) + 1j * rng.normal(size=(3, 4, 64))
    Y = rng.normal(size=(3, 4, 64)) + 1j * rng.normal(size=(3, 4, 64))
    lhs = range_dft(SampleCube(a * X + b * Y, 1.0)).bins
    rhs = a * range_dft(SampleCube(X, 1.0)).bins + b * range_dft(SampleCube(Y, 1.0)).bins
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(rhs).max()))


def test_parseval(table1):
    cube = synthesize_cube(table1)
    spec = range_dft(cube)
    e_t = np.sum(np.abs(cube.data) ** 2)
    e_f = np.sum(np.abs(spec.bins) ** 2) / spec.num_bins
    assert abs(e_f - e_t) / e_t < 1e-9


def test_zero_cube_and_tone():
    z = range_dft(SampleCube(np.zeros((3, 4, 1024), complex), 1.0))
    assert not np.any(z.bins)
    with pytest.raises(NoDetectionError):
        extract_peak_bin(z)
    k = np.arange(1024)
    tone = np.broadcast_to(np.exp(2j * np.pi * 17 * k / 1024), (3, 4, 1024)).copy()
    spec = range_dft(SampleCube(tone, 1.0)).bins
    np.testing.assert_allclose(spec[..., 17], 1024, rtol=1e-12)
    others = np.delete(spec, 17, axis=-1)
    assert np.abs(others).max() < 1e-9


def test_windows_are_optional(table1):
    cube = synthesize_cube(table1)
    plain = range_dft(cube).bins
    hann = range_dft(cube, window="hann").bins
    assert not np.allclose(plain, hann)


def test_sample_cube_validation(table1):
    with pytest.raises(DimensionError):
        SampleCube(np.zeros((3, 4)), 1.0)
    with pytest.raises(DimensionError):
        SampleCube(np.zeros((3, 4, 10), complex), 1.0, table1)
    bad = np.zeros((3, 4, 8), complex)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        SampleCube(bad, 1.0)


def test_range_response_matches_dft():
    N = 64
    k = np.arange(N)
    for delta in (0.0, 0.3, 1.0, 2.5, -0.7):
        x = np.exp(2j * np.pi * (5 + delta) * k / N)
        assert np.fft.fft(x)[5] == pytest.approx(complex(range_response(delta, N)), abs=1e-9)


def test_range_bin_of_delay(radar):
    assert range_bin_of_delay(3e-9, radar) == pytest.approx(3.0)


def test_noise_is_seeded(table1):
    sc = replace(table1, snr_db=10.0, seed=4)
    a, b = synthesize_cube(sc).data, synthesize_cube(sc).data
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, synthesize_cube(replace(sc, seed=5)).data)


def test_synthesis_is_deterministic(table1):
    np.testing.assert_array_equal(synthesize_cube(table1).data, synthesize_cube(table1).data)
