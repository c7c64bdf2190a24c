import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rtsangle.errors import DegenerateLayoutError, InvalidConfigError
from rtsangle.model import (SPEED_OF_LIGHT, FrontEndLayout, RadarConfig, RtsChannel,
                            ScenarioConfig, check_scenario, load_scenario, reduce_layout,
                            save_scenario, validate_scenario, wavelength)


def test_wavelength_values():
    assert wavelength(77e9) == pytest.approx(3.8934e-3, abs=1e-7)
    assert wavelength(SPEED_OF_LIGHT) == 1.0
    assert wavelength(38.5e9) == pytest.approx(2 * wavelength(77e9), rel=1e-15)


@pytest.mark.parametrize("f", [0.0, -1.0])
def test_wavelength_rejects_non_positive(f):
    with pytest.raises(InvalidConfigError):
        wavelength(f)


@given(st.floats(1e6, 1e12), st.floats(1.0001, 10))
def test_wavelength_strictly_decreasing(f, k):
    assert wavelength(f * k) < wavelength(f)


def test_speed_of_light_is_exact():
    assert SPEED_OF_LIGHT == 299_792_458.0


def test_default_spacings_half_centre_wavelength(radar):
    assert radar.rx_spacing_y == pytest.approx(radar.wavelength / 2)
    assert radar.tx_spacing_z == pytest.approx(radar.wavelength / 2)
    assert radar.tx_spacing_y == 0 and radar.rx_spacing_z == 0
    assert radar.has_simplified_geometry
    assert radar.sample_rate == pytest.approx(1024 / 50e-6)


def test_reduce_ideal_square():
    red = reduce_layout(FrontEndLayout.square((-5, 5), (-8, 8)))
    assert tuple(red[:4]) == (-5, 5, -8, 8)
    assert red.residuals == (0, 0, 0, 0)


def test_reduce_measured_layout():
    red = reduce_layout(FrontEndLayout.table1())
    np.testing.assert_allclose(red[:4], (-4.4, 4.15, -8.25, 9.15), atol=1e-12)
    np.testing.assert_allclose(red.residuals, (2.0, 0.7, 1.1, 1.5), atol=1e-12)


def test_reduce_collapsed_square():
    lay = FrontEndLayout(1.0, (1.0, 1.0, 1.0, 1.0), (-8, -8, 8, 8))
    with pytest.raises(DegenerateLayoutError):
        reduce_layout(lay)
    lay = FrontEndLayout(1.0, (-5, 5, -5, 5), (2, 2, -2, -2))
    with pytest.raises(DegenerateLayoutError):
        reduce_layout(lay)


@given(st.floats(-40, -0.1), st.floats(0.1, 40), st.floats(-40, -0.1), st.floats(0.1, 40))
def test_reduce_symmetric_layout_is_identity(l, r, b, t):
    red = reduce_layout(FrontEndLayout.square((l, r), (b, t)))
    assert tuple(red[:4]) == (l, r, b, t)
    assert red.residuals == (0, 0, 0, 0)


def test_mirrored_residuals_negate_misalignment():
    lay = FrontEndLayout.table1()
    mir = lay.mirrored_residuals()
    a, b = reduce_layout(lay), reduce_layout(mir)
    np.testing.assert_allclose(a[:4], b[:4], atol=1e-12)
    np.testing.assert_allclose(a.residuals, b.residuals, atol=1e-12)
    assert mir.azimuth[0] == pytest.approx(-3.4)
    assert mir.elevation[3] == pytest.approx(8.4)


def test_ideal_square_keeps_spans():
    sq = reduce_layout(FrontEndLayout.table1().ideal_square())
    assert sq.theta_r - sq.theta_l == pytest.approx(8.55)
    assert sq.psi_t - sq.psi_b == pytest.approx(17.4)
    assert sq.center == pytest.approx((0.0, 0.0))


def test_channel_amplitude_product():
    assert RtsChannel(0.5, gain_error=0.8, gain_trim=1.25).amplitude == pytest.approx(0.5)


def test_validate_default_is_clean(table1):
    assert validate_scenario(table1) == []
    check_scenario(table1)


def test_validate_zero_rx():
    sc = ScenarioConfig(radar=RadarConfig(num_rx=0))
    diags = validate_scenario(sc)
    assert [d.field for d in diags] == ["radar.num_rx"]
    with pytest.raises(InvalidConfigError):
        check_scenario(sc)


def test_validate_closed_form_geometry_warning():
    sc = ScenarioConfig(radar=RadarConfig(rx_spacing_z=1e-3), closed_form=True)
    diags = validate_scenario(sc)
    assert len(diags) == 1
    assert diags[0].field == "radar.rx_spacing_z" and diags[0].severity == "warning"
    check_scenario(sc)  # warnings do not raise


def test_validate_reports_every_violation():
    chans = (RtsChannel(attenuation=-1), RtsChannel(delay=-1e-9), RtsChannel(), RtsChannel())
    sc = ScenarioConfig(channels=chans, rts_frequency=0, window="kaiser")
    fields = {d.field for d in validate_scenario(sc)}
    assert fields == {"channels[0].attenuation", "channels[1].delay", "rts_frequency", "window"}


def test_validate_angle_range():
    sc = ScenarioConfig(layout=FrontEndLayout(1.0, (-95, 5, -5, 5), (-8, -8, 8, 8)))
    assert any(d.field == "layout.azimuth[0]" for d in validate_scenario(sc))


def test_validate_is_pure(table1):
    bad = dataclasses.replace(table1, rts_frequency=-1)
    assert validate_scenario(bad) == validate_scenario(bad)


def test_scenario_roundtrip(tmp_path, table1):
    sc = table1.with_attenuations([0.1, 0.2, 0.3, 0.4])
    path = tmp_path / "s.yaml"
    save_scenario(sc, path)
    back = load_scenario(path)
    assert back == sc
    assert back.digest() == sc.digest()


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(InvalidConfigError):
        ScenarioConfig.from_dict({"bogus": 1})


def test_shipped_scenario_file():
    from pathlib import Path
    sc = load_scenario(Path(__file__).parents[1] / "scenarios" / "table1.yaml")
    assert sc.radar.carrier_frequency == 77e9 and sc.radar.bandwidth == 1e9
    assert (sc.radar.num_tx, sc.radar.num_rx) == (3, 4)
    assert sc.rts_frequency == 500e6 and sc.layout.range_m == 1.0
    assert sc.layout == FrontEndLayout.table1()
    assert validate_scenario(sc) == []


def test_only_switches_off_other_channels(table1):
    sc = table1.only([1, 3])
    assert [c.attenuation for c in sc.channels] == [0, 1, 0, 1]
