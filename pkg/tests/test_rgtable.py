import math

import numpy as np
import pytest

from hazefuse.errors import DomainError, MalformedTable, NonMonotoneRow, OutOfArea, OutOfRange
from hazefuse.observation import GeoPoint, QualityFlag, TimeStamp
from hazefuse.rgtable import (
    AodEstimate,
    RgTable,
    SyntheticParams,
    Unusable,
    estimate_aod_from_image,
    eval_rg,
    generate_synthetic_table,
    invert_aod,
    load_rg_table,
    save_rg_table,
)
from hazefuse.solar import SolarContext, build_sza_table, solar_zenith_angle
from helpers import GROUND_BROWN, sky_with_rg

THESSALONIKI = GeoPoint(40.63, 22.95)

FIXTURE = """# rg_table wl=550,700 provenance=hand fixture
0.0,0.5,1.0
0,0.60,0.75,0.90
30,0.65,0.82,0.99
60,0.72,0.91,1.10
"""


def analytic(p: SyntheticParams, sza, aod):
    return (p.b0 + p.b1 * sza) + (p.s0 + p.s1 * sza) * aod


@pytest.fixture
def fixture_path(tmp_path):
    path = tmp_path / "rg.csv"
    path.write_text(FIXTURE)
    return path


def test_load_fixture(fixture_path):
    t = load_rg_table(fixture_path)
    assert t.direction == 1
    assert t.rg.shape == (3, 3)
    assert t.wavelengths == (550.0, 700.0)
    assert t.provenance == "hand fixture"


def test_load_rejects_dip(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(FIXTURE.replace("30,0.65,0.82,0.99", "30,0.65,0.62,0.99"))
    with pytest.raises(NonMonotoneRow) as info:
        load_rg_table(path)
    assert info.value.sza == 30.0


def test_load_rejects_unsorted_sza(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(FIXTURE.replace("60,0.72", "20,0.72"))
    with pytest.raises(MalformedTable) as info:
        load_rg_table(path)
    assert "SZA" in str(info.value) and not isinstance(info.value, NonMonotoneRow)


def test_load_reports_bad_cell(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(FIXTURE.replace("0.82", "x"))
    with pytest.raises(MalformedTable, match="line 4, column 3"):
        load_rg_table(path)


def test_decreasing_table_accepted():
    t = RgTable([0, 10], [0, 1, 2], [[1.0, 0.9, 0.8], [1.1, 1.0, 0.9]])
    assert t.direction == -1
    est = invert_aod(t, 0, 0.85)
    assert est.aod == pytest.approx(1.5) and est.quality_flag is QualityFlag.Ok
    assert invert_aod(t, 0, 1.2).aod == 0.0


def test_eval_nodes_and_midpoint(fixture_path):
    t = load_rg_table(fixture_path)
    for i, s in enumerate(t.sza_axis):
        for j, a in enumerate(t.aod_axis):
            assert eval_rg(t, s, a) == t.rg[i, j]
    assert eval_rg(t, 30, 0.25) == pytest.approx((0.65 + 0.82) / 2, abs=1e-15)


def test_eval_out_of_range(fixture_path):
    t = load_rg_table(fixture_path)
    with pytest.raises(OutOfRange):
        eval_rg(t, 61, 0.5)
    with pytest.raises(OutOfRange):
        eval_rg(t, 30, -0.1)


def test_eval_matches_analytic_formula():
    p = SyntheticParams()
    t = generate_synthetic_table(params=p)
    rng = np.random.default_rng(0)
    for _ in range(200):
        s, a = rng.uniform(0, 85), rng.uniform(0, 2)
        assert abs(eval_rg(t, s, a) - analytic(p, s, a)) < 1e-6


def test_invert_round_trip_at_30():
    t = generate_synthetic_table()
    rg = eval_rg(t, 30.0, 0.37)
    assert abs(invert_aod(t, 30.0, rg).aod - 0.37) < 1e-9


def test_invert_round_trip_off_node_sza():
    t = generate_synthetic_table()
    rng = np.random.default_rng(1)
    for _ in range(500):
        s, a = rng.uniform(0, 85), rng.uniform(0, 2)
        est = invert_aod(t, s, eval_rg(t, s, a))
        assert abs(est.aod - a) < 1e-9 and est.quality_flag is QualityFlag.Ok


def test_invert_clamps(fixture_path):
    t = load_rg_table(fixture_path)
    low = invert_aod(t, 0, 0.5)
    assert low.aod == 0.0 and low.quality_flag is QualityFlag.Clamped
    high = invert_aod(t, 60, 2.0)
    assert high.aod == 1.0 and high.quality_flag is QualityFlag.Clamped
    with pytest.raises(OutOfRange):
        invert_aod(t, 70, 0.8)


def test_invert_node_identity(fixture_path):
    t = load_rg_table(fixture_path)
    for i, s in enumerate(t.sza_axis):
        for j, a in enumerate(t.aod_axis):
            est = invert_aod(t, s, t.rg[i, j])
            assert est.aod == a and est.quality_flag is QualityFlag.Ok


def test_synthetic_defaults_validate(tmp_path):
    t = generate_synthetic_table()
    save_rg_table(t, tmp_path / "t.csv")
    back = load_rg_table(tmp_path / "t.csv")
    assert back.direction == 1 and back.provenance == "synthetic"
    np.testing.assert_array_equal(back.rg, t.rg)
    assert t.rg[0, 0] == SyntheticParams().b0


def test_synthetic_negative_slope():
    with pytest.raises(DomainError):
        generate_synthetic_table(params=SyntheticParams(s0=-1.0))


def test_continuity():
    t = generate_synthetic_table()
    rng = np.random.default_rng(5)
    lip = 0.002 + 0.001 * 2 + 0.385  # |d rg / d sza| + |d rg / d aod| bound of the analytic table
    for _ in range(200):
        s, a = rng.uniform(1, 84), rng.uniform(0.01, 1.99)
        d = 1e-6
        assert abs(eval_rg(t, s + d, a + d) - eval_rg(t, s, a)) <= lip * 2 * d + 1e-12
        rg = eval_rg(t, s, a)
        # inverse slope bounded by 1 / min slope
        assert abs(invert_aod(t, s, rg + d).aod - invert_aod(t, s, rg).aod) <= d / 0.3 + 1e-12


def _true_sza(geo, ts):
    return solar_zenith_angle(SolarContext.at(geo, ts))


def test_estimate_rendered_fixture():
    rg_table = generate_synthetic_table()
    sza_table = build_sza_table(THESSALONIKI)
    ts = TimeStamp.parse("2016-06-15T09:20:00Z")
    sza = _true_sza(THESSALONIKI, ts)
    img = sky_with_rg(eval_rg(rg_table, sza, 0.5))
    est = estimate_aod_from_image(img, THESSALONIKI, ts, sza_table, rg_table, image_id="img-1")
    assert isinstance(est, AodEstimate)
    assert est.aod == pytest.approx(0.5, abs=0.02)
    assert est.image_id == "img-1" and est.sza == pytest.approx(sza, abs=0.5)


def test_estimate_night_is_unusable():
    rg_table = generate_synthetic_table()
    sza_table = build_sza_table(THESSALONIKI)
    img = sky_with_rg(0.8)
    res = estimate_aod_from_image(img, THESSALONIKI, TimeStamp.parse("2016-06-15T22:00:00Z"), sza_table, rg_table)
    assert isinstance(res, Unusable) and "sun" in res.reason


def test_estimate_no_sky_is_unusable():
    rg_table = generate_synthetic_table()
    sza_table = build_sza_table(THESSALONIKI)
    img = sky_with_rg(0.8)
    brown = type(img)(np.tile(np.array(GROUND_BROWN, dtype=np.uint8), (60, 80, 1)))
    res = estimate_aod_from_image(brown, THESSALONIKI, TimeStamp.parse("2016-06-15T10:00:00Z"), sza_table, rg_table)
    assert isinstance(res, Unusable)


def test_estimate_out_of_area():
    with pytest.raises(OutOfArea):
        estimate_aod_from_image(
            sky_with_rg(0.8), GeoPoint(48.0, 2.0), TimeStamp.parse("2016-06-15T10:00:00Z"),
            build_sza_table(THESSALONIKI, doy_step=30, tod_step=6), generate_synthetic_table(),
        )
