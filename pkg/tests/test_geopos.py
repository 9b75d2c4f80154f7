"""Closed-form two-measurement localization and Taylor covariance."""

import math

import numpy as np
import pytest

from bistrack.errors import (
    BehindBaselineError,
    DegenerateEllipseError,
    UnresolvableGeometryError,
)
from bistrack.geometry import (
    ALL_KINDS,
    MeasurementEntry,
    MeasurementKind,
    MeasurementSet,
    Position,
    ScenarioConfig,
    aoa,
    aod,
    bistatic_range,
    forward_model,
    naf,
    sample_noisy,
)
from bistrack.geopos import (
    bistatic_to_monostatic_range,
    geo_estimate,
    geo_locate,
    locate_from_angle_range,
    locate_from_angles,
    taylor_covariance,
)

CFG = ScenarioConfig()

ANGLES = (MeasurementKind.NAF_TX, MeasurementKind.NAF_RX)
TX_RANGE = (MeasurementKind.BISTATIC_RANGE, MeasurementKind.NAF_TX)
RX_RANGE = (MeasurementKind.BISTATIC_RANGE, MeasurementKind.NAF_RX)


def _noiseless_set(p, kinds, cfg=CFG, variance=1e-4):
    values = forward_model(p, kinds, cfg)
    return MeasurementSet([MeasurementEntry(k, float(v), variance)
                           for k, v in zip(kinds, values)])


def test_locate_from_angles_symmetric_target():
    p = locate_from_angles(naf(-math.pi / 4, CFG), naf(math.pi / 4, CFG), CFG)
    assert p.px == pytest.approx(0.0, abs=1e-12)
    assert p.py == pytest.approx(5.0, abs=1e-12)


def test_locate_from_angles_round_trip():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        p = Position(rng.uniform(-15, 15), rng.uniform(1, 35))
        p_hat = locate_from_angles(naf(aod(p, CFG), CFG),
                                   naf(aoa(p, CFG), CFG), CFG)
        assert math.hypot(p_hat.px - p.px, p_hat.py - p.py) < 1e-9


def test_locate_from_angles_parallel_rays():
    with pytest.raises(UnresolvableGeometryError):
        locate_from_angles(0.1, 0.1, CFG)


def test_locate_from_angles_behind_baseline():
    # mirrored symmetric angles intersect below the array axis
    with pytest.raises(BehindBaselineError):
        locate_from_angles(naf(math.pi / 4, CFG), naf(-math.pi / 4, CFG), CFG)


def test_locate_from_angles_raw_skips_the_checks():
    p = locate_from_angles(naf(math.pi / 4, CFG), naf(-math.pi / 4, CFG), CFG,
                           raw=True)
    assert p.py == pytest.approx(-5.0, abs=1e-12)
    far = locate_from_angles(0.1, 0.1 + 1e-12, CFG, raw=True)
    assert abs(far.py) > 1e6   # the fan-out point, not an error


def test_bistatic_to_monostatic_symmetric():
    r = bistatic_to_monostatic_range(math.pi / 4, 2.0 * math.sqrt(50.0), CFG)
    assert r == pytest.approx(math.sqrt(50.0), abs=1e-9)


def test_bistatic_to_monostatic_both_sides_of_a_point():
    r_b = math.sqrt(80.0) + math.sqrt(20.0)
    rx = bistatic_to_monostatic_range(aoa(Position(3, 4), CFG), r_b, CFG)
    assert rx == pytest.approx(math.sqrt(20.0), abs=1e-9)
    tx = bistatic_to_monostatic_range(math.pi + aod(Position(3, 4), CFG),
                                      r_b, CFG)
    assert tx == pytest.approx(math.sqrt(80.0), abs=1e-9)


def test_bistatic_to_monostatic_degenerate_denominator():
    with pytest.raises(DegenerateEllipseError):
        bistatic_to_monostatic_range(math.pi / 2, 2.0 * CFG.c, CFG)


def test_locate_from_angle_range_round_trips():
    p = Position(3.0, 4.0)
    r_b = bistatic_range(p, CFG)
    for side, phi in (("rx", aoa(p, CFG)), ("tx", aod(p, CFG))):
        got = locate_from_angle_range(naf(phi, CFG), r_b, side, CFG)
        assert got.px == pytest.approx(3.0, abs=1e-9)
        assert got.py == pytest.approx(4.0, abs=1e-9)


def test_locate_from_angle_range_boresight():
    p = Position(-5.0, 7.0)
    got = locate_from_angle_range(0.0, bistatic_range(p, CFG), "tx", CFG)
    assert got.px == pytest.approx(-5.0, abs=1e-9)
    assert got.py == pytest.approx(7.0, abs=1e-9)


def test_locate_from_angle_range_rejects_unknown_side():
    with pytest.raises(ValueError):
        locate_from_angle_range(0.0, 12.0, "left", CFG)


def test_angle_range_side_symmetry():
    rng = np.random.default_rng(5)
    for _ in range(100):
        p = Position(rng.uniform(-12, 12), rng.uniform(1, 30))
        mirror = Position(-p.px, p.py)
        a = locate_from_angle_range(naf(aod(p, CFG), CFG),
                                    bistatic_range(p, CFG), "tx", CFG)
        b = locate_from_angle_range(naf(aoa(mirror, CFG), CFG),
                                    bistatic_range(mirror, CFG), "rx", CFG)
        assert a.px == pytest.approx(-b.px, abs=1e-8)
        assert a.py == pytest.approx(b.py, abs=1e-8)


@pytest.mark.parametrize("kinds", [ANGLES, TX_RANGE, RX_RANGE])
def test_geo_locate_exact_inversion(kinds):
    rng = np.random.default_rng(17)
    for _ in range(300):
        p = Position(rng.uniform(-15, 15), rng.uniform(0.5, 50))
        got = geo_locate(_noiseless_set(p, kinds), CFG)
        assert math.hypot(got.px - p.px, got.py - p.py) < 1e-9


def test_geo_locate_needs_exactly_two_kinds():
    p = Position(0.0, 10.0)
    with pytest.raises(ValueError):
        geo_locate(_noiseless_set(p, ALL_KINDS), CFG)
    with pytest.raises(ValueError):
        geo_locate(_noiseless_set(p, (MeasurementKind.NAF_TX,)), CFG)


# ---------------------------------------------------------------------------
# Taylor covariance
# ---------------------------------------------------------------------------

def test_taylor_covariance_vanishes_with_the_noise():
    m_set = _noiseless_set(Position(2.0, 8.0), ANGLES, variance=1e-12)
    cov = taylor_covariance(m_set, CFG)
    assert np.linalg.norm(cov) < 1e-6


def test_taylor_covariance_quadratic_scaling():
    p = Position(4.0, 9.0)
    values = forward_model(p, ANGLES, CFG)
    k = 3.7
    cov1 = taylor_covariance(MeasurementSet(
        [MeasurementEntry(kd, float(v), 1e-4) for kd, v in zip(ANGLES, values)]),
        CFG)
    cov2 = taylor_covariance(MeasurementSet(
        [MeasurementEntry(kd, float(v), k ** 2 * 1e-4)
         for kd, v in zip(ANGLES, values)]), CFG)
    np.testing.assert_allclose(cov2, k ** 2 * cov1, rtol=1e-12)


def test_taylor_covariance_mirror_symmetry():
    """Mirroring the target in x keeps the axis variances and flips the
    cross term."""
    p = Position(3.0, 10.0)
    mirror = Position(-3.0, 10.0)
    cov = taylor_covariance(_noiseless_set(p, ANGLES), CFG)
    cov_m = taylor_covariance(_noiseless_set(mirror, ANGLES), CFG)
    assert cov_m[0, 0] == pytest.approx(cov[0, 0], rel=1e-6)
    assert cov_m[1, 1] == pytest.approx(cov[1, 1], rel=1e-6)
    assert cov_m[0, 1] == pytest.approx(-cov[0, 1], rel=1e-6)


@pytest.mark.parametrize("kinds", [ANGLES, TX_RANGE, RX_RANGE])
def test_taylor_covariance_symmetric_psd(kinds):
    rng = np.random.default_rng(23)
    for _ in range(50):
        p = Position(rng.uniform(-12, 12), rng.uniform(2, 30))
        m_set = sample_noisy(p, kinds, CFG, rng)
        try:
            cov = taylor_covariance(m_set, CFG)
        except (UnresolvableGeometryError, DegenerateEllipseError,
                BehindBaselineError):
            continue
        np.testing.assert_allclose(cov, cov.T, atol=1e-12)
        eigs = np.linalg.eigvalsh(cov)
        assert eigs.min() >= -1e-9 * max(eigs.max(), 1.0)


def test_taylor_covariance_matches_sampling_at_small_noise():
    p = Position(3.0, 10.0)
    scale = 0.01
    quiet = ScenarioConfig(sigma_r=CFG.sigma_r * scale,
                           sigma_eta=CFG.sigma_eta * scale)
    clean = forward_model(p, ANGLES, quiet)
    m_set = MeasurementSet([
        MeasurementEntry(k, float(v), max(s ** 2, 1e-12))
        for k, v, s in zip(ANGLES, clean,
                           (quiet.sigma_eta, quiet.sigma_eta))])
    cov = taylor_covariance(m_set, quiet)

    rng = np.random.default_rng(29)
    pts = np.array([
        locate_from_angles(*sample_noisy(p, ANGLES, quiet, rng).values,
                           quiet).as_array()
        for _ in range(20_000)])
    sample_cov = np.cov(pts.T)
    rel = np.linalg.norm(sample_cov - cov) / np.linalg.norm(cov)
    assert rel < 0.15


def test_geo_estimate_attaches_method_and_covariance():
    p = Position(1.0, 9.0)
    est = geo_estimate(_noiseless_set(p, ANGLES), CFG)
    assert est.method == "geo-angles"
    assert est.cov.shape == (2, 2)
    est2 = geo_estimate(_noiseless_set(p, RX_RANGE), CFG)
    assert est2.method == "geo-angle-range"
