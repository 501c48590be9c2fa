import numpy as np
import pytest

from porlab import catalog
from porlab.catalog import point_index
from porlab.errors import InputError
from porlab.space import Ball, TargetSet
from porlab.weights import (a1_estimate, a1_factor, ap_factor, ap_range, classify,
                            growth_verdict, mu_exponent, resolution_trend, weight_doubling_profile,
                            weight_essinf, weight_integral)


def riemann(f, a, b, h):
    """Midpoint sum of f over [a, b] at step h, skipping the sample at 0."""
    x = np.arange(a, b, h) + h / 2
    return float(np.sum(f(x)) * h)


def test_alpha_zero(integer_segment):
    sp, E = integer_segment
    B = Ball(point_index(sp, 0.25), 1.0)
    ids = sp.ball_points(B)
    assert weight_integral(sp, E, B, 0.0) == pytest.approx(sp.measure(ids[~E.mask[ids]]))
    assert weight_essinf(sp, E, B, 0.0) == 1.0


def test_cross_integral(cross48):
    sp, E, oracle = cross48
    assert weight_integral(sp, E, catalog.vertical_ball(sp, 2), 0.5) == pytest.approx(4.0, rel=0.05)
    assert oracle.exact_weight_integral(2, 0.5) == 4.0


def test_segment_single_point():
    sp = catalog.segment(-1, 1, 1 / 512)
    E = TargetSet(sp, [point_index(sp, 0)])
    got = weight_integral(sp, E, Ball(point_index(sp, 0), 1.0), 0.5)
    want = 2 * riemann(lambda x: x ** -0.5, 0, 1, sp.h / 4)
    assert got == pytest.approx(want, rel=0.05)


def test_empty_set_rejected():
    sp = catalog.segment(0, 1, 1 / 16)
    with pytest.raises(InputError):
        a1_estimate(sp, TargetSet(sp, []), 0.5, [Ball(3, 0.2)])


def test_constant_weight_factor_is_one():
    sp = catalog.segment(0, 100, 1 / 4)
    E = TargetSet(sp, [0])
    B = Ball(point_index(sp, 80), 0.3)
    assert ap_factor(sp, E, B, 0.5, 2) == pytest.approx(1, abs=1e-3)
    assert a1_factor(sp, E, B, 0.5) == pytest.approx(1, abs=2e-3)


def test_ap_dominates_one(integer_segment):
    sp, E = integer_segment
    for b in (Ball(point_index(sp, 0.3), 1.0), Ball(point_index(sp, 2), 0.6)):
        assert ap_factor(sp, E, b, 0.5, 3) >= 1 - 1e-12


def _trend(alpha, p):
    balls = [([x], r) for x in np.arange(-2, 2.01, 0.5) for r in (0.25, 0.5, 1.0)]
    return resolution_trend(lambda h: catalog.segment_with_integer_set(4, h), alpha, p, balls,
                            [1 / 64, 1 / 128, 1 / 256])


def test_a1_stable_for_half():
    rep = _trend(0.5, 1)
    assert rep.verdict == "stable"


def test_ap_stable_for_negative_alpha():
    rep = _trend(-0.9, 2)
    assert rep.verdict == "stable"


def test_ap_grows_outside_range():
    rep = _trend(1.1, 2)
    assert all(g > 1.1 for g in rep.growth)


def test_growth_verdict():
    assert growth_verdict([1, 1.1, 1.2])[1] == "stable"
    assert growth_verdict([1, 1.6, 2.6])[1] == "divergent"
    assert growth_verdict([1, 1.3, 1.7])[1] == "inconclusive"
    assert growth_verdict([1, 2])[1] == "inconclusive"


def test_doubling_far_from_set():
    sp = catalog.segment(-2, 2, 1 / 256)
    E = TargetSet(sp, [point_index(sp, 0)])
    prof = weight_doubling_profile(sp, E, 0.5, [Ball(point_index(sp, 1), 0.25)])
    r = prof["ratios"][0]["ratio"]
    exact = (2 * (1.5 ** 0.5 - 0.5 ** 0.5)) / (2 * (1.25 ** 0.5 - 0.75 ** 0.5))
    assert r == pytest.approx(exact, rel=0.02)


def test_doubling_cross_grows(cross48):
    sp, E, oracle = cross48
    prof = weight_doubling_profile(sp, E, 0.5, [catalog.vertical_ball(sp, n) for n in (1, 2, 4, 8, 16)])
    assert prof["non_doubling_trend"]
    for row, n in zip(prof["ratios"], (1, 2, 4, 8, 16)):
        assert row["ratio"] >= 0.5 * n ** 0.5


def test_doubling_alpha_zero_matches_measure():
    sp = catalog.random_cloud(400, seed=3)
    E = TargetSet(sp, [0])
    balls = [Ball(i, 0.1) for i in (5, 50, 100)]
    prof = weight_doubling_profile(sp, E, 0.0, balls)
    for row, b in zip(prof["ratios"], balls):
        ids, ids2 = sp.ball_points(b), sp.ball_points(b.scaled(2))
        want = sp.measure(ids2[ids2 != 0]) / sp.measure(ids[ids != 0])
        assert row["ratio"] == pytest.approx(want)


def test_mu_single_point():
    sp = catalog.segment(-64, 64, 1 / 64)
    E = TargetSet(sp, [point_index(sp, 0)])
    est = mu_exponent(sp, E, samples=8)
    assert est.value == pytest.approx(1.0, abs=0.1)


def test_mu_integers():
    sp, E = catalog.segment_with_integer_set(64, 2 ** -8)
    est = mu_exponent(sp, E, samples=16, J=4)
    assert est.value == pytest.approx(1.0, abs=0.1)


def test_ap_range_oracles():
    iv = ap_range(1.0, 2)
    assert (iv.lo, iv.hi) == (-1.0, 1.0)
    assert ap_range(0.0, 3).empty
    assert classify(0.5, 1, 1.0) == "inside"
    assert classify(1.5, 2, 1.0) == "outside"
    assert classify(1.0, 2, 1.0) == "boundary"
    assert classify(-0.1, 1, 1.0) == "outside"
    assert classify(0.95, 2, 1.0, half_width=0.1) == "boundary"
