import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from porlab import catalog
from porlab.catalog import point_index
from porlab.dyadic import DyadicParams, build_dyadic_system
from porlab.holes import (GETable, dyadic_hole_doubling_check, dyadic_max_free_generation,
                          hole_doubling_profile, max_free_hole)
from porlab.space import Ball, MetricMeasureSpace, TargetSet


def brute_hole(space, E, B):
    """Largest r with some B(y, r) inside B and missing E, over y in B and r in the distance set."""
    inside = set(space.ball_points(B).tolist())
    best = 0.0
    for y in inside:
        if E.mask[y]:
            continue
        d = space.distances_from(y)
        cands = np.unique(np.concatenate([d[d > 0], [2 * B.radius]]))
        for r in cands[cands <= 2 * B.radius]:
            pts = space.ball_points(Ball(y, float(r)))
            if E.mask[pts].any() or not set(pts.tolist()) <= inside:
                break
            best = max(best, float(r))
    return best


def test_empty_set_segment():
    sp = catalog.segment(-2, 2, 1 / 32)
    E = TargetSet(sp, [])
    B = Ball(point_index(sp, 0), 1.0)
    assert max_free_hole(sp, E, B).h_value == pytest.approx(1.0, abs=sp.h)


def test_cross_holes(cross48):
    sp, E, _ = cross48
    for n in (1, 2, 4):
        assert max_free_hole(sp, E, catalog.cross_ball(sp, n)).h_value == pytest.approx(0.5, abs=sp.h)
        assert max_free_hole(sp, E, catalog.cross_ball(sp, n, 2)).h_value >= n - sp.h


def test_witness_is_free(integer_segment):
    sp, E = integer_segment
    rep = max_free_hole(sp, E, Ball(point_index(sp, 0.3), 1.5))
    assert not E.mask[sp.ball_points(rep.witness)].any()
    assert rep.witness.radius == rep.h_value


def test_grid_rounding(integer_segment):
    sp, E = integer_segment
    B = Ball(point_index(sp, 0), 2)
    exact = max_free_hole(sp, E, B).h_value
    r = 2 ** 0.25
    rounded = max_free_hole(sp, E, B, grid_ratio=r).h_value
    assert rounded <= exact and rounded > exact / r


def test_all_points_in_E():
    sp = catalog.segment(0, 1, 1 / 8)
    E = TargetSet(sp, np.arange(sp.n_points))
    rep = max_free_hole(sp, E, Ball(3, 0.5))
    assert rep.h_value == 0 and rep.witness is None


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 25), st.integers(0, 10_000), st.floats(0.1, 0.6))
def test_matches_brute_force(n, seed, r):
    rng = np.random.default_rng(seed)
    sp = MetricMeasureSpace(rng.random((n, 2)))
    E = TargetSet(sp, rng.choice(n, size=max(1, n // 4), replace=False))
    B = Ball(int(rng.integers(n)), r)
    assert max_free_hole(sp, E, B).h_value == pytest.approx(brute_hole(sp, E, B), abs=1e-12)


def test_profile_empty_set():
    sp = catalog.segment(-8, 8, 1 / 32)
    E = TargetSet(sp, [])
    centers = [point_index(sp, x) for x in (-1, 0, 1)]
    prof = hole_doubling_profile(sp, E, centers, [0.5, 1.0, 1.5], (2.0, 4.0))
    for row in prof.ratios:
        assert row["ratio"] == pytest.approx(row["L"], rel=0.05)
    assert prof.d == pytest.approx(1.0, abs=0.05)


def test_profile_integer_set():
    sp, E = catalog.segment_with_integer_set(16, 1 / 32)
    centers = [point_index(sp, x) for x in (0, 0.5, 3.25)]
    prof = hole_doubling_profile(sp, E, centers, [1.0, 2.0, 3.0], (2.0, 4.0))
    assert all(row["ratio"] == pytest.approx(1.0, abs=0.1) for row in prof.ratios)
    assert prof.d < 0.1
    assert prof.is_doubling


def test_profile_cross_not_doubling(cross48):
    sp, E, _ = cross48
    ns = [1, 2, 4, 8]
    prof = hole_doubling_profile(sp, E, [catalog.horizontal_id(sp, n) for n in ns], ns)
    for n, row in zip(ns, prof.ratios):
        assert row["ratio"] >= 2 * n * (1 - sp.h)
    assert prof.is_doubling is False


@pytest.fixture(scope="module")
def seg_integer_system():
    sp, E = catalog.segment_with_integer_set(16, 1 / 64, span=16)
    return sp, E, build_dyadic_system(sp, DyadicParams(theta=0.5, T=2))


def test_free_root_has_own_generation():
    sp = catalog.segment(0, 1, 1 / 64)
    S = build_dyadic_system(sp, DyadicParams(theta=0.5, T=1))
    E = TargetSet(sp, [])
    Q0 = S.roots()[0]
    rep = dyadic_max_free_generation(S, E, Q0)
    assert rep.g_value == Q0.k and rep.witness == Q0


def test_all_points_sentinel():
    sp = catalog.segment(0, 1, 1 / 16)
    S = build_dyadic_system(sp, DyadicParams(theta=0.5, T=1))
    E = TargetSet(sp, np.arange(sp.n_points))
    rep = dyadic_max_free_generation(S, E, S.roots()[0])
    assert math.isinf(rep.g_value) and rep.exhausted


def test_small_segment_root():
    sp = catalog.segment(0, 2, 1 / 64)
    E = TargetSet(sp, [point_index(sp, x) for x in (0, 1, 2)])
    S = build_dyadic_system(sp, DyadicParams(theta=0.5, T=4))
    for Q0 in S.roots():
        rep = dyadic_max_free_generation(S, E, Q0)
        assert rep.g_value - Q0.k in (1, 2, 3)
        assert not E.mask[S.members(rep.witness)].any()


def test_table_matches_descent(seg_integer_system):
    sp, E, S = seg_integer_system
    table = GETable(S, E)
    for Q in S.descendants(S.roots()[0], 4):
        g = table.g_E(Q)
        if math.isinf(g):
            continue
        free = [c for c in S.descendants(Q, int(g - Q.k)) if table.is_free(c)]
        assert min(c.k for c in free) == g


def test_dyadic_doubling_empty_set():
    sp = catalog.random_cloud(300, seed=2)
    S = build_dyadic_system(sp, DyadicParams(T=2))
    chk = dyadic_hole_doubling_check(S, TargetSet(sp, []))
    assert chk.m == 1 and chk.chain_ok


def test_dyadic_doubling_integer_set():
    sp, E = catalog.segment_with_integer_set(16, 1 / 16, span=16)
    S = build_dyadic_system(sp, DyadicParams(theta=0.5, T=4))
    chk = dyadic_hole_doubling_check(S, E)
    assert chk.m <= 3 and chk.chain_ok


def test_dyadic_doubling_cross_grows():
    ms = []
    for T in (8, 128):
        sp, E, _ = catalog.cross_space(T, 1 / 16)
        S = build_dyadic_system(sp, DyadicParams(theta=0.5, T=1))
        ms.append(dyadic_hole_doubling_check(S, E).m)
    assert ms[1] > ms[0]
