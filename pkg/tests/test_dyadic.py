import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from porlab import catalog
from porlab.catalog import point_index
from porlab.dyadic import (Cube, DyadicParams, build_dyadic_system, build_net_hierarchy,
                           check_invariants, epsilon_boundary_fit)
from porlab.errors import BuildError, DepthError, InputError
from porlab.space import Ball, MetricMeasureSpace


@pytest.fixture(scope="module")
def seg_system():
    sp = catalog.segment(0, 1, 1 / 256)
    return build_dyadic_system(sp, DyadicParams(theta=0.5, T=3))


@pytest.fixture(scope="module")
def cloud_system():
    sp = catalog.random_cloud(1000, seed=11)
    return build_dyadic_system(sp, DyadicParams(theta=0.25, T=4, seed=5))


def test_params_validate():
    for bad in (dict(theta=1.0), dict(c0=2.0, C0=1.0), dict(T=0), dict(k_min=3, k_max=1)):
        with pytest.raises(InputError):
            DyadicParams(**bad).validate()


def test_single_point_hierarchy():
    sp = MetricMeasureSpace([[0.0, 0.0]], h=1.0)
    h = build_net_hierarchy(sp, DyadicParams(k_min=0, k_max=3), seed=0)
    assert [len(n) for n in h.nets] == [1, 1, 1, 1]


def test_duplicates_rejected():
    sp = MetricMeasureSpace([[0.0], [0.0], [1.0]], h=1.0)
    with pytest.raises(BuildError):
        build_net_hierarchy(sp, DyadicParams(), seed=0)


def test_segment_net_at_level_one():
    sp = catalog.segment(0, 1, 1 / 64)
    h = build_net_hierarchy(sp, DyadicParams(theta=0.5, c0=0.5, C0=1.0), seed=0)
    # the exact net depends on the seeded start point; {0, 1/2, 1} when it starts at an end
    i = 1 - h.k_min
    net = sp.coords[h.net(1), 0]
    assert 2 <= len(net) <= 3
    assert h.covering[i] < 0.5
    assert h.separation[i] >= 0.25


def test_covering_exhaustive():
    sp = catalog.random_cloud(500, seed=2)
    p = DyadicParams(theta=0.25)
    h = build_net_hierarchy(sp, p, seed=1)
    for k in h.levels:
        net = h.net(k)
        diff = np.abs(sp.coords[:, None, :] - sp.coords[net][None, :, :]).max(axis=2).min(axis=1)
        assert diff.max() < p.C0 * p.theta ** k


def test_root_is_whole_space(seg_system):
    S = seg_system
    roots = S.roots()
    assert len(roots) == S.T
    for Q in roots:
        assert len(S.members(Q)) == S.space.n_points


def test_measures_add_up(seg_system):
    S = seg_system
    for t, g in enumerate(S.grids):
        for k in range(g.k_min, g.k_max + 1):
            total = sum(S.measure(Q) for Q in S.cubes(t, k))
            assert math.isclose(total, S.space.total_mass, rel_tol=1e-12)


def test_segment_cubes_are_intervals(seg_system):
    S = seg_system
    g = S.grids[0]
    for k in range(g.k_min, min(g.k_max, g.k_min + 5) + 1):
        for Q in S.cubes(0, k):
            ids = S.members(Q)
            assert ids.max() - ids.min() + 1 == len(ids)
        assert len(S.cubes(0, k)) <= 2 ** (k + 1) + 1


def test_segment_children_counts(seg_system):
    S = seg_system
    counts = set()
    for Q in S.descendants(S.roots()[0], 6):
        if Q.k < S.grids[0].k_max:
            counts.add(len(S.children(Q)))
    assert counts <= {1, 2, 3}


def test_children_partition_parent(seg_system):
    S = seg_system
    for Q in S.descendants(S.roots()[1], 3):
        ch = S.children(Q)
        if not ch:
            continue
        union = np.sort(np.concatenate([S.members(c) for c in ch]))
        assert np.array_equal(union, S.members(Q))
        assert S.descendants(Q, 1)[1:] == ch


def test_chain(seg_system):
    S = seg_system
    Q = S.cube_of(0, S.grids[0].k_min + 4, 100)
    assert S.chain(Q, Q) == [Q]
    top = S.roots()[0]
    ch = S.chain(Q, top)
    assert ch[0] == Q and ch[-1] == top and [c.k for c in ch] == list(range(Q.k, top.k - 1, -1))
    with pytest.raises(InputError):
        S.chain(top, Q)


def test_containing_cube_segment(seg_system):
    S = seg_system
    B = Ball(point_index(S.space, 0.49), 0.02)
    res = S.containing_cube(B)
    assert res.cube.k == 4
    assert 0.5 ** 6 < 0.02 <= 0.5 ** 5
    if not res.adjacency_miss:
        assert np.isin(S.space.ball_points(B), S.members(res.cube)).all()


def test_containing_cube_of_inner_ball(cloud_system):
    S = cloud_system
    Q = S.cubes(0, S.k_min + 1)[0]
    B = Ball(Q.reference_point, S.params.a * S.theta ** Q.k)
    res = S.containing_cube(B)
    if not res.adjacency_miss:
        assert np.isin(S.space.ball_points(B), S.members(res.cube)).all()


def test_fit_cube_in_ball_segment(seg_system):
    S = seg_system
    Q = S.roots()[0]
    B = Ball(point_index(S.space, 0.3), 0.25)
    fit = S.fit_cube_in_ball(B, Q)
    xs = S.space.coords[S.members(fit), 0]
    assert xs.min() > 0.05 and xs.max() < 0.55
    assert fit.index in S.members(fit)
    assert point_index(S.space, 0.3) in S.members(fit)
    assert B.radius <= 2 * S.params.A / S.theta * S.theta ** fit.k


def test_fit_cube_in_ball_requires_strict_inclusion(seg_system):
    S = seg_system
    with pytest.raises(InputError):
        S.fit_cube_in_ball(Ball(0, 5.0), S.roots()[0])


def test_fit_cube_cross():
    sp, _, _ = catalog.cross_space(16, 1 / 16)
    S = build_dyadic_system(sp, DyadicParams(theta=0.25, T=2))
    for n in (1, 2, 4):
        B = catalog.cross_ball(sp, n)
        Q = S.roots()[0]
        fit = S.fit_cube_in_ball(B, Q)
        assert np.all(sp.coords[S.members(fit), 1] == 0)
        assert S.theta ** fit.k >= S.theta * n / (2 * S.params.A)


def test_epsilon_boundary_on_segment(seg_system):
    S = seg_system
    for Q in S.cubes(0, S.grids[0].k_min + 3):
        xs = S.space.coords[S.members(Q), 0]
        L = xs.max() - xs.min() + S.space.h
        if xs.min() == 0 or xs.max() == 1:
            continue  # one side is the boundary of the space
        lam = 0.25
        want = min(2 * lam * S.theta ** Q.k / L, 1.0)
        assert S.epsilon_boundary_measure(Q, lam) == pytest.approx(want, abs=4 * S.space.h / L)


def test_epsilon_boundary_fit(cloud_system):
    fit = epsilon_boundary_fit(cloud_system)
    assert fit.eta > 0 and fit.dominates


def test_invariants_on_cloud(cloud_system):
    rep = check_invariants(cloud_system, pairs=500, seed=1)
    assert rep.ok, rep.failures
    assert 0 < cloud_system.params.a < cloud_system.params.A


def test_invariants_detect_corruption():
    sp = catalog.random_cloud(200, seed=1)
    S = build_dyadic_system(sp, DyadicParams(T=1))
    g = S.grids[0]
    k = g.k_min + 2
    net = g.net(k)
    lab = g.labels[g.li(k)]
    outsider = next(i for i in range(sp.n_points) if i not in set(net.tolist()))
    lab[0] = outsider
    rep = check_invariants(S, pairs=10)
    assert not rep.partition


def test_same_seed_same_system():
    sp = catalog.random_cloud(300, seed=4)
    a = build_dyadic_system(sp, DyadicParams(seed=9))
    b = build_dyadic_system(sp, DyadicParams(seed=9))
    for ga, gb in zip(a.grids, b.grids):
        assert np.array_equal(ga.labels, gb.labels)


def test_cube_helpers():
    Q = Cube(1, 3, 42)
    assert Q.reference_point == 42 and Q.to_json() == [1, 3, 42]


@settings(max_examples=15, deadline=None)
@given(st.integers(20, 300), st.integers(0, 10_000), st.sampled_from([0.25, 0.5]))
def test_random_systems_satisfy_invariants(n, seed, theta):
    sp = catalog.random_cloud(n, seed=seed)
    S = build_dyadic_system(sp, DyadicParams(theta=theta, T=2, seed=seed))
    rep = check_invariants(S, pairs=100, seed=seed)
    assert rep.ok, rep.failures


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_fit_cube_generation_bound(seed):
    sp = catalog.random_cloud(400, seed=seed % 7)
    S = build_dyadic_system(sp, DyadicParams(T=1, seed=1))
    rng = np.random.default_rng(seed)
    Q = S.roots()[0]
    c = int(rng.integers(sp.n_points))
    r = float(rng.uniform(3 * sp.h, 0.4))
    try:
        fit = S.fit_cube_in_ball(Ball(c, r), Q)
    except (InputError, DepthError):
        return
    assert r <= 2 * S.params.A / S.theta * S.theta ** fit.k * (1 + 1e-12)
    assert np.isin(S.members(fit), sp.ball_points(Ball(c, r))).all()
