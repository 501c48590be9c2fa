"""Built-in example spaces and target sets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .space import Ball, MetricMeasureSpace, TargetSet


class OracleDomainError(InputError):
    pass


def _snap_step(h: float, notes: list) -> float:
    """Snap h to 1/q for the nearest integer q so that integers are sample points."""
    q = max(1, round(1.0 / h))
    snapped = 1.0 / q
    if not math.isclose(snapped, h, rel_tol=1e-12):
        notes.append(f"h={h!r} snapped to 1/{q}")
    return snapped


def segment(a: float, b: float, h: float, name=None, notes=None) -> MetricMeasureSpace:
    """Uniform samples of [a, b] with step h and mass h."""
    n = int(round((b - a) / h)) + 1
    coords = a + h * np.arange(n)
    return MetricMeasureSpace(coords, np.full(n, h), h=h, diameter_hint=b - a,
                              name=name or f"segment[{a:g},{b:g}]", notes=notes)


def segment_with_integer_set(N: int, h: float, span: int | None = None):
    """Samples of [-N, N] with E = the integer samples.

    ``span`` restricts E to the integers in [-span, span].
    """
    if N < 1:
        raise InputError("N must be >= 1")
    if h > 1 / 2:
        raise InputError("h must be <= 1/2")
    notes = []
    h = _snap_step(h, notes)
    space = segment(-N, N, h, name=f"segment:N={N},h={h!r}", notes=notes)
    q = round(1 / h)
    idx = np.arange(space.n_points)
    ints = idx[(idx % q) == 0]
    if span is not None:
        ints = ints[np.abs(space.coords[ints, 0]) <= span + h / 2]
    return space, TargetSet(space, ints)


def point_index(space: MetricMeasureSpace, x) -> int:
    """Id of the sample at ambient position x (nearest sample)."""
    return space.nearest(x)


@dataclass
class AnalyticOracle:
    """Closed forms for the cross space with E = nonnegative integers on the horizontal axis."""

    Tmax: float

    def _check_n(self, n):
        if not (0 < n <= self.Tmax / 3):
            raise OracleDomainError(f"n={n} outside oracle domain (0, {self.Tmax / 3:g}]")

    def exact_hole(self, n: float, scale: float = 1.0) -> float:
        """h_E of the ball centred at (n, 0) with radius scale*n, scale in {1, 2}."""
        self._check_n(n)
        if scale == 1.0:
            return 0.5 if n >= 0.5 else n
        if scale == 2.0:
            return float(n)
        raise OracleDomainError("only radius n or 2n balls have closed forms")

    def exact_weight_integral(self, n: float, alpha: float) -> float:
        """Integral of dist(., E)^-alpha over the vertical ball centred at (0, n) with radius n."""
        self._check_n(n)
        if not 0 < alpha < 1:
            raise OracleDomainError("closed form needs alpha in (0, 1)")
        return (2 * n) ** (1 - alpha) / (1 - alpha)

    def exact_weight_doubling_ratio(self, n: int, alpha: float) -> float:
        """w(2B)/w(B) for B centred at (0, n) with radius n, n a positive integer.

        2B covers the vertical segment [0, 3n) and the horizontal segment
        [0, 2n), which holds 2n unit cells of the integer set.
        """
        self._check_n(n)
        if not 0 < alpha < 1:
            raise OracleDomainError("closed form needs alpha in (0, 1)")
        if int(n) != n:
            raise OracleDomainError("doubling ratio closed form needs integer n")
        cell = 2 * 0.5 ** (1 - alpha) / (1 - alpha)
        big = (3 * n) ** (1 - alpha) / (1 - alpha) + 2 * n * cell
        return big / self.exact_weight_integral(n, alpha)


def cross_space(Tmax: float, h: float):
    """Union of the two coordinate half-axes up to Tmax, with the l-infinity metric.

    Points (t, 0) and (0, s) sit at distance max(t, s), which is exactly the
    Chebyshev distance of their planar coordinates.  E is the set of integer
    points on the horizontal axis, origin included.
    """
    if Tmax < 4:
        raise InputError("Tmax must be >= 4")
    if h > 1 / 4:
        raise InputError("h must be <= 1/4")
    notes = []
    h = _snap_step(h, notes)
    m = int(round(Tmax / h))
    t = h * np.arange(m + 1)
    s = h * np.arange(1, m + 1)
    coords = np.vstack([np.column_stack([t, np.zeros_like(t)]),
                        np.column_stack([np.zeros_like(s), s])])
    space = MetricMeasureSpace(coords, np.full(len(coords), h), h=h, diameter_hint=Tmax,
                               name=f"cross:Tmax={Tmax:g},h={h!r}", notes=notes)
    q = round(1 / h)
    idx = np.arange(m + 1)
    E = TargetSet(space, idx[idx % q == 0])
    return space, E, AnalyticOracle(float(Tmax))


def horizontal_id(space: MetricMeasureSpace, t: float) -> int:
    """Id of the cross-space sample (t, 0)."""
    return int(round(t / space.h))


def vertical_id(space: MetricMeasureSpace, s: float) -> int:
    """Id of the cross-space sample (0, s), s > 0."""
    m = (space.n_points - 1) // 2
    return m + int(round(s / space.h))


def cantor_set(level: int, h: float | None = None):
    """Samples of [0, 1] with E = endpoints of the level-``level`` middle-thirds intervals."""
    if level < 1:
        raise InputError("level must be >= 1")
    if h is None:
        h = 3.0 ** -(level + 2)
    if h > 3.0 ** -level + 1e-15:
        raise InputError("h must be <= 3^-level")
    q = max(1, round(1 / h))
    h = 1.0 / q
    space = segment(0.0, 1.0, h, name=f"cantor:level={level},h={h!r}")
    intervals = [(0.0, 1.0)]
    for _ in range(level):
        intervals = [piece for a, b in intervals
                     for piece in ((a, a + (b - a) / 3), (b - (b - a) / 3, b))]
    ends = sorted({e for iv in intervals for e in iv})
    ids = [space.nearest([e]) for e in ends]
    return space, TargetSet(space, ids)


def random_cloud(n: int, dim: int = 2, seed: int = 0) -> MetricMeasureSpace:
    """n uniform points in the unit cube, unit masses, l-infinity metric."""
    if n < 2:
        raise InputError("n must be >= 2")
    if dim not in (1, 2):
        raise InputError("dim must be 1 or 2")
    rng = np.random.default_rng(seed)
    coords = rng.random((n, dim))
    return MetricMeasureSpace(coords, np.ones(n), name=f"random:n={n},dim={dim},seed={seed}")


def cross_ball(space, n: float, scale: float = 1.0) -> Ball:
    """Ball centred at (n, 0) with radius scale*n."""
    return Ball(horizontal_id(space, n), scale * n)


def vertical_ball(space, n: float, scale: float = 1.0) -> Ball:
    """Ball centred at (0, n) with radius scale*n."""
    return Ball(vertical_id(space, n), scale * n)
