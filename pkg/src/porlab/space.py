"""Finite metric measure spaces.

Every space is a weighted point cloud embedded in R^d with a Minkowski
metric (l-infinity by default).  Balls are open, containment between balls is
decided on point sets, and all sup/inf quantities downstream are extrema over
finite families.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .errors import EstimationError, InputError

SQRT2 = math.sqrt(2.0)

_METRICS = {"chebyshev": np.inf, "euclidean": 2.0}


@dataclass(frozen=True)
class Ball:
    center: int
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise InputError(f"ball radius must be positive, got {self.radius}")

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.center, self.radius * factor)


class MetricMeasureSpace:
    """Weighted point cloud with an l-p distance.

    Parameters
    ----------
    coords : (n, d) array
        Ambient coordinates; point ``i`` has id ``i``.
    masses : (n,) array
        Nonnegative point masses.
    h : float, optional
        Resolution.  Defaults to the largest nearest-neighbour distance.
    diameter_hint : float, optional
        Defaults to the diameter of the point set.
    metric : {"chebyshev", "euclidean"}
    """

    def __init__(self, coords, masses=None, h=None, diameter_hint=None,
                 metric="chebyshev", name="space", notes=None):
        coords = np.asarray(coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2 or coords.shape[0] == 0:
            raise InputError("coords must be a nonempty (n, d) array")
        if metric not in _METRICS:
            raise InputError(f"unknown metric {metric!r}")
        n = coords.shape[0]
        masses = np.ones(n) if masses is None else np.asarray(masses, dtype=float)
        if masses.shape != (n,):
            raise InputError("masses must have one entry per point")
        if np.any(masses < 0) or not masses.sum() > 0:
            raise InputError("masses must be nonnegative with positive total")
        self.coords = coords
        self.masses = masses
        self.metric = metric
        self.p = _METRICS[metric]
        self.name = name
        self.notes = list(notes or [])
        self.coords.setflags(write=False)
        self.masses.setflags(write=False)
        self.h = float(h) if h is not None else self._nn_radius()
        self.diameter_hint = float(diameter_hint) if diameter_hint is not None else self.diameter()

    def __repr__(self):
        return f"MetricMeasureSpace({self.name!r}, n={self.n_points}, h={self.h:g})"

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.coords)

    def _nn_radius(self) -> float:
        if self.n_points == 1:
            return 1.0
        d, _ = self.tree.query(self.coords, k=2, p=self.p)
        return float(d[:, 1].max())

    def diameter(self) -> float:
        if self.n_points == 1:
            return 0.0
        if self.metric == "chebyshev":
            return float(np.max(self.coords.max(axis=0) - self.coords.min(axis=0)))
        # bounding-box diagonal: an upper bound, enough for a hint
        return float(np.linalg.norm(self.coords.max(axis=0) - self.coords.min(axis=0)))

    def check_id(self, p: int) -> int:
        if not 0 <= int(p) < self.n_points:
            raise InputError(f"unknown point id {p}")
        return int(p)

    def distances_from(self, p: int, ids=None) -> np.ndarray:
        x = self.coords[self.check_id(p)]
        pts = self.coords if ids is None else self.coords[ids]
        diff = np.abs(pts - x)
        if self.p == np.inf:
            return diff.max(axis=1)
        return np.sqrt((diff * diff).sum(axis=1))

    def distance(self, p: int, q: int) -> float:
        return float(self.distances_from(p, [self.check_id(q)])[0])

    def nearest(self, x) -> int:
        """Id of the sample nearest to ambient coordinates ``x`` (smallest id on ties)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        diff = np.abs(self.coords - x)
        d = diff.max(axis=1) if self.p == np.inf else np.sqrt((diff * diff).sum(axis=1))
        return int(np.argmin(d))

    def ball_points(self, ball: Ball) -> np.ndarray:
        """Sorted ids p with d(center, p) < radius."""
        c = self.check_id(ball.center)
        # query_ball_point is closed (<=); step just below r for the open ball
        r = np.nextafter(ball.radius, 0.0)
        ids = self.tree.query_ball_point(self.coords[c], r, p=self.p)
        return np.sort(np.asarray(ids, dtype=np.intp))

    def ball_counts(self, centers, radii) -> np.ndarray:
        """Number of points in each open ball B(centers[i], radii[i])."""
        r = np.nextafter(np.asarray(radii, dtype=float), 0.0)
        return np.asarray(self.tree.query_ball_point(self.coords[centers], r, p=self.p,
                                                     return_length=True))

    def measure(self, ids) -> float:
        return float(self.masses[ids].sum())

    def ball_measure(self, ball: Ball) -> float:
        return self.measure(self.ball_points(ball))

    def uniform_masses(self) -> bool:
        return bool(np.all(self.masses == self.masses[0]))

    def radius_grid(self, r_min=None, r_max=None, ratio=SQRT2) -> np.ndarray:
        """Geometric grid h * ratio**j restricted to [r_min, r_max]."""
        r_min = self.h if r_min is None else r_min
        r_max = self.diameter_hint if r_max is None else r_max
        if r_max <= 0:
            return np.array([self.h])
        j0 = math.ceil(math.log(r_min / self.h) / math.log(ratio) - 1e-9)
        j1 = math.floor(math.log(r_max / self.h) / math.log(ratio) + 1e-9)
        return np.array([self.h * ratio ** j for j in range(j0, j1 + 1)])

    def summary(self) -> dict:
        return {"name": self.name, "n_points": self.n_points, "h": self.h,
                "diameter_hint": self.diameter_hint, "metric": self.metric,
                "total_mass": self.total_mass}


class TargetSet:
    """A subset E of the points of a space, with cached distance to E."""

    closed_flag = True

    def __init__(self, space: MetricMeasureSpace, members=()):
        members = np.unique(np.asarray(list(members) if not isinstance(members, np.ndarray)
                                       else members, dtype=np.intp))
        for m in members[:1].tolist() + members[-1:].tolist():
            space.check_id(m)
        self.space = space
        self.members = members
        self.mask = np.zeros(space.n_points, dtype=bool)
        self.mask[members] = True

    def __len__(self):
        return len(self.members)

    def __contains__(self, p):
        return bool(self.mask[p])

    @property
    def is_empty(self) -> bool:
        return len(self.members) == 0

    @cached_property
    def distances(self) -> np.ndarray:
        """dist(p, E) for every point p; +inf everywhere when E is empty."""
        if self.is_empty:
            return np.full(self.space.n_points, np.inf)
        tree = cKDTree(self.space.coords[self.members])
        d, _ = tree.query(self.space.coords, k=1, p=self.space.p)
        d[self.members] = 0.0
        return d

    def dist_to_set(self, p: int) -> float:
        return float(self.distances[self.space.check_id(p)])

    def neighborhood(self, r: float) -> np.ndarray:
        """Boolean mask of E_r = {p : dist(p, E) < r}."""
        return self.distances < r


def ball_set_contains(space: MetricMeasureSpace, outer: Ball, inner: Ball) -> bool:
    """True iff the points of ``inner`` are a subset of the points of ``outer``."""
    return bool(np.isin(space.ball_points(inner), space.ball_points(outer),
                        assume_unique=True).all())


@dataclass
class SpaceProfile:
    doubling_constant: float
    annular_probe_table: dict = field(default_factory=dict)
    sample_count: int = 0

    def to_json(self, space: MetricMeasureSpace) -> dict:
        return {"doubling_constant": self.doubling_constant,
                "annular_table": {repr(float(k)): v for k, v in sorted(self.annular_probe_table.items())},
                "h": space.h, "n_points": space.n_points}


def _sample_centers(space, samples, seed):
    rng = np.random.default_rng(seed)
    if samples >= space.n_points:
        return np.arange(space.n_points)
    return np.sort(rng.choice(space.n_points, size=samples, replace=False))


def doubling_constant(space: MetricMeasureSpace, samples: int = 64, seed: int = 0) -> float:
    """max mu(B(x,2r)) / mu(B(x,r)) over sampled centers and r in a geometric grid."""
    if samples < 1:
        raise InputError("samples must be >= 1")
    if space.n_points == 1:
        return 1.0
    centers = _sample_centers(space, samples, seed)
    radii = space.radius_grid(2 * space.h, space.diameter_hint)
    best = None
    for r in radii:
        small = _ball_masses(space, centers, np.full(len(centers), r))
        big = _ball_masses(space, centers, np.full(len(centers), 2 * r))
        ok = small > 0
        if ok.any():
            ratio = float(np.max(big[ok] / small[ok]))
            best = ratio if best is None else max(best, ratio)
    if best is None:
        raise EstimationError("every sampled ball was empty")
    return max(best, 1.0)


def _ball_masses(space, centers, radii):
    if space.uniform_masses():
        return space.ball_counts(centers, radii) * space.masses[0]
    r = np.nextafter(np.asarray(radii, dtype=float), 0.0)
    lists = space.tree.query_ball_point(space.coords[centers], r, p=space.p)
    return np.array([space.masses[ids].sum() for ids in lists])


def annular_decay_probe(space: MetricMeasureSpace, eps: float, samples: int = 64,
                        seed: int = 0, balls=None) -> float:
    """Sampled sup of mu(B(x,s) minus B(x,t)) / mu(B(x,s)) over 1 - t/s <= eps.

    For fixed (x, s) the annulus is largest at t = (1 - eps) s, so only that t
    is evaluated.  ``balls`` overrides the sample set with explicit (center, s)
    pairs.
    """
    if not 0 <= eps < 1:
        raise InputError("eps must lie in [0, 1)")
    if balls is None:
        centers = _sample_centers(space, samples, seed)
        radii = space.radius_grid(2 * space.h, space.diameter_hint)
        pairs = [(c, s) for s in radii for c in centers]
    else:
        pairs = [(b.center, b.radius) if isinstance(b, Ball) else b for b in balls]
    if eps == 0 or not pairs:
        return 0.0
    c = np.array([p[0] for p in pairs])
    s = np.array([p[1] for p in pairs], dtype=float)
    outer = _ball_masses(space, c, s)
    inner = _ball_masses(space, c, (1 - eps) * s)
    ok = outer > 0
    return float(np.max((outer[ok] - inner[ok]) / outer[ok])) if ok.any() else 0.0


def space_profile(space, eps_list=(0.05, 0.1, 0.25, 0.5), samples=64, seed=0) -> SpaceProfile:
    table = {float(e): annular_decay_probe(space, e, samples, seed) for e in eps_list}
    return SpaceProfile(doubling_constant(space, samples, seed), table, samples)


def read_point_csv(path, metric="chebyshev") -> MetricMeasureSpace:
    """Load a point cloud from CSV with columns id, coord..., mass."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if len(header) < 3 or header[0] != "id" or header[-1] != "mass":
        raise InputError(f"{path}: expected header id,<coords...>,mass")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    if data.size == 0:
        raise InputError(f"{path}: no points")
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    if not np.array_equal(data[:, 0], np.arange(len(data))):
        raise InputError(f"{path}: ids must be 0..n-1")
    return MetricMeasureSpace(data[:, 1:-1], data[:, -1], metric=metric, name=str(path))


def write_point_csv(space: MetricMeasureSpace, path):
    d = space.coords.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id"] + [f"x{i}" for i in range(d)] + ["mass"])
        for i in range(space.n_points):
            w.writerow([i] + [repr(float(v)) for v in space.coords[i]] + [repr(float(space.masses[i]))])


def canonical_balls(space: MetricMeasureSpace, count: int | None = None, seed: int = 0,
                    r_min: float | None = None, r_max: float | None = None) -> list:
    """Balls with centres at sample points and radii on the sqrt(2) grid.

    ``count=None`` returns every (centre, radius) pair; otherwise ``count``
    pairs are drawn without replacement.
    """
    radii = space.radius_grid(2 * space.h if r_min is None else r_min, r_max)
    if radii.size == 0:
        raise InputError("empty radius grid")
    total = space.n_points * radii.size
    if count is None or count >= total:
        picks = np.arange(total)
    else:
        rng = np.random.default_rng(seed)
        picks = np.sort(rng.choice(total, size=count, replace=False))
    return [Ball(int(i // radii.size), float(radii[i % radii.size])) for i in picks]
