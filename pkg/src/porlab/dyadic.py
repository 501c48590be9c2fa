"""Nested nets and adjacent systems of half-open dyadic cubes.

A cube is addressed by ``(t, k, index)``: grid ``t``, generation ``k`` and the
id of its reference point, which is a level-``k`` net point.  Each space point
descends from its nearest finest-level net point, and walking that point's
parent links upward labels it at every coarser level.  Partition and
nestedness therefore hold by construction; the containment constants are
measured after the build.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import BuildError, DepthError, InputError, InvariantError
from .fitting import loglog_fit
from .parallel import pmap
from .space import Ball, MetricMeasureSpace

MAX_LEVELS = 64


@dataclass
class DyadicParams:
    theta: float = 0.25
    c0: float = 1.0
    C0: float = 1.0
    T: int = 4
    k_min: int | None = None
    k_max: int | None = None
    seed: int = 0
    # measured after the build
    a: float | None = None
    A: float | None = None

    def validate(self):
        if not 0 < self.theta < 1:
            raise InputError("theta must lie in (0, 1)")
        if not 0 < self.c0 <= self.C0:
            raise InputError("need 0 < c0 <= C0")
        if self.T < 1:
            raise InputError("T must be >= 1")
        if self.k_min is not None and self.k_max is not None and self.k_min > self.k_max:
            raise InputError("k_min must not exceed k_max")

    def to_json(self) -> dict:
        return {"theta": self.theta, "c0": self.c0, "C0": self.C0, "T": self.T,
                "k_min": self.k_min, "k_max": self.k_max, "seed": self.seed,
                "a": self.a, "A": self.A}


@dataclass
class NetHierarchy:
    """Nested nets for generations k_min..k_max.

    ``nets[i]`` holds the sorted ids of the generation ``k_min + i`` net and
    ``parents[i][j]`` the parent id of ``nets[i][j]`` (-1 at the top).
    """

    k_min: int
    nets: list
    parents: list
    order: np.ndarray
    separation: list = field(default_factory=list)
    covering: list = field(default_factory=list)

    @property
    def k_max(self) -> int:
        return self.k_min + len(self.nets) - 1

    @property
    def levels(self) -> range:
        return range(self.k_min, self.k_max + 1)

    def net(self, k: int) -> np.ndarray:
        return self.nets[k - self.k_min]


def _insertion_order(n: int, seed) -> np.ndarray:
    if seed is None:
        return np.arange(n)
    return np.random.default_rng(seed).permutation(n)


def build_net_hierarchy(space: MetricMeasureSpace, params: DyadicParams,
                        seed=None) -> NetHierarchy:
    """Farthest-point nets at scales C0 * theta**k, each level seeded by the coarser one.

    The first point of the seeded permutation starts the top net; ties in the
    farthest-point choice go to the earlier position in the permutation.
    """
    params.validate()
    n = space.n_points
    order = _insertion_order(n, seed)
    rank = np.empty(n, dtype=np.intp)
    rank[order] = np.arange(n)
    theta, C0 = params.theta, params.C0
    tree, p = space.tree, space.p
    coords = space.coords

    start = int(order[0])
    mind = space.distances_from(start)
    far = float(mind.max())
    if n > 1:
        nn, _ = tree.query(coords, k=2, p=p)
        if float(nn[:, 1].min()) == 0.0:
            raise BuildError("space has coincident points; nets cannot separate them")

    if params.k_min is None and far == 0:
        k_min = 0
    elif params.k_min is None:
        # largest k whose covering radius still exceeds every distance from the start
        k_min = math.floor(math.log(far / C0) / math.log(theta)) if far > 0 else 0
        while C0 * theta ** k_min <= far:
            k_min -= 1
        while C0 * theta ** (k_min + 1) > far:
            k_min += 1
    else:
        k_min = params.k_min

    in_net = np.zeros(n, dtype=bool)
    in_net[start] = True
    mind[start] = 0.0
    net_order = [start]
    nets, parents, seps, covs = [], [], [], []
    k = k_min
    while True:
        s = C0 * theta ** k
        cand = np.flatnonzero(mind >= s)
        heap = [(-mind[i], rank[i], i) for i in cand.tolist()]
        heapq.heapify(heap)
        while heap:
            negd, _, i = heapq.heappop(heap)
            d = -negd
            if in_net[i] or d != mind[i] or d < s:
                continue
            in_net[i] = True
            net_order.append(i)
            mind[i] = 0.0
            nb = np.asarray(tree.query_ball_point(coords[i], d, p=p), dtype=np.intp)
            if nb.size == 0:
                continue
            dd = space.distances_from(i, nb)
            better = dd < mind[nb]
            upd, dupd = nb[better], dd[better]
            mind[upd] = dupd
            for j, dj in zip(upd[dupd >= s].tolist(), dupd[dupd >= s].tolist()):
                heapq.heappush(heap, (-dj, rank[j], j))
        net = np.sort(np.asarray(net_order, dtype=np.intp))
        covs.append(float(mind.max()))
        seps.append(_separation(space, net))
        if nets:
            parents.append(_nearest_parent(space, nets[-1], net))
        else:
            parents.append(np.full(len(net), -1, dtype=np.intp))
        nets.append(net)
        full = len(net) == n
        if params.k_max is not None:
            if full and n > 1 and k < params.k_max:
                raise BuildError(f"resolution too coarse for k_max={params.k_max}: "
                                 f"level {k + 1} would repeat the full net of level {k}")
            if k >= params.k_max:
                break
        elif full:
            break
        if len(nets) >= MAX_LEVELS:
            raise BuildError(f"more than {MAX_LEVELS} levels; check theta and the resolution")
        k += 1
    return NetHierarchy(k_min, nets, parents, order, seps, covs)


def _separation(space, net) -> float:
    if len(net) < 2:
        return math.inf
    d, _ = cKDTree(space.coords[net]).query(space.coords[net], k=2, p=space.p)
    return float(d[:, 1].min())


def _nearest_ids(space, pool, query_ids):
    """For each query id, the nearest id of ``pool`` with ties to the smallest id."""
    pool = np.asarray(pool)
    if len(pool) == 1:
        return np.full(len(query_ids), pool[0], dtype=np.intp), space.distances_from(pool[0], query_ids)
    kq = min(8, len(pool))
    d, j = cKDTree(space.coords[pool]).query(space.coords[query_ids], k=kq, p=space.p)
    cand = pool[j]
    best = d[:, :1]
    # among exact-distance ties keep the smallest id
    masked = np.where(d == best, cand, np.iinfo(np.intp).max)
    return masked.min(axis=1).astype(np.intp), d[:, 0]


def _nearest_parent(space, coarse, fine):
    ids, _ = _nearest_ids(space, coarse, fine)
    return ids


@dataclass(frozen=True, order=True)
class Cube:
    t: int
    k: int
    index: int

    @property
    def generation(self) -> int:
        return self.k

    @property
    def reference_point(self) -> int:
        return self.index

    def to_json(self) -> list:
        return [self.t, self.k, self.index]


@dataclass
class ContainingCube:
    cube: Cube
    adjacency_miss: bool
    coverage: float


class DyadicGrid:
    """One grid of the system: labels[i][x] is the reference id of x's cube at level k_min+i."""

    def __init__(self, t: int, space: MetricMeasureSpace, hierarchy: NetHierarchy):
        self.t = t
        self.space = space
        self.hierarchy = hierarchy
        self.k_min = hierarchy.k_min
        self.k_max = hierarchy.k_max
        n = space.n_points
        L = len(hierarchy.nets)
        self._parent_of = []
        for i in range(L):
            pa = np.full(n, -1, dtype=np.intp)
            pa[hierarchy.nets[i]] = hierarchy.parents[i]
            self._parent_of.append(pa)
        labels = np.empty((L, n), dtype=np.intp)
        labels[-1], _ = _nearest_ids(space, hierarchy.nets[-1], np.arange(n))
        for i in range(L - 1, 0, -1):
            labels[i - 1] = self._parent_of[i][labels[i]]
        self.labels = labels
        self._groups = {}
        self._children = {}

    def li(self, k: int) -> int:
        if not self.k_min <= k <= self.k_max:
            raise InputError(f"generation {k} outside [{self.k_min}, {self.k_max}]")
        return k - self.k_min

    def net(self, k: int) -> np.ndarray:
        return self.hierarchy.net(k)

    def parent_id(self, k: int, index: int) -> int:
        return int(self._parent_of[self.li(k)][index])

    def groups(self, k: int):
        """(order, net, starts, ends) so members of net[j] are order[starts[j]:ends[j]]."""
        g = self._groups.get(k)
        if g is None:
            lab = self.labels[self.li(k)]
            order = np.argsort(lab, kind="stable")
            net = self.net(k)
            sl = lab[order]
            g = (order, net, np.searchsorted(sl, net, "left"), np.searchsorted(sl, net, "right"))
            self._groups[k] = g
        return g

    def members(self, k: int, index: int) -> np.ndarray:
        order, net, starts, ends = self.groups(k)
        j = np.searchsorted(net, index)
        if j >= len(net) or net[j] != index:
            raise InputError(f"no cube with reference point {index} at generation {k}")
        return order[starts[j]:ends[j]]

    def children_ids(self, k: int, index: int) -> np.ndarray:
        if k >= self.k_max:
            return np.empty(0, dtype=np.intp)
        ch = self._children.get(k)
        if ch is None:
            fine = self.net(k + 1)
            pa = self._parent_of[self.li(k + 1)][fine]
            o = np.argsort(pa, kind="stable")
            ch = (pa[o], fine[o])
            self._children[k] = ch
        pa, fine = ch
        lo, hi = np.searchsorted(pa, index, "left"), np.searchsorted(pa, index, "right")
        return fine[lo:hi]


class DyadicSystem:
    def __init__(self, space: MetricMeasureSpace, params: DyadicParams, grids: list):
        self.space = space
        self.params = params
        self.grids = grids
        self.k_min = max(g.k_min for g in grids)
        self.k_max = min(g.k_max for g in grids)
        self.adjacency_misses = 0
        self.adjacency_queries = 0

    @property
    def theta(self) -> float:
        return self.params.theta

    @property
    def T(self) -> int:
        return len(self.grids)

    def grid(self, t: int) -> DyadicGrid:
        return self.grids[t]

    def members(self, Q: Cube) -> np.ndarray:
        return self.grids[Q.t].members(Q.k, Q.index)

    def measure(self, Q: Cube) -> float:
        return self.space.measure(self.members(Q))

    def cubes(self, t: int, k: int) -> list:
        return [Cube(t, k, int(i)) for i in self.grids[t].net(k)]

    def roots(self) -> list:
        return [Q for t, g in enumerate(self.grids) for Q in self.cubes(t, g.k_min)]

    def cube_of(self, t: int, k: int, x: int) -> Cube:
        g = self.grids[t]
        return Cube(t, k, int(g.labels[g.li(k)][x]))

    def parent(self, Q: Cube) -> Cube | None:
        g = self.grids[Q.t]
        if Q.k <= g.k_min:
            return None
        return Cube(Q.t, Q.k - 1, g.parent_id(Q.k, Q.index))

    def children(self, Q: Cube) -> list:
        return [Cube(Q.t, Q.k + 1, int(i)) for i in self.grids[Q.t].children_ids(Q.k, Q.index)]

    def descendants(self, Q0: Cube, depth: int) -> list:
        """D(Q0) down to ``depth`` generations below Q0, Q0 first, coarse to fine."""
        out, frontier = [Q0], [Q0]
        for _ in range(depth):
            frontier = [c for Q in frontier for c in self.children(Q)]
            if not frontier:
                break
            out.extend(frontier)
        return out

    def contains(self, outer: Cube, inner: Cube) -> bool:
        """Set inclusion for same-grid cubes with g(inner) >= g(outer)."""
        if outer.t != inner.t or inner.k < outer.k:
            return False
        g = self.grids[outer.t]
        return bool(g.labels[g.li(outer.k)][inner.index] == outer.index)

    def chain(self, P: Cube, P2: Cube) -> list:
        """Inclusion chain from P up to P2, generations decreasing by one."""
        if P.t != P2.t or P.k < P2.k or not self.contains(P2, P):
            raise InputError(f"{P} is not contained in {P2}")
        g = self.grids[P.t]
        return [Cube(P.t, j, int(g.labels[g.li(j)][P.index])) for j in range(P.k, P2.k - 1, -1)]

    def level_for_radius(self, r: float) -> int:
        """Generation k with theta^(k+2) < r <= theta^(k+1)."""
        x = math.log(r) / math.log(self.theta)
        k = math.ceil(x - 1 - 1e-12)
        while self.theta ** (k + 1) < r:
            k -= 1
        while self.theta ** (k + 2) >= r:
            k += 1
        return k

    def containing_cube(self, B: Ball) -> ContainingCube:
        top = self.theta ** (self.k_min + 1)
        if not (self.space.h * (1 - 1e-12) <= B.radius <= top * (1 + 1e-12)):
            raise InputError(f"radius {B.radius} outside [{self.space.h}, {top}]")
        k = min(max(self.level_for_radius(B.radius), self.k_min), self.k_max)
        ids = self.space.ball_points(B)
        best = None
        for t, g in enumerate(self.grids):
            lab = g.labels[g.li(k)][ids]
            if np.all(lab == lab[0]):
                self.adjacency_queries += 1
                return ContainingCube(Cube(t, k, int(lab[0])), False, 1.0)
            vals, counts = np.unique(lab, return_counts=True)
            j = int(np.argmax(counts))
            cov = counts[j] / len(ids)
            if best is None or cov > best[0]:
                best = (cov, Cube(t, k, int(vals[j])))
        self.adjacency_queries += 1
        self.adjacency_misses += 1
        return ContainingCube(best[1], True, float(best[0]))

    @property
    def adjacency_miss_rate(self) -> float:
        return self.adjacency_misses / self.adjacency_queries if self.adjacency_queries else 0.0

    def fit_cube_in_ball(self, B: Ball, Q: Cube) -> Cube:
        """Coarsest cube of D(Q) that contains B's centre and lies inside B."""
        ball = self.space.ball_points(B)
        qmem = self.members(Q)
        if not (np.isin(ball, qmem, assume_unique=True).all() and len(ball) < len(qmem)):
            raise InputError("ball must be strictly contained in the cube")
        g = self.grids[Q.t]
        for j in range(Q.k + 1, g.k_max + 1):
            cand = self.cube_of(Q.t, j, B.center)
            if np.isin(self.members(cand), ball, assume_unique=True).all():
                bound = 2 * self.params.A / self.theta * self.theta ** j
                if not B.radius <= bound * (1 + 1e-12):
                    raise InvariantError(f"fitted cube {cand} violates r <= (2A/theta) theta^g: "
                                         f"{B.radius} > {bound}")
                return cand
        raise DepthError(f"no cube below {Q} fits inside {B}")

    def epsilon_boundary_measure(self, Q: Cube, lam: float) -> float:
        if lam <= 0:
            raise InputError("lambda must be positive")
        mem = self.members(Q)
        if len(mem) == self.space.n_points:
            return 0.0
        d = self._complement_distance(Q.t, Q.k)[mem]
        near = d <= lam * self.theta ** Q.k
        return self.space.measure(mem[near]) / self.space.measure(mem)

    def _complement_distance(self, t: int, k: int) -> np.ndarray:
        cache = self.__dict__.setdefault("_cdist", {})
        key = (t, k)
        if key not in cache:
            g = self.grids[t]
            cache[key] = distance_to_other_label(self.space, g.labels[g.li(k)])
        return cache[key]

    def to_json(self) -> dict:
        return {"params": self.params.to_json(),
                "k_min": self.k_min, "k_max": self.k_max,
                "net_sizes": [[len(n) for n in g.hierarchy.nets] for g in self.grids],
                "adjacency_miss_rate": self.adjacency_miss_rate,
                "adjacency_queries": self.adjacency_queries}

    def cube_rows(self):
        """(t, k, index, reference point, member count, measure) for every cube."""
        for t, g in enumerate(self.grids):
            for k in range(g.k_min, g.k_max + 1):
                lab = g.labels[g.li(k)]
                net = g.net(k)
                counts = np.bincount(lab, minlength=self.space.n_points)[net]
                meas = np.bincount(lab, weights=self.space.masses, minlength=self.space.n_points)[net]
                for i, c, m in zip(net.tolist(), counts.tolist(), meas.tolist()):
                    yield t, k, i, i, c, m


def distance_to_other_label(space: MetricMeasureSpace, labels: np.ndarray) -> np.ndarray:
    """For every point, the distance to the nearest point carrying a different label."""
    n = space.n_points
    out = np.full(n, np.inf)
    if n < 2 or np.all(labels == labels[0]):
        return out
    todo = np.arange(n)
    for kk in (2, 8, 32):
        if not todo.size:
            return out
        kk = min(kk, n)
        d, j = space.tree.query(space.coords[todo], k=kk, p=space.p)
        other = labels[j] != labels[todo][:, None]
        hit = other.any(axis=1)
        first = np.argmax(other, axis=1)
        out[todo[hit]] = d[hit, first[hit]]
        todo = todo[~hit]
    # Deep interior points of big cubes.  With an anchor point o of the group,
    # R = max d(o, x) over the group and y0 any other-label point, the answer
    # for x lies within 2R + d(o, y0) of o, so only that window is searched.
    todo = todo[np.argsort(labels[todo], kind="stable")]
    labs, starts = np.unique(labels[todo], return_index=True)
    for lab, q in zip(labs.tolist(), np.split(todo, starts[1:])):
        anchor = q[0]
        R = float(space.distances_from(anchor, q).max())
        r = max(2 * R, space.h)
        while True:
            near = np.asarray(space.tree.query_ball_point(space.coords[anchor], r, p=space.p),
                              dtype=np.intp)
            if np.any(labels[near] != lab):
                break
            r *= 2
        window = np.asarray(space.tree.query_ball_point(space.coords[anchor], 2 * R + r, p=space.p),
                            dtype=np.intp)
        rest = window[labels[window] != lab]
        out[q], _ = cKDTree(space.coords[rest]).query(space.coords[q], k=1, p=space.p)
    return out


def _measure_constants(system: DyadicSystem):
    theta = system.theta
    a, A = math.inf, 0.0
    for t, g in enumerate(system.grids):
        for k in range(g.k_min, g.k_max + 1):
            lab = g.labels[g.li(k)]
            net = g.net(k)
            scale = theta ** k
            diff = np.abs(system.space.coords - system.space.coords[lab])
            dist = diff.max(axis=1) if system.space.p == np.inf else np.sqrt((diff * diff).sum(axis=1))
            A = max(A, float(dist.max()) / scale)
            dout = system._complement_distance(t, k)[net]
            fin = dout[np.isfinite(dout)]
            if fin.size:
                a = min(a, float(fin.min()) / scale)
    if not math.isfinite(a):
        # a single cube at every level: any a up to the top scale works
        a = 1.0
    # outer balls are open, so A must strictly exceed every member distance
    A = A * (1 + 1e-9) if A > 0 else 1e-9
    return a, A


def build_dyadic_system(space: MetricMeasureSpace, params: DyadicParams | None = None,
                        threads=None) -> DyadicSystem:
    """Build T seeded grids and measure their containment constants."""
    params = DyadicParams() if params is None else params
    params.validate()
    seeds = [None if params.seed is None else (params.seed, t) for t in range(params.T)]

    def one(t):
        return DyadicGrid(t, space, build_net_hierarchy(space, params, seeds[t]))

    grids = pmap(one, range(params.T), threads)
    system = DyadicSystem(space, params, grids)
    params.a, params.A = _measure_constants(system)
    if not 0 < params.a < params.A:
        raise InvariantError(f"measured constants violate 0 < a < A: a={params.a}, A={params.A}")
    return system


# ---------------------------------------------------------------- invariants

@dataclass
class InvariantReport:
    partition: bool = True
    nestedness: bool = True
    containment: bool = True
    separation: bool = True
    covering: bool = True
    parent_distance: bool = True
    nested_pairs_checked: int = 0
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (self.partition and self.nestedness and self.containment and self.separation
                and self.covering and self.parent_distance)

    def to_json(self) -> dict:
        return {"ok": self.ok, "partition": self.partition, "nestedness": self.nestedness,
                "containment": self.containment, "separation": self.separation,
                "covering": self.covering, "parent_distance": self.parent_distance,
                "nested_pairs_checked": self.nested_pairs_checked,
                "failures": self.failures[:20]}


def check_invariants(system: DyadicSystem, pairs: int = 1000, seed: int = 0) -> InvariantReport:
    rep = InvariantReport()
    space, theta, P = system.space, system.theta, system.params
    n = space.n_points
    total = space.total_mass
    for t, g in enumerate(system.grids):
        h = g.hierarchy
        for k in range(g.k_min, g.k_max + 1):
            i = g.li(k)
            lab = g.labels[i]
            net = g.net(k)
            # every label names a net point, and the cubes' measures add up
            if not np.isin(lab, net).all():
                rep.partition = False
                rep.failures.append(f"grid {t} level {k}: label outside the net")
            counts = np.bincount(lab, minlength=n)
            if counts.sum() != n or np.any(counts[net] == 0):
                rep.partition = False
                rep.failures.append(f"grid {t} level {k}: empty cube or lost point")
            meas = np.bincount(lab, weights=space.masses, minlength=n)
            if not math.isclose(float(meas.sum()), total, rel_tol=1e-12):
                rep.partition = False
                rep.failures.append(f"grid {t} level {k}: measures do not add up")
            if i > 0:
                # parent consistency is what makes the cubes nest
                pa = g._parent_of[i][lab]
                if not np.array_equal(pa, g.labels[i - 1]):
                    rep.nestedness = False
                    rep.failures.append(f"grid {t} level {k}: labels disagree with parents")
                dpar = np.array([space.distance(z, q) for z, q in zip(net.tolist(), h.parents[i].tolist())]) \
                    if len(net) < 2000 else _pair_dist(space, net, h.parents[i])
                if np.any(dpar >= P.c0 * theta ** (k - 1)):
                    rep.parent_distance = False
                    rep.failures.append(f"grid {t} level {k}: parent farther than c0*theta^(k-1)")
            if h.separation[i] < P.c0 * theta ** k:
                rep.separation = False
                rep.failures.append(f"grid {t} level {k}: separation {h.separation[i]}")
            if h.covering[i] >= P.C0 * theta ** k:
                rep.covering = False
                rep.failures.append(f"grid {t} level {k}: covering {h.covering[i]}")
            diff = np.abs(space.coords - space.coords[lab])
            dist = diff.max(axis=1) if space.p == np.inf else np.sqrt((diff * diff).sum(axis=1))
            if np.any(dist >= P.A * theta ** k):
                rep.containment = False
                rep.failures.append(f"grid {t} level {k}: member outside A-ball")
            dout = system._complement_distance(t, k)[net]
            if np.any(dout < P.a * theta ** k * (1 - 1e-12)):
                rep.containment = False
                rep.failures.append(f"grid {t} level {k}: a-ball leaks out of its cube")
    if not rep.partition:
        # labels that name no cube make the sampled pairs meaningless
        return rep
    checked, ok = sample_nested_pairs(system, pairs, seed)
    rep.nested_pairs_checked = checked
    if not ok:
        rep.nestedness = False
        rep.failures.append("sampled cube pair neither nested nor disjoint")
    return rep


def _pair_dist(space, a, b):
    diff = np.abs(space.coords[a] - space.coords[b])
    return diff.max(axis=1) if space.p == np.inf else np.sqrt((diff * diff).sum(axis=1))


def sample_nested_pairs(system: DyadicSystem, pairs: int, seed: int = 0):
    """Check containment-or-disjointness on random same-grid pairs by point sets."""
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(pairs):
        t = int(rng.integers(system.T))
        g = system.grids[t]
        k = int(rng.integers(g.k_min, g.k_max + 1))
        l = int(rng.integers(k, g.k_max + 1))
        Q = system.cube_of(t, k, int(rng.integers(system.space.n_points)))
        # bias the finer cube towards Q so both outcomes get exercised
        pool = system.members(Q) if rng.random() < 0.5 else np.arange(system.space.n_points)
        Q2 = system.cube_of(t, l, int(pool[rng.integers(len(pool))]))
        inside = np.isin(system.members(Q2), system.members(Q), assume_unique=True)
        if not (inside.all() or not inside.any()):
            ok = False
    return pairs, ok


# ------------------------------------------------------------- epsilon boundary

@dataclass
class BoundaryFit:
    lambdas: list
    ratios: list
    max_ratios: list
    eta: float
    C: float
    r2: float
    dominates: bool
    cubes_used: int

    def to_json(self) -> dict:
        return {"lambdas": self.lambdas, "ratios": self.ratios, "max_ratios": self.max_ratios,
                "eta": self.eta, "C": self.C, "r2": self.r2, "dominates": self.dominates,
                "cubes_used": self.cubes_used}


def epsilon_boundary_fit(system: DyadicSystem, lambdas=None, min_members: int = 2) -> BoundaryFit:
    """Fit ratio ~ C lambda^eta, pooling every proper cube with at least ``min_members`` points.

    The pooled ratio at each lambda is the boundary-layer measure summed over
    cubes divided by the summed cube measure.  C is then raised until the
    power law dominates every pooled ratio.
    """
    lambdas = [2.0 ** -j for j in range(1, 7)] if lambdas is None else list(lambdas)
    space = system.space
    num = np.zeros(len(lambdas))
    den = 0.0
    mx = np.zeros(len(lambdas))
    used = 0
    for t, g in enumerate(system.grids):
        for k in range(g.k_min, g.k_max + 1):
            lab = g.labels[g.li(k)]
            net = g.net(k)
            counts = np.bincount(lab, minlength=space.n_points)
            if len(net) < 2:
                continue
            keep = np.zeros(space.n_points, dtype=bool)
            keep[net[counts[net] >= min_members]] = True
            sel = keep[lab]
            if not sel.any():
                continue
            used += int(keep.sum())
            d = system._complement_distance(t, k)
            den += float(space.masses[sel].sum())
            per_cube = np.bincount(lab[sel], weights=space.masses[sel], minlength=space.n_points)
            for i, lam in enumerate(lambdas):
                near = sel & (d <= lam * system.theta ** k)
                num[i] += float(space.masses[near].sum())
                layer = np.bincount(lab[near], weights=space.masses[near], minlength=space.n_points)
                cubes = np.flatnonzero(keep)
                mx[i] = max(mx[i], float(np.max(layer[cubes] / per_cube[cubes])))
    if den == 0:
        raise InputError("no proper cubes with enough members to measure")
    ratios = num / den
    fit = loglog_fit(lambdas, ratios)
    eta = fit.slope
    lam = np.asarray(lambdas)
    pos = ratios > 0
    C = float(np.max(ratios[pos] / lam[pos] ** eta)) if pos.any() else 0.0
    dominates = bool(np.all(C * lam ** eta >= ratios * (1 - 1e-12)))
    return BoundaryFit(list(map(float, lambdas)), [float(v) for v in ratios],
                       [float(v) for v in mx], float(eta), C, fit.r2, dominates, used)
