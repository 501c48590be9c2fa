"""Maximal E-free holes in balls and cubes, and their doubling diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .dyadic import Cube, DyadicSystem
from .errors import EstimationError, InputError, InvariantError
from .fitting import loglog_fit
from .parallel import pmap
from .space import Ball, MetricMeasureSpace, TargetSet, ball_set_contains

INF = math.inf


@dataclass
class HoleReport:
    ball: Ball
    h_value: float
    witness: Ball | None
    radius_grid: float | None = None

    def to_json(self) -> dict:
        w = None if self.witness is None else [self.witness.center, self.witness.radius]
        return {"center": self.ball.center, "R": self.ball.radius, "h_E": self.h_value,
                "witness": w, "radius_grid": self.radius_grid}


def free_radii(space: MetricMeasureSpace, E: TargetSet, B: Ball):
    """Ids y of B minus E with the largest r such that B(y, r) sits inside B minus E.

    That radius is min(dist(y, E), dist(y, X minus B)), capped at 2R.  Points
    outside B(x, 3R) are farther than 2R from every y in B, so only the
    annulus B(x, 3R) minus B is searched for the outside distance.
    """
    ids = space.ball_points(B)
    y = ids[~E.mask[ids]]
    if y.size == 0:
        return y, np.empty(0)
    rho = np.minimum(E.distances[y], 2 * B.radius)
    shell = space.ball_points(Ball(B.center, 3 * B.radius))
    outside = shell[~np.isin(shell, ids, assume_unique=True)]
    if outside.size:
        d_out, _ = cKDTree(space.coords[outside]).query(space.coords[y], k=1, p=space.p)
        rho = np.minimum(rho, d_out)
    return y, rho


def max_free_hole(space: MetricMeasureSpace, E: TargetSet, B: Ball,
                  grid_ratio: float | None = None, check: bool = True) -> HoleReport:
    """Exact discrete h_E(B) with a witnessing E-free ball (smallest centre id on ties).

    With ``grid_ratio`` the value is rounded down to the radius grid
    h * grid_ratio**j.
    """
    y, rho = free_radii(space, E, B)
    if y.size == 0:
        return HoleReport(B, 0.0, None, grid_ratio)
    j = int(np.argmax(rho))  # first maximum is the smallest id since ids are sorted
    val = float(rho[j])
    if grid_ratio is not None:
        e = math.floor(math.log(val / space.h) / math.log(grid_ratio) + 1e-12)
        val = min(val, space.h * grid_ratio ** e)
    witness = Ball(int(y[j]), val)
    if check:
        _check_witness(space, E, B, witness)
    return HoleReport(B, val, witness, grid_ratio)


def _check_witness(space, E, B, w: Ball):
    if w.radius > 2 * B.radius * (1 + 1e-12):
        raise InvariantError(f"hole radius {w.radius} exceeds 2R")
    pts = space.ball_points(w)
    if E.mask[pts].any() or not ball_set_contains(space, B, w):
        raise InvariantError(f"witness {w} is not an E-free sub-ball of {B}")


def hole_table(space, E, balls, threads=None) -> list:
    return pmap(lambda b: max_free_hole(space, E, b), balls, threads)


# ------------------------------------------------------------------ dyadic

@dataclass
class DyadicHoleReport:
    cube: Cube
    g_value: float
    witness: Cube | None
    exhausted: bool = False

    def to_json(self) -> dict:
        return {"cube": self.cube.to_json(),
                "g_E": None if math.isinf(self.g_value) else int(self.g_value),
                "exhausted": self.exhausted,
                "witness": None if self.witness is None else self.witness.to_json()}


class GETable:
    """g_E for every cube of a system, computed bottom-up per grid.

    ``values(t, k)`` is aligned with ``system.grid(t).net(k)``; +inf marks
    cubes without an E-free descendant down to the finest generation.
    """

    def __init__(self, system: DyadicSystem, E: TargetSet):
        self.system = system
        self.E = E
        n = system.space.n_points
        self._vals = []
        self._ecount = []
        for g in system.grids:
            L = g.k_max - g.k_min + 1
            vals, ecount = [None] * L, [None] * L
            below = None
            for k in range(g.k_max, g.k_min - 1, -1):
                i = g.li(k)
                net = g.net(k)
                cnt = np.bincount(g.labels[i][E.members], minlength=n)[net] if len(E) else np.zeros(len(net), int)
                ecount[i] = cnt
                v = np.full(len(net), INF)
                if below is not None:
                    # min over children, scattered through the children's parent ids
                    fine_net, fine_vals = g.net(k + 1), below
                    pa = g._parent_of[i + 1][fine_net]
                    pos = np.searchsorted(net, pa)
                    np.minimum.at(v, pos, fine_vals)
                v[cnt == 0] = k
                vals[i] = v
                below = v
            self._vals.append(vals)
            self._ecount.append(ecount)

    def _pos(self, Q: Cube) -> int:
        g = self.system.grid(Q.t)
        net = g.net(Q.k)
        j = int(np.searchsorted(net, Q.index))
        if j >= len(net) or net[j] != Q.index:
            raise InputError(f"unknown cube {Q}")
        return j

    def values(self, t: int, k: int) -> np.ndarray:
        return self._vals[t][self.system.grid(t).li(k)]

    def g_E(self, Q: Cube) -> float:
        return float(self.values(Q.t, Q.k)[self._pos(Q)])

    def e_count(self, Q: Cube) -> int:
        return int(self._ecount[Q.t][self.system.grid(Q.t).li(Q.k)][self._pos(Q)])

    def is_free(self, Q: Cube) -> bool:
        return self.e_count(Q) == 0

    def free_mask(self, t: int, k: int) -> np.ndarray:
        """E-free flags aligned with the level-k net."""
        return self._ecount[t][self.system.grid(t).li(k)] == 0


def dyadic_max_free_generation(system: DyadicSystem, E: TargetSet, Q0: Cube,
                               depth: int = 12, table: GETable | None = None) -> DyadicHoleReport:
    """Smallest generation of an E-free cube in D(Q0) within ``depth`` generations."""
    if depth < 0:
        raise InputError("depth must be >= 0")
    table = GETable(system, E) if table is None else table
    g = table.g_E(Q0)
    if math.isinf(g) or g > Q0.k + depth:
        return DyadicHoleReport(Q0, INF, None, exhausted=True)
    g = int(g)
    # the witness is the first E-free cube on a descent along minimal children
    Q = Q0
    while Q.k < g:
        Q = min((c for c in system.children(Q) if table.g_E(c) == g), key=lambda c: c.index)
    if not table.is_free(Q):
        raise InvariantError(f"witness {Q} meets E")
    return DyadicHoleReport(Q0, float(g), Q)


# -------------------------------------------------------------- doubling

@dataclass
class DoublingProfile:
    ratios: list = field(default_factory=list)
    b: float | None = None
    d: float | None = None
    r2: float | None = None
    residuals: list = field(default_factory=list)
    doubling_constant_C: float | None = None
    is_doubling: bool | None = None
    growth_slope: float | None = None
    skipped: list = field(default_factory=list)
    dyadic_m: int | None = None

    def to_json(self) -> dict:
        return {"ratios": self.ratios, "b": self.b, "d": self.d, "r2": self.r2,
                "residuals": self.residuals, "doubling_constant_C": self.doubling_constant_C,
                "is_doubling": self.is_doubling, "growth_slope": self.growth_slope,
                "skipped": self.skipped, "dyadic_m": self.dyadic_m}


def hole_doubling_profile(space: MetricMeasureSpace, E: TargetSet, centers, R,
                          L_list=(2.0,), growth_threshold: float = 0.5, threads=None) -> DoublingProfile:
    """Ratios h_E(L B)/h_E(B) over centres and dilations, with a power-law fit.

    ``R`` is one radius or one per centre.  When the base radii vary, the
    L = 2 ratio is regressed on the base radius in log-log; a slope above
    ``growth_threshold`` means the ratio grows without bound along the family
    and h_E is declared not doubling.
    """
    centers = [int(c) for c in centers]
    radii = np.broadcast_to(np.asarray(R, dtype=float), (len(centers),))
    L_list = [float(L) for L in L_list]
    if any(L < 1 for L in L_list):
        raise InputError("dilations must be >= 1")

    def one(i):
        c, r = centers[i], float(radii[i])
        base = max_free_hole(space, E, Ball(c, r)).h_value
        if base == 0:
            return c, r, None, []
        return c, r, base, [max_free_hole(space, E, Ball(c, L * r)).h_value / base for L in L_list]

    prof = DoublingProfile()
    xs, ys, base_r, at2 = [], [], [], []
    for c, r, base, rats in pmap(one, range(len(centers)), threads):
        if base is None:
            prof.skipped.append({"center": c, "R": r, "note": "h_E = 0 at base scale"})
            continue
        for L, q in zip(L_list, rats):
            prof.ratios.append({"center": c, "R": r, "L": L, "ratio": q})
            xs.append(L)
            ys.append(q)
            if L == 2.0:
                base_r.append(r)
                at2.append(q)
    if not ys:
        raise EstimationError("every centre had h_E = 0 at its base scale")
    if len(set(xs)) >= 2:
        fit = loglog_fit(xs, ys)
        prof.d = max(fit.slope, 0.0)
        prof.r2 = fit.r2
        prof.residuals = fit.residuals
        prof.b = float(max(q / L ** prof.d for L, q in zip(xs, ys)))
    if at2:
        prof.doubling_constant_C = float(max(at2))
        if len(set(base_r)) >= 2:
            g = loglog_fit(base_r, at2)
            prof.growth_slope = g.slope
            prof.is_doubling = bool(g.slope <= growth_threshold)
    return prof


@dataclass
class DyadicDoublingCheck:
    m: int
    pairs_checked: int
    inconclusive_pairs: int
    witness: tuple | None
    per_generation: dict
    chain_checked: int
    chain_ok: bool

    def to_json(self) -> dict:
        return {"m": self.m, "pairs_checked": self.pairs_checked,
                "inconclusive_pairs": self.inconclusive_pairs,
                "witness": None if self.witness is None else [q.to_json() for q in self.witness],
                "per_generation": {str(k): v for k, v in sorted(self.per_generation.items())},
                "chain_checked": self.chain_checked, "chain_ok": self.chain_ok}


def dyadic_hole_doubling_check(system: DyadicSystem, E: TargetSet, depth: int | None = None,
                               table: GETable | None = None, chain_span: int = 3) -> DyadicDoublingCheck:
    """Smallest m with g_E(Q) <= m + g_E(parent) over all explored parent/child pairs.

    Pairs with an infinite g_E are inconclusive and skipped.  The chain bound
    g_E(Q) <= m (g(Q) - g(Q*)) + g_E(Q*) is then re-checked for ancestors up
    to ``chain_span`` generations above each cube.
    """
    table = GETable(system, E) if table is None else table
    need_max, witness = 1, None
    checked = inconclusive = 0
    per_gen = {}
    for t, g in enumerate(system.grids):
        top = g.k_min
        bottom = g.k_max if depth is None else min(g.k_max, top + depth)
        for k in range(top + 1, bottom + 1):
            net = g.net(k)
            child = table.values(t, k)
            pa = g._parent_of[g.li(k)][net]
            pvals = table.values(t, k - 1)[np.searchsorted(g.net(k - 1), pa)]
            fin = np.isfinite(child) & np.isfinite(pvals)
            inconclusive += int((~fin).sum())
            checked += int(fin.sum())
            if not fin.any():
                continue
            need = child[fin] - pvals[fin]
            j = int(np.argmax(need))
            gen_max = int(need[j])
            per_gen[k - 1] = max(per_gen.get(k - 1, 0), gen_max)
            if gen_max > need_max:
                need_max = gen_max
                witness = (Cube(t, k, int(net[fin][j])), Cube(t, k - 1, int(pa[fin][j])))
    m = need_max
    chain_checked, chain_ok = 0, True
    for t, g in enumerate(system.grids):
        bottom = g.k_max if depth is None else min(g.k_max, g.k_min + depth)
        for k in range(g.k_min + 2, bottom + 1):
            lab = g.labels
            net = g.net(k)
            mine = table.values(t, k)
            for span in range(2, chain_span + 1):
                if k - span < g.k_min:
                    break
                anc = lab[g.li(k - span)][net]
                av = table.values(t, k - span)[np.searchsorted(g.net(k - span), anc)]
                fin = np.isfinite(mine) & np.isfinite(av)
                chain_checked += int(fin.sum())
                if np.any(mine[fin] > m * span + av[fin]):
                    chain_ok = False
    return DyadicDoublingCheck(m, checked, inconclusive, witness, per_gen, chain_checked, chain_ok)
