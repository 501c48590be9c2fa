"""Muckenhoupt diagnostics for power weights w = dist(., E)^-alpha.

Points of E are left out of every sum: w is infinite (or zero) there, and in
the continuum E carries no mass.  Averages are taken over B minus E.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EstimationError, InputError
from .fitting import loglog_fit
from .holes import max_free_hole
from .parallel import pmap
from .space import SQRT2, Ball, MetricMeasureSpace, TargetSet

STABLE_GROWTH = 1.2
DIVERGENT_GROWTH = 1.5


class DegenerateBallError(InputError):
    pass


def _weights(space: MetricMeasureSpace, E: TargetSet, B: Ball, alpha: float):
    if E.is_empty:
        raise InputError("target set is empty: dist(., E) is infinite everywhere")
    ids = space.ball_points(B)
    ids = ids[~E.mask[ids]]
    if ids.size == 0:
        raise DegenerateBallError(f"{B} lies inside E")
    return space.masses[ids], E.distances[ids] ** (-alpha)


def weight_integral(space: MetricMeasureSpace, E: TargetSet, B: Ball, alpha: float) -> float:
    m, w = _weights(space, E, B, alpha)
    return float(np.dot(m, w))


def weight_essinf(space: MetricMeasureSpace, E: TargetSet, B: Ball, alpha: float) -> float:
    return float(_weights(space, E, B, alpha)[1].min())


def a1_factor(space, E, B, alpha) -> float:
    m, w = _weights(space, E, B, alpha)
    return float(np.dot(m, w) / m.sum() / w.min())


def ap_factor(space, E, B, alpha, p) -> float:
    if p == 1:
        return a1_factor(space, E, B, alpha)
    m, w = _weights(space, E, B, alpha)
    tot = m.sum()
    dual = np.dot(m, w ** (1 / (1 - p))) / tot
    return float(np.dot(m, w) / tot * dual ** (p - 1))


@dataclass
class WeightReport:
    alpha: float
    p: float
    constant: float
    argmax_ball: Ball | None
    skipped: int = 0
    resolution_trend: list = field(default_factory=list)
    growth: list = field(default_factory=list)
    verdict: str | None = None
    doubling_profile: list = field(default_factory=list)

    @property
    def a1_constant(self):
        return self.constant if self.p == 1 else None

    @property
    def ap_constant(self):
        return self.constant

    def to_json(self) -> dict:
        b = self.argmax_ball
        return {"alpha": self.alpha, "p": self.p, "constant": self.constant,
                "argmax_ball": None if b is None else [b.center, b.radius],
                "skipped": self.skipped,
                "resolution_trend": [[h, c] for h, c in self.resolution_trend],
                "growth": self.growth, "verdict": self.verdict,
                "doubling_profile": self.doubling_profile}


def _sup(space, E, balls, factor, threads):
    def one(b):
        try:
            return factor(b)
        except DegenerateBallError:
            return None

    vals = pmap(one, list(balls), threads)
    best, arg, skipped = -math.inf, None, 0
    for b, v in zip(balls, vals):
        if v is None:
            skipped += 1
        elif v > best:
            best, arg = v, b
    if arg is None:
        raise EstimationError("every ball in the family was degenerate")
    return best, arg, skipped


def ap_estimate(space: MetricMeasureSpace, E: TargetSet, alpha: float, p: float, balls,
                threads=None) -> WeightReport:
    """sup over the family of avg(w) avg(w^(1/(1-p)))^(p-1); p = 1 gives the A1 quotient."""
    if p < 1:
        raise InputError("p must be >= 1")
    if E.is_empty:
        raise InputError("target set is empty: dist(., E) is infinite everywhere")
    balls = list(balls)
    val, arg, skipped = _sup(space, E, balls, lambda b: ap_factor(space, E, b, alpha, p), threads)
    return WeightReport(alpha, p, val, arg, skipped)


def a1_estimate(space, E, alpha, balls, threads=None) -> WeightReport:
    return ap_estimate(space, E, alpha, 1.0, balls, threads)


def growth_verdict(values) -> tuple:
    """Per-halving growth factors and the stable / divergent / inconclusive verdict."""
    growth = [values[i + 1] / values[i] for i in range(len(values) - 1)]
    if len(growth) < 2:
        return growth, "inconclusive"
    last = growth[-2:]
    if all(g >= DIVERGENT_GROWTH for g in last):
        return growth, "divergent"
    if all(g <= STABLE_GROWTH for g in last):
        return growth, "stable"
    return growth, "inconclusive"


def resolution_trend(build, alpha: float, p: float, ambient_balls, hs, threads=None) -> WeightReport:
    """Run ap_estimate at each resolution in ``hs``.

    ``build(h)`` returns (space, E).  ``ambient_balls`` lists (coordinates,
    radius) pairs; at every resolution each centre snaps to its nearest sample,
    so the family is the same geometric family throughout.
    """
    hs = list(hs)
    if len(hs) < 2:
        raise InputError("need at least two resolutions")
    trend, last = [], None
    for h in hs:
        space, E = build(h)
        balls = [Ball(space.nearest(x), r) for x, r in ambient_balls]
        last = ap_estimate(space, E, alpha, p, balls, threads)
        trend.append((float(space.h), last.constant))
    growth, verdict = growth_verdict([c for _, c in trend])
    last.resolution_trend = trend
    last.growth = growth
    last.verdict = verdict
    return last


def weight_doubling_profile(space: MetricMeasureSpace, E: TargetSet, alpha: float, balls,
                            growth_threshold: float = 0.25) -> dict:
    """w(2B)/w(B) along a ball sequence.

    The trend is flagged non-doubling when the ratios never decrease along
    the sequence and their log-log slope against the radius exceeds
    ``growth_threshold``.
    """
    rows, skipped = [], 0
    for b in balls:
        try:
            r = weight_integral(space, E, b.scaled(2), alpha) / weight_integral(space, E, b, alpha)
        except DegenerateBallError:
            skipped += 1
            continue
        rows.append({"center": b.center, "R": b.radius, "ratio": r})
    slope = None
    trend = False
    if len(rows) >= 2 and len({r["R"] for r in rows}) >= 2:
        slope = loglog_fit([r["R"] for r in rows], [r["ratio"] for r in rows]).slope
        rising = all(rows[i + 1]["ratio"] >= rows[i]["ratio"] for i in range(len(rows) - 1))
        trend = bool(rising and slope > growth_threshold)
    return {"ratios": rows, "slope": slope, "non_doubling_trend": trend, "skipped": skipped}


# ------------------------------------------------------------ Muckenhoupt exponent

@dataclass
class MuEstimate:
    value: float
    slopes: list
    median: float
    aggregation: str
    C_fit: float
    half_width: float
    samples: list = field(default_factory=list)
    note: str | None = None

    def to_json(self) -> dict:
        return {"value": self.value, "median": self.median, "aggregation": self.aggregation,
                "C_fit": self.C_fit, "half_width": self.half_width, "slopes": self.slopes,
                "samples": self.samples, "note": self.note}


def mu_exponent(space: MetricMeasureSpace, E: TargetSet, samples: int = 64, seed: int = 0,
                J: int = 6, R_range=None, threads=None) -> MuEstimate:
    """Decay exponent of mu(E_r cap B) / mu(B) in r / h_E(B) over sampled x in E.

    Radii R come from the sqrt(2) grid between 2^(J+3) h and half the
    diameter hint, so that the smallest r = h_E 2^-J stays resolved.  The
    exponent is the minimum per-sample slope, because the defining bound must
    hold for every ball; the median is reported alongside.
    """
    if E.is_empty:
        raise InputError("target set is empty")
    if samples < 1 or J < 2:
        raise InputError("need samples >= 1 and J >= 2")
    if R_range is None:
        r_lo = 2.0 ** (J + 3) * space.h
        r_hi = space.diameter_hint / 2
        r_lo = min(r_lo, r_hi)
    else:
        r_lo, r_hi = R_range
    radii = space.radius_grid(r_lo, r_hi, SQRT2)
    if radii.size == 0:
        radii = np.array([r_hi])
    rng = np.random.default_rng(seed)
    xs = rng.choice(E.members, size=samples, replace=True)
    Rs = rng.choice(radii, size=samples, replace=True)
    steps = 2.0 ** -np.arange(1, J + 1)

    def one(i):
        B = Ball(int(xs[i]), float(Rs[i]))
        hE = max_free_hole(space, E, B, check=False).h_value
        if hE == 0:
            return None
        ids = space.ball_points(B)
        mb = space.measure(ids)
        d = E.distances[ids]
        ratios = np.array([space.measure(ids[d < hE * s]) / mb for s in steps])
        return hE, ratios

    results = pmap(one, range(samples), threads)
    if any(r is None for r in results):
        return MuEstimate(0.0, [], 0.0, "min", 1.0, 0.0, note="some sampled ball has h_E = 0")
    slopes, errs, rows = [], [], []
    for i, (hE, ratios) in enumerate(results):
        fit = loglog_fit(steps, ratios)
        slopes.append(fit.slope)
        errs.append(fit.stderr)
        rows.append({"x": int(xs[i]), "R": float(Rs[i]), "h_E": hE, "slope": fit.slope})
    j = int(np.argmin(slopes))
    value = max(float(slopes[j]), 0.0)
    C_fit = max(float(np.max(ratios * steps ** -value)) for _, ratios in results)
    return MuEstimate(value, [float(s) for s in slopes], float(np.median(slopes)), "min",
                      C_fit, 2 * float(errs[j]), rows)


# ------------------------------------------------------------------- Ap range

@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_closed: bool = False

    def contains(self, x: float) -> bool:
        return (self.lo <= x if self.lo_closed else self.lo < x) and x < self.hi

    @property
    def empty(self) -> bool:
        return not self.lo < self.hi


def ap_range(mu_value: float, p: float) -> Interval:
    """Exponents alpha for which dist(., E)^-alpha is predicted to be an Ap weight."""
    if p < 1:
        raise InputError("p must be >= 1")
    if mu_value < 0:
        raise InputError("the exponent is nonnegative")
    if p == 1:
        return Interval(0.0, mu_value, lo_closed=True)
    return Interval((1 - p) * mu_value, mu_value)


def classify(alpha: float, p: float, mu_value: float, half_width: float = 0.0) -> str:
    """inside / outside / boundary; within ``half_width`` of an open endpoint is boundary."""
    iv = ap_range(mu_value, p)
    if p == 1 and alpha < 0:
        return "outside"
    ends = [iv.hi] if p == 1 else [iv.lo, iv.hi]
    if any(abs(alpha - e) <= half_width for e in ends):
        return "boundary"
    return "inside" if iv.contains(alpha) else "outside"
