"""Weak porosity certificates, dyadic families and the key weighted-sum inequality."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dyadic import Cube, DyadicSystem
from .errors import InputError, InvariantError, NoHoleError
from .holes import GETable, free_radii
from .parallel import pmap
from .space import Ball, MetricMeasureSpace, TargetSet

FRACTION_TOL = 1e-9


# ------------------------------------------------------------- ball certificates

@dataclass
class PorosityCertificate:
    ball: Ball
    delta: float
    h_E: float
    family: list
    covered_fraction: float
    label: str = "certified >="

    def to_json(self) -> dict:
        return {"center": self.ball.center, "R": self.ball.radius, "delta": self.delta,
                "h_E": self.h_E, "c": self.covered_fraction, "label": self.label,
                "family": [[b.center, b.radius] for b in self.family]}


def porosity_certificate(space: MetricMeasureSpace, E: TargetSet, B: Ball, delta: float,
                         validate: bool = True) -> PorosityCertificate:
    """Greedy packing of disjoint E-free balls with radii in [delta h_E(B), 2R].

    Every centre y in B minus E offers two candidates: its largest free ball
    and the smallest admissible one.  Candidates are taken by decreasing
    measure when their points are still unused, so the covered fraction is a
    lower bound for the best packing.
    """
    if not 0 < delta < 1:
        raise InputError("delta must lie in (0, 1)")
    y, rho = free_radii(space, E, B)
    hE = float(rho.max()) if rho.size else 0.0
    if hE == 0:
        raise NoHoleError(f"h_E vanishes on {B}")
    rmin = delta * hE
    ok = rho >= rmin
    cy = np.concatenate([y[ok], y[ok]])
    cr = np.concatenate([rho[ok], np.full(int(ok.sum()), rmin)])
    if space.uniform_masses():
        meas = space.ball_counts(cy, cr).astype(float)
    else:
        r = np.nextafter(cr, 0.0)
        meas = np.array([space.masses[ids].sum()
                         for ids in space.tree.query_ball_point(space.coords[cy], r, p=space.p)])
    # larger measure first, then larger radius, then smaller id
    order = np.lexsort((cy, -cr, -meas))
    used = np.zeros(space.n_points, dtype=bool)
    family, covered = [], 0.0
    for i in order.tolist():
        c = int(cy[i])
        if used[c]:
            continue
        b = Ball(c, float(cr[i]))
        pts = space.ball_points(b)
        if used[pts].any():
            continue
        used[pts] = True
        family.append(b)
        covered += space.measure(pts)
    cert = PorosityCertificate(B, delta, hE, family, covered / space.ball_measure(B))
    if validate:
        validate_certificate(space, E, cert)
    return cert


def validate_certificate(space: MetricMeasureSpace, E: TargetSet, cert: PorosityCertificate):
    """Re-check disjointness, containment, E-freeness, radii and the fraction from scratch."""
    outer = set(space.ball_points(cert.ball).tolist())
    seen = set()
    total = 0.0
    for b in cert.family:
        if not cert.delta * cert.h_E * (1 - 1e-12) <= b.radius <= 2 * cert.ball.radius * (1 + 1e-12):
            raise InvariantError(f"radius of {b} outside [delta h_E, 2R]")
        pts = space.ball_points(b).tolist()
        if any(p in seen for p in pts):
            raise InvariantError(f"{b} overlaps an earlier ball")
        if not outer.issuperset(pts):
            raise InvariantError(f"{b} not contained in {cert.ball}")
        if any(E.mask[p] for p in pts):
            raise InvariantError(f"{b} meets E")
        seen.update(pts)
        total += space.measure(pts)
    c = total / space.ball_measure(cert.ball)
    if abs(c - cert.covered_fraction) > FRACTION_TOL:
        raise InvariantError("covered fraction does not match the family")


@dataclass
class ScanResult:
    delta: float
    min_c: float
    witness: Ball | None
    rows: list = field(default_factory=list)
    failures: int = 0

    def to_json(self) -> dict:
        return {"delta": self.delta, "min_c": self.min_c,
                "witness": None if self.witness is None else [self.witness.center, self.witness.radius],
                "balls": len(self.rows), "failures": self.failures}


def porosity_scan(space: MetricMeasureSpace, E: TargetSet, delta: float, balls,
                  threads=None) -> ScanResult:
    """Worst certified fraction over a ball family; balls with no hole count as c = 0."""
    balls = list(balls)
    if not balls:
        raise InputError("empty ball family")

    def one(b):
        try:
            return porosity_certificate(space, E, b, delta).covered_fraction
        except NoHoleError:
            return 0.0

    cs = pmap(one, balls, threads)
    j = int(np.argmin(cs))
    rows = [(b.center, b.radius, c) for b, c in zip(balls, cs)]
    return ScanResult(delta, float(cs[j]), balls[j], rows, sum(1 for c in cs if c == 0.0))


# ------------------------------------------------------------- dyadic families

@dataclass
class DyadicPorosityReport:
    cube: Cube
    M: int
    g_E: float
    F: list
    G: list
    covered_fraction: float
    flags: dict = field(default_factory=dict)
    inconclusive: bool = False

    @property
    def ok(self) -> bool:
        return all(v for v in self.flags.values() if v is not None)

    def to_json(self) -> dict:
        return {"cube": self.cube.to_json(), "M": self.M,
                "g_E": None if math.isinf(self.g_E) else int(self.g_E),
                "F": [q.to_json() for q in self.F], "G": [q.to_json() for q in self.G],
                "c": self.covered_fraction, "flags": self.flags, "inconclusive": self.inconclusive}


def dyadic_families(system: DyadicSystem, E: TargetSet, P: Cube, M: int,
                    table: GETable | None = None, c_check: float | None = None,
                    checks: bool = True) -> DyadicPorosityReport:
    """Maximal E-free cubes F_M(P) down to generation M + g_E(P), and the maximal
    cubes G_M(P) covering the rest of P.

    Each cube is named by its coarsest (t, k, index) label, which collapses
    duplicate presentations of the same point set.
    """
    if M < 0:
        raise InputError("M must be >= 0")
    table = GETable(system, E) if table is None else table
    gE = table.g_E(P)
    if math.isinf(gE):
        return DyadicPorosityReport(P, M, gE, [], [], 0.0, inconclusive=True)
    g = system.grid(P.t)
    L = min(int(gE) + M, g.k_max)
    mem = system.members(P)
    levels = range(P.k, L + 1)
    # cube labels of P's members at every level, and whether each cube is E-free
    labs = {k: g.labels[g.li(k)][mem] for k in levels}
    free = {}
    for k in levels:
        net = g.net(k)
        free[k] = table.free_mask(P.t, k)[np.searchsorted(net, labs[k])]
    U = free[L]
    F = _coarsest_cubes(P.t, mem, labs, free, levels, U)
    # G: coarsest cubes avoiding U; a cube avoids U iff none of its P-members is in U
    n = system.space.n_points
    hitsU = {}
    for k in levels:
        cnt = np.bincount(labs[k][U], minlength=n) if U.any() else np.zeros(n, int)
        hitsU[k] = cnt[labs[k]] == 0
    G = _coarsest_cubes(P.t, mem, labs, hitsU, levels, ~U)
    space = system.space
    muP = space.measure(mem)
    muF = sum(system.measure(Q) for Q in F)
    c = muF / muP
    rep = DyadicPorosityReport(P, M, gE, F, G, c)
    if checks:
        rep.flags = _family_checks(system, table, rep, mem, U, L, c_check)
    return rep


def _coarsest_cubes(t, mem, labs, good, levels, want):
    """For members flagged in ``want``, the coarsest level whose cube is ``good``."""
    done = np.zeros(len(mem), dtype=bool)
    out = set()
    for k in levels:
        hit = want & ~done & good[k]
        if hit.any():
            out.update(Cube(t, k, int(i)) for i in np.unique(labs[k][hit]))
            done |= hit
    if np.any(want & ~done):
        raise InvariantError("some points of the cube were left without a maximal cube")
    return sorted(out)


def _family_checks(system, table, rep, mem, U, L, c_check):
    space = system.space
    P = rep.cube
    flags = {}
    Fpts = [system.members(Q) for Q in rep.F]
    Gpts = [system.members(Q) for Q in rep.G]
    allF = np.concatenate(Fpts) if Fpts else np.empty(0, np.intp)
    allG = np.concatenate(Gpts) if Gpts else np.empty(0, np.intp)
    both = np.concatenate([allF, allG])
    # (a) P is the disjoint union of the two families, exactly in measure
    flags["a_partition"] = bool(np.array_equal(np.sort(both), mem) and math.isclose(
        space.measure(allF) + space.measure(allG), space.measure(mem), rel_tol=1e-12))
    meets_E = not table.is_free(P)
    flags["b_nonempty"] = bool(rep.F) and ((rep.F == [P]) == (not meets_E)) and (bool(rep.G) == meets_E)
    # (c) members of each family are pairwise disjoint
    flags["c_disjoint"] = len(np.unique(allF)) == len(allF) and len(np.unique(allG)) == len(allG)
    # (d) the parent of every G cube meets the union of F
    Umask = np.zeros(space.n_points, dtype=bool)
    Umask[mem[U]] = True
    d_ok = True
    for Q in rep.G:
        par = system.parent(Q)
        if par is None or par.k < P.k or not Umask[system.members(par)].any():
            d_ok = False
    flags["d_parent_meets_F"] = d_ok
    flags["e_F_free"] = all(table.is_free(Q) for Q in rep.F)
    flags["e_G_meets_E"] = all((not table.is_free(Q)) and Q.k <= L for Q in rep.G)
    flags["f_fraction"] = None if c_check is None else bool(rep.covered_fraction >= c_check - FRACTION_TOL)
    return flags


# --------------------------------------------------------- recursive decomposition

@dataclass
class Decomposition:
    Q0: Cube
    M: int
    F: list
    G: list
    residuals: list
    c_meas: float
    terminal: list
    free_measure: float
    reports: dict = field(default_factory=dict)
    partial_cover: bool = False
    flags_ok: bool = True

    @property
    def monotone(self) -> bool:
        r = self.residuals
        return all(r[i + 1] <= r[i] + 1e-12 for i in range(len(r) - 1))

    def to_json(self) -> dict:
        return {"Q0": self.Q0.to_json(), "M": self.M,
                "F_sizes": [len(f) for f in self.F], "G_sizes": [len(g) for g in self.G],
                "residuals": self.residuals, "c_meas": self.c_meas,
                "terminal_cubes": len(self.terminal), "free_measure": self.free_measure,
                "monotone": self.monotone, "partial_cover": self.partial_cover,
                "flags_ok": self.flags_ok}


def recursive_decomposition(system: DyadicSystem, E: TargetSet, Q0: Cube, M: int, K_max: int,
                            table: GETable | None = None, threads=None) -> Decomposition:
    """Iterate F^k = union of F_M(R), G^k = union of G_M(R) over R in G^(k-1), with G^0 = {Q0}.

    Cubes inside E, or with no E-free descendant at the finest generation,
    are terminal: they hold no measure of Q0 minus E that a finer cube could
    reach.
    """
    table = GETable(system, E) if table is None else table
    space = system.space
    mem0 = system.members(Q0)
    free_measure = space.measure(mem0[~E.mask[mem0]])
    Gprev = [Q0]
    Fs, Gs, residuals, terminal = [], [], [], []
    c_meas = 1.0
    covered = 0.0
    reports = {}
    flags_ok = True
    for _ in range(K_max):
        active = [R for R in Gprev if not math.isinf(table.g_E(R))]
        terminal.extend(R for R in Gprev if math.isinf(table.g_E(R)))
        reps = pmap(lambda R: dyadic_families(system, E, R, M, table), active, threads)
        Fk, Gk = [], []
        for R, rep in zip(active, reps):
            reports[R] = rep
            flags_ok = flags_ok and rep.ok
            Fk.extend(rep.F)
            Gk.extend(rep.G)
            c_meas = min(c_meas, rep.covered_fraction)
        covered += sum(system.measure(Q) for Q in Fk)
        Fs.append(Fk)
        Gs.append(Gk)
        res = free_measure - covered
        # summation order differs between the two totals; absorb rounding only
        residuals.append(0.0 if abs(res) <= 1e-12 * max(free_measure, 1.0) else res)
        Gprev = Gk
    return Decomposition(Q0, M, Fs, Gs, residuals, c_meas, terminal, free_measure, reports,
                         partial_cover=bool(residuals and residuals[-1] > 1e-12), flags_ok=flags_ok)


# --------------------------------------------------------------- key inequality

def _beta_conditions(beta, c, m, M, theta):
    q = theta ** (-(m + M) * beta) * (1 - c)
    if q >= 1:
        return q, math.inf
    return q, theta ** (-M * beta) / (1 - q)


def beta_exponent(c: float, m: int, M: int, theta: float) -> float:
    """Largest beta with theta^-(m+M)beta (1-c) < 1 and theta^-M beta / (1 - that) <= 2/c."""
    if not 0 < c <= 1:
        raise InputError("c must lie in (0, 1]")
    if m < 1 or M < 1:
        raise InputError("m and M must be >= 1")
    if not 0 < theta < 1:
        raise InputError("theta must lie in (0, 1)")
    lt = math.log(1 / theta)
    # the second condition alone caps beta at log(2/c) / (M log(1/theta))
    hi = math.log(2 / c) / (M * lt)
    if c < 1:
        hi = min(hi, math.log(1 / (1 - c)) / ((m + M) * lt))
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        _, f = _beta_conditions(mid, c, m, M, theta)
        if f <= 2 / c:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(hi, 1e-300):
            break
    return lo


@dataclass
class KeySumReport:
    Q0: Cube
    gamma: float
    beta: float
    M: int
    m: int
    c: float
    lhs: float
    rhs: float
    K: int
    partial_sums: list
    G_sums: list
    decay_ratios: list
    q: float
    hypothesis_ok: bool
    holds: bool | None
    witness: tuple | None
    notes: list = field(default_factory=list)
    decomposition: Decomposition | None = None

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def to_json(self) -> dict:
        return {"Q0": self.Q0.to_json(), "gamma": self.gamma, "beta": self.beta,
                "M": self.M, "m": self.m, "c": self.c, "lhs": self.lhs, "rhs": self.rhs,
                "slack": self.slack, "K": self.K, "partial_sums": self.partial_sums,
                "G_sums": self.G_sums, "decay_ratios": self.decay_ratios, "q": self.q,
                "hypothesis_ok": self.hypothesis_ok, "holds": self.holds,
                "witness": None if self.witness is None else [q.to_json() for q in self.witness],
                "notes": self.notes,
                "F_sizes": [len(f) for f in self.decomposition.F] if self.decomposition else None}


def key_sum_check(system: DyadicSystem, E: TargetSet, Q0: Cube, M: int, m: int, c: float,
                  gamma: float, K_max: int, table: GETable | None = None,
                  decomposition: Decomposition | None = None) -> KeySumReport:
    """Truncated weighted sum over the F^k families against (2/c) theta^(-g_E(Q0) gamma) mu(Q0).

    The inequality is only asserted when its hypotheses hold on every visited
    cube: g_E doubling with ``m`` on (R, parent of R) for R in some G^k, the
    porosity fraction ``c`` on every decomposed cube, and gamma <= beta.
    """
    table = GETable(system, E) if table is None else table
    theta = system.theta
    beta = beta_exponent(c, m, M, theta)
    dec = decomposition or recursive_decomposition(system, E, Q0, M, K_max, table)
    notes, witness = [], None
    hyp = True
    if gamma <= 0 or gamma > beta * (1 + 1e-12):
        hyp = False
        notes.append(f"gamma={gamma} outside (0, beta={beta}]")
    if dec.c_meas < c - FRACTION_TOL:
        hyp = False
        notes.append(f"measured porosity fraction {dec.c_meas} below c={c}")
    for Gk in dec.G:
        for R in Gk:
            gR = table.g_E(R)
            par = system.parent(R)
            if math.isinf(gR) or par is None:
                continue
            if gR > m + table.g_E(par):
                hyp = False
                witness = (R, par)
                notes.append(f"g_E doubling with m={m} fails at {R}")
                break
        if witness:
            break
    mu = system.measure
    partial = [sum(theta ** (-Q.k * gamma) * mu(Q) for Q in Fk) for Fk in dec.F]
    Gsums = [theta ** (-table.g_E(Q0) * gamma) * mu(Q0)]
    for Gk in dec.G:
        Gsums.append(sum(theta ** (-table.g_E(R) * gamma) * mu(R) for R in Gk
                         if not math.isinf(table.g_E(R))))
    q = theta ** (-(m + M) * gamma) * (1 - c)
    decay = [Gsums[i + 1] / Gsums[i] if Gsums[i] > 0 else 0.0 for i in range(len(Gsums) - 1)]
    lhs = float(sum(partial))
    rhs = 2 / c * theta ** (-table.g_E(Q0) * gamma) * mu(Q0)
    holds = None
    if hyp:
        holds = bool(lhs <= rhs)
        if any(r > q + 1e-9 for r in decay):
            raise InvariantError(f"weighted G-sums decay slower than q={q}: {decay}")
        if not holds:
            raise InvariantError(f"key inequality fails at {Q0}: {lhs} > {rhs}")
    return KeySumReport(Q0, gamma, beta, M, m, c, lhs, rhs, K_max, partial, Gsums, decay, q,
                        hyp, holds, witness, notes, dec)


# --------------------------------------------------------------- absolute porosity

@dataclass
class AbsoluteThreshold:
    b_mu: float
    gap: float
    exponent: int

    def to_json(self) -> dict:
        return {"b_mu": self.b_mu, "one_minus_b_mu": self.gap, "exponent": self.exponent}


def absolute_threshold(C_mu: float, a: float, A: float, theta: float) -> AbsoluteThreshold:
    """b_mu = 1 - C_mu^(-1 - floor(log2(2A / (a theta))))."""
    if C_mu < 1 or a <= 0 or A <= 0 or not 0 < theta < 1:
        raise InputError("need C_mu >= 1, a, A > 0 and theta in (0, 1)")
    e = 1 + math.floor(math.log2(2 * A / (a * theta)))
    gap = C_mu ** (-e)
    return AbsoluteThreshold(1 - gap, gap, e)


def dyadic_porosity_scan(system: DyadicSystem, E: TargetSet, M_list, table: GETable | None = None,
                         cubes=None) -> dict:
    """min over cubes of the F_M fraction, for each M; cubes without E-free descendants are skipped."""
    table = GETable(system, E) if table is None else table
    if cubes is None:
        cubes = [Cube(t, k, int(i)) for t, g in enumerate(system.grids)
                 for k in range(g.k_min, g.k_max + 1) for i in g.net(k)]
    cubes = [Q for Q in cubes if not math.isinf(table.g_E(Q))]
    out = {}
    for M in M_list:
        worst, arg = 1.0, None
        for Q in cubes:
            if table.is_free(Q):
                continue
            rep = dyadic_families(system, E, Q, M, table, checks=False)
            if rep.covered_fraction < worst:
                worst, arg = rep.covered_fraction, Q
        out[int(M)] = {"c": worst, "witness": None if arg is None else arg.to_json()}
    return out


def is_absolutely_dyadic_weakly_porous(scan: dict, threshold: AbsoluteThreshold) -> bool:
    return any(v["c"] >= threshold.b_mu for v in scan.values())
