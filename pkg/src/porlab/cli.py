"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 invariant violation, 3 a hypothesis
of the key inequality failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import glob
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import catalog
from .dyadic import DyadicParams, build_dyadic_system, check_invariants, epsilon_boundary_fit
from .errors import InputError, InvariantError, PorlabError
from .holes import GETable, dyadic_hole_doubling_check, hole_doubling_profile, max_free_hole
from .parallel import set_default_threads
from .porosity import (absolute_threshold, beta_exponent, dyadic_porosity_scan,
                       is_absolutely_dyadic_weakly_porous, key_sum_check, porosity_certificate,
                       porosity_scan, recursive_decomposition)
from .report import envelope, report_schema_version, write_csv, write_json
from .space import Ball, TargetSet, canonical_balls, doubling_constant, read_point_csv
from .weights import ap_estimate, classify, ap_range, mu_exponent, resolution_trend, weight_doubling_profile, weight_integral

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT, EXIT_HYPOTHESIS = 0, 1, 2, 3

ANALYSES = ("dyadic-check", "holes", "porosity", "keysum", "weight", "exponent", "example71")


@dataclass
class RunConfig:
    space: str = "cross:Tmax=16,h=0.0625"
    set: str = "default"
    theta: float = 0.25
    c0: float = 1.0
    C0: float = 1.0
    T: int = 4
    depth: int = 12
    analyses: list = field(default_factory=lambda: ["dyadic-check", "holes", "porosity"])
    seed: int = 0
    out: str = "porlab-out"
    resolutions: int = 3
    alpha: float = 0.5
    p: float = 2.0
    delta: list = field(default_factory=lambda: [0.5])
    M: int = 2
    m: int | None = None  # g_E doubling constant; measured when None
    M_max: int = 8
    K_max: int = 8
    n_balls: int = 200
    samples: int = 64
    threads: int | None = None

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


# ------------------------------------------------------------------ parsing

def _kv(body: str) -> dict:
    out = {}
    for part in filter(None, body.split(",")):
        if "=" not in part:
            raise InputError(f"expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _num(d, key, cast, default=None):
    if key not in d:
        if default is None:
            raise InputError(f"missing {key}=")
        return default
    try:
        return cast(eval_fraction(d[key]))
    except (ValueError, ZeroDivisionError):
        raise InputError(f"bad value for {key}: {d[key]!r}") from None


def eval_fraction(s: str) -> float:
    """Parse '0.0625', '1/16' or '2^-10'."""
    s = s.strip()
    if "/" in s:
        a, b = s.split("/", 1)
        return float(a) / float(b)
    if "^" in s:
        a, b = s.split("^", 1)
        return float(a) ** float(b)
    return float(s)


@dataclass
class SpaceSpec:
    kind: str
    args: dict
    builder: object  # callable h -> (space, default E), or None when not refinable

    def build(self, h=None):
        return self.builder(h)


def parse_space(spec: str) -> SpaceSpec:
    if ":" not in spec:
        raise InputError(f"space spec needs kind:args, got {spec!r}")
    kind, body = spec.split(":", 1)
    if kind == "file":
        def b(h):
            sp = read_point_csv(body)
            return sp, TargetSet(sp, [])
        return SpaceSpec(kind, {"path": body}, b)
    d = _kv(body)
    if kind == "cross":
        Tmax, h0 = _num(d, "Tmax", float), _num(d, "h", float)
        return SpaceSpec(kind, d, lambda h: catalog.cross_space(Tmax, h or h0)[:2])
    if kind == "segment":
        N, h0 = _num(d, "N", int), _num(d, "h", float)
        span = int(d["span"]) if "span" in d else None
        return SpaceSpec(kind, d, lambda h: catalog.segment_with_integer_set(N, h or h0, span))
    if kind == "cantor":
        level = _num(d, "level", int)
        h0 = _num(d, "h", float, 3.0 ** -(level + 2))
        return SpaceSpec(kind, d, lambda h: catalog.cantor_set(level, h or h0))
    if kind == "random":
        n, dim, seed = _num(d, "n", int), _num(d, "dim", int, 2), _num(d, "seed", int, 0)

        def b(h):
            sp = catalog.random_cloud(n, dim, seed)
            return sp, TargetSet(sp, [])
        return SpaceSpec(kind, d, b)
    raise InputError(f"unknown space kind {kind!r}")


def parse_set(spec: str, space, default: TargetSet) -> TargetSet:
    if spec == "default":
        return default
    if spec == "empty":
        return TargetSet(space, [])
    if spec == "all":
        return TargetSet(space, np.arange(space.n_points))
    kind, _, body = spec.partition(":")
    try:
        if kind == "ids":
            ids = [int(v) for v in body.split(",") if v.strip()]
        elif kind == "file":
            with open(body) as fh:
                ids = [int(line) for line in fh if line.strip()]
        else:
            raise InputError(f"unknown set spec {spec!r}")
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read set {spec!r}: {exc}") from None
    if any(not 0 <= i < space.n_points for i in ids):
        raise InputError("set ids out of range")
    return TargetSet(space, ids)


# ------------------------------------------------------------------ run state

class Run:
    """Lazily built objects shared between the analyses of one invocation."""

    def __init__(self, cfg: RunConfig, command: str, fault: str | None = None):
        self.cfg = cfg
        self.command = command
        self.fault = fault
        self.spec = parse_space(cfg.space)
        self.space, default_E = self.spec.build()
        self.E = parse_set(cfg.set, self.space, default_E)
        self._system = None
        self._C_mu = None
        self.results = {}
        self.exit = EXIT_OK

    def params(self, T=None) -> DyadicParams:
        c = self.cfg
        return DyadicParams(theta=c.theta, c0=c.c0, C0=c.C0, T=c.T if T is None else T, seed=c.seed)

    @property
    def system(self):
        if self._system is None:
            self._system = build_dyadic_system(self.space, self.params(), self.cfg.threads)
            if self.fault == "partition":
                _inject_partition_fault(self._system)
        return self._system

    @property
    def C_mu(self) -> float:
        if self._C_mu is None:
            self._C_mu = doubling_constant(self.space, self.cfg.samples, self.cfg.seed)
        return self._C_mu

    def measured(self) -> dict:
        s = self.system
        return {"a": s.params.a, "A": s.params.A, "C_mu": self.C_mu, "h": self.space.h,
                "seed": self.cfg.seed, "n_points": self.space.n_points,
                "space_notes": self.space.notes}

    def path(self, name):
        return os.path.join(self.cfg.out, name)

    def emit(self, name, result):
        write_json(self.path(name), envelope(self.command, self.cfg.to_json(), self.measured(), result))

    def flag(self, code):
        self.exit = max(self.exit, code)


def _inject_partition_fault(system):
    """Test hook: relabel one point with an id that is not a net point."""
    g = system.grids[0]
    net = set(g.net(g.k_min).tolist())
    stray = next((i for i in range(system.space.n_points) if i not in net), None)
    if stray is None:
        raise InputError("cannot inject a partition fault into a single-point space")
    g.labels[0][0] = stray


# ------------------------------------------------------------------ analyses

def do_dyadic_check(run: Run) -> dict:
    S = run.system
    inv = check_invariants(S, pairs=1000, seed=run.cfg.seed)
    if not inv.ok:
        run.flag(EXIT_INVARIANT)
        return {"invariants": inv.to_json()}
    rng = np.random.default_rng(run.cfg.seed)
    top = S.theta ** (S.k_min + 1)
    lo = run.space.h
    if lo < top:
        for _ in range(200):
            r = float(np.exp(rng.uniform(np.log(lo), np.log(top))))
            S.containing_cube(Ball(int(rng.integers(run.space.n_points)), r))
    table = GETable(S, run.E)
    out = {"system": S.to_json(), "invariants": inv.to_json()}
    if not run.E.is_empty:
        out["g_E_doubling"] = dyadic_hole_doubling_check(S, run.E, run.cfg.depth, table).to_json()
    try:
        out["epsilon_boundary"] = epsilon_boundary_fit(S).to_json()
    except PorlabError as exc:
        out["epsilon_boundary"] = {"error": str(exc)}
    write_csv(run.path("cubes.csv"), ["t", "k", "index", "reference_point", "members", "measure"],
              S.cube_rows())
    return out


def do_holes(run: Run) -> dict:
    sp, E = run.space, run.E
    balls = canonical_balls(sp, min(run.cfg.n_balls, 200), run.cfg.seed)
    reps = [max_free_hole(sp, E, b) for b in balls]
    write_csv(run.path("holes.csv"), ["center", "R", "h_E", "witness_center", "witness_r"],
              [(r.ball.center, r.ball.radius, r.h_value,
                -1 if r.witness is None else r.witness.center,
                0.0 if r.witness is None else r.witness.radius) for r in reps])
    fits = [b for b in balls if 2 * b.radius <= sp.diameter_hint]
    prof = hole_doubling_profile(sp, E, [b.center for b in fits], [b.radius for b in fits], (2.0, 4.0)) \
        if fits else None
    return {"balls": len(reps), "max_h_E": max(r.h_value for r in reps),
            "doubling_profile": None if prof is None else prof.to_json()}


def do_porosity(run: Run) -> dict:
    sp, E = run.space, run.E
    balls = canonical_balls(sp, run.cfg.n_balls, run.cfg.seed)
    rows, scans = [], []
    for d in run.cfg.delta:
        r = porosity_scan(sp, E, d, balls, run.cfg.threads)
        scans.append(r.to_json())
        w = r.witness
        rows.append((d, r.min_c, w.center, w.radius))
    write_csv(run.path("porosity_frontier.csv"), ["delta", "worst_c", "witness_center", "witness_R"], rows)
    out = {"scans": scans}
    S = run.system
    table = GETable(S, E)
    scan = dyadic_porosity_scan(S, E, range(1, run.cfg.M_max + 1), table)
    th = absolute_threshold(run.C_mu, S.params.a, S.params.A, S.theta)
    out["dyadic_scan"] = scan
    out["absolute_threshold"] = th.to_json()
    out["absolutely_porous"] = is_absolutely_dyadic_weakly_porous(scan, th)
    return out


def do_keysum(run: Run) -> dict:
    S, E, cfg = run.system, run.E, run.cfg
    table = GETable(S, E)
    chk = dyadic_hole_doubling_check(S, E, None, table)
    m = chk.m if cfg.m is None else cfg.m
    roots = []
    for Q0 in S.roots():
        if math.isinf(table.g_E(Q0)):
            roots.append({"Q0": Q0.to_json(), "skipped": "no E-free descendant"})
            continue
        dec = recursive_decomposition(S, E, Q0, cfg.M, cfg.K_max, table, cfg.threads)
        if not dec.flags_ok:
            run.flag(EXIT_INVARIANT)
        if not dec.monotone:
            run.flag(EXIT_INVARIANT)
        c = dec.c_meas
        if c <= 0:
            roots.append({"Q0": Q0.to_json(), "decomposition": dec.to_json(),
                          "hypothesis_ok": False, "note": "no E-free cube within M generations"})
            run.flag(EXIT_HYPOTHESIS)
            continue
        beta = beta_exponent(c, m, cfg.M, S.theta)
        rep = key_sum_check(S, E, Q0, cfg.M, m, c, beta / 2, cfg.K_max, table, dec)
        if not rep.hypothesis_ok:
            run.flag(EXIT_HYPOTHESIS)
        d = rep.to_json()
        d["decomposition"] = dec.to_json()
        roots.append(d)
    return {"m": m, "g_E_doubling": chk.to_json(), "roots": roots}


def _ambient_balls(run: Run):
    sp = run.space
    balls = canonical_balls(sp, run.cfg.n_balls, run.cfg.seed)
    return [(sp.coords[b.center].tolist(), b.radius) for b in balls]


def do_weight(run: Run) -> dict:
    cfg, sp, E = run.cfg, run.space, run.E
    if E.is_empty:
        raise InputError("weight analysis needs a nonempty target set")
    amb = _ambient_balls(run)
    # explicit id lists only make sense at the base resolution
    refinable = (run.spec.kind in ("cross", "segment", "cantor") and cfg.resolutions >= 2
                 and cfg.set in ("default", "empty", "all"))
    if refinable:
        hs = [sp.h / 2 ** i for i in range(cfg.resolutions)]
        spec = run.spec

        def build(h):
            s, E0 = spec.build(h)
            return s, parse_set(cfg.set, s, E0)
        rep = resolution_trend(build, cfg.alpha, cfg.p, amb, hs, cfg.threads)
    else:
        rep = ap_estimate(sp, E, cfg.alpha, cfg.p, [Ball(sp.nearest(x), r) for x, r in amb], cfg.threads)
    write_csv(run.path("weight_trend.csv"), ["h", "constant"], rep.resolution_trend)
    seq = sorted({b for b in [Ball(sp.nearest(x), r) for x, r in amb]}, key=lambda b: b.radius)[:20]
    prof = weight_doubling_profile(sp, E, cfg.alpha, seq)
    out = rep.to_json()
    out["doubling_profile"] = prof
    return out


def do_exponent(run: Run) -> dict:
    cfg = run.cfg
    est = mu_exponent(run.space, run.E, cfg.samples, cfg.seed, threads=cfg.threads)
    write_csv(run.path("exponent_samples.csv"), ["x", "R", "h_E", "slope"],
              [(r["x"], r["R"], r["h_E"], r["slope"]) for r in est.samples])
    iv = ap_range(est.value, cfg.p)
    return {"estimate": est.to_json(), "ap_range": [iv.lo, iv.hi], "p": cfg.p,
            "alpha": cfg.alpha, "classification": classify(cfg.alpha, cfg.p, est.value, est.half_width)}


def do_example71(run: Run) -> dict:
    """The four cross-space claims, each with a pass flag."""
    sp, E = run.space, run.E
    if run.spec.kind != "cross":
        raise InputError("example71 needs a cross space")
    Tmax = float(run.spec.args["Tmax"])
    oracle = catalog.AnalyticOracle(Tmax)
    ns = [n for n in (1, 2, 4, 8, 16) if n <= Tmax / 3]
    claims = {}
    # (1) weak porosity with c = 1/3, delta = 1/2
    scan = porosity_scan(sp, E, 0.5, canonical_balls(sp, run.cfg.n_balls, run.cfg.seed), run.cfg.threads)
    claims["1_weakly_porous"] = {"min_c": scan.min_c, "ok": scan.min_c >= 1 / 3 - 0.05}
    # (2) holes: exact values and failure of doubling
    rows, ok = [], True
    for n in ns:
        a = max_free_hole(sp, E, catalog.cross_ball(sp, n)).h_value
        b = max_free_hole(sp, E, catalog.cross_ball(sp, n, 2)).h_value
        ok &= abs(a - oracle.exact_hole(n)) <= sp.h and b >= n - sp.h
        rows.append({"n": n, "h_E(B)": a, "h_E(2B)": b})
    prof = hole_doubling_profile(sp, E, [catalog.horizontal_id(sp, n) for n in ns], ns, (2.0,))
    claims["2_holes_not_doubling"] = {"rows": rows, "growth_slope": prof.growth_slope,
                                      "ok": bool(ok and prof.is_doubling is False)}
    # (3) the weight is A1-type but not doubling along the vertical balls
    vb = [catalog.vertical_ball(sp, n) for n in ns]
    ints = [{"n": n, "numeric": weight_integral(sp, E, b, 0.5),
             "exact": oracle.exact_weight_integral(n, 0.5)} for n, b in zip(ns, vb)]
    wd = weight_doubling_profile(sp, E, 0.5, vb)
    claims["3_weight_not_doubling"] = {"integrals": ints, "ratios": wd["ratios"],
                                       "ok": bool(wd["non_doubling_trend"])}
    # (4) the 1.05 n balls cannot be covered beyond lambda / (1 + 2 lambda)
    lam = 1.05
    certs = []
    for n in ns:
        if lam * n / 2 > 2:
            c = porosity_certificate(sp, E, catalog.cross_ball(sp, n, lam), 0.5).covered_fraction
            certs.append({"n": n, "c": c})
    bound = lam / (1 + 2 * lam)
    claims["4_fraction_capped"] = {"bound": bound, "certificates": certs,
                                   "ok": bool(certs) and all(r["c"] <= bound + 0.02 for r in certs)}
    if not all(c["ok"] for c in claims.values()):
        run.flag(EXIT_INVARIANT)
    return {"claims": claims}


HANDLERS = {"dyadic-check": do_dyadic_check, "holes": do_holes, "porosity": do_porosity,
            "keysum": do_keysum, "weight": do_weight, "exponent": do_exponent,
            "example71": do_example71}


def run(cfg: RunConfig, command: str, fault: str | None = None) -> int:
    set_default_threads(cfg.threads)
    r = Run(cfg, command, fault)
    os.makedirs(cfg.out, exist_ok=True)
    if command == "report":
        return _report(cfg)
    if command == "build-dyadic":
        r.emit("dyadic.json", do_dyadic_check(r))
        return r.exit
    if command == "analyze":
        unknown = [a for a in cfg.analyses if a not in HANDLERS]
        if unknown:
            raise InputError(f"unknown analyses {unknown}")
        out = {a: HANDLERS[a](r) for a in cfg.analyses}
        r.emit("analyze.json", out)
        return r.exit
    name = {"porosity-scan": "porosity", "keysum": "keysum", "check-weight": "weight",
            "exponent": "exponent", "example71": "example71"}[command]
    r.emit(f"{name}.json", HANDLERS[name](r))
    return r.exit


def _report(cfg: RunConfig) -> int:
    """Index the JSON reports already present in the output directory."""
    entries = []
    for path in sorted(glob.glob(os.path.join(cfg.out, "*.json"))):
        if os.path.basename(path) == "report.json":
            continue
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"unreadable report {path}: {exc}") from None
        entries.append({"file": os.path.basename(path), "command": doc.get("command"),
                        "schema_version": doc.get("schema_version"),
                        "measured": doc.get("measured")})
    write_json(os.path.join(cfg.out, "report.json"),
               envelope("report", cfg.to_json(), {"seed": cfg.seed}, {"reports": entries}))
    return EXIT_OK


# ------------------------------------------------------------------ argparse

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file mirroring the run configuration")
    common.add_argument("--space")
    common.add_argument("--set", dest="set_spec")
    common.add_argument("--theta", type=float)
    common.add_argument("--c0", type=float)
    common.add_argument("--C0", type=float)
    common.add_argument("--T", type=int)
    common.add_argument("--depth", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--threads", type=int)
    common.add_argument("--resolutions", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--p", type=float)
    common.add_argument("--delta", type=float, nargs="+")
    common.add_argument("--M", type=int)
    common.add_argument("--m", type=int, help="g_E doubling constant for keysum (default: measured)")
    common.add_argument("--M-max", dest="M_max", type=int)
    common.add_argument("--K-max", dest="K_max", type=int)
    common.add_argument("--n-balls", dest="n_balls", type=int)
    common.add_argument("--samples", type=int)
    common.add_argument("--analyses", nargs="+", choices=ANALYSES)
    common.add_argument("--inject-fault", choices=["partition"], help=argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="porlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"porlab schema {report_schema_version()}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "build-dyadic": "build the cube system, check its invariants, write cubes.csv",
        "analyze": "run the analyses listed in --analyses",
        "porosity-scan": "worst certified porosity fraction per delta, plus the dyadic scan",
        "keysum": "recursive decomposition and the weighted-sum inequality on every root",
        "check-weight": "Ap constant of dist(., E)^-alpha across a resolution ladder",
        "exponent": "decay exponent of E-neighbourhoods inside balls, and the predicted Ap range",
        "example71": "the four claims about the integer points on the cross space",
        "report": "index the JSON reports in --out",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return p


def config_from_args(ns) -> RunConfig:
    cfg = RunConfig()
    if ns.command == "example71":
        cfg.space = "cross:Tmax=48,h=1/64"
    if ns.config:
        try:
            with open(ns.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {ns.config}: {exc}") from None
        names = {f.name for f in dataclasses.fields(RunConfig)}
        bad = set(data) - names
        if bad:
            raise InputError(f"unknown config keys {sorted(bad)}")
        for k, v in data.items():
            setattr(cfg, k, v)
    over = {"space": ns.space, "set": ns.set_spec, "theta": ns.theta, "c0": ns.c0, "C0": ns.C0,
            "T": ns.T, "depth": ns.depth, "seed": ns.seed, "out": ns.out, "threads": ns.threads,
            "resolutions": ns.resolutions, "alpha": ns.alpha, "p": ns.p, "delta": ns.delta,
            "M": ns.M, "m": ns.m, "M_max": ns.M_max, "K_max": ns.K_max, "n_balls": ns.n_balls,
            "samples": ns.samples, "analyses": ns.analyses}
    for k, v in over.items():
        if v is not None:
            setattr(cfg, k, v)
    if cfg.threads is None and os.environ.get("PORLAB_THREADS"):
        try:
            cfg.threads = int(os.environ["PORLAB_THREADS"])
        except ValueError:
            raise InputError("PORLAB_THREADS must be an integer") from None
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        code = run(cfg, args.command, args.inject_fault)
    except InvariantError as exc:
        print(f"porlab: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (InputError, PorlabError) as exc:
        print(f"porlab: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return code


if __name__ == "__main__":
    sys.exit(main())
