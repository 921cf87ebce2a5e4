"""Registry of end-to-end checks shared by ``verify all`` and the acceptance tests.

Each check takes a seed and returns a :class:`CheckResult` whose ``details``
hold only deterministic numbers, so serialized reports are byte-identical
across runs and thread counts.  Wall-clock time is kept on the result
object but never serialized.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from . import _jsonout
from .bounding import BoundingSequence, random_bounding_sequence
from .density import (SmallGraph, example_decorated_graphs, example_two_part_graphon, iso_classes, tau_exact_step,
                      tau_mc, tau_rooted, density)
from .graphons import HalfGraphon, StepGraphon, render_array
from .multisets import Multiset, grade_partitions, grade_start, iter_multisets, rank, unrank
from .series import assemble_series, closeness_under_strengthening, decay_check, partition_of_unity
from .stabilize import (BoxUnion, JacobianFloorError, Level, StabilizingSystem, TargetFunctions, VariableSystem,
                        check_P1_P2, continue_implicit, gronwall_check, make_excellent_step, shrink_zero_set,
                        trivial_system)
from .wpz import (C, E, MAIN_PARTS, PART_NAMES, R, build_wpz, decode_z, diff_support, part_degree_profile,
                  random_z, split)


@dataclass
class CheckResult:
    id: str
    title: str
    passed: bool
    details: dict
    elapsed: float = field(default=0.0, compare=False)

    def to_json(self) -> dict:
        return {"id": self.id, "title": self.title, "passed": self.passed, "details": self.details}


@dataclass
class Check:
    id: str
    title: str
    fn: Callable[[int], tuple[bool, dict]]
    budget: float | None = None     # seconds, enforced by the acceptance tests


REGISTRY: dict[str, Check] = {}


def register(id: str, title: str, budget: float | None = None):
    def deco(fn):
        REGISTRY[id] = Check(id, title, fn, budget)
        return fn
    return deco


def run_check(id: str, seed: int = 0) -> CheckResult:
    chk = REGISTRY[id]
    t0 = time.perf_counter()
    ok, details = chk.fn(seed)
    return CheckResult(chk.id, chk.title, bool(ok), details, time.perf_counter() - t0)


def run_all(seed: int = 0, ids=None) -> list[CheckResult]:
    return [run_check(i, seed) for i in (ids or REGISTRY)]


def report(results: list[CheckResult]) -> str:
    body = {"checks": [r.to_json() for r in results], "passed": all(r.passed for r in results)}
    return _jsonout.dumps(body)


def partition_numbers(n_max: int) -> list[int]:
    """``p(0..n_max)`` by Euler's pentagonal recurrence (independent of the enumerators)."""
    p = [1] + [0] * n_max
    for n in range(1, n_max + 1):
        k, total = 1, 0
        while True:
            g1 = k * (3 * k - 1) // 2
            if g1 > n:
                break
            sign = 1 if k % 2 else -1
            total += sign * p[n - g1]
            g2 = k * (3 * k + 1) // 2
            if g2 <= n:
                total += sign * p[n - g2]
            k += 1
        p[n] = total
    return p


# -- 1: decorated densities on the two-part example --------------------------------------

@register("AC1", "decorated densities on the two-part example", budget=5.0)
def _ac1(seed: int):
    W = example_two_part_graphon()
    rows = []
    ok = True
    for D, target in example_decorated_graphs():
        roots = [0.1 + 0.2 * i for i in range(D.m)]
        ex = tau_rooted(D, W, roots, method="exact").value
        mc = tau_rooted(D, W, roots, method="mc", samples=10**6, seed=seed)
        z = abs(mc.value - target) / mc.error if mc.error > 0 else 0.0
        good = abs(ex - target) <= 1e-12 and abs(mc.value - target) <= 4 * mc.error + 1e-15
        ok &= good
        rows.append({"graph": str(D), "target": target, "exact": ex, "mc": mc.value, "mc_sigma": mc.error,
                     "z_score": z, "passed": good})
    return ok, {"cases": rows}


# -- 2: multiset order ------------------------------------------------------------------

@register("AC2", "multiset order, ranking and grade counts", budget=2.0)
def _ac2(seed: int):
    first = [Multiset(), Multiset([1]), Multiset([2]), Multiset([1, 1])]
    got = [unrank(i) for i in range(1, 5)]
    listed = got == first
    grade_ok = all(m.total <= i for i, m in enumerate(iter_multisets(10**5), start=1))
    round_trip = all(rank(unrank(i)) == i for i in range(1, 10**4 + 1))
    p = partition_numbers(40)
    counts = [grade_start(n + 1) - grade_start(n) for n in range(41)]
    counts_ok = counts == p
    enum_ok = all(sum(1 for _ in grade_partitions(n)) == p[n] for n in range(26))
    ok = listed and grade_ok and round_trip and counts_ok and enum_ok
    return ok, {"first_four": [str(m) for m in got], "grade_bound_1e5": grade_ok, "round_trip_1e4": round_trip,
                "grade_counts_match_p": counts_ok, "enumeration_matches_p_n_le_25": enum_ok, "p40": p[40]}


# -- 3: density suite ---------------------------------------------------------------------

def random_step_graphon(seed: int, i: int) -> StepGraphon:
    g = np.random.default_rng([seed, 977, i])
    k = int(g.integers(2, 6))
    sizes = g.dirichlet(np.ones(k))
    sizes[-1] = 1.0 - sizes[:-1].sum()
    vals = g.random((k, k))
    vals = np.triu(vals) + np.triu(vals, 1).T
    return StepGraphon(sizes, vals)


@register("AC3", "density sums and Monte Carlo agreement on random step graphons", budget=60.0)
def _ac3(seed: int):
    graphons = [random_step_graphon(seed, i) for i in range(5)]
    sums = []
    for W in graphons:
        for k in (3, 4):
            sums.append(math.fsum(density(H, W, method="exact").value for H in iso_classes(k)))
    sum_dev = max(abs(s - 1.0) for s in sums)
    pairs = [(H, W) for W in graphons for H in iso_classes(3) + iso_classes(4)][:50]
    worst = 0.0
    fails = 0
    for j, (H, W) in enumerate(pairs):
        ex = tau_exact_step(H, W)
        mc = tau_mc(H, W, samples=100_000, seed=seed * 1000 + j)
        gap = abs(mc.value - ex)
        if gap > 4 * mc.error + 1e-12:
            fails += 1
        if mc.error > 0:
            worst = max(worst, gap / mc.error)
    ok = sum_dev <= 1e-9 and fails == 0
    return ok, {"max_sum_deviation": sum_dev, "pairs": len(pairs), "mc_failures": fails, "max_z_score": worst}


# -- 4: structure of W_P(z) ---------------------------------------------------------------

def _example_wpz(seed: int):
    P = random_bounding_sequence(seed)
    z = random_z(seed, P.z_dim)
    return P, z, build_wpz(P, z)


@register("AC4", "structure of W_P(z)")
def _ac4(seed: int):
    P, z, W = _example_wpz(seed)
    g = np.random.default_rng([seed, 4])
    x, y = g.random(10**5), g.random(10**5)
    sym = float(np.abs(W(x, y) - W(y, x)).max())

    # Q column against 1 - (1/12) sum of numerically integrated relative degrees
    q_dev, q_err = 0.0, 0.0
    for X in MAIN_PARTS:
        t = g.random(1000)
        num, err = W.row_integrals(X, t, parts=MAIN_PARTS, weighted=False)
        q_dev = max(q_dev, float(np.abs(W.q_column(X, t) - (1.0 - num / 12.0)).max()))
        q_err = max(q_err, float(err.max()) / 12.0)

    # relative degrees of C vertices into C and E
    t = np.sort(g.random(400))
    th, k, _ = split(t)
    law = np.where(th < 2, np.ldexp(1.0, -k) / 3.0, 0.0)
    law_dev = 0.0
    for Z in (C, E):
        num, _ = W.row_integrals(C, t, parts=[Z], weighted=False)
        law_dev = max(law_dev, float(np.abs(num - law).max()))

    prof = part_degree_profile(W, samples=20, seed=seed)
    spread = max(p.spread for p in prof)
    by = {p.name: p for p in prof}
    q_deg = by["Q"].mean
    a_deg = by["A"].mean
    a_table = 1201 / 2500
    a_built = 12 / 25 + (1 / 25) * (1 / 25)
    flag = abs(a_deg - a_table) > 1e-9
    a_ok = abs(a_deg - a_built) <= 1e-6
    ok = sym == 0.0 and q_dev <= 1e-8 and law_dev <= 1e-6 and spread <= 1e-6 and q_deg > 1300 / 2500 and a_ok
    return ok, {
        "symmetry_max_deviation": sym, "q_identity_max_deviation": q_dev, "q_quadrature_error": q_err,
        "relative_degree_max_deviation": law_dev, "max_degree_spread": spread,
        "degree_Q_x2500": q_deg * 2500, "degree_A_x2500": a_deg * 2500, "degree_A_table_x2500": 1201,
        "degree_A_construction_x2500": a_built * 2500, "degree_A_table_discrepancy": flag,
        "degrees_x2500": {p.name: p.mean * 2500 for p in prof}}


# -- 5: z-injectivity ---------------------------------------------------------------------

@register("AC5", "recovering z and locating z-dependent tiles")
def _ac5(seed: int):
    worst = 0.0
    for i in range(100):
        P = random_bounding_sequence(seed * 1000 + i)
        z = random_z(seed * 1000 + i, 6)
        zz = decode_z(build_wpz(P, z), 6)
        worst = max(worst, float(np.abs(zz - z).max()))
    violations = 0
    tiles: dict[str, int] = {}
    for i in range(20):
        P = random_bounding_sequence(seed * 1000 + 500 + i)
        z1, z2 = random_z(seed * 1000 + 2 * i, 6), random_z(seed * 1000 + 2 * i + 1, 6)
        rep = diff_support(build_wpz(P, z1), build_wpz(P, z2), samples=10**5, seed=seed + i)
        violations += sum(rep.violations.values())
        for t, n in rep.tiles.items():
            tiles[t] = tiles.get(t, 0) + n
    ok = worst <= 1e-9 and violations == 0
    return ok, {"decode_max_error": worst, "diff_violations": violations, "diff_tiles": dict(sorted(tiles.items()))}


# -- 6: series ---------------------------------------------------------------------------

@register("AC6", "truncated density series")
def _ac6(seed: int):
    P = random_bounding_sequence(seed)
    g = np.random.default_rng([seed, 6])
    zs = []
    while len(zs) < 3:
        z = g.random(P.z_dim)
        if P.admissible(z):
            zs.append(z)
    rows = []
    ok = True
    unity = 0.0
    decay = {}
    for name in ("K2", "K3", "P3"):
        H = SmallGraph.parse(name)
        s = assemble_series(H, P, samples=10**6, seed=seed)
        for j, z in enumerate(zs):
            v, sv = float(s.eval(z, strict=True)), s.sigma(z)
            mc = tau_mc(H, build_wpz(P, z), samples=10**6, seed=seed + 17 + j)
            sig = math.hypot(sv, mc.error)
            good = abs(v - mc.value) <= 3 * sig
            ok &= good
            rows.append({"graph": name, "z_index": j, "series": v, "mc": mc.value, "sigma": sig,
                         "z_score": abs(v - mc.value) / sig if sig else 0.0, "passed": good})
        unity = max(unity, abs(partition_of_unity(H, P, 5) - 1.0))
        rep = decay_check(s)
        decay[name] = rep.c
        ok &= rep.c < 1.0
    P0 = random_bounding_sequence(seed + 1, length=12, filled=2)
    family = random_bounding_sequence(seed + 2, length=12)
    trend = closeness_under_strengthening(SmallGraph.parse("K3"), P0, range(2, 9), family, samples=200_000,
                                          seed=seed)
    mono = trend.non_increasing()
    ok = ok and unity <= 1e-12 and mono
    return ok, {"comparisons": rows, "partition_of_unity_deviation": unity, "decay_c": decay,
                "strengthening_k": trend.ks, "strengthening_deviation": trend.deviations,
                "strengthening_non_increasing": mono}


# -- 7: stabilization ----------------------------------------------------------------------

@register("AC7", "continuation, Gronwall bound and excellence steps")
def _ac7(seed: int):
    out = {}
    delta = 1e-3
    tr1 = continue_implicit(lambda x, y: y - x**2, 0.0, [0.0], 0.0, 1.0, eps=1e-6, reference=lambda x: x**2)
    tr2 = continue_implicit(lambda x, y: y - x**2 - delta, 0.0, [delta], 0.0, 1.0, eps=2 * delta,
                            reference=lambda x: x**2)
    out["parabola_residual"] = tr1.residual
    out["parabola_tube_deviation"] = tr1.tube_deviation
    out["shifted_residual"] = tr2.residual
    out["shifted_sup_deviation"] = tr2.tube_deviation
    out["grid_points"] = len(tr1.xs)
    try:
        continue_implicit(lambda x, y: y**2 - x, 1.0, [1.0], 0.0, 1.0)
        floor = False
    except JacobianFloorError:
        floor = True
    out["singular_branch_hits_floor"] = floor
    cont_ok = (tr1.residual <= 1e-8 and tr2.residual <= 1e-8 and len(tr1.xs) >= 1000
               and abs(tr2.tube_deviation - delta) <= 1e-9 and floor)

    # perturbed family f_hat = f - delta (1 + x) around the branch of f(x, y) = y + sin(y)/2 - x
    def f(x, y):
        return y + 0.5 * np.sin(y) - x

    def g(x):
        return brentq(lambda v: v + 0.5 * math.sin(v) - x, -2.0, 2.0, xtol=1e-15)

    gr = []
    for j, delta_j in enumerate((1e-4, 1e-3, 1e-2)):
        def fhat(x, y, d=delta_j):
            return f(x, y) - d * (1.0 + x)

        y0 = brentq(lambda v: float(fhat(0.0, v)), -2.0, 2.0, xtol=1e-15)
        rep = gronwall_check(f, fhat, g, 0.0, [y0], 0.0, 1.0, tube=0.05, samples=200, seed=seed + j)
        gr.append({"delta": delta_j, "eps0": rep.eps0, "measured": rep.measured, "bound": rep.bound, "K": rep.K,
                   "rho": rep.rho, "holds": rep.holds})
    gr_ok = all(r["holds"] for r in gr)

    lin = TargetFunctions.from_expressions(["a1_1 + a1_2"])
    step = make_excellent_step(trivial_system(1), lin, 1, seed=seed)
    ex_ok = (step.grew and len(step.J) == 1 and step.report.passed and step.certificate.startswith("rank 1")
             and step.variation <= 1e-6)
    const = make_excellent_step(trivial_system(1), TargetFunctions.from_expressions(["0.3"]), 1, seed=seed)
    again = make_excellent_step(step.system, lin, 1, seed=seed)
    trivial_rep = check_P1_P2(trivial_system(3), TargetFunctions.from_expressions(
        ["a1_1 * a2_3", "sin(a2_1) + a1_2", "a3_4 ** 2"]), seed=seed)
    syn_t = TargetFunctions.from_expressions(["a1_1 - a1_2 ** 2"])
    U = VariableSystem([(0.25, 0.75)])
    syn = StabilizingSystem([Level(frozenset({1}), frozenset({1}), 2, np.array([0.25, 0.5]),
                                   lambda x: np.array([x[0] ** 2, x[0]]))], U)
    broken = StabilizingSystem([Level(frozenset({1}), frozenset({1}), 2, np.array([0.5, 0.5]),
                                      lambda x: np.array([x[0], x[0]]))], U)
    syn_rep = check_P1_P2(syn, syn_t, seed=seed).levels[0]
    br_rep = check_P1_P2(broken, syn_t, seed=seed).levels[0]
    V2 = shrink_zero_set(BoxUnion.interval(0.0, 1.0), lambda x: x[0] - 0.5, 1.0, 0.9)
    removed = 1.0 - V2.measure()
    stab_ok = (trivial_rep.passed and all(l.vacuous for l in trivial_rep.levels)
               and abs(syn_rep.min_det - 1.0) <= 1e-8 and syn_rep.p2_deviation == 0.0
               and br_rep.p2_deviation > 0.0 and const.certificate == "0-excellent trivially" and not const.grew
               and not again.grew and 0.0 < removed <= 0.1)
    out.update({"gronwall": gr, "excellent_step": step.to_json(), "constant_target": const.certificate,
                "repeat_step": again.certificate, "trivial_system_vacuous": trivial_rep.passed,
                "synthetic_min_det": syn_rep.min_det, "synthetic_p2": syn_rep.p2_deviation,
                "broken_p2": br_rep.p2_deviation, "zero_set_removed_width": removed})
    return cont_ok and gr_ok and ex_ok and stab_ok, out


# -- 8: rendering ---------------------------------------------------------------------------

def half_graphon_oracle(resolution: int) -> np.ndarray:
    """Pixel values of the half-graphon from integer arithmetic on the sub-cell centres."""
    r = resolution
    i, j = np.meshgrid(np.arange(r), np.arange(r), indexing="ij")
    count = np.zeros((r, r), dtype=np.int64)
    for a in range(3):
        for b in range(3):
            # (3j + a + 1/2) + (3i + b + 1/2) >= 3r
            count += (3 * j + a) + (3 * i + b) + 1 >= 3 * r
    table = np.array([int(math.floor(255 * (9 - c) / 9 + 0.5)) for c in range(10)])
    return table[count].astype(np.uint8)


@register("AC8", "rendering the half-graphon")
def _ac8(seed: int):
    img = render_array(HalfGraphon(), 256)
    oracle = half_graphon_oracle(256)
    mism = int((img != oracle).sum())
    return mism == 0, {"resolution": 256, "mismatched_pixels": mism, "checksum": int(img.astype(np.int64).sum())}


__all__ = ["CheckResult", "Check", "REGISTRY", "register", "run_check", "run_all", "report", "partition_numbers",
           "half_graphon_oracle", "random_step_graphon"]
