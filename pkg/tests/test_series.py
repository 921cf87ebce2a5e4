import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphonforge import series as sr
from graphonforge.bounding import BoundingSequence, BoundingTriple, MonomialPolynomial, random_bounding_sequence
from graphonforge.density import SmallGraph, tau_mc
from graphonforge.multisets import Multiset, rank
from graphonforge.wpz import build_wpz

K1, K2, K3, P3 = (SmallGraph.parse(t) for t in ("K1", "K2", "K3", "P3"))


def label(name, P=None, kmax=3):
    return next(l for l in sr.labels(P, kmax) if l.name == name)


def admissible_z(P, seed=0):
    g = np.random.default_rng(seed)
    while True:
        z = g.random(P.z_dim)
        if P.admissible(z):
            return z


def test_labels_partition_unit_interval():
    P = random_bounding_sequence(0)
    for kmax in (1, 3, 5):
        labs = sr.labels(P, kmax)
        assert math.fsum(l.size for l in labs) == pytest.approx(1.0, abs=1e-15)
        assert len(list(sr.enumerate_labelings(K1, kmax, P))) == len(labs)
        for H in (K2, P3):
            assert abs(sr.partition_of_unity(H, P, kmax) - 1.0) <= 1e-12


def test_label_term_examples():
    P = random_bounding_sequence(1)
    q = label("Q")
    t = sr.term_for_labeling(K2, (q, q), P)
    assert t.s == 1.0 and t.size == pytest.approx((12 / 25) ** 2)
    assert t.value(np.zeros(6)) == pytest.approx((12 / 25) ** 2)
    r = label("R")
    assert sr.term_for_labeling(K2, (r, r), P).value(np.zeros(6)) == 0.0
    for k in (1, 2, 3):
        c = label(f"C[0,{k}]")
        t = sr.term_for_labeling(K2, (c, c), P)
        assert t.poly == {k: 1.0}                     # r = z^{M_k}
        assert t.size == pytest.approx(c.size**2)


def test_atoms_come_from_the_allowed_list():
    P = random_bounding_sequence(2)
    labs = [l for l in sr.labels(P, 3) if l.cell]
    for a in labs:
        for b in labs:
            f = sr.ce_factor(K2, [a.cell, b.cell], P)
            assert {atom.kind for atom in f.atoms} <= sr.ATOM_KINDS


def test_conditional_factor_matches_direct_integration():
    """``size * s * r(z)`` against a Monte Carlo integral of W_P(z) over the two cells."""
    P = random_bounding_sequence(3, z_dim=6)
    z = admissible_z(P, 3)
    W = build_wpz(P, z)
    g = np.random.default_rng(0)
    names = ["C[0,1]", "C[1,2]", "E[0,1,0]", "E[0,1,1]", "E[0,1,2]", "E[1,1]", "E[2,2]", "C[0,2]", "E[0,2,1]"]
    labs = [label(n, P, 3) for n in names]
    checked = 0
    for a in labs:
        for b in labs:
            if a.size == 0 or b.size == 0:
                continue
            t = sr.term_for_labeling(K2, (a, b), P)
            x = sr._sample_in(a, g, 40_000)
            y = sr._sample_in(b, g, 40_000)
            v = np.asarray(W(x, y))
            mean, se = v.mean(), v.std(ddof=1) / math.sqrt(len(v))
            assert abs(t.value(z) / t.size - mean) <= 4 * se + 1e-12, (a.name, b.name)
            checked += 1
    assert checked >= 60


def test_k1_series_is_constant_one():
    P = random_bounding_sequence(4)
    s = sr.assemble_series(K1, P, samples=5000)
    assert s.coeffs.coeffs == {1: pytest.approx(1.0, abs=1e-15)}
    lab = sr.assemble_series(K1, P, kmax=5, method="labelings")
    assert lab.alpha(1) + lab.truncation_bound == pytest.approx(1.0, abs=1e-15)
    assert lab.truncation_bound == pytest.approx(2 * 3 * 2.0**-5 / 3 / 25)


def test_series_evaluation_examples():
    zero = sr.TruncatedSeries("x", MonomialPolynomial(), 64, 2, 0, 0.0)
    assert zero.eval([0.3, 0.4]) == 0.0
    a = 0.7
    one = sr.TruncatedSeries("x", MonomialPolynomial({rank(Multiset([1, 2])): a}), 64, 2, 0, 0.0)
    assert one.eval([0.5, 0.5]) == pytest.approx(0.25 * a)
    assert one.partial([0.5, 0.5], 1) == pytest.approx(0.5 * a)


def test_off_region_warns_or_raises():
    # p_1(z) = 0.02 + 0.005 z_1 must stay in [0.02, 0.022], so z_1 <= 0.4
    t = BoundingTriple(MonomialPolynomial({1: 0.02, 2: 0.005}), 0.02, 0.022)
    P = BoundingSequence([t], 6, 4)
    s = sr.assemble_series(K2, P, samples=5000)
    bad, good = np.full(6, 0.5), np.full(6, 0.3)
    with pytest.warns(sr.InadmissibleWarning):
        s.eval(bad)
    with pytest.raises(ValueError):
        s.eval(bad, strict=True)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        s.eval(good, strict=True)


def test_stratified_series_matches_monte_carlo():
    P = random_bounding_sequence(6)
    z = admissible_z(P, 6)
    s = sr.assemble_series(K2, P, samples=200_000, seed=1)
    mc = tau_mc(K2, build_wpz(P, z), samples=200_000, seed=2)
    assert abs(s.eval(z) - mc.value) <= 4 * math.hypot(s.sigma(z), mc.error)


def test_labelings_series_matches_monte_carlo():
    P = random_bounding_sequence(7)
    z = admissible_z(P, 7)
    s = sr.assemble_series(K2, P, kmax=4, method="labelings", per_labeling=32)
    mc = tau_mc(K2, build_wpz(P, z), samples=400_000, seed=3)
    # the tail labels only add nonnegative mass, at most the truncation bound;
    # 0.002 allows for the 32-point averages inside non-constant cells
    gap = mc.value - s.eval(z)
    assert -4 * mc.error - 0.002 <= gap <= s.truncation_bound + 4 * mc.error + 0.002


def test_coefficient_bound_beta():
    P = random_bounding_sequence(8)
    s = sr.assemble_series(K3, P, samples=20_000)
    for j, c in s.coeffs.coeffs.items():
        assert abs(c) <= s.beta.get(j, 0.0) * (1 + 1e-9) + 1e-15


def test_decay_examples():
    rep = sr.decay_check(sr.geometric_series(0.5, 12))
    assert rep.c == pytest.approx(0.5, abs=0.05)
    assert sr.decay_check({1: 0.3}).c == 0.0
    s = sr.assemble_series(K2, random_bounding_sequence(9), samples=20_000)
    assert sr.decay_check(s).c < 1.0 and s.certificate is not None
    with pytest.raises(ValueError):
        sr.decay_check(sr.assemble_series(K2, random_bounding_sequence(9), imax=10, samples=1000))


def test_strengthening_examples():
    P = random_bounding_sequence(10, length=12, filled=2)
    family = random_bounding_sequence(11, length=12)
    same = sr.closeness_under_strengthening(K2, P, [2], P, samples=20_000)
    assert same.deviations == [0.0]
    far = sr.closeness_under_strengthening(K2, P, [6], family, samples=20_000, method="labelings", kmax=5)
    assert far.deviations == [0.0]


def test_grade_count_bound():
    assert sr.grade_count_bound_holds(40)


def test_json_dump_is_keyed_by_rank():
    s = sr.assemble_series(K2, random_bounding_sequence(12), samples=5000)
    sr.decay_check(s)
    data = s.to_json()
    assert all(k.isdigit() for k in data["coefficients"])
    assert data["monomials"]["1"] == "{}"
    assert data["decay"]["c"] == s.certificate.c


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 1000))
def test_series_is_reproducible(pseed, seed):
    P = random_bounding_sequence(pseed)
    a = sr.assemble_series(K2, P, samples=3000, seed=seed)
    b = sr.assemble_series(K2, P, samples=3000, seed=seed)
    assert a.coeffs.coeffs == b.coeffs.coeffs


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 0.9))
def test_decay_fit_recovers_geometric_rate(c):
    assert sr.decay_check(sr.geometric_series(c, 10)).c == pytest.approx(c, rel=0.1)
