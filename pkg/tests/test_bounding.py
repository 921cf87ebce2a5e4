import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphonforge.bounding import (BoundingSequence, BoundingTriple, MonomialPolynomial, StrengtheningError,
                                   check_triple, coefficient_bound, epsilon_close, is_k_strengthening,
                                   is_strengthening, random_bounding_sequence, strengthen, trivial)
from graphonforge.multisets import Multiset, monomial_eval, rank, unrank


def small_triple(c=0.01):
    return BoundingTriple(MonomialPolynomial({1: c}), 0.0, 1.0)


def test_trivial_sequence_is_valid():
    rep = trivial(10).validate()
    assert rep.ok and len(rep.triples) == 10


def test_invalid_triples():
    rep = check_triple(BoundingTriple(MonomialPolynomial(), 0.5, 0.2), 6)
    assert not rep.ok and rep.clause == "l <= u"
    assert coefficient_bound(2) == pytest.approx(2**-4 / 9)
    rep = check_triple(BoundingTriple(MonomialPolynomial({2: 0.01}), 0.0, 1.0), 6)
    assert not rep.ok and rep.clause.startswith("|pi_j|")
    rep = check_triple(BoundingTriple(MonomialPolynomial({rank(Multiset([3])): 1e-12}), 0.0, 1.0), 2)
    assert not rep.ok and rep.clause == "truncation"


def test_strengthening_rules():
    P = trivial(8)
    P5 = strengthen(P, 5, small_triple())
    assert is_strengthening(P, P5) and is_k_strengthening(P, P5, 4)
    P3 = strengthen(P, 3, small_triple())
    assert not is_k_strengthening(P, P3, 5)
    assert all(is_k_strengthening(P, P, k) for k in range(10))
    with pytest.raises(StrengtheningError):
        strengthen(P5, 5, small_triple(0.02))
    assert not is_strengthening(P5, P)


def test_polynomial_values_and_partials():
    z1 = MonomialPolynomial({2: 1.0})
    z = np.array([0.3, 0.9, 0.1])
    assert z1.eval(z) == pytest.approx(0.3) and z1.partial(z, 1) == 1.0 and z1.partial(z, 2) == 0.0
    c = 0.7
    sq = MonomialPolynomial({4: c})
    assert sq.eval(np.array([0.5, 0.2])) == pytest.approx(0.25 * c)
    assert sq.partial(np.array([0.5, 0.2]), 1) == pytest.approx(c)


def test_epsilon_close_examples():
    f = MonomialPolynomial({2: 0.5, 3: 0.25})
    assert epsilon_close(f, f).bound == 0.0
    d = 1e-3
    assert epsilon_close(f + MonomialPolynomial({1: d}), f).bound == pytest.approx(d)
    z1 = MonomialPolynomial({2: 1.0})
    rep = epsilon_close(z1 + MonomialPolynomial({3: d}), z1, z_dim=2)
    assert rep.bound == pytest.approx(d) and rep.sampled <= rep.bound + 1e-15


def test_json_round_trip():
    P = random_bounding_sequence(4)
    Q = BoundingSequence.from_json(P.to_json())
    assert Q.triples == P.triples and Q.z_dim == P.z_dim


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_random_sequences_validate(seed):
    P = random_bounding_sequence(seed)
    assert P.validate().ok
    for i in range(1, P.length + 1):
        lo, hi = P.triple(i).p.range_bounds()
        assert 0.0 <= lo <= hi <= 1.0


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.integers(1, 30), st.floats(-1, 1), max_size=6),
       st.lists(st.floats(0, 1), min_size=6, max_size=6))
def test_interval_bounds_contain_values(coeffs, z):
    p = MonomialPolynomial(coeffs)
    if p.max_element() > 6:
        return
    lo, hi = p.range_bounds()
    v = p.eval(np.array(z))
    assert lo - 1e-12 <= v <= hi + 1e-12
    expected = sum(c * monomial_eval(unrank(j), z) for j, c in p.coeffs.items())
    assert v == pytest.approx(expected, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.integers(1, 20), st.floats(-1, 1), max_size=5),
       st.dictionaries(st.integers(1, 20), st.floats(-1, 1), max_size=5))
def test_closeness_bound_dominates_samples(a, b):
    f, g = MonomialPolynomial(a), MonomialPolynomial(b)
    rep = epsilon_close(f, g, z_dim=max((f - g).max_element(), 1), grid=256)
    assert rep.sampled <= rep.bound * (1 + 1e-12) + 1e-15
