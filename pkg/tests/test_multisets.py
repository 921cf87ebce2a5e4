import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphonforge.multisets import (Multiset, TruncationError, block_size, compare, count_partitions,
                                    exponent_vector, flatten, grade_partitions, grade_start, iter_multisets,
                                    monomial_eval, rank, unflatten, unrank)


def brute_force_order(max_grade):
    """All multisets with sum <= max_grade, sorted by (sum, multiplicity vector)."""
    out = [()]
    for size in range(1, max_grade + 1):
        for c in itertools.combinations_with_replacement(range(1, max_grade + 1), size):
            if sum(c) <= max_grade:
                out.append(c)

    def key(c):
        chi = [0] * max_grade
        for v in c:
            chi[v - 1] += 1
        return (sum(c), chi)
    return [Multiset(c) for c in sorted(set(out), key=key)]


ORACLE = brute_force_order(12)


def test_first_multisets():
    assert [unrank(i) for i in range(1, 5)] == [Multiset(), Multiset([1]), Multiset([2]), Multiset([1, 1])]


@pytest.mark.parametrize("a,b", [("{}", "{1}"), ("{2}", "{1,1}"), ("{3}", "{1,2}")])
def test_compare_examples(a, b):
    assert compare(Multiset.parse(a), Multiset.parse(b)) == -1
    assert compare(Multiset.parse(b), Multiset.parse(a)) == 1


def test_rank_unrank_examples():
    assert unrank(7) == Multiset([1, 1, 1])
    assert rank(Multiset()) == 1
    assert rank(Multiset([2])) == 3
    assert rank(Multiset([1, 2])) == 6
    assert rank(Multiset([7])) == 31


def test_order_matches_brute_force():
    assert [unrank(i) for i in range(1, len(ORACLE) + 1)] == ORACLE
    assert list(iter_multisets(len(ORACLE))) == ORACLE


def test_grade_counts_are_partition_numbers():
    for n in range(13):
        assert grade_start(n + 1) - grade_start(n) == sum(1 for m in ORACLE if m.total == n)
    assert count_partitions(40) == 37338
    assert sum(1 for _ in grade_partitions(10)) == 42


def test_monomial_eval_examples():
    assert monomial_eval(Multiset(), [0.3]) == 1.0
    assert monomial_eval(Multiset([1, 1]), [0.5, 0.9]) == 0.25
    assert monomial_eval(Multiset([1, 2]), [0.3, 0.4]) == pytest.approx(0.12, abs=1e-15)
    with pytest.raises(TruncationError):
        monomial_eval(Multiset([3]), [0.1, 0.2])
    assert exponent_vector(Multiset([1, 1, 3]), 4).tolist() == [2, 0, 1, 0]


def test_flatten_examples():
    assert flatten(1, 1) == 1
    assert flatten(2, 3) == 5
    assert unflatten(6) == (3, 1)
    assert block_size(3) == 9
    with pytest.raises(ValueError):
        flatten(2, 4)


def test_parse_and_str():
    m = Multiset.parse("{3, 1,1}")
    assert m.items == (1, 1, 3) and str(m) == "{1,1,3}"
    assert Multiset.parse("{}") == Multiset()
    with pytest.raises(ValueError):
        Multiset.parse("1,2")
    with pytest.raises(ValueError):
        Multiset([0, 1])


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=1, max_value=50_000))
def test_rank_inverts_unrank(i):
    m = unrank(i)
    assert rank(m) == i
    assert m.total <= i


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 9), max_size=6), st.lists(st.integers(1, 9), max_size=6))
def test_order_is_consistent_with_rank(a, b):
    ma, mb = Multiset(a), Multiset(b)
    c = compare(ma, mb)
    assert c == (rank(ma) > rank(mb)) - (rank(ma) < rank(mb))
    assert compare(mb, ma) == -c


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 5), max_size=5), st.lists(st.integers(1, 5), max_size=5),
       st.lists(st.floats(0, 1), min_size=5, max_size=5))
def test_monomials_multiply_under_union(a, b, z):
    ma, mb = Multiset(a), Multiset(b)
    assert math.isclose(monomial_eval(ma.union(mb), z), monomial_eval(ma, z) * monomial_eval(mb, z),
                        rel_tol=1e-12, abs_tol=1e-300)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5000))
def test_flatten_round_trip(i):
    k, j = unflatten(i)
    assert flatten(k, j) == i and 1 <= j <= k + 1
