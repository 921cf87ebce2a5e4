import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphonforge.density import (DecoratedGraph, DensityExpression, IncompatibleError, SmallGraph,
                                  aut_count, canonical_form, check_constraint_ae, density, eval_expression,
                                  example_decorated_graphs, example_two_part_graphon, iso_classes,
                                  parse_constraint, parse_expression, partition_detect, tau, tau_exact_step,
                                  tau_mc, tau_rooted)
from graphonforge.graphons import HalfGraphon, StepGraphon, constant
from graphonforge.verify import random_step_graphon


def tau_oracle(H, W):
    """Induced labelled density by summing over every assignment of vertices to parts."""
    total = 0.0
    for parts in itertools.product(range(len(W.sizes)), repeat=H.n):
        w = math.prod(W.sizes[p] for p in parts)
        for u, v in itertools.combinations(range(H.n), 2):
            val = W.values[parts[u], parts[v]]
            w *= val if H.has_edge(u, v) else 1.0 - val
        total += w
    return total


def aut_oracle(H):
    return sum(1 for perm in itertools.permutations(range(H.n)) if H.relabel(perm) == H)


@pytest.mark.parametrize("text,n_aut", [("K3", 6), ("P3", 2), ("C4", 8), ("edges:0-1;n=3", 2)])
def test_aut_counts(text, n_aut):
    H = SmallGraph.parse(text)
    assert aut_count(H) == n_aut == aut_oracle(H)


def test_iso_class_counts():
    assert [len(iso_classes(k)) for k in range(1, 5)] == [1, 2, 4, 11]
    for k in (3, 4):
        forms = {canonical_form(H) for H in iso_classes(k)}
        assert len(forms) == len(iso_classes(k))


def test_density_examples():
    half = constant(0.5)
    assert tau(SmallGraph.parse("K2"), half, "exact").value == 0.5
    assert tau(SmallGraph.parse("K3"), half, "exact").value == 0.125
    assert density(SmallGraph.parse("P3"), half, "exact").value == pytest.approx(3 / 8, abs=1e-15)
    assert tau(SmallGraph.parse("K2"), example_two_part_graphon(), "exact").value == pytest.approx(7 / 12, abs=1e-15)
    assert tau(SmallGraph.parse("K1"), HalfGraphon(), "mc", samples=1000).value == 1.0
    assert tau(SmallGraph.parse("E2"), constant(0.25), "exact").value == pytest.approx(0.75, abs=1e-15)
    with pytest.raises(ValueError):
        tau(SmallGraph.parse("K2"), HalfGraphon(), "exact")


def test_exact_matches_assignment_oracle():
    for i in range(3):
        W = random_step_graphon(11, i)
        for H in iso_classes(3) + iso_classes(4):
            assert tau_exact_step(H, W) == pytest.approx(tau_oracle(H, W), abs=1e-13)


def test_density_is_tau_times_labellings():
    W = random_step_graphon(5, 1)
    for H in iso_classes(4):
        d = density(H, W, "exact").value
        assert d == pytest.approx(tau(H, W, "exact").value * math.factorial(4) / aut_count(H), abs=1e-12)


def test_mc_agrees_with_exact():
    W = random_step_graphon(2, 2)
    for j, H in enumerate(iso_classes(3)):
        mc = tau_mc(H, W, samples=200_000, seed=j)
        assert abs(mc.value - tau_exact_step(H, W)) <= 4 * mc.error


def test_mc_is_reproducible():
    H = SmallGraph.parse("C4")
    assert tau_mc(H, HalfGraphon(), 50_000, seed=3) == tau_mc(H, HalfGraphon(), 50_000, seed=3)


def test_decorated_closed_forms():
    W = example_two_part_graphon()
    a = 2 / 3
    closed = [a**3, a**2, a**3 * a * (1 - a)]
    for (D, target), value in zip(example_decorated_graphs(), closed):
        assert target == pytest.approx(value, abs=1e-15)
        roots = [0.1 * (i + 1) for i in range(D.m)]
        assert tau_rooted(D, W, roots, "exact").value == pytest.approx(value, abs=1e-12)


def test_rooted_edge_and_expressions():
    W = HalfGraphon()
    e = DecoratedGraph(2, 2, [None, None], [(0, 1)])
    assert tau_rooted(e, W, [0.7, 0.6]).value == 1.0
    assert tau_rooted(e, W, [0.2, 0.6]).value == 0.0
    E = DensityExpression.graph(e)
    assert eval_expression(E - E, W, [0.7, 0.6]).value == 0.0
    W2 = example_two_part_graphon()
    assert eval_expression(E * E, W2, [0.1, 0.7]).value == pytest.approx((1 / 3) ** 2, abs=1e-15)
    other = DecoratedGraph(2, 1, [None, None], [(0, 1)])
    with pytest.raises(IncompatibleError):
        DensityExpression.graph(e) + DensityExpression.graph(other)


def test_expression_parser():
    E = parse_expression("2 * graph(roots=[A]; verts=[x:A]; edge(r1,x)) - 0.5")
    W = example_two_part_graphon()
    assert E.evaluate(W, [0.2]).value == pytest.approx(2 * (2 / 3) - 0.5, abs=1e-14)
    with pytest.raises(ValueError):
        parse_expression("graph(roots=[A]; bogus(r1))")
    with pytest.raises(ValueError):
        parse_constraint("1 == 2 == 3")


def test_zero_tile_constraint():
    text = "graph(roots=[A]; verts=[x:B]; edge(r1,x)) == 0"
    zero = StepGraphon([0.5, 0.5], [[1.0, 0.0], [0.0, 1.0]], names=["A", "B"])
    tilted = StepGraphon([0.5, 0.5], [[1.0, 0.1], [0.1, 1.0]], names=["A", "B"])
    c = parse_constraint(text)
    assert check_constraint_ae(c, zero, samples=200).violation_rate == 0.0
    assert check_constraint_ae(c, tilted, samples=200).violation_rate == 1.0
    same = parse_constraint("graph(roots=[A]; verts=[x:B]; edge(r1,x)) == graph(roots=[A]; verts=[x:B]; edge(r1,x))")
    assert check_constraint_ae(same, tilted, samples=50).violations == 0


def test_typical_pairs_oracle():
    # rows of a step kernel with equal within-part inner products: int F(x,.)^2 equals the common value
    F = StepGraphon([0.5, 0.5], [[0.6, 0.4], [0.4, 0.6]])
    g = np.random.default_rng(0)
    x, xp = g.random(200), g.random(200)
    inner = [float((F.values[F.index(a)] * F.values[F.index(b)]) @ F.sizes) for a, b in zip(x, xp)
             if F.index(a) == F.index(b)]
    assert np.ptp(inner) == 0.0
    sq = float((F.values[0] ** 2) @ F.sizes)
    assert sq == pytest.approx(inner[0], abs=1e-15)


def test_partition_detect():
    W = StepGraphon([0.3, 0.7], [[0.9, 0.1], [0.1, 0.5]])
    parts = partition_detect(W)
    assert [round(p.size, 6) for p in parts] == [0.3, 0.7]
    assert [p.degree for p in parts] == pytest.approx([0.9 * 0.3 + 0.1 * 0.7, 0.1 * 0.3 + 0.5 * 0.7])
    one = partition_detect(constant(0.4))
    assert len(one) == 1 and one[0].size == 1.0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.sampled_from([2, 3, 4]))
def test_densities_sum_to_one(seed, k):
    W = random_step_graphon(seed, 0)
    assert math.fsum(density(H, W, "exact").value for H in iso_classes(k)) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000))
def test_complement_duality(seed):
    # tau(H, W) == tau(complement H, 1 - W)
    W = random_step_graphon(seed, 1)
    Wc = StepGraphon(W.sizes, 1.0 - W.values)
    for H in iso_classes(3):
        assert tau_exact_step(H, W) == pytest.approx(tau_exact_step(H.complement(), Wc), abs=1e-14)
