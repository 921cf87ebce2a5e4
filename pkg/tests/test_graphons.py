import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphonforge import graphons as gr
from graphonforge.density import example_two_part_graphon
from graphonforge.graphons import (HalfGraphon, StepGraphon, constant, coord, degree, entropy, l1_distance,
                                   position_in_coord, relative_degree, render_array, sample_w_random_graph)


@pytest.mark.parametrize("x,k", [(0.3, 1), (0.5, 2), (1.9, 4), (0.0, 1), (0.75, 3)])
def test_coord_examples(x, k):
    assert coord(x) == k


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 1, exclude_max=True))
def test_coord_interval_contains_point(x):
    k = coord(x)
    lo, hi = gr.coord_interval(k)
    assert lo <= x < hi
    assert 0.0 <= position_in_coord(x) < 1.0


def test_degree_examples():
    assert degree(HalfGraphon(), 0.25).value == pytest.approx(0.25, abs=1e-12)
    assert degree(constant(0.5), 0.7).value == pytest.approx(0.5, abs=1e-15)
    W = example_two_part_graphon()
    assert degree(W, 0.2).value == pytest.approx(0.5, abs=1e-12)
    assert relative_degree(W, 0.2, (0.5, 1.0)).value == pytest.approx(1 / 3, abs=1e-12)
    assert relative_degree(constant(0.3), 0.1, (0.0, 1.0)).value == pytest.approx(degree(constant(0.3), 0.1).value)


def test_sampling_extremes_and_determinism():
    g1 = sample_w_random_graph(constant(1.0), 5, seed=1)
    assert len(g1.edges) == 10
    assert sample_w_random_graph(constant(0.0), 5, seed=1).edges == []
    a = sample_w_random_graph(HalfGraphon(), 50, seed=7)
    b = sample_w_random_graph(HalfGraphon(), 50, seed=7)
    assert a.edges == b.edges and np.array_equal(a.points, b.points)
    n, edges = gr.read_edge_list(a.to_text())
    assert n == 50 and edges == a.edges


def test_sampled_edge_density_binomial():
    # 10^4 independent 4-vertex samples: 6 coin flips each at p = 1/2
    hits = sum(len(sample_w_random_graph(constant(0.5), 4, seed=s).edges) for s in range(10_000))
    trials = 6 * 10_000
    sigma = math.sqrt(0.25 / trials)
    assert abs(hits / trials - 0.5) <= 4 * sigma


def test_l1_distance_examples():
    W = example_two_part_graphon()
    assert l1_distance(W, W).value == 0.0
    assert l1_distance(constant(0.0), constant(1.0)).value == 1.0
    assert l1_distance(constant(0.25), constant(0.75)).value == 0.5
    est = l1_distance(HalfGraphon(), constant(0.5), samples=100_000, seed=3)
    assert abs(est.value - 0.5) <= 1e-12  # |1[x+y>=1] - 1/2| is 1/2 everywhere


def test_entropy_examples():
    assert entropy(constant(0.5)).value == pytest.approx(math.log(0.5), abs=1e-15)
    assert entropy(constant(1.0)).value == 0.0
    assert entropy(constant(0.25)).value == pytest.approx(0.25 * math.log(0.25) + 0.75 * math.log(0.75), abs=1e-15)
    assert entropy(HalfGraphon(), 256).value == pytest.approx(0.0, abs=1e-12)


def test_render_extremes(tmp_path):
    assert render_array(constant(1.0), 2).tolist() == [[0, 0], [0, 0]]
    assert render_array(constant(0.0), 2).tolist() == [[255, 255], [255, 255]]
    img = gr.render(HalfGraphon(), 16, tmp_path / "h.pgm")
    assert np.array_equal(gr.read_pgm(tmp_path / "h.pgm"), img)
    assert img[-1, -1] == 0 and img[0, 0] == 255
    assert np.array_equal(img, img.T)


def test_step_graphon_validation():
    with pytest.raises(ValueError):
        StepGraphon([0.5, 0.4], [[1, 0], [0, 1]])
    with pytest.raises(ValueError):
        StepGraphon([0.5, 0.5], [[1, 0.2], [0.3, 1]])
    with pytest.raises(ValueError):
        StepGraphon([0.5, 0.5], [[1.5, 0], [0, 1]])


def test_spec_round_trip(tmp_path):
    W = StepGraphon([0.25, 0.75], [[0.1, 0.2], [0.2, 0.9]], names=["a", "b"])
    back = gr.from_spec(W.to_spec())
    x = np.linspace(0, 0.999, 37)
    assert np.array_equal(back(x[:, None], x[None, :]), W(x[:, None], x[None, :]))
    assert gr.parse_graphon("const:0.4")(0.1, 0.9) == 0.4
    assert isinstance(gr.parse_graphon("half"), HalfGraphon)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_step_graphons_are_symmetric(seed):
    from graphonforge.verify import random_step_graphon

    W = random_step_graphon(seed, 0)
    asym, lo, hi = gr.check_symmetry_and_range(W, pairs=2000, seed=seed)
    assert asym == 0.0 and 0.0 <= lo <= hi <= 1.0
