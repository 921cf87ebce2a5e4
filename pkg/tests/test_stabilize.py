import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphonforge import stabilize as sb
from graphonforge.bounding import random_bounding_sequence
from graphonforge.density import SmallGraph
from graphonforge.series import assemble_series
from graphonforge.stabilize import (BoxUnion, JacobianFloorError, Level, StabilizingSystem, TargetFunctions,
                                    VariableSystem, ZeroSetError, check_P1_P2, continue_implicit, jacobian_Mk,
                                    make_excellent_step, shrink_zero_set, trivial_system)


def synthetic_system(w):
    U = VariableSystem([(0.25, 0.75)])
    return StabilizingSystem([Level(frozenset({1}), frozenset({1}), 2, np.array([0.25, 0.5]), w)], U)


SYN_T = TargetFunctions.from_expressions(["a1_1 - a1_2 ** 2"])


def test_flat_layout():
    assert sb.block_offset(1) == 0 and sb.block_offset(3) == 5
    assert sb.n_coords(3) == 9


def test_jacobian_examples():
    a = np.full(sb.n_coords(2), 0.5)
    t = TargetFunctions.from_expressions(["a1_1 + 2 * a1_2", "a1_1 * a1_2"])
    assert jacobian_Mk(t, 1, a) == pytest.approx(np.array([[1.0, 2.0]]), abs=1e-9)
    M2 = jacobian_Mk(t, 2, a)
    assert M2.shape == (2, 3) and np.abs(M2).max() == 0.0


def test_expression_gradients_match_central_differences():
    t = TargetFunctions.from_expressions(["sin(a1_1) * a2_3 + a1_2 ** 3", "exp(a2_1 - a2_2)"])
    pts = np.random.default_rng(0).random((20, sb.n_coords(2)))
    assert sb.check_partials(t, pts) <= 1e-5


def test_series_targets_use_exact_gradients():
    P = random_bounding_sequence(0)
    s = assemble_series(SmallGraph.parse("K2"), P, samples=5000)
    t = TargetFunctions.from_series([s])
    a = np.random.default_rng(1).random(6)
    assert t.grad(1, a) == pytest.approx(sb.fd_gradient(t.funcs[0], a), abs=1e-7)


def test_expression_language_is_restricted():
    with pytest.raises(ValueError):
        sb.compile_expression("__import__('os')", "a")
    with pytest.raises(ValueError):
        sb.compile_expression("a1_3", "a")
    f = sb.compile_expression("x + y2", "y", {"x": 2})
    assert f(np.array([0.0, 0.25, 1.0])) == 1.25


def test_check_examples():
    rep = check_P1_P2(trivial_system(3), TargetFunctions.from_expressions(["a1_1", "a2_2 * a1_1", "a3_1"]))
    assert rep.passed and all(l.vacuous for l in rep.levels)
    good = check_P1_P2(synthetic_system(lambda x: np.array([x[0] ** 2, x[0]])), SYN_T).levels[0]
    assert good.min_det == pytest.approx(1.0, abs=1e-8) and good.p2_deviation == 0.0 and good.passed
    bad = check_P1_P2(synthetic_system(lambda x: np.array([x[0], x[0]])), SYN_T).levels[0]
    assert bad.p2_deviation > 0.0 and not bad.passed


def test_continuation_examples():
    tr = continue_implicit(lambda x, y: y - x**2, 0.0, [0.0], 0.0, 1.0, eps=1e-6, reference=lambda x: x**2)
    assert len(tr.xs) >= 1000 and tr.residual <= 1e-8 and tr.tube_deviation <= 1e-8
    d = 1e-3
    tr = continue_implicit(lambda x, y: y - x**2 - d, 0.0, [d], 0.0, 1.0, reference=lambda x: x**2)
    assert tr.tube_deviation == pytest.approx(d, abs=1e-9)
    with pytest.raises(JacobianFloorError, match="Jacobian floor"):
        continue_implicit(lambda x, y: y**2 - x, 1.0, [1.0], 0.0, 1.0)
    with pytest.raises(sb.TubeError):
        continue_implicit(lambda x, y: y - x**2 - d, 0.0, [d], 0.0, 1.0, eps=d / 2, reference=lambda x: x**2)
    with pytest.raises(ValueError):
        continue_implicit(lambda x, y: y - 1.0, 0.0, [0.0], 0.0, 1.0)


def test_continuation_of_a_system_from_an_interior_seed():
    # the unit circle (x, y1) together with y2 = x y1
    def f(x, y):
        return np.array([x**2 + y[0] ** 2 - 1.0, y[1] - x * y[0]])

    tr = continue_implicit(f, 0.0, [1.0, 0.0], -0.6, 0.6,
                           reference=lambda x: np.array([math.sqrt(1 - x**2), x * math.sqrt(1 - x**2)]))
    assert tr.residual <= 1e-8 and tr.tube_deviation <= 1e-8


def test_gronwall_bound_holds():
    def f(x, y):
        return y + 0.5 * np.sin(y) - x

    from scipy.optimize import brentq

    def g(x):
        return brentq(lambda v: v + 0.5 * math.sin(v) - x, -2, 2, xtol=1e-15)

    for delta in (1e-3, 5e-2):
        def fhat(x, y, d=delta):
            return f(x, y) - d * (1.0 + x)

        y0 = brentq(lambda v: float(fhat(0.0, v)), -2, 2, xtol=1e-15)
        rep = sb.gronwall_check(f, fhat, g, 0.0, [y0], 0.0, 1.0, tube=0.2, samples=100)
        assert rep.holds and rep.measured > 0.0


def test_zero_set_examples():
    V = BoxUnion.interval(0.0, 1.0)
    assert shrink_zero_set(V, lambda x: 1.0, 1.0, 0.9) is V
    V2 = shrink_zero_set(V, lambda x: x[0] - 0.5, 1.0, 0.9)
    gap = 1.0 - V2.measure()
    assert 0.0 < gap <= 0.1
    assert not V2.contains([[0.5]])[0]
    with pytest.raises(ZeroSetError):
        shrink_zero_set(V, lambda x: 0.0, 1.0, 0.9)


def test_excellent_step_examples():
    lin = TargetFunctions.from_expressions(["a1_1 + a1_2"])
    step = make_excellent_step(trivial_system(1), lin, 1)
    assert step.grew and len(step.J) == 1 and step.certificate == "rank 1 = |J_1| = 1"
    assert step.report.passed and step.variation <= 1e-6
    again = make_excellent_step(step.system, lin, 1)
    assert not again.grew and again.certificate == "1-excellent"
    const = make_excellent_step(trivial_system(1), TargetFunctions.from_expressions(["0.3"]), 1)
    assert const.certificate == "0-excellent trivially" and not const.grew


def test_excellent_step_on_two_levels():
    t = TargetFunctions.from_expressions(["a1_1 + a1_2 ** 2", "a2_1 * a2_3 + a1_2"])
    s1 = make_excellent_step(trivial_system(2), t, 1)
    s2 = make_excellent_step(s1.system, t, 2)
    assert s1.grew and s2.grew and s2.report.passed
    assert sb.level_variation(s2.system, t, 2, 64) <= 1e-6


def test_saved_stabilizer_reloads():
    t = TargetFunctions.from_expressions(["sin(a1_1) + a1_2 ** 2 + a1_2"])
    step = make_excellent_step(trivial_system(1), t, 1)
    back = StabilizingSystem.from_json(step.system.to_json())
    assert check_P1_P2(back, t).passed


def test_system_validation():
    U = VariableSystem([(0.25, 0.75)])
    with pytest.raises(ValueError):
        StabilizingSystem([Level(frozenset({1}), frozenset(), 2, np.array([0.5, 0.5]))], U)
    with pytest.raises(ValueError):
        StabilizingSystem([Level(frozenset(), frozenset(), 1, np.array([0.9, 0.5]))], U)
    with pytest.raises(ValueError):
        VariableSystem([(0.5, 0.5)])


def test_strength_of_shrunk_system():
    V = VariableSystem([(0.0, 1.0), (0.0, 1.0)])
    assert V.strength(64) == 1.0
    V1 = BoxUnion([[[0.0, 0.4]], [[0.6, 1.0]]])
    V2 = BoxUnion([[[0.0, 0.4], [0.0, 0.5]], [[0.6, 1.0], [0.0, 1.0]]])
    W = VariableSystem([(0.0, 1.0), (0.0, 1.0)], [V1, V2])
    assert W.strength(256) == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)),
                min_size=1, max_size=3))
def test_box_measure_matches_inclusion_exclusion(raw):
    boxes = [[[min(a, b), max(a, b)], [min(c, d), max(c, d)]] for a, b, c, d in raw]
    U = BoxUnion(boxes)

    total = 0.0
    for r in range(1, len(boxes) + 1):
        for combo in itertools.combinations(boxes, r):
            vol = 1.0
            for i in range(2):
                lo = max(bx[i][0] for bx in combo)
                hi = min(bx[i][1] for bx in combo)
                vol *= max(hi - lo, 0.0)
            total += (-1) ** (r + 1) * vol
    assert U.measure() == pytest.approx(total, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-2, 2))
def test_linear_branches_are_exact(x0, slope):
    tr = continue_implicit(lambda x, y: y - slope * x, x0, [slope * x0], 0.0, 1.0, steps=200,
                           reference=lambda x: slope * x)
    assert tr.residual <= 1e-12 and tr.tube_deviation <= 1e-12
