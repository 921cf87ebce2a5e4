"""Acceptance gate: one group of tests per criterion, at the stated tolerances."""

import os
import subprocess
import sys

import numpy as np

from graphonforge import verify
from graphonforge.graphons import HalfGraphon, render_array


def _check(results, ac):
    r = results[ac]
    budget = verify.REGISTRY[ac].budget
    if budget is not None:
        assert r.elapsed < budget, f"{ac} took {r.elapsed:.2f} s (budget {budget} s)"
    return r


def test_ac1_decorated_caption_values(acceptance_results):
    r = _check(acceptance_results, "AC1")
    targets = sorted(c["target"] for c in r.details["cases"])
    assert np.allclose(targets, sorted([8 / 27, 4 / 9, 16 / 243]), rtol=0, atol=1e-15)
    for c in r.details["cases"]:
        assert abs(c["exact"] - c["target"]) <= 1e-12
        # the 4/9 graph has a constant integrand, so sigma is 0 and only rounding remains
        assert abs(c["mc"] - c["target"]) <= 4 * c["mc_sigma"] + 1e-15
    assert r.passed


def test_ac2_multiset_order(acceptance_results):
    r = _check(acceptance_results, "AC2")
    d = r.details
    assert d["first_four"] == ["{}", "{1}", "{2}", "{1,1}"]
    assert d["grade_bound_1e5"] and d["round_trip_1e4"] and d["grade_counts_match_p"]
    assert d["p40"] == 37338
    assert r.passed


def test_ac3_density_suite(acceptance_results):
    r = _check(acceptance_results, "AC3")
    assert r.details["max_sum_deviation"] <= 1e-9
    assert r.details["pairs"] == 50 and r.details["mc_failures"] == 0
    assert r.passed


def test_ac4_wpz_structure(acceptance_results):
    r = _check(acceptance_results, "AC4")
    d = r.details
    assert d["symmetry_max_deviation"] == 0.0
    assert d["q_identity_max_deviation"] <= 1e-8
    assert d["relative_degree_max_deviation"] <= 1e-6
    assert d["max_degree_spread"] <= 1e-6
    assert d["degree_Q_x2500"] > 1300
    assert d["degree_A_table_x2500"] == 1201
    assert abs(d["degree_A_x2500"] - d["degree_A_construction_x2500"]) <= 2500 * 1e-6
    assert d["degree_A_table_discrepancy"] is True
    assert r.passed


def test_ac5_z_injectivity(acceptance_results):
    r = _check(acceptance_results, "AC5")
    assert r.details["decode_max_error"] <= 1e-9
    assert r.details["diff_violations"] == 0
    assert set(r.details["diff_tiles"]) <= {"CxC", "CxE", "ExC"}
    assert r.passed


def test_ac6_series(acceptance_results):
    r = _check(acceptance_results, "AC6")
    d = r.details
    assert {c["graph"] for c in d["comparisons"]} == {"K2", "K3", "P3"}
    assert len(d["comparisons"]) == 9
    for c in d["comparisons"]:
        assert abs(c["series"] - c["mc"]) <= 3 * c["sigma"]
    assert d["partition_of_unity_deviation"] <= 1e-12
    assert all(c < 1 for c in d["decay_c"].values())
    assert d["strengthening_k"] == list(range(2, 9))
    assert d["strengthening_non_increasing"]
    assert r.passed


def test_ac7_stabilization(acceptance_results):
    r = _check(acceptance_results, "AC7")
    d = r.details
    assert d["grid_points"] >= 1000
    assert d["parabola_residual"] <= 1e-8 and d["shifted_residual"] <= 1e-8
    assert all(g["measured"] <= g["bound"] + 1e-9 for g in d["gronwall"])
    step = d["excellent_step"]
    assert step["grew"] and step["I"] == [1] and step["J"] == [2]
    assert step["report"]["passed"] and step["certificate"].startswith("rank 1")
    assert d["trivial_system_vacuous"]
    assert r.passed


def _cli_verify(threads: str) -> bytes:
    env = dict(os.environ, GRAPHONFORGE_THREADS=threads)
    proc = subprocess.run([sys.executable, "-m", "graphonforge.cli", "verify", "all", "--seed", "0"],
                          capture_output=True, env=env, check=False)
    assert proc.returncode == 0, proc.stderr.decode()
    return proc.stdout


def test_ac8_verify_all_is_byte_identical(acceptance_results):
    in_process = (verify.report(list(acceptance_results.values())) + "\n").encode()
    first = _cli_verify("1")
    assert first == in_process
    assert _cli_verify("2") == first


def test_ac8_half_graphon_render_matches_oracle(acceptance_results):
    r = _check(acceptance_results, "AC8")
    img = render_array(HalfGraphon(), 256)
    assert np.array_equal(img, verify.half_graphon_oracle(256))
    assert r.details["mismatched_pixels"] == 0
    assert r.passed
