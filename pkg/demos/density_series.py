"""Truncated density series of K3 in W_P(z) against direct sampling."""

import numpy as np

from graphonforge import bounding, series, wpz
from graphonforge.density import SmallGraph, tau_mc


def main():
    P = bounding.random_bounding_sequence(1)
    H = SmallGraph.parse("K3")
    s = series.assemble_series(H, P, samples=300_000, seed=0)
    rep = series.decay_check(s)
    print(f"{len(s.coeffs.coeffs)} coefficients, grade masses {s.grade_masses()}")
    print(f"fitted decay rate c = {rep.c:.3g}")
    g = np.random.default_rng(0)
    for _ in range(3):
        z = g.random(P.z_dim)
        if not P.admissible(z):
            continue
        mc = tau_mc(H, wpz.build_wpz(P, z), samples=300_000, seed=1)
        print(f"series {s.eval(z):.6f} +- {s.sigma(z):.6f}   sampled {mc.value:.6f} +- {mc.error:.6f}")


if __name__ == "__main__":
    main()
