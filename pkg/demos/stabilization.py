"""Continuation under perturbation and one make-excellent step."""

import math

import numpy as np
from scipy.optimize import brentq

from graphonforge import stabilize as sb


def main():
    def f(x, y):
        return y + 0.5 * np.sin(y) - x

    def g(x):
        return brentq(lambda v: v + 0.5 * math.sin(v) - x, -2, 2, xtol=1e-15)

    for delta in (1e-3, 1e-2, 1e-1):
        def fhat(x, y, d=delta):
            return f(x, y) - d * (1 + x)

        y0 = brentq(lambda v: float(fhat(0.0, v)), -2, 2, xtol=1e-15)
        rep = sb.gronwall_check(f, fhat, g, 0.0, [y0], 0.0, 1.0, tube=0.2)
        print(f"delta {delta:g}: measured {rep.measured:.3e} <= bound {rep.bound:.3e}  (K {rep.K:.3f}, rho {rep.rho:.2e})")

    targets = sb.TargetFunctions.from_expressions(["a1_1 + a1_2 ** 2", "a2_1 * a2_3 + a1_2"])
    system = sb.trivial_system(2)
    for m in (1, 2):
        step = sb.make_excellent_step(system, targets, m)
        print(f"level {m}: {step.certificate}; I={sorted(step.I)} J={sorted(step.J)}; (P1)/(P2) {step.report.passed}")
        system = step.system


if __name__ == "__main__":
    main()
