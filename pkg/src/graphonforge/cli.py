"""Command-line entry point.

Every command prints JSON (17 significant digits) to stdout or writes it to
``--out``.  Exit codes: 0 on success, 2 on invalid input, 3 when a budget or
tolerance check fails.  ``GRAPHONFORGE_THREADS`` caps the worker threads;
results do not depend on it.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import _jsonout, bounding, graphons, stabilize, verify, wpz
from .density import SmallGraph, check_constraint_ae, density, parse_constraint, tau
from .series import (InadmissibleWarning, TruncatedSeries, assemble_series, decay_check,
                     partition_of_unity)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_FAILED = 3


class CheckFailed(RuntimeError):
    """A budget or tolerance check did not pass; the report is still emitted."""

    def __init__(self, payload):
        super().__init__("check failed")
        self.payload = payload


# -- helpers ----------------------------------------------------------------------

def _floats(text: str | None) -> list[float] | None:
    if text is None:
        return None
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _emit(args, payload) -> None:
    text = payload if isinstance(payload, str) else _jsonout.dumps(payload) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _bounding(args) -> bounding.BoundingSequence:
    if args.bounding in (None, "trivial"):
        return bounding.trivial(z_dim=args.zdim or bounding.DEFAULT_ZDIM)
    if args.bounding == "random":
        return bounding.random_bounding_sequence(args.seed, z_dim=args.zdim or bounding.DEFAULT_ZDIM)
    return bounding.load(args.bounding)


def _expressions(text: str) -> list[str]:
    """Inline ``expr; expr`` or a JSON file holding a list of expressions."""
    p = Path(text)
    if p.suffix == ".json" and p.exists():
        data = _read_json(p)
        return list(data["targets"] if isinstance(data, dict) else data)
    return [e.strip() for e in text.split(";") if e.strip()]


# -- commands ---------------------------------------------------------------------

def cmd_render(args):
    w = graphons.parse_graphon(args.graphon)
    res = args.resolution or 256
    img = graphons.render_array(w, res)
    if args.out:
        graphons.write_pgm(img, args.out)
    return None if args.out else {"graphon": args.graphon, "resolution": res,
                                  "checksum": int(img.astype(np.int64).sum())}


def cmd_density(args):
    W = graphons.parse_graphon(args.graphon)
    samples = args.samples or 100_000
    if args.constraint:
        rep = check_constraint_ae(parse_constraint(args.constraint), W, samples=min(samples, 10_000),
                                  tolerance=args.tolerance or 1e-6, seed=args.seed, method=args.method)
        out = {"constraint": args.constraint, **rep.to_json()}
        if rep.violations:
            raise CheckFailed(out)
        return out
    H = SmallGraph.parse(args.graph)
    t = tau(H, W, args.method, samples, args.seed)
    d = density(H, W, args.method, samples, args.seed)
    return {"graph": args.graph, "graphon": args.graphon, "method": args.method,
            "tau": t.value, "tau_error": t.error, "density": d.value, "density_error": d.error}


def cmd_sample(args):
    W = graphons.parse_graphon(args.graphon)
    G = graphons.sample_w_random_graph(W, args.n, args.seed)
    return G.to_text()


def cmd_wpz_build(args):
    P = _bounding(args)
    z = _floats(args.z)
    if z is None:
        z = wpz.random_z(args.seed, args.zdim or P.z_dim)
    d_block = graphons.load(args.d_block) if args.d_block else None
    w = wpz.build_wpz(P, z, d_block, args.r_den, strict=args.strict, d_block_path=args.d_block)
    return w.to_spec()


def cmd_wpz_decode(args):
    w = graphons.load(args.inp)
    N = args.zdim or len(_read_json(args.inp).get("z", []))
    z = wpz.decode_z(w, N, tol=args.tolerance or 1e-6)
    return {"z": z}


def cmd_wpz_diff(args):
    w1, w2 = graphons.load(args.inp), graphons.load(args.other)
    rep = wpz.diff_support(w1, w2, args.samples or 100_000, args.seed)
    return {"support": sorted(rep.support), "violations": rep.violations}


def cmd_wpz_degrees(args):
    w = graphons.load(args.inp)
    prof = wpz.part_degree_profile(w, args.samples or 20, args.seed)
    return {"parts": [{"part": d.name, "mean": d.mean, "spread": d.spread, "error": d.error,
                       "closed_form": d.closed_form} for d in prof],
            "crosscheck": wpz.degree_crosscheck(prof)}


def cmd_series_expand(args):
    H = SmallGraph.parse(args.graph)
    P = _bounding(args)
    s = assemble_series(H, P, kmax=args.kmax or 5, imax=args.imax or 64, samples=args.samples or 200_000,
                        seed=args.seed, method=args.method, z_dim=args.zdim)
    out = s.to_json()
    out["bounding"] = P.to_json()
    if args.method == "labelings":
        out["partition_of_unity"] = partition_of_unity(H, P, args.kmax or 5)
    return out


def _load_series(path) -> TruncatedSeries:
    data = _read_json(path)
    coeffs = bounding.MonomialPolynomial.from_json(data["coefficients"])
    P = bounding.BoundingSequence.from_json(data["bounding"]) if data.get("bounding") else None
    return TruncatedSeries(data.get("graph", "?"), coeffs, int(data["imax"]), int(data["z_dim"]),
                           int(data.get("samples", 0)), float(data.get("truncation_bound", 0.0)), P)


def cmd_series_eval(args):
    s = _load_series(args.inp)
    z = _floats(args.z)
    if z is None:
        raise ValueError("--z is required")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", InadmissibleWarning)
        value = s.eval(z, strict=args.strict)
        grad = s.gradient(z, strict=args.strict)
    return {"graph": s.graph, "z": z, "value": float(value), "gradient": grad,
            "admissible": not any(issubclass(c.category, InadmissibleWarning) for c in caught)}


def cmd_series_decay(args):
    data = _read_json(args.inp)
    rep = decay_check({int(k): float(v) for k, v in data["coefficients"].items()})
    out = {"c": rep.c, "residual": rep.residual, "grades": rep.grades, "passed": rep.passed}
    if not rep.passed:
        raise CheckFailed(out)
    return out


def _system(args) -> stabilize.StabilizingSystem:
    return stabilize.StabilizingSystem.from_json(_read_json(args.system))


def cmd_stab_check(args):
    system = _system(args)
    targets = stabilize.TargetFunctions.from_expressions(_expressions(args.targets))
    rep = stabilize.check_P1_P2(system, targets, samples=args.samples or 256, seed=args.seed,
                                tol=args.tolerance or 1e-8)
    out = rep.to_json()
    if not rep.passed:
        raise CheckFailed(out)
    return out


def cmd_stab_continue(args):
    exprs = _expressions(args.f)
    y0 = np.asarray(_floats(args.y0), dtype=float)
    n = len(y0)
    if len(exprs) != n:
        raise ValueError(f"{len(exprs)} equations for {n} unknowns")
    comps = [stabilize.compile_expression(e, "y", {"x": n}) for e in exprs]

    def f(x, y):
        v = np.r_[y, x]
        return np.array([c(v) for c in comps])

    reference = None
    if args.reference:
        refs = [stabilize.compile_expression(e, "y", {"x": 0}) for e in _expressions(args.reference)]

        def reference(x):
            return np.array([r(np.array([x])) for r in refs])

    a, b = _floats(args.interval)
    trace = stabilize.continue_implicit(f, args.x0, y0, a, b, eps=args.tolerance, reference=reference,
                                        steps=args.steps)
    out = {"points": len(trace.xs), "residual": trace.residual, "min_det": trace.min_det,
           "tube_deviation": trace.tube_deviation}
    if args.trace:
        out["trace"] = trace.to_json()
    if trace.residual > 1e-8:
        raise CheckFailed(out)
    return out


def cmd_stab_excellent(args):
    system = _system(args)
    targets = stabilize.TargetFunctions.from_expressions(_expressions(args.targets))
    step = stabilize.make_excellent_step(system, targets, args.level, eps=args.eps,
                                         samples=args.samples or 256, seed=args.seed)
    out = step.to_json()
    out["system"] = step.system.to_json()
    if step.report is not None and not step.report.passed:
        raise CheckFailed(out)
    return out


def cmd_verify(args):
    ids = None if args.which == "all" else [args.which]
    if ids and ids[0] not in verify.REGISTRY:
        raise ValueError(f"unknown check {args.which!r}; choose from {', '.join(verify.REGISTRY)}")
    results = verify.run_all(args.seed, ids)
    text = verify.report(results) + "\n"
    if not all(r.passed for r in results):
        raise CheckFailed(text)
    return text


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="64-bit seed (default 0)")
    common.add_argument("--samples", type=int, help="Monte Carlo budget (command-specific default)")
    common.add_argument("--resolution", type=int, help="render resolution (default 256)")
    common.add_argument("--tolerance", type=float, help="numeric tolerance (command-specific default)")
    common.add_argument("--zdim", type=int, help="number of z coordinates")
    common.add_argument("--kmax", type=int, help="cell truncation for series (default 5)")
    common.add_argument("--imax", type=int, help="largest monomial rank kept (default 64)")
    common.add_argument("--out", help="write the result here instead of stdout")
    common.add_argument("--strict", action="store_true", help="turn warnings into errors")

    p = argparse.ArgumentParser(prog="graphonforge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", parents=[common], help="render a graphon as a PGM image")
    r.add_argument("--graphon", required=True, help="const:<p>, half, or a JSON spec path")
    r.set_defaults(fn=cmd_render)

    d = sub.add_parser("density", parents=[common], help="subgraph densities and decorated constraints")
    d.add_argument("--graphon", required=True)
    d.add_argument("--graph", default="K2", help="K3, P3, C4, edges:0-1,1-2, ...")
    d.add_argument("--method", choices=["auto", "exact", "mc"], default="auto")
    d.add_argument("--constraint", help="decorated constraint text, checked for almost every root tuple")
    d.set_defaults(fn=cmd_density)

    s = sub.add_parser("sample", parents=[common], help="sample a W-random graph as an edge list")
    s.add_argument("--graphon", required=True)
    s.add_argument("--n", type=int, default=100, help="number of vertices")
    s.set_defaults(fn=cmd_sample)

    w = sub.add_parser("wpz", help="the parametrised graphon W_P(z)")
    wsub = w.add_subparsers(dest="action", required=True)
    wb = wsub.add_parser("build", parents=[common])
    wb.add_argument("--bounding", help="bounding JSON path, 'trivial' or 'random'")
    wb.add_argument("--z", help="comma-separated z (default: random from --seed)")
    wb.add_argument("--d-block", dest="d_block", help="step graphon spec for the D block")
    wb.add_argument("--r-den", dest="r_den", type=float, default=25.0)
    wb.set_defaults(fn=cmd_wpz_build)
    for name, fn in (("decode", cmd_wpz_decode), ("diff", cmd_wpz_diff), ("degrees", cmd_wpz_degrees)):
        q = wsub.add_parser(name, parents=[common])
        q.add_argument("--in", dest="inp", required=True, help="W_P(z) JSON spec")
        if name == "diff":
            q.add_argument("--other", required=True, help="second W_P(z) JSON spec")
        q.set_defaults(fn=fn)

    se = sub.add_parser("series", help="truncated density power series")
    ssub = se.add_subparsers(dest="action", required=True)
    sx = ssub.add_parser("expand", parents=[common])
    sx.add_argument("--graph", required=True)
    sx.add_argument("--bounding", help="bounding JSON path, 'trivial' or 'random'")
    sx.add_argument("--method", choices=["stratified", "labelings"], default="stratified")
    sx.set_defaults(fn=cmd_series_expand)
    sv = ssub.add_parser("eval", parents=[common])
    sv.add_argument("--in", dest="inp", required=True, help="coefficient JSON from 'series expand'")
    sv.add_argument("--z", required=True)
    sv.set_defaults(fn=cmd_series_eval)
    sd = ssub.add_parser("decay", parents=[common])
    sd.add_argument("--in", dest="inp", required=True)
    sd.set_defaults(fn=cmd_series_decay)

    st = sub.add_parser("stab", help="stabilizing systems and continuation")
    tsub = st.add_subparsers(dest="action", required=True)
    tc = tsub.add_parser("check", parents=[common])
    tc.add_argument("--system", required=True, help="system JSON")
    tc.add_argument("--targets", required=True, help="'expr; expr' in a{k}_{j}, or a JSON list file")
    tc.set_defaults(fn=cmd_stab_check)
    tn = tsub.add_parser("continue", parents=[common])
    tn.add_argument("--f", required=True, help="'expr; expr' in x and y1..yn")
    tn.add_argument("--x0", type=float, required=True)
    tn.add_argument("--y0", required=True, help="comma-separated seed zero")
    tn.add_argument("--interval", required=True, help="a,b")
    tn.add_argument("--steps", type=int, default=1000)
    tn.add_argument("--reference", help="closed-form branch 'expr; expr' in x, for the tube check")
    tn.add_argument("--trace", action="store_true", help="include the traced points")
    tn.set_defaults(fn=cmd_stab_continue)
    te = tsub.add_parser("excellent", parents=[common])
    te.add_argument("--system", required=True)
    te.add_argument("--targets", required=True)
    te.add_argument("--level", type=int, default=1)
    te.add_argument("--eps", type=float, default=0.05)
    te.set_defaults(fn=cmd_stab_excellent)

    v = sub.add_parser("verify", parents=[common], help="run the acceptance checks")
    v.add_argument("which", nargs="?", default="all", help="'all' or a check id such as AC3")
    v.set_defaults(fn=cmd_verify)
    return p


_FAILURES = (stabilize.JacobianFloorError, stabilize.TubeError, stabilize.ContinuationError,
             stabilize.RankSearchError, wpz.DecodeError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    try:
        payload = args.fn(args)
    except CheckFailed as exc:
        _emit(args, exc.payload)
        return EXIT_FAILED
    except _FAILURES as exc:
        print(f"graphonforge: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"graphonforge: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if payload is not None:
        _emit(args, payload)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
