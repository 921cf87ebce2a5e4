"""Finite stabilizing systems.

Coordinates are arranged in blocks: block ``k`` holds the ``k + 1`` values
``a_{k,1}, ..., a_{k,k+1}`` and the blocks are concatenated into one flat
vector (block ``k`` starts at offset ``(k-1)(k+2)/2``).  Target functions
``t_1, t_2, ...`` act on that flat vector.

A level ``k`` of a stabilizing system fixes an interval ``U_k``, index sets
``I_k``, ``J_k``, a free coordinate ``d_k``, a base point ``b_k`` and a
stabilizer ``w_k``.  The sets ``V_k`` of the variable system are finite
unions of closed boxes, which makes measures and slices exact.
"""

from __future__ import annotations

import ast
import itertools
import math
import operator
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _rng

D_MIN = 1e-8
FD_STEP = 1e-5
RANK_TOL = 1e-7
TABLE_POINTS = 2001


class JacobianFloorError(RuntimeError):
    pass


class TubeError(RuntimeError):
    pass


class ContinuationError(RuntimeError):
    pass


class ZeroSetError(ValueError):
    pass


class RankSearchError(RuntimeError):
    pass


def block_offset(k: int) -> int:
    return (k - 1) * (k + 2) // 2


def n_coords(depth: int) -> int:
    return depth * (depth + 3) // 2


# -- box unions -----------------------------------------------------------------

class BoxUnion:
    """Finite union of closed axis-aligned boxes in ``R^d``."""

    def __init__(self, boxes):
        arr = np.asarray(boxes, dtype=float)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[-1] != 2:
            raise ValueError("boxes must have shape (m, d, 2)")
        if np.any(arr[..., 1] < arr[..., 0]):
            raise ValueError("box with lower bound above upper bound")
        self.boxes = arr

    @classmethod
    def interval(cls, lo: float, hi: float) -> "BoxUnion":
        return cls([[[lo, hi]]])

    @property
    def dim(self) -> int:
        return self.boxes.shape[1]

    def __len__(self) -> int:
        return len(self.boxes)

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo, hi = self.boxes[None, :, :, 0], self.boxes[None, :, :, 1]
        inside = np.all((x[:, None, :] >= lo) & (x[:, None, :] <= hi), axis=2)
        return inside.any(axis=1)

    def measure(self) -> float:
        """Exact Lebesgue measure via coordinate compression."""
        grids = [np.unique(self.boxes[:, i, :]) for i in range(self.dim)]
        mids = [0.5 * (g[1:] + g[:-1]) for g in grids]
        widths = [np.diff(g) for g in grids]
        if any(len(m) == 0 for m in mids):
            return 0.0
        mesh = np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1).reshape(-1, self.dim)
        vol = np.ones(1)
        for w in widths:
            vol = np.multiply.outer(vol, w)
        inside = self.contains(mesh)
        return float(vol.reshape(-1)[inside].sum())

    def slice(self, prefix) -> list[tuple[float, float]]:
        """Merged intervals of the last coordinate over ``prefix``."""
        prefix = np.asarray(prefix, dtype=float).reshape(-1)
        sel = self.boxes
        if len(prefix):
            ok = np.all((prefix >= sel[:, :-1, 0]) & (prefix <= sel[:, :-1, 1]), axis=1)
            sel = sel[ok]
        return merge_intervals(sel[:, -1, :].tolist())

    def slice_measure(self, prefix) -> float:
        return sum(b - a for a, b in self.slice(prefix))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        vol = np.prod(self.boxes[:, :, 1] - self.boxes[:, :, 0], axis=1)
        p = vol / vol.sum() if vol.sum() > 0 else np.full(len(vol), 1.0 / len(vol))
        pick = rng.choice(len(vol), size=n, p=p)
        lo = self.boxes[pick, :, 0]
        hi = self.boxes[pick, :, 1]
        return lo + (hi - lo) * rng.random(lo.shape)

    def product(self, lo: float, hi: float) -> "BoxUnion":
        extra = np.broadcast_to(np.array([lo, hi]), (len(self.boxes), 1, 2))
        return BoxUnion(np.concatenate([self.boxes, extra], axis=1))

    def intervals(self) -> list[tuple[float, float]]:
        if self.dim != 1:
            raise ValueError("intervals() needs a one-dimensional union")
        return merge_intervals(self.boxes[:, 0, :].tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, BoxUnion) or other.dim != self.dim:
            return NotImplemented
        if self.dim == 1:
            return self.intervals() == other.intervals()
        return np.array_equal(np.sort(self.boxes, axis=0), np.sort(other.boxes, axis=0))

    def to_json(self) -> list:
        return self.boxes.tolist()

    def __repr__(self) -> str:
        return f"BoxUnion({len(self.boxes)} boxes, dim={self.dim})"


def merge_intervals(ivs) -> list[tuple[float, float]]:
    out: list[list[float]] = []
    for a, b in sorted((float(a), float(b)) for a, b in ivs):
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


# -- variable systems --------------------------------------------------------------

class VariableSystem:
    """Intervals ``U_1..U_depth`` with closed sets ``V_k`` (``None`` means ``V_{k-1} x U_k``)."""

    def __init__(self, U: Sequence[tuple[float, float]], V: Sequence[BoxUnion | None] | None = None):
        self.U = [(float(a), float(b)) for a, b in U]
        for a, b in self.U:
            if not (0.0 <= a < b <= 1.0):
                raise ValueError(f"U_k must be a non-degenerate closed subinterval of [0, 1], got [{a}, {b}]")
        V = list(V) if V is not None else []
        self._V = V + [None] * (len(self.U) - len(V))
        for k, v in enumerate(self._V, start=1):
            if v is not None and v.dim != k:
                raise ValueError(f"V_{k} must be {k}-dimensional")

    @property
    def depth(self) -> int:
        return len(self.U)

    def V(self, k: int) -> BoxUnion | None:
        """Explicit ``V_k`` (``None`` for ``k = 0``)."""
        if k == 0:
            return None
        if self._V[k - 1] is not None:
            return self._V[k - 1]
        prev = self.V(k - 1)
        lo, hi = self.U[k - 1]
        return BoxUnion.interval(lo, hi) if prev is None else prev.product(lo, hi)

    def explicit(self, k: int) -> bool:
        return self._V[k - 1] is not None

    def sample_prefix(self, k: int, n: int, rng: np.random.Generator) -> np.ndarray:
        """Points of ``V_{k-1} x U_k``."""
        lo, hi = self.U[k - 1]
        last = lo + (hi - lo) * rng.random((n, 1))
        prev = self.V(k - 1)
        if prev is None:
            return last
        return np.concatenate([prev.sample(rng, n), last], axis=1)

    def sample(self, k: int, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.V(k).sample(rng, n)

    def strength(self, samples: int = 256, seed: int = 0) -> float:
        """Smallest sampled ratio ``|{x': (x, x') in V_k}| / |U_k|``."""
        worst = 1.0
        for k in range(1, self.depth + 1):
            Vk = self.V(k)
            size = self.U[k - 1][1] - self.U[k - 1][0]
            if k == 1:
                worst = min(worst, Vk.slice_measure([]) / size)
                continue
            g = _rng.generator(seed, "strength", k)
            prev = self.V(k - 1)
            for x in prev.sample(g, samples):
                worst = min(worst, Vk.slice_measure(x) / size)
        return worst

    def with_V(self, k: int, V: BoxUnion) -> "VariableSystem":
        vs = list(self._V)
        vs[k - 1] = V
        # later explicit sets must shrink with V_k
        for j in range(k + 1, self.depth + 1):
            if vs[j - 1] is not None:
                keep = V.contains(vs[j - 1].boxes[:, :k, 0]) & V.contains(vs[j - 1].boxes[:, :k, 1])
                vs[j - 1] = BoxUnion(vs[j - 1].boxes[keep])
            V = vs[j - 1] if vs[j - 1] is not None else V.product(*self.U[j - 1])
        return VariableSystem(self.U, vs)

    def to_json(self) -> dict:
        return {"U": [list(u) for u in self.U], "V": [None if v is None else v.to_json() for v in self._V]}


# -- targets -------------------------------------------------------------------

class TargetFunctions:
    """``t_1, t_2, ...`` on the flat coordinate vector, with partial derivatives.

    ``grads`` (optional) supplies exact gradients; otherwise central
    differences with step ``h`` are used.
    """

    def __init__(self, funcs: Sequence[Callable], grads: Sequence[Callable] | None = None, h: float = FD_STEP,
                 names: Sequence[str] | None = None):
        self.funcs = list(funcs)
        self.grads = list(grads) if grads is not None else None
        self.h = h
        self.names = list(names) if names is not None else [f"t{i + 1}" for i in range(len(self.funcs))]

    def __len__(self) -> int:
        return len(self.funcs)

    def value(self, i: int, a) -> float:
        return float(self.funcs[i - 1](np.asarray(a, dtype=float)))

    def grad(self, i: int, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if self.grads is not None:
            return np.asarray(self.grads[i - 1](a), dtype=float)
        return fd_gradient(self.funcs[i - 1], a, self.h)

    @classmethod
    def from_series(cls, series: Sequence) -> "TargetFunctions":
        """Targets given by truncated series; ``z_n`` is the ``n``-th flat coordinate."""

        def val(s):
            def f(a):
                return float(s.coeffs.eval(_pad(a, s.z_dim)))
            return f

        def grad(s):
            def g(a):
                full = np.zeros(len(a))
                gz = s.coeffs.gradient(_pad(a, s.z_dim))
                m = min(len(a), len(gz))
                full[:m] = gz[:m]
                return full
            return g

        return cls([val(s) for s in series], [grad(s) for s in series], names=[s.graph for s in series])

    @classmethod
    def from_expressions(cls, exprs: Sequence[str]) -> "TargetFunctions":
        """Targets written with variables ``a{k}_{j}`` (block ``k``, entry ``j``)."""
        return cls([compile_expression(e, "a") for e in exprs], names=list(exprs))


def _pad(a, n):
    a = np.asarray(a, dtype=float)
    if len(a) >= n:
        return a[:n]
    return np.concatenate([a, np.zeros(n - len(a))])


def fd_gradient(f: Callable, a: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    g = np.empty(len(a))
    for i in range(len(a)):
        up = a.copy()
        dn = a.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2.0 * h)
    return g


def check_partials(targets: TargetFunctions, points: np.ndarray, tol: float = 1e-5) -> float:
    """Largest gap between provided partials and central differences."""
    worst = 0.0
    for i in range(1, len(targets) + 1):
        for a in np.atleast_2d(points):
            gap = np.abs(targets.grad(i, a) - fd_gradient(targets.funcs[i - 1], a, targets.h)).max()
            worst = max(worst, float(gap))
    if worst > tol:
        raise ValueError(f"partials disagree with central differences by {worst:.3g}")
    return worst


# -- small expression language ------------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
           ast.Pow: operator.pow}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs}


def compile_expression(text: str, var: str, names: dict[str, int] | None = None) -> Callable:
    """Arithmetic in variables ``{var}{k}`` or ``{var}{k}_{j}`` with a few functions.

    ``x3`` is the third entry (1-based) of the argument vector; ``a2_1`` is
    entry 1 of block 2 of the flat vector.  ``names`` binds extra plain
    names to 0-based positions of the argument vector.
    """
    names = dict(names or {})
    tree = ast.parse(text, mode="eval")

    def index(name: str) -> int:
        body = name[len(var):]
        if "_" in body:
            k, j = (int(v) for v in body.split("_"))
            if not 1 <= j <= k + 1:
                raise ValueError(f"{name}: entry out of range for block {k}")
            return block_offset(k) + j - 1
        return int(body) - 1

    def ev(node, x):
        if isinstance(node, ast.Expression):
            return ev(node.body, x)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in names:
                return x[names[node.id]]
            if node.id.startswith(var) and node.id[len(var):].replace("_", "").isdigit():
                return x[index(node.id)]
            if node.id == "pi":
                return math.pi
            raise ValueError(f"unknown name {node.id!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left, x), ev(node.right, x))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand, x)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
            return _FUNCS[node.func.id](*[ev(a, x) for a in node.args])
        raise ValueError(f"unsupported expression element in {text!r}")

    ev(tree, np.full(64, 0.5))  # fail early on syntax outside the language

    def f(x):
        return float(ev(tree, np.asarray(x, dtype=float)))

    f.__doc__ = text
    return f


# -- stabilizing systems --------------------------------------------------------------

@dataclass
class Level:
    I: frozenset
    J: frozenset
    d: int
    b: np.ndarray
    w: Callable | None = None      # x (length k) -> block (length k + 1)
    w_text: list | None = None

    def block(self, x) -> np.ndarray:
        """Extended stabilizer: ``w`` on ``J`` and ``d``, ``b`` elsewhere."""
        x = np.asarray(x, dtype=float)
        out = self.b.copy()
        if self.w is None:
            out[self.d - 1] = x[-1]
            return out
        raw = np.asarray(self.w(x), dtype=float)
        for i in list(self.J) + [self.d]:
            out[i - 1] = raw[i - 1]
        return out


def identity_level(k: int, b) -> Level:
    return Level(frozenset(), frozenset(), 1, np.asarray(b, dtype=float))


class StabilizingSystem:
    def __init__(self, levels: Sequence[Level], variables: VariableSystem):
        self.levels = list(levels)
        self.variables = variables
        if len(self.levels) != variables.depth:
            raise ValueError("one level per interval U_k is required")
        for k, lev in enumerate(self.levels, start=1):
            self._validate(k, lev)

    def _validate(self, k: int, lev: Level) -> None:
        if len(lev.b) != k + 1:
            raise ValueError(f"b_{k} must have {k + 1} entries")
        if not set(lev.I) <= set(range(1, k + 1)):
            raise ValueError(f"I_{k} must be a subset of [{k}]")
        if not set(lev.J) <= set(range(1, k + 2)):
            raise ValueError(f"J_{k} must be a subset of [{k + 1}]")
        if len(lev.I) != len(lev.J):
            raise ValueError(f"|I_{k}| must equal |J_{k}|")
        if lev.d in lev.J or not 1 <= lev.d <= k + 1:
            raise ValueError(f"d_{k} must lie in [{k + 1}] minus J_{k}")
        if np.any(lev.b <= 0) or np.any(lev.b >= 1):
            raise ValueError(f"b_{k} must lie in (0, 1)^{k + 1}")
        lo, hi = self.variables.U[k - 1]
        if not lo < lev.b[lev.d - 1] < hi:
            raise ValueError(f"b_{{{k},d_{k}}} must be interior to U_{k}")

    @property
    def depth(self) -> int:
        return len(self.levels)

    def point(self, k: int, x) -> np.ndarray:
        """``(w~_{<=k}(x), b_{>k})`` as a flat vector."""
        x = np.asarray(x, dtype=float)
        blocks = [self.levels[j - 1].block(x[:j]) for j in range(1, k + 1)]
        blocks += [self.levels[j - 1].b for j in range(k + 1, self.depth + 1)]
        return np.concatenate(blocks)

    def base_point(self, k: int, x) -> np.ndarray:
        """``(w~_{<=k-1}(x_1..x_{k-1}), b_k, b_{>k})``."""
        x = np.asarray(x, dtype=float)
        blocks = [self.levels[j - 1].block(x[:j]) for j in range(1, k)]
        blocks += [self.levels[j - 1].b for j in range(k, self.depth + 1)]
        return np.concatenate(blocks)

    def stabilizer_defects(self, samples: int = 64, seed: int = 0) -> float:
        """Largest violation of ``w_k(x)_d = x_k`` and ``w_k(x, b_d)_J = b_J``."""
        worst = 0.0
        for k, lev in enumerate(self.levels, start=1):
            if lev.w is None:
                continue
            g = _rng.generator(seed, "defects", k)
            for x in self.variables.sample_prefix(k, samples, g):
                worst = max(worst, abs(float(np.asarray(lev.w(x))[lev.d - 1]) - x[-1]))
                xb = x.copy()
                xb[-1] = lev.b[lev.d - 1]
                raw = np.asarray(lev.w(xb), dtype=float)
                for i in lev.J:
                    worst = max(worst, abs(raw[i - 1] - lev.b[i - 1]))
        return worst

    def to_json(self) -> dict:
        return {"variables": self.variables.to_json(),
                "levels": [{"I": sorted(l.I), "J": sorted(l.J), "d": l.d, "b": l.b.tolist(), "w": l.w_text}
                           for l in self.levels]}

    @classmethod
    def from_json(cls, data: dict) -> "StabilizingSystem":
        var = data["variables"]
        V = [None if v is None else BoxUnion(v) for v in var.get("V", [])]
        vs = VariableSystem([tuple(u) for u in var["U"]], V)
        levels = []
        for k, ld in enumerate(data["levels"], start=1):
            w_text = ld.get("w")
            w = None
            if isinstance(w_text, dict):
                w = _table_stabilizer(w_text["table"])
            elif w_text is not None:
                if len(w_text) != k + 1:
                    raise ValueError(f"w_{k} needs {k + 1} entries (null where unused)")
                parts = [None if e is None else compile_expression(str(e), "x") for e in w_text]

                def w(x, parts=parts):
                    return np.array([np.nan if p is None else p(x) for p in parts])
            levels.append(Level(frozenset(ld.get("I", [])), frozenset(ld.get("J", [])), int(ld.get("d", 1)),
                                np.asarray(ld["b"], dtype=float), w, w_text))
        return cls(levels, vs)


def _table_stabilizer(table: dict) -> Callable:
    """Piecewise-linear stabilizer in the last coordinate from a saved table."""
    xs = np.asarray(table["x"], dtype=float)
    ys = np.asarray(table["y"], dtype=float)
    if ys.ndim != 2 or len(xs) != len(ys) or np.any(np.diff(xs) <= 0):
        raise ValueError("stabilizer table needs increasing x and one row of y per x")

    def w(x):
        t = float(np.asarray(x, dtype=float)[-1])
        return np.array([np.interp(t, xs, ys[:, i]) for i in range(ys.shape[1])])
    return w


def trivial_system(depth: int, b: float = 0.5, radius: float = 0.25) -> StabilizingSystem:
    """Empty index sets everywhere and identity stabilizers."""
    U = [(b - radius, b + radius)] * depth
    return StabilizingSystem([identity_level(k, np.full(k + 1, b)) for k in range(1, depth + 1)],
                             VariableSystem(U))


# -- (P1) and (P2) ---------------------------------------------------------------------

def jacobian_Mk(targets: TargetFunctions, k: int, a) -> np.ndarray:
    """``M_k(a)``: partials of ``t_1..t_k`` with respect to block ``k``."""
    if len(targets) < k:
        raise ValueError(f"M_{k} needs targets t_1..t_{k}")
    a = np.asarray(a, dtype=float)
    off = block_offset(k)
    if len(a) < off + k + 1:
        raise ValueError(f"point has no block {k}")
    return np.array([targets.grad(i, a)[off:off + k + 1] for i in range(1, k + 1)])


def _sub(M: np.ndarray, I, J) -> np.ndarray:
    return M[np.ix_([i - 1 for i in sorted(I)], [j - 1 for j in sorted(J)])]


@dataclass
class LevelReport:
    k: int
    vacuous: bool
    min_det: float
    p2_deviation: float
    passed: bool


@dataclass
class StabilityReport:
    levels: list[LevelReport]

    @property
    def passed(self) -> bool:
        return all(l.passed for l in self.levels)

    def to_json(self) -> dict:
        return {"passed": self.passed, "levels": [
            {"k": l.k, "vacuous": l.vacuous, "min_det": l.min_det, "p2_deviation": l.p2_deviation,
             "passed": l.passed} for l in self.levels]}


def check_P1_P2(system: StabilizingSystem, targets: TargetFunctions, samples: int = 256, seed: int = 0,
                d_min: float = D_MIN, tol: float = 1e-8) -> StabilityReport:
    """Smallest ``|det|`` of the ``I_k x J_k`` block and largest (P2) gap over sampled points."""
    out = []
    for k, lev in enumerate(system.levels, start=1):
        if not lev.I:
            out.append(LevelReport(k, True, math.inf, 0.0, True))
            continue
        g = _rng.generator(seed, "p1p2", k)
        xs = system.variables.sample_prefix(k, samples, g)
        min_det = math.inf
        for x in xs:
            M = jacobian_Mk(targets, k, system.point(k, x))
            min_det = min(min_det, abs(float(np.linalg.det(_sub(M, lev.I, lev.J)))))
        dev = 0.0
        for x in system.variables.sample(k, samples, g):
            a1, a0 = system.point(k, x), system.base_point(k, x)
            for i in lev.I:
                dev = max(dev, abs(targets.value(i, a1) - targets.value(i, a0)))
        out.append(LevelReport(k, False, min_det, dev, min_det >= d_min and dev <= tol))
    return StabilityReport(out)


def level_variation(system: StabilizingSystem, targets: TargetFunctions, k: int, samples: int = 256,
                    seed: int = 0) -> float:
    """``max |t_l(w~_{<=k}(x), b_{>k}) - t_l(w~_{<=k-1}, b_k, b_{>k})|`` over ``l <= k``."""
    g = _rng.generator(seed, "variation", k)
    worst = 0.0
    for x in system.variables.sample_prefix(k, samples, g):
        a1, a0 = system.point(k, x), system.base_point(k, x)
        for l in range(1, min(k, len(targets)) + 1):
            worst = max(worst, abs(targets.value(l, a1) - targets.value(l, a0)))
    return worst


# -- continuation ------------------------------------------------------------------

@dataclass
class Trace:
    xs: np.ndarray
    ys: np.ndarray
    residual: float
    min_det: float
    tube_deviation: float | None = None

    def __call__(self, x) -> np.ndarray:
        """Linear interpolation of the traced branch (for plotting and seeding)."""
        return np.array([np.interp(x, self.xs, self.ys[:, i]) for i in range(self.ys.shape[1])]).T

    def to_json(self) -> dict:
        return {"x": self.xs.tolist(), "y": self.ys.tolist(), "residual": self.residual,
                "min_det": self.min_det, "tube_deviation": self.tube_deviation}


def _as_vec(v) -> np.ndarray:
    return np.atleast_1d(np.asarray(v, dtype=float))


def _jacobians(f, x, y, h, jac):
    if jac is not None:
        A, hx = jac(x, y)
        return np.atleast_2d(np.asarray(A, dtype=float)), _as_vec(hx)
    n = len(y)
    A = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        A[:, i] = (_as_vec(f(x, y + e)) - _as_vec(f(x, y - e))) / (2 * h)
    hx = (_as_vec(f(x + h, y)) - _as_vec(f(x - h, y))) / (2 * h)
    return A, hx


def newton(f, x: float, y: np.ndarray, h: float = FD_STEP, jac=None, tol: float = 1e-13,
           d_min: float = D_MIN, max_iter: int = 60) -> np.ndarray:
    """Newton iteration in ``y``; stops once the residual is below ``tol`` and the step is negligible.

    Iterating to a negligible step (rather than stopping at the residual
    tolerance) lets singular roots surface as a Jacobian floor error.
    """
    y = y.copy()
    for _ in range(max_iter):
        r = _as_vec(f(x, y))
        if not np.abs(r).max():
            return y
        A, _ = _jacobians(f, x, y, h, jac)
        if abs(np.linalg.det(A)) < d_min:
            raise JacobianFloorError(f"Jacobian floor reached at x={x:.6g} (|det| < {d_min:g})")
        step = np.linalg.solve(A, r)
        y -= step
        if np.abs(r).max() <= tol and np.abs(step).max() <= 1e-15 * (1.0 + np.abs(y).max()):
            return y
    r = _as_vec(f(x, y))
    if np.abs(r).max() > max(tol, 1e-10):
        raise ContinuationError(f"corrector failed to converge at x={x:.6g} (residual {np.abs(r).max():.3g})")
    return y


def continue_implicit(f: Callable, x0: float, y0, a: float, b: float, eps: float | None = None,
                      reference: Callable | None = None, steps: int = 1000, d_min: float = D_MIN,
                      h: float = FD_STEP, jac: Callable | None = None, tol: float = 1e-12) -> Trace:
    """Trace ``y = g(x)`` with ``f(x, g(x)) = 0`` over ``[a, b]`` from ``(x0, y0)``.

    Euler predictor along ``y' = -A^{-1} h`` (``A = df/dy``, ``h = df/dx``)
    and a Newton corrector at every grid point.  Raises
    :class:`JacobianFloorError` when ``|det A|`` drops below ``d_min`` and
    :class:`TubeError` when the trace leaves the ``eps``-tube around
    ``reference``.
    """
    if not a <= x0 <= b:
        raise ValueError("x0 must lie in [a, b]")
    y0 = _as_vec(y0).copy()
    if np.abs(_as_vec(f(x0, y0))).max() > 1e-10:
        raise ValueError("seed is not a zero of f (tolerance 1e-10)")
    grid = np.unique(np.r_[np.linspace(a, b, steps + 1), x0])
    i0 = int(np.searchsorted(grid, x0))
    ys = np.empty((len(grid), len(y0)))
    ys[i0] = y0
    min_det = math.inf
    for order in (range(i0 + 1, len(grid)), range(i0 - 1, -1, -1)):
        y = y0.copy()
        prev = i0
        for i in order:
            x = grid[prev]
            A, hx = _jacobians(f, x, y, h, jac)
            det = abs(float(np.linalg.det(A)))
            min_det = min(min_det, det)
            if det < d_min:
                raise JacobianFloorError(f"Jacobian floor reached at x={x:.6g} (|det| < {d_min:g})")
            y = y - (grid[i] - x) * np.linalg.solve(A, hx)
            y = newton(f, grid[i], y, h, jac, tol, d_min)
            A, _ = _jacobians(f, grid[i], y, h, jac)
            det = abs(float(np.linalg.det(A)))
            min_det = min(min_det, det)
            if det < d_min:
                raise JacobianFloorError(f"Jacobian floor reached at x={grid[i]:.6g} (|det| < {d_min:g})")
            if reference is not None and eps is not None:
                gap = np.abs(y - _as_vec(reference(grid[i]))).max()
                if gap > eps:
                    raise TubeError(f"trace left the {eps:g}-tube at x={grid[i]:.6g}")
            ys[i] = y
            prev = i
    residual = max(float(np.abs(_as_vec(f(x, y))).max()) for x, y in zip(grid, ys))
    tube = None
    if reference is not None:
        tube = max(float(np.abs(y - _as_vec(reference(x))).max()) for x, y in zip(grid, ys))
    return Trace(grid, ys, residual, min_det, tube)


@dataclass
class GronwallReport:
    measured: float
    bound: float
    K: float
    rho: float
    eps0: float
    n: int

    @property
    def holds(self) -> bool:
        # the traced solutions carry solver residuals of order 1e-12
        return self.measured <= self.bound + 1e-9


def slope_field(f, x, y, h=FD_STEP, jac=None) -> np.ndarray:
    A, hx = _jacobians(f, x, y, h, jac)
    return -np.linalg.solve(A, hx)


def gronwall_check(f: Callable, fhat: Callable, g: Callable, x0: float, y0hat, a: float, b: float,
                   tube: float = 0.1, samples: int = 400, seed: int = 0, steps: int = 1000) -> GronwallReport:
    """Trace ``fhat`` and compare its deviation from ``g`` with the Grönwall-type bound.

    ``K = 2 Lip_y(m)`` and ``rho = sup |m - m_hat|_2`` are estimated by
    sampling the ``tube``-neighbourhood of ``g`` over ``[a, b]``, where
    ``m = -A^{-1} h`` is the slope field of ``f``.  The bound is
    ``sqrt(n eps0^2 + rho/(K+rho)) * exp((b-a)(K+rho)/2)``.
    """
    y0hat = _as_vec(y0hat)
    n = len(y0hat)
    tr = continue_implicit(fhat, x0, y0hat, a, b, steps=steps)
    ref = np.array([_as_vec(g(x)) for x in tr.xs])
    measured = float(np.sqrt(((tr.ys - ref) ** 2).sum(axis=1)).max())
    eps0 = float(np.abs(_as_vec(g(x0)) - y0hat).max())
    rng = _rng.generator(seed, "gronwall")
    lip = 0.0
    rho = 0.0
    for _ in range(samples):
        x = a + (b - a) * rng.random()
        base = _as_vec(g(x))
        y1 = base + tube * (2 * rng.random(n) - 1)
        y2 = base + tube * (2 * rng.random(n) - 1)
        m1, m2 = slope_field(f, x, y1), slope_field(f, x, y2)
        dist = float(np.linalg.norm(y1 - y2))
        if dist > 1e-9:
            lip = max(lip, float(np.linalg.norm(m1 - m2)) / dist)
        rho = max(rho, float(np.linalg.norm(m1 - slope_field(fhat, x, y1))))
    K = 2.0 * lip
    tail = rho / (K + rho) if K + rho > 0 else 0.0
    bound = math.sqrt(n * eps0 ** 2 + tail) * math.exp((b - a) * (K + rho) / 2.0)
    return GronwallReport(measured, bound, K, rho, eps0, n)


# -- zero sets -----------------------------------------------------------------------

def shrink_zero_set(V: BoxUnion, T: Callable, c: float, c_prime: float, U_size: float | None = None,
                    resolution: int = 64, max_refine: int = 8, samples: int = 1000, seed: int = 0,
                    floor: float = 1e-12) -> BoxUnion:
    """Closed ``V' ⊆ V`` avoiding the zeros of ``T`` while keeping slices of measure ``>= c' |U|``.

    Each box is cut into a grid; cells where ``T`` changes sign or comes
    within ``floor`` of zero at a corner or the centre are removed.  The
    grid is refined until the retained slices are large enough.  This is a
    sampling heuristic: ``T`` is not certified analytic.
    """
    if not 0 < c_prime < c:
        raise ValueError("need 0 < c' < c")
    g = _rng.generator(seed, "zeroset")
    pts = V.sample(g, samples)
    vals = np.abs(_vec_eval(T, pts))
    if vals.max() <= floor:
        raise ZeroSetError("cannot certify that T is not identically zero on V")
    d = V.dim
    if U_size is None:
        U_size = float(V.boxes[:, -1, 1].max() - V.boxes[:, -1, 0].min())
    n = resolution
    for _ in range(max_refine):
        cells, bad = _grid_cells(V, T, n, floor)
        if not bad.any():
            return V
        kept = BoxUnion(cells[~bad]) if (~bad).any() else None
        if kept is not None and _retention(kept, V, d, U_size, g) >= c_prime:
            return _merge_cells(kept)
        n *= 2
    raise ZeroSetError("could not keep enough measure away from the zeros of T")


def _vec_eval(T, pts: np.ndarray) -> np.ndarray:
    return np.array([float(T(p)) for p in pts])


def _grid_cells(V: BoxUnion, T, n: int, floor: float):
    d = V.dim
    per = max(2, int(round(n ** (1.0 / d)))) if d > 1 else n
    cells = []
    for box in V.boxes:
        edges = [np.linspace(lo, hi, per + 1) for lo, hi in box]
        for idx in itertools.product(range(per), repeat=d):
            cells.append([[edges[i][j], edges[i][j + 1]] for i, j in enumerate(idx)])
    cells = np.array(cells)
    corners = np.array(list(itertools.product((0, 1), repeat=d)))
    probe = [cells[:, np.arange(d), c] for c in corners] + [cells.mean(axis=2)]
    vals = np.stack([_vec_eval(T, p) for p in probe], axis=1)
    bad = (np.abs(vals) <= floor).any(axis=1) | ((vals > 0).any(axis=1) & (vals < 0).any(axis=1))
    return cells, bad


def _retention(kept: BoxUnion, V: BoxUnion, d: int, U_size: float, g) -> float:
    if d == 1:
        return kept.slice_measure([]) / U_size
    worst = 1.0
    for x in V.sample(g, 256)[:, :-1]:
        if V.slice_measure(x) > 0:
            worst = min(worst, kept.slice_measure(x) / U_size)
    return worst


def _merge_cells(cells: BoxUnion) -> BoxUnion:
    if cells.dim == 1:
        return BoxUnion([[[a, b]] for a, b in cells.intervals()])
    return cells


# -- excellence -------------------------------------------------------------------

@dataclass
class ExcellentStep:
    system: StabilizingSystem
    certificate: str
    grew: bool
    rank: int
    I: frozenset
    J: frozenset
    report: StabilityReport | None = None
    variation: float = 0.0
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"certificate": self.certificate, "grew": self.grew, "rank": self.rank, "I": sorted(self.I),
                "J": sorted(self.J), "variation": self.variation,
                "report": None if self.report is None else self.report.to_json(), "notes": self.notes}


def max_rank(system: StabilizingSystem, targets: TargetFunctions, m: int, samples: int = 256, seed: int = 0,
             rank_tol: float = RANK_TOL) -> tuple[int, np.ndarray]:
    """Largest sampled rank of ``M_m`` over ``V_{m-1} x U_m`` and a point attaining it.

    Among points of maximal rank the one with ``x_m`` closest to
    ``b_{m,d_m}`` is returned.
    """
    lev = system.levels[m - 1]
    g = _rng.generator(seed, "rank", m)
    xs = system.variables.sample_prefix(m, samples, g)
    centre = xs.copy()
    centre[:, -1] = lev.b[lev.d - 1]
    xs = np.concatenate([centre[:1], xs])
    ranks = np.array([np.linalg.matrix_rank(jacobian_Mk(targets, m, system.point(m, x)), tol=rank_tol)
                      for x in xs])
    r = int(ranks.max())
    cand = xs[ranks == r]
    best = cand[np.argmin(np.abs(cand[:, -1] - lev.b[lev.d - 1]))]
    return r, best


def _extend_indices(M: np.ndarray, I: frozenset, J: frozenset, r: int, d: int) -> tuple[frozenset, frozenset]:
    """Index sets ``I' ⊇ I``, ``J' ⊇ J`` of size ``r`` maximizing ``|det|``; ``d`` is avoided if possible."""
    k, cols = M.shape
    rows_free = [i for i in range(1, k + 1) if i not in I]
    cols_free = [j for j in range(1, cols + 1) if j not in J]
    need = r - len(I)
    for avoid in (True, False):
        best, best_det = None, 0.0
        for extra_i in itertools.combinations(rows_free, need):
            for extra_j in itertools.combinations(cols_free, need):
                if (avoid and d in extra_j) or len(J) + need >= cols:
                    continue   # some coordinate must stay free for d
                I2, J2 = I | set(extra_i), J | set(extra_j)
                det = abs(float(np.linalg.det(_sub(M, I2, J2))))
                if det > best_det:
                    best, best_det = (frozenset(I2), frozenset(J2)), det
        if best is not None and best_det > RANK_TOL:
            return best
    raise RankSearchError("no invertible extension of the index sets")


def make_excellent_step(system: StabilizingSystem, targets: TargetFunctions, m: int, eps: float = 0.05,
                        c_prime: float = 0.5, samples: int = 256, seed: int = 0,
                        rank_tol: float = RANK_TOL, tries: int = 8) -> ExcellentStep:
    """Grow ``I_m`` and ``J_m`` at level ``m`` or certify that the level is already excellent.

    The base point ``b_m`` moves to ``w~_m(x)`` at a sampled point of maximal
    rank close to ``b_{m,d_m}``; the index sets are extended to an
    invertible block of that rank, and the new stabilizer is obtained by
    continuation over an interval of half-width at most ``eps`` around the
    new ``b'_{m,d'}``.  Levels above ``m`` become trivial on intervals of
    half-width ``eps``.  Stabilizers below ``m`` are kept as they are; the
    returned report re-checks (P1) and (P2) on every level, so a lower level
    disturbed by the move of ``b_m`` shows up there.
    """
    lev = system.levels[m - 1]
    r, x_star = max_rank(system, targets, m, samples, seed, rank_tol)
    if r <= len(lev.J):
        cert = "0-excellent trivially" if r == 0 else f"{m}-excellent"
        return ExcellentStep(system, cert, False, r, lev.I, lev.J)
    b_new = lev.block(x_star)
    prefix = x_star[:-1]
    a_star = system.point(m, x_star)
    M = jacobian_Mk(targets, m, a_star)
    I2, J2 = _extend_indices(M, lev.I, lev.J, r, lev.d)
    d2 = lev.d if lev.d not in J2 else min(set(range(1, m + 2)) - J2)
    b_new = np.clip(b_new, 1e-9, 1 - 1e-9)
    Jl = sorted(J2)
    Il = sorted(I2)
    notes = []

    def residual_fn(pref):
        head = [system.levels[j - 1].block(pref[:j]) for j in range(1, m)]
        tail = [system.levels[j - 1].b for j in range(m + 1, system.depth + 1)]
        base = np.concatenate(head + [b_new] + tail)
        base_vals = np.array([targets.value(i, base) for i in Il])
        off = block_offset(m)

        def F(x, y):
            a = base.copy()
            a[off + d2 - 1] = x
            a[[off + j - 1 for j in Jl]] = y
            return np.array([targets.value(i, a) for i in Il]) - base_vals
        return F

    # keep V_{m-1} away from the zeros of the new Jacobian block
    variables = system.variables
    if m > 1:
        def T(pref):
            head = [system.levels[j - 1].block(pref[:j]) for j in range(1, m)]
            tail = [system.levels[j - 1].b for j in range(m + 1, system.depth + 1)]
            a = np.concatenate(head + [b_new] + tail)
            return float(np.linalg.det(_sub(jacobian_Mk(targets, m, a), I2, J2)))
        Vp = variables.V(m - 1)
        size = variables.U[m - 2][1] - variables.U[m - 2][0]
        strength = variables.strength(64, seed)
        V_new = shrink_zero_set(Vp, T, max(strength, c_prime + 1e-9), c_prime, size, seed=seed)
        if V_new is not Vp:
            variables = variables.with_V(m - 1, V_new)
            notes.append(f"V_{m - 1} shrunk to avoid zeros of the Jacobian block")

    centre = float(b_new[d2 - 1])
    half = eps
    traces: dict = {}
    for _ in range(tries):
        lo, hi = max(centre - half, 0.0), min(centre + half, 1.0)
        try:
            F0 = residual_fn(prefix)
            tr = continue_implicit(F0, centre, b_new[[j - 1 for j in Jl]], lo, hi, steps=200)
            if np.abs(tr.ys - b_new[[j - 1 for j in Jl]]).max() > eps * (1 + 1e-9):
                raise TubeError("stabilizer leaves the eps-box around b'")
            traces[tuple(np.round(prefix, 12))] = tr
            break
        except (JacobianFloorError, TubeError, ContinuationError) as exc:
            notes.append(f"interval half-width {half:g} rejected: {exc}")
            half /= 2.0
    else:
        raise RankSearchError("no interval around b' supports a stabilizer")

    def w_new(x, lo=lo, hi=hi):
        x = np.asarray(x, dtype=float)
        pref = x[:-1]
        key = tuple(np.round(pref, 12))
        F = residual_fn(pref)
        if key not in traces:
            traces[key] = continue_implicit(F, centre, b_new[[j - 1 for j in Jl]], lo, hi, steps=200)
        tr = traces[key]
        y = newton(F, float(x[-1]), tr(float(x[-1])).reshape(-1))
        out = b_new.copy()
        out[d2 - 1] = x[-1]
        out[[j - 1 for j in Jl]] = y
        return out

    U = list(variables.U)
    U[m - 1] = (lo, hi)
    levels = list(system.levels)
    w_text = None
    if m == 1:
        # the level-1 stabilizer depends on x_1 alone: keep a dense table so it can be saved
        grid = np.linspace(lo, hi, TABLE_POINTS)
        w_text = {"table": {"x": grid.tolist(), "y": [w_new(np.array([t])).tolist() for t in grid]}}
    else:
        notes.append(f"the level-{m} stabilizer depends on lower levels and is not serialized")
    levels[m - 1] = Level(I2, J2, d2, b_new, w_new, w_text)
    for k in range(m + 1, system.depth + 1):
        bk = system.levels[k - 1].b
        U[k - 1] = (max(bk[0] - eps, 0.0), min(bk[0] + eps, 1.0))
        levels[k - 1] = identity_level(k, bk)
    Vs = [variables._V[k - 1] if k < m else None for k in range(1, system.depth + 1)]
    new = StabilizingSystem(levels, VariableSystem(U, Vs))
    report = check_P1_P2(new, targets, samples=min(samples, 64), seed=seed)
    rank_after, _ = max_rank(new, targets, m, min(samples, 64), seed, rank_tol)
    variation = level_variation(new, targets, m, min(samples, 64), seed)
    cert = f"rank {rank_after} = |J_{m}| = {len(J2)}" if rank_after == len(J2) else \
        f"rank {rank_after} exceeds |J_{m}| = {len(J2)}"
    return ExcellentStep(new, cert, True, r, I2, J2, report, variation, notes)


__all__ = [
    "BoxUnion", "VariableSystem", "TargetFunctions", "Level", "StabilizingSystem", "trivial_system",
    "identity_level", "jacobian_Mk", "check_P1_P2", "StabilityReport", "LevelReport", "level_variation",
    "continue_implicit", "Trace", "newton", "gronwall_check", "GronwallReport", "shrink_zero_set",
    "make_excellent_step", "ExcellentStep", "max_rank", "JacobianFloorError", "TubeError",
    "ContinuationError", "ZeroSetError", "RankSearchError", "compile_expression", "check_partials",
    "fd_gradient", "block_offset", "n_coords", "merge_intervals",
]
