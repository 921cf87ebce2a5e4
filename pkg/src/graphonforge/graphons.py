"""Graphon representations and the basic numerics built on them.

A graphon here is any object with a vectorised ``__call__(x, y)`` returning
values in ``[0, 1]`` for points of the half-open square ``[0, 1)^2``.
Parts are half-open intervals ``[lo, hi)``; a point on a boundary belongs to
the part on its right.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from . import _rng


@dataclass(frozen=True)
class Estimate:
    """A numerical value with an error bound (exact paths report 0)."""

    value: float
    error: float = 0.0

    def __float__(self) -> float:
        return float(self.value)


# -- coordinate helpers ---------------------------------------------------

def coord(x):
    """Index ``k`` of the interval ``[1 - 2^(1-k), 1 - 2^-k)`` holding ``frac(x)``.

    Computed from the binary exponent of ``1 - frac(x)``, so dyadic inputs
    are classified exactly.
    """
    arr = np.asarray(x, dtype=float)
    frac = arr - np.floor(arr)
    mant, expo = np.frexp(1.0 - frac)
    k = np.where(mant == 0.5, 2 - expo, 1 - expo).astype(np.int64)
    return int(k) if k.ndim == 0 else k


def coord_interval(k: int) -> tuple[float, float]:
    """The interval ``J_k`` as ``(lo, hi)``."""
    if k < 1:
        raise ValueError("coordinate index starts at 1")
    return 1.0 - 2.0 ** (1 - k), 1.0 - 2.0 ** (-k)


def position_in_coord(t):
    """Relative position in ``[0, 1)`` of ``frac(t)`` inside its interval ``J_k``."""
    arr = np.asarray(t, dtype=float)
    frac = arr - np.floor(arr)
    k = coord(frac)
    return np.ldexp(frac - 1.0, k) + 2.0


# -- graphon kinds --------------------------------------------------------

class Graphon:
    """Base class; subclasses implement ``_eval`` on float arrays."""

    kind = "abstract"

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        out = self._eval(x.ravel(), y.ravel()).reshape(x.shape)
        return float(out) if out.ndim == 0 else out

    def evaluate(self, x, y):
        return self(x, y)

    def _eval(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def row_integral(self, x: float, a: float = 0.0, b: float = 1.0) -> Estimate:
        """``int_a^b W(x, y) dy``; adaptive quadrature by default."""
        val, err = integrate.quad(lambda t: float(self(x, t)), a, b, limit=200)
        return Estimate(val, err)

    @property
    def parts(self) -> list[tuple[str, float, float]] | None:
        return None

    def part_of(self, name: str) -> tuple[float, float]:
        for nm, lo, hi in self.parts or []:
            if nm == name:
                return lo, hi
        raise KeyError(f"unknown part {name!r}")

    def to_spec(self) -> dict:
        raise NotImplementedError(f"{type(self).__name__} has no spec form")


class StepGraphon(Graphon):
    """Piecewise-constant graphon with parts of the given sizes."""

    kind = "step"

    def __init__(self, sizes: Sequence[float], values, names: Sequence[str] | None = None):
        sizes = np.asarray(sizes, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if sizes.ndim != 1 or np.any(sizes <= 0):
            raise ValueError("part sizes must be positive")
        if abs(sizes.sum() - 1.0) > 1e-12:
            raise ValueError(f"part sizes sum to {sizes.sum()!r}, not 1")
        k = len(sizes)
        if values.shape != (k, k):
            raise ValueError("value matrix must be k x k")
        if not np.array_equal(values, values.T):
            raise ValueError("value matrix must be symmetric")
        if np.any(values < 0) or np.any(values > 1):
            raise ValueError("values must lie in [0, 1]")
        self.sizes = sizes
        self.values = values
        self.bounds = np.concatenate([[0.0], np.cumsum(sizes)])
        self.bounds[-1] = 1.0
        self.names = list(names) if names is not None else [str(i) for i in range(k)]
        if len(self.names) != k:
            raise ValueError("one name per part")

    def index(self, x):
        idx = np.searchsorted(self.bounds, np.asarray(x, dtype=float), side="right") - 1
        return np.clip(idx, 0, len(self.sizes) - 1)

    def _eval(self, x, y):
        return self.values[self.index(x), self.index(y)]

    def overlap(self, a: float, b: float) -> np.ndarray:
        """Measure of ``[a, b) ∩ part_j`` for every part."""
        lo = np.maximum(self.bounds[:-1], a)
        hi = np.minimum(self.bounds[1:], b)
        return np.maximum(hi - lo, 0.0)

    def row_integral(self, x, a=0.0, b=1.0):
        return Estimate(float(self.values[self.index(x)] @ self.overlap(a, b)))

    @property
    def parts(self):
        return [(n, float(self.bounds[i]), float(self.bounds[i + 1])) for i, n in enumerate(self.names)]

    def to_spec(self):
        return {"kind": "step", "sizes": self.sizes.tolist(), "values": self.values.tolist(),
                "names": self.names}

    def refine(self, other: "StepGraphon") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Common refinement: (cell sizes, values of self, values of other)."""
        cuts = np.union1d(self.bounds, other.bounds)
        widths = np.diff(cuts)
        keep = widths > 0
        mids = ((cuts[:-1] + cuts[1:]) / 2)[keep]
        widths = widths[keep]
        a = self.values[np.ix_(self.index(mids), self.index(mids))]
        b = other.values[np.ix_(other.index(mids), other.index(mids))]
        return widths, a, b


def constant(p: float) -> StepGraphon:
    return StepGraphon([1.0], [[p]])


class HalfGraphon(Graphon):
    """The threshold kernel ``1[x + y >= 1]``."""

    kind = "half"

    def _eval(self, x, y):
        return (x + y >= 1.0).astype(float)

    def row_integral(self, x, a=0.0, b=1.0):
        lo = max(a, 1.0 - float(x))
        return Estimate(max(b - lo, 0.0))

    def to_spec(self):
        return {"kind": "half"}


class FunctionGraphon(Graphon):
    """Wraps a vectorised symmetric kernel ``f(x, y)``."""

    kind = "composite"

    def __init__(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], name: str = "function"):
        self.fn = fn
        self.name = name

    def _eval(self, x, y):
        return np.clip(np.asarray(self.fn(x, y), dtype=float), 0.0, 1.0)


def blend(w1: Graphon, w2: Graphon, t: float) -> FunctionGraphon:
    """Pointwise convex combination ``(1 - t) w1 + t w2``."""
    return FunctionGraphon(lambda x, y: (1 - t) * w1(x, y) + t * w2(x, y), "blend")


def product(w1: Graphon, w2: Graphon) -> FunctionGraphon:
    return FunctionGraphon(lambda x, y: w1(x, y) * w2(x, y), "product")


# -- piecewise quadrature ----------------------------------------------------

PROBES = np.array([0.0, 0.5, 1.0 - 2.0 ** -20])


def integrate_rows(f: Callable[[np.ndarray, np.ndarray], np.ndarray], nrows: int, cuts,
                   min_width: float = 1e-13, lin_tol: float = 1e-12,
                   max_cells: int = 400_000) -> tuple[np.ndarray, np.ndarray]:
    """Integrate piecewise-linear rows over ``[cuts[0], cuts[-1])``.

    ``f(rows, t)`` evaluates row ``rows[i]`` at ``t[i]``.  Every cell is probed
    at its left end, midpoint and (just inside) its right end; a cell whose
    probes are collinear is integrated exactly, any other cell is bisected.
    Cells narrower than ``min_width`` are accepted with an error charge of
    ``width * (max - min)`` of the probes.  Returns ``(values, error bounds)``.
    """
    cuts = np.unique(np.asarray(cuts, dtype=float))
    lo0, hi0 = cuts[:-1], cuts[1:]
    total = np.zeros(nrows)
    err = np.zeros(nrows)
    step = max(1, max_cells // max(len(lo0), 1))
    for start in range(0, nrows, step):
        rows = np.repeat(np.arange(start, min(start + step, nrows)), len(lo0))
        a = np.tile(lo0, len(rows) // len(lo0))
        b = np.tile(hi0, len(rows) // len(lo0))
        while len(rows):
            width = b - a
            t = a[:, None] + width[:, None] * PROBES[None, :]
            r = np.repeat(rows, len(PROBES))
            v = np.asarray(f(r, t.ravel()), dtype=float).reshape(-1, len(PROBES))
            slope = (v[:, 2] - v[:, 0]) / PROBES[2]
            resid = np.abs(v[:, 1] - (v[:, 0] + 0.5 * slope))
            ok = resid <= lin_tol
            np.add.at(total, rows[ok], width[ok] * (v[ok, 0] + 0.5 * slope[ok]))
            tiny = ~ok & (width <= min_width)
            if tiny.any():
                np.add.at(total, rows[tiny], width[tiny] * v[tiny].mean(axis=1))
                np.add.at(err, rows[tiny], width[tiny] * np.ptp(v[tiny], axis=1))
            split = ~ok & ~tiny
            mid = 0.5 * (a[split] + b[split])
            rows = np.concatenate([rows[split], rows[split]])
            a, b = np.concatenate([a[split], mid]), np.concatenate([mid, b[split]])
    return total, err


# -- degrees --------------------------------------------------------------

def degree(w: Graphon, x: float) -> Estimate:
    return w.row_integral(float(x), 0.0, 1.0)


def relative_degree(w: Graphon, x: float, part) -> Estimate:
    """Degree of ``x`` into ``part`` normalised by the measure of ``part``.

    ``part`` is a ``(lo, hi)`` pair, a list of such pairs, or a part name.
    """
    if isinstance(part, str):
        part = [w.part_of(part)]
    elif isinstance(part[0], (int, float, np.floating)):
        part = [tuple(part)]
    measure = sum(hi - lo for lo, hi in part)
    if measure <= 0:
        raise ValueError("relative degree needs a part of positive measure")
    total = 0.0
    err = 0.0
    for lo, hi in part:
        est = w.row_integral(float(x), lo, hi)
        total += est.value
        err += est.error
    return Estimate(total / measure, err / measure)


# -- sampling ---------------------------------------------------------------

@dataclass
class SampledGraph:
    n: int
    edges: list[tuple[int, int]]
    points: np.ndarray

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        for u, v in self.edges:
            a[u, v] = a[v, u] = True
        return a

    def to_text(self) -> str:
        lines = [f"{self.n} {len(self.edges)}"]
        lines += [f"{u} {v}" for u, v in self.edges]
        return "\n".join(lines) + "\n"


def sample_w_random_graph(w: Graphon, n: int, seed: int = 0) -> SampledGraph:
    """A ``W``-random graph on ``n`` vertices; reproducible for a fixed seed."""
    if n < 1:
        raise ValueError("need at least one vertex")
    pts = _rng.generator(seed, "points").random(n)
    iu, ju = np.triu_indices(n, k=1)
    probs = w(pts[iu], pts[ju])
    coins = _rng.generator(seed, "edges").random(len(iu))
    hit = coins < probs
    edges = list(zip(iu[hit].tolist(), ju[hit].tolist()))
    return SampledGraph(n, edges, pts)


def read_edge_list(text: str) -> tuple[int, list[tuple[int, int]]]:
    rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    n, m = int(rows[0][0]), int(rows[0][1])
    edges = [(int(a), int(b)) for a, b in rows[1:]]
    if len(edges) != m:
        raise ValueError(f"header announces {m} edges, found {len(edges)}")
    return n, edges


# -- distances and functionals ----------------------------------------------

def l1_distance(w1: Graphon, w2: Graphon, samples: int = 200_000, seed: int = 0) -> Estimate:
    """``int |w1 - w2|`` over the unit square (exact for two step graphons)."""
    if isinstance(w1, StepGraphon) and isinstance(w2, StepGraphon):
        widths, a, b = w1.refine(w2)
        return Estimate(float(widths @ np.abs(a - b) @ widths))

    def block(g, size):
        x, y = g.random(size), g.random(size)
        d = np.abs(np.asarray(w1(x, y)) - np.asarray(w2(x, y)))
        return d.sum(), (d * d).sum(), size

    mean, se = _rng.combine_moments(_rng.map_blocks(block, samples, seed, "l1"))
    return Estimate(mean, se)


def _entropy_density(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    inner = (v > 0) & (v < 1)
    p = v[inner]
    out[inner] = p * np.log(p) + (1 - p) * np.log1p(-p)
    return out


def entropy(w: Graphon, resolution: int = 2048) -> Estimate:
    """``int W log W + (1 - W) log(1 - W)``, with the integrand 0 where W is 0 or 1."""
    if isinstance(w, StepGraphon):
        return Estimate(float(w.sizes @ _entropy_density(w.values) @ w.sizes))

    def grid(r):
        t = (np.arange(r) + 0.5) / r
        xx, yy = np.meshgrid(t, t, indexing="ij")
        return float(_entropy_density(np.asarray(w(xx, yy))).mean())

    fine = grid(resolution)
    coarse = grid(resolution // 2)
    return Estimate(fine, abs(fine - coarse))


# -- rendering --------------------------------------------------------------

SUPERSAMPLE = 3


def render_array(w: Graphon, resolution: int) -> np.ndarray:
    """8-bit image; column index follows ``x``, row index follows ``y``.

    Each pixel averages a 3x3 grid of sub-cell centres; 0 is white, 1 black.
    """
    if resolution < 1:
        raise ValueError("resolution must be positive")
    r = resolution
    sub = (np.arange(r * SUPERSAMPLE) + 0.5) / (r * SUPERSAMPLE)
    ys, xs = np.meshgrid(sub, sub, indexing="ij")
    vals = np.asarray(w(xs, ys), dtype=float)
    mean = vals.reshape(r, SUPERSAMPLE, r, SUPERSAMPLE).mean(axis=(1, 3))
    return np.rint(255.0 * (1.0 - mean)).astype(np.uint8)


def write_pgm(img: np.ndarray, path) -> None:
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos].decode("ascii"))
    pos += 1
    if fields[0] != "P5":
        raise ValueError("not a binary PGM")
    w, h = int(fields[1]), int(fields[2])
    return np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w)


def render(w: Graphon, resolution: int, path) -> np.ndarray:
    img = render_array(w, resolution)
    write_pgm(img, path)
    return img


# -- spec files -------------------------------------------------------------

def from_spec(spec: dict, base_dir: Path | None = None) -> Graphon:
    kind = spec.get("kind")
    if kind == "step":
        return StepGraphon(spec["sizes"], spec["values"], spec.get("names"))
    if kind == "half":
        return HalfGraphon()
    if kind == "const":
        return constant(float(spec["value"]))
    if kind == "wpz":
        from .wpz import wpz_from_spec

        return wpz_from_spec(spec, base_dir)
    raise ValueError(f"unknown graphon kind {kind!r}")


def load(path) -> Graphon:
    path = Path(path)
    return from_spec(json.loads(path.read_text()), path.parent)


def parse_graphon(text: str) -> Graphon:
    """CLI form: ``const:0.5``, ``half``, or a path to a JSON spec."""
    if text.startswith("const:"):
        return constant(float(text.split(":", 1)[1]))
    if text == "half":
        return HalfGraphon()
    return load(text)


def check_symmetry_and_range(w: Graphon, pairs: int = 100_000, seed: int = 0) -> tuple[float, float, float]:
    """Max asymmetry and the observed value range on random pairs."""
    g = _rng.generator(seed, "symmetry")
    x, y = g.random(pairs), g.random(pairs)
    a = np.asarray(w(x, y))
    b = np.asarray(w(y, x))
    return float(np.max(np.abs(a - b))), float(a.min()), float(a.max())


__all__ = [
    "Estimate", "coord", "coord_interval", "position_in_coord", "Graphon", "StepGraphon",
    "HalfGraphon", "FunctionGraphon", "constant", "blend", "product", "degree",
    "relative_degree", "sample_w_random_graph", "SampledGraph", "read_edge_list",
    "l1_distance", "entropy", "render", "render_array", "write_pgm", "read_pgm",
    "from_spec", "load", "parse_graphon", "check_symmetry_and_range",
]
