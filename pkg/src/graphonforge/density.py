"""Subgraph densities, rooted decorated densities and density expressions.

``tau(H, W)`` is the probability that ``|H|`` independent uniform points
span exactly the labelled graph ``H`` (every pair counts, as an edge with
probability ``W`` or as a non-edge with probability ``1 - W``), and
``d(H, W) = tau(H, W) * n! / |Aut(H)|``.

Decorated graphs specify only some pairs: edges and non-edges listed
explicitly contribute ``W`` and ``1 - W``, every other pair is summed out.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from . import _rng
from .graphons import Estimate, Graphon, HalfGraphon, StepGraphon

MAX_AUT_VERTICES = 10
EXACT_BUDGET = 10 ** 8


# -- small graphs -------------------------------------------------------------

def _pair(u: int, v: int) -> tuple[int, int]:
    if u == v:
        raise ValueError("loops are not allowed")
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class SmallGraph:
    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __init__(self, n: int, edges: Iterable[tuple[int, int]] = ()):
        es = frozenset(_pair(int(u), int(v)) for u, v in edges)
        for u, v in es:
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u},{v}) outside {n} vertices")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "edges", es)

    @classmethod
    def parse(cls, text: str) -> "SmallGraph":
        """``K3``, ``P3``, ``C4``, ``E2`` (edgeless) or ``edges:0-1,1-2``."""
        text = text.strip()
        m = re.fullmatch(r"([KPCE])(\d+)", text)
        if m:
            kind, n = m.group(1), int(m.group(2))
            if kind == "K":
                return cls(n, itertools.combinations(range(n), 2))
            if kind == "P":
                return cls(n, [(i, i + 1) for i in range(n - 1)])
            if kind == "C":
                if n < 3:
                    raise ValueError("cycles need at least 3 vertices")
                return cls(n, [(i, (i + 1) % n) for i in range(n)])
            return cls(n)
        if text.startswith("edges:"):
            body = text[len("edges:"):]
            n_extra = None
            if ";" in body:
                body, tail = body.split(";", 1)
                n_extra = int(tail.strip().removeprefix("n="))
            pairs = [tuple(int(v) for v in tok.split("-")) for tok in body.split(",") if tok.strip()]
            n = max([max(p) for p in pairs], default=-1) + 1
            return cls(max(n, n_extra or 0), pairs)
        raise ValueError(f"cannot parse graph literal {text!r}")

    def has_edge(self, u: int, v: int) -> bool:
        return _pair(u, v) in self.edges

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        for u, v in self.edges:
            a[u, v] = a[v, u] = True
        return a

    def complement(self) -> "SmallGraph":
        return SmallGraph(self.n, [p for p in itertools.combinations(range(self.n), 2) if p not in self.edges])

    def relabel(self, perm: Sequence[int]) -> "SmallGraph":
        return SmallGraph(self.n, [(perm[u], perm[v]) for u, v in self.edges])

    def __str__(self) -> str:
        return f"edges:{','.join(f'{u}-{v}' for u, v in sorted(self.edges))};n={self.n}"


def aut_count(H: SmallGraph) -> int:
    """Number of automorphisms by backtracking over degree-preserving maps."""
    if H.n > MAX_AUT_VERTICES:
        raise ValueError(f"automorphism counting supports at most {MAX_AUT_VERTICES} vertices")
    adj = H.adjacency()
    deg = adj.sum(axis=1)
    n = H.n
    count = 0
    image = [-1] * n
    used = [False] * n

    def extend(u: int) -> None:
        nonlocal count
        if u == n:
            count += 1
            return
        for v in range(n):
            if used[v] or deg[v] != deg[u]:
                continue
            if all(adj[u, w] == adj[v, image[w]] for w in range(u)):
                image[u] = v
                used[v] = True
                extend(u + 1)
                used[v] = False
        image[u] = -1

    extend(0)
    return count


def canonical_form(H: SmallGraph) -> tuple:
    best = None
    for perm in itertools.permutations(range(H.n)):
        key = tuple(sorted(_pair(perm[u], perm[v]) for u, v in H.edges))
        if best is None or key < best:
            best = key
    return (H.n, best)


@lru_cache(maxsize=None)
def iso_classes(k: int) -> tuple[SmallGraph, ...]:
    """One representative per isomorphism class of graphs on ``k`` vertices."""
    if k > 5:
        raise ValueError("isomorphism classes are enumerated for k <= 5 only")
    pairs = list(itertools.combinations(range(k), 2))
    seen = {}
    for mask in range(1 << len(pairs)):
        H = SmallGraph(k, [p for i, p in enumerate(pairs) if mask >> i & 1])
        key = canonical_form(H)
        if key not in seen:
            seen[key] = H
    return tuple(sorted(seen.values(), key=lambda g: (len(g.edges), sorted(g.edges))))


# -- tau and d -----------------------------------------------------------------------

def _pair_matrices(H: SmallGraph, values: np.ndarray):
    comp = 1.0 - values
    return [((u, v), values if H.has_edge(u, v) else comp) for u, v in itertools.combinations(range(H.n), 2)]


def tau_exact_step(H: SmallGraph, W: StepGraphon, budget: int = EXACT_BUDGET) -> float:
    """Exact ``tau`` for a step graphon by summing over part assignments."""
    k = len(W.sizes)
    total_assign = k ** H.n
    if total_assign > budget:
        raise ValueError(f"{total_assign} assignments exceed the budget of {budget}")
    if H.n == 0:
        return 1.0
    pairs = _pair_matrices(H, W.values)
    total = 0.0
    chunk = 1 << 20
    for start in range(0, total_assign, chunk):
        idx = np.arange(start, min(start + chunk, total_assign))
        assign = np.stack(np.unravel_index(idx, (k,) * H.n), axis=1)
        weight = np.prod(W.sizes[assign], axis=1)
        for (u, v), M in pairs:
            weight = weight * M[assign[:, u], assign[:, v]]
        total += float(weight.sum())
    return total


def _pair_product(H: SmallGraph, W: Graphon, pts: np.ndarray) -> np.ndarray:
    out = np.ones(len(pts))
    for u, v in itertools.combinations(range(H.n), 2):
        val = np.asarray(W(pts[:, u], pts[:, v]))
        out = out * (val if H.has_edge(u, v) else 1.0 - val)
    return out


def tau_mc(H: SmallGraph, W: Graphon, samples: int = 100_000, seed: int = 0) -> Estimate:
    """Monte Carlo ``tau`` with its standard error."""
    if samples <= 0:
        raise ValueError("sample budget must be positive")

    def block(g, size):
        vals = _pair_product(H, W, g.random((size, H.n)))
        return vals.sum(), (vals * vals).sum(), size

    mean, se = _rng.combine_moments(_rng.map_blocks(block, samples, seed, f"tau:{H}"))
    return Estimate(mean, se)


def tau(H: SmallGraph, W: Graphon, method: str = "auto", samples: int = 100_000, seed: int = 0) -> Estimate:
    if method == "exact" or (method == "auto" and isinstance(W, StepGraphon)):
        if not isinstance(W, StepGraphon):
            raise ValueError("the exact method needs a step graphon")
        return Estimate(tau_exact_step(H, W))
    if method not in ("mc", "auto"):
        raise ValueError(f"unknown method {method!r}")
    return tau_mc(H, W, samples, seed)


def labelled_factor(H: SmallGraph) -> float:
    return math.factorial(H.n) / aut_count(H)


def density(H: SmallGraph, W: Graphon, method: str = "auto", samples: int = 100_000, seed: int = 0) -> Estimate:
    """``d(H, W) = tau(H, W) * n! / |Aut(H)|``."""
    est = tau(H, W, method, samples, seed)
    f = labelled_factor(H)
    return Estimate(est.value * f, est.error * f)


# -- empirical densities of sampled graphs ------------------------------------------

def induced_counts_3(adj: np.ndarray) -> dict[int, int]:
    """Number of vertex triples spanning 0, 1, 2 and 3 edges."""
    a = adj.astype(np.int64)
    n = len(a)
    deg = a.sum(axis=1)
    m = int(deg.sum()) // 2
    t3 = int(np.trace(a @ a @ a)) // 6
    t2 = int((deg * (deg - 1) // 2).sum()) - 3 * t3
    t1 = m * (n - 2) - 3 * t3 - 2 * t2
    t0 = math.comb(n, 3) - t1 - t2 - t3
    return {0: t0, 1: t1, 2: t2, 3: t3}


def empirical_density_3(H: SmallGraph, adj: np.ndarray) -> float:
    if H.n != 3:
        raise ValueError("closed-form counting is implemented for 3-vertex graphs")
    counts = induced_counts_3(adj)
    return counts[len(H.edges)] / math.comb(len(adj), 3)


# -- decorated graphs -------------------------------------------------------------

@dataclass(frozen=True)
class DecoratedGraph:
    """Graph with roots ``0..m-1``, a part per vertex and partially specified pairs."""

    n: int
    m: int
    decorations: tuple
    edges: frozenset
    nonedges: frozenset

    def __init__(self, n: int, m: int, decorations: Sequence[str | None],
                 edges: Iterable[tuple[int, int]] = (), nonedges: Iterable[tuple[int, int]] = ()):
        if not 0 <= m <= n:
            raise ValueError("need 0 <= roots <= vertices")
        if len(decorations) != n:
            raise ValueError("one decoration per vertex")
        es = frozenset(_pair(u, v) for u, v in edges)
        ns = frozenset(_pair(u, v) for u, v in nonedges)
        if es & ns:
            raise ValueError("a pair cannot be both an edge and a non-edge")
        for u, v in es | ns:
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError("pair outside the vertex range")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "decorations", tuple(decorations))
        object.__setattr__(self, "edges", es)
        object.__setattr__(self, "nonedges", ns)

    @classmethod
    def from_graph(cls, H: SmallGraph, decorations: Sequence[str | None] | None = None,
                   roots: int = 0) -> "DecoratedGraph":
        """Fully specified (induced) decorated version of ``H``."""
        allp = set(itertools.combinations(range(H.n), 2))
        deco = decorations if decorations is not None else (None,) * H.n
        return cls(H.n, roots, deco, H.edges, allp - set(H.edges))

    def key(self) -> tuple:
        return (self.n, self.m, tuple(str(d) for d in self.decorations), tuple(sorted(self.edges)),
                tuple(sorted(self.nonedges)))

    def root_signature(self) -> tuple:
        roots = set(range(self.m))
        return (self.m, self.decorations[: self.m],
                tuple(sorted(p for p in self.edges if set(p) <= roots)),
                tuple(sorted(p for p in self.nonedges if set(p) <= roots)))

    def specified(self) -> list[tuple[int, int, bool]]:
        return sorted([(u, v, True) for u, v in self.edges] + [(u, v, False) for u, v in self.nonedges])

    def __str__(self) -> str:
        names = [f"r{i + 1}" for i in range(self.m)] + [f"v{i}" for i in range(self.m, self.n)]
        roots = ",".join(str(d) for d in self.decorations[: self.m])
        verts = ",".join(f"{names[i]}:{self.decorations[i]}" for i in range(self.m, self.n))
        parts = [f"roots=[{roots}]", f"verts=[{verts}]"]
        parts += [f"edge({names[u]},{names[v]})" for u, v in sorted(self.edges)]
        parts += [f"nonedge({names[u]},{names[v]})" for u, v in sorted(self.nonedges)]
        return "graph(" + "; ".join(parts) + ")"


def _parts_of(W: Graphon) -> dict[str, tuple[float, float]]:
    return {name: (lo, hi) for name, lo, hi in (W.parts or [])}


def _interval(W: Graphon, deco: str | None, parts: dict) -> tuple[float, float]:
    if deco is None:
        return 0.0, 1.0
    if deco not in parts:
        raise ValueError(f"graphon has no part named {deco!r}")
    lo, hi = parts[deco]
    if hi <= lo:
        raise ValueError(f"part {deco!r} has zero measure")
    return lo, hi


def tau_rooted(D: DecoratedGraph, W: Graphon, roots: Sequence[float] = (), method: str = "auto",
               samples: int = 100_000, seed: int = 0) -> Estimate:
    """Decorated density with root ``i`` placed at ``roots[i]``.

    Non-roots are uniform in their decorated parts; exact for step graphons
    and for graphs without non-roots, Monte Carlo otherwise.
    """
    if len(roots) != D.m:
        raise ValueError(f"expected {D.m} root positions, got {len(roots)}")
    parts = _parts_of(W)
    ivals = [_interval(W, d, parts) for d in D.decorations]
    for i, x in enumerate(roots):
        lo, hi = ivals[i]
        if not lo <= x < hi:
            raise ValueError(f"root {i + 1} at {x!r} lies outside its part {D.decorations[i]!r}")
    spec = D.specified()
    if not spec:
        return Estimate(1.0)
    if D.n == D.m:
        pts = np.asarray(roots, dtype=float)
        val = 1.0
        for u, v, e in spec:
            w = float(W(pts[u], pts[v]))
            val *= w if e else 1.0 - w
        return Estimate(val)
    if method == "exact" or (method == "auto" and isinstance(W, StepGraphon)):
        if not isinstance(W, StepGraphon):
            raise ValueError("the exact method needs a step graphon")
        return Estimate(_tau_rooted_step(D, W, roots, ivals))
    return _tau_rooted_mc(D, W, roots, ivals, samples, seed)


def _tau_rooted_step(D: DecoratedGraph, W: StepGraphon, roots, ivals) -> float:
    # each vertex becomes a distribution over the cells of W
    choices = []
    for i in range(D.n):
        if i < D.m:
            choices.append([(int(W.index(roots[i])), 1.0)])
        else:
            lo, hi = ivals[i]
            ov = W.overlap(lo, hi) / (hi - lo)
            choices.append([(c, float(ov[c])) for c in np.flatnonzero(ov > 0)])
    size = math.prod(len(c) for c in choices)
    if size > EXACT_BUDGET:
        raise ValueError("exact rooted evaluation exceeds the assignment budget")
    spec = D.specified()
    total = 0.0
    for combo in itertools.product(*choices):
        val = math.prod(wt for _, wt in combo)
        for u, v, e in spec:
            w = W.values[combo[u][0], combo[v][0]]
            val *= w if e else 1.0 - w
        total += val
    return total


def _tau_rooted_mc(D: DecoratedGraph, W: Graphon, roots, ivals, samples: int, seed: int) -> Estimate:
    lo = np.array([ivals[i][0] for i in range(D.n)])
    hi = np.array([ivals[i][1] for i in range(D.n)])
    spec = D.specified()

    def block(g, size):
        pts = lo + (hi - lo) * g.random((size, D.n))
        pts[:, : D.m] = np.asarray(roots, dtype=float)
        val = np.ones(size)
        for u, v, e in spec:
            w = np.asarray(W(pts[:, u], pts[:, v]))
            val = val * (w if e else 1.0 - w)
        return val.sum(), (val * val).sum(), size

    mean, se = _rng.combine_moments(_rng.map_blocks(block, samples, seed, f"rooted:{D}"))
    return Estimate(mean, se)


# -- density expressions ------------------------------------------------------------

class IncompatibleError(ValueError):
    pass


class DensityExpression:
    """Polynomial in decorated graphs: ``{(graphs...): coefficient}``."""

    def __init__(self, terms: dict | None = None):
        clean = {}
        for graphs, c in (terms or {}).items():
            key = tuple(sorted(graphs, key=DecoratedGraph.key))
            if c != 0:
                clean[key] = clean.get(key, 0.0) + float(c)
        self.terms = {k: v for k, v in clean.items() if v != 0}
        self._check()

    @classmethod
    def constant(cls, c: float) -> "DensityExpression":
        return cls({(): c})

    @classmethod
    def graph(cls, D: DecoratedGraph) -> "DensityExpression":
        return cls({(D,): 1.0})

    def graphs(self) -> list[DecoratedGraph]:
        return [g for key in self.terms for g in key]

    def _check(self) -> None:
        sigs = {g.root_signature() for g in self.graphs()}
        if len(sigs) > 1:
            raise IncompatibleError("decorated graphs in one expression must have compatible roots")

    def root_signature(self):
        gs = self.graphs()
        return gs[0].root_signature() if gs else None

    def __add__(self, other):
        other = _as_expr(other)
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms.get(k, 0.0) + v
        return DensityExpression(terms)

    __radd__ = __add__

    def __neg__(self):
        return DensityExpression({k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-_as_expr(other))

    def __rsub__(self, other):
        return _as_expr(other) - self

    def __mul__(self, other):
        other = _as_expr(other)
        terms: dict = {}
        for k1, v1 in self.terms.items():
            for k2, v2 in other.terms.items():
                key = tuple(sorted(k1 + k2, key=DecoratedGraph.key))
                terms[key] = terms.get(key, 0.0) + v1 * v2
        return DensityExpression(terms)

    __rmul__ = __mul__

    def evaluate(self, W: Graphon, roots: Sequence[float] = (), method: str = "auto",
                 samples: int = 100_000, seed: int = 0) -> Estimate:
        cache: dict = {}
        total = 0.0
        err = 0.0
        for key, c in self.terms.items():
            vals = []
            for g in key:
                if g not in cache:
                    cache[g] = tau_rooted(g, W, roots, method, samples, seed)
                vals.append(cache[g])
            prod = math.prod(v.value for v in vals)
            perr = sum(v.error * math.prod(abs(o.value) for j, o in enumerate(vals) if j != i)
                       for i, v in enumerate(vals))
            total += c * prod
            err += abs(c) * perr
        return Estimate(total, err)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for key, c in self.terms.items():
            parts.append(" * ".join([repr(c)] + [str(g) for g in key]))
        return " + ".join(parts)


def _as_expr(x) -> DensityExpression:
    if isinstance(x, DensityExpression):
        return x
    if isinstance(x, DecoratedGraph):
        return DensityExpression.graph(x)
    return DensityExpression.constant(float(x))


def eval_expression(E: DensityExpression, W: Graphon, roots: Sequence[float] = (), method: str = "auto",
                    samples: int = 100_000, seed: int = 0) -> Estimate:
    return E.evaluate(W, roots, method, samples, seed)


# -- the constraint language ----------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(graph\()|(\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)|(==)|([-+*/()]))")


def _parse_graph_body(body: str) -> DecoratedGraph:
    roots: list[str] = []
    verts: list[tuple[str, str | None]] = []
    edges, nonedges = [], []
    for stmt in [s.strip() for s in body.split(";") if s.strip()]:
        m = re.fullmatch(r"(roots|verts)\s*=\s*\[(.*)\]", stmt)
        if m:
            items = [t.strip() for t in m.group(2).split(",") if t.strip()]
            if m.group(1) == "roots":
                roots = items
            else:
                for it in items:
                    name, _, deco = it.partition(":")
                    verts.append((name.strip(), deco.strip() or None))
            continue
        m = re.fullmatch(r"(edge|nonedge)\s*\(\s*(\w+)\s*,\s*(\w+)\s*\)", stmt)
        if m:
            (edges if m.group(1) == "edge" else nonedges).append((m.group(2), m.group(3)))
            continue
        raise ValueError(f"cannot parse graph statement {stmt!r}")
    names = [f"r{i + 1}" for i in range(len(roots))] + [v[0] for v in verts]
    if len(set(names)) != len(names):
        raise ValueError("vertex names must be distinct")
    index = {nm: i for i, nm in enumerate(names)}
    decos = [r if r not in ("", "*") else None for r in roots] + [v[1] for v in verts]

    def idx(nm):
        if nm not in index:
            raise ValueError(f"unknown vertex {nm!r}")
        return index[nm]

    return DecoratedGraph(len(names), len(roots), decos, [(idx(a), idx(b)) for a, b in edges],
                          [(idx(a), idx(b)) for a, b in nonedges])


def _tokenize(text: str) -> list[tuple[str, object]]:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise ValueError(f"unexpected input at {text[pos:pos + 20]!r}")
        if m.group(1):
            depth = 1
            j = m.end()
            while j < len(text) and depth:
                depth += {"(": 1, ")": -1}.get(text[j], 0)
                j += 1
            if depth:
                raise ValueError("unbalanced parentheses in graph(...)")
            toks.append(("graph", _parse_graph_body(text[m.end(): j - 1])))
            pos = j
        elif m.group(2):
            toks.append(("num", float(m.group(2))))
            pos = m.end()
        else:
            toks.append(("op", m.group(3) or m.group(4)))
            pos = m.end()
    return toks


class _Parser:
    def __init__(self, toks):
        self.toks = toks
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else ("end", None)

    def take(self, value=None):
        tok = self.peek()
        if value is not None and tok != ("op", value):
            raise ValueError(f"expected {value!r}, found {tok[1]!r}")
        self.i += 1
        return tok

    def expr(self) -> DensityExpression:
        out = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            out = out + rhs if op == "+" else out - rhs
        return out

    def term(self) -> DensityExpression:
        out = self.factor()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            rhs = self.factor()
            if op == "*":
                out = out * rhs
            else:
                if set(rhs.terms) - {()}:
                    raise ValueError("division is only allowed by constants")
                out = out * (1.0 / rhs.terms.get((), 0.0))
        return out

    def factor(self) -> DensityExpression:
        kind, val = self.peek()
        if (kind, val) == ("op", "-"):
            self.take()
            return -self.factor()
        if (kind, val) == ("op", "("):
            self.take()
            e = self.expr()
            self.take(")")
            return e
        if kind == "num":
            self.take()
            return DensityExpression.constant(val)
        if kind == "graph":
            self.take()
            return DensityExpression.graph(val)
        raise ValueError(f"unexpected token {val!r}")


def parse_expression(text: str) -> DensityExpression:
    p = _Parser(_tokenize(text))
    e = p.expr()
    if p.peek()[0] != "end":
        raise ValueError(f"trailing input near {p.peek()[1]!r}")
    return e


@dataclass
class Constraint:
    lhs: DensityExpression
    rhs: DensityExpression

    def root_signature(self):
        sigs = {s for s in (self.lhs.root_signature(), self.rhs.root_signature()) if s is not None}
        if len(sigs) > 1:
            raise IncompatibleError("the two sides use incompatible roots")
        return sigs.pop() if sigs else None


def parse_constraint(text: str) -> Constraint:
    toks = _tokenize(text)
    eqs = [i for i, t in enumerate(toks) if t == ("op", "==")]
    if len(eqs) != 1:
        raise ValueError("a constraint needs exactly one '=='")
    k = eqs[0]
    lhs, rhs = _Parser(toks[:k]), _Parser(toks[k + 1:])
    c = Constraint(lhs.expr(), rhs.expr())
    if lhs.peek()[0] != "end" or rhs.peek()[0] != "end":
        raise ValueError("trailing input in constraint")
    c.root_signature()
    return c


@dataclass
class ConstraintReport:
    tuples: int
    violations: int
    max_deviation: float
    threshold: float

    @property
    def violation_rate(self) -> float:
        return self.violations / self.tuples

    def to_json(self) -> dict:
        return {"tuples": self.tuples, "violations": self.violations, "violation_rate": self.violation_rate,
                "max_deviation": self.max_deviation, "threshold": self.threshold}


def check_constraint_ae(c: Constraint, W: Graphon, samples: int = 10_000, tolerance: float = 1e-6,
                        seed: int = 0, method: str = "auto", inner_samples: int = 20_000) -> ConstraintReport:
    """Fraction of sampled admissible root tuples where the two sides differ.

    On the exact path a tuple is a violation when ``|lhs - rhs| > tolerance``;
    on the Monte Carlo path the threshold is ``max(tolerance, 4 sigma)``.
    """
    sig = c.root_signature()
    decos = sig[1] if sig else ()
    parts = _parts_of(W)
    ivals = [_interval(W, d, parts) for d in decos]
    g = _rng.generator(seed, "constraint")
    lo = np.array([iv[0] for iv in ivals])
    hi = np.array([iv[1] for iv in ivals])
    if samples <= 0:
        raise ValueError("no admissible tuples found")
    diff = c.lhs - c.rhs
    worst = 0.0
    bad = 0
    thr_max = tolerance
    for t in range(samples):
        roots = lo + (hi - lo) * g.random(len(ivals))
        roots = np.minimum(roots, np.nextafter(hi, lo))
        est = diff.evaluate(W, roots.tolist(), method, inner_samples, seed + t)
        thr = max(tolerance, 4.0 * est.error)
        thr_max = max(thr_max, thr)
        dev = abs(est.value)
        worst = max(worst, dev)
        bad += dev > thr
    return ConstraintReport(samples, bad, worst, thr_max)


# -- partition detection ------------------------------------------------------------

class PartitionError(ValueError):
    pass


def vertex_degrees(W: Graphon, xs: np.ndarray) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if isinstance(W, StepGraphon):
        return W.values[W.index(xs)] @ W.sizes
    if isinstance(W, HalfGraphon):
        return xs.copy()
    if hasattr(W, "row_integrals"):
        from .wpz import locate

        X, t = locate(xs)
        out = np.zeros(len(xs))
        for part in np.unique(X):
            sel = X == part
            out[sel] = W.row_integrals(int(part), t[sel])[0]
        return out
    return np.array([W.row_integral(float(x)).value for x in xs])


@dataclass
class DetectedPart:
    start: float
    size: float
    degree: float


def partition_detect(W: Graphon, tolerance: float = 1e-6, grid: int = 2500) -> list[DetectedPart]:
    """Group grid vertices by degree; parts are reported in order of first appearance."""
    xs = (np.arange(grid) + 0.5) / grid
    deg = vertex_degrees(W, xs)
    order = np.argsort(deg, kind="stable")
    sd = deg[order]
    gaps = np.diff(sd)
    cut = gaps > tolerance
    if np.any(cut & (gaps < 3.0 * tolerance)):
        raise PartitionError("degree clusters are not separated by three times the tolerance")
    labels_sorted = np.r_[0, np.cumsum(cut)]
    labels = np.empty(grid, dtype=np.int64)
    labels[order] = labels_sorted
    out = []
    for lab in dict.fromkeys(labels.tolist()):
        sel = labels == lab
        out.append(DetectedPart(float(xs[sel][0] - 0.5 / grid), float(sel.sum() / grid), float(deg[sel].mean())))
    return out


# -- reconstructed worked example ---------------------------------------------------

def example_two_part_graphon() -> StepGraphon:
    """Parts ``A``, ``B`` of size 1/2 with values 2/3, 1/3 and 1."""
    return StepGraphon([0.5, 0.5], [[2 / 3, 1 / 3], [1 / 3, 1.0]], names=["A", "B"])


def example_decorated_graphs() -> list[tuple[DecoratedGraph, float]]:
    """Three decorated graphs on the two-part graphon and their values.

    * one ``A`` root and two ``A`` non-roots forming a triangle: 8/27;
    * two ``A`` roots (their pair left free) and one ``A`` non-root adjacent
      to both: 4/9;
    * one ``A`` root adjacent to three ``A`` non-roots ``a, b, c`` with the
      edge ``ab``, the non-edge ``bc`` and ``ac`` free: 16/243.
    """
    g1 = DecoratedGraph(3, 1, ["A", "A", "A"], [(0, 1), (0, 2), (1, 2)])
    g2 = DecoratedGraph(3, 2, ["A", "A", "A"], [(0, 2), (1, 2)])
    g3 = DecoratedGraph(4, 1, ["A"] * 4, [(0, 1), (0, 2), (0, 3), (1, 2)], [(2, 3)])
    return [(g1, 8 / 27), (g2, 4 / 9), (g3, 16 / 243)]


__all__ = [
    "SmallGraph", "aut_count", "canonical_form", "iso_classes", "tau_exact_step", "tau_mc", "tau",
    "density", "labelled_factor", "induced_counts_3", "empirical_density_3", "DecoratedGraph",
    "tau_rooted", "DensityExpression", "eval_expression", "parse_expression", "parse_constraint",
    "Constraint", "ConstraintReport", "check_constraint_ae", "partition_detect", "PartitionError",
    "DetectedPart", "vertex_degrees", "example_two_part_graphon", "example_decorated_graphs",
    "IncompatibleError",
]
