"""Bounding sequences ``P = (p_i, l_i, u_i)`` at finite truncation.

Each ``p_i`` is a polynomial in ``z_1, ..., z_N`` whose coefficients are
indexed by the rank ``j`` of the monomial ``z^{M_j}`` in the graded
multiset order.  Entries past the stored length are the trivial triple
``(0, 0, 1)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import _rng
from .multisets import TruncationError, cached_unrank, monomial_eval

DEFAULT_LENGTH = 8
DEFAULT_ZDIM = 6
STRICT_GRID = 10_000


def coefficient_bound(j: int) -> float:
    """``2^(-2^j) / 9``; underflows to 0 for ``j >= 11``."""
    if j < 1:
        raise ValueError("monomial ranks start at 1")
    if j > 30:
        return 0.0
    return math.ldexp(1.0, -(2 ** j)) / 9.0


class MonomialPolynomial:
    """Finite map ``rank -> coefficient``; zero coefficients are dropped."""

    def __init__(self, coeffs: Mapping[int, float] | None = None):
        clean = {}
        for j, c in (coeffs or {}).items():
            j = int(j)
            if j < 1:
                raise ValueError("monomial ranks start at 1")
            if c != 0:
                clean[j] = float(c)
        self.coeffs = dict(sorted(clean.items()))

    # algebra
    def __add__(self, other: "MonomialPolynomial") -> "MonomialPolynomial":
        out = dict(self.coeffs)
        for j, c in other.coeffs.items():
            out[j] = out.get(j, 0.0) + c
        return MonomialPolynomial(out)

    def __neg__(self) -> "MonomialPolynomial":
        return MonomialPolynomial({j: -c for j, c in self.coeffs.items()})

    def __sub__(self, other: "MonomialPolynomial") -> "MonomialPolynomial":
        return self + (-other)

    def scale(self, s: float) -> "MonomialPolynomial":
        return MonomialPolynomial({j: s * c for j, c in self.coeffs.items()})

    def __eq__(self, other) -> bool:
        return isinstance(other, MonomialPolynomial) and self.coeffs == other.coeffs

    def __hash__(self) -> int:
        return hash(tuple(self.coeffs.items()))

    def __repr__(self) -> str:
        return f"MonomialPolynomial({self.coeffs})"

    def is_zero(self) -> bool:
        return not self.coeffs

    def coefficient(self, j: int) -> float:
        return self.coeffs.get(int(j), 0.0)

    def max_element(self) -> int:
        top = 0
        for j in self.coeffs:
            m = cached_unrank(j)
            if m.items:
                top = max(top, m.items[-1])
        return top

    # evaluation
    def __call__(self, z):
        return self.eval(z)

    def eval(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros(z.shape[:-1])
        for j, c in self.coeffs.items():
            out = out + c * monomial_eval(cached_unrank(j), z)
        return out if out.ndim else float(out)

    def partial(self, z, n: int):
        """Exact ``d p / d z_n`` (``n`` is 1-based)."""
        z = np.asarray(z, dtype=float)
        if n < 1 or n > z.shape[-1]:
            raise TruncationError(f"variable z_{n} outside the truncation")
        out = np.zeros(z.shape[:-1])
        for j, c in self.coeffs.items():
            m = cached_unrank(j)
            e = m.items.count(n)
            if e:
                out = out + c * e * monomial_eval(m.remove_one(n), z)
        return out if out.ndim else float(out)

    def gradient(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.stack([np.asarray(self.partial(z, n)) for n in range(1, z.shape[-1] + 1)], axis=-1)

    # interval bounds on the unit box: every monomial lies in [0, 1]
    def range_bounds(self) -> tuple[float, float]:
        lo = hi = 0.0
        for j, c in self.coeffs.items():
            if j == 1:
                lo += c
                hi += c
            elif c > 0:
                hi += c
            else:
                lo += c
        return lo, hi

    def partial_bounds(self, n: int) -> tuple[float, float]:
        lo = hi = 0.0
        for j, c in self.coeffs.items():
            m = cached_unrank(j)
            e = m.items.count(n)
            if not e:
                continue
            rest = m.remove_one(n)
            if not rest.items:
                lo += c * e
                hi += c * e
            elif c > 0:
                hi += c * e
            else:
                lo += c * e
        return lo, hi

    def to_json(self) -> dict:
        return {str(j): c for j, c in self.coeffs.items()}

    @classmethod
    def from_json(cls, data: Mapping[str, float]) -> "MonomialPolynomial":
        return cls({int(k): float(v) for k, v in data.items()})


@dataclass(frozen=True)
class BoundingTriple:
    p: MonomialPolynomial = field(default_factory=MonomialPolynomial)
    l: float = 0.0
    u: float = 1.0

    def is_trivial(self) -> bool:
        return self.p.is_zero() and self.l == 0.0 and self.u == 1.0

    def to_json(self) -> dict:
        return {"p": self.p.to_json(), "l": self.l, "u": self.u}

    @classmethod
    def from_json(cls, data: Mapping) -> "BoundingTriple":
        return cls(MonomialPolynomial.from_json(data.get("p", {})), float(data.get("l", 0.0)),
                   float(data.get("u", 1.0)))


TRIVIAL = BoundingTriple()


@dataclass
class TripleReport:
    index: int
    ok: bool
    clause: str | None = None
    detail: str = ""
    conservative: bool = False


@dataclass
class ValidationReport:
    triples: list[TripleReport]

    @property
    def ok(self) -> bool:
        return all(t.ok for t in self.triples)

    @property
    def failures(self) -> list[TripleReport]:
        return [t for t in self.triples if not t.ok]

    def to_json(self) -> dict:
        return {"valid": self.ok,
                "triples": [{"index": t.index, "ok": t.ok, "clause": t.clause, "detail": t.detail,
                             "conservative": t.conservative} for t in self.triples]}


def _grid_points(n: int, count: int, seed: int = 0) -> np.ndarray:
    corners = np.array(np.meshgrid(*[[0.0, 1.0]] * n, indexing="ij")).reshape(n, -1).T
    if len(corners) > count // 2:
        corners = corners[: count // 2]
    rest = _rng.generator(seed, "grid", n).random((count - len(corners), n))
    return np.vstack([corners, rest])


def check_triple(t: BoundingTriple, z_dim: int, index: int = 0, strict: bool = False) -> TripleReport:
    """First violated clause of the bounding-triple definition, if any."""
    if not 0.0 <= t.l <= 1.0:
        return TripleReport(index, False, "0 <= l <= 1", f"l={t.l!r}")
    if not 0.0 <= t.u <= 1.0:
        return TripleReport(index, False, "0 <= u <= 1", f"u={t.u!r}")
    if t.l > t.u:
        return TripleReport(index, False, "l <= u", f"l={t.l!r} > u={t.u!r}")
    for j, c in t.p.coeffs.items():
        if abs(c) > coefficient_bound(j):
            return TripleReport(index, False, "|pi_j| <= 2^(-2^j)/9",
                                f"rank {j}: |{c!r}| > {coefficient_bound(j)!r}")
    if t.p.max_element() > z_dim:
        return TripleReport(index, False, "truncation", f"monomial needs z_{t.p.max_element()}")

    problems = []
    lo, hi = t.p.range_bounds()
    if lo < 0.0 or hi > 1.0:
        problems.append(("p(z) in [0,1]", f"interval bound [{lo!r}, {hi!r}]"))
    for n in range(1, z_dim + 1):
        dlo, dhi = t.p.partial_bounds(n)
        if dlo < -1.0 or dhi > 1.0:
            problems.append((f"dp/dz_{n} in [-1,1]", f"interval bound [{dlo!r}, {dhi!r}]"))
    if not problems:
        return TripleReport(index, True)
    if not strict:
        clause, detail = problems[0]
        return TripleReport(index, False, clause, detail, conservative=True)

    # interval arithmetic may overestimate; re-check on a sampled grid
    pts = _grid_points(z_dim, STRICT_GRID, index)
    vals = np.asarray(t.p.eval(pts))
    if vals.min() < 0.0 or vals.max() > 1.0:
        return TripleReport(index, False, "p(z) in [0,1]", f"sampled range [{vals.min()!r}, {vals.max()!r}]")
    grads = t.p.gradient(pts)
    if np.abs(grads).max() > 1.0:
        return TripleReport(index, False, "partials in [-1,1]", f"sampled max {np.abs(grads).max()!r}")
    return TripleReport(index, True, None, "passed on sampled grid only", conservative=True)


class BoundingSequence:
    """Finite truncation of a bounding sequence of declared length and z-dimension."""

    def __init__(self, triples: Iterable[BoundingTriple] = (), z_dim: int = DEFAULT_ZDIM,
                 length: int | None = None):
        triples = list(triples)
        length = DEFAULT_LENGTH if length is None else int(length)
        length = max(length, len(triples))
        self.triples = tuple(triples + [TRIVIAL] * (length - len(triples)))
        self.z_dim = int(z_dim)
        if self.z_dim < 1:
            raise ValueError("z_dim must be positive")

    @property
    def length(self) -> int:
        return len(self.triples)

    def triple(self, i: int) -> BoundingTriple:
        """The ``i``-th triple (1-based); trivial beyond the truncation."""
        if i < 1:
            raise ValueError("indices start at 1")
        return self.triples[i - 1] if i <= len(self.triples) else TRIVIAL

    def pi(self, i: int, j: int) -> float:
        return self.triple(i).p.coefficient(j)

    def lower(self, i: int) -> float:
        return self.triple(i).l

    def upper(self, i: int) -> float:
        return self.triple(i).u

    def p_value(self, i: int, z):
        return self.triple(i).p.eval(z)

    def nonzero_coefficients(self) -> list[tuple[int, int, float]]:
        return [(i + 1, j, c) for i, t in enumerate(self.triples) for j, c in t.p.coeffs.items()]

    def admissible(self, z, tol: float = 0.0) -> bool:
        """``p_i(z) in [l_i, u_i]`` for every stored index."""
        for t in self.triples:
            v = t.p.eval(z)
            if v < t.l - tol or v > t.u + tol:
                return False
        return True

    def validate(self, strict: bool = False) -> ValidationReport:
        return ValidationReport([check_triple(t, self.z_dim, i + 1, strict) for i, t in enumerate(self.triples)])

    def __eq__(self, other) -> bool:
        if not isinstance(other, BoundingSequence):
            return False
        n = max(self.length, other.length)
        return self.z_dim == other.z_dim and all(self.triple(i) == other.triple(i) for i in range(1, n + 1))

    def to_json(self) -> dict:
        return {"triples": [t.to_json() for t in self.triples], "z_dim": self.z_dim}

    @classmethod
    def from_json(cls, data: Mapping) -> "BoundingSequence":
        triples = [BoundingTriple.from_json(t) for t in data.get("triples", [])]
        return cls(triples, int(data.get("z_dim", DEFAULT_ZDIM)), data.get("length"))

    def __repr__(self) -> str:
        return f"BoundingSequence(length={self.length}, z_dim={self.z_dim})"


def load(path) -> BoundingSequence:
    return BoundingSequence.from_json(json.loads(Path(path).read_text()))


def trivial(length: int = DEFAULT_LENGTH, z_dim: int = DEFAULT_ZDIM) -> BoundingSequence:
    return BoundingSequence([], z_dim, length)


# -- strengthenings ---------------------------------------------------------

class StrengtheningError(ValueError):
    pass


def strengthen(P: BoundingSequence, index: int, new: BoundingTriple, strict: bool = False) -> BoundingSequence:
    """Replace the trivial triple at ``index`` (1-based) by ``new``."""
    if not P.triple(index).is_trivial():
        raise StrengtheningError(f"triple {index} is not (0,0,1) and cannot be changed")
    rep = check_triple(new, P.z_dim, index, strict)
    if not rep.ok:
        raise ValueError(f"new triple is invalid: {rep.clause} ({rep.detail})")
    triples = list(P.triples) + [TRIVIAL] * max(0, index - P.length)
    triples[index - 1] = new
    return BoundingSequence(triples, P.z_dim, len(triples))


def is_strengthening(P: BoundingSequence, P2: BoundingSequence) -> bool:
    n = max(P.length, P2.length)
    for i in range(1, n + 1):
        a, b = P.triple(i), P2.triple(i)
        if a != b and not a.is_trivial():
            return False
    return True


def is_k_strengthening(P: BoundingSequence, P2: BoundingSequence, k: int) -> bool:
    if not is_strengthening(P, P2):
        return False
    return all(P.triple(i) == P2.triple(i) for i in range(1, k + 1))


def changed_indices(P: BoundingSequence, P2: BoundingSequence) -> list[int]:
    n = max(P.length, P2.length)
    return [i for i in range(1, n + 1) if P.triple(i) != P2.triple(i)]


# -- random sequences used by tests and demos -------------------------------

def random_triple(rng: np.random.Generator, z_dim: int = DEFAULT_ZDIM, max_rank: int = 5,
                  density: float = 0.8) -> BoundingTriple:
    """A valid triple: constant term in [0.008, 1/36], other coefficients in range.

    The constant term dominates the total mass of the admissible non-constant
    coefficients, so ``p`` is positive on the unit box.
    """
    coeffs = {1: float(rng.uniform(0.008, 1.0 / 36.0))}
    for j in range(2, max_rank + 1):
        m = cached_unrank(j)
        if m.items and m.items[-1] > z_dim:
            continue
        if rng.random() < density:
            coeffs[j] = float(rng.uniform(-1.0, 1.0) * coefficient_bound(j))
    p = MonomialPolynomial(coeffs)
    lo, hi = p.range_bounds()
    l = float(rng.uniform(0.0, max(lo, 0.0)))
    u = float(rng.uniform(min(hi, 1.0), 1.0))
    return BoundingTriple(p, l, u)


def random_bounding_sequence(seed: int, length: int = DEFAULT_LENGTH, z_dim: int = DEFAULT_ZDIM,
                             filled: int | None = None, max_rank: int = 5) -> BoundingSequence:
    """Random valid sequence whose first ``filled`` triples are nontrivial."""
    rng = _rng.generator(seed, "bounding")
    filled = length if filled is None else filled
    triples = [random_triple(rng, z_dim, max_rank) for _ in range(filled)]
    return BoundingSequence(triples, z_dim, length)


# -- epsilon-closeness ----------------------------------------------------------

@dataclass
class ClosenessReport:
    bound: float
    sampled: float

    @property
    def deviation(self) -> float:
        return self.bound


def coefficient_deviation_bound(d: MonomialPolynomial, z_dim: int) -> float:
    """Sound bound on ``sup |d|`` and every ``sup |d d / d z_n|`` over the unit box."""
    best = sum(abs(c) for c in d.coeffs.values())
    for n in range(1, z_dim + 1):
        s = 0.0
        for j, c in d.coeffs.items():
            s += abs(c) * cached_unrank(j).items.count(n)
        best = max(best, s)
    return best


def epsilon_close(f: MonomialPolynomial, g: MonomialPolynomial, z_dim: int = DEFAULT_ZDIM,
                  grid: int = 2048, seed: int = 0) -> ClosenessReport:
    """Max deviation of values and first partials of ``f`` and ``g`` on ``[0,1]^N``.

    ``bound`` comes from the coefficients of ``f - g`` and is an upper bound;
    ``sampled`` is the maximum observed on a fixed grid of box corners and
    random points, so ``sampled <= bound``.
    """
    d = f - g
    if max(d.max_element(), 0) > z_dim:
        raise TruncationError("difference uses variables beyond the truncation")
    bound = coefficient_deviation_bound(d, z_dim)
    if d.is_zero():
        return ClosenessReport(0.0, 0.0)
    pts = _grid_points(z_dim, grid, seed)
    sampled = float(np.abs(np.asarray(d.eval(pts))).max())
    sampled = max(sampled, float(np.abs(d.gradient(pts)).max()))
    return ClosenessReport(bound, sampled)


__all__ = [
    "coefficient_bound", "MonomialPolynomial", "BoundingTriple", "TRIVIAL", "BoundingSequence",
    "ValidationReport", "TripleReport", "check_triple", "load", "trivial", "strengthen",
    "StrengtheningError", "is_strengthening", "is_k_strengthening", "changed_indices",
    "random_triple", "random_bounding_sequence", "epsilon_close", "ClosenessReport",
]
