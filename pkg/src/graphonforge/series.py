"""Truncated density power series ``t_{P,H}(z) = sum_i alpha_i z^{M_i}``.

Vertices of ``H`` placed in ``C`` or ``E`` interact through the only tiles
that depend on ``z``.  Every other pair contributes a ``z``-independent
factor ``S``.  Conditioned on the *cells* of the ``C``/``E`` vertices, the
``z``-dependent factor ``r`` is a product of the atoms

    0, 1, z^M, 1 - z^M, p_j, 1 - p_j, (p_j - l_j)/(u_j - l_j), (u_j - p_j)/(u_j - l_j)

so ``tau(H, W_P(z)) = E[S * r_cells(z)]``.  ``S`` is averaged over sampled
positions (or fixed exactly where it is constant on the cells) and each
``r`` is expanded into monomials, giving the coefficients ``alpha_i``.

A cell is ``C(third, coord)`` or ``E(third, coord)``; a first-third ``E``
cell is further split at the positions ``l_k`` and ``u_k``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from . import _rng
from .bounding import BoundingSequence, MonomialPolynomial, epsilon_close
from .density import SmallGraph
from .graphons import Graphon
from .multisets import Multiset, cached_unrank, rank
from .wpz import (C, DG, E, KC, PART_NAMES, Q, R, WpzGraphon, iota, locate, part_bounds,
                  piece_start, split)

ATOM_KINDS = frozenset({"zM", "1-zM", "p", "1-p", "p-l", "u-p"})
EMPTY = Multiset()
C_BASE = 1
E_BASE = 1000
STRIDE = KC + 1


class InadmissibleWarning(UserWarning):
    pass


# -- cell codes ---------------------------------------------------------------

def _c_code(th, k):
    return C_BASE + th * STRIDE + k


def _e_code(th, k, sub):
    return E_BASE + (th * STRIDE + k) * 4 + sub


def decode_cell(code: int) -> tuple:
    if code == 0:
        return ()
    if code < E_BASE:
        th, k = divmod(code - C_BASE, STRIDE)
        return ("C", th, k)
    rest, sub = divmod(code - E_BASE, 4)
    th, k = divmod(rest, STRIDE)
    return ("E", th, k, sub)


def vertex_codes(W: WpzGraphon, part: np.ndarray, rel: np.ndarray) -> np.ndarray:
    """Cell code of each point (0 outside ``C`` and ``E``)."""
    codes = np.zeros(part.shape, dtype=np.int64)
    ce = (part == C) | (part == E)
    if not ce.any():
        return codes
    th, k, s = split(rel[ce])
    k = np.minimum(k, KC)
    isc = part[ce] == C
    l, u = W.T.l[k], W.T.u[k]
    sub = np.where(th == 0, np.where(s < l, 0, np.where(s < u, 1, 2)), 3)
    codes[ce] = np.where(isc, _c_code(th, k), _e_code(th, k, sub))
    return codes


# -- the z-dependent factor ------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    kind: str
    k: int


@dataclass
class CEFactor:
    const: float
    atoms: tuple[Atom, ...]


def ce_factor(H: SmallGraph, cells: Sequence[tuple], P: BoundingSequence) -> CEFactor:
    """``r`` for ``C``/``E`` cells assigned to the vertices of ``H`` (others ``()``)."""
    const = 1.0
    atoms: list[Atom] = []
    ce = [i for i, c in enumerate(cells) if c]
    need: dict[int, set] = {i: set() for i in ce if cells[i][0] == "E"}
    for a, b in itertools.combinations(ce, 2):
        ca, cb = cells[a], cells[b]
        edge = H.has_edge(a, b)
        if ca[0] == "E" and cb[0] == "E":
            if edge:
                return CEFactor(0.0, ())
            continue
        if ca[0] == "C" and cb[0] == "C":
            live = ca[1] < 2 and cb[1] < 2 and ca[2] == cb[2]
            if not live:
                if edge:
                    return CEFactor(0.0, ())
                continue
            same = ca[1] == cb[1]
            atoms.append(Atom("zM" if same == edge else "1-zM", ca[2]))
            continue
        cc, ee, ie = (ca, cb, b) if ca[0] == "C" else (cb, ca, a)
        live = cc[1] < 2 and ee[1] < 2 and cc[2] == ee[2]
        if not live:
            if edge:
                return CEFactor(0.0, ())
            continue
        # C in the first third needs s <= threshold for an edge, C in the second s >= threshold
        below = (cc[1] == 0) == edge
        need[ie].add("le" if below else "ge")
    for i, req in need.items():
        if not req:
            continue
        if len(req) == 2:
            return CEFactor(0.0, ())
        _, th, k, sub = cells[i]
        le = "le" in req
        if th == 1:
            atoms.append(Atom("1-p" if le else "p", k))
            continue
        if sub == 0:
            if not le:
                return CEFactor(0.0, ())
        elif sub == 2:
            if le:
                return CEFactor(0.0, ())
        else:
            if P.upper(k) - P.lower(k) <= 0.0:
                return CEFactor(0.0, ())
            atoms.append(Atom("p-l" if le else "u-p", k))
    return CEFactor(const, tuple(atoms))


def _atom_poly(atom: Atom, P: BoundingSequence) -> dict:
    k = atom.k
    if atom.kind in ("zM", "1-zM"):
        m = cached_unrank(k)
        if atom.kind == "zM":
            return {m: 1.0}
        out = {EMPTY: 1.0}
        out[m] = out.get(m, 0.0) - 1.0
        return {key: v for key, v in out.items() if v != 0.0}
    p = {cached_unrank(j): c for j, c in P.triple(k).p.coeffs.items()}
    if atom.kind == "p":
        return p
    if atom.kind == "1-p":
        out = {key: -v for key, v in p.items()}
        out[EMPTY] = out.get(EMPTY, 0.0) + 1.0
        return {key: v for key, v in out.items() if v != 0.0}
    l, u = P.lower(k), P.upper(k)
    d = u - l
    if atom.kind == "p-l":
        out = {key: v / d for key, v in p.items()}
        out[EMPTY] = out.get(EMPTY, 0.0) - l / d
    else:
        out = {key: -v / d for key, v in p.items()}
        out[EMPTY] = out.get(EMPTY, 0.0) + u / d
    return {key: v for key, v in out.items() if v != 0.0}


@lru_cache(maxsize=None)
def _rank(m: Multiset) -> int:
    return rank(m)


def expand(factor: CEFactor, P: BoundingSequence, imax: int, z_dim: int,
           absolute: bool = False) -> tuple[dict[int, float], float]:
    """Monomial expansion of ``r`` as ``{rank: coefficient}`` plus the dropped mass.

    Monomials ranked above ``imax`` or using variables beyond ``z_dim`` are
    dropped as soon as they appear; ranks only grow under multiplication, so
    nothing dropped could come back.  ``absolute`` expands with absolute
    values of all coefficients.
    """
    if factor.const == 0.0:
        return {}, 0.0
    cur = {EMPTY: factor.const}
    dropped = 0.0
    for atom in factor.atoms:
        poly = _atom_poly(atom, P)
        nxt: dict = {}
        for m1, c1 in cur.items():
            for m2, c2 in poly.items():
                c = c1 * c2
                if absolute:
                    c = abs(c)
                m = m1.union(m2) if m2.items else m1
                if (m.items and m.items[-1] > z_dim) or m.total > 40 or _rank(m) > imax:
                    dropped += abs(c)
                    continue
                nxt[m] = nxt.get(m, 0.0) + c
        cur = nxt
    out: dict[int, float] = {}
    for m, c in cur.items():
        j = _rank(m)
        out[j] = out.get(j, 0.0) + c
    return out, dropped


# -- the z-independent factor ------------------------------------------------------------

def s_factor(W: WpzGraphon, H: SmallGraph, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``S`` for every sampled tuple and the cell codes of its vertices."""
    n = H.n
    parts = np.empty(pts.shape, dtype=np.int64)
    rels = np.empty(pts.shape)
    for i in range(n):
        parts[:, i], rels[:, i] = locate(pts[:, i])
    ce = (parts == C) | (parts == E)
    S = np.ones(len(pts))
    for a, b in itertools.combinations(range(n), 2):
        live = ~(ce[:, a] & ce[:, b])
        if not live.any():
            continue
        val = W._tiles(parts[live, a], rels[live, a], parts[live, b], rels[live, b])
        S[live] *= val if H.has_edge(a, b) else 1.0 - val
    codes = np.zeros(pts.shape, dtype=np.int64)
    for i in range(n):
        codes[:, i] = vertex_codes(W, parts[:, i], rels[:, i])
    lone = ce.sum(axis=1) < 2
    codes[lone] = 0
    return S, codes


# -- series --------------------------------------------------------------------------

@dataclass
class KeyStat:
    cells: tuple
    poly: MonomialPolynomial
    sum_s: float
    sum_s2: float
    count: int


@dataclass
class TruncatedSeries:
    """Coefficients ``alpha_i`` for ``i <= imax`` with bookkeeping for errors."""

    graph: str
    coeffs: MonomialPolynomial
    imax: int
    z_dim: int
    samples: int
    truncation_bound: float
    P: BoundingSequence | None = None
    stats: list[KeyStat] = field(default_factory=list)
    beta: dict[int, float] = field(default_factory=dict)
    method: str = "stratified"
    kmax: int | None = None
    certificate: DecayReport | None = None

    def alpha(self, i: int) -> float:
        return self.coeffs.coefficient(i)

    def _check(self, z, strict: bool) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] < self.z_dim:
            z = np.concatenate([z, np.zeros(self.z_dim - z.shape[-1])])
        if self.P is not None and z.ndim == 1 and not self.P.admissible(z[: self.P.z_dim] if len(z) >= self.P.z_dim else z):
            msg = "z is outside the region p_j(z) in [l_j, u_j]; the series need not equal the density there"
            if strict:
                raise ValueError(msg)
            warnings.warn(msg, InadmissibleWarning, stacklevel=3)
        return z

    def eval(self, z, strict: bool = False):
        return self.coeffs.eval(self._check(z, strict))

    def partial(self, z, n: int, strict: bool = False):
        return self.coeffs.partial(self._check(z, strict), n)

    def gradient(self, z, strict: bool = False) -> np.ndarray:
        return self.coeffs.gradient(self._check(z, strict))

    def sigma(self, z) -> float:
        """Standard error of the sampled estimate at ``z``."""
        if self.method != "stratified" or not self.stats:
            return 0.0
        z = np.asarray(z, dtype=float)
        n = self.samples
        mean = 0.0
        second = 0.0
        for st in self.stats:
            r = float(st.poly.eval(z)) if st.poly.coeffs else 0.0
            mean += r * st.sum_s / n
            second += r * r * st.sum_s2 / n
        var = max(second - mean * mean, 0.0) * n / max(n - 1, 1)
        return math.sqrt(var / n)

    def grade_masses(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for j, c in self.coeffs.coeffs.items():
            g = cached_unrank(j).total
            out[g] = out.get(g, 0.0) + abs(c)
        return dict(sorted(out.items()))

    def to_json(self) -> dict:
        return {"graph": self.graph, "method": self.method, "imax": self.imax, "z_dim": self.z_dim,
                "kmax": self.kmax, "samples": self.samples, "truncation_bound": self.truncation_bound,
                "coefficients": {str(j): c for j, c in self.coeffs.coeffs.items()},
                "monomials": {str(j): str(cached_unrank(j)) for j in self.coeffs.coeffs},
                "decay": None if self.certificate is None else
                {"c": self.certificate.c, "residual": self.certificate.residual}}


def _wpz_for(P: BoundingSequence, z_dim: int, d_block: Graphon | None, r_den: float) -> WpzGraphon:
    return WpzGraphon(P, np.zeros(max(z_dim, 1)), d_block, r_den)


class _Accumulator:
    def __init__(self, H, P, imax, z_dim):
        self.H, self.P, self.imax, self.z_dim = H, P, imax, z_dim
        self.sums: dict[tuple, list] = {}

    def add(self, S: np.ndarray, codes: np.ndarray, weight: float = 1.0) -> None:
        uniq, inv = np.unique(codes, axis=0, return_inverse=True)
        inv = inv.ravel()
        s1 = np.bincount(inv, weights=S, minlength=len(uniq)) * weight
        s2 = np.bincount(inv, weights=S * S, minlength=len(uniq)) * weight * weight
        cnt = np.bincount(inv, minlength=len(uniq))
        for row, a, b, c in zip(map(tuple, uniq.tolist()), s1, s2, cnt):
            acc = self.sums.setdefault(row, [0.0, 0.0, 0])
            acc[0] += a
            acc[1] += b
            acc[2] += int(c)

    def finish(self, n_norm: float, graph: str, method: str, kmax, samples: int) -> TruncatedSeries:
        alpha: dict[int, float] = {}
        beta: dict[int, float] = {}
        trunc = 0.0
        stats = []
        for row in sorted(self.sums):
            sum_s, sum_s2, cnt = self.sums[row]
            cells = tuple(decode_cell(c) for c in row)
            f = ce_factor(self.H, cells, self.P)
            poly, dropped = expand(f, self.P, self.imax, self.z_dim)
            apoly, _ = expand(f, self.P, self.imax, self.z_dim, absolute=True)
            w = sum_s / n_norm
            trunc += abs(w) * dropped
            for j, c in poly.items():
                alpha[j] = alpha.get(j, 0.0) + w * c
            for j, c in apoly.items():
                beta[j] = beta.get(j, 0.0) + (cnt / samples if method == "stratified" else w) * c
            stats.append(KeyStat(cells, MonomialPolynomial(poly), sum_s, sum_s2, cnt))
        return TruncatedSeries(graph, MonomialPolynomial(alpha), self.imax, self.z_dim, samples, trunc,
                               self.P, stats, beta, method, kmax)


def assemble_series(H: SmallGraph, P: BoundingSequence, kmax: int = 5, imax: int = 64,
                    samples: int = 200_000, seed: int = 0, method: str = "stratified",
                    z_dim: int | None = None, d_block: Graphon | None = None, r_den: float = 25.0,
                    per_labeling: int = 64) -> TruncatedSeries:
    """Coefficients of the truncated density series of ``H`` in ``W_P(z)``.

    ``stratified`` averages ``S * r`` over ``samples`` uniform tuples, with
    exact cells for every coordinate it meets.  ``labelings`` walks the
    labelings with cell indices up to ``kmax`` (triples past ``kmax`` are
    treated as trivial at that truncation) and leaves the tail cells out,
    charging their measure to the truncation bound.
    """
    z_dim = P.z_dim if z_dim is None else z_dim
    if samples <= 0:
        raise ValueError("sample budget must be positive")
    if method == "labelings":
        return _assemble_labelings(H, P, kmax, imax, z_dim, d_block, r_den, per_labeling, seed)
    if method != "stratified":
        raise ValueError(f"unknown method {method!r}")
    W = _wpz_for(P, z_dim, d_block, r_den)
    acc = _Accumulator(H, P, imax, z_dim)
    for b, size in enumerate(_rng.block_sizes(samples)):
        g = _rng.generator(seed, "series", H.n, b)
        pts = g.random((size, H.n))
        S, codes = s_factor(W, H, pts)
        acc.add(S, codes)
    return acc.finish(samples, str(H), "stratified", kmax, samples)


# -- labelings --------------------------------------------------------------------------

@dataclass(frozen=True)
class Label:
    name: str
    size: float
    intervals: tuple          # global half-open intervals
    cell: tuple = ()          # C/E cell, () otherwise
    tail: bool = False


def _c_interval(part: int, lo_rel: float, hi_rel: float) -> tuple[float, float]:
    return float(iota(part, lo_rel)), float(iota(part, hi_rel))


def labels(P: BoundingSequence | None, kmax: int) -> list[Label]:
    """The label sets at truncation ``kmax``; their sizes sum to one.

    First-third ``E`` cells are split at ``l_k`` and ``u_k`` (with ``P``
    omitted the split is trivial and the outer pieces are empty).
    """
    P = BoundingSequence() if P is None else P
    out = []
    simple = ["A", "B", "D_A", "D_B", "D_C", "D_D", "D_E", "D_F"]
    for nm in simple:
        lo, hi = part_bounds(PART_NAMES.index(nm))
        out.append(Label(nm, hi - lo, ((lo, hi),)))
    for j in range(3):
        lo, hi = _c_interval(DG, j / 3.0, (j + 1) / 3.0)
        out.append(Label(f"D_G{j + 1}", hi - lo, ((lo, hi),)))
    for nm in ("F",):
        lo, hi = part_bounds(PART_NAMES.index(nm))
        out.append(Label(nm, hi - lo, ((lo, hi),)))
    for X in (Q, R):
        lo, hi = part_bounds(X)
        out.append(Label(PART_NAMES[X], hi - lo, ((lo, hi),)))
    for th in range(3):
        for k in range(1, kmax + 1):
            a = piece_start(th, k)
            w = 2.0 ** -k / 3.0
            iv = _c_interval(C, a, a + w)
            out.append(Label(f"C[{th},{k}]", w / 25.0, (iv,), ("C", th, k)))
    for th in range(3):
        for k in range(1, kmax + 1):
            a = piece_start(th, k)
            w = 2.0 ** -k / 3.0
            if th == 0:
                l, u = P.lower(k), P.upper(k)
                for sub, (s0, s1) in enumerate(((0.0, l), (l, u), (u, 1.0))):
                    iv = _c_interval(E, a + s0 * w, a + s1 * w)
                    out.append(Label(f"E[{th},{k},{sub}]", (s1 - s0) * w / 25.0, (iv,), ("E", th, k, sub)))
            else:
                iv = _c_interval(E, a, a + w)
                out.append(Label(f"E[{th},{k}]", w / 25.0, (iv,), ("E", th, k, 3)))
    tail_w = 2.0 ** -kmax / 3.0
    for X, nm in ((C, "C_tail"), (E, "E_tail")):
        ivs = tuple((float(iota(X, (th + 1.0 - 2.0 ** -kmax) / 3.0)), float(iota(X, (th + 1.0) / 3.0)))
                    for th in range(3))
        out.append(Label(nm, 3 * tail_w / 25.0, ivs, (), tail=True))
    return out


def enumerate_labelings(H: SmallGraph, kmax: int, P: BoundingSequence | None = None
                        ) -> Iterator[tuple[Label, ...]]:
    """All labelings of the vertices of ``H`` in a fixed order."""
    labs = labels(P, kmax)
    return itertools.product(labs, repeat=H.n)


@dataclass
class LabelTerm:
    labels: tuple[str, ...]
    size: float
    s: float
    s_error: float
    factor: CEFactor
    poly: dict[int, float]

    def value(self, z) -> float:
        return self.size * self.s * float(MonomialPolynomial(self.poly).eval(np.asarray(z, dtype=float)))


def _sample_in(label: Label, g: np.random.Generator, size: int) -> np.ndarray:
    if len(label.intervals) == 1:
        lo, hi = label.intervals[0]
        return lo + (hi - lo) * g.random(size)
    widths = np.array([hi - lo for lo, hi in label.intervals])
    pick = g.choice(len(widths), size=size, p=widths / widths.sum())
    los = np.array([lo for lo, _ in label.intervals])[pick]
    return los + widths[pick] * g.random(size)


def _constant_pair(a: Label, b: Label) -> bool:
    """Whether the z-independent factor of the pair is constant on ``a x b``."""
    if a.cell and b.cell:
        return True   # handled by r
    names = {a.name, b.name}
    return "R" in names or names == {"Q"}


def _centre(label: Label) -> float:
    lo, hi = label.intervals[0]
    return 0.5 * (lo + hi)


def term_for_labeling(H: SmallGraph, labeling: Sequence[Label], P: BoundingSequence, imax: int = 64,
                      z_dim: int | None = None, samples: int = 64, seed: int = 0,
                      W: WpzGraphon | None = None) -> LabelTerm:
    """``q = s * r * prod |X_i|`` for one labeling.

    ``s`` is exact when every pair of labels meets a constant tile (pairs of
    ``C``/``E`` cells, pairs involving ``R``, and ``Q x Q``); otherwise it is
    averaged over ``samples`` points drawn inside the labels.
    """
    z_dim = P.z_dim if z_dim is None else z_dim
    W = W if W is not None else _wpz_for(P, z_dim, None, 25.0)
    size = math.prod(lab.size for lab in labeling)
    cells = [lab.cell for lab in labeling]
    ce_count = sum(1 for c in cells if c)
    factor = ce_factor(H, cells if ce_count >= 2 else [()] * H.n, P)
    poly, _ = expand(factor, P, imax, z_dim)
    if size == 0.0 or factor.const == 0.0:
        return LabelTerm(tuple(l.name for l in labeling), size, 0.0, 0.0, factor, poly)
    if all(_constant_pair(labeling[i], labeling[j]) for i, j in itertools.combinations(range(H.n), 2)):
        pts = np.array([[_centre(lab) for lab in labeling]])
        S, _ = s_factor(W, H, pts)
        return LabelTerm(tuple(l.name for l in labeling), size, float(S[0]), 0.0, factor, poly)
    g = _rng.generator(seed, "labeling", *[l.name for l in labeling])
    pts = np.stack([_sample_in(lab, g, samples) for lab in labeling], axis=1)
    S, _ = s_factor(W, H, pts)
    return LabelTerm(tuple(l.name for l in labeling), size, float(S.mean()),
                     float(S.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0, factor, poly)


def _truncate(P: BoundingSequence, kmax: int) -> BoundingSequence:
    return BoundingSequence(P.triples[:kmax], P.z_dim, max(kmax, 1))


def _assemble_labelings(H, P, kmax, imax, z_dim, d_block, r_den, per_labeling, seed) -> TruncatedSeries:
    Pk = _truncate(P, kmax)
    W = _wpz_for(Pk, z_dim, d_block, r_den)
    alpha: dict[int, float] = {}
    trunc = 0.0
    count = 0
    for lab in enumerate_labelings(H, kmax, Pk):
        size = math.prod(l.size for l in lab)
        if size == 0.0:
            continue
        if any(l.tail for l in lab):
            trunc += size
            continue
        term = term_for_labeling(H, lab, Pk, imax, z_dim, per_labeling, seed, W)
        count += 1
        for j, c in term.poly.items():
            alpha[j] = alpha.get(j, 0.0) + size * term.s * c
    return TruncatedSeries(str(H), MonomialPolynomial(alpha), imax, z_dim, count, trunc, Pk, [], {},
                           "labelings", kmax)


def partition_of_unity(H: SmallGraph, P: BoundingSequence, kmax: int) -> float:
    """``sum over labelings of prod |X_i|``, accumulated labeling by labeling."""
    sizes = np.array([l.size for l in labels(P, kmax)])
    total = np.ones(1)
    for _ in range(H.n):
        total = np.outer(total, sizes).ravel()
    return float(math.fsum(total.tolist()))


# -- checks -----------------------------------------------------------------------------

@dataclass
class DecayReport:
    c: float
    residual: float
    grades: list[int]

    @property
    def passed(self) -> bool:
        return self.c < 1.0


def decay_check(series: TruncatedSeries | dict[int, float], min_grades: int = 3,
                floor: float = 1e-12) -> DecayReport:
    """Fit ``log(grade mass) ~ a + g log c``.

    Grades whose mass is below ``floor`` times the largest grade mass are
    treated as zero (they sit at rounding level).
    """
    if isinstance(series, TruncatedSeries):
        if series.imax < 30:
            raise ValueError("decay fitting needs imax >= 30")
        masses = series.grade_masses()
    else:
        masses = {}
        for j, c in series.items():
            g = cached_unrank(int(j)).total
            masses[g] = masses.get(g, 0.0) + abs(c)
    top = max(masses.values(), default=0.0)
    pts = [(g, m) for g, m in sorted(masses.items()) if m > floor * top]
    if not pts or all(g == 0 for g, _ in pts):
        # nothing beyond the constant term: a zero tail decays trivially
        rep = DecayReport(0.0, 0.0, [g for g, _ in pts])
        if isinstance(series, TruncatedSeries):
            series.certificate = rep
        return rep
    if len(pts) < min_grades:
        raise ValueError("not enough nonzero grades to fit a decay rate")
    g = np.array([p[0] for p in pts], dtype=float)
    y = np.log([p[1] for p in pts])
    slope, icpt = np.polyfit(g, y, 1)
    resid = float(np.sqrt(np.mean((y - (icpt + slope * g)) ** 2)))
    rep = DecayReport(float(np.exp(slope)), resid, [int(v) for v in g])
    if isinstance(series, TruncatedSeries):
        series.certificate = rep
    return rep


def geometric_series(c: float, max_grade: int, imax: int = 10_000) -> dict[int, float]:
    """Synthetic coefficients whose grade-``n`` mass is ``c^n``."""
    from .multisets import grade_partitions, partition_number

    out = {}
    for n in range(max_grade + 1):
        share = c ** n / partition_number(n)
        for parts in grade_partitions(n):
            j = rank(Multiset(parts))
            if j <= imax:
                out[j] = share
    return out


def nested_strengthening(P: BoundingSequence, family: BoundingSequence, k: int) -> BoundingSequence:
    """``P`` with every trivial triple past index ``k`` replaced from ``family``."""
    triples = []
    for i in range(1, max(P.length, family.length) + 1):
        t = P.triple(i)
        if i > k and t.is_trivial():
            t = family.triple(i)
        triples.append(t)
    return BoundingSequence(triples, P.z_dim, len(triples))


@dataclass
class ClosenessTrend:
    ks: list[int]
    deviations: list[float]
    sampled: list[float]
    noise: list[float]

    def non_increasing(self, slack: float = 0.0) -> bool:
        return all(b <= a + slack for a, b in zip(self.deviations, self.deviations[1:]))


def closeness_under_strengthening(H: SmallGraph, P: BoundingSequence, ks: Sequence[int],
                                  family: BoundingSequence, samples: int = 200_000, seed: int = 0,
                                  imax: int = 64, method: str = "stratified", kmax: int = 5) -> ClosenessTrend:
    """epsilon-closeness of ``t_P`` and ``t_P'`` for nested strengthenings ``P'``.

    The same sampled tuples are used for every sequence, so differences come
    only from the changed triples.
    """
    base = assemble_series(H, P, kmax, imax, samples, seed, method)
    devs, samp, noise = [], [], []
    for k in ks:
        P2 = nested_strengthening(P, family, k)
        s2 = assemble_series(H, P2, kmax, imax, samples, seed, method)
        rep = epsilon_close(base.coeffs, s2.coeffs, P.z_dim)
        devs.append(rep.bound)
        samp.append(rep.sampled)
        noise.append(base.truncation_bound + s2.truncation_bound)
    return ClosenessTrend(list(ks), devs, samp, noise)


def grade_count_bound_holds(n_max: int = 40) -> bool:
    from .multisets import partition_number

    return all(partition_number(n) <= math.exp(10.0 * math.sqrt(n)) for n in range(n_max + 1))


__all__ = [
    "ATOM_KINDS", "Atom", "CEFactor", "ce_factor", "expand", "s_factor", "TruncatedSeries",
    "assemble_series", "Label", "labels", "enumerate_labelings", "LabelTerm", "term_for_labeling",
    "partition_of_unity", "decay_check", "DecayReport", "geometric_series", "nested_strengthening",
    "closeness_under_strengthening", "ClosenessTrend", "grade_count_bound_holds", "decode_cell",
    "vertex_codes", "InadmissibleWarning",
]
