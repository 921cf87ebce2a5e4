"""Finite multisets of positive integers and their graded linear order.

Multisets are ordered first by the sum of their elements and, within one
grade, by the multiplicity vector ``chi``: the multiset whose multiplicity
vector has the smaller entry at the first differing position comes first.
``unrank(1)`` is the empty multiset, ``unrank(2) == {1}``,
``unrank(3) == {2}``, ``unrank(4) == {1, 1}``.
"""

from __future__ import annotations

import re
from bisect import bisect_right
from collections import Counter
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

import numpy as np

MAX_GRADE = 64


class TruncationError(ValueError):
    """A monomial needs a coordinate beyond the declared truncation."""


class Multiset:
    """Immutable multiset of positive integers, stored as a sorted tuple."""

    __slots__ = ("_items", "_hash")

    def __init__(self, items: Iterable[int] = ()):
        items = tuple(sorted(int(v) for v in items))
        if items and items[0] < 1:
            raise ValueError("multiset elements must be positive integers")
        self._items = items
        self._hash = hash(items)

    @classmethod
    def from_counts(cls, counts: dict[int, int]) -> "Multiset":
        out = []
        for n, c in counts.items():
            if c < 0:
                raise ValueError("negative multiplicity")
            out.extend([n] * c)
        return cls(out)

    @classmethod
    def parse(cls, text: str) -> "Multiset":
        """Parse a literal such as ``{1,1,3}`` or ``{}``."""
        body = text.strip()
        if not (body.startswith("{") and body.endswith("}")):
            raise ValueError(f"not a multiset literal: {text!r}")
        body = body[1:-1].strip()
        if not body:
            return cls()
        return cls(int(tok) for tok in re.split(r"\s*,\s*", body))

    @property
    def items(self) -> tuple[int, ...]:
        return self._items

    @property
    def counts(self) -> dict[int, int]:
        return dict(Counter(self._items))

    @property
    def total(self) -> int:
        """Sum of the elements (the grade)."""
        return sum(self._items)

    def chi(self, length: int | None = None) -> tuple[int, ...]:
        """Multiplicity vector; entry ``n - 1`` is the multiplicity of ``n``."""
        top = self._items[-1] if self._items else 0
        length = top if length is None else length
        vec = [0] * length
        for v in self._items:
            if v <= length:
                vec[v - 1] += 1
        return tuple(vec)

    def min(self) -> int:
        if not self._items:
            raise ValueError("empty multiset has no minimum")
        return self._items[0]

    def remove_one(self, value: int) -> "Multiset":
        items = list(self._items)
        items.remove(value)
        return Multiset(items)

    def union(self, other: "Multiset") -> "Multiset":
        return Multiset(self._items + other._items)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[int]:
        return iter(self._items)

    def __contains__(self, value) -> bool:
        return value in self._items

    def __eq__(self, other) -> bool:
        return isinstance(other, Multiset) and self._items == other._items

    def __hash__(self) -> int:
        return self._hash

    def __lt__(self, other: "Multiset") -> bool:
        return compare(self, other) < 0

    def __le__(self, other: "Multiset") -> bool:
        return compare(self, other) <= 0

    def __repr__(self) -> str:
        return "Multiset({" + ",".join(map(str, self._items)) + "})"

    def __str__(self) -> str:
        return "{" + ",".join(map(str, self._items)) + "}"


def compare(a: Multiset, b: Multiset) -> int:
    """Return -1, 0 or 1 according to the graded order."""
    sa, sb = a.total, b.total
    if sa != sb:
        return -1 if sa < sb else 1
    if a == b:
        return 0
    length = max(a.items[-1] if a.items else 0, b.items[-1] if b.items else 0)
    for ca, cb in zip(a.chi(length), b.chi(length)):
        if ca != cb:
            return -1 if ca < cb else 1
    return 0  # pragma: no cover


@lru_cache(maxsize=None)
def count_partitions(n: int, least: int = 1) -> int:
    """Number of partitions of ``n`` into parts that are all ``>= least``."""
    if n == 0:
        return 1
    if least > n:
        return 0
    total = 0
    for c in range(n // least + 1):
        total += count_partitions(n - c * least, least + 1)
    return total


def partition_number(n: int) -> int:
    return count_partitions(n, 1)


@lru_cache(maxsize=None)
def _grade_offsets() -> tuple[int, ...]:
    # offsets[g] = number of multisets of grade < g
    offsets = [0]
    for g in range(MAX_GRADE + 1):
        offsets.append(offsets[-1] + partition_number(g))
    return tuple(offsets)


def grade_start(n: int) -> int:
    """Rank of the first multiset of grade ``n``."""
    _check_grade(n)
    return _grade_offsets()[n] + 1


def _check_grade(n: int) -> None:
    if n > MAX_GRADE:
        raise ValueError(f"grades above {MAX_GRADE} are not supported")


def grade_partitions(n: int, least: int = 1) -> Iterator[tuple[int, ...]]:
    """Partitions of ``n`` into parts ``>= least`` in increasing order."""
    if n == 0:
        yield ()
        return
    if least > n:
        return
    for c in range(n // least + 1):
        rest = n - c * least
        for tail in grade_partitions(rest, least + 1):
            yield (least,) * c + tail


def _within_rank(items: Sequence[int], n: int, least: int) -> int:
    # 0-based position of ``items`` among partitions of n into parts >= least
    pos = 0
    while n > 0:
        c = sum(1 for v in items if v == least)
        for c2 in range(c):
            pos += count_partitions(n - c2 * least, least + 1)
        n -= c * least
        items = [v for v in items if v != least]
        least += 1
    return pos


def _within_unrank(pos: int, n: int, least: int) -> list[int]:
    out: list[int] = []
    while n > 0:
        c = 0
        while True:
            block = count_partitions(n - c * least, least + 1)
            if pos < block:
                break
            pos -= block
            c += 1
            if c * least > n:
                raise IndexError("position out of range")  # pragma: no cover
        out.extend([least] * c)
        n -= c * least
        least += 1
    return out


def rank(a: Multiset) -> int:
    """1-based position of ``a`` in the graded order."""
    n = a.total
    _check_grade(n)
    return _grade_offsets()[n] + 1 + _within_rank(list(a.items), n, 1)


def unrank(i: int) -> Multiset:
    """The ``i``-th multiset (1-based)."""
    if i < 1:
        raise ValueError("rank must be a positive integer")
    offsets = _grade_offsets()
    if i > offsets[-1]:
        raise ValueError("rank beyond the supported grades")
    n = bisect_right(offsets, i - 1) - 1
    return Multiset(_within_unrank(i - 1 - offsets[n], n, 1))


def iter_multisets(limit: int) -> Iterator[Multiset]:
    """``unrank(1), ..., unrank(limit)`` generated grade by grade."""
    produced = 0
    n = 0
    while produced < limit:
        for parts in grade_partitions(n):
            yield Multiset(parts)
            produced += 1
            if produced >= limit:
                return
        n += 1


@lru_cache(maxsize=4096)
def cached_unrank(i: int) -> Multiset:
    return unrank(i)


def monomial_eval(m: Multiset, z) -> float:
    """Product of ``z_n`` over the elements of ``m`` (1-based coordinates)."""
    z = np.asarray(z, dtype=float)
    if m.items and m.items[-1] > z.shape[-1]:
        raise TruncationError(
            f"monomial {m} needs coordinate {m.items[-1]} but z has {z.shape[-1]}"
        )
    out = np.ones(z.shape[:-1])
    for v in m.items:
        out = out * z[..., v - 1]
    return out if out.ndim else float(out)


def exponent_vector(m: Multiset, dim: int) -> np.ndarray:
    if m.items and m.items[-1] > dim:
        raise TruncationError(f"monomial {m} exceeds dimension {dim}")
    vec = np.zeros(dim, dtype=np.int64)
    for v in m.items:
        vec[v - 1] += 1
    return vec


def max_element(i: int) -> int:
    m = cached_unrank(i)
    return m.items[-1] if m.items else 0


# Double-indexed coordinates: block k holds k + 1 entries.

def flatten(k: int, j: int) -> int:
    """Flat 1-based index of the double index ``(k, j)``."""
    if k < 1:
        raise ValueError("block index must be positive")
    if not 1 <= j <= k + 1:
        raise ValueError(f"offset {j} outside [1, {k + 1}]")
    return (k - 1) * (k + 2) // 2 + j


def unflatten(i: int) -> tuple[int, int]:
    if i < 1:
        raise ValueError("flat index must be positive")
    k = 1
    while flatten(k, k + 1) < i:
        k += 1
    return k, i - flatten(k, 1) + 1


def block_size(depth: int) -> int:
    """Number of flat coordinates in blocks ``1..depth``."""
    return flatten(depth, depth + 1) if depth > 0 else 0
