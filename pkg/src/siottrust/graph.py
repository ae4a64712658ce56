"""Bipartite trustor/trustee graph holding trust experiences.

Ratings are stored on the internal unit scale ``(0, 1]``. The external
1..5 scale used by rating files and reports maps onto it by division by 5.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np
from scipy import sparse

EXTERNAL_MAX = 5.0
EXTERNAL_MIN = 1.0


class RatingDomainError(ValueError):
    """Rating outside its admissible interval."""


class RatingFileError(ValueError):
    """Malformed record in a rating file."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def to_internal(rating: float) -> float:
    """Map an external 1..5 rating onto (0, 1]."""
    rating = float(rating)
    if not (EXTERNAL_MIN <= rating <= EXTERNAL_MAX):
        raise RatingDomainError(f"external rating {rating!r} outside [1, 5]")
    return rating / EXTERNAL_MAX


def to_external(value):
    """Map internal values back onto the 1..5 scale; accepts scalars or arrays."""
    if np.ndim(value):
        return np.asarray(value, dtype=float) * EXTERNAL_MAX
    return float(value) * EXTERNAL_MAX


def check_rating(r: float) -> float:
    r = float(r)
    if not (0.0 < r <= 1.0):
        raise RatingDomainError(f"internal rating {r!r} outside (0, 1]")
    return r


class IdMap:
    """Bijection between external string labels and dense indices."""

    def __init__(self, labels: Iterable[str] = ()):
        self._index: dict[str, int] = {}
        self._labels: list[str] = []
        for label in labels:
            self.add(label)

    def add(self, label: str) -> int:
        label = str(label)
        idx = self._index.get(label)
        if idx is None:
            idx = len(self._labels)
            self._index[label] = idx
            self._labels.append(label)
        return idx

    def index(self, label: str) -> int:
        return self._index[str(label)]

    def label(self, idx: int) -> str:
        return self._labels[idx]

    def __contains__(self, label) -> bool:
        return str(label) in self._index

    def __len__(self) -> int:
        return len(self._labels)

    @property
    def labels(self) -> list[str]:
        return list(self._labels)


@dataclass
class TrustBipartiteGraph:
    """Trustor -> trustee experience graph with at most one edge per pair.

    A repeated experience overwrites the stored rating. Setting
    ``smoothing`` to a value in (0, 1] switches to exponential averaging,
    ``new = (1 - smoothing) * old + smoothing * r``.

    Examples
    --------
    >>> g = TrustBipartiteGraph(2, 3)
    >>> g.add_experience(0, 1, 0.8)
    >>> g.trustee_degree(1), g.n_edges
    (1, 1)
    """

    n: int
    m: int
    smoothing: float | None = None
    trustor_ids: IdMap | None = None
    trustee_ids: IdMap | None = None
    _rows: list[dict[int, float]] = field(init=False, repr=False)
    _cols: list[set[int]] = field(init=False, repr=False)
    _n_edges: int = field(init=False, repr=False, default=0)

    def __post_init__(self):
        if self.n < 0 or self.m < 0:
            raise ValueError("graph sizes must be non-negative")
        if self.smoothing is not None and not (0.0 < self.smoothing <= 1.0):
            raise ValueError("smoothing must lie in (0, 1]")
        self._rows = [dict() for _ in range(self.n)]
        self._cols = [set() for _ in range(self.m)]
        self._n_edges = 0

    # -- mutation ---------------------------------------------------------

    def _check_ids(self, u: int, v: int | None = None):
        if not (0 <= u < self.n):
            raise IndexError(f"trustor id {u} out of range [0, {self.n})")
        if v is not None and not (0 <= v < self.m):
            raise IndexError(f"trustee id {v} out of range [0, {self.m})")

    def add_experience(self, u: int, v: int, r: float) -> None:
        self._check_ids(u, v)
        r = check_rating(r)
        row = self._rows[u]
        if v in row:
            if self.smoothing is not None:
                r = (1.0 - self.smoothing) * row[v] + self.smoothing * r
        else:
            self._cols[v].add(u)
            self._n_edges += 1
        row[v] = r

    def remove_trustee_edges(self, v: int) -> int:
        """Drop every experience about trustee ``v``; returns the count removed."""
        self._check_trustee(v)
        removed = 0
        for u in self._cols[v]:
            del self._rows[u][v]
            removed += 1
        self._cols[v] = set()
        self._n_edges -= removed
        return removed

    def add_trustor(self) -> int:
        """Append a newcomer trustor with no experiences; returns its id."""
        self._rows.append(dict())
        self.n += 1
        return self.n - 1

    def copy(self) -> "TrustBipartiteGraph":
        g = TrustBipartiteGraph(self.n, self.m, self.smoothing, self.trustor_ids, self.trustee_ids)
        g._rows = [dict(r) for r in self._rows]
        g._cols = [set(c) for c in self._cols]
        g._n_edges = self._n_edges
        return g

    # -- queries ----------------------------------------------------------

    @property
    def n_edges(self) -> int:
        return self._n_edges

    def trustee_degree(self, v: int) -> int:
        self._check_trustee(v)
        return len(self._cols[v])

    def _check_trustee(self, v: int):
        if not (0 <= v < self.m):
            raise IndexError(f"trustee id {v} out of range [0, {self.m})")

    def trustee_degrees(self) -> np.ndarray:
        return np.fromiter((len(c) for c in self._cols), dtype=np.int64, count=self.m)

    def trustor_degrees(self) -> np.ndarray:
        return np.fromiter((len(r) for r in self._rows), dtype=np.int64, count=self.n)

    def rating_row(self, u: int) -> list[tuple[int, float]]:
        """Sparse row of ``u`` as ``(trustee, rating)`` pairs sorted by trustee."""
        self._check_ids(u)
        return sorted(self._rows[u].items())

    def raters(self, v: int) -> list[int]:
        self._check_trustee(v)
        return sorted(self._cols[v])

    def rating(self, u: int, v: int) -> float | None:
        self._check_ids(u, v)
        return self._rows[u].get(v)

    def edges(self) -> Iterator[tuple[int, int, float]]:
        for u, row in enumerate(self._rows):
            for v in sorted(row):
                yield u, v, row[v]

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Edge list as ``(trustors, trustees, ratings)`` in row-major order."""
        z = self._n_edges
        us = np.empty(z, dtype=np.int64)
        vs = np.empty(z, dtype=np.int64)
        rs = np.empty(z, dtype=float)
        k = 0
        for u, row in enumerate(self._rows):
            for v in sorted(row):
                us[k], vs[k], rs[k] = u, v, row[v]
                k += 1
        return us, vs, rs

    def to_csr(self) -> sparse.csr_matrix:
        """The bi-adjacency matrix ``B`` (n x m)."""
        us, vs, rs = self.to_arrays()
        return sparse.csr_matrix((rs, (us, vs)), shape=(self.n, self.m))

    def density(self) -> float:
        cells = self.n * self.m
        return self._n_edges / cells if cells else 0.0

    def summary(self) -> dict:
        return {
            "users": self.n,
            "items": self.m,
            "ratings": self._n_edges,
            "density_pct": 100.0 * self.density(),
            "mean_ratings_per_user": self._n_edges / self.n if self.n else 0.0,
        }

    @classmethod
    def from_arrays(cls, n: int, m: int, us, vs, rs, **kwargs) -> "TrustBipartiteGraph":
        g = cls(n, m, **kwargs)
        for u, v, r in zip(np.asarray(us).tolist(), np.asarray(vs).tolist(), np.asarray(rs).tolist()):
            g.add_experience(u, v, r)
        return g


def _format_rating(x: float) -> str:
    x = round(x, 12)
    return str(int(x)) if x == int(x) else repr(x)


def write_tsv(g: TrustBipartiteGraph, path: str | os.PathLike | io.TextIOBase) -> None:
    """Write ratings on the external scale, one ``trustor<TAB>trustee<TAB>rating`` per line."""
    close = False
    if not hasattr(path, "write"):
        fh = open(path, "w", encoding="utf-8", newline="\n")
        close = True
    else:
        fh = path
    try:
        for u, v, r in g.edges():
            su = g.trustor_ids.label(u) if g.trustor_ids else str(u)
            sv = g.trustee_ids.label(v) if g.trustee_ids else str(v)
            fh.write(f"{su}\t{sv}\t{_format_rating(r * EXTERNAL_MAX)}\n")
    finally:
        if close:
            fh.close()


def read_tsv(path: str | os.PathLike | io.TextIOBase, **kwargs) -> TrustBipartiteGraph:
    """Parse a rating file; ids are opaque labels mapped to dense indices.

    Raises :class:`RatingFileError` carrying the 1-based line number of the
    first malformed or out-of-range record.
    """
    close = False
    if not hasattr(path, "read"):
        fh = open(path, "r", encoding="utf-8")
        close = True
    else:
        fh = path
    trustors, trustees = IdMap(), IdMap()
    us: list[int] = []
    vs: list[int] = []
    rs: list[float] = []
    try:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise RatingFileError(lineno, f"expected 3 tab-separated fields, got {len(parts)}")
            try:
                value = float(parts[2])
            except ValueError:
                raise RatingFileError(lineno, f"rating {parts[2]!r} is not a number") from None
            try:
                internal = to_internal(value)
            except RatingDomainError as exc:
                raise RatingFileError(lineno, str(exc)) from None
            us.append(trustors.add(parts[0].strip()))
            vs.append(trustees.add(parts[1].strip()))
            rs.append(internal)
    finally:
        if close:
            fh.close()
    g = TrustBipartiteGraph(len(trustors), len(trustees), trustor_ids=trustors, trustee_ids=trustees, **kwargs)
    for u, v, r in zip(us, vs, rs):
        g.add_experience(u, v, r)
    return g
