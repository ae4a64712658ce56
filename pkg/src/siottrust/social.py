"""Implicit trustor social network from neighbour-degree distributions.

Each trustor is summarised by the distribution of degrees of the trustees
it has rated. Two trustors whose distributions are close in Hellinger
distance become friends.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .graph import TrustBipartiteGraph

MODES = ("literal", "canonical")
_SQRT2 = math.sqrt(2.0)

# exact pairwise differencing is used below this many bin operations
_EXACT_BUDGET = 5e8


class UndefinedDistanceError(ValueError):
    """Distance requested for a trustor without any experience."""


@dataclass
class OpCounter:
    """Work tally for the distance build (incidence reads, pair-bin ops)."""

    incidence: int = 0
    pair_bins: int = 0

    @property
    def total(self) -> int:
        return self.incidence + self.pair_bins


def _check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"unknown Hellinger mode {mode!r}; expected one of {MODES}")
    return mode


def max_trustee_degree(g: TrustBipartiteGraph) -> int:
    degs = g.trustee_degrees()
    return int(degs.max()) if degs.size else 0


def degree_distribution(g: TrustBipartiteGraph, u: int, d: int | None = None) -> np.ndarray | None:
    """Neighbour-degree distribution of trustor ``u`` over bins ``1..d``.

    Bin ``k - 1`` holds the fraction of ``u``'s rated trustees whose degree
    is exactly ``k``. Returns ``None`` for a trustor with no experiences.
    """
    row = g.rating_row(u)
    if not row:
        return None
    if d is None:
        d = max_trustee_degree(g)
    out = np.zeros(d)
    for v, _ in row:
        out[g.trustee_degree(v) - 1] += 1.0
    return out / len(row)


def degree_distributions(g: TrustBipartiteGraph, counter: OpCounter | None = None):
    """All distributions at once as an ``(n, d)`` array plus an empty mask."""
    d = max(max_trustee_degree(g), 1)
    degs = g.trustee_degrees()
    us, vs, _ = g.to_arrays()
    counts = np.zeros((g.n, d))
    np.add.at(counts, (us, degs[vs] - 1), 1.0)
    totals = counts.sum(axis=1)
    empty = totals == 0
    counts[~empty] /= totals[~empty, None]
    if counter is not None:
        counter.incidence += int(us.size) + g.m
    return counts, empty


def hellinger_distance(p, q, mode: str = "literal") -> float:
    """Hellinger distance between two neighbour-degree distributions.

    ``literal`` evaluates ``||p - q|| / sqrt(2)`` on the raw probabilities;
    ``canonical`` takes element-wise square roots first.
    """
    _check_mode(mode)
    if p is None or q is None:
        raise UndefinedDistanceError("distance undefined for a trustor with no neighbours")
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"distribution length mismatch: {p.shape} vs {q.shape}")
    if mode == "canonical":
        p, q = np.sqrt(p), np.sqrt(q)
    return float(np.sqrt(np.sum((p - q) ** 2)) / _SQRT2)


@dataclass
class DistanceMatrix:
    """Symmetric trustor distances; undefined entries (newcomers) are NaN."""

    values: np.ndarray
    defined: np.ndarray
    mode: str = "literal"

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def off_diagonal(self) -> np.ndarray:
        """Defined distances over unordered pairs ``i < j``."""
        iu = np.triu_indices(self.n, k=1)
        mask = self.defined[iu[0]] & self.defined[iu[1]]
        return self.values[iu][mask]


def _pairwise_exact(P: np.ndarray, counter: OpCounter | None) -> np.ndarray:
    n, d = P.shape
    out = np.empty((n, n))
    block = max(1, int(2e7 // max(n * d, 1)))
    for start in range(0, n, block):
        stop = min(n, start + block)
        diff = P[start:stop, None, :] - P[None, :, :]
        out[start:stop] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if counter is not None:
        counter.pair_bins += n * n * d
    return out


def _pairwise_gram(P: np.ndarray, counter: OpCounter | None) -> np.ndarray:
    # |p|^2 + |q|^2 - 2 p.q on sparse rows; identical rows are pinned to 0
    Ps = sparse.csr_matrix(P)
    sq = np.asarray(Ps.multiply(Ps).sum(axis=1)).ravel()
    gram = (Ps @ Ps.T).toarray()
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * gram, 0.0)
    out = np.sqrt(d2)
    keys = {}
    for i in range(P.shape[0]):
        row = Ps.getrow(i)
        keys.setdefault((row.indices.tobytes(), row.data.tobytes()), []).append(i)
    for members in keys.values():
        if len(members) > 1:
            idx = np.asarray(members)
            out[np.ix_(idx, idx)] = 0.0
    np.fill_diagonal(out, 0.0)
    if counter is not None:
        counter.pair_bins += int(Ps.nnz) * P.shape[0]
    return out


def distance_matrix(
    g: TrustBipartiteGraph,
    mode: str = "literal",
    method: str = "auto",
    counter: OpCounter | None = None,
) -> DistanceMatrix:
    """Pairwise Hellinger distances between all trustors.

    ``method="exact"`` differences every pair of dense rows (``O(n^2 d)``);
    ``"gram"`` uses sparse inner products and is meant for large graphs
    where near-zero distances lose roughly 1e-8 of absolute precision.
    """
    _check_mode(mode)
    P, empty = degree_distributions(g, counter)
    if mode == "canonical":
        P = np.sqrt(P)
    n, d = P.shape
    if method == "auto":
        method = "exact" if n * n * d <= _EXACT_BUDGET else "gram"
    if method == "exact":
        D = _pairwise_exact(P, counter)
    elif method == "gram":
        D = _pairwise_gram(P, counter)
    else:
        raise ValueError(f"unknown method {method!r}")
    D /= _SQRT2
    np.clip(D, 0.0, 1.0, out=D)
    defined = ~empty
    D[empty, :] = np.nan
    D[:, empty] = np.nan
    np.fill_diagonal(D, 0.0)
    return DistanceMatrix(D, defined, mode)


def percentile_threshold(dm: DistanceMatrix, pct: float) -> float:
    """The ``pct``-th percentile (linear interpolation) of off-diagonal distances."""
    if not (0.0 < pct < 100.0):
        raise ValueError("percentile must lie strictly between 0 and 100")
    vals = dm.off_diagonal()
    if vals.size == 0:
        raise ValueError("need at least two trustors with experiences to pick a threshold")
    return float(np.percentile(vals, pct))


@dataclass
class TrustorSocialNetwork:
    """Binary symmetric friendship graph among trustors.

    ``adjacency`` is a CSR matrix with sorted column indices and no
    self-loops; ``friends[i]`` lists the neighbours of ``i`` in ascending order.
    Large builds keep no dense ``distances``; ``edge_distances`` then holds
    the distance of every stored friend pair in CSR order.
    """

    adjacency: sparse.csr_matrix
    threshold: float
    distances: DistanceMatrix | None = None
    edge_distances: np.ndarray | None = None
    friends: list[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        A = sparse.csr_matrix(self.adjacency, dtype=np.int8)
        A.sort_indices()
        self.adjacency = A
        self.friends = [A.indices[A.indptr[i]:A.indptr[i + 1]].copy() for i in range(A.shape[0])]

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.nnz // 2)

    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr).astype(float)

    def dense(self) -> np.ndarray:
        return self.adjacency.toarray()

    @classmethod
    def from_dense(cls, A, threshold: float = float("nan"), distances=None) -> "TrustorSocialNetwork":
        A = np.asarray(A)
        if A.shape[0] != A.shape[1] or not np.array_equal(A, A.T):
            raise ValueError("adjacency must be square and symmetric")
        A = (A != 0).astype(np.int8)
        np.fill_diagonal(A, 0)
        return cls(sparse.csr_matrix(A), threshold, distances)


def adjacency_from_distances(dm: DistanceMatrix, threshold: float) -> sparse.csr_matrix:
    with np.errstate(invalid="ignore"):
        A = dm.values < threshold
    np.fill_diagonal(A, False)
    return sparse.csr_matrix(A.astype(np.int8))


def build_social_network(
    g: TrustBipartiteGraph,
    threshold: float | None = None,
    mode: str = "literal",
    percentile: float = 20.0,
    method: str = "auto",
    counter: OpCounter | None = None,
) -> TrustorSocialNetwork:
    """Link every pair of trustors with Hellinger distance strictly below ``threshold``.

    Without an explicit ``threshold`` the ``percentile``-th percentile of
    off-diagonal distances is used. Trustors with no experiences stay isolated.
    ``method="blocked"`` (chosen automatically above ``_DENSE_LIMIT``
    trustors) streams row blocks instead of holding the ``n x n`` matrix.
    """
    if threshold is not None and not (0.0 < threshold <= 1.0):
        raise ValueError("threshold must lie in (0, 1]")
    if method == "blocked" or (method == "auto" and g.n > _DENSE_LIMIT):
        return _build_blocked(g, threshold, mode, percentile)
    dm = distance_matrix(g, mode=mode, method=method, counter=counter)
    if threshold is None:
        threshold = percentile_threshold(dm, percentile) if dm.off_diagonal().size else 1.0
    if not (0.0 < threshold <= 1.0):
        raise ValueError("threshold must lie in (0, 1]")
    return TrustorSocialNetwork(adjacency_from_distances(dm, threshold), float(threshold), dm)


# -- streaming build for large trustor sets ---------------------------------

_DENSE_LIMIT = 8000
_BLOCK_ROWS = 512
_HIST_BINS = 1 << 20


def _distance_blocks(g: TrustBipartiteGraph, mode: str, block: int | None = None):
    """Yield ``(start, D)`` with ``D`` the distances of rows ``start:start+len(D)``.

    Uses sparse inner products; rows with identical distributions are
    pinned to distance 0, undefined pairs are NaN, and the diagonal is 0.
    """
    P, empty = degree_distributions(g)
    if mode == "canonical":
        P = np.sqrt(P)
    Ps = sparse.csr_matrix(P)
    sq = np.asarray(Ps.multiply(Ps).sum(axis=1)).ravel()
    keys: dict[tuple[bytes, bytes], int] = {}
    group = np.empty(g.n, dtype=np.int64)
    for i in range(g.n):
        a, b = Ps.indptr[i], Ps.indptr[i + 1]
        group[i] = keys.setdefault((Ps.indices[a:b].tobytes(), Ps.data[a:b].tobytes()), len(keys))
    valid = ~empty
    block = block or _BLOCK_ROWS
    PT = Ps.T.tocsc()
    for start in range(0, g.n, block):
        stop = min(g.n, start + block)
        gram = (Ps[start:stop] @ PT).toarray()
        D = np.sqrt(np.maximum(sq[start:stop, None] + sq[None, :] - 2.0 * gram, 0.0)) / _SQRT2
        np.clip(D, 0.0, 1.0, out=D)
        D[group[start:stop, None] == group[None, :]] = 0.0
        D[~valid[start:stop], :] = np.nan
        D[:, ~valid] = np.nan
        D[np.arange(stop - start), np.arange(start, stop)] = 0.0
        yield start, D


def _upper(start: int, D: np.ndarray) -> np.ndarray:
    rows = np.arange(start, start + D.shape[0])[:, None]
    keep = (np.arange(D.shape[1])[None, :] > rows) & ~np.isnan(D)
    return D[keep]


def _streamed_percentile(g: TrustBipartiteGraph, mode: str, pct: float) -> float:
    # histogram pass to bracket the order statistics, then an exact pass inside the brackets
    if not (0.0 < pct < 100.0):
        raise ValueError("percentile must lie strictly between 0 and 100")
    hist = np.zeros(_HIST_BINS, dtype=np.int64)
    for start, D in _distance_blocks(g, mode):
        vals = _upper(start, D)
        hist += np.bincount(np.minimum((vals * _HIST_BINS).astype(np.int64), _HIST_BINS - 1), minlength=_HIST_BINS)
    total = int(hist.sum())
    if total == 0:
        raise ValueError("need at least two trustors with experiences to pick a threshold")
    h = (total - 1) * pct / 100.0
    lo_rank, hi_rank = int(math.floor(h)), int(math.ceil(h))
    cum = np.cumsum(hist)
    lo_bin = int(np.searchsorted(cum, lo_rank, side="right"))
    hi_bin = int(np.searchsorted(cum, hi_rank, side="right"))
    below = int(cum[lo_bin - 1]) if lo_bin > 0 else 0
    picked = []
    for start, D in _distance_blocks(g, mode):
        vals = _upper(start, D)
        b = np.minimum((vals * _HIST_BINS).astype(np.int64), _HIST_BINS - 1)
        picked.append(vals[(b >= lo_bin) & (b <= hi_bin)])
    bracket = np.sort(np.concatenate(picked))
    lo_val = bracket[lo_rank - below]
    hi_val = bracket[hi_rank - below]
    return float(lo_val + (hi_val - lo_val) * (h - lo_rank))


def _build_blocked(g: TrustBipartiteGraph, threshold: float | None, mode: str, percentile: float):
    _check_mode(mode)
    if threshold is None:
        try:
            threshold = _streamed_percentile(g, mode, percentile)
        except ValueError:
            if percentile <= 0 or percentile >= 100:
                raise
            threshold = 1.0
        if not (0.0 < threshold <= 1.0):
            raise ValueError("threshold must lie in (0, 1]")
    rows, cols, dist = [], [], []
    for start, D in _distance_blocks(g, mode):
        with np.errstate(invalid="ignore"):
            hit = D < threshold
        hit[np.arange(D.shape[0]), np.arange(start, start + D.shape[0])] = False
        r, c = np.nonzero(hit)
        rows.append(r + start)
        cols.append(c)
        dist.append(D[r, c])
    r = np.concatenate(rows) if rows else np.zeros(0, np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, np.int64)
    d = np.concatenate(dist) if dist else np.zeros(0)
    order = np.lexsort((c, r))
    indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=g.n))])
    A = sparse.csr_matrix((np.ones(r.size, dtype=np.int8), c[order], indptr), shape=(g.n, g.n))
    return TrustorSocialNetwork(A, float(threshold), None, d[order])


def write_distances_csv(dm: DistanceMatrix, path: str | os.PathLike, header_lines=()) -> None:
    """``i,j,distance`` for every defined unordered pair ``i < j``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "distance"])
        for i in range(dm.n):
            for j in range(i + 1, dm.n):
                if dm.defined[i] and dm.defined[j]:
                    w.writerow([i, j, repr(float(dm.values[i, j]))])


def write_edges_csv(net: TrustorSocialNetwork, path: str | os.PathLike, header_lines=()) -> None:
    """``i,j`` per friendship with ``i < j``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j"])
        for i, fr in enumerate(net.friends):
            for j in fr[fr > i]:
                w.writerow([i, int(j)])
