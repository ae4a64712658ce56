"""Similarity, centrality and the trust-pattern weights over the friend graph."""

from __future__ import annotations

import csv
import enum
import os
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import sparse

from .graph import TrustBipartiteGraph
from .social import DistanceMatrix, TrustorSocialNetwork


class SimilarityKind(str, enum.Enum):
    HELLINGER = "hellinger"
    BAYESIAN = "bayesian"
    CONNECTION = "connection"


class CentralityKind(str, enum.Enum):
    DEGREE = "degree"
    BLC = "blc"
    NONE = "none"


# -- similarities ----------------------------------------------------------


def hellinger_similarity(dm: DistanceMatrix, i: int, j: int) -> float:
    """``1 - distance``; pairs involving a newcomer get similarity 0."""
    d = dm.values[i, j]
    if not (dm.defined[i] and dm.defined[j]) or np.isnan(d):
        return 0.0
    return 1.0 - float(d)


_LEVEL_WEIGHTS = 1.0 - np.arange(5) / 4.0


class BayesianDetail(NamedTuple):
    value: float
    overall: float
    chance: float
    n_corated: int

    @property
    def low_confidence(self) -> bool:
        return self.n_corated == 0


def _grid(r: float) -> int:
    # internal ratings live on k/5; continuous values snap to the nearest grid point
    return int(min(5, max(1, round(r * 5.0))))


def _marginal(row) -> np.ndarray:
    hist = np.zeros(5)
    for _, r in row:
        hist[_grid(r) - 1] += 1.0
    if hist.sum() == 0:
        return np.full(5, 0.2)
    return hist / hist.sum()


def _chance_levels(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    joint = np.outer(p, q)
    levels = np.abs(np.subtract.outer(np.arange(5), np.arange(5)))
    return np.bincount(levels.ravel(), weights=joint.ravel(), minlength=5)


def bayesian_detail(g: TrustBipartiteGraph, i: int, j: int, delta: float = 0.0) -> BayesianDetail:
    """Dirichlet-evidence rating agreement minus chance agreement.

    Co-rated trustees contribute counts of absolute rating distances
    (levels 0..4 on the 1..5 grid) to a uniform Dirichlet prior. Overall
    similarity is the posterior-mean of ``1 - level/4``; chance agreement
    applies the same weights to the level distribution implied by the two
    trustors' independent rating marginals.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    row_i = dict(g.rating_row(i))
    row_j = dict(g.rating_row(j))
    counts = np.zeros(5)
    common = row_i.keys() & row_j.keys()
    for v in common:
        counts[abs(_grid(row_i[v]) - _grid(row_j[v]))] += 1.0
    posterior = (1.0 + counts) / (5.0 + counts.sum())
    overall = float(_LEVEL_WEIGHTS @ posterior)
    chance_levels = _chance_levels(_marginal(row_i.items()), _marginal(row_j.items()))
    chance = float(_LEVEL_WEIGHTS @ chance_levels)
    value = min(1.0, max(overall - chance - delta, 0.0))
    return BayesianDetail(value, overall, chance, len(common))


def bayesian_similarity(g: TrustBipartiteGraph, i: int, j: int, delta: float = 0.0) -> float:
    return bayesian_detail(g, i, j, delta).value


def connection_similarity(net: TrustorSocialNetwork, i: int, j: int) -> float:
    """Share of ``i``'s friends that are also friends of ``j`` (asymmetric)."""
    fi = net.friends[i]
    if fi.size == 0:
        return 0.0
    return np.intersect1d(fi, net.friends[j], assume_unique=True).size / fi.size


# -- centralities -----------------------------------------------------------


def degree_centrality(net: TrustorSocialNetwork, i: int | None = None):
    deg = net.degrees()
    return deg if i is None else float(deg[i])


def betweenness(net: TrustorSocialNetwork) -> np.ndarray:
    """Unnormalised shortest-path betweenness, each unordered pair counted once (Brandes)."""
    n = net.n
    indptr, indices = net.adjacency.indptr, net.adjacency.indices
    bc = np.zeros(n)
    for s in range(n):
        stack = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = np.zeros(n)
        sigma[s] = 1.0
        dist = np.full(n, -1, dtype=np.int64)
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in indices[indptr[v]:indptr[v + 1]]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = np.zeros(n)
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
    return bc / 2.0


def clustering(net: TrustorSocialNetwork) -> np.ndarray:
    """Local clustering coefficient; 0 for nodes of degree below 2."""
    A = net.adjacency.astype(float)
    tri = np.asarray((A @ A).multiply(A).sum(axis=1)).ravel() / 2.0
    k = net.degrees()
    pairs = k * (k - 1) / 2.0
    out = np.zeros(net.n)
    np.divide(tri, pairs, out=out, where=pairs > 0)
    return out


def blc_centralities(net: TrustorSocialNetwork) -> np.ndarray:
    """Betweenness over clustering coefficient for every trustor.

    A zero clustering coefficient is replaced by the smallest positive one
    in the network, or by 1 when the network has none.
    """
    bc = betweenness(net)
    cc = clustering(net)
    positive = cc[cc > 0]
    floor = positive.min() if positive.size else 1.0
    return bc / np.where(cc > 0, cc, floor)


def blc_centrality(net: TrustorSocialNetwork, i: int) -> float:
    return float(blc_centralities(net)[i])


# -- trust pattern ----------------------------------------------------------


@dataclass
class TrustPatternMatrix:
    """Row-wise friend weights; ``gamma`` holds an entry for every friend pair."""

    gamma: sparse.csr_matrix
    beta: float
    similarity: SimilarityKind | None
    centrality: CentralityKind | None
    binary: bool = False

    @property
    def n(self) -> int:
        return self.gamma.shape[0]

    def has_friends(self) -> np.ndarray:
        return np.diff(self.gamma.indptr) > 0

    def row(self, i: int) -> dict[int, float]:
        s, e = self.gamma.indptr[i], self.gamma.indptr[i + 1]
        return dict(zip(self.gamma.indices[s:e].tolist(), self.gamma.data[s:e].tolist()))

    def dense(self) -> np.ndarray:
        return self.gamma.toarray()


def _friend_pairs(net: TrustorSocialNetwork):
    A = net.adjacency
    rows = np.repeat(np.arange(net.n), np.diff(A.indptr))
    return rows, A.indices.astype(np.int64)


def similarity_values(
    net: TrustorSocialNetwork,
    kind: SimilarityKind | str,
    graph: TrustBipartiteGraph | None = None,
    delta: float = 0.0,
) -> np.ndarray:
    """Similarity for each stored friend pair, aligned with the CSR layout of ``net``."""
    kind = SimilarityKind(kind)
    rows, cols = _friend_pairs(net)
    if kind is SimilarityKind.HELLINGER:
        if net.distances is not None:
            vals = 1.0 - net.distances.values[rows, cols]
        elif net.edge_distances is not None:
            vals = 1.0 - net.edge_distances
        else:
            raise ValueError("Hellinger similarity needs the network's distances")
        return np.nan_to_num(vals, nan=0.0)
    if kind is SimilarityKind.CONNECTION:
        A = net.adjacency.astype(float)
        common = (A @ A).tocsr()
        deg = net.degrees()
        shared = np.asarray(common[rows, cols]).ravel()
        return shared / deg[rows]
    if graph is None:
        raise ValueError("Bayesian similarity needs the rating graph")
    cache: dict[tuple[int, int], float] = {}
    out = np.empty(rows.size)
    for k, (i, j) in enumerate(zip(rows.tolist(), cols.tolist())):
        key = (i, j) if i < j else (j, i)
        if key not in cache:
            cache[key] = bayesian_similarity(graph, i, j, delta)
        out[k] = cache[key]
    return out


def centrality_values(net: TrustorSocialNetwork, kind: CentralityKind | str) -> np.ndarray:
    kind = CentralityKind(kind)
    if kind is CentralityKind.DEGREE:
        return net.degrees()
    if kind is CentralityKind.BLC:
        return blc_centralities(net)
    raise ValueError("no centrality values for kind 'none'")


def _row_normalise(values: np.ndarray, indptr: np.ndarray) -> np.ndarray:
    # each friend row sums to 1; an all-zero row falls back to uniform weights
    out = np.empty_like(values)
    for i in range(indptr.size - 1):
        s, e = indptr[i], indptr[i + 1]
        if s == e:
            continue
        seg = values[s:e]
        total = seg.sum()
        out[s:e] = seg / total if total > 0 else 1.0 / (e - s)
    return out


def trust_pattern(
    net: TrustorSocialNetwork,
    similarity: SimilarityKind | str = SimilarityKind.HELLINGER,
    centrality: CentralityKind | str = CentralityKind.NONE,
    beta: float = 1.0,
    graph: TrustBipartiteGraph | None = None,
    delta: float = 0.0,
    *,
    sim_values: np.ndarray | None = None,
    cen_values: np.ndarray | None = None,
) -> TrustPatternMatrix:
    """Blend of normalised friend similarity and normalised friend centrality.

    ``gamma[i, j] = beta * sim(i, j) / sum_k sim(i, k)
    + (1 - beta) * cen(j) / sum_k cen(k)``, sums over friends ``k`` of ``i``.
    Precomputed ``sim_values`` (CSR-aligned) or ``cen_values`` (per trustor)
    skip the corresponding computation.
    """
    if not (0.0 <= beta <= 1.0):
        raise ValueError("beta must lie in [0, 1]")
    similarity = SimilarityKind(similarity)
    centrality = CentralityKind(centrality)
    if centrality is CentralityKind.NONE and beta != 1.0:
        raise ValueError("centrality 'none' requires beta = 1")
    A = net.adjacency
    _, cols = _friend_pairs(net)
    data = np.zeros(cols.size)
    if beta > 0:
        sims = sim_values if sim_values is not None else similarity_values(net, similarity, graph, delta)
        data += beta * _row_normalise(np.asarray(sims, dtype=float), A.indptr)
    if beta < 1:
        cen = cen_values if cen_values is not None else centrality_values(net, centrality)
        data += (1.0 - beta) * _row_normalise(np.asarray(cen, dtype=float)[cols], A.indptr)
    gamma = sparse.csr_matrix((data, cols, A.indptr.copy()), shape=A.shape)
    return TrustPatternMatrix(gamma, float(beta), similarity, centrality)


def binary_trust_pattern(net: TrustorSocialNetwork) -> TrustPatternMatrix:
    """Every friend weighs 1."""
    A = net.adjacency
    gamma = sparse.csr_matrix((np.ones(A.nnz), A.indices.copy(), A.indptr.copy()), shape=A.shape)
    return TrustPatternMatrix(gamma, 1.0, None, None, binary=True)


def write_gamma_csv(tp: TrustPatternMatrix, path: str | os.PathLike, header_lines=()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "gamma"])
        G = tp.gamma
        for i in range(G.shape[0]):
            for k in range(G.indptr[i], G.indptr[i + 1]):
                w.writerow([i, int(G.indices[k]), repr(float(G.data[k]))])
