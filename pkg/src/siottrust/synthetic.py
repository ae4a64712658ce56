"""Synthetic rating generators with known ground truth.

``planted_logistic`` draws ratings from the blended logistic model itself
(the observation mask fixes the friend graph before any value is drawn,
because Hellinger friendship depends only on who rated what).
``friend_correlated`` builds trustor communities whose members share
latent taste and a distinctive rating footprint, plus a few "hub"
trustors that rate broadly but have unrelated taste.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .factorization import blended_trustors, logistic, mixing_matrix
from .graph import TrustBipartiteGraph
from .pattern import trust_pattern
from .social import build_social_network


@dataclass
class PlantedData:
    train: TrustBipartiteGraph
    test: tuple[np.ndarray, np.ndarray, np.ndarray]
    truth: np.ndarray
    S: np.ndarray
    R: np.ndarray
    community: np.ndarray | None = None


def _split_mask(rng, us, vs, rs, test_fraction):
    perm = rng.permutation(us.size)
    n_test = int(round(test_fraction * us.size))
    te, tr = perm[:n_test], perm[n_test:]
    return (us[tr], vs[tr], rs[tr]), (us[te], vs[te], rs[te])


def planted_logistic(
    n: int = 50,
    m: int = 40,
    rank: int = 4,
    observed: float = 0.6,
    alpha: float = 1.0,
    threshold_percentile: float = 20.0,
    scale: float = 1.0,
    seed: int = 0,
) -> PlantedData:
    """Noiseless rank-``rank`` logistic ratings; unobserved cells form the test set.

    With ``alpha < 1`` the trustor factors are mixed through the
    Hellinger/beta=1 trust pattern of the observation mask, so the data
    lie exactly in the blended model class.
    """
    rng = np.random.default_rng(seed)
    mask = rng.random((n, m)) < observed
    us, vs = np.nonzero(mask)
    S = rng.normal(0.0, scale, size=(rank, n))
    R = rng.normal(0.0, scale, size=(rank, m))
    if alpha < 1.0:
        skeleton = TrustBipartiteGraph.from_arrays(n, m, us, vs, np.ones(us.size))
        net = build_social_network(skeleton, percentile=threshold_percentile)
        U = blended_trustors(S, mixing_matrix(trust_pattern(net), alpha, n))
    else:
        U = S
    truth = logistic(U.T @ R)
    train = TrustBipartiteGraph.from_arrays(n, m, us, vs, truth[us, vs])
    tu, tv = np.nonzero(~mask)
    return PlantedData(train, (tu, tv, truth[tu, tv]), truth, S, R)


def friend_correlated(
    community_sizes: tuple[int, ...] = (6, 9, 13, 18, 24),
    n_hubs: int = 4,
    cluster_size: int = 12,
    rank: int = 4,
    taste_spread: float = 0.25,
    in_cluster: float = 0.7,
    out_cluster: float = 0.02,
    hub_rate: float = 0.3,
    noise: float = 0.02,
    test_fraction: float = 0.25,
    seed: int = 0,
) -> PlantedData:
    """Community-structured ratings where friends share latent taste.

    Community ``c`` rates trustee cluster ``c`` with probability
    ``in_cluster``; differing community sizes give each cluster a distinct
    degree, so members share a neighbour-degree footprint and land close
    in Hellinger distance.
    Hubs rate every cluster at ``hub_rate`` with independent taste.
    """
    rng = np.random.default_rng(seed)
    C = len(community_sizes)
    n = sum(community_sizes) + n_hubs
    m = C * cluster_size
    community = np.concatenate([np.repeat(np.arange(C), community_sizes), np.full(n_hubs, -1)]).astype(int)
    cluster = np.repeat(np.arange(C), cluster_size)
    centres = rng.normal(0.0, 1.0, size=(rank, C))
    S = np.empty((rank, n))
    for i in range(n):
        c = community[i]
        S[:, i] = rng.normal(0.0, 1.0, rank) if c < 0 else centres[:, c] + rng.normal(0.0, taste_spread, rank)
    R = rng.normal(0.0, 1.0, size=(rank, m))
    prob = np.empty((n, m))
    for i in range(n):
        c = community[i]
        prob[i] = hub_rate if c < 0 else np.where(cluster == c, in_cluster, out_cluster)
    mask = rng.random((n, m)) < prob
    truth = logistic(S.T @ R)
    us, vs = np.nonzero(mask)
    # keep values representable on the external 1..5 scale
    rs = np.clip(truth[us, vs] + rng.normal(0.0, noise, us.size), 0.2, 1.0)
    (tru, trv, trr), test = _split_mask(rng, us, vs, rs, test_fraction)
    order = np.lexsort((trv, tru))
    train = TrustBipartiteGraph.from_arrays(n, m, tru[order], trv[order], trr[order])
    return PlantedData(train, test, truth, S, R, community)
