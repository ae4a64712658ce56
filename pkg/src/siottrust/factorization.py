"""Socially blended logistic matrix factorisation trained by SGD.

For an observed rating ``B[i, j]`` the model predicts
``g(alpha * S_i.R_j + (1 - alpha) * sum_k gamma[i, k] * S_k.R_j)`` where
``k`` runs over the friends of ``i`` and ``g`` is the logistic function.
Both sums can be folded into a mixing matrix ``W = alpha*I + (1-alpha)*gamma``
(identity rows for trustors without friends), so the blended trustor vector
is ``U_i = sum_k W[i, k] S_k`` and the score is ``U_i . R_j``.

Factor matrices follow the column convention ``S`` of shape ``(L, n)`` and
``R`` of shape ``(L, m)``.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
from scipy import sparse
from scipy.special import expit

from .graph import TrustBipartiteGraph
from .pattern import TrustPatternMatrix


class DivergenceError(RuntimeError):
    """Training loss blew past the divergence guard."""


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.4
    latent_dim: int = 4
    lambda_s: float = 0.001
    lambda_r: float = 0.001
    learning_rate: float = 0.05
    epochs: int = 300
    seed: int = 0
    init_scale: float = 0.1
    restarts: int = 1
    divergence_factor: float = 10.0

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1]")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.lambda_s < 0 or self.lambda_r < 0:
            raise ValueError("regularisation weights must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0 or self.restarts < 1:
            raise ValueError("epochs must be >= 0 and restarts >= 1")
        if self.init_scale < 0:
            raise ValueError("init_scale must be non-negative")


@dataclass
class LatentFactors:
    S: np.ndarray
    R: np.ndarray
    config: TrainConfig = field(default_factory=TrainConfig)
    loss_history: list[float] = field(default_factory=list)
    updates_per_epoch: int = 0

    @property
    def latent_dim(self) -> int:
        return self.S.shape[0]

    def predict(self, pattern: TrustPatternMatrix | sparse.spmatrix | None = None, blended: bool = False):
        if blended:
            return predict_blended(self.S, self.R, pattern, self.config.alpha)
        return predict(self.S, self.R)


def logistic(x):
    """``1 / (1 + exp(-x))``, overflow-safe."""
    return expit(x)


def _gamma_matrix(pattern) -> sparse.csr_matrix | None:
    if pattern is None:
        return None
    G = pattern.gamma if isinstance(pattern, TrustPatternMatrix) else pattern
    return sparse.csr_matrix(G)


def mixing_matrix(pattern, alpha: float, n: int) -> sparse.csr_matrix:
    """``W`` with ``U = S @ W.T``; rows without friends are identity rows."""
    G = _gamma_matrix(pattern)
    if G is None or alpha == 1.0:
        return sparse.identity(n, format="csr")
    if G.shape != (n, n):
        raise ValueError(f"trust pattern shape {G.shape} does not match {n} trustors")
    social = np.diff(G.indptr) > 0
    diag = np.where(social, alpha, 1.0)
    off = sparse.diags(np.where(social, 1.0 - alpha, 0.0)) @ G
    W = (sparse.diags(diag) + off).tocsr()
    # zero coefficients (including the diagonal when alpha = 0) must not be visited by SGD
    W.eliminate_zeros()
    W.sort_indices()
    return W


def blended_trustors(S: np.ndarray, W: sparse.csr_matrix) -> np.ndarray:
    return np.asarray((W @ S.T).T)


def blended_score(S, R, pattern, alpha: float, i: int, j: int) -> float:
    """Pre-logistic score of trustor ``i`` for trustee ``j``."""
    S = np.asarray(S, dtype=float)
    R = np.asarray(R, dtype=float)
    if S.shape[0] != R.shape[0]:
        raise ValueError("S and R latent dimensions differ")
    G = _gamma_matrix(pattern)
    own = float(S[:, i] @ R[:, j])
    if G is None or G.indptr[i] == G.indptr[i + 1]:
        return own
    s, e = G.indptr[i], G.indptr[i + 1]
    social = sum(float(w) * float(S[:, k] @ R[:, j]) for k, w in zip(G.indices[s:e], G.data[s:e]))
    return alpha * own + (1.0 - alpha) * social


def _observed(g_or_arrays):
    if isinstance(g_or_arrays, TrustBipartiteGraph):
        return g_or_arrays.to_arrays()
    us, vs, rs = g_or_arrays
    return np.asarray(us, dtype=np.int64), np.asarray(vs, dtype=np.int64), np.asarray(rs, dtype=float)


def _loss_terms(S, R, W, us, vs, rs, lambda_s, lambda_r):
    U = blended_trustors(S, W)
    z = np.einsum("lk,lk->k", U[:, us], R[:, vs])
    p = expit(z)
    err = rs - p
    value = 0.5 * float(err @ err) + 0.5 * lambda_s * float(np.sum(S * S)) + 0.5 * lambda_r * float(np.sum(R * R))
    return value, U, p, err


def loss(data, S, R, pattern, cfg: TrainConfig) -> float:
    """Masked squared error through the logistic plus quadratic penalties."""
    S = np.asarray(S, dtype=float)
    R = np.asarray(R, dtype=float)
    us, vs, rs = _observed(data)
    W = mixing_matrix(pattern, cfg.alpha, S.shape[1])
    return _loss_terms(S, R, W, us, vs, rs, cfg.lambda_s, cfg.lambda_r)[0]


def gradient(data, S, R, pattern, cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """Full-batch analytic gradient of :func:`loss` w.r.t. ``S`` and ``R``."""
    S = np.asarray(S, dtype=float)
    R = np.asarray(R, dtype=float)
    n, m = S.shape[1], R.shape[1]
    us, vs, rs = _observed(data)
    W = mixing_matrix(pattern, cfg.alpha, n)
    _, U, p, err = _loss_terms(S, R, W, us, vs, rs, cfg.lambda_s, cfg.lambda_r)
    delta = -err * p * (1.0 - p)
    D = sparse.csr_matrix((delta, (us, vs)), shape=(n, m))
    grad_R = np.asarray((D.T @ U.T).T) + cfg.lambda_r * R
    grad_U = np.asarray((D @ R.T).T)
    grad_S = np.asarray((W.T @ grad_U.T).T) + cfg.lambda_s * S
    return grad_S, grad_R


@numba.njit(cache=True)
def _sgd_epoch(St, Rt, us, vs, rs, order, w_indptr, w_indices, w_data, lr):
    # St: (n, L), Rt: (m, L), updated in place; returns vector-update count
    L = St.shape[1]
    u = np.empty(L)
    rj = np.empty(L)
    updates = 0
    for t in range(order.shape[0]):
        e = order[t]
        i = us[e]
        j = vs[e]
        for l in range(L):
            u[l] = 0.0
        for p in range(w_indptr[i], w_indptr[i + 1]):
            k = w_indices[p]
            w = w_data[p]
            for l in range(L):
                u[l] += w * St[k, l]
        z = 0.0
        for l in range(L):
            rj[l] = Rt[j, l]
            z += u[l] * rj[l]
        if z >= 0:
            pz = 1.0 / (1.0 + np.exp(-z))
        else:
            ez = np.exp(z)
            pz = ez / (1.0 + ez)
        delta = (pz - rs[e]) * pz * (1.0 - pz)
        for l in range(L):
            Rt[j, l] -= lr * delta * u[l]
        for p in range(w_indptr[i], w_indptr[i + 1]):
            k = w_indices[p]
            w = w_data[p]
            for l in range(L):
                St[k, l] -= lr * delta * w * rj[l]
        updates += 1 + (w_indptr[i + 1] - w_indptr[i])
    return updates


def _train_once(n, m, us, vs, rs, W, cfg: TrainConfig, rng: np.random.Generator) -> LatentFactors:
    L = cfg.latent_dim
    St = rng.normal(0.0, cfg.init_scale, size=(n, L))
    Rt = rng.normal(0.0, cfg.init_scale, size=(m, L))
    indptr = W.indptr.astype(np.int64)
    indices = W.indices.astype(np.int64)
    wdata = W.data.astype(float)

    def current_loss():
        return _loss_terms(St.T, Rt.T, W, us, vs, rs, cfg.lambda_s, cfg.lambda_r)[0]

    history = [current_loss()]
    limit = cfg.divergence_factor * history[0]
    updates = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(us.size).astype(np.int64)
        updates = _sgd_epoch(St, Rt, us, vs, rs, order, indptr, indices, wdata, cfg.learning_rate)
        # the quadratic penalty is a full-batch term: one exact step per epoch
        St *= 1.0 - cfg.learning_rate * cfg.lambda_s
        Rt *= 1.0 - cfg.learning_rate * cfg.lambda_r
        value = current_loss()
        history.append(value)
        if not np.isfinite(value) or (history[0] > 0 and value > limit):
            raise DivergenceError(f"loss {value:.6g} exceeded {cfg.divergence_factor}x the initial {history[0]:.6g}")
    return LatentFactors(np.ascontiguousarray(St.T), np.ascontiguousarray(Rt.T), cfg, history, updates * L)


def sgd_train(data, pattern, cfg: TrainConfig = TrainConfig(), n: int | None = None, m: int | None = None) -> LatentFactors:
    """Fit ``S`` and ``R`` by per-rating SGD with per-epoch shuffling.

    ``data`` is a :class:`TrustBipartiteGraph` or a ``(trustors, trustees,
    ratings)`` triple (then ``n`` and ``m`` are required). Each visit of a
    rating updates ``R_j`` and every trustor vector feeding ``U_i``. With
    ``cfg.restarts > 1`` the run with the lowest final loss is kept.

    Per-rating steps follow the data term only; the quadratic penalty is
    applied as one exact gradient step per epoch, so an epoch sums to the
    full-batch gradient of the objective.
    """
    if isinstance(data, TrustBipartiteGraph):
        n, m = data.n, data.m
    elif n is None or m is None:
        raise ValueError("n and m are required for array input")
    us, vs, rs = _observed(data)
    W = mixing_matrix(pattern, cfg.alpha, n)
    best = None
    for restart in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, restart])
        run = _train_once(n, m, us, vs, rs, W, cfg, rng)
        if best is None or run.loss_history[-1] < best.loss_history[-1]:
            best = run
    return best


_OPEN_LO = np.finfo(float).tiny
_OPEN_HI = np.nextafter(1.0, 0.0)


def _open_unit(p: np.ndarray) -> np.ndarray:
    # float64 logistic saturates to exactly 0 or 1 beyond |x| ~ 37 (resp. 745)
    return np.clip(p, _OPEN_LO, _OPEN_HI)


def predict(S, R) -> np.ndarray:
    """Dense reconstruction ``g(S^T R)``, kept strictly inside (0, 1)."""
    return _open_unit(expit(np.asarray(S, dtype=float).T @ np.asarray(R, dtype=float)))


def predict_blended(S, R, pattern, alpha: float) -> np.ndarray:
    """Reconstruction through the same friend blend used during training."""
    S = np.asarray(S, dtype=float)
    W = mixing_matrix(pattern, alpha, S.shape[1])
    return _open_unit(expit(blended_trustors(S, W).T @ np.asarray(R, dtype=float)))


def predict_entries(S, R, us, vs, pattern=None, alpha: float = 1.0) -> np.ndarray:
    """Prediction at the cells ``(us[k], vs[k])`` only, without an ``n x m`` matrix.

    With a ``pattern`` the friend blend is applied as in :func:`predict_blended`;
    without one this matches :func:`predict`.
    """
    S = np.asarray(S, dtype=float)
    R = np.asarray(R, dtype=float)
    us = np.asarray(us, dtype=np.int64)
    vs = np.asarray(vs, dtype=np.int64)
    T = S if pattern is None else blended_trustors(S, mixing_matrix(pattern, alpha, S.shape[1]))
    return _open_unit(expit(np.einsum("lk,lk->k", T[:, us], R[:, vs])))


def rank_trustees(pred: np.ndarray, i: int) -> np.ndarray:
    """Trustees by descending predicted value; ties keep ascending id order."""
    row = np.asarray(pred)[i]
    return np.argsort(-row, kind="stable")


# -- checkpoints ------------------------------------------------------------

_MAGIC = "siottrust-factors"
_VERSION = 1


def _fmt(x: float) -> str:
    return "%.17g" % x


def save_factors(factors: LatentFactors, path: str | os.PathLike, header_lines=()) -> None:
    L, n = factors.S.shape
    m = factors.R.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([_MAGIC, _VERSION])
        w.writerow(["L", "n", "m", "seed", "config"])
        w.writerow([L, n, m, factors.config.seed, json.dumps(asdict(factors.config), sort_keys=True)])
        w.writerow(["S"])
        for row in factors.S:
            w.writerow([_fmt(x) for x in row])
        w.writerow(["R"])
        for row in factors.R:
            w.writerow([_fmt(x) for x in row])


def load_factors(path: str | os.PathLike) -> LatentFactors:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    if not rows or rows[0][0] != _MAGIC:
        raise ValueError("not a factor checkpoint")
    if int(rows[0][1]) != _VERSION:
        raise ValueError(f"unsupported checkpoint version {rows[0][1]}")
    L, n, m = (int(x) for x in rows[2][:3])
    cfg = TrainConfig(**json.loads(rows[2][4]))
    s0 = 4
    S = np.array([[float(x) for x in r] for r in rows[s0:s0 + L]]).reshape(L, n)
    r0 = s0 + L + 1
    R = np.array([[float(x) for x in r] for r in rows[r0:r0 + L]]).reshape(L, m)
    return LatentFactors(S, R, cfg)
