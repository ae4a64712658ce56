"""Hold-out splitting, accuracy metrics and parameter sweeps."""

from __future__ import annotations

import csv
import itertools
import math
import os
from dataclasses import asdict, dataclass, replace

import numpy as np

from .factorization import TrainConfig, predict_entries, sgd_train
from .graph import EXTERNAL_MAX, TrustBipartiteGraph
from .pattern import CentralityKind, SimilarityKind, binary_trust_pattern, trust_pattern
from .social import build_social_network

RMSE_MAX_EXTERNAL = 4.0


class UndefinedMetricError(ValueError):
    """Metric requested over an empty test set."""


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError("train_fraction must lie in (0, 1)")


@dataclass
class TestSet:
    """Held-out ratings as parallel index/value arrays."""

    __test__ = False  # not a pytest class

    trustors: np.ndarray
    trustees: np.ndarray
    ratings: np.ndarray

    def __len__(self) -> int:
        return int(self.ratings.size)


def split(g: TrustBipartiteGraph, spec: SplitSpec = SplitSpec()) -> tuple[TrustBipartiteGraph, TestSet]:
    """Uniform rating-level hold-out; the train graph keeps all trustors and trustees."""
    if g.n_edges == 0:
        raise ValueError("cannot split an empty graph")
    us, vs, rs = g.to_arrays()
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(us.size)
    n_train = int(round(spec.train_fraction * us.size))
    tr = np.sort(perm[:n_train])
    te = np.sort(perm[n_train:])
    train = TrustBipartiteGraph(g.n, g.m, trustor_ids=g.trustor_ids, trustee_ids=g.trustee_ids)
    for u, v, r in zip(us[tr].tolist(), vs[tr].tolist(), rs[tr].tolist()):
        train.add_experience(u, v, r)
    return train, TestSet(us[te], vs[te], rs[te])


def rmse(predicted, actual) -> float:
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if actual.size == 0:
        raise UndefinedMetricError("RMSE of an empty test set")
    return float(np.sqrt(np.mean((predicted - actual) ** 2)))


def mae(predicted, actual) -> float:
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if actual.size == 0:
        raise UndefinedMetricError("MAE of an empty test set")
    return float(np.mean(np.abs(predicted - actual)))


def coverage(n_predicted: int, n_total: int) -> float:
    if n_total <= 0:
        raise UndefinedMetricError("coverage of an empty test set")
    return n_predicted / n_total


def precision(rmse_value: float, rmse_max: float = RMSE_MAX_EXTERNAL) -> float:
    if rmse_max <= 0:
        raise ValueError("rmse_max must be positive")
    return min(1.0, max(0.0, 1.0 - rmse_value / rmse_max))


def f_measure(p: float, c: float) -> float:
    return 2.0 * p * c / (p + c) if p + c > 0 else 0.0


@dataclass
class MetricReport:
    rmse: float
    mae: float
    coverage: float
    precision: float
    f_measure: float
    n: int
    rmse_max: float

    @classmethod
    def from_predictions(cls, predicted, actual, n_abstained: int = 0, rmse_max: float = RMSE_MAX_EXTERNAL):
        predicted = np.asarray(predicted, dtype=float)
        actual = np.asarray(actual, dtype=float)
        r = rmse(predicted, actual)
        c = coverage(actual.size, actual.size + n_abstained)
        p = precision(r, rmse_max)
        return cls(r, mae(predicted, actual), c, p, f_measure(p, c), int(actual.size), rmse_max)


def evaluate_predictions(pred: np.ndarray, test: TestSet, external: bool = True) -> MetricReport:
    """Score a dense prediction matrix on the held-out ratings.

    Every test cell gets a value from a dense reconstruction, so nothing is
    abstained from. On the external scale ``rmse_max`` is 4.
    """
    return evaluate_entries(np.asarray(pred)[test.trustors, test.trustees], test, external)


def evaluate_entries(p: np.ndarray, test: TestSet, external: bool = True) -> MetricReport:
    """Score predictions already aligned with the test cells."""
    p = np.asarray(p, dtype=float)
    a = test.ratings
    if external:
        p = np.clip(p * EXTERNAL_MAX, 1.0, EXTERNAL_MAX)
        a = a * EXTERNAL_MAX
        return MetricReport.from_predictions(p, a, rmse_max=RMSE_MAX_EXTERNAL)
    return MetricReport.from_predictions(p, a, rmse_max=0.8)


@dataclass(frozen=True)
class ModelSettings:
    """One point of the model grid; ``similarity='binary'`` selects the binary pattern."""

    beta: float = 1.0
    alpha: float = 0.4
    latent_dim: int = 4
    similarity: str = "hellinger"
    centrality: str = "none"
    split: float = 0.75
    mode: str = "literal"
    threshold: float | None = None
    percentile: float = 20.0
    bayesian_delta: float = 0.0
    blended_prediction: bool = True


def build_pattern(train: TrustBipartiteGraph, s: ModelSettings, net=None):
    if net is None:
        net = build_social_network(train, threshold=s.threshold, mode=s.mode, percentile=s.percentile)
    if s.similarity == "binary":
        return net, binary_trust_pattern(net)
    cen = s.centrality
    if s.beta == 1.0:
        cen = CentralityKind.NONE
    elif cen == "none":
        raise ValueError("beta < 1 needs a centrality kind")
    return net, trust_pattern(net, SimilarityKind(s.similarity), CentralityKind(cen), s.beta,
                              graph=train, delta=s.bayesian_delta)


def run_point(g: TrustBipartiteGraph, s: ModelSettings, train_cfg: TrainConfig, split_seed: int = 0,
              external: bool = True) -> MetricReport:
    train, test = split(g, SplitSpec(s.split, split_seed))
    _, tp = build_pattern(train, s)
    cfg = replace(train_cfg, alpha=s.alpha, latent_dim=s.latent_dim)
    factors = sgd_train(train, tp, cfg)
    return score_test(factors, tp, cfg.alpha, test, s.blended_prediction, external)


def score_test(factors, pattern, alpha: float, test: TestSet, blended: bool = True,
               external: bool = True) -> MetricReport:
    """Predict only the held-out cells and score them."""
    p = predict_entries(factors.S, factors.R, test.trustors, test.trustees,
                        pattern if blended else None, alpha)
    return evaluate_entries(p, test, external)


SWEEP_COLUMNS = ("beta", "alpha", "L", "sim", "cen", "split", "rmse", "mae", "coverage", "precision", "f")


def sweep(
    g: TrustBipartiteGraph,
    grid: dict,
    base: ModelSettings = ModelSettings(),
    train_cfg: TrainConfig = TrainConfig(),
    split_seed: int = 0,
    external: bool = True,
) -> list[tuple[ModelSettings, MetricReport]]:
    """Evaluate the Cartesian product of ``grid`` values over ``base``.

    ``grid`` maps ModelSettings field names (``beta``, ``alpha``,
    ``latent_dim``, ``similarity``, ``centrality``, ``split``) to value lists.
    All points share ``split_seed``.
    """
    keys = list(grid)
    unknown = set(keys) - set(asdict(base))
    if unknown:
        raise ValueError(f"unknown sweep keys: {sorted(unknown)}")
    rows = []
    for values in itertools.product(*(grid[k] for k in keys)):
        point = replace(base, **dict(zip(keys, values)))
        rows.append((point, run_point(g, point, train_cfg, split_seed, external)))
    return rows


def _num(x: float) -> str:
    return repr(float(x)) if math.isfinite(x) else str(x)


def sweep_rows(results):
    for s, r in results:
        yield [_num(s.beta), _num(s.alpha), s.latent_dim, s.similarity, s.centrality, _num(s.split),
               _num(r.rmse), _num(r.mae), _num(r.coverage), _num(r.precision), _num(r.f_measure)]


def write_sweep_csv(results, path: str | os.PathLike, header_lines=()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        w.writerows(sweep_rows(results))
