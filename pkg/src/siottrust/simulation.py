"""Discrete-time hostile SIoT simulation and the cold-start use case.

Trustors meet physical trustee groups at truncated-Pareto inter-contact
gaps, pick a provider epsilon-greedily from their row of the latest
reconstruction, and rate the service. Every retrain period the friend
graph, trust pattern and factors are rebuilt from all ratings so far.

Trustee-side attacks (low service quality, whitewashing, opportunistic
switching) live on trustees; rating attacks (bad-mouthing, ballot
stuffing, self-promotion) are emitted by trustors of malicious groups,
since only trustors produce ratings in the bipartite model.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .evaluation import ModelSettings, build_pattern
from .factorization import TrainConfig, predict_blended, sgd_train
from .graph import EXTERNAL_MAX, EXTERNAL_MIN, TrustBipartiteGraph

NONE = "none"
WHITEWASHING = "whitewashing"
SELF_PROMOTING = "self-promoting"
BAD_MOUTHING = "bad-mouthing"
BALLOT_STUFFING = "ballot-stuffing"
OPPORTUNISTIC = "opportunistic"
ATTACK_KINDS = (WHITEWASHING, SELF_PROMOTING, BAD_MOUTHING, BALLOT_STUFFING, OPPORTUNISTIC)
RATING_ATTACKS = (BAD_MOUTHING, BALLOT_STUFFING, SELF_PROMOTING)

PRIOR_TRUST = 3.0


@dataclass(frozen=True)
class SimConfig:
    n_trustors: int = 100
    n_trustees: int = 70
    trustor_groups: int = 20
    trustee_groups: int = 14
    group_size: int = 5
    horizon: float = 150.0
    retrain_period: float = 24.0
    maliciousness: float = 0.30
    gap_shape: float = 1.5
    gap_min: float = 1.0
    gap_max: float = 24.0
    candidate_groups: int = 3
    rating_noise: float = 0.25
    epsilon_start: float = 0.5
    epsilon_end: float = 0.05
    benign_objective: float = 4.5
    malicious_objective: float = 1.5
    objective_spread: float = 0.25
    opportunistic_pre: float = 4.5
    opportunistic_post: float = 2.5
    switch_time: float | None = None
    whitewash_trigger: float = 2.5
    forgetful_baseline: bool = False
    similarity: str = "hellinger"
    centrality: str = "none"
    beta: float = 1.0
    alpha: float = 0.4
    latent_dim: int = 4
    lambda_s: float = 0.001
    lambda_r: float = 0.001
    learning_rate: float = 0.05
    epochs: int = 300
    threshold_percentile: float = 20.0
    hellinger_mode: str = "literal"
    band: float = 0.90
    seed: int = 0

    def __post_init__(self):
        if self.n_trustors != self.trustor_groups * self.group_size:
            raise ValueError("trustor count must equal trustor_groups * group_size")
        if self.n_trustees != self.trustee_groups * self.group_size:
            raise ValueError("trustee count must equal trustee_groups * group_size")
        if not (0.0 <= self.maliciousness <= 1.0):
            raise ValueError("maliciousness must lie in [0, 1]")
        if self.horizon <= self.retrain_period or self.retrain_period <= 0:
            raise ValueError("need 0 < retrain_period < horizon")
        if not (0 < self.gap_min < self.gap_max) or self.gap_shape <= 0:
            raise ValueError("invalid inter-contact gap distribution")
        if not (1 <= self.candidate_groups <= self.trustee_groups):
            raise ValueError("candidate_groups must lie in [1, trustee_groups]")

    @property
    def switch_hour(self) -> float:
        return self.horizon / 2.0 if self.switch_time is None else self.switch_time

    def model_settings(self) -> ModelSettings:
        return ModelSettings(beta=self.beta, alpha=self.alpha, latent_dim=self.latent_dim,
                             similarity=self.similarity, centrality=self.centrality,
                             mode=self.hellinger_mode, percentile=self.threshold_percentile)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(alpha=self.alpha, latent_dim=self.latent_dim, lambda_s=self.lambda_s,
                           lambda_r=self.lambda_r, learning_rate=self.learning_rate,
                           epochs=self.epochs, seed=seed)


@dataclass
class NodeProfile:
    role: str
    group: int
    attack: str = NONE
    objective: float = 4.5
    objective_after: float | None = None
    switch_time: float | None = None
    accomplices: tuple[int, ...] = ()
    rejoins: int = 0

    @property
    def malicious(self) -> bool:
        return self.attack != NONE

    def objective_at(self, t: float) -> float:
        if self.objective_after is not None and t >= self.switch_time:
            return self.objective_after
        return self.objective


@dataclass
class SimWorld:
    config: SimConfig
    trustors: list[NodeProfile]
    trustees: list[NodeProfile]
    graph: TrustBipartiteGraph
    tracked: dict[str, int]
    clock: float = 0.0

    def trustee_group_members(self, group: int) -> list[int]:
        return [j for j, p in enumerate(self.trustees) if p.group == group]

    def benign_trustors(self) -> np.ndarray:
        return np.array([i for i, p in enumerate(self.trustors) if not p.malicious], dtype=np.int64)


def _balanced_kinds(rng, count: int, kinds) -> list[str]:
    # each kind appears floor(count/k) or +1 times, in random order
    out = [kinds[i % len(kinds)] for i in range(count)]
    rng.shuffle(out)
    return out


def _objective(rng, mean: float, spread: float, lo: float, hi: float) -> float:
    return float(np.clip(rng.normal(mean, spread), lo, hi))


def build_world(cfg: SimConfig) -> SimWorld:
    """Population with ``ceil(lambda * m)`` malicious trustees and ``ceil(lambda * n)`` malicious trustors.

    Malicious trustors fill whole physical groups first, since a group
    shares its owner's behaviour. Three trustees are tracked: a benign one
    at exactly the benign objective, a fixed-malicious one at exactly the
    malicious objective, and an opportunistic one.
    """
    rng = np.random.default_rng([cfg.seed, 1])
    m, n, gs = cfg.n_trustees, cfg.n_trustors, cfg.group_size
    n_bad = math.ceil(round(cfg.maliciousness * m, 9))
    bad_ids = set(rng.choice(m, size=n_bad, replace=False).tolist()) if n_bad else set()
    kinds = iter(_balanced_kinds(rng, n_bad, ATTACK_KINDS))
    trustees: list[NodeProfile] = []
    for j in range(m):
        group = j // gs
        if j in bad_ids:
            kind = next(kinds)
            if kind == OPPORTUNISTIC:
                p = NodeProfile("trustee", group, kind, cfg.opportunistic_pre, cfg.opportunistic_post, cfg.switch_hour)
            else:
                p = NodeProfile("trustee", group, kind,
                                _objective(rng, cfg.malicious_objective, cfg.objective_spread, 1.0, 2.5))
        else:
            p = NodeProfile("trustee", group, NONE,
                            _objective(rng, cfg.benign_objective, cfg.objective_spread, 3.5, 5.0))
        trustees.append(p)

    n_bad_trustors = math.ceil(round(cfg.maliciousness * n, 9))
    order = rng.permutation(cfg.trustor_groups)
    bad_groups = order[: math.ceil(n_bad_trustors / gs)]
    group_kinds = dict(zip(bad_groups.tolist(), _balanced_kinds(rng, bad_groups.size, RATING_ATTACKS)))
    victims = {k: tuple(j for j, p in enumerate(trustees) if p.attack == k) for k in RATING_ATTACKS}
    any_bad = tuple(j for j, p in enumerate(trustees) if p.malicious)
    trustors: list[NodeProfile] = []
    remaining = n_bad_trustors
    for i in range(n):
        group = i // gs
        kind = group_kinds.get(group)
        if kind is not None and remaining > 0:
            remaining -= 1
            accomplices = victims[kind] or any_bad if kind != BAD_MOUTHING else ()
            trustors.append(NodeProfile("trustor", group, kind, accomplices=accomplices))
        else:
            trustors.append(NodeProfile("trustor", group))

    tracked: dict[str, int] = {}
    benign = [j for j, p in enumerate(trustees) if not p.malicious]
    if benign:
        tracked["benign"] = benign[0]
        trustees[benign[0]].objective = cfg.benign_objective
    for kind in (BAD_MOUTHING, WHITEWASHING, SELF_PROMOTING, BALLOT_STUFFING):
        cands = [j for j, p in enumerate(trustees) if p.attack == kind]
        if cands:
            tracked["malicious"] = cands[0]
            trustees[cands[0]].objective = cfg.malicious_objective
            break
    opp = [j for j, p in enumerate(trustees) if p.attack == OPPORTUNISTIC]
    if opp:
        tracked["opportunistic"] = opp[0]
    return SimWorld(cfg, trustors, trustees, TrustBipartiteGraph(n, m), tracked)


# -- interaction schedule ---------------------------------------------------


def truncated_pareto_mean(shape: float, lo: float, hi: float) -> float:
    ratio = lo / hi
    if math.isclose(shape, 1.0):
        return lo * math.log(hi / lo) / (1.0 - ratio)
    return shape / (shape - 1.0) * lo * (1.0 - ratio ** (shape - 1.0)) / (1.0 - ratio ** shape)


def sample_gaps(rng, size, shape: float, lo: float, hi: float) -> np.ndarray:
    """Inverse-CDF draws from a Pareto(shape, lo) truncated to ``[lo, hi]``."""
    u = rng.random(size)
    mass = 1.0 - (lo / hi) ** shape
    return lo * (1.0 - u * mass) ** (-1.0 / shape)


@dataclass(frozen=True)
class Event:
    time: float
    trustor: int
    candidates: tuple[int, ...]


def schedule_interactions(world: SimWorld, cfg: SimConfig | None = None) -> list[Event]:
    """Time-ordered contact events; each brings a few trustee groups in range."""
    cfg = cfg or world.config
    rng = np.random.default_rng([cfg.seed, 2])
    events = []
    members = [world.trustee_group_members(gi) for gi in range(cfg.trustee_groups)]
    for i in range(cfg.n_trustors):
        t = 0.0
        while True:
            t += float(sample_gaps(rng, 1, cfg.gap_shape, cfg.gap_min, cfg.gap_max)[0])
            if t > cfg.horizon:
                break
            groups = rng.choice(cfg.trustee_groups, size=cfg.candidate_groups, replace=False)
            cands = tuple(sorted(j for gi in groups for j in members[gi]))
            events.append(Event(t, i, cands))
    events.sort(key=lambda e: (e.time, e.trustor))
    return events


# -- ratings ----------------------------------------------------------------


def rate_experience(world: SimWorld, trustor: int, trustee: int, time: float, rng=None) -> float:
    """Internal-scale rating a trustor reports after using a trustee."""
    cfg = world.config
    rater = world.trustors[trustor]
    target = world.trustees[trustee]
    if rater.attack == BAD_MOUTHING and not target.malicious:
        value = EXTERNAL_MIN
    elif rater.attack in (BALLOT_STUFFING, SELF_PROMOTING) and trustee in rater.accomplices:
        value = EXTERNAL_MAX
    else:
        noise = rng.normal(0.0, cfg.rating_noise) if (rng is not None and cfg.rating_noise > 0) else 0.0
        value = float(np.clip(target.objective_at(time) + noise, EXTERNAL_MIN, EXTERNAL_MAX))
    return value / EXTERNAL_MAX


def whitewash(world: SimWorld, trustee: int, time: float) -> SimWorld:
    """Trustee leaves and rejoins under its persistent identifier.

    Its experience history survives unless the world runs the forgetful
    baseline, which wipes every rating about it.
    """
    node = world.trustees[trustee]
    if node.attack != WHITEWASHING:
        raise ValueError(f"trustee {trustee} does not whitewash")
    node.rejoins += 1
    if world.config.forgetful_baseline:
        world.graph.remove_trustee_edges(trustee)
    return world


# -- model refresh ----------------------------------------------------------


def retrain(graph: TrustBipartiteGraph, cfg: SimConfig, round_index: int) -> np.ndarray:
    """External-scale trust estimates (n x m); unrated trustees sit at the prior."""
    pred = np.full((graph.n, graph.m), PRIOR_TRUST)
    if graph.n_edges == 0:
        return pred
    _, tp = build_pattern(graph, cfg.model_settings())
    factors = sgd_train(graph, tp, cfg.train_config(seed=cfg.seed * 1000 + round_index))
    est = np.clip(predict_blended(factors.S, factors.R, tp, cfg.alpha) * EXTERNAL_MAX, EXTERNAL_MIN, EXTERNAL_MAX)
    rated = graph.trustee_degrees() > 0
    pred[:, rated] = est[:, rated]
    return pred


@dataclass
class Snapshot:
    hour: float
    trustee: int
    mean: float
    lo: float
    hi: float
    objective: float


@dataclass
class Selection:
    time: float
    trustor: int
    trustee: int
    rating: float


@dataclass
class TrajectoryLog:
    snapshots: list[Snapshot] = field(default_factory=list)
    selections: list[Selection] = field(default_factory=list)
    tracked: dict[str, int] = field(default_factory=dict)
    final_estimates: np.ndarray | None = None
    rejoins: dict[int, int] = field(default_factory=dict)

    def hours(self) -> list[float]:
        return sorted({s.hour for s in self.snapshots})

    def series(self, trustee: int) -> tuple[np.ndarray, np.ndarray]:
        rows = [(s.hour, s.mean) for s in self.snapshots if s.trustee == trustee]
        h, v = zip(*rows)
        return np.array(h), np.array(v)

    def final_means(self) -> np.ndarray:
        last = max(s.hour for s in self.snapshots)
        out = {s.trustee: s.mean for s in self.snapshots if s.hour == last}
        return np.array([out[j] for j in sorted(out)])


def _snapshot(log: TrajectoryLog, world: SimWorld, pred: np.ndarray, hour: float):
    rows = world.benign_trustors()
    block = pred[rows]
    q = (1.0 - world.config.band) / 2.0
    lo = np.quantile(block, q, axis=0)
    hi = np.quantile(block, 1.0 - q, axis=0)
    mean = block.mean(axis=0)
    for j, node in enumerate(world.trustees):
        log.snapshots.append(Snapshot(hour, j, float(mean[j]), float(lo[j]), float(hi[j]), node.objective_at(hour)))


def _epsilon(cfg: SimConfig, t: float) -> float:
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * min(t / cfg.horizon, 1.0)


def choose(pred_row: np.ndarray, candidates, eps: float, rng, fresh: bool) -> int:
    """Epsilon-greedy pick; uniform while no model exists yet."""
    cands = np.asarray(candidates)
    if fresh or rng.random() < eps:
        return int(cands[rng.integers(cands.size)])
    vals = pred_row[cands]
    return int(cands[np.argsort(-vals, kind="stable")[0]])


def run_simulation(world: SimWorld, cfg: SimConfig | None = None) -> TrajectoryLog:
    cfg = cfg or world.config
    rng = np.random.default_rng([cfg.seed, 3])
    events = schedule_interactions(world, cfg)
    log = TrajectoryLog(tracked=dict(world.tracked))
    pred = np.full((cfg.n_trustors, cfg.n_trustees), PRIOR_TRUST)
    fresh = True
    _snapshot(log, world, pred, 0.0)
    marks = list(np.arange(cfg.retrain_period, cfg.horizon, cfg.retrain_period)) + [cfg.horizon]
    k = 0
    for round_index, mark in enumerate(marks, start=1):
        while k < len(events) and events[k].time <= mark:
            ev = events[k]
            k += 1
            rater = world.trustors[ev.trustor]
            if rater.malicious:
                j = int(ev.candidates[rng.integers(len(ev.candidates))])
            else:
                j = choose(pred[ev.trustor], ev.candidates, _epsilon(cfg, ev.time), rng, fresh)
            r = rate_experience(world, ev.trustor, j, ev.time, rng)
            world.graph.add_experience(ev.trustor, j, r)
            log.selections.append(Selection(ev.time, ev.trustor, j, r * EXTERNAL_MAX))
        world.clock = float(mark)
        pred = retrain(world.graph, cfg, round_index)
        fresh = False
        _snapshot(log, world, pred, float(mark))
        if mark < cfg.horizon:
            benign_mean = pred[world.benign_trustors()].mean(axis=0)
            for j, node in enumerate(world.trustees):
                if node.attack == WHITEWASHING and benign_mean[j] < cfg.whitewash_trigger:
                    whitewash(world, j, world.clock)
                    if cfg.forgetful_baseline:
                        pred[:, j] = PRIOR_TRUST
    log.final_estimates = pred
    log.rejoins = {j: p.rejoins for j, p in enumerate(world.trustees) if p.attack == WHITEWASHING}
    return log


def simulate(cfg: SimConfig) -> TrajectoryLog:
    return run_simulation(build_world(cfg), cfg)


TRAJECTORY_COLUMNS = ("epoch_hour", "trustee_id", "mean_pred", "band_lo", "band_hi", "objective")
SELECTION_COLUMNS = ("time", "trustor", "trustee", "rating")


def _f(x: float) -> str:
    return repr(float(x))


def write_trajectory_csv(log: TrajectoryLog, path: str | os.PathLike, header_lines=()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for s in log.snapshots:
            w.writerow([_f(s.hour), s.trustee, _f(s.mean), _f(s.lo), _f(s.hi), _f(s.objective)])


def write_selections_csv(selections, path: str | os.PathLike, header_lines=()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SELECTION_COLUMNS)
        for s in selections:
            w.writerow([_f(s.time), s.trustor, s.trustee, _f(s.rating)])


# -- cold-start use case ----------------------------------------------------


@dataclass(frozen=True)
class UseCaseConfig:
    group_values: tuple[float, ...] = (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0)
    group_size: int = 5
    singleton_value: float = 5.0
    stuffed_value: float = 2.0
    honest_trustors: int = 40
    stuffing_trustors: int = 10
    history: int = 12
    stuffer_focus: float = 0.5
    selections: int = 20
    rating_noise: float = 0.25
    epsilon_start: float = 0.5
    epsilon_end: float = 0.05
    sim: SimConfig = SimConfig()
    seed: int = 0


@dataclass
class UseCaseResult:
    group_of: np.ndarray
    group_values: tuple[float, ...]
    trust_picks: list[int]
    random_picks: list[int]

    def _hist(self, picks) -> np.ndarray:
        return np.bincount(self.group_of[np.asarray(picks, dtype=np.int64)], minlength=len(self.group_values))

    def trust_histogram(self) -> np.ndarray:
        return self._hist(self.trust_picks)

    def random_histogram(self) -> np.ndarray:
        return self._hist(self.random_picks)

    def picked_values(self, picks) -> np.ndarray:
        return np.asarray(self.group_values)[self.group_of[np.asarray(picks, dtype=np.int64)]]

    def first_use_order(self, picks) -> list[int | None]:
        """1-based step at which each group was first used, or None."""
        first: dict[int, int] = {}
        for step, j in enumerate(picks, start=1):
            first.setdefault(int(self.group_of[j]), step)
        return [first.get(gi) for gi in range(len(self.group_values))]


def run_usecase(cfg: UseCaseConfig = UseCaseConfig()) -> UseCaseResult:
    """A newcomer trustor picks providers among value-graded groups, one of them ballot-stuffed.

    Background trustors carry ``history`` past experiences each; the
    stuffing trustors spend a ``stuffer_focus`` share of theirs rating the
    stuffed group at 5. After every pick the newcomer's model is rebuilt.
    A random chooser runs alongside on its own stream.
    """
    rng = np.random.default_rng([cfg.seed, 11])
    sizes = [1 if v == cfg.singleton_value else cfg.group_size for v in cfg.group_values]
    group_of = np.repeat(np.arange(len(sizes)), sizes)
    rng.shuffle(group_of)
    values = np.asarray(cfg.group_values)[group_of]
    m = group_of.size
    stuffed_group = list(cfg.group_values).index(cfg.stuffed_value)
    stuffed = np.flatnonzero(group_of == stuffed_group)

    n_bg = cfg.honest_trustors + cfg.stuffing_trustors
    g = TrustBipartiteGraph(n_bg, m)
    for i in range(n_bg):
        stuffer = i >= cfg.honest_trustors
        for j in rng.choice(m, size=min(cfg.history, m), replace=False).tolist():
            if stuffer and rng.random() < cfg.stuffer_focus:
                j = int(stuffed[rng.integers(stuffed.size)])
            if stuffer and group_of[j] == stuffed_group:
                g.add_experience(i, j, 1.0)
            else:
                ext = float(np.clip(values[j] + rng.normal(0.0, cfg.rating_noise), EXTERNAL_MIN, EXTERNAL_MAX))
                g.add_experience(i, j, ext / EXTERNAL_MAX)
    focal = g.add_trustor()

    sim = replace(cfg.sim, seed=cfg.seed)
    picks: list[int] = []
    all_trustees = np.arange(m)
    for step in range(cfg.selections):
        frac = step / max(cfg.selections - 1, 1)
        eps = cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac
        fresh = not g.rating_row(focal)
        row = np.full(m, PRIOR_TRUST) if fresh else retrain(g, sim, step)[focal]
        j = choose(row, all_trustees, eps, rng, fresh)
        ext = float(np.clip(values[j] + rng.normal(0.0, cfg.rating_noise), EXTERNAL_MIN, EXTERNAL_MAX))
        g.add_experience(focal, j, ext / EXTERNAL_MAX)
        picks.append(j)

    # the baseline draws a group uniformly, then a member, so group usage is flat in expectation
    rand_rng = np.random.default_rng([cfg.seed, 12])
    members = [np.flatnonzero(group_of == gi) for gi in range(len(sizes))]
    random_picks = []
    for _ in range(cfg.selections):
        pool = members[rand_rng.integers(len(members))]
        random_picks.append(int(pool[rand_rng.integers(pool.size)]))
    return UseCaseResult(group_of, tuple(cfg.group_values), picks, random_picks)


def write_usecase_csv(result: UseCaseResult, path: str | os.PathLike, header_lines=()) -> None:
    """Per-group usage counts and first-use order for both choosers."""
    t_hist, r_hist = result.trust_histogram(), result.random_histogram()
    t_ord, r_ord = result.first_use_order(result.trust_picks), result.first_use_order(result.random_picks)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group_value", "system", "count", "first_use"])
        for gi, v in enumerate(result.group_values):
            w.writerow([_f(v), "trust", int(t_hist[gi]), "" if t_ord[gi] is None else t_ord[gi]])
        for gi, v in enumerate(result.group_values):
            w.writerow([_f(v), "random", int(r_hist[gi]), "" if r_ord[gi] is None else r_ord[gi]])


def write_usecase_picks_csv(result: UseCaseResult, path: str | os.PathLike, header_lines=()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "system", "trustee", "group_value"])
        for name, picks in (("trust", result.trust_picks), ("random", result.random_picks)):
            for step, (j, v) in enumerate(zip(picks, result.picked_values(picks)), start=1):
                w.writerow([step, name, int(j), _f(v)])
