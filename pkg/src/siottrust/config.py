"""Flat ``key=value`` experiment configuration and run manifests."""

from __future__ import annotations

import hashlib
import os
import types
import typing
from dataclasses import asdict, dataclass, fields, replace

import numba
import numpy as np
import scipy

from . import __version__
from .evaluation import ModelSettings, SplitSpec
from .factorization import TrainConfig
from .simulation import SimConfig, UseCaseConfig

ENV_VAR = "SIOTTRUST_CONFIG"


class ConfigError(ValueError):
    """Malformed or unknown configuration entry."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Every tunable of every pipeline, defaulting to the best setting.

    Sweep grids are comma-separated lists; an empty grid leaves that
    parameter at its scalar value.
    """

    # factorisation
    alpha: float = 0.4
    latent_dim: int = 4
    lambda_s: float = 0.001
    lambda_r: float = 0.001
    learning_rate: float = 0.05
    epochs: int = 300
    init_scale: float = 0.1
    restarts: int = 1
    seed: int = 0
    # friend graph and trust pattern
    hellinger_mode: str = "literal"
    threshold: float | None = None
    percentile: float = 20.0
    similarity: str = "hellinger"
    centrality: str = "none"
    beta: float = 1.0
    bayesian_delta: float = 0.0
    # evaluation
    train_fraction: float = 0.75
    split_seed: int = 0
    blended_prediction: bool = True
    external_scale: bool = True
    # sweep grids
    grid_beta: str = ""
    grid_alpha: str = ""
    grid_latent_dim: str = ""
    grid_similarity: str = ""
    grid_centrality: str = ""
    grid_split: str = ""
    # simulation
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
    forgetful_baseline: bool = False
    # use case
    usecase_honest: int = 40
    usecase_stuffers: int = 10
    usecase_history: int = 12
    usecase_selections: int = 20

    def train_config(self) -> TrainConfig:
        return TrainConfig(alpha=self.alpha, latent_dim=self.latent_dim, lambda_s=self.lambda_s,
                           lambda_r=self.lambda_r, learning_rate=self.learning_rate, epochs=self.epochs,
                           seed=self.seed, init_scale=self.init_scale, restarts=self.restarts)

    def model_settings(self) -> ModelSettings:
        return ModelSettings(beta=self.beta, alpha=self.alpha, latent_dim=self.latent_dim,
                             similarity=self.similarity, centrality=self.centrality,
                             split=self.train_fraction, mode=self.hellinger_mode, threshold=self.threshold,
                             percentile=self.percentile, bayesian_delta=self.bayesian_delta,
                             blended_prediction=self.blended_prediction)

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.train_fraction, self.split_seed)

    def sim_config(self) -> SimConfig:
        shared = {f.name for f in fields(SimConfig)} & {f.name for f in fields(ExperimentConfig)}
        kw = {k: getattr(self, k) for k in shared}
        kw["threshold_percentile"] = self.percentile
        return SimConfig(**kw)

    def usecase_config(self) -> UseCaseConfig:
        return UseCaseConfig(honest_trustors=self.usecase_honest, stuffing_trustors=self.usecase_stuffers,
                             history=self.usecase_history, selections=self.usecase_selections,
                             rating_noise=self.rating_noise, epsilon_start=self.epsilon_start,
                             epsilon_end=self.epsilon_end, sim=self.sim_config(), seed=self.seed)

    def grid(self) -> dict[str, list]:
        spec = {"beta": ("grid_beta", float), "alpha": ("grid_alpha", float),
                "latent_dim": ("grid_latent_dim", int), "similarity": ("grid_similarity", str),
                "centrality": ("grid_centrality", str), "split": ("grid_split", float)}
        out = {}
        for key, (name, cast) in spec.items():
            raw = getattr(self, name).strip()
            if raw:
                try:
                    out[key] = [cast(x.strip()) for x in raw.split(",") if x.strip()]
                except ValueError:
                    raise ConfigError(f"{name}: cannot parse {raw!r}") from None
        return out


_HINTS = typing.get_type_hints(ExperimentConfig)


def field_types() -> dict[str, type]:
    return dict(_HINTS)


def _base_type(hint):
    args = typing.get_args(hint)
    if typing.get_origin(hint) in (typing.Union, types.UnionType) and type(None) in args:
        return next(a for a in args if a is not type(None)), True
    return hint, False


def parse_value(key: str, raw: str):
    if key not in _HINTS:
        raise ConfigError(f"unknown config key {key!r}")
    kind, optional = _base_type(_HINTS[key])
    text = raw.strip()
    if optional and text.lower() in ("", "none"):
        return None
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None
    return text


def parse_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        key, raw = line.split("=", 1)
        out[key.strip()] = parse_value(key.strip(), raw)
    return out


def load_config(path: str | os.PathLike | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the file (explicit or ``$SIOTTRUST_CONFIG``), then overrides."""
    path = path or os.environ.get(ENV_VAR) or None
    values = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            values.update(parse_text(fh.read()))
    for key, val in (overrides or {}).items():
        if key not in _HINTS:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = val
    return replace(ExperimentConfig(), **values)


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k}={_render(v)}\n" for k, v in sorted(asdict(cfg).items()))


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()[:16]


def manifest_line(command: str, cfg: ExperimentConfig) -> str:
    """One-line provenance stamp; no timestamps, so reruns stay byte-identical."""
    return (f"siottrust {__version__} command={command} seed={cfg.seed} config_sha256={config_hash(cfg)} "
            f"numpy={np.__version__} scipy={scipy.__version__} numba={numba.__version__}")
