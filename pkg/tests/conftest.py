import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from siottrust.graph import TrustBipartiteGraph

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_graph(rng, n, m, density=0.3, grid=True):
    """Random bipartite graph with ratings on the k/5 grid (or continuous)."""
    g = TrustBipartiteGraph(n, m)
    mask = rng.random((n, m)) < density
    for u, v in zip(*np.nonzero(mask)):
        r = rng.integers(1, 6) / 5.0 if grid else rng.uniform(0.2, 1.0)
        g.add_experience(int(u), int(v), float(r))
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_graph():
    # u0 rated v1 (deg 1) and v2 (deg 2); u1 rated only v2
    g = TrustBipartiteGraph(2, 3)
    g.add_experience(0, 1, 0.8)
    g.add_experience(0, 2, 0.6)
    g.add_experience(1, 2, 0.4)
    return g


@functools.lru_cache(maxsize=None)
def cached_simulation(maliciousness: float, seed: int):
    """Default-config simulation run, shared by every test module in the session."""
    from siottrust.simulation import SimConfig, build_world, run_simulation

    cfg = SimConfig(maliciousness=maliciousness, seed=seed)
    world = build_world(cfg)
    return world, run_simulation(world, cfg)


@functools.lru_cache(maxsize=None)
def cached_usecase(seed: int):
    from siottrust.simulation import UseCaseConfig, run_usecase

    return run_usecase(UseCaseConfig(seed=seed))


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report(capsys):
    """Record and immediately print one pass/fail line for an acceptance criterion."""

    def _report(number: int, ok: bool, detail: str, skipped: bool = False):
        status = "SKIP" if skipped else ("PASS" if ok else "FAIL")
        line = f"[{status}] criterion {number:>2}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
