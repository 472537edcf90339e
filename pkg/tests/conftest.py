from __future__ import annotations

import numpy as np
import pytest

from lossy_sched import ChannelInputs, PolicyMatrix, StateSpace, assemble


def simulate_chain(policy: PolicyMatrix, n_chains: int = 1000, n_steps: int = 1000, seed: int = 0,
                   burn: int = 50):
    """Independent oracle: run the assembled chain directly and count drop events.

    Returns per-chain drop and violation frequencies plus the occupancy
    histogram, with ``n_chains * n_steps`` recorded transitions in total.
    """
    space = policy.space
    Q = assemble(policy).q_full
    cum = np.cumsum(Q, axis=1)
    cum[:, -1] = 1.0
    rng = np.random.default_rng(seed)
    p = np.zeros(n_chains, dtype=np.int64)
    mu = np.minimum(np.arange(space.n_states), space.B)
    drops = np.zeros(n_chains)
    viol = np.zeros(n_chains)
    occ = np.zeros(space.n_states)
    for step in range(burn + n_steps):
        u = rng.random(n_chains)
        q = (u[:, None] > cum[p]).sum(axis=1)
        if step >= burn:
            drops += (p >= space.B) & (q > mu[p])
            viol += (p == space.M) & (q == space.M)
            occ += np.bincount(p, minlength=space.n_states)
        p = q
    return drops / n_steps, viol / n_steps, occ / (n_chains * n_steps)


def mean_se(x: np.ndarray) -> tuple[float, float]:
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))


@pytest.fixture(scope="session")
def inputs() -> ChannelInputs:
    return ChannelInputs()


@pytest.fixture
def b0n1_policy() -> PolicyMatrix:
    return PolicyMatrix(StateSpace(0, 1), ([0.7], [0.9]), 0.02)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for a criterion and echo it to stdout."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
