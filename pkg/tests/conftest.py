import numpy as np
import pytest

from etd_lab import Policy, TabularMdp


def random_mdp(rng, n_states, n_actions, gamma=0.9, concentration=1.0):
    kernel = rng.dirichlet(np.full(n_states, concentration), size=(n_states, n_actions))
    reward = rng.standard_normal((n_states, n_actions))
    return TabularMdp(kernel, reward, gamma)


def random_policy(rng, n_states, n_actions, floor=0.05):
    """Full-support policy; every action has probability at least ``floor / n_actions``."""
    probs = rng.dirichlet(np.ones(n_actions), size=n_states)
    probs = (1 - floor) * probs + floor / n_actions
    return Policy(probs / probs.sum(axis=1, keepdims=True))


def random_chain(rng, n):
    P = rng.dirichlet(np.ones(n), size=n)
    return P


def power_iteration(P, iters=100_000):
    d = np.full(P.shape[0], 1.0 / P.shape[0])
    # lazy chain: same stationary law, no periodicity
    L = 0.5 * (np.eye(P.shape[0]) + P)
    for _ in range(iters):
        d = d @ L
    return d / d.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


CRITERIA = {}


def record_criterion(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}  {title}: {detail}"
    CRITERIA[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])
