"""Two-state problems used by the experiments.

Both states offer two actions and action ``k`` moves deterministically to
state ``k`` (0 = Left, 1 = Right), so a policy row *is* the next-state
distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import Policy, TabularMdp

LEFT, RIGHT = 0, 1


@dataclass(frozen=True)
class Problem:
    name: str
    mdp: TabularMdp
    behavior: Policy
    target: Policy
    features: np.ndarray


def choose_next_state_mdp(state_rewards, gamma):
    """MDP where action ``k`` jumps to state ``k``; reward depends on the source state only."""
    state_rewards = np.asarray(state_rewards, dtype=float)
    n = len(state_rewards)
    kernel = np.zeros((n, n, n))
    for a in range(n):
        kernel[:, a, a] = 1.0
    reward = np.repeat(state_rewards[:, None], n, axis=1)
    return TabularMdp(kernel, reward, gamma)


def kolter2(gamma=0.99, epsilon=0.001, p=0.5):
    """Kolter's two-state counterexample with behavior stationary law ``(p, 1 - p)``.

    Target moves uniformly (P = 0.5 * ones), the true values are ``[1, 1.05]``
    and the single feature is ``[1, 1.05 + epsilon]``.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    P = 0.5 * np.ones((2, 2))
    V = np.array([1.0, 1.05])
    R = (np.eye(2) - gamma * P) @ V
    mdp = choose_next_state_mdp(R, gamma)
    behavior = Policy(np.array([[p, 1 - p], [p, 1 - p]]))
    target = Policy(P)
    features = np.array([[1.0], [1.05 + epsilon]])
    return Problem("kolter2", mdp, behavior, target, features)


def tightness_example(epsilon=0.01, gamma=0.9):
    """Behavior goes Right w.p. epsilon, target goes Left w.p. epsilon."""
    mdp = choose_next_state_mdp([0.0, 0.0], gamma)
    behavior = Policy(np.array([[1 - epsilon, epsilon]] * 2))
    target = Policy(np.array([[epsilon, 1 - epsilon]] * 2))
    return Problem("leftright-example1", mdp, behavior, target, np.eye(2))


def infinite_variance_example(gamma=0.9):
    """Behavior picks Left/Right uniformly, target always goes Right."""
    mdp = choose_next_state_mdp([0.0, 1.0], gamma)
    behavior = Policy(np.full((2, 2), 0.5))
    target = Policy(np.array([[0.0, 1.0], [0.0, 1.0]]))
    return Problem("leftright-example2", mdp, behavior, target, np.eye(2))


BUILTINS = {"kolter2", "leftright"}
