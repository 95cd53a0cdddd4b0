"""Tabular MDPs, policy-induced Markov chains and Bellman operators.

All arrays are ``float64`` numpy arrays. Objects are frozen after
construction and every operation here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidModel, NonIrreducibleChain, RankDeficientFeatures, UndefinedRatio

PROB_ATOL = 1e-12
STATIONARY_ATOL = 1e-10
UNIT_EIGEN_TOL = 1e-8
RANK_TOL = 1e-10


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_stochastic(rows, what):
    if np.any(rows < 0):
        raise InvalidModel(f"{what} has negative entries")
    sums = rows.sum(axis=-1)
    if not np.allclose(sums, 1.0, rtol=0.0, atol=PROB_ATOL):
        worst = np.max(np.abs(sums - 1.0))
        raise InvalidModel(f"{what} rows must sum to 1 (worst deviation {worst:.3g})")


@dataclass(frozen=True)
class TabularMdp:
    """Finite MDP with kernel ``kernel[s, a, s']`` and rewards ``reward[s, a]``."""

    kernel: np.ndarray
    reward: np.ndarray
    gamma: float

    def __post_init__(self):
        kernel = _readonly(self.kernel)
        reward = _readonly(self.reward)
        if kernel.ndim != 3 or kernel.shape[0] != kernel.shape[2]:
            raise InvalidModel(f"kernel must have shape (S, A, S), got {kernel.shape}")
        if reward.shape != kernel.shape[:2]:
            raise InvalidModel(f"reward must have shape {kernel.shape[:2]}, got {reward.shape}")
        _check_stochastic(kernel, "kernel")
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidModel(f"discount must lie in [0, 1), got {self.gamma}")
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self):
        return self.kernel.shape[0]

    @property
    def n_actions(self):
        return self.kernel.shape[1]


@dataclass(frozen=True)
class Policy:
    """Stochastic policy, ``probs[s, a] = P(a | s)``."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _readonly(self.probs)
        if probs.ndim != 2:
            raise InvalidModel(f"policy must be an (S, A) matrix, got shape {probs.shape}")
        _check_stochastic(probs, "policy")
        object.__setattr__(self, "probs", probs)

    @property
    def shape(self):
        return self.probs.shape


@dataclass(frozen=True)
class InducedChain:
    """Markov reward process obtained by running a policy on an MDP."""

    transition: np.ndarray
    reward: np.ndarray
    stationary: np.ndarray
    gamma: float

    def __post_init__(self):
        for name in ("transition", "reward", "stationary"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def n_states(self):
        return self.transition.shape[0]


@dataclass(frozen=True)
class LinearApproximation:
    """Linear value estimate ``features @ weights``."""

    features: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        features = _readonly(self.features)
        weights = _readonly(self.weights)
        check_features(features)
        if weights.shape != (features.shape[1],):
            raise InvalidModel(
                f"weights must have length {features.shape[1]}, got shape {weights.shape}"
            )
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "weights", weights)

    def values(self):
        return self.features @ self.weights


def check_features(features):
    """Raise ``RankDeficientFeatures`` unless ``features`` has full column rank."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2:
        raise InvalidModel(f"features must be an (S, n) matrix, got shape {features.shape}")
    rank = np.linalg.matrix_rank(features, tol=RANK_TOL)
    if rank < features.shape[1]:
        raise RankDeficientFeatures(
            f"feature matrix has rank {rank} < {features.shape[1]} columns"
        )
    return features


def stationary_distribution(P):
    """Unique stationary distribution of the row-stochastic matrix ``P``.

    Solved directly from ``d (P - I) = 0`` together with ``sum(d) = 1``.
    Raises ``NonIrreducibleChain`` when eigenvalue 1 is not simple.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    eig = np.linalg.eigvals(P)
    n_unit = int(np.sum(np.abs(eig - 1.0) < UNIT_EIGEN_TOL))
    if n_unit != 1:
        raise NonIrreducibleChain(
            f"eigenvalue 1 has multiplicity {n_unit}; stationary distribution is not unique"
        )
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    d, *_ = np.linalg.lstsq(A, b, rcond=None)
    d[np.abs(d) < 1e-15] = 0.0
    if np.any(d < -STATIONARY_ATOL):
        raise NonIrreducibleChain("stationary solve produced a negative mass")
    d = np.clip(d, 0.0, None)
    return d / d.sum()


def induce_chain(mdp: TabularMdp, policy: Policy) -> InducedChain:
    if policy.shape != (mdp.n_states, mdp.n_actions):
        raise InvalidModel(
            f"policy shape {policy.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})"
        )
    P = np.einsum("sa,sat->st", policy.probs, mdp.kernel)
    R = np.einsum("sa,sa->s", policy.probs, mdp.reward)
    return InducedChain(P, R, stationary_distribution(P), mdp.gamma)


def importance_ratios(target: Policy, behavior: Policy) -> np.ndarray:
    """Matrix ``rho[s, a] = pi(a|s) / mu(a|s)``, zero where both vanish."""
    pi, mu = target.probs, behavior.probs
    if pi.shape != mu.shape:
        raise InvalidModel(f"policy shapes differ: {pi.shape} vs {mu.shape}")
    bad = (mu == 0) & (pi > 0)
    if np.any(bad):
        s, a = np.argwhere(bad)[0]
        raise UndefinedRatio(f"behavior never takes action {a} in state {s} but target does")
    out = np.zeros_like(pi)
    np.divide(pi, mu, out=out, where=mu > 0)
    return out


def lambda_matrix(P, a, b):
    """``P^{a,b} = I - (I - b a P)^{-1} (I - b P)``."""
    P = np.asarray(P, dtype=float)
    eye = np.eye(P.shape[0])
    return eye - np.linalg.solve(eye - b * a * P, eye - b * P)


def bellman_apply(chain: InducedChain, lam, v):
    """Apply the lambda-return Bellman operator to ``v``.

    At ``lam == 0`` this is exactly ``R + gamma P v``.
    """
    v = np.asarray(v, dtype=float)
    P, R, g = chain.transition, chain.reward, chain.gamma
    if lam == 0:
        return R + g * (P @ v)
    eye = np.eye(chain.n_states)
    return np.linalg.solve(eye - g * lam * P, R) + lambda_matrix(P, lam, g) @ v


def exact_value(chain: InducedChain):
    """Discounted value ``(I - gamma P)^{-1} R``."""
    eye = np.eye(chain.n_states)
    return np.linalg.solve(eye - chain.gamma * chain.transition, chain.reward)


def weighted_norm(v, w):
    """``sqrt(sum_s w(s) v(s)^2)`` for non-negative weights ``w``."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if v.shape != w.shape:
        raise InvalidModel(f"vector shape {v.shape} does not match weights {w.shape}")
    return float(np.sqrt(np.sum(w * v * v)))
