"""Exact projected fixed points of TD, ETD(0, beta) and ETD(lam, beta).

Fixed points come from the n x n normal equations
``Phi^T W (I - A) Phi theta = Phi^T W b`` rather than from running a
learner, so bias is measured free of sampling noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from . import emphatic
from .errors import InvalidModel, SingularSystem
from .mdp import (
    Policy,
    TabularMdp,
    check_features,
    exact_value,
    induce_chain,
    lambda_matrix,
    weighted_norm,
)

Algorithm = Literal["standard-td", "etd-zero-beta", "etd-lambda-beta"]
ALGORITHMS = ("standard-td", "etd-zero-beta", "etd-lambda-beta")

# Scale-free conditioning of the normal equations: ||M^-1|| * ||Phi^T W Phi||.
SINGULAR_CONDITION = 1e12


@dataclass(frozen=True)
class FixedPointSpec:
    algorithm: Algorithm
    beta: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.algorithm == "etd-zero-beta" and self.lam != 0:
            raise ValueError("etd-zero-beta has no bootstrapping parameter; use etd-lambda-beta")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")

    def weights(self, d_mu, P):
        """Weight vector of the projection: d_mu, f or m."""
        if self.algorithm == "standard-td":
            return np.asarray(d_mu, dtype=float)
        if self.algorithm == "etd-zero-beta":
            return emphatic.emphatic_f(d_mu, P, self.beta)
        return emphatic.emphatic_m(d_mu, P, self.lam, self.beta)


@dataclass(frozen=True)
class BiasReport:
    """Exact fixed point and its errors against the true value function.

    ``error_w`` and ``best_approx_error`` use the algorithm's own weights;
    ``error_l2`` is the unweighted Euclidean error. Bounds are ``None``
    where the contraction condition fails.
    """

    spec: FixedPointSpec
    theta: np.ndarray
    values: np.ndarray
    true_values: np.ndarray
    weights: np.ndarray
    error_w: float
    error_f: float
    error_dmu: float
    error_dpi: float
    error_l2: float
    best_approx_error: float
    cor1_bound_f: Optional[float]
    cor1_bound_dmu: Optional[float]
    modulus: Optional[emphatic.Modulus]
    kappa: float
    condition: float


def projection_matrix(features, w):
    """``Phi (Phi^T W Phi)^{-1} Phi^T W``, the w-weighted projection onto span(Phi)."""
    Phi = check_features(features)
    w = np.asarray(w, dtype=float)
    if w.shape != (Phi.shape[0],):
        raise InvalidModel(f"weights must have length {Phi.shape[0]}, got shape {w.shape}")
    if np.any(w <= 0):
        raise InvalidModel("projection weights must be strictly positive")
    PhiW = Phi.T * w
    return Phi @ np.linalg.solve(PhiW @ Phi, PhiW)


def best_approximation_error(features, v, w):
    """``||Pi_w v - v||_w``."""
    v = np.asarray(v, dtype=float)
    return weighted_norm(projection_matrix(features, w) @ v - v, w)


def _linear_part(chain, lam):
    P, g = chain.transition, chain.gamma
    if lam == 0:
        return g * P, chain.reward.copy()
    eye = np.eye(chain.n_states)
    return lambda_matrix(P, lam, g), np.linalg.solve(eye - g * lam * P, chain.reward)


def solve_theta(features, w, A, b):
    """Solve ``Phi^T W (b + A Phi theta - Phi theta) = 0``; returns (theta, condition)."""
    Phi = check_features(features)
    PhiW = Phi.T * np.asarray(w, dtype=float)
    M = PhiW @ (Phi - A @ Phi)
    gram = np.linalg.norm(PhiW @ Phi, 2)
    smallest = np.linalg.svd(M, compute_uv=False)[-1]
    condition = float(gram / smallest) if smallest > 0 else math.inf
    if not np.isfinite(condition) or condition > SINGULAR_CONDITION:
        raise SingularSystem(f"projected fixed point is ill-posed (condition {condition:.3g})", condition)
    return np.linalg.solve(M, PhiW @ b), condition


def solve_fixed_point(spec: FixedPointSpec, mdp: TabularMdp, behavior: Policy, target: Policy, features) -> BiasReport:
    Phi = check_features(features)
    chain = induce_chain(mdp, target)
    d_mu = induce_chain(mdp, behavior).stationary
    P = chain.transition
    w = spec.weights(d_mu, P)
    A, b = _linear_part(chain, spec.lam)
    theta, condition = solve_theta(Phi, w, A, b)

    V = exact_value(chain)
    values = Phi @ theta
    err = values - V
    f = emphatic.emphatic_f(d_mu, P, spec.beta)
    kap = emphatic.kappa(d_mu, f)
    best = best_approximation_error(Phi, V, w)

    modulus = None
    bound_w = bound_dmu = None
    if spec.algorithm == "etd-zero-beta" and spec.beta > 0:
        modulus = emphatic.modulus_thm1(mdp.gamma, spec.beta, kap)
    elif spec.algorithm == "etd-lambda-beta" and spec.beta > 0 and spec.lam < 1:
        modulus = emphatic.modulus_thm2(mdp.gamma, spec.beta, spec.lam)
    if modulus is not None and modulus.is_contraction:
        slack = 1.0 - modulus.value**2
        bound_w = best / math.sqrt(slack)
        if spec.algorithm == "etd-zero-beta" and mdp.gamma > 0:
            bound_dmu = best / math.sqrt(mdp.gamma * slack)

    return BiasReport(
        spec=spec,
        theta=theta,
        values=values,
        true_values=V,
        weights=w,
        error_w=weighted_norm(err, w),
        error_f=weighted_norm(err, f),
        error_dmu=weighted_norm(err, d_mu),
        error_dpi=weighted_norm(err, chain.stationary),
        error_l2=float(np.linalg.norm(err)),
        best_approx_error=best,
        cor1_bound_f=bound_w,
        cor1_bound_dmu=bound_dmu,
        modulus=modulus,
        kappa=kap,
        condition=condition,
    )


def projected_operator(mdp, behavior, target, features, spec):
    """Linear part ``Pi_w A`` of the projected Bellman operator and its weights."""
    chain = induce_chain(mdp, target)
    d_mu = induce_chain(mdp, behavior).stationary
    w = spec.weights(d_mu, chain.transition)
    A, _ = _linear_part(chain, spec.lam)
    return projection_matrix(features, w) @ A, w


def empirical_contraction_norm(mdp, behavior, target, features, spec):
    """Exact w-weighted operator norm of the projected Bellman operator."""
    PiA, w = projected_operator(mdp, behavior, target, features, spec)
    s = np.sqrt(w)
    return float(np.linalg.norm((s[:, None] * PiA) / s[None, :], 2))
