"""Emphatic weights, discrepancy, contraction moduli and follow-on variance.

Everything here is closed-form linear algebra on small dense matrices.
Contraction moduli are returned as :class:`Modulus` values rather than
raising, since moduli >= 1 are meaningful outputs (they are plotted).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import SingularSystem
from .mdp import Policy, TabularMdp, importance_ratios, induce_chain, lambda_matrix

SINGULAR_COND = 1e14
EIGEN_TOL = 1e-10
VARIANCE_CLIP = 1e-10


class Modulus(NamedTuple):
    value: float
    is_contraction: bool

    @classmethod
    def of(cls, value):
        return cls(float(value), bool(value < 1.0))


def emphatic_f(d_mu, P, beta):
    """Emphatic weights ``f`` solving ``f^T (I - beta P) = d_mu^T``."""
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    P = np.asarray(P, dtype=float)
    return np.linalg.solve((np.eye(P.shape[0]) - beta * P).T, np.asarray(d_mu, dtype=float))


def emphatic_m(d_mu, P, lam, beta):
    """Emphatic weights ``m`` solving ``m^T (I - P^{lam,beta}) = d_mu^T``."""
    if lam * beta >= 1.0:
        raise ValueError(f"need lam * beta < 1, got lam={lam}, beta={beta}")
    P = np.asarray(P, dtype=float)
    A = np.eye(P.shape[0]) - lambda_matrix(P, lam, beta)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise SingularSystem(f"I - P^(lam,beta) is singular (cond {cond:.3g})", cond)
    return np.linalg.solve(A.T, np.asarray(d_mu, dtype=float))


def kappa(d_mu, f):
    """Discrepancy ``min_s d_mu(s) / f(s)``."""
    d_mu = np.asarray(d_mu, dtype=float)
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValueError("emphatic weights must be strictly positive")
    return float(np.min(d_mu / f))


def zeta(lam, beta):
    """Common row sum of ``P^{lam,beta}``."""
    return beta * (1.0 - lam) / (1.0 - lam * beta)


def modulus_thm1(gamma, beta, kappa):
    """Contraction modulus of the ETD(0, beta) projected operator in the f-norm."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return Modulus.of(math.sqrt(gamma**2 * (1.0 - kappa) / beta))


def modulus_thm2(gamma, beta, lam):
    """Contraction modulus of the ETD(lam, beta) projected operator in the m-norm."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if not 0.0 <= lam < 1.0 or gamma * lam >= 1.0 or beta * lam >= 1.0:
        raise ValueError(f"invalid (gamma, beta, lam) = ({gamma}, {beta}, {lam})")
    if beta >= gamma:
        num = gamma**2 * (1 + lam * beta) ** 2 * (1 - lam)
        den = beta * (1 + gamma * lam) ** 2 * (1 - lam * beta)
    else:
        num = gamma**2 * (1 - beta * lam) * (1 - lam)
        den = beta * (1 - gamma * lam) ** 2
    return Modulus.of(math.sqrt(num / den))


def mismatch_matrix(mdp: TabularMdp, behavior: Policy, target: Policy):
    """``Pt[sb, s] = sum_a p(s | sb, a) pi(a|sb)^2 / mu(a|sb)``."""
    rho = importance_ratios(target, behavior)
    return np.einsum("sa,sat->st", rho * target.probs, mdp.kernel)


def spectral_radius(M):
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(M, dtype=float)))))


def second_moment_q(d_mu, P_pi, f, P_tilde, beta) -> Optional[np.ndarray]:
    """Stationary second-moment vector ``q(s) = d_mu(s) lim E[F_t^2 | S_t = s]``.

    Returns ``None`` when ``beta^2 * spectral_radius(P_tilde) >= 1``, in which
    case the second moment diverges.
    """
    if beta**2 * spectral_radius(P_tilde) >= 1.0 - EIGEN_TOL:
        return None
    P_pi = np.asarray(P_pi, dtype=float)
    P_tilde = np.asarray(P_tilde, dtype=float)
    n = P_pi.shape[0]
    rhs = np.asarray(d_mu, dtype=float) + 2.0 * beta * (P_pi.T @ np.asarray(f, dtype=float))
    return np.linalg.solve(np.eye(n) - beta**2 * P_tilde.T, rhs)


def average_variance(q, f, d_mu):
    """``sum_s d_mu(s) lim Var[F_t | S_t = s]``; infinite when ``q`` is None."""
    if q is None:
        return math.inf
    d_mu = np.asarray(d_mu, dtype=float)
    if np.any(d_mu <= 0):
        raise ValueError("behavior stationary distribution must be strictly positive")
    f = np.asarray(f, dtype=float)
    value = float(np.sum(q) - np.sum(f * f / d_mu))
    if -VARIANCE_CLIP < value < 0.0:
        value = 0.0
    return value


def variance_bound(beta, P_tilde) -> Optional[float]:
    """Upper bound on the average conditional variance of ``F_t``.

    ``None`` when ``beta^2 * ||P_tilde||_inf >= 1`` (bound does not apply).
    """
    norm = float(np.max(np.sum(np.abs(P_tilde), axis=1)))
    if beta**2 * norm >= 1.0:
        return None
    return beta**2 / (1 - beta) * (2 + (1 + beta) * norm / (1 - beta**2 * norm))


def norm_constant(lam, beta, gamma):
    """Scale ``c`` in the inequality ``||P^{lam,gamma} v||_m <= c ||P^{lam,beta} v||_m``."""
    if beta >= gamma:
        return gamma * (1 + beta * lam) / (beta * (1 + gamma * lam))
    return gamma * (1 - beta * lam) / (beta * (1 - gamma * lam))


@dataclass(frozen=True)
class NormInequalityReport:
    constant: float
    trials: int
    max_violation: float
    max_relative_violation: float

    @property
    def holds(self):
        return self.max_violation <= 1e-9


def verify_norm_inequality(P, m, lam, beta, gamma, trials, seed=0):
    """Check ``||P^{lam,gamma} v||_m^2 <= c^2 ||P^{lam,beta} v||_m^2`` on random ``v``.

    Violations are ``lhs - rhs``; negative means the inequality holds.
    """
    if lam * gamma >= 1 or lam * beta >= 1:
        raise ValueError("need lam * gamma < 1 and lam * beta < 1")
    rng = np.random.default_rng(seed)
    P = np.asarray(P, dtype=float)
    m = np.asarray(m, dtype=float)
    c = norm_constant(lam, beta, gamma)
    V = rng.standard_normal((P.shape[0], trials))
    lhs = m @ (lambda_matrix(P, lam, gamma) @ V) ** 2
    rhs = c**2 * (m @ (lambda_matrix(P, lam, beta) @ V) ** 2)
    viol = lhs - rhs
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(rhs > 0, viol / rhs, np.where(viol > 0, np.inf, 0.0))
    return NormInequalityReport(c, trials, float(viol.max()), float(rel.max()))


@dataclass(frozen=True)
class EmphaticProfile:
    f: np.ndarray
    m: np.ndarray
    kappa: float
    zeta: float
    modulus_thm1: Optional[Modulus]
    modulus_thm2: Optional[Modulus]
    beta: float
    lam: float


def emphatic_profile(d_mu, P, gamma, lam, beta) -> EmphaticProfile:
    f = emphatic_f(d_mu, P, beta)
    m = emphatic_m(d_mu, P, lam, beta)
    k = kappa(d_mu, f)
    thm1 = modulus_thm1(gamma, beta, k) if beta > 0 else None
    thm2 = modulus_thm2(gamma, beta, lam) if beta > 0 and lam < 1 else None
    return EmphaticProfile(f, m, k, zeta(lam, beta), thm1, thm2, beta, lam)


@dataclass(frozen=True)
class VarianceDiagnostics:
    mismatch: np.ndarray
    spectral_radius: float
    q: Optional[np.ndarray]
    avg_variance: float
    bound: Optional[float]

    @property
    def finite(self):
        return self.q is not None


def variance_diagnostics(mdp, behavior, target, beta, d_mu=None, P_pi=None):
    """Assemble the follow-on trace variance picture for one ``beta``."""
    if d_mu is None:
        d_mu = induce_chain(mdp, behavior).stationary
    if P_pi is None:
        P_pi = np.einsum("sa,sat->st", target.probs, mdp.kernel)
    Pt = mismatch_matrix(mdp, behavior, target)
    f = emphatic_f(d_mu, P_pi, beta)
    q = second_moment_q(d_mu, P_pi, f, Pt, beta)
    return VarianceDiagnostics(
        Pt, spectral_radius(Pt), q, average_variance(q, f, d_mu), variance_bound(beta, Pt)
    )
