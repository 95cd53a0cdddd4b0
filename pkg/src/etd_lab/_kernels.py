"""Compiled inner loops for trajectory sampling and the ETD learners."""

import numpy as np
from numba import njit

DIVERGENCE_LIMIT = 1e12


@njit(cache=True, nogil=True)
def _pick(cum, u):
    n = cum.shape[0]
    for i in range(n - 1):
        if u < cum[i]:
            return i
    return n - 1


@njit(cache=True, nogil=True)
def sample_path(cum_policy, cum_kernel, s0, u_action, u_next):
    n = u_action.shape[0]
    states = np.empty(n + 1, dtype=np.int64)
    actions = np.empty(n, dtype=np.int64)
    s = s0
    states[0] = s
    for t in range(n):
        a = _pick(cum_policy[s], u_action[t])
        s = _pick(cum_kernel[s, a], u_next[t])
        actions[t] = a
        states[t + 1] = s
    return states, actions


@njit(cache=True, nogil=True)
def followon(rho_t, beta):
    n = rho_t.shape[0]
    F = np.empty(n)
    f = 1.0
    for t in range(n):
        if t > 0:
            f = beta * rho_t[t - 1] * f + 1.0
        F[t] = f
    return F


@njit(cache=True, nogil=True)
def etd0(states, rewards, rho_t, Phi, gamma, beta, alpha, theta0, record):
    n = rho_t.shape[0]
    k = Phi.shape[1]
    theta = theta0.copy()
    tail = np.zeros(k)
    n_tail = 0
    half = n // 2
    F_hist = np.empty(n)
    hist = np.empty((n + 1 if record else 1, k))
    hist[0] = theta
    f = 1.0
    diverged = -1
    for t in range(n):
        if t > 0:
            f = beta * rho_t[t - 1] * f + 1.0
        F_hist[t] = f
        phi = Phi[states[t]]
        phi_next = Phi[states[t + 1]]
        delta = rewards[t] + gamma * (theta @ phi_next) - theta @ phi
        step = alpha * f * rho_t[t] * delta
        for j in range(k):
            theta[j] += step * phi[j]
        if record:
            hist[t + 1] = theta
        if np.max(np.abs(theta)) > DIVERGENCE_LIMIT or not np.all(np.isfinite(theta)):
            diverged = t + 1
            break
        if t + 1 > half:
            tail += theta
            n_tail += 1
    if n_tail > 0:
        tail /= n_tail
    else:
        tail[:] = theta
    return theta, tail, F_hist, f, diverged, hist


@njit(cache=True, nogil=True)
def etd_lambda(states, rewards, rho_t, Phi, gamma, lam, beta, alpha, theta0, record):
    n = rho_t.shape[0]
    k = Phi.shape[1]
    theta = theta0.copy()
    e = np.zeros(k)
    tail = np.zeros(k)
    n_tail = 0
    half = n // 2
    F_hist = np.empty(n)
    hist = np.empty((n + 1 if record else 1, k))
    hist[0] = theta
    f = 1.0
    M = 1.0
    diverged = -1
    for t in range(n):
        if t > 0:
            f = beta * rho_t[t - 1] * f + 1.0
        F_hist[t] = f
        M = lam + (1.0 - lam) * f
        phi = Phi[states[t]]
        phi_next = Phi[states[t + 1]]
        for j in range(k):
            e[j] = rho_t[t] * (gamma * lam * e[j] + M * phi[j])
        delta = rewards[t] + gamma * (theta @ phi_next) - theta @ phi
        for j in range(k):
            theta[j] += alpha * delta * e[j]
        if record:
            hist[t + 1] = theta
        if np.max(np.abs(theta)) > DIVERGENCE_LIMIT or not np.all(np.isfinite(theta)):
            diverged = t + 1
            break
        if t + 1 > half:
            tail += theta
            n_tail += 1
    if n_tail > 0:
        tail /= n_tail
    else:
        tail[:] = theta
    return theta, tail, F_hist, f, e, M, diverged, hist
