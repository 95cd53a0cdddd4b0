"""Trajectory sampling, ETD(0, beta) / ETD(lam, beta) learners, follow-on statistics.

Random streams use numpy's counter-based Philox generator. Run ``i`` of a
sweep seeded with ``seed`` draws from ``Philox(seed ^ i)``, so results do
not depend on how runs are scheduled across threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import NumericalDivergence
from .mdp import Policy, TabularMdp, check_features, exact_value, importance_ratios, induce_chain, weighted_norm

BURN_IN = 1000


def make_rng(seed):
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def run_seed(seed, run):
    return (int(seed) ^ int(run)) & 0xFFFFFFFFFFFFFFFF


def thread_count():
    env = os.environ.get("ETD_LAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class Trajectory:
    """Behavior-policy sample path; ``states`` has one more entry than ``actions``."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __len__(self):
        return len(self.actions)

    @property
    def next_states(self):
        return self.states[1:]

    def __iter__(self):
        for t in range(len(self)):
            yield int(self.states[t]), int(self.actions[t]), float(self.rewards[t]), int(self.states[t + 1])

    def ratios(self, rho):
        """Per-step importance ratios from an (S, A) ratio matrix."""
        return np.asarray(rho, dtype=float)[self.states[:-1], self.actions]


@dataclass(frozen=True)
class SimConfig:
    alpha: float
    n_steps: int
    n_runs: int = 1
    seed: int = 0
    theta0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"step size must be non-negative, got {self.alpha}")
        if self.n_steps < 1 or self.n_runs < 1:
            raise ValueError("n_steps and n_runs must be positive")

    def initial_weights(self, n):
        if self.theta0 is None:
            return np.zeros(n)
        theta0 = np.asarray(self.theta0, dtype=float)
        if theta0.shape != (n,):
            raise ValueError(f"theta0 must have length {n}")
        return theta0.copy()


@dataclass
class TraceState:
    """Learner state after the last processed step."""

    theta: np.ndarray
    F: float = 1.0
    e: Optional[np.ndarray] = None
    M: float = 1.0
    t: int = 0


@dataclass(frozen=True)
class TraceStats:
    counts: np.ndarray
    mean: np.ndarray
    second_moment: np.ndarray
    time_average: float
    avg_variance: float

    @property
    def frequencies(self):
        return self.counts / self.counts.sum()


@dataclass(frozen=True)
class EtdResult:
    theta: np.ndarray
    theta_tail_avg: np.ndarray
    state: TraceState
    stats: TraceStats
    history: Optional[np.ndarray] = None


def sample_trajectory(mdp: TabularMdp, behavior: Policy, n_steps, seed, initial_state=None) -> Trajectory:
    """Sample ``n_steps`` transitions under ``behavior``; ``s_0 ~ d_mu`` by default."""
    rng = make_rng(seed)
    if initial_state is None:
        d_mu = induce_chain(mdp, behavior).stationary
        s0 = int(rng.choice(mdp.n_states, p=d_mu))
    else:
        s0 = int(initial_state)
    u = rng.random((2, n_steps))
    cum_policy = np.cumsum(behavior.probs, axis=1)
    cum_kernel = np.cumsum(mdp.kernel, axis=2)
    states, actions = _kernels.sample_path(cum_policy, cum_kernel, s0, u[0], u[1])
    rewards = mdp.reward[states[:-1], actions]
    return Trajectory(states, actions, rewards)


def trace_stats(states, F, n_states, burn_in=BURN_IN):
    """Per-state conditional moments of ``F`` after discarding ``burn_in`` steps."""
    s = np.asarray(states[: len(F)])[burn_in:]
    F = np.asarray(F)[burn_in:]
    counts = np.bincount(s, minlength=n_states).astype(float)
    sums = np.bincount(s, weights=F, minlength=n_states)
    sq = np.bincount(s, weights=F * F, minlength=n_states)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(counts > 0, sums / counts, np.nan)
        second = np.where(counts > 0, sq / counts, np.nan)
    freq = counts / counts.sum()
    seen = counts > 0
    avg_var = float(np.sum(freq[seen] * (second[seen] - mean[seen] ** 2)))
    return TraceStats(counts, mean, second, float(F.mean()), avg_var)


def followon_stats(trajectory: Trajectory, behavior: Policy, target: Policy, beta, burn_in=BURN_IN) -> TraceStats:
    rho_t = trajectory.ratios(importance_ratios(target, behavior))
    F = _kernels.followon(rho_t, float(beta))
    return trace_stats(trajectory.states, F, behavior.shape[0], burn_in)


def followon_trace(trajectory: Trajectory, rho, beta):
    """The raw sequence ``F_0, ..., F_{T-1}``."""
    return _kernels.followon(trajectory.ratios(rho), float(beta))


def _stats_or_empty(states, F, n_states):
    burn = BURN_IN if len(F) > 2 * BURN_IN else 0
    return trace_stats(states, F, n_states, burn)


def run_etd0(trajectory: Trajectory, rho, features, gamma, beta, config: SimConfig, record=False) -> EtdResult:
    """ETD(0, beta) along ``trajectory``; ``rho`` is the (S, A) ratio matrix."""
    Phi = check_features(features)
    rho_t = trajectory.ratios(rho)
    theta, tail, F, f_last, diverged, hist = _kernels.etd0(
        trajectory.states, trajectory.rewards, rho_t, Phi, float(gamma), float(beta),
        float(config.alpha), config.initial_weights(Phi.shape[1]), bool(record),
    )
    if diverged >= 0:
        raise NumericalDivergence(f"|theta| exceeded {_kernels.DIVERGENCE_LIMIT:g} at step {diverged}", diverged)
    stats = _stats_or_empty(trajectory.states, F, Phi.shape[0])
    state = TraceState(theta, f_last, None, f_last, len(trajectory))
    return EtdResult(theta, tail, state, stats, hist if record else None)


def run_etd_lambda(trajectory: Trajectory, rho, features, gamma, lam, beta, config: SimConfig, record=False) -> EtdResult:
    """ETD(lam, beta) with emphasis ``M_t`` and eligibility trace ``e_t``."""
    Phi = check_features(features)
    rho_t = trajectory.ratios(rho)
    theta, tail, F, f_last, e, M, diverged, hist = _kernels.etd_lambda(
        trajectory.states, trajectory.rewards, rho_t, Phi, float(gamma), float(lam), float(beta),
        float(config.alpha), config.initial_weights(Phi.shape[1]), bool(record),
    )
    if diverged >= 0:
        raise NumericalDivergence(f"|theta| exceeded {_kernels.DIVERGENCE_LIMIT:g} at step {diverged}", diverged)
    stats = _stats_or_empty(trajectory.states, F, Phi.shape[0])
    state = TraceState(theta, f_last, e, M, len(trajectory))
    return EtdResult(theta, tail, state, stats, hist if record else None)


@dataclass(frozen=True)
class RunRecord:
    beta: float
    lam: float
    run: int
    seed: int
    final_error: float
    tail_avg_error: float
    diverged: bool


@dataclass(frozen=True)
class SweepAggregate:
    beta: float
    lam: float
    n_runs: int
    n_diverged: int
    mean_error: float
    std_error: float
    mean_tail_error: float


@dataclass(frozen=True)
class SweepResult:
    runs: list = field(default_factory=list)
    aggregates: list = field(default_factory=list)

    def best_beta(self):
        finite = [a for a in self.aggregates if math.isfinite(a.mean_error)]
        return min(finite, key=lambda a: a.mean_error).beta


def _aggregate(beta, lam, records):
    ok = [r for r in records if not r.diverged]
    n_div = len(records) - len(ok)
    if not ok:
        return SweepAggregate(beta, lam, len(records), n_div, math.inf, math.inf, math.inf)
    err = np.array([r.final_error for r in ok])
    tail = np.array([r.tail_avg_error for r in ok])
    se = float(err.std(ddof=1) / math.sqrt(len(err))) if len(err) > 1 else 0.0
    return SweepAggregate(beta, lam, len(records), n_div, float(err.mean()), se, float(tail.mean()))


def mse_sweep(mdp, behavior, target, features, beta_grid: Sequence[float], config: SimConfig,
              lam=0.0, threads=None) -> SweepResult:
    """Independent seeded runs for each ``beta``; errors are d_pi-weighted.

    Run ``i`` uses the same sampled trajectory for every ``beta``.
    """
    Phi = check_features(features)
    chain = induce_chain(mdp, target)
    V, d_pi = exact_value(chain), chain.stationary
    rho = importance_ratios(target, behavior)
    betas = [float(b) for b in beta_grid]
    slots = [[None] * config.n_runs for _ in betas]

    def one_run(run):
        seed = run_seed(config.seed, run)
        traj = sample_trajectory(mdp, behavior, config.n_steps, seed)
        for i, beta in enumerate(betas):
            try:
                if lam == 0:
                    res = run_etd0(traj, rho, Phi, mdp.gamma, beta, config)
                else:
                    res = run_etd_lambda(traj, rho, Phi, mdp.gamma, lam, beta, config)
            except NumericalDivergence:
                slots[i][run] = RunRecord(beta, lam, run, seed, math.inf, math.inf, True)
                continue
            slots[i][run] = RunRecord(
                beta, lam, run, seed,
                weighted_norm(Phi @ res.theta - V, d_pi),
                weighted_norm(Phi @ res.theta_tail_avg - V, d_pi),
                False,
            )

    n_threads = threads or thread_count()
    if n_threads == 1:
        for run in range(config.n_runs):
            one_run(run)
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(one_run, range(config.n_runs)))

    runs = [rec for per_beta in slots for rec in per_beta]
    aggregates = [_aggregate(beta, lam, slots[i]) for i, beta in enumerate(betas)]
    return SweepResult(runs, aggregates)
