"""Experiment runners behind the CLI commands.

Each runner returns plain rows (lists of dicts with a fixed key order) so
the CLI only has to render them.
"""

from __future__ import annotations

import math

import numpy as np

from . import emphatic
from .builtins import Problem, infinite_variance_example, kolter2, tightness_example
from .errors import SingularSystem
from .fixed_point import FixedPointSpec, best_approximation_error, empirical_contraction_norm, solve_fixed_point
from .mdp import exact_value, importance_ratios, induce_chain, weighted_norm
from .sim import BURN_IN, SimConfig, followon_trace, mse_sweep, sample_trajectory

KOLTER_P_GRID = tuple(round(0.01 * i, 2) for i in range(1, 100))
SWEEP_BETAS = (0.5, 0.6, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)
EXAMPLE2_CHECKPOINTS = (1_000, 10_000, 100_000, 1_000_000)
SURFACE_LAMBDAS = tuple(round(0.05 * i, 2) for i in range(20)) + (0.99, 0.999, 0.9999)
SURFACE_BETAS = (0.1, 0.3, 0.5, 0.7, 0.9, 0.95)


def kolter_bias(gamma=0.99, epsilon=0.001, p_grid=KOLTER_P_GRID):
    """Standard TD vs ETD(0, gamma) bias over behavior distributions ``(p, 1 - p)``."""
    rows = []
    td_spec = FixedPointSpec("standard-td")
    etd_spec = FixedPointSpec("etd-zero-beta", beta=gamma)
    for p in p_grid:
        prob = kolter2(gamma, epsilon, p)
        args = (prob.mdp, prob.behavior, prob.target, prob.features)
        try:
            td = solve_fixed_point(td_spec, *args)
            td_err, td_l2, td_cond = td.error_dpi, td.error_l2, td.condition
        except SingularSystem as exc:
            td_err, td_l2, td_cond = math.inf, math.inf, exc.condition
        etd = solve_fixed_point(etd_spec, *args)
        chain = induce_chain(prob.mdp, prob.target)
        optimal = best_approximation_error(prob.features, exact_value(chain), chain.stationary)
        rows.append({
            "p": p,
            "td_error": td_err,
            "etd_error": etd.error_dpi,
            "optimal_error": optimal,
            "etd_error_f": etd.error_f,
            "etd_cor1_bound_f": etd.cor1_bound_f,
            "td_error_l2": td_l2,
            "etd_error_l2": etd.error_l2,
            "td_condition": td_cond,
        })
    return rows


def beta_sweep(problem: Problem, beta_grid, config: SimConfig, lam=0.0, threads=None):
    return mse_sweep(problem.mdp, problem.behavior, problem.target, problem.features,
                     beta_grid, config, lam=lam, threads=threads)


def sweep_rows(result):
    rows = []
    for r in result.runs:
        rows.append({
            "beta": r.beta, "lambda": r.lam, "run": r.run, "seed": r.seed,
            "final_error": r.final_error, "tail_avg_error": r.tail_avg_error,
            "diverged": "true" if r.diverged else "false",
        })
    # aggregate rows: mean error, then its standard error; diverged holds the count
    for a in result.aggregates:
        rows.append({
            "beta": a.beta, "lambda": a.lam, "run": "mean", "seed": "",
            "final_error": a.mean_error, "tail_avg_error": a.mean_tail_error,
            "diverged": a.n_diverged,
        })
        rows.append({
            "beta": a.beta, "lambda": a.lam, "run": "stderr", "seed": "",
            "final_error": a.std_error, "tail_avg_error": "", "diverged": a.n_diverged,
        })
    return rows


def example1_report(epsilon=0.01, beta=0.9, gamma=0.9):
    """Quantities of the two-state tightness example for ``v = (0, 1)``."""
    prob = tightness_example(epsilon, gamma)
    d_mu = induce_chain(prob.mdp, prob.behavior).stationary
    P = induce_chain(prob.mdp, prob.target).transition
    f = emphatic.emphatic_f(d_mu, P, beta)
    v = np.array([0.0, 1.0])
    norm_v = weighted_norm(v, f) ** 2
    norm_Pv = weighted_norm(P @ v, f) ** 2
    ratio = gamma**2 * norm_Pv / norm_v
    k = emphatic.kappa(d_mu, f)
    report = {
        "epsilon": epsilon, "beta": beta, "gamma": gamma,
        "d_mu[0]": d_mu[0], "d_mu[1]": d_mu[1],
        "f[0]": f[0], "f[1]": f[1],
        "norm_v_f_sq": norm_v,
        "norm_v_f_sq_closed_form": (epsilon + beta - 2 * epsilon * beta) / (1 - beta),
        "norm_Pv_f_sq": norm_Pv,
        "norm_Pv_f_sq_closed_form": (1 - epsilon) ** 2 / (1 - beta),
        "ratio": ratio,
        "gamma_sq_over_beta": gamma**2 / beta,
        "relative_deviation": ratio / (gamma**2 / beta) - 1.0,
        "kappa": k,
    }
    if beta > 0:
        mod = emphatic.modulus_thm1(gamma, beta, k)
        spec = FixedPointSpec("etd-zero-beta", beta=beta)
        report["modulus_thm1"] = mod.value
        report["empirical_contraction_norm"] = empirical_contraction_norm(
            prob.mdp, prob.behavior, prob.target, prob.features, spec)
    return report


def example2_report(beta=0.6, gamma=0.9, checkpoints=EXAMPLE2_CHECKPOINTS, seed=0):
    """Follow-on trace moments for the uniform-behavior / always-Right example.

    Monte-Carlo running moments are taken over the steps after burn-in.
    """
    prob = infinite_variance_example(gamma)
    d_mu = induce_chain(prob.mdp, prob.behavior).stationary
    P = induce_chain(prob.mdp, prob.target).transition
    diag = emphatic.variance_diagnostics(prob.mdp, prob.behavior, prob.target, beta, d_mu, P)
    f = emphatic.emphatic_f(d_mu, P, beta)
    report = {
        "beta": beta,
        "closed_form_mean": 1 / (2 * (1 - beta)) if 2 * beta > 1 else "",
        "stationary_mean": float(f.sum()),
        "spectral_radius": diag.spectral_radius,
        "beta_sq_times_radius": beta**2 * diag.spectral_radius,
        "verdict": "finite" if diag.finite else "divergent",
        "avg_variance": diag.avg_variance,
        "variance_bound": diag.bound if diag.bound is not None else "inapplicable",
    }
    if diag.q is not None:
        report["q[0]"], report["q[1]"] = diag.q
    checkpoints = sorted(int(c) for c in checkpoints)
    traj = sample_trajectory(prob.mdp, prob.behavior, BURN_IN + checkpoints[-1], seed)
    F = followon_trace(traj, importance_ratios(prob.target, prob.behavior), beta)[BURN_IN:]
    left = traj.states[BURN_IN:-1] == 0
    report["left_states_all_one"] = "true" if np.all(F[left] == 1.0) else "false"
    mean_run = np.cumsum(F)
    sq_run = np.cumsum(F * F)
    for c in checkpoints:
        report[f"mc_mean@{c}"] = float(mean_run[c - 1] / c)
        report[f"mc_second_moment@{c}"] = float(sq_run[c - 1] / c)
    return report


def moduli_surface(gamma=0.99, lambda_grid=SURFACE_LAMBDAS, beta_grid=SURFACE_BETAS):
    betas = sorted(set(float(b) for b in beta_grid) | {float(gamma)})
    rows = []
    for lam in lambda_grid:
        for beta in betas:
            mod = emphatic.modulus_thm2(gamma, beta, lam)
            rows.append({
                "gamma": gamma, "lambda": lam, "beta": beta,
                "modulus": mod.value,
                "contraction": "true" if mod.is_contraction else "false",
            })
    return rows


def custom_report(problem: Problem, betas, lam=0.0):
    """Fixed-point bias table for standard TD and the ETD family on any problem."""
    specs = [FixedPointSpec("standard-td", lam=lam)]
    for beta in betas:
        if lam == 0:
            specs.append(FixedPointSpec("etd-zero-beta", beta=beta))
        else:
            specs.append(FixedPointSpec("etd-lambda-beta", beta=beta, lam=lam))
    rows = []
    for spec in specs:
        row = {"algorithm": spec.algorithm, "beta": spec.beta, "lambda": spec.lam}
        try:
            rep = solve_fixed_point(spec, problem.mdp, problem.behavior, problem.target, problem.features)
        except SingularSystem as exc:
            row.update(dict.fromkeys(
                ("error_w", "error_f", "error_dmu", "error_dpi", "error_l2"), math.inf))
            row.update(best_approx_error="", cor1_bound_w="", cor1_bound_dmu="", kappa="",
                       modulus="", condition=exc.condition)
            rows.append(row)
            continue
        row.update(
            error_w=rep.error_w, error_f=rep.error_f, error_dmu=rep.error_dmu,
            error_dpi=rep.error_dpi, error_l2=rep.error_l2, best_approx_error=rep.best_approx_error,
            cor1_bound_w=rep.cor1_bound_f, cor1_bound_dmu=rep.cor1_bound_dmu, kappa=rep.kappa,
            modulus=rep.modulus.value if rep.modulus else "", condition=rep.condition,
        )
        rows.append(row)
    return rows
