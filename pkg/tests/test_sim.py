import numpy as np
import pytest

from etd_lab import (
    FixedPointSpec,
    NumericalDivergence,
    Policy,
    SimConfig,
    TabularMdp,
    Trajectory,
    followon_stats,
    induce_chain,
    mse_sweep,
    run_etd0,
    run_etd_lambda,
    sample_trajectory,
    solve_fixed_point,
    weighted_norm,
)
from etd_lab.builtins import infinite_variance_example, kolter2
from etd_lab.emphatic import emphatic_f
from etd_lab.mdp import importance_ratios
from etd_lab.sim import followon_trace, run_seed

from conftest import random_mdp, random_policy


def mild_problem(rng, S=3, A=2, gamma=0.9, mix=0.3):
    mdp = random_mdp(rng, S, A, gamma=gamma)
    pi = random_policy(rng, S, A, floor=0.2)
    mu = Policy((1 - mix) * pi.probs + mix / A)
    return mdp, mu, pi


class TestSampling:
    def test_permutation_chain(self):
        perm = [2, 0, 3, 1]
        kernel = np.zeros((4, 1, 4))
        kernel[np.arange(4), 0, perm] = 1.0
        mdp = TabularMdp(kernel, np.zeros((4, 1)), 0.5)
        traj = sample_trajectory(mdp, Policy(np.ones((4, 1))), 12, seed=1, initial_state=0)
        s = 0
        for t, (st, a, r, nxt) in enumerate(traj):
            assert st == s and a == 0 and r == 0.0
            s = perm[s]
            assert nxt == s

    def test_state_frequencies(self):
        prob = infinite_variance_example()
        traj = sample_trajectory(prob.mdp, prob.behavior, 1_000_000, seed=2)
        freq = np.bincount(traj.states, minlength=2) / len(traj.states)
        assert np.allclose(freq, [0.5, 0.5], rtol=0.01)

    def test_seed_determinism(self, rng):
        mdp = random_mdp(rng, 4, 3)
        mu = random_policy(rng, 4, 3)
        a = sample_trajectory(mdp, mu, 500, seed=99)
        b = sample_trajectory(mdp, mu, 500, seed=99)
        c = sample_trajectory(mdp, mu, 500, seed=100)
        assert np.array_equal(a.states, b.states) and np.array_equal(a.actions, b.actions)
        assert not np.array_equal(a.actions, c.actions)

    def test_rewards_follow_state_action(self, rng):
        mdp = random_mdp(rng, 3, 2)
        traj = sample_trajectory(mdp, random_policy(rng, 3, 2), 50, seed=0)
        assert np.array_equal(traj.rewards, mdp.reward[traj.states[:-1], traj.actions])


class TestFollowOn:
    def test_recursion_replay(self, rng):
        mdp, mu, pi = mild_problem(rng)
        rho = importance_ratios(pi, mu)
        traj = sample_trajectory(mdp, mu, 5000, seed=4)
        F = followon_trace(traj, rho, 0.8)
        r = traj.ratios(rho)
        assert F[0] == 1.0
        assert np.array_equal(F[1:], 0.8 * r[:-1] * F[:-1] + 1.0)
        assert np.all(F >= 1.0)

    def test_beta_zero_is_constant(self, rng):
        mdp, mu, pi = mild_problem(rng)
        traj = sample_trajectory(mdp, mu, 1000, seed=4)
        assert np.all(followon_trace(traj, importance_ratios(pi, mu), 0.0) == 1.0)

    def test_example2_time_average(self):
        beta = 0.6
        prob = infinite_variance_example()
        traj = sample_trajectory(prob.mdp, prob.behavior, 1_000_000, seed=7)
        stats = followon_stats(traj, prob.behavior, prob.target, beta)
        # stationary mean is sum(f) = 1 / (1 - beta)
        assert stats.time_average == pytest.approx(1 / (1 - beta), rel=0.05)
        assert stats.mean[0] == 1.0 and stats.second_moment[0] == 1.0

    def test_example2_left_resets(self):
        prob = infinite_variance_example()
        traj = sample_trajectory(prob.mdp, prob.behavior, 10_000, seed=8)
        F = followon_trace(traj, importance_ratios(prob.target, prob.behavior), 0.9)
        left = traj.states[:-1] == 0
        assert np.all(F[left] == 1.0)

    def test_conditional_mean_matches_emphatic_weights(self, rng):
        mdp, mu, pi = mild_problem(rng, S=4, A=3)
        beta = 0.5
        traj = sample_trajectory(mdp, mu, 1_000_000, seed=9)
        stats = followon_stats(traj, mu, pi, beta)
        d_mu = induce_chain(mdp, mu).stationary
        f = emphatic_f(d_mu, induce_chain(mdp, pi).transition, beta)
        assert np.allclose(stats.mean, f / d_mu, rtol=0.05)
        assert np.all(stats.second_moment >= stats.mean**2)


class TestEtd0:
    def test_zero_step_size(self, rng):
        mdp, mu, pi = mild_problem(rng)
        traj = sample_trajectory(mdp, mu, 200, seed=0)
        theta0 = rng.standard_normal(3)
        res = run_etd0(traj, importance_ratios(pi, mu), np.eye(3), mdp.gamma, 0.9,
                       SimConfig(alpha=0.0, n_steps=200, theta0=theta0))
        assert np.array_equal(res.theta, theta0)

    def test_matches_etd_fixed_point(self, rng):
        mdp, mu, pi = mild_problem(rng, gamma=0.8)
        beta = mdp.gamma
        traj = sample_trajectory(mdp, mu, 400_000, seed=12)
        res = run_etd0(traj, importance_ratios(pi, mu), np.eye(3), mdp.gamma, beta,
                       SimConfig(alpha=0.002, n_steps=400_000))
        exact = solve_fixed_point(FixedPointSpec("etd-zero-beta", beta=beta), mdp, mu, pi, np.eye(3))
        d_pi = induce_chain(mdp, pi).stationary
        gap = weighted_norm(res.theta_tail_avg - exact.values, d_pi)
        assert gap <= 0.02 * weighted_norm(exact.values, d_pi)

    def test_on_policy_td0(self, rng):
        mdp = random_mdp(rng, 4, 2, gamma=0.8)
        pi = random_policy(rng, 4, 2)
        Phi = rng.standard_normal((4, 2))
        traj = sample_trajectory(mdp, pi, 400_000, seed=13)
        res = run_etd0(traj, importance_ratios(pi, pi), Phi, mdp.gamma, 0.0,
                       SimConfig(alpha=0.002, n_steps=400_000))
        exact = solve_fixed_point(FixedPointSpec("standard-td"), mdp, pi, pi, Phi)
        d_pi = induce_chain(mdp, pi).stationary
        gap = weighted_norm(Phi @ res.theta_tail_avg - exact.values, d_pi)
        assert gap <= 0.02 * weighted_norm(exact.values, d_pi)

    def test_divergence_flag(self, rng):
        mdp, mu, pi = mild_problem(rng)
        traj = sample_trajectory(mdp, mu, 10_000, seed=0)
        with pytest.raises(NumericalDivergence) as exc:
            run_etd0(traj, importance_ratios(pi, mu), 50 * np.eye(3), mdp.gamma, 0.9,
                     SimConfig(alpha=1.0, n_steps=10_000))
        assert exc.value.step > 0

    def test_error_shrinks_with_step_size(self, rng):
        mdp, mu, pi = mild_problem(rng, S=4, A=2, gamma=0.9)
        rho = importance_ratios(pi, mu)
        exact = solve_fixed_point(FixedPointSpec("etd-zero-beta", beta=0.9), mdp, mu, pi, np.eye(4))
        d_pi = induce_chain(mdp, pi).stationary
        gaps = []
        for alpha in (1e-2, 1e-3):
            traj = sample_trajectory(mdp, mu, 500_000, seed=21)
            res = run_etd0(traj, rho, np.eye(4), mdp.gamma, 0.9, SimConfig(alpha=alpha, n_steps=500_000))
            gaps.append(weighted_norm(res.theta_tail_avg - exact.values, d_pi))
        assert gaps[1] < gaps[0]


class TestEtdLambda:
    def test_lambda_zero_matches_etd0_per_step(self, rng):
        mdp, mu, pi = mild_problem(rng, S=4, A=3)
        rho = importance_ratios(pi, mu)
        Phi = rng.standard_normal((4, 2))
        traj = sample_trajectory(mdp, mu, 5000, seed=3)
        cfg = SimConfig(alpha=0.01, n_steps=5000)
        a = run_etd0(traj, rho, Phi, mdp.gamma, 0.7, cfg, record=True)
        b = run_etd_lambda(traj, rho, Phi, mdp.gamma, 0.0, 0.7, cfg, record=True)
        assert np.max(np.abs(a.history - b.history)) <= 1e-12

    def test_zero_ratio_resets_trace(self):
        prob = infinite_variance_example()
        rho = importance_ratios(prob.target, prob.behavior)
        # one step: Right -> Right (rho = 2), then Right -> Left (rho = 0)
        traj = Trajectory(np.array([1, 1, 0]), np.array([1, 0]), np.array([1.0, 1.0]))
        res = run_etd_lambda(traj, rho, np.eye(2), 0.9, 0.8, 0.9, SimConfig(alpha=0.1, n_steps=2))
        assert np.array_equal(res.state.e, [0.0, 0.0])

    def test_lambda_one_emphasis(self, rng):
        mdp, mu, pi = mild_problem(rng)
        traj = sample_trajectory(mdp, mu, 300, seed=1)
        res = run_etd_lambda(traj, importance_ratios(pi, mu), np.eye(3), mdp.gamma, 1.0, 0.9,
                             SimConfig(alpha=0.01, n_steps=300))
        assert res.state.M == 1.0
        assert res.state.F > 1.0

    def test_matches_lambda_fixed_point(self, rng):
        mdp, mu, pi = mild_problem(rng, gamma=0.8)
        beta, lam = mdp.gamma, 0.5
        traj = sample_trajectory(mdp, mu, 400_000, seed=14)
        res = run_etd_lambda(traj, importance_ratios(pi, mu), np.eye(3), mdp.gamma, lam, beta,
                             SimConfig(alpha=0.002, n_steps=400_000))
        exact = solve_fixed_point(FixedPointSpec("etd-lambda-beta", beta=beta, lam=lam), mdp, mu, pi, np.eye(3))
        d_pi = induce_chain(mdp, pi).stationary
        gap = weighted_norm(res.theta_tail_avg - exact.values, d_pi)
        assert gap <= 0.05 * weighted_norm(exact.values, d_pi)


class TestSweep:
    def setup_method(self):
        self.prob = kolter2(0.9, 0.2, 0.95)

    def sweep(self, runs, threads, seed=5):
        p = self.prob
        return mse_sweep(p.mdp, p.behavior, p.target, p.features, [0.3, 0.6],
                         SimConfig(alpha=0.001, n_steps=2000, n_runs=runs, seed=seed), threads=threads)

    def test_repeatable(self):
        assert self.sweep(1, 1) == self.sweep(1, 1)

    def test_thread_count_does_not_matter(self):
        assert self.sweep(6, 1) == self.sweep(6, 3)

    def test_records(self):
        res = self.sweep(4, 1)
        assert len(res.runs) == 8 and len(res.aggregates) == 2
        assert [r.seed for r in res.runs[:4]] == [run_seed(5, i) for i in range(4)]
        agg = res.aggregates[0]
        errs = [r.final_error for r in res.runs if r.beta == agg.beta]
        assert agg.mean_error == pytest.approx(np.mean(errs))
        assert agg.std_error == pytest.approx(np.std(errs, ddof=1) / 2)

    def test_divergence_is_counted(self):
        p = self.prob
        res = mse_sweep(p.mdp, p.behavior, p.target, 30 * p.features, [0.9],
                        SimConfig(alpha=0.5, n_steps=3000, n_runs=3, seed=0), threads=1)
        assert res.aggregates[0].n_diverged == 3
        assert all(r.diverged for r in res.runs)
