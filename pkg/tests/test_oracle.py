import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from interventionlab import oracle
from interventionlab.causal import LinearCausalModel, SolverConfig, fit_causal_model, lasso_cd
from interventionlab.checks import fit_aliased, fit_two_path, realizable_chain
from interventionlab.envs import DeterministicMdp, TwoPathMdp, TwoPathMdpConfig
from interventionlab.rl import UniformRandom, collect_rollouts

probs = st.floats(0.0, 1.0)


class TestAliasedClosedForm:
    @pytest.mark.parametrize("p, w2, w3, loss", [(0.0, 0.0, 1.0, 0.0), (0.5, 0.5, 0.5, 0.5), (1.0, 1.0, 0.0, 0.0),
                                                 (0.3, 0.3, 0.7, 0.42)])
    def test_optimal_values(self, p, w2, w3, loss):
        sol = oracle.fig3_optimal(p)
        assert (sol.w2, sol.w3) == pytest.approx((w2, w3))
        assert sol.loss_per_visit == pytest.approx(loss)

    @given(probs)
    def test_optimum_is_stationary(self, p):
        sol = oracle.fig3_optimal(p)
        base = oracle.fig3_loss(sol.w2, sol.w3, p)
        assert base == pytest.approx(sol.loss_per_visit, abs=1e-12)
        for d2, d3 in ((1e-3, 0), (-1e-3, 0), (0, 1e-3), (0, -1e-3)):
            assert oracle.fig3_loss(sol.w2 + d2, sol.w3 + d3, p) >= base

    def test_minimax(self):
        grid = oracle.fig3_minimax_grid(0.01)
        exact = oracle.fig3_minimax()
        assert abs(grid.w2 - exact.w2) <= 0.01 and abs(grid.w3 - exact.w3) <= 0.01
        assert abs(grid.loss_per_visit - exact.loss_per_visit) <= 0.01

    def test_minimax_worst_case_is_flat(self):
        # at (0.5, 0.5) the loss does not depend on p
        assert all(oracle.fig3_loss(0.5, 0.5, p) == pytest.approx(0.5) for p in np.linspace(0, 1, 11))

    @pytest.mark.parametrize("p", [0.2, 0.7])
    def test_loss_matches_monte_carlo(self, p):
        rng = np.random.default_rng(0)
        to_o2 = rng.random(200_000) < p
        w2, w3 = 0.4, 0.9
        err = np.where(to_o2, (1 - w2) ** 2 + w3**2, w2**2 + (1 - w3) ** 2)
        assert err.mean() == pytest.approx(oracle.fig3_loss(w2, w3, p), abs=0.01)

    def test_rejects_bad_p(self):
        with pytest.raises(ValueError):
            oracle.fig3_optimal(1.2)


class TestTwoPathClosedForm:
    @pytest.mark.parametrize("p, q, w1", [(0.1, 0.0, 0.0), (0.1, 1.0, 1.0), (0.001, 0.1, 0.1 / (0.001 + 0.1 - 0.0001))])
    def test_f1_weight(self, p, q, w1):
        assert oracle.fig5_optimal(p, q).w1 == pytest.approx(w1)

    @given(st.floats(0.01, 0.99), probs)
    def test_optimum_is_stationary(self, p, q):
        sol = oracle.fig5_optimal(p, q)
        base = oracle.fig5_loss(sol.w1, sol.w2, p, q)
        for d1, d2 in ((1e-3, 0), (-1e-3, 0), (0, 1e-3), (0, -1e-3)):
            assert oracle.fig5_loss(sol.w1 + d1, sol.w2 + d2, p, q) >= base - 1e-12

    @given(st.floats(0.01, 0.99), probs, probs)
    def test_f1_weight_monotone_in_arrival(self, p, q1, q2):
        lo, hi = sorted((q1, q2))
        assert oracle.fig5_optimal(p, lo).w1 <= oracle.fig5_optimal(p, hi).w1 + 1e-12

    def test_minimax_relies_on_f1(self):
        sol = oracle.fig5_minimax(0.1)
        assert sol.minimax_choice is oracle.MinimaxChoice.RELY_ON_F1
        assert max(oracle.fig5_loss(1.0, 0.0, 0.1, q) for q in np.linspace(0, 1, 11)) == pytest.approx(0.1)

    def test_loss_matches_monte_carlo(self):
        rng = np.random.default_rng(1)
        p, q, w1, w2 = 0.2, 0.6, 0.7, 0.3
        n = 200_000
        at_b = rng.random(n) < q
        xi = (rng.random(n) >= p).astype(float)
        f2 = (~at_b).astype(float)
        err = (1 - w1 * xi - w2 * f2) ** 2
        assert err.mean() == pytest.approx(oracle.fig5_loss(w1, w2, p, q), abs=0.01)

    def test_undetermined(self):
        with pytest.raises(ValueError):
            oracle.fig5_optimal(0.0, 0.0)


class TestBruteForce:
    def test_identity_design(self):
        X = np.eye(2)
        w = oracle.brute_force_lasso(X, np.array([1.0, 0.0]), 1e-9)
        assert np.allclose(w, [1.0, 0.0], atol=1e-4)

    def test_large_penalty_gives_zero(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(30, 3))
        assert np.allclose(oracle.brute_force_lasso(X, X @ [1.0, -1.0, 0.5], 100.0), 0.0)

    def test_refuses_more_than_four_features(self):
        with pytest.raises(ValueError):
            oracle.brute_force_lasso(np.zeros((3, 5)), np.zeros(3), 0.1)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 3), st.floats(0.001, 0.5))
    def test_agrees_with_coordinate_descent(self, seed, f, lam):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(25, f))
        y = X @ rng.uniform(-1.5, 1.5, size=f) + 0.3 * rng.normal(size=25)
        w_cd = lasso_cd(X.T @ X / 25, (y @ X / 25)[None, :], lam, tol=1e-12)[0]
        if np.max(np.abs(w_cd)) < 2.9:
            assert np.allclose(oracle.brute_force_lasso(X, y, lam), w_cd, atol=1e-3)


class TestRealizable:
    def test_true_weights_pass_every_policy(self):
        env = DeterministicMdp.chain(4)
        W, b = env.true_weights()
        model = LinearCausalModel(W, b, 0.0, env.feature_spec.names)
        policies = list(oracle.deterministic_policies(env.n_states, env.n_actions))
        assert len(policies) == 16
        assert oracle.realizable_check(env, model, policies, rows=env.state_rows)

    def test_fitted_model_realizable_on_chain(self):
        ok, worst, n_policies = realizable_chain(4, n_episodes=2000)
        assert ok and worst < 1e-6 and n_policies == 16

    def test_missing_transition_fails(self):
        env = DeterministicMdp.chain(4)
        W, b = env.true_weights()
        W[:, env.n_states] = 0.0  # forget where (s0, a1) leads
        model = LinearCausalModel(W, b, 0.0, env.feature_spec.names)
        policies = list(oracle.deterministic_policies(env.n_states, env.n_actions))
        assert not oracle.realizable_check(env, model, policies, rows=env.state_rows)

    def test_fitted_model_of_random_data_reproduces_state_rows(self):
        env = DeterministicMdp.chain(4)
        eps = collect_rollouts(env, UniformRandom(2), 500, seed=2)
        cfg = SolverConfig(standardize=False, fit_intercept=True, include_initial=True, tol=1e-13)
        model = fit_causal_model(eps, 1e-9, cfg)
        for ep in eps[:20]:
            x = ep.features[:-1]
            assert np.allclose((x @ model.W.T + model.b)[:, env.state_rows], ep.features[1:, env.state_rows], atol=1e-4)


class TestSimulatedFits:
    @pytest.mark.parametrize("p", [0.0, 0.3, 0.5, 1.0])
    def test_aliased_fit(self, p):
        fit = fit_aliased(p, n_episodes=4000, seed=1)
        ref = oracle.fig3_optimal(p)
        assert abs(fit.w2 - ref.w2) < 0.05 and abs(fit.w3 - ref.w3) < 0.05
        assert abs(fit.loss_per_visit - ref.loss_per_visit) < 0.03

    def test_rare_path_f1_weight_near_one(self):
        env = TwoPathMdp(TwoPathMdpConfig(n=3, p=0.001))
        assert env.uniform_arrival_probability() > 2 * 0.001
        w1, _ = fit_two_path(0.001, None, n=3, n_episodes=10_000, seed=0)
        assert w1 > 0.9

    @pytest.mark.parametrize("q", [0.0, 1.0])
    def test_two_path_extremes(self, q):
        w1, _ = fit_two_path(0.1, q, n_episodes=4000, seed=0)
        assert abs(w1 - oracle.fig5_optimal(0.1, q).w1) < 0.05
