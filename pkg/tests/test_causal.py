import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from interventionlab import oracle
from interventionlab.causal import (
    CausalGraph,
    EdgeUncertainty,
    Episode,
    HistoryBuffer,
    LinearCausalModel,
    SolverConfig,
    cosine_similarity,
    edge_uncertainty,
    ensemble_fit,
    evaluate_loss,
    fit_causal_model,
    lasso_cd,
    predict,
    step_errors,
    threshold_graph,
)
from interventionlab.checks import TABULAR_SOLVER, fit_two_path
from interventionlab.envs import AliasedMdp, TwoPathMdp, TwoPathMdpConfig
from interventionlab.rl import ParametricP, UniformRandom, collect_rollouts

RAW = SolverConfig(standardize=False, fit_intercept=False, tol=1e-12)


def ep(features, tag="t"):
    features = np.asarray(features, dtype=float)
    return Episode(features, np.zeros(len(features), dtype=int), np.zeros(len(features)), tag)


def linear_episodes(W, b, n_eps, T, rng, noise=0.0):
    out = []
    for _ in range(n_eps):
        x = rng.normal(size=len(b))
        rows = [x]
        for _ in range(T - 1):
            x = W @ x + b + noise * rng.normal(size=len(b))
            rows.append(x)
        out.append(ep(rows))
    return out


def graph(adj):
    adj = np.asarray(adj, dtype=bool)
    return CausalGraph(adj, adj.astype(int), adj.astype(float), 0.0)


class TestEpisodeAndBuffer:
    def test_episode_needs_a_step(self):
        with pytest.raises(ValueError):
            Episode(np.zeros((0, 3)), [], [])

    def test_fifo_eviction(self):
        buf = HistoryBuffer(3)
        eps = [ep([[k, 0.0]], tag=str(k)) for k in range(5)]
        buf.extend(eps)
        assert len(buf) == 3 and [e.policy_tag for e in buf] == ["2", "3", "4"]

    def test_dimension_mismatch(self):
        buf = HistoryBuffer(3, [ep([[0.0, 1.0]])])
        with pytest.raises(ValueError):
            buf.add(ep([[0.0, 1.0, 2.0]]))

    def test_capacity_positive(self):
        with pytest.raises(ValueError):
            HistoryBuffer(0)


class TestFit:
    def test_identity_dynamics(self, rng):
        eps = [ep(np.tile(rng.normal(size=3), (6, 1)) + 0.0) for _ in range(40)]
        # identical consecutive rows: f_t = f_{t-1}
        model = fit_causal_model(eps, 0.0, SolverConfig(tol=1e-12))
        assert np.allclose(model.W, np.eye(3), atol=1e-6)
        assert np.allclose(model.b, 0, atol=1e-6)

    def test_recovers_sparse_linear_system(self, rng):
        W = np.array([[0.5, 0.0, 0.0], [0.8, 0.3, 0.0], [0.0, -0.6, 0.2]])
        b = np.array([1.0, 0.0, -0.5])
        eps = linear_episodes(W, b, 200, 10, rng, noise=0.3)
        model = fit_causal_model(eps, 1e-4, SolverConfig(standardize=False))
        assert np.allclose(model.W, W, atol=0.05)
        assert np.allclose(model.b, b, atol=0.1)

    def test_aliased_policy_dependence(self):
        env = AliasedMdp()
        eps = collect_rollouts(env, ParametricP(0.3, env), 10_000, seed=3)
        model = fit_causal_model(eps, 1e-4, TABULAR_SOLVER)
        assert abs(model.W[2, 1] - 0.3) < 0.05 and abs(model.W[3, 1] - 0.7) < 0.05

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(60, 4))
        y = X @ np.array([1.0, 0.0, -0.5, 0.2]) + 0.3 * rng.normal(size=60)
        gram, cross = X.T @ X / 60, (X.T @ y / 60)[None, :]
        w = lasso_cd(gram, cross, 0.1, tol=1e-12)[0]
        assert np.allclose(w, oracle.brute_force_lasso(X, y, 0.1), atol=1e-3)

    def test_errors(self):
        with pytest.raises(ValueError):
            fit_causal_model([], 0.1)
        with pytest.raises(ValueError):
            fit_causal_model([ep([[1.0, 2.0]]), ep([[1.0, 2.0, 3.0]])], 0.1)
        with pytest.raises(ValueError):
            fit_causal_model([ep([[1.0, 2.0]])], 0.1)
        with pytest.raises(ValueError):
            fit_causal_model([ep([[1.0], [2.0]])], -1.0)

    def test_lambda_monotone(self, rng):
        W = rng.normal(scale=0.4, size=(4, 4))
        eps = linear_episodes(W, np.zeros(4), 30, 8, rng, noise=0.5)
        norms = [np.abs(fit_causal_model(eps, lam, RAW).W).sum() for lam in (0.0, 0.01, 0.05, 0.2, 1.0, 1e4)]
        assert all(a >= b - 1e-9 for a, b in zip(norms, norms[1:]))
        assert norms[-1] == 0.0

    def test_deterministic(self, rng):
        eps = linear_episodes(np.eye(3) * 0.5, np.ones(3), 20, 5, rng, noise=1.0)
        a, b = fit_causal_model(eps, 0.05), fit_causal_model(eps, 0.05)
        assert np.array_equal(a.W, b.W) and np.array_equal(a.b, b.b)

    def test_buffer_input(self, rng):
        eps = linear_episodes(np.eye(2) * 0.5, np.ones(2), 10, 5, rng, noise=1.0)
        a = fit_causal_model(HistoryBuffer(100, eps), 0.05)
        b = fit_causal_model(eps, 0.05)
        assert np.array_equal(a.W, b.W)

    def test_include_initial_fits_start(self):
        eps = [ep([[1.0, 0.0], [0.0, 1.0]]) for _ in range(5)]
        model = fit_causal_model(eps, 0.0, SolverConfig(standardize=False, include_initial=True, tol=1e-14))
        assert evaluate_loss(model, eps) < 1e-10


class TestPredictLoss:
    def test_constant_and_identity(self, rng):
        f = rng.normal(size=4)
        c = rng.normal(size=4)
        assert np.allclose(predict(LinearCausalModel(np.zeros((4, 4)), c), f), c)
        assert np.allclose(predict(LinearCausalModel(np.eye(4), np.zeros(4)), f), f)

    @settings(max_examples=30, deadline=None)
    @given(arrays(float, (3, 3), elements=st.floats(-5, 5)), arrays(float, 3, elements=st.floats(-5, 5)),
           arrays(float, 3, elements=st.floats(-5, 5)))
    def test_predict_matches_dot_products(self, W, b, f):
        out = predict(LinearCausalModel(W, b), f)
        naive = [sum(W[i, j] * f[j] for j in range(3)) + b[i] for i in range(3)]
        assert np.allclose(out, naive)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            predict(LinearCausalModel(np.eye(2), np.zeros(2)), np.zeros(3))
        with pytest.raises(ValueError):
            LinearCausalModel(np.eye(2), np.zeros(3))
        with pytest.raises(ValueError):
            LinearCausalModel(np.full((2, 2), np.nan), np.zeros(2))

    def test_perfect_model_zero_loss(self):
        # swap dynamics, step 0 predicted by b
        model = LinearCausalModel(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([0.0, 0.0]))
        eps = [ep([[0, 0], [0, 0]]), ep([[0, 0]])]
        assert evaluate_loss(model, eps) == 0.0
        model = LinearCausalModel(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([1.0, 2.0]))
        assert evaluate_loss(model, [ep([[1, 2], [3, 3], [4, 5]])]) == 0.0

    def test_loss_formula(self, rng):
        model = LinearCausalModel(rng.normal(size=(3, 3)), rng.normal(size=3))
        eps = [ep(rng.normal(size=(T, 3))) for T in (1, 4, 7)]
        total = 0.0
        for e in eps:
            f = e.features
            total += np.sum((f[0] - model.b) ** 2)
            for t in range(1, len(f)):
                total += np.sum((f[t] - model.W @ f[t - 1] - model.b) ** 2)
        assert evaluate_loss(model, eps) == pytest.approx(total / 3, rel=1e-12)
        assert step_errors(model, eps[1]).shape == (4, 3)
        assert step_errors(model, eps[1], include_initial=False).shape == (3, 3)

    def test_nonnegative(self, rng):
        for _ in range(20):
            model = LinearCausalModel(rng.normal(size=(2, 2)), rng.normal(size=2))
            assert evaluate_loss(model, [ep(rng.normal(size=(5, 2)))]) >= 0

    def test_empty(self):
        with pytest.raises(ValueError):
            evaluate_loss(LinearCausalModel(np.eye(2), np.zeros(2)), [])

    def test_aliased_minimax_weights_half_loss(self):
        env = AliasedMdp()
        W = np.zeros((6, 6))
        W[2, 1] = W[3, 1] = 0.5
        W[1, 0] = 1.0
        model = LinearCausalModel(W, np.zeros(6))
        for p in (0.0, 0.4, 1.0):
            eps = collect_rollouts(env, ParametricP(p, env), 200, seed=1)
            assert evaluate_loss(model, eps, rows=[2, 3]) == pytest.approx(0.5)

    def test_aliased_optimal_loss(self):
        env = AliasedMdp()
        W = np.zeros((6, 6))
        W[2, 1] = W[3, 1] = 0.5
        model = LinearCausalModel(W, np.zeros(6))
        eps = collect_rollouts(env, ParametricP(0.5, env), 10_000, seed=2)
        assert evaluate_loss(model, eps, rows=[2, 3]) == pytest.approx(0.5, abs=0.01)

    def test_estimate_spread_shrinks(self):
        env = AliasedMdp()
        W = np.zeros((6, 6))
        W[2, 1] = 1.0
        model = LinearCausalModel(W, np.zeros(6))
        policy = ParametricP(0.5, env)
        spreads = []
        for E in (10, 100, 1000):
            est = [evaluate_loss(model, collect_rollouts(env, policy, E, seed=s), rows=[2, 3]) for s in range(30)]
            spreads.append(np.std(est))
        assert spreads[0] > spreads[1] > spreads[2]
        assert spreads[0] / spreads[2] == pytest.approx(10, rel=0.5)


class TestThreshold:
    def test_rules(self):
        W = np.array([[0.4, -0.05], [-0.3, 0.0]])
        model = LinearCausalModel(W, np.zeros(2))
        g = threshold_graph(model, 0.1)
        assert g.adjacency.tolist() == [[True, False], [True, False]]
        assert g.sign.tolist() == [[1, 0], [-1, 0]]
        assert threshold_graph(model, 0.0).adjacency.tolist() == [[True, True], [True, False]]
        assert threshold_graph(model, np.inf).n_edges == 0
        with pytest.raises(ValueError):
            threshold_graph(model, -1)

    @settings(max_examples=30, deadline=None)
    @given(arrays(float, (4, 4), elements=st.floats(-3, 3)), st.floats(0, 2))
    def test_invariants_and_idempotence(self, W, tau):
        model = LinearCausalModel(W, np.zeros(4))
        g = threshold_graph(model, tau)
        assert np.array_equal(g.adjacency, np.abs(W) > tau)
        assert np.array_equal(g.sign[g.adjacency], np.sign(W[g.adjacency]).astype(int))
        assert np.all(g.sign[~g.adjacency] == 0)
        assert threshold_graph(model, tau) == g

    def test_graph_queries(self):
        g = CausalGraph(np.array([[True, True], [False, False]]), np.array([[1, -1], [0, 0]]), np.eye(2), 0.1,
                        ("x", "y"))
        assert g.edges() == [(0, 0), (0, 1)]
        assert g.has_edge("y", "x") and not g.has_edge("x", "y")
        assert g.parents("x") == ["x", "y"]
        assert CausalGraph.from_dict(g.to_dict()) == g


class TestEnsemble:
    def test_identity_data_zero_variance(self):
        eps = [ep(np.tile([1.0, 2.0], (4, 1)) * k) for k in range(1, 9)]
        models = ensemble_fit(eps, 5, 0.5, lam=0.0, seed=0, solver_config=SolverConfig(tol=1e-14))
        unc = edge_uncertainty(models)
        assert unc.ensemble_size == 5 and np.allclose(unc.variance, 0, atol=1e-12)

    def test_full_fraction_identical(self, rng):
        eps = linear_episodes(np.eye(2) * 0.3, np.ones(2), 10, 5, rng, noise=1.0)
        a, b = ensemble_fit(eps, 2, 1.0, 0.01, seed=4)
        assert np.array_equal(a.W, b.W)

    def test_deterministic_given_seed(self, rng):
        eps = linear_episodes(np.eye(2) * 0.3, np.ones(2), 20, 5, rng, noise=1.0)
        a = ensemble_fit(eps, 3, 0.5, 0.01, seed=4)
        b = ensemble_fit(eps, 3, 0.5, 0.01, seed=4)
        assert all(np.array_equal(x.W, y.W) for x, y in zip(a, b))

    def test_errors(self, rng):
        eps = linear_episodes(np.eye(2), np.zeros(2), 3, 3, rng)
        for kwargs in (dict(S=1, subset_fraction=0.5), dict(S=2, subset_fraction=0.0), dict(S=2, subset_fraction=1.5)):
            with pytest.raises(ValueError):
                ensemble_fit(eps, **kwargs)
        with pytest.raises(ValueError):
            edge_uncertainty([LinearCausalModel(np.eye(2), np.zeros(2))])

    def test_two_point_variance(self):
        a = LinearCausalModel(np.zeros((3, 3)), np.zeros(3))
        W = np.zeros((3, 3))
        W[1, 2] = 0.6
        v = edge_uncertainty([a, LinearCausalModel(W, np.zeros(3))]).variance
        expected = np.zeros((3, 3))
        expected[1, 2] = 0.36 / 2
        assert np.allclose(v, expected)

    def test_matches_naive_variance(self, rng):
        models = [LinearCausalModel(rng.normal(size=(3, 3)), np.zeros(3)) for _ in range(5)]
        v = edge_uncertainty(models).variance
        for i in range(3):
            for j in range(3):
                vals = [m.W[i, j] for m in models]
                mean = sum(vals) / 5
                assert v[i, j] == pytest.approx(sum((x - mean) ** 2 for x in vals) / 4)

    def test_rare_path_weight_more_uncertain(self):
        # s_B is rarely visited, so f1's weight on R varies more across subsets than f2's.
        # With a noisy xi the frequent s_C visits pin f2's weight on their own.
        higher = 0
        for run in range(20):
            env = TwoPathMdp(TwoPathMdpConfig(n=3, p=0.5, seed=run))
            eps = collect_rollouts(env, UniformRandom(2), 300, seed=run)
            models = ensemble_fit(eps, 5, 0.5, 1e-4, seed=run, solver_config=TABULAR_SOLVER)
            v = edge_uncertainty(models).variance
            higher += v[2, 0] > v[2, 1]
        assert higher >= 17


class TestCosine:
    def test_examples(self):
        truth = np.zeros((4, 4), dtype=bool)
        truth[[0, 1, 2, 3], [0, 1, 2, 3]] = True
        extra = truth.copy()
        extra[[0, 1, 2, 3], [1, 2, 3, 0]] = True
        assert cosine_similarity(graph(truth), graph(truth)) == 1.0
        assert cosine_similarity(graph(extra), graph(truth)) == pytest.approx(4 / np.sqrt(32))
        assert cosine_similarity(graph(extra & ~truth), graph(truth)) == 0.0
        assert cosine_similarity(graph(np.zeros((4, 4))), graph(truth)) == 0.0

    def test_rows(self):
        a = np.array([[1, 0], [1, 1]], dtype=bool)
        b = np.array([[1, 0], [0, 0]], dtype=bool)
        assert cosine_similarity(graph(a), graph(b), rows=[0]) == 1.0
        assert cosine_similarity(graph(a), graph(b)) < 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            cosine_similarity(graph(np.eye(2)), graph(np.eye(3)))

    @settings(max_examples=50, deadline=None)
    @given(arrays(bool, (3, 3)), arrays(bool, (3, 3)))
    def test_range_and_symmetry(self, a, b):
        s = cosine_similarity(graph(a), graph(b))
        assert 0.0 <= s <= 1.0
        assert s == pytest.approx(cosine_similarity(graph(b), graph(a)))


def test_two_path_fit_smoke():
    w1, w2 = fit_two_path(0.1, 1.0, n_episodes=500)
    assert abs(w1 - 1.0) < 0.05
