"""Adaptive-split machinery: rewards, stopping rules, envelopes, assembly."""

import itertools

import numpy as np
import pytest
from scipy.special import expit

from pradas import (Dataset, MirrorKind, ModelKind, SlabKind, SlabSpec, SpikeSlabPrior,
                    StoppingDecision, StoppingTree, adms_snell, adms_threshold,
                    assemble_adaptive_mirror, bayes_optimal, chain_envelope,
                    make_split_plan, normal_means_posterior, reward_path,
                    simulate_chain_path, snell_exact, split_at)
from pradas.adms import RewardPath
from pradas.errors import InvalidThresholdError, TreeTooLargeError


def _nm_spec_data(p0, mu0, tau2, n=20, p=60, d=5, seed=0, kind=SlabKind.GAUSSIAN):
    rng = np.random.default_rng(seed)
    prior = SpikeSlabPrior(p0, SlabSpec(kind, mu0, tau2))
    signal = rng.random(p) >= p0
    mu = np.zeros((p, d))
    idx = np.flatnonzero(signal)
    if idx.size and kind is not SlabKind.POINT_MASS:
        mu[idx] = mu0 + np.sqrt(tau2) * rng.standard_normal((idx.size, d))
    elif idx.size:
        mu[idx] = mu0
    y = mu[None] + rng.standard_normal((n, p, d))
    return Dataset(ModelKind.NORMAL_MEANS, y), prior


RATIOS = [0.1, 0.25, 0.5, 0.75]


class TestRewardPath:
    def test_all_spike_posterior_rewards_half(self):
        data, _ = _nm_spec_data(0.5, 0.4, 0.01, p=10)
        prior = SpikeSlabPrior(1.0, SlabSpec(SlabKind.GAUSSIAN, 0.4, 0.01))
        plan = make_split_plan(data.n, RATIOS, seed=1)
        path = reward_path(data, plan, prior, k_pred=50, seed=2)
        assert np.all(path.rewards == 0.5)  # sigmoid(0) exactly

    def test_rewards_in_open_interval(self):
        data, prior = _nm_spec_data(0.7, 0.4, 0.01)
        plan = make_split_plan(data.n, RATIOS, seed=1)
        path = reward_path(data, plan, prior, k_pred=50, seed=2)
        assert np.all(path.rewards >= 0.5) and np.all(path.rewards < 1.0)

    def test_point_slab_reward_monotone_in_signal(self):
        # all-signal point slab: reward approaches 1 as the location grows
        rewards = []
        for mu0 in (0.05, 0.3, 1.5):
            data, _ = _nm_spec_data(0.0, mu0, 0.0, p=8, d=1,
                                    kind=SlabKind.POINT_MASS, seed=3)
            prior = SpikeSlabPrior(0.0, SlabSpec(SlabKind.POINT_MASS, mu0))
            plan = make_split_plan(data.n, [0.5], seed=4)
            path = reward_path(data, plan, prior, k_pred=400, seed=5)
            rewards.append(path.rewards.mean())
        assert rewards[0] < rewards[1] < rewards[2]
        assert rewards[2] > 0.999

    def test_seed_reproducibility(self):
        data, prior = _nm_spec_data(0.7, 0.4, 0.01, p=30)
        plan = make_split_plan(data.n, RATIOS, seed=1)
        a = reward_path(data, plan, prior, k_pred=40, seed=9)
        b = reward_path(data, plan, prior, k_pred=40, seed=9)
        assert np.array_equal(a.rewards, b.rewards)
        assert np.array_equal(a.state, b.state)


class TestAdmsThreshold:
    def _path(self, rewards):
        rewards = np.asarray(rewards, dtype=float)
        T, p = rewards.shape
        return RewardPath(rewards=rewards, state=np.zeros((T, p, 3)),
                          ratios=tuple(np.linspace(0.1, 0.8, T)), k_pred=1, seed=0)

    def test_never_crossing_stops_at_last(self):
        path = self._path(np.full((4, 3), 0.5))
        dec = adms_threshold(path, 0.7)
        assert np.all(dec.tau == 3)

    def test_immediate_crossing(self):
        path = self._path([[0.9, 0.55], [0.6, 0.85]])
        dec = adms_threshold(path, 0.8)
        assert dec.tau.tolist() == [0, 1]

    def test_boundary_sweep(self):
        rng = np.random.default_rng(0)
        rewards = 0.5 + 0.4 * rng.random((5, 20))  # strictly inside (0.5, 0.9)
        path = self._path(rewards)
        assert np.all(adms_threshold(path, 0.5 + 1e-9).tau == 0)
        assert np.all(adms_threshold(path, 1 - 1e-9).tau == 4)

    @pytest.mark.parametrize("ell", [0.5, 1.0, 0.3, 1.4])
    def test_invalid_threshold(self, ell):
        with pytest.raises(InvalidThresholdError):
            adms_threshold(self._path(np.full((2, 2), 0.6)), ell)


def eval_rule(tree: StoppingTree, stop: np.ndarray) -> float:
    """Expected stopping reward of an arbitrary stop/continue assignment."""
    n = tree.n_nodes
    value = np.empty(n)
    for i in range(n - 1, -1, -1):
        if stop[i] or not tree.children[i]:
            value[i] = tree.rewards[i]
        else:
            value[i] = sum(p * value[c] for c, p in zip(tree.children[i], tree.probs[i]))
    return float(value[0])


def random_dyadic_tree(rng: np.random.Generator, max_depth=6, max_children=4,
                       max_internal=10) -> StoppingTree:
    """Random tree with dyadic rewards/probabilities so all arithmetic is exact."""
    rewards = [rng.integers(0, 65) / 64.0]
    children: list[list[int]] = [[]]
    probs: list[list[float]] = [[]]
    frontier = [(0, 0)]
    n_internal = 0
    while frontier:
        node, depth = frontier.pop(0)
        if depth >= max_depth - 1 or n_internal >= max_internal:
            continue
        if depth > 0 and rng.random() < 0.3:
            continue  # leaf
        k = int(rng.integers(1, max_children + 1))
        cuts = np.sort(rng.choice(np.arange(1, 8), size=k - 1, replace=False)) if k > 1 else []
        weights = np.diff([0, *cuts, 8]) / 8.0
        n_internal += 1
        for w in weights:
            idx = len(rewards)
            rewards.append(rng.integers(0, 65) / 64.0)
            children.append([])
            probs.append([])
            children[node].append(idx)
            probs[node].append(float(w))
            frontier.append((idx, depth + 1))
    return StoppingTree(rewards=np.array(rewards),
                        children=tuple(tuple(c) for c in children),
                        probs=tuple(tuple(p) for p in probs))


class TestSnellExact:
    def test_two_step_coin_example(self):
        # reward 0.6 now vs {0.9, 0.1} equiprobable next: stop now
        tree = StoppingTree(rewards=np.array([0.6, 0.9, 0.1]),
                            children=((1, 2), (), ()), probs=((0.5, 0.5), (), ()))
        sol = snell_exact(tree)
        assert sol.continuation[0] == pytest.approx(0.5)
        assert sol.q_values[0] == pytest.approx(0.6)
        assert sol.stop[0]
        assert sol.optimal_value == pytest.approx(0.6)

    def test_increasing_rewards_stop_last(self):
        tree = StoppingTree(rewards=np.array([0.2, 0.5, 0.9]),
                            children=((1,), (2,), ()), probs=((1.0,), (1.0,), ()))
        sol = snell_exact(tree)
        assert not sol.stop[0] and not sol.stop[1] and sol.stop[2]
        assert sol.optimal_value == pytest.approx(0.9)

    def test_decreasing_rewards_stop_first(self):
        tree = StoppingTree(rewards=np.array([0.9, 0.5, 0.2]),
                            children=((1,), (2,), ()), probs=((1.0,), (1.0,), ()))
        sol = snell_exact(tree)
        assert sol.stop[0]
        assert sol.optimal_value == pytest.approx(0.9)

    def test_tree_size_cap(self):
        big = StoppingTree(rewards=np.zeros(3), children=((1, 2), (), ()),
                           probs=((0.5, 0.5), (), ()))
        with pytest.raises(TreeTooLargeError):
            snell_exact(big, max_nodes=2)

    def test_supermartingale_and_brute_force_small(self):
        rng = np.random.default_rng(123)
        for _ in range(10):
            tree = random_dyadic_tree(rng, max_internal=8)
            sol = snell_exact(tree)
            # dominating supermartingale inequalities at every node
            assert np.all(sol.q_values >= tree.rewards)
            internal = [i for i in range(tree.n_nodes) if tree.children[i]]
            for i in internal:
                assert sol.q_values[i] >= sol.continuation[i]
            best = max(
                eval_rule(tree, np.array(mask))
                for mask in itertools.product(
                    [False, True], repeat=tree.n_nodes)
            ) if tree.n_nodes <= 12 else None
            got = eval_rule(tree, sol.stop)
            if best is not None:
                assert got == best  # exact dyadic arithmetic
            assert got == sol.optimal_value


class TestAdmsSnell:
    def test_single_step_stops_immediately(self):
        path = RewardPath(rewards=np.array([[0.6, 0.7]]), state=np.zeros((1, 2, 3)),
                          ratios=(0.5,), k_pred=1, seed=0)
        dec = adms_snell(path)
        assert np.all(dec.tau == 0)

    def test_constant_rewards_stop_immediately(self):
        rng = np.random.default_rng(0)
        state = rng.random((4, 50, 3))
        path = RewardPath(rewards=np.full((4, 50), 0.7), state=state,
                          ratios=(0.2, 0.4, 0.6, 0.8), k_pred=1, seed=0)
        dec = adms_snell(path)
        assert np.all(dec.tau == 0)

    def test_ls_rule_near_exact_on_chain(self):
        # exactly solvable finite-state chain; one-hot basis saturates the
        # regression, so the fitted rule should recover the optimum closely
        rng = np.random.default_rng(5)
        S, T = 4, 5
        P = np.array([[0.6, 0.4, 0.0, 0.0],
                      [0.2, 0.5, 0.3, 0.0],
                      [0.0, 0.3, 0.4, 0.3],
                      [0.0, 0.0, 0.5, 0.5]])
        rewards = rng.random((T, S))
        init = np.array([0.4, 0.3, 0.2, 0.1])
        q, _ = chain_envelope(P, rewards)
        exact = float(init @ q[0])

        path, states = simulate_chain_path(P, rewards, init, n_traj=20000, seed=6)
        onehot = lambda s: (s[:, 0:1] == np.arange(1, S)).astype(float)
        dec = adms_snell(path, basis=onehot, l1_penalty=1e-8)
        realized = path.rewards[dec.tau, np.arange(path.n_features)].mean()
        assert realized == pytest.approx(exact, rel=0.02)

    def test_ridge_fallback_flag(self):
        # duplicate basis columns with no penalty force the ridge route
        path = RewardPath(rewards=np.array([[0.6, 0.62, 0.61], [0.7, 0.72, 0.71]]),
                          state=np.ones((2, 3, 3)), ratios=(0.3, 0.6), k_pred=1, seed=0)
        dec = adms_snell(path, l1_penalty=0.0)
        assert dec.ridge_fallback


class TestAssembleAdaptiveMirror:
    def test_fixed_decision_matches_fixed_pipeline(self):
        data, prior = _nm_spec_data(0.7, 0.4, 0.01, p=40, seed=8)
        plan = make_split_plan(data.n, RATIOS, seed=3)
        t = 2
        dec = StoppingDecision.fixed(t, data.p)
        mv = assemble_adaptive_mirror(data, plan, prior, dec)
        first, second = split_at(data, plan, t)
        ref = bayes_optimal(normal_means_posterior(first, prior), second)
        assert np.allclose(mv.values, ref.values, atol=1e-12)
        assert mv.kind is MirrorKind.ADAPTIVE
        assert np.all(mv.ratio_used == RATIOS[t])

    def test_mixed_stopping_uses_matching_splits(self):
        data, prior = _nm_spec_data(0.7, 0.4, 0.01, p=10, seed=9)
        plan = make_split_plan(data.n, RATIOS, seed=4)
        tau = np.array([0, 3, 0, 3, 1, 1, 2, 2, 0, 3], dtype=np.intp)
        mv = assemble_adaptive_mirror(data, plan, prior, StoppingDecision(tau, "manual"))
        for t in range(4):
            members = np.flatnonzero(tau == t)
            first, second = split_at(data, plan, t)
            ref = bayes_optimal(normal_means_posterior(first, prior), second)
            assert np.allclose(mv.values[members], ref.values[members], atol=1e-12)
        assert np.array_equal(mv.ratio_used, np.asarray(RATIOS)[tau])

    def test_decisions_never_read_heldout_rows(self):
        # fresh responses beyond the largest candidate cut leave tau unchanged
        data, prior = _nm_spec_data(0.7, 0.4, 0.01, p=50, seed=10)
        plan = make_split_plan(data.n, RATIOS, seed=5)
        path = reward_path(data, plan, prior, k_pred=60, seed=11)
        dec_thr = adms_threshold(path, 0.7)
        dec_snell = adms_snell(path)

        hidden = plan.permutation[plan.first_size(len(RATIOS) - 1):]
        resp = np.array(data.response)
        resp[hidden] = np.random.default_rng(99).standard_normal(resp[hidden].shape)
        data2 = Dataset(ModelKind.NORMAL_MEANS, resp)
        path2 = reward_path(data2, plan, prior, k_pred=60, seed=11)
        assert np.array_equal(path.rewards, path2.rewards)
        assert np.array_equal(adms_threshold(path2, 0.7).tau, dec_thr.tau)
        assert np.array_equal(adms_snell(path2).tau, dec_snell.tau)

    def test_regression_assembly_smoke(self):
        rng = np.random.default_rng(12)
        n, p = 80, 12
        X = rng.standard_normal((n, p))
        beta = np.zeros(p)
        beta[:3] = 1.5
        y = X @ beta + rng.standard_normal(n)
        data = Dataset(ModelKind.LINEAR, y, X)
        prior = SpikeSlabPrior(0.75, SlabSpec(SlabKind.GAUSSIAN, 0.0, 4.0))
        plan = make_split_plan(n, [0.3, 0.5, 0.7], seed=6)
        path = reward_path(data, plan, prior, k_pred=40, seed=13,
                           gibbs_draws=150, gibbs_burn=50)
        dec = adms_snell(path)
        mv = assemble_adaptive_mirror(data, plan, prior, dec, path=path)
        assert mv.values.shape == (p,)
        assert np.isfinite(mv.values).all()
        assert np.all(mv.values[~mv.active] == 0.0)
