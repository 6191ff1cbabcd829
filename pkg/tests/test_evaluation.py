import csv
import math

import numpy as np
import pytest
from scipy import integrate
from scipy import stats as sps

from blindsearch.engine import GridSpec, PulsarGrid
from blindsearch.evaluation import (DESK_SPAN, REFERENCE_PHOTONS, TradeoffConfig,
                                    desk_scale_config, estimate_tradeoff,
                                    exact_dp_oracle, fitted_payoff_estimate,
                                    leaf_window, naive_power_check,
                                    tree_payoff_batch, write_tradeoff_csv)
from blindsearch.fit import FitConfig, Strategy, fit_strategy, sample_paths
from blindsearch.isotonic import MonotoneFn
from blindsearch.models import GaussianChainModel
from blindsearch.stats import FreqDrift
from blindsearch.tree import (NodeId, TreeConfig, descendant_range, nodes_in_layer)


def chain_tree(layers, branch=2, roots=1, costs=None):
    return TreeConfig(num_layers=layers, root_count=roots,
                      branching=(branch,) * (layers - 1),
                      costs=costs or (1.0,) * layers)


def manual_strategy(tree, lam, fns):
    """fns: {layer: {target: MonotoneFn}} for layers 1..G-1."""
    return Strategy(tree=tree, lam=lam, q_train=0.0, continuation=fns)


def const_fn(c):
    return MonotoneFn(np.array([0.0]), np.array([float(c)]))


class TestExactOracle:
    def test_two_layer_tree_matches_direct_quadrature(self):
        """Independent route: integrate max(0, Q(x)) phi(x) dx by quad."""
        tree = chain_tree(2, branch=3, roots=2)
        model = GaussianChainModel(tree, rho=0.6)
        lam, q = 0.1, 1.0
        sd = math.sqrt(1 - 0.36)

        def gain(x):
            return max(0.0, 3.0 * (sps.norm.sf((q - 0.6 * x) / sd) - lam))

        kink = (q - sd * sps.norm.isf(lam)) / 0.6
        v1, err = integrate.quad(lambda x: gain(x) * sps.norm.pdf(x),
                                 -8.0, 8.0, points=[kink], limit=200)
        assert err < 1e-9
        exact = 2.0 * v1

        fine = exact_dp_oracle(model, lam, q, n_grid=200).total_payoff
        coarse = exact_dp_oracle(model, lam, q, n_grid=25).total_payoff
        assert fine == pytest.approx(exact, rel=5e-3)
        assert abs(fine - exact) <= abs(coarse - exact)

    def test_free_search_low_threshold_collects_every_leaf(self):
        tree = chain_tree(3, branch=2, roots=3)
        model = GaussianChainModel(tree, rho=0.5)
        res = exact_dp_oracle(model, lam=0.0, q=-6.0)
        assert res.total_payoff == pytest.approx(nodes_in_layer(tree, 3), rel=1e-4)
        # free search never stops, whatever the statistic
        for act in res.layer_actions:
            assert np.all(act > 0)

    def test_prohibitive_cost_stops_at_the_roots(self):
        model = GaussianChainModel(chain_tree(3), rho=0.8)
        res = exact_dp_oracle(model, lam=1e6, q=1.0)
        assert res.total_payoff == 0.0
        assert all(np.all(a == 0) for a in res.layer_actions)

    def test_payoff_decreases_with_lambda(self):
        model = GaussianChainModel(chain_tree(3, branch=4), rho=0.7)
        totals = [exact_dp_oracle(model, lam, q=1.8).total_payoff
                  for lam in (0.0, 0.02, 0.1, 0.5)]
        assert all(a >= b - 1e-12 for a, b in zip(totals, totals[1:]))

    def test_dominates_simple_strategies_and_fit(self):
        tree = chain_tree(3, branch=2)
        model = GaussianChainModel(tree, rho=0.8)
        lam, q = 0.05, 1.5
        res = exact_dp_oracle(model, lam, q)
        # stop-at-root earns exactly zero
        assert res.total_payoff >= 0.0
        # jump straight to the leaves: closed-form payoff
        straight = 4.0 * (sps.norm.sf(q) - lam)
        assert res.total_payoff >= straight - 1e-3
        # the fitted strategy cannot beat the optimum
        paths = sample_paths(model, 4000, seed=0)
        strat = fit_strategy(paths, FitConfig(tree, lam, q, 4000))
        mean, se = fitted_payoff_estimate(strat, model, q, n_sims=4000, seed=1)
        assert mean <= res.total_payoff + 4 * se

    def test_preconditions(self):
        with pytest.raises(ValueError):
            exact_dp_oracle(GaussianChainModel(chain_tree(5), 0.5), 0.1, 1.0)
        with pytest.raises(ValueError):
            exact_dp_oracle(GaussianChainModel(chain_tree(4, branch=8), 0.5), 0.1, 1.0)
        model = GaussianChainModel(chain_tree(2), 0.5)
        with pytest.raises(ValueError):
            exact_dp_oracle(model, 0.1, 1.0, n_grid=1)
        with pytest.raises(ValueError):
            exact_dp_oracle(model, 0.1, 1.0, n_grid=201)
        with pytest.raises(ValueError):
            exact_dp_oracle(model, -0.1, 1.0)


def reference_tree_payoff(strategy, vals, q):
    """Set-walk twin of tree_payoff_batch for a single realization."""
    tree = strategy.tree
    G = tree.num_layers
    observed = {l: set() for l in range(1, G + 1)}
    observed[1] = set(range(nodes_in_layer(tree, 1)))
    for layer in range(1, G):
        for idx in sorted(observed[layer]):
            s = strategy.decide(layer, float(vals[layer - 1][idx]))
            if s:
                lo, hi = descendant_range(tree, NodeId(layer, idx), s)
                observed[s].update(range(lo, hi))
    cost = sum(tree.cost(l) * len(observed[l]) for l in range(2, G + 1))
    det = sum(1 for idx in observed[G] if vals[G - 1][idx] > q)
    return det - strategy.lam * cost, cost, det


class TestTreePayoffBatch:
    def random_strategy(self, tree, lam, rng):
        fns = {}
        for layer in range(1, tree.num_layers):
            fns[layer] = {}
            for s in range(layer + 1, tree.num_layers + 1):
                nb = int(rng.integers(1, 4))
                bps = np.sort(rng.uniform(-2.0, 8.0, nb))
                levels = np.sort(rng.uniform(-1.0, 1.0, nb))
                levels += 1e-6 * np.arange(nb)  # keep strictly increasing
                fns[layer][s] = MonotoneFn(bps, levels)
        return manual_strategy(tree, lam, fns)

    def test_matches_set_walk_reference(self):
        rng = np.random.default_rng(42)
        for trial in range(25):
            G = int(rng.integers(2, 5))
            branch = int(rng.integers(2, 4))
            roots = int(rng.integers(1, 3))
            costs = tuple(float(c) for c in rng.uniform(0.2, 2.0, G))
            tree = chain_tree(G, branch=branch, roots=roots, costs=costs)
            lam = float(rng.choice([0.0, 0.07, 0.3]))
            strat = self.random_strategy(tree, lam, rng)
            q = float(rng.uniform(-1.0, 2.0))
            vals = GaussianChainModel(tree, 0.6).sample_tree_batch(4, rng)
            pay, cost, det = tree_payoff_batch(strat, vals, q)
            for sim in range(4):
                one = [v[sim] for v in vals]
                rp, rc, rd = reference_tree_payoff(strat, one, q)
                assert det[sim] == rd, f"trial {trial} sim {sim}"
                assert cost[sim] == pytest.approx(rc, abs=1e-9)
                assert pay[sim] == pytest.approx(rp, abs=1e-9)

    def test_payoff_identity(self):
        tree = chain_tree(3, branch=3)
        rng = np.random.default_rng(7)
        strat = self.random_strategy(tree, 0.11, rng)
        vals = GaussianChainModel(tree, 0.5).sample_tree_batch(50, rng)
        pay, cost, det = tree_payoff_batch(strat, vals, q=0.8)
        assert np.allclose(pay, det - 0.11 * cost)

    def test_never_stop_observes_full_tree(self):
        tree = chain_tree(3, branch=2, roots=2)
        fns = {1: {2: const_fn(1.0), 3: const_fn(0.5)},
               2: {3: const_fn(1.0)}}
        strat = manual_strategy(tree, 0.0, fns)
        rng = np.random.default_rng(9)
        vals = GaussianChainModel(tree, 0.5).sample_tree_batch(30, rng)
        pay, cost, det = tree_payoff_batch(strat, vals, q=0.0)
        full = nodes_in_layer(tree, 2) + nodes_in_layer(tree, 3)
        assert np.all(cost == full)
        assert np.array_equal(det, (vals[2] > 0.0).sum(axis=1))

    def test_straight_jump_skips_middle_layer_cost(self):
        tree = chain_tree(3, branch=2, roots=2)
        fns = {1: {2: const_fn(0.5), 3: const_fn(1.0)},
               2: {3: const_fn(1.0)}}
        strat = manual_strategy(tree, 0.0, fns)
        rng = np.random.default_rng(9)
        vals = GaussianChainModel(tree, 0.5).sample_tree_batch(30, rng)
        _, cost, det = tree_payoff_batch(strat, vals, q=0.0)
        assert np.all(cost == nodes_in_layer(tree, 3))
        assert np.array_equal(det, (vals[2] > 0.0).sum(axis=1))


class TestLeafWindow:
    def brute(self, grid, fd, rw, rd):
        leaves = nodes_in_layer(grid.tree, grid.spec.num_layers)
        om, od = grid.node_params(grid.spec.num_layers, np.arange(leaves))
        keep = (np.abs(om - fd.omega) <= rw) & (np.abs(od - fd.omegadot) <= rd)
        return np.flatnonzero(keep)

    def test_frequency_only_grid(self):
        spec = GridSpec(1.0, 2.0, -1e-5, 0.0, num_layers=3, oversampling=3)
        grid = PulsarGrid(spec, 60.0)
        assert all(f == 1 for f in grid.drift_factor)
        rng = np.random.default_rng(0)
        for _ in range(20):
            fd = FreqDrift(rng.uniform(1.0, 2.0), rng.uniform(-1e-5, 0.0))
            rw = float(rng.choice([1 / 60.0, 0.05, 0.004]))
            win = leaf_window(grid, fd, rw, 1e-5)
            assert np.array_equal(np.sort(win), self.brute(grid, fd, rw, 1e-5))

    def test_both_dimensions_split(self):
        spec = GridSpec(1.0, 1.5, -2e-3, 0.0, num_layers=3, oversampling=3)
        grid = PulsarGrid(spec, 60.0)
        assert all(f == 4 for f in grid.drift_factor)
        rng = np.random.default_rng(1)
        for _ in range(20):
            fd = FreqDrift(rng.uniform(1.0, 1.5), rng.uniform(-2e-3, 0.0))
            rw = float(rng.choice([1 / 60.0, 0.02]))
            rd = float(rng.choice([1 / 3600.0, 2e-4]))
            win = leaf_window(grid, fd, rw, rd)
            assert np.array_equal(np.sort(win), self.brute(grid, fd, rw, rd))

    def test_outside_box_far_away_is_empty(self):
        spec = GridSpec(1.0, 2.0, -1e-5, 0.0, num_layers=3, oversampling=3)
        grid = PulsarGrid(spec, 60.0)
        win = leaf_window(grid, FreqDrift(5.0, 0.0), 1e-3, 1e-5)
        assert win.size == 0

    def test_mixed_split_dimension_rejected(self):
        spec = GridSpec(1.0, 1.2, -5e-5, 0.0, num_layers=3, oversampling=3)
        grid = PulsarGrid(spec, 60.0)
        assert 1 in grid.drift_factor and 4 in grid.drift_factor
        with pytest.raises(ValueError):
            leaf_window(grid, FreqDrift(1.1, -1e-5), 0.01, 1e-5)


class TestEstimateTradeoff:
    def tiny_config(self):
        grid = GridSpec(1.0, 2.0, -1e-6, 0.0, num_layers=3, oversampling=3)
        return TradeoffConfig(grid=grid, span=40.0, num_photons=60, theta=0.85,
                              num_paths=3000, qtrain_quantile=0.9, q_reject=12.0)

    def test_free_and_prohibitive_endpoints(self):
        cfg = self.tiny_config()
        pts = estimate_tradeoff([0.0, 50.0], cfg, n_sims=12, seed=5, workers=1)
        free, blocked = pts
        grid = PulsarGrid(cfg.grid, cfg.span)
        n1 = nodes_in_layer(grid.tree, 1)
        n2 = nodes_in_layer(grid.tree, 2)
        n3 = nodes_in_layer(grid.tree, 3)
        # lambda = 0 never stops, so every leaf is observed and relative
        # power is exactly 1; jumps may or may not route through layer 2,
        # which brackets the cost between root sweep + leaves and the
        # whole tree (the roots are always observed)
        assert (n1 + n3) / n3 - 1e-9 <= free.cost_fraction
        assert free.cost_fraction <= (n1 + n2 + n3) / n3 + 1e-9
        assert free.power_fraction == 1.0
        # a prohibitive lambda stops at the roots: only their cost remains
        assert blocked.cost_fraction == pytest.approx(n1 / n3)
        assert blocked.cost_se == 0.0
        assert blocked.power_fraction == 0.0
        assert free.n_sims == 12

    def test_deterministic_and_worker_count_invariant(self):
        cfg = self.tiny_config()
        a = estimate_tradeoff([0.3], cfg, n_sims=6, seed=3, workers=1)
        b = estimate_tradeoff([0.3], cfg, n_sims=6, seed=3, workers=1)
        c = estimate_tradeoff([0.3], cfg, n_sims=6, seed=3, workers=2)
        assert a == b == c

    def test_rejects_degenerate_sim_count(self):
        with pytest.raises(ValueError):
            estimate_tradeoff([0.1], self.tiny_config(), n_sims=1, seed=0)

    def test_csv_roundtrip(self, tmp_path):
        cfg = self.tiny_config()
        pts = estimate_tradeoff([0.0], cfg, n_sims=4, seed=2, workers=1)
        out = tmp_path / "curve.csv"
        write_tradeoff_csv(out, pts)
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        assert float(rows[0]["lambda"]) == 0.0
        assert float(rows[0]["cost_fraction"]) == pts[0].cost_fraction
        assert float(rows[0]["power_fraction"]) == pts[0].power_fraction
        assert int(rows[0]["n_sims"]) == 4


class TestNaivePowerCheck:
    def test_strong_signal_detected(self):
        p, se = naive_power_check(theta=0.9, num_photons=120, q_reject=20.0,
                                  n_sims=60, seed=0, fd=FreqDrift(3.3, 0.0),
                                  span=200.0)
        assert p > 0.8
        assert 0 < se < 0.1

    def test_null_never_clears_headline_threshold(self):
        p, _ = naive_power_check(theta=0.0, num_photons=200, q_reject=47.4,
                                 n_sims=50, seed=1, fd=FreqDrift(3.3, 0.0),
                                 span=200.0)
        assert p == 0.0

    def test_reproducible(self):
        a = naive_power_check(0.5, 100, 15.0, 30, seed=9, fd=FreqDrift(2.0, 0.0),
                              span=100.0)
        b = naive_power_check(0.5, 100, 15.0, 30, seed=9, fd=FreqDrift(2.0, 0.0),
                              span=100.0)
        assert a == b

    def test_rejects_empty_run(self):
        with pytest.raises(ValueError):
            naive_power_check(0.5, 100, 15.0, 0, seed=0)


class TestFittedPayoffEstimate:
    def test_never_stop_strategy_matches_closed_form(self):
        tree = chain_tree(3, branch=2)
        fns = {1: {2: const_fn(0.5), 3: const_fn(1.0)},
               2: {3: const_fn(1.0)}}
        strat = manual_strategy(tree, 0.0, fns)
        model = GaussianChainModel(tree, rho=0.5)
        q = 1.2
        mean, se = fitted_payoff_estimate(strat, model, q, n_sims=20_000, seed=4)
        assert mean == pytest.approx(4.0 * sps.norm.sf(q), abs=4 * se)

    def test_reproducible(self):
        tree = chain_tree(2)
        model = GaussianChainModel(tree, rho=0.5)
        paths = sample_paths(model, 500, seed=0)
        strat = fit_strategy(paths, FitConfig(tree, 0.1, 1.0, 500))
        a = fitted_payoff_estimate(strat, model, 1.0, 300, seed=6)
        assert a == fitted_payoff_estimate(strat, model, 1.0, 300, seed=6)


class TestConfigs:
    def test_desk_defaults(self):
        cfg = desk_scale_config()
        assert cfg.span == DESK_SPAN == pytest.approx(1205197.0 / 32)
        assert cfg.num_photons == REFERENCE_PHOTONS == 1072
        assert cfg.theta == 0.34
        assert cfg.grid.num_layers == 9

    def test_validation(self):
        grid = GridSpec(1.0, 2.0, 0.0, 0.0, num_layers=2, oversampling=3)
        with pytest.raises(ValueError):
            TradeoffConfig(grid, span=-1.0, num_photons=10, theta=0.3,
                           num_paths=10, qtrain_quantile=0.9)
        with pytest.raises(ValueError):
            TradeoffConfig(grid, span=10.0, num_photons=10, theta=1.5,
                           num_paths=10, qtrain_quantile=0.9)
        with pytest.raises(ValueError):
            TradeoffConfig(grid, span=10.0, num_photons=10, theta=0.3,
                           num_paths=10, qtrain_quantile=1.0)
        with pytest.raises(ValueError):
            TradeoffConfig(grid, span=10.0, num_photons=10, theta=0.3,
                           num_paths=1, qtrain_quantile=0.9)
