"""Power/cost evaluation: tradeoff curves, exact small-tree optimum, benchmarks.

``estimate_tradeoff`` reproduces the headline experiment at desk scale:
fit one strategy per lambda from a shared path budget, then measure
observation cost on null datasets and detection power on signal
injections, both relative to the exhaustive leaf sweep.

``exact_dp_oracle`` computes the true optimal value function on small
reference trees with closed-form conditional laws by numerically
integrating the backward recursion over a discretized state space; the
Monte-Carlo fitter is validated against it.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .engine import (GridSpec, PulsarGrid, PulsarEvaluator, default_q_reject, run_search)
from .fit import FitConfig, fit_strategy, sample_paths, strategy_from_dict, strategy_to_dict
from .models import GaussianChainModel, PulsarNullModel
from .stats import FreqDrift, SignalSpec, chi2_2_quantile, simulate_photons
from .tree import descendant_count, nodes_in_layer
from .util import resolve_workers, subseed

REFERENCE_FD = FreqDrift(omega=9.761175993, omegadot=-8.827879e-12)
REFERENCE_SPAN = 1205197.0
REFERENCE_PHOTONS = 1072


@dataclass(frozen=True)
class TradeoffPoint:
    """One lambda on the tradeoff curve, fractions relative to naive."""

    lam: float
    cost_fraction: float
    power_fraction: float
    cost_se: float
    power_se: float
    n_sims: int


@dataclass(frozen=True)
class TradeoffConfig:
    """Everything estimate_tradeoff needs besides the lambda grid."""

    grid: GridSpec
    span: float
    num_photons: int
    theta: float
    num_paths: int
    qtrain_quantile: float
    alpha: float = 0.05
    n_effective: float | None = None
    q_reject: float | None = None

    def __post_init__(self):
        if not self.span > 0:
            raise ValueError("span must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if not 0.0 < self.qtrain_quantile < 1.0:
            raise ValueError("qtrain_quantile must lie in (0, 1)")
        if self.num_paths < 2:
            raise ValueError("num_paths must be >= 2")


DESK_NUM_LAYERS = 9
DESK_SPAN = REFERENCE_SPAN / 32.0
# Dense where the curve bends: between 3e-2 and 1e-1 the null cost drops
# through the percent range while power is still near the sweep.
DESK_LAMBDAS = (0.0, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2,
                5e-2, 5.5e-2, 6e-2, 6.5e-2, 1e-1)
DESK_THETAS = (0.24, 0.34, 0.5)


def desk_scale_config(theta: float = 0.34, num_layers: int = DESK_NUM_LAYERS,
                      num_paths: int = 100_000, qtrain_quantile: float = 0.99,
                      ) -> TradeoffConfig:
    """Scaled-down benchmark: same photon budget, 1/32 of the span.

    Frequencies 1..5 Hz and a drift range that sits inside one leaf drift
    cell at this span, giving a few-hundred-thousand-leaf tree whose
    exhaustive sweep is still computable as ground truth.
    """
    grid = GridSpec(omega_min=1.0, omega_max=5.0, omegadot_min=-5e-11, omegadot_max=0.0,
                    num_layers=num_layers, oversampling=3)
    return TradeoffConfig(grid=grid, span=DESK_SPAN, num_photons=REFERENCE_PHOTONS,
                          theta=theta, num_paths=num_paths, qtrain_quantile=qtrain_quantile)


def _dim_lattice(grid: PulsarGrid, drift: bool):
    """Leaf lattice of one dimension: (count, first_center, spacing).

    Valid when the dimension splits at every transition or never; mixed
    splitting has no uniform leaf lattice.
    """
    factors = grid.drift_factor if drift else grid.freq_factor
    full = 4 if drift else 2
    if all(f == full for f in factors):
        g = grid.spec.num_layers
        count = (grid.n1_omegadot if drift else grid.n1_omega) * full ** (g - 1)
        spacing = grid.d_omegadot[-1] if drift else grid.d_omega[-1]
    elif all(f == 1 for f in factors):
        count = grid.n1_omegadot if drift else grid.n1_omega
        spacing = grid.d_omegadot[0] if drift else grid.d_omega[0]
    else:
        raise ValueError("tradeoff evaluation needs fully split or unsplit dimensions")
    start = grid.omegadot_start if drift else grid.omega_start
    return count, start + 0.5 * spacing, spacing


def _leaf_index_from_coords(grid: PulsarGrid, kw, kd):
    """Flat leaf indices from per-dimension lattice coordinates (arrays)."""
    g = grid.spec.num_layers
    kw = np.asarray(kw, dtype=np.int64)
    kd = np.asarray(kd, dtype=np.int64)
    wdigits = []
    ddigits = []
    for j in range(g - 1, 0, -1):
        kw, dw = np.divmod(kw, grid.freq_factor[j - 1])
        kd, dd = np.divmod(kd, grid.drift_factor[j - 1])
        wdigits.append(dw)
        ddigits.append(dd)
    idx = kw * grid.n1_omegadot + kd
    for j in range(1, g):
        dw = wdigits[g - 1 - j]
        dd = ddigits[g - 1 - j]
        idx = idx * grid.tree.branching[j - 1] + dw * grid.drift_factor[j - 1] + dd
    return idx


def leaf_window(grid: PulsarGrid, fd: FreqDrift, radius_omega: float,
                radius_omegadot: float) -> np.ndarray:
    """Leaf indices whose parameters lie within the success radius of fd."""
    nw, w0, dw = _dim_lattice(grid, drift=False)
    nd, d0, dd = _dim_lattice(grid, drift=True)
    kw_lo = max(0, math.floor((fd.omega - radius_omega - w0) / dw) - 1)
    kw_hi = min(nw - 1, math.ceil((fd.omega + radius_omega - w0) / dw) + 1)
    kd_lo = max(0, math.floor((fd.omegadot - radius_omegadot - d0) / dd) - 1)
    kd_hi = min(nd - 1, math.ceil((fd.omegadot + radius_omegadot - d0) / dd) + 1)
    if kw_hi < kw_lo or kd_hi < kd_lo:
        return np.empty(0, dtype=np.int64)
    kw = np.arange(kw_lo, kw_hi + 1)
    kd = np.arange(kd_lo, kd_hi + 1)
    kwg, kdg = np.meshgrid(kw, kd, indexing="ij")
    idx = _leaf_index_from_coords(grid, kwg.ravel(), kdg.ravel())
    om, od = grid.node_params(grid.spec.num_layers, idx)
    keep = (np.abs(om - fd.omega) <= radius_omega) & (np.abs(od - fd.omegadot) <= radius_omegadot)
    return idx[keep]


def _success(detections, grid: PulsarGrid, fd: FreqDrift, radius_omega, radius_omegadot) -> bool:
    if not detections:
        return False
    idx = np.array([node.index for node, _ in detections], dtype=np.int64)
    om, od = grid.node_params(grid.spec.num_layers, idx)
    return bool(np.any((np.abs(om - fd.omega) <= radius_omega)
                       & (np.abs(od - fd.omegadot) <= radius_omegadot)))


_WORKER = None


def _build_worker_state(payload):
    strategy = strategy_from_dict(payload["strategy"]) if payload["strategy"] else None
    grid = PulsarGrid.from_dict(payload["grid"], costs=payload["costs"])
    return {**payload, "strategy": strategy, "grid": grid}


def _init_worker(payload):
    global _WORKER
    _WORKER = _build_worker_state(payload)


def _cost_sim(task, state=None):
    st = state if state is not None else _WORKER
    i, seed = task
    grid = st["grid"]
    photons = simulate_photons(
        SignalSpec(REFERENCE_FD, 0.0, st["num_photons"], grid.span), subseed(seed, 1, i))
    out = run_search(st["strategy"], PulsarEvaluator(photons, grid), st["q_reject"])
    return out.total_cost


def _power_sim(task, state=None):
    st = state if state is not None else _WORKER
    i, seed = task
    grid = st["grid"]
    spec = grid.spec
    rng = np.random.default_rng(subseed(seed, 2, i))
    fd = FreqDrift(omega=rng.uniform(spec.omega_min, spec.omega_max),
                   omegadot=rng.uniform(spec.omegadot_min, spec.omegadot_max))
    photons = simulate_photons(
        SignalSpec(fd, st["theta"], st["num_photons"], grid.span), subseed(seed, 3, i))
    ev = PulsarEvaluator(photons, grid)
    r_w = 1.0 / grid.span
    r_d = 1.0 / grid.span ** 2
    window = leaf_window(grid, fd, r_w, r_d)
    naive_hit = bool(window.size
                     and np.any(ev.evaluate(spec.num_layers, window) >= st["q_reject"]))
    out = run_search(st["strategy"], ev, st["q_reject"])
    hier_hit = _success(out.detections, grid, fd, r_w, r_d)
    return hier_hit, naive_hit


def _map_sims(fn, tasks, payload, workers):
    if workers <= 1 or len(tasks) < 2:
        state = _build_worker_state(payload)
        return [fn(t, state) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(payload,)) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def estimate_tradeoff(lambdas, cfg: TradeoffConfig, n_sims: int, seed,
                      workers=None) -> list:
    """Tradeoff points for a lambda grid, all fitted from one path budget.

    Cost fractions come from global-null datasets, power fractions from
    signal injections with a uniformly drawn true (omega, omegadot);
    success means detecting a leaf within 1/span in frequency and
    1/span^2 in drift of the truth. Datasets are shared across lambdas,
    so the curve is internally paired. Deterministic for a given seed,
    independent of the worker count.
    """
    if n_sims < 2:
        raise ValueError("n_sims must be >= 2")
    workers = resolve_workers(workers)
    grid = PulsarGrid(cfg.grid, cfg.span)
    tree = grid.tree
    q_reject = cfg.q_reject
    if q_reject is None:
        q_reject = default_q_reject(tree, cfg.alpha, cfg.n_effective)
    q_train = chi2_2_quantile(cfg.qtrain_quantile)
    model = PulsarNullModel(grid, cfg.num_photons)
    paths = sample_paths(model, cfg.num_paths, subseed(seed, 0))
    naive_cost = nodes_in_layer(tree, tree.num_layers) * tree.cost(tree.num_layers)

    points = []
    for lam in lambdas:
        strategy = fit_strategy(paths, FitConfig(tree, float(lam), q_train, cfg.num_paths))
        payload = {"strategy": strategy_to_dict(strategy), "grid": grid.to_dict(),
                   "costs": tree.costs, "num_photons": cfg.num_photons,
                   "theta": cfg.theta, "q_reject": q_reject}
        tasks = [(i, seed) for i in range(n_sims)]
        costs = np.array(_map_sims(_cost_sim, tasks, payload, workers))
        hits = _map_sims(_power_sim, tasks, payload, workers)
        hier = np.array([h for h, _ in hits], dtype=float)
        naive = np.array([n for _, n in hits], dtype=float)
        naive_rate = naive.mean()
        p = hier.mean()
        if naive_rate > 0:
            power_fraction = p / naive_rate
            power_se = math.sqrt(p * (1 - p) / n_sims) / naive_rate
        else:
            power_fraction = math.nan
            power_se = math.nan
        points.append(TradeoffPoint(
            lam=float(lam),
            cost_fraction=float(costs.mean() / naive_cost),
            power_fraction=float(power_fraction),
            cost_se=float(costs.std(ddof=1) / math.sqrt(n_sims) / naive_cost),
            power_se=float(power_se),
            n_sims=n_sims,
        ))
    return points


def write_tradeoff_csv(path, points) -> None:
    """Curve as CSV: lambda, cost_fraction, power_fraction, cost_se, power_se, n_sims."""
    with open(path, "w") as fh:
        fh.write("lambda,cost_fraction,power_fraction,cost_se,power_se,n_sims\n")
        for p in points:
            fh.write(f"{p.lam!r},{p.cost_fraction!r},{p.power_fraction!r},"
                     f"{p.cost_se!r},{p.power_se!r},{p.n_sims}\n")


def naive_power_check(theta: float, num_photons: int, q_reject: float, n_sims: int,
                      seed, fd: FreqDrift = REFERENCE_FD,
                      span: float = REFERENCE_SPAN):
    """MC estimate of the exhaustive search's per-signal detection power.

    Simulates modulated series and evaluates the full-coherence statistic
    at the exact true parameters. Returns (power, standard error).
    """
    from .stats import rayleigh_power
    if n_sims < 1:
        raise ValueError("n_sims must be >= 1")
    spec = SignalSpec(fd, theta, num_photons, span)
    hits = 0
    for i in range(n_sims):
        photons = simulate_photons(spec, subseed(seed, i))
        if rayleigh_power(photons, fd) > q_reject:
            hits += 1
    p = hits / n_sims
    return p, math.sqrt(max(p * (1 - p), 1.0 / n_sims) / n_sims)


@dataclass(frozen=True)
class OracleResult:
    """Exact optimum on a reference tree: value tables and expected payoff."""

    centers: np.ndarray
    layer_values: list
    layer_actions: list
    expected_root_value: float
    total_payoff: float
    lam: float
    q: float


def exact_dp_oracle(model: GaussianChainModel, lam: float, q: float,
                    n_grid: int = 200, span: float = 8.0) -> OracleResult:
    """Optimal value function by backward induction on a discretized state.

    Restricted to small reference trees (at most 4 layers, 256 leaves,
    200 grid cells): the state space is binned with a cell edge pinned at
    q, conditional layer-to-layer laws are integrated exactly within the
    discretization, and the recursion maximizes over stop and every jump
    target with the same tie rule the fitted strategies use.
    """
    tree = model.tree
    G = tree.num_layers
    if G > 4:
        raise ValueError("oracle restricted to trees of at most 4 layers")
    if nodes_in_layer(tree, G) > 256:
        raise ValueError("oracle restricted to trees of at most 256 leaves")
    if not 2 <= n_grid <= 200:
        raise ValueError("n_grid must lie in 2..200")
    if not lam >= 0:
        raise ValueError("lam must be >= 0")
    h = 2.0 * span / n_grid
    k_down = math.ceil((q + span) / h)
    k_up = max(1, math.ceil((span - q) / h))
    edges = q + h * np.arange(-k_down, k_up + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])

    values = {G: (centers >= q).astype(float)}
    actions = {}
    for layer in range(G - 1, 0, -1):
        qs = []
        targets = list(range(layer + 1, G + 1))
        for s in targets:
            a, sd = model.transition(layer, s)
            cdf = ndtr((edges[None, :] - a * centers[:, None]) / sd)
            trans = np.diff(cdf, axis=1)
            b = descendant_count(tree, layer, s)
            qs.append(b * (trans @ values[s] - lam * tree.cost(s)))
        qs = np.vstack(qs)
        best = qs.max(axis=0)
        act = np.zeros(centers.size, dtype=np.int64)
        cont = (best > 0.0) | ((best == 0.0) & (lam == 0.0))
        for i, s in enumerate(targets):
            act[cont & (qs[i] == best)] = s
        values[layer] = np.maximum(best, 0.0)
        actions[layer] = act

    weights = np.diff(ndtr(edges))
    expected = float(weights @ values[1])
    return OracleResult(centers=centers,
                        layer_values=[values[l] for l in range(1, G + 1)],
                        layer_actions=[actions[l] for l in range(1, G)],
                        expected_root_value=expected,
                        total_payoff=tree.root_count * expected,
                        lam=lam, q=q)


def tree_payoff_batch(strategy, layer_values, q: float):
    """Exact per-realization payoff of a strategy on materialized trees.

    ``layer_values[l-1]`` holds (n_sims, nodes_in_layer) statistics.
    Returns (payoffs, costs, detections) arrays over realizations; the
    payoff counts leaves strictly above q among observed leaves minus
    lambda times the observation cost of layers below the roots.
    """
    tree = strategy.tree
    G = tree.num_layers
    n_sims = layer_values[0].shape[0]
    observed = {1: np.ones_like(layer_values[0], dtype=bool)}
    for layer in range(2, G + 1):
        observed[layer] = np.zeros_like(layer_values[layer - 1], dtype=bool)
    for layer in range(1, G):
        vals = layer_values[layer - 1]
        acts = strategy.decide_batch(layer, vals.ravel()).reshape(vals.shape)
        for s in range(layer + 1, G + 1):
            mask = observed[layer] & (acts == s)
            if mask.any():
                b = descendant_count(tree, layer, s)
                observed[s] |= np.repeat(mask, b, axis=1)
    costs = np.zeros(n_sims)
    for layer in range(2, G + 1):
        costs += tree.cost(layer) * observed[layer].sum(axis=1)
    detections = (observed[G] & (layer_values[G - 1] > q)).sum(axis=1)
    return detections - strategy.lam * costs, costs, detections


def fitted_payoff_estimate(strategy, model: GaussianChainModel, q: float,
                           n_sims: int, seed):
    """Mean payoff of a fitted strategy over fresh full-tree simulations."""
    rng = np.random.default_rng(subseed(seed, 17))
    vals = model.sample_tree_batch(n_sims, rng)
    payoffs, _, _ = tree_payoff_batch(strategy, vals, q)
    return float(payoffs.mean()), float(payoffs.std(ddof=1) / math.sqrt(n_sims))
