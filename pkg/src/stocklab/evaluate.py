"""Vectorized loss evaluation and exact risk computation.

``simulate`` in :mod:`stocklab.core` is the single-path reference; the batch
evaluators here reproduce its dynamics across whole datasets or policy grids
with numpy, and the ``exact_*`` functions compute true expected losses under
independent integer-valued demand processes by propagating probability mass
over integer lattices.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from .core import (
    ORDER_EPS,
    BaseStock,
    Dataset,
    NonStationary,
    Policy,
    SsPolicy,
    SystemParams,
    simulate,
)
from .demand import DemandModel, draw, marginal_pmfs, support_atoms


def cost_array(x: np.ndarray, p: SystemParams) -> np.ndarray:
    """Elementwise holding/backlogging cost."""
    return p.h * np.maximum(x, 0.0) - p.b * np.minimum(x, 0.0)


# ---------------------------------------------------------------------------
# batch empirical losses
# ---------------------------------------------------------------------------


def lead_demand_sums(D: np.ndarray, L: int) -> np.ndarray:
    """Sums d^{t-L} + ... + d^t for t = L+1 .. T+L, shape (N, T)."""
    csum = np.concatenate([np.zeros((D.shape[0], 1)), np.cumsum(D, axis=1)], axis=1)
    return csum[:, L + 1 :] - csum[:, : D.shape[1] - L]


def base_stock_losses(S: float, D: np.ndarray, p: SystemParams) -> np.ndarray:
    """Loss of the level-S base-stock policy on every row of D, shape (N,)."""
    lead = lead_demand_sums(D, p.L)
    total = cost_array(S - lead, p).sum(axis=1)
    if p.K > 0:
        charges = (D[:, : p.T - 1] > ORDER_EPS).sum(axis=1).astype(float)
        charges += 1.0 if S - p.x1 > ORDER_EPS else 0.0
        total += p.K * charges
    return total / p.T


def st_losses(levels: np.ndarray, D: np.ndarray, p: SystemParams) -> np.ndarray:
    """Loss of one per-period order-up-to policy on every row of D.

    Uses the running-max identity: the post-order position in period t is
    max(x1, max_{t'' <= t} (S^{t''} + D[1, t''-1])) - D[1, t-1], so the level
    after the period-t arrival is that maximum evaluated at t - L minus the
    demand accumulated through t.
    """
    n, horizon = D.shape
    pre = np.concatenate([np.zeros((n, 1)), np.cumsum(D, axis=1)], axis=1)
    scores = np.asarray(levels)[None, :] + pre[:, :horizon]
    m = np.maximum.accumulate(np.maximum(scores, p.x1), axis=1)
    ends = m[:, : p.T] - pre[:, p.L + 1 : horizon + 1]
    total = cost_array(ends, p).sum(axis=1)
    if p.K > 0:
        prev = np.concatenate([np.full((n, 1), p.x1), m[:, : p.T - 1]], axis=1)
        total += p.K * (m[:, : p.T] - prev > ORDER_EPS).sum(axis=1)
    return total / p.T


def ss_losses_grid(
    s_vals: np.ndarray, S_vals: np.ndarray, D: np.ndarray, p: SystemParams
) -> np.ndarray:
    """Losses of many (s, S) policies on many paths, shape (n_policies, N).

    ``s_vals`` and ``S_vals`` are parallel arrays of policy parameters.
    The initial level is ``p.x1`` regardless of s, so policies with
    s < x1 simply place their first order later.
    """
    s = np.asarray(s_vals, dtype=float)[:, None]
    S = np.asarray(S_vals, dtype=float)[:, None]
    n_pol = s.shape[0]
    n = D.shape[0]
    pos = np.full((n_pol, n), float(p.x1))
    total = np.zeros((n_pol, n))
    csum = np.concatenate([np.zeros((n, 1)), np.cumsum(D, axis=1)], axis=1)
    for t in range(1, p.T + 1):
        order = (pos <= s) & (S - pos > ORDER_EPS)
        post = np.where(order, S, pos)
        lead = (csum[:, t + p.L] - csum[:, t - 1])[None, :]
        total += cost_array(post - lead, p)
        if p.K > 0:
            total += p.K * order
        pos = post - D[:, t - 1][None, :]
    return total / p.T


def policy_losses(policy: Policy, D: np.ndarray, p: SystemParams) -> np.ndarray:
    """Per-path losses of a single policy, shape (N,)."""
    if isinstance(policy, BaseStock):
        if p.x1 <= 0:
            return base_stock_losses(policy.S, D, p)
        # positive initial stock breaks the order-every-period closed form
        return st_losses(np.full(p.horizon, policy.S), D, p)
    if isinstance(policy, SsPolicy):
        return ss_losses_grid(
            np.array([policy.s]), np.array([policy.S]), D, p
        )[0]
    if isinstance(policy, NonStationary):
        return st_losses(policy.as_array(), D, p)
    raise TypeError(f"unknown policy type {type(policy)!r}")


def dataset_risk(policy: Policy, data: Dataset, p: SystemParams) -> float:
    """Empirical risk: mean loss of the policy over the dataset."""
    return float(policy_losses(policy, data.as_matrix(), p).mean())


# ---------------------------------------------------------------------------
# exact risks under independent integer demands
# ---------------------------------------------------------------------------


def lead_pmf(pmfs: Sequence[np.ndarray], t: int, L: int) -> np.ndarray:
    """pmf of d^t + ... + d^{t+L} (1-indexed t) by convolution."""
    out = np.asarray(pmfs[t - 1], dtype=float)
    for k in range(t, t + L):
        out = np.convolve(out, pmfs[k])
    return out


def _expected_cost_of_level(level: np.ndarray | float, pmf: np.ndarray, p: SystemParams) -> np.ndarray:
    """E c(level - D) for D ~ pmf, broadcast over an array of levels."""
    lv = np.atleast_1d(np.asarray(level, dtype=float))
    diffs = lv[:, None] - np.arange(len(pmf))[None, :]
    return cost_array(diffs, p) @ pmf


def exact_base_stock_risk(S: float, pmfs: Sequence[np.ndarray], p: SystemParams) -> float:
    """Exact expected loss of a base-stock policy (requires S >= 0 >= x1)."""
    total = 0.0
    for t in range(1, p.T + 1):
        total += float(_expected_cost_of_level(S, lead_pmf(pmfs, t, p.L), p)[0])
        if p.K > 0:
            if t == 1:
                total += p.K if S - p.x1 > ORDER_EPS else 0.0
            else:
                total += p.K * (1.0 - pmfs[t - 2][0])
    return total / p.T


def exact_ss_risk(policy: SsPolicy, pmfs: Sequence[np.ndarray], p: SystemParams) -> float:
    """Exact expected loss of an (s, S) policy under independent demands.

    Probability mass is tracked on two integer lattices of accumulated
    demand: offsets from the initial level before the first order, and
    offsets from S afterwards.  Handles fractional s and S.
    """
    umax = max(len(f) for f in pmfs) - 1
    delta = policy.delta
    # first-order threshold on the pre-order lattice: order once cum >= x1 - s
    pre_thresh = p.x1 - policy.s
    pre_size = (0 if pre_thresh <= 0 else int(math.ceil(pre_thresh))) + umax + 1
    post_size = int(math.ceil(delta)) + umax + 1
    pre = np.zeros(pre_size)
    pre[0] = 1.0
    post = np.zeros(post_size)
    pre_levels = p.x1 - np.arange(pre_size)
    post_levels = policy.S - np.arange(post_size)
    total = 0.0
    cum_pre = np.arange(pre_size)
    order_from_pre = cum_pre >= pre_thresh
    cum_post = np.arange(post_size)
    order_from_post = cum_post >= delta
    for t in range(1, p.T + 1):
        moved = pre[order_from_pre].sum()
        reordered = post[order_from_post].sum()
        if p.K > 0:
            # charge only states whose order size S - position exceeds the dust
            # threshold (at delta == 0 the lattice point 0 sits exactly at S)
            charged = pre[order_from_pre & (policy.S - pre_levels > ORDER_EPS)].sum()
            charged += post[order_from_post & (policy.S - post_levels > ORDER_EPS)].sum()
            total += p.K * charged
        post_now = post.copy()
        post_now[order_from_post] = 0.0
        post_now[0] += moved + reordered
        pre_now = pre.copy()
        pre_now[order_from_pre] = 0.0
        lp = lead_pmf(pmfs, t, p.L)
        if pre_now.any():
            total += float(_expected_cost_of_level(pre_levels, lp, p) @ pre_now)
        total += float(_expected_cost_of_level(post_levels, lp, p) @ post_now)
        # demand transition; remaining states sit strictly below their order
        # thresholds, so one period of demand cannot escape either lattice
        f = pmfs[t - 1]
        pre = np.convolve(pre_now, f)[:pre_size]
        post = np.convolve(post_now, f)[:post_size]
    return total / p.T


def exact_st_risk(
    levels: Sequence[float], pmfs: Sequence[np.ndarray], p: SystemParams
) -> float | None:
    """Exact expected loss of per-period order-up-to levels.

    Exact evaluation propagates mass over an integer position grid, so it is
    only available when every level is integral; returns None otherwise.
    """
    lv = np.asarray(levels, dtype=float)
    if not np.all(lv == np.rint(lv)):
        return None
    if p.x1 != int(p.x1):
        return None
    umax = max(len(f) for f in pmfs) - 1
    top = int(max(lv.max(initial=0.0), 0.0))
    bottom = int(math.floor(p.x1)) - umax * p.horizon
    size = top - bottom + 1
    weights = np.zeros(size)
    weights[int(p.x1) - bottom] = 1.0
    grid = np.arange(bottom, top + 1)
    total = 0.0
    for t in range(1, p.T + 1):
        target = int(lv[t - 1])
        idx = target - bottom
        ordered_mass = weights[:idx].sum()
        post = weights.copy()
        post[:idx] = 0.0
        post[idx] += ordered_mass
        if p.K > 0:
            total += p.K * ordered_mass
        lp = lead_pmf(pmfs, t, p.L)
        nz = post > 0
        total += float(_expected_cost_of_level(grid[nz], lp, p) @ post[nz])
        f = pmfs[t - 1]
        new = np.zeros(size)
        for k, fk in enumerate(f):
            if fk == 0.0:
                continue
            if k == 0:
                new += fk * post
            else:
                # post-order mass sits at or above the period target >= 0,
                # which is at least horizon * umax cells above the grid floor
                new[:-k] += fk * post[k:]
        weights = new
    return total / p.T


def exact_risk(
    policy: Policy, pmfs: Sequence[np.ndarray], p: SystemParams
) -> float | None:
    """Exact expected loss under independent demands with the given pmfs.

    Returns None when the policy class/parameters do not admit lattice-exact
    evaluation (non-integer per-period levels).
    """
    if isinstance(policy, BaseStock):
        return exact_base_stock_risk(policy.S, pmfs, p)
    if isinstance(policy, SsPolicy):
        return exact_ss_risk(policy, pmfs, p)
    if isinstance(policy, NonStationary):
        return exact_st_risk(policy.levels, pmfs, p)
    raise TypeError(f"unknown policy type {type(policy)!r}")


def finite_support_risk(
    policy: Policy, atoms: np.ndarray, p: SystemParams, weights: np.ndarray | None = None
) -> float:
    """Expected loss under a finite-support distribution (exact)."""
    losses = policy_losses(policy, np.asarray(atoms, dtype=float), p)
    if weights is None:
        return float(losses.mean())
    return float(losses @ np.asarray(weights))


def mc_risk(
    policy: Policy, model: DemandModel, n: int, seed: int | tuple[int, ...], p: SystemParams
) -> tuple[float, float]:
    """Monte-Carlo risk estimate (mean, standard error) from n fresh draws."""
    D = draw(model, n, seed).as_matrix()
    losses = policy_losses(policy, D, p)
    return float(losses.mean()), float(losses.std(ddof=1) / math.sqrt(n))


def model_risk(
    policy: Policy,
    model: DemandModel,
    p: SystemParams,
    eval_samples: int = 2000,
    seed: int | tuple[int, ...] = 0,
) -> float:
    """Risk under a demand model: exact when available, else Monte Carlo.

    Exactness order: finite support enumeration, then independent-integer
    lattice evaluation, then ``eval_samples`` fresh draws.
    """
    atoms = support_atoms(model)
    if atoms is not None:
        return finite_support_risk(policy, atoms, p)
    pmfs = marginal_pmfs(model)
    if pmfs is not None:
        value = exact_risk(policy, pmfs, p)
        if value is not None:
            return value
    return mc_risk(policy, model, eval_samples, seed, p)[0]


def enumerate_product_risk(
    policy: Policy, pmfs: Sequence[np.ndarray], p: SystemParams
) -> float:
    """Brute-force expected loss by enumerating the full product support.

    Test oracle for the lattice evaluators; cost is the product of support
    sizes, so only usable on tiny instances.
    """
    supports = [np.flatnonzero(f) for f in pmfs]
    count = 1
    for s in supports:
        count *= len(s)
        if count > 200_000:
            raise ValueError("product support too large to enumerate")
    total = 0.0
    for combo in itertools.product(*supports):
        prob = 1.0
        for t, v in enumerate(combo):
            prob *= pmfs[t][v]
        loss = simulate(policy, [float(v) for v in combo], p, unchecked=True).avg_loss
        total += prob * loss
    return total
