"""Empirical risk minimization over the three policy classes.

The one-dimensional fitters are exact: the empirical risk is piecewise
linear in the level parameter, so enumerating its kinks finds a global
minimizer.  The reorder-point fitter enumerates gap intervals (between
consecutive-demand-sum breakpoints) within which the reorder schedule of
every sample is frozen.  The per-period-level fitter is a multi-start
cyclic coordinate descent whose line searches are themselves exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ORDER_EPS,
    BaseStock,
    BudgetError,
    Dataset,
    NonStationary,
    Policy,
    SsPolicy,
    SystemParams,
    delta_breakpoints,
    reorder_schedule,
)
from .demand import make_rng
from .evaluate import dataset_risk, lead_demand_sums, ss_losses_grid, st_losses


@dataclass(frozen=True)
class FitResult:
    """A fitted policy with its in-sample risk and method diagnostics."""

    policy: Policy
    in_sample_risk: float
    method: str
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StOptions:
    """Options for the per-period-level local search."""

    restarts: int = 8
    max_sweeps: int = 100
    tol: float = 1e-8
    seed: int = 0
    jitter: float | None = None  # default: 5% of the level cap


# ---------------------------------------------------------------------------
# stationary base-stock
# ---------------------------------------------------------------------------


class _PiecewiseLinearRisk:
    """Evaluates sum_j c(S - a_j) / scale exactly at many S via prefix sums."""

    def __init__(self, kink_sums: np.ndarray, p: SystemParams, scale: float):
        self.sorted = np.sort(np.asarray(kink_sums, dtype=float))
        self.prefix = np.concatenate([[0.0], np.cumsum(self.sorted)])
        self.p = p
        self.scale = scale

    def __call__(self, levels: np.ndarray) -> np.ndarray:
        lv = np.atleast_1d(np.asarray(levels, dtype=float))
        k = np.searchsorted(self.sorted, lv, side="left")
        total = self.prefix[-1]
        m = len(self.sorted)
        holding = self.p.h * (lv * k - self.prefix[k])
        backlog = self.p.b * ((total - self.prefix[k]) - lv * (m - k))
        return (holding + backlog) / self.scale


def _base_stock_fixed_charges(D: np.ndarray, p: SystemParams) -> float:
    """Per-policy-independent part of the fixed-cost charges (periods >= 2)."""
    if p.K == 0:
        return 0.0
    return p.K * float((D[:, : p.T - 1] > ORDER_EPS).sum()) / (D.shape[0] * p.T)


def erm_base_stock(data: Dataset, p: SystemParams) -> FitResult:
    """Exact global minimizer of the empirical risk over levels in [0, H].

    The risk is convex piecewise-linear in the level with kinks at the
    lead-time demand sums, so it is evaluated at every kink in range plus
    the interval endpoints; ties go to the smallest level.
    """
    D = data.as_matrix()
    hi = p.level_cap()
    sums = lead_demand_sums(D, p.L).ravel()
    cands = np.unique(np.concatenate([sums[(sums >= 0) & (sums <= hi)], [0.0, hi]]))
    risk_fn = _PiecewiseLinearRisk(sums, p, D.shape[0] * p.T)
    risks = risk_fn(cands) + _base_stock_fixed_charges(D, p)
    if p.K > 0:
        risks = risks + (p.K / p.T) * (cands - p.x1 > ORDER_EPS)
    best = int(np.argmin(risks))
    policy = BaseStock(float(cands[best]))
    return FitResult(
        policy=policy,
        in_sample_risk=dataset_risk(policy, data, p),
        method="breakpoint-enumeration",
        diagnostics={"candidate_count": int(len(cands))},
    )


# ---------------------------------------------------------------------------
# (s, S) with a fixed gap (used by the square-root-gap variant)
# ---------------------------------------------------------------------------


def _contiguous_sums(row: np.ndarray) -> np.ndarray:
    prefix = np.concatenate([[0.0], np.cumsum(row)])
    sums = prefix[None, :] - prefix[:, None]
    return sums[sums > 0]


def fit_level_fixed_gap(data: Dataset, p: SystemParams, delta: float) -> FitResult:
    """Exact minimization over S in [0, H + delta] of the (s, S) risk with
    s = S - delta.

    The level range extends above the one-level cap by the fixed gap so
    that the implied reorder point spans [-delta, H]; with the cap binding
    the family could never cover a full replenishment cycle plus safety
    stock.  The reorder schedule may depend on S through the timing of the
    first order when x1 > s, so candidates include every contiguous demand
    sum, every first-order threshold (and a point just below it, where the
    risk can jump), and the endpoints.  All candidates are evaluated by
    batch simulation, which makes the result exact for a piecewise-linear
    risk whose kinks and jumps all lie in the candidate set.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    D = data.as_matrix()
    hi = p.level_cap() + delta
    cands = [np.array([0.0, hi])]
    for row in D:
        sums = _contiguous_sums(row)
        cands.append(sums)
        # first-order thresholds: S = x1 + delta - (demand before t)
        prefix = np.concatenate([[0.0], np.cumsum(row)])[: p.horizon]
        edges = p.x1 + delta - prefix
        cands.append(edges)
        cands.append(edges - 1e-9)
    allc = np.unique(np.concatenate(cands))
    allc = allc[(allc >= 0.0) & (allc <= hi)]
    if not len(allc):
        allc = np.array([0.0])
    risks = ss_losses_grid(allc - delta, allc, D, p).mean(axis=1)
    best = int(np.argmin(risks))
    S = float(allc[best])
    policy = SsPolicy(S - delta, S)
    return FitResult(
        policy=policy,
        in_sample_risk=dataset_risk(policy, data, p),
        method="fixed-gap-breakpoint-enumeration",
        diagnostics={"candidate_count": int(len(allc)), "delta": delta},
    )


def square_root_gap(data: Dataset, p: SystemParams) -> float:
    """Cost-balancing order gap sqrt(2 K mean-demand (h+b) / (h b))."""
    if p.h <= 0 or p.b <= 0:
        raise ValueError("square-root gap requires h > 0 and b > 0")
    mu = float(data.as_matrix().mean())
    return math.sqrt(2.0 * p.K * mu * (p.h + p.b) / (p.h * p.b))


def erm_eoq_base_stock(data: Dataset, p: SystemParams) -> FitResult:
    """Single-parameter (s, S) fit with the gap pinned by the square-root formula."""
    delta = square_root_gap(data, p)
    result = fit_level_fixed_gap(data, p, delta)
    return FitResult(
        policy=result.policy,
        in_sample_risk=result.in_sample_risk,
        method="square-root-gap",
        diagnostics=dict(result.diagnostics),
    )


# ---------------------------------------------------------------------------
# (s, S)
# ---------------------------------------------------------------------------


def _ss_interval_windows(
    D: np.ndarray, p: SystemParams, rep: float
) -> tuple[np.ndarray, int]:
    """Window demand sums and total reorder count for a frozen-schedule gap."""
    windows = []
    n_orders = 0
    for row in D:
        times = reorder_schedule(rep, row, p).times
        n_orders += len(times)
        prefix = np.concatenate([[0.0], np.cumsum(row)])
        bounds = list(times[1:]) + [p.T + 1]
        for tj, tnext in zip(times, bounds):
            # periods t̂ = tj + L .. tnext + L - 1 are served by the tj order
            ths = np.arange(tj + p.L, tnext + p.L)
            windows.append(prefix[ths] - prefix[tj - 1])
    return np.concatenate(windows), n_orders


def erm_sS(data: Dataset, p: SystemParams, mode: str = "exact") -> FitResult:
    """Global empirical risk minimizer over reorder-point policies.

    ``exact`` mode enumerates gap intervals between demand-sum breakpoints;
    within an interval every sample's reorder schedule is frozen and the risk
    is convex piecewise-linear in S with kinks at the in-window demand sums.
    ``integer-grid`` mode is a brute-force search over integer (s, S) pairs
    and requires integer-valued demands.  Ties break toward the smallest gap,
    then the smallest S.
    """
    lo, hi, capped = p.ss_bounds()
    if p.x1 > lo:
        raise ValueError(f"x1={p.x1} must not exceed the reorder-point bound {lo}")
    D = data.as_matrix()

    if mode == "integer-grid":
        if not np.all(D == np.rint(D)):
            raise ValueError("integer-grid mode requires integer demands")
        s_lo = math.ceil(lo)
        s_hi = math.floor(hi)
        span = s_hi - s_lo + 1
        if span <= 0:
            raise ValueError("empty integer (s, S) grid")
        if span * span > 4_000_000:
            raise BudgetError(f"integer grid of {span}^2 pairs exceeds budget")
        s_grid, S_grid = np.meshgrid(
            np.arange(s_lo, s_hi + 1, dtype=float),
            np.arange(max(s_lo, 0), s_hi + 1, dtype=float),
            indexing="ij",
        )
        keep = s_grid <= S_grid
        s_vals, S_vals = s_grid[keep], S_grid[keep]
        risks = ss_losses_grid(s_vals, S_vals, D, p).mean(axis=1)
        order = np.lexsort((S_vals, S_vals - s_vals, risks))
        k = order[0]
        policy = SsPolicy(float(s_vals[k]), float(S_vals[k]))
        return FitResult(
            policy=policy,
            in_sample_risk=dataset_risk(policy, data, p),
            method="integer-grid",
            diagnostics={"candidate_count": int(len(s_vals)), "capped_bounds": capped},
        )

    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")

    delta_cap = hi - lo
    bps = sorted(set().union(*(delta_breakpoints(row, p) for row in D)))
    points = [v for v in bps if 0.0 < v <= delta_cap]
    intervals: list[tuple[float, float, float]] = [(0.0, 0.0, 0.0)]  # (a, b, rep)
    prev = 0.0
    for v in points:
        intervals.append((prev, v, (prev + v) / 2.0))
        prev = v
    if delta_cap > prev:
        intervals.append((prev, delta_cap, (prev + delta_cap) / 2.0))

    scale = D.shape[0] * p.T
    best: tuple[float, float, float] | None = None  # (risk, delta, S)
    n_cands = 0
    for a, b, rep in intervals:
        windows, n_orders = _ss_interval_windows(D, p, rep)
        risk_fn = _PiecewiseLinearRisk(windows, p, scale)
        cands = np.unique(
            np.concatenate([windows, [0.0, hi, min(max(lo + a + 1e-9, 0.0), hi)]])
        )
        cands = cands[(cands >= 0.0) & (cands <= hi)]
        # feasibility: some gap in the interval must satisfy s = S - gap >= lo
        feasible = cands - lo > a if a > 0 or b > 0 else cands - lo >= 0
        cands = cands[feasible]
        if not len(cands):
            continue
        n_cands += len(cands)
        risks = risk_fn(cands)
        if p.K > 0:
            if rep == 0.0:
                per_period = float((D[:, : p.T - 1] > ORDER_EPS).sum())
                risks = risks + p.K * (
                    per_period + D.shape[0] * (cands - p.x1 > ORDER_EPS)
                ) / scale
            else:
                first = (cands - p.x1 > ORDER_EPS).astype(float)
                risks = risks + p.K * (
                    (n_orders - D.shape[0]) + D.shape[0] * first
                ) / scale
        for k in np.argsort(risks, kind="stable"):
            S = float(cands[k])
            delta = 0.0 if rep == 0.0 else min(rep, S - lo)
            cand = (float(risks[k]), delta, S)
            if best is None or cand < best:
                best = cand
            break  # only the interval's minimizer can improve

    if best is None:
        raise ValueError("no feasible (s, S) candidate")
    _, delta, S = best
    policy = SsPolicy(S - delta, S)
    return FitResult(
        policy=policy,
        in_sample_risk=dataset_risk(policy, data, p),
        method="gap-interval-enumeration",
        diagnostics={
            "candidate_count": n_cands,
            "interval_count": len(intervals),
            "capped_bounds": capped,
        },
    )


# ---------------------------------------------------------------------------
# per-period order-up-to levels
# ---------------------------------------------------------------------------


def _coordinate_minimum(
    S: np.ndarray,
    t: int,
    D: np.ndarray,
    pre: np.ndarray,
    p: SystemParams,
    cap: float,
) -> float:
    """Exact minimizer over [0, cap] of the empirical risk in coordinate t.

    Each charged period t̂ >= t + L contributes a piece that is flat until
    the coordinate's score overtakes the running maximum of the other
    levels, then follows the one-period cost; the total is piecewise linear,
    so it is minimized by sweeping its slope-change events.
    """
    n, horizon = D.shape
    scores = S[None, :] + pre[:, :horizon]
    scores[:, t - 1] = -np.inf
    run = np.maximum.accumulate(scores, axis=1)
    G = np.maximum(run[:, t - 1 : p.T], p.x1)  # order periods j = t .. T
    A = pre[:, t - 1][:, None]
    W = pre[:, t + p.L : p.T + p.L + 1]
    v1 = (G - A).ravel()
    v2 = (W - A).ravel()
    scale = n * p.T

    base = float(
        (
            p.h * np.maximum(np.maximum(G, A) - W, 0.0)
            - p.b * np.minimum(np.maximum(G, A) - W, 0.0)
        ).sum()
    ) / scale

    sloped = v1 < v2
    positions = np.concatenate([v1[sloped], v2[sloped], v1[~sloped]])
    deltas = np.concatenate(
        [
            np.full(sloped.sum(), -p.b),
            np.full(sloped.sum(), p.b + p.h),
            np.full((~sloped).sum(), p.h),
        ]
    ) / scale

    order = np.argsort(positions, kind="stable")
    positions = positions[order]
    deltas = deltas[order]
    start = int(np.searchsorted(positions, 0.0, side="right"))
    stop = int(np.searchsorted(positions, cap, side="left"))
    slope0 = float(deltas[:start].sum())
    inner = positions[start:stop]
    pts = np.concatenate([[0.0], inner, [cap]])
    slopes = slope0 + np.concatenate([[0.0], np.cumsum(deltas[start:stop])])
    values = base + np.concatenate([[0.0], np.cumsum(slopes * np.diff(pts))])
    return float(pts[int(np.argmin(values))])


def _st_risk(levels: np.ndarray, D: np.ndarray, p: SystemParams) -> float:
    return float(st_losses(levels, D, p).mean())


def erm_St(data: Dataset, p: SystemParams, opts: StOptions | None = None) -> FitResult:
    """Multi-start cyclic coordinate descent over per-period order-up-to levels.

    Requires K = 0 (the per-period-level class is fitted without fixed
    costs).  Restart 0 starts from the stationary base-stock fit; later
    restarts start from per-period critical-fractile quantiles of lead-time
    demand plus seeded uniform jitter.  Each coordinate step is an exact
    line minimization, so every sweep is monotone.
    """
    if p.K != 0:
        raise ValueError("per-period-level fitting requires K = 0")
    opts = opts or StOptions()
    D = data.as_matrix()
    n, horizon = D.shape
    cap = p.level_cap()
    pre = np.concatenate([np.zeros((n, 1)), np.cumsum(D, axis=1)], axis=1)

    fractile = p.b / (p.b + p.h) if p.b + p.h > 0 else 0.5
    lead = lead_demand_sums(D, p.L)  # windows starting at t = 1 .. T
    quantiles = np.quantile(lead, fractile, axis=0)
    jitter = opts.jitter if opts.jitter is not None else 0.05 * cap
    rng = make_rng(opts.seed)

    starts = [np.full(p.T, erm_base_stock(data, p).policy.S)]
    for _ in range(max(opts.restarts - 1, 0)):
        starts.append(
            np.clip(quantiles + rng.uniform(-jitter, jitter, p.T), 0.0, cap)
        )

    best_levels: np.ndarray | None = None
    best_risk = math.inf
    converged = False
    sweeps_used = 0
    for start in starts:
        levels = np.zeros(horizon)
        levels[: p.T] = np.clip(start, 0.0, cap)
        risk = _st_risk(levels, D, p)
        ok = False
        for sweep in range(opts.max_sweeps):
            for t in range(1, p.T + 1):
                levels[t - 1] = _coordinate_minimum(levels, t, D, pre, p, cap)
            new_risk = _st_risk(levels, D, p)
            sweeps_used += 1
            if risk - new_risk < opts.tol:
                risk = min(risk, new_risk)
                ok = True
                break
            risk = new_risk
        if risk < best_risk:
            best_risk = risk
            best_levels = levels.copy()
            converged = ok
    assert best_levels is not None
    policy = NonStationary(tuple(best_levels))
    return FitResult(
        policy=policy,
        in_sample_risk=dataset_risk(policy, data, p),
        method="coordinate-descent",
        diagnostics={
            "restarts": len(starts),
            "converged": converged,
            "sweeps": sweeps_used,
            "tol": opts.tol,
        },
    )


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------


def grid_oracle(
    data: Dataset,
    policy_class: str,
    step: float,
    p: SystemParams,
    budget: int = 2_000_000,
) -> FitResult:
    """Exhaustive minimizer over a parameter grid, for tests and benchmarks.

    ``policy_class`` is one of ``base-stock``, ``ss``, ``st``.  Raises
    BudgetError when the grid would exceed ``budget`` points.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    D = data.as_matrix()

    if policy_class == "base-stock":
        hi = p.level_cap()
        grid = np.arange(0.0, hi + step / 2, step)
        if len(grid) > budget:
            raise BudgetError("base-stock grid exceeds budget")
        risk_fn = _PiecewiseLinearRisk(
            lead_demand_sums(D, p.L).ravel(), p, D.shape[0] * p.T
        )
        risks = risk_fn(grid) + _base_stock_fixed_charges(D, p)
        if p.K > 0:
            risks = risks + (p.K / p.T) * (grid - p.x1 > ORDER_EPS)
        best = int(np.argmin(risks))
        policy: Policy = BaseStock(float(grid[best]))
        count = len(grid)
    elif policy_class == "ss":
        lo, hi, _ = p.ss_bounds()
        s_axis = np.arange(lo, hi + step / 2, step)
        S_axis = s_axis[s_axis >= 0.0]
        if len(s_axis) * len(S_axis) > budget:
            raise BudgetError("(s, S) grid exceeds budget")
        sg, Sg = np.meshgrid(s_axis, S_axis, indexing="ij")
        keep = sg <= Sg
        s_vals, S_vals = sg[keep], Sg[keep]
        risks = ss_losses_grid(s_vals, S_vals, D, p).mean(axis=1)
        order = np.lexsort((S_vals, S_vals - s_vals, risks))
        k = order[0]
        policy = SsPolicy(float(s_vals[k]), float(S_vals[k]))
        count = len(s_vals)
    elif policy_class == "st":
        import itertools

        hi = p.level_cap()
        axis = np.arange(0.0, hi + step / 2, step)
        if len(axis) ** p.horizon > budget:
            raise BudgetError("per-period grid exceeds budget")
        best_combo = None
        best_risk = math.inf
        for combo in itertools.product(axis, repeat=p.horizon):
            risk = float(st_losses(np.asarray(combo), D, p).mean())
            if risk < best_risk - 0.0:
                best_risk = risk
                best_combo = combo
        policy = NonStationary(best_combo)
        count = len(axis) ** p.horizon
    else:
        raise ValueError(f"unknown policy class {policy_class!r}")

    return FitResult(
        policy=policy,
        in_sample_risk=dataset_risk(policy, data, p),
        method="grid-oracle",
        diagnostics={"candidate_count": int(count), "step": step},
    )
