"""Monte-Carlo estimators of Rademacher complexity and generalization error.

For the stationary base-stock class both the sign-weighted supremum and the
true-minus-empirical-risk supremum are piecewise linear in the level, so the
suprema are exact once evaluated on the union of all kink points.  Other
classes fall back to a parameter grid and are flagged approximate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ORDER_EPS, BudgetError, Dataset, SystemParams
from .demand import DemandModel, draw, make_rng, marginal_pmfs, support_atoms
from .evaluate import (
    _expected_cost_of_level,
    lead_demand_sums,
    lead_pmf,
    ss_losses_grid,
    st_losses,
)


def base_stock_loss_matrix(
    levels: np.ndarray, D: np.ndarray, p: SystemParams
) -> np.ndarray:
    """Exact loss matrix ell(level, path), shape (n_levels, N)."""
    lv = np.asarray(levels, dtype=float)
    sums = lead_demand_sums(D, p.L)
    out = np.empty((len(lv), D.shape[0]))
    for i in range(D.shape[0]):
        a = np.sort(sums[i])
        prefix = np.concatenate([[0.0], np.cumsum(a)])
        k = np.searchsorted(a, lv, side="left")
        hold = p.h * (lv * k - prefix[k])
        back = p.b * ((prefix[-1] - prefix[k]) - lv * (len(a) - k))
        out[:, i] = (hold + back) / p.T
    if p.K > 0:
        charges = (D[:, : p.T - 1] > ORDER_EPS).sum(axis=1).astype(float)
        out += (p.K / p.T) * charges[None, :]
        out += (p.K / p.T) * (lv[:, None] - p.x1 > ORDER_EPS)
    return out


def base_stock_kinks(D: np.ndarray, p: SystemParams, extra: Sequence[float] = ()) -> np.ndarray:
    """Candidate levels: every lead-demand sum in range plus the endpoints."""
    hi = p.level_cap()
    sums = lead_demand_sums(D, p.L).ravel()
    cands = np.concatenate([sums, [0.0, hi], np.asarray(list(extra), dtype=float)])
    cands = cands[(cands >= 0.0) & (cands <= hi)]
    return np.unique(cands)


@dataclass(frozen=True)
class RademacherReport:
    estimate: float
    stderr: float
    draws: int
    exact_sup: bool


def rademacher_estimate(
    data: Dataset | None = None,
    p: SystemParams | None = None,
    policy_class: str = "base-stock",
    loss_matrix: np.ndarray | None = None,
    draws: int = 200,
    seed: int | tuple[int, ...] = 0,
) -> RademacherReport:
    """Monte-Carlo mean over sign vectors of sup_policy (1/N) sum_i sign_i loss_i.

    Either pass a precomputed ``loss_matrix`` (policies x samples), or a
    dataset with ``policy_class='base-stock'``, for which the supremum is
    exact via kink enumeration.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    exact = True
    if loss_matrix is None:
        if data is None or p is None:
            raise ValueError("need either loss_matrix or (data, p)")
        if policy_class != "base-stock":
            raise ValueError(
                "only the base-stock supremum is built in; pass loss_matrix "
                "for other classes"
            )
        D = data.as_matrix()
        loss_matrix = base_stock_loss_matrix(base_stock_kinks(D, p), D, p)
    else:
        loss_matrix = np.asarray(loss_matrix, dtype=float)
        exact = False
    n = loss_matrix.shape[1]
    key = seed if isinstance(seed, tuple) else (seed,)
    rng = make_rng(*key)
    signs = rng.choice([-1.0, 1.0], size=(draws, n))
    sups = (signs @ loss_matrix.T / n).max(axis=1)
    return RademacherReport(
        estimate=float(sups.mean()),
        stderr=float(sups.std(ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0,
        draws=draws,
        exact_sup=exact,
    )


# ---------------------------------------------------------------------------
# generalization error
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeReport:
    mean_ge: float
    stderr: float
    reps: int
    values: tuple[float, ...]
    exact_sup: bool


def _base_stock_true_curve(
    cands: np.ndarray, model: DemandModel, p: SystemParams, eval_samples: int,
    seed: tuple[int, ...],
) -> tuple[np.ndarray, np.ndarray]:
    """True risk of each candidate level, plus any extra kinks it implies."""
    atoms = support_atoms(model)
    if atoms is not None:
        kinks = base_stock_kinks(atoms, p)
        matrix = base_stock_loss_matrix(cands, atoms, p)
        return matrix.mean(axis=1), kinks
    pmfs = marginal_pmfs(model)
    if pmfs is not None:
        total = np.zeros(len(cands))
        for t in range(1, p.T + 1):
            total += _expected_cost_of_level(cands, lead_pmf(pmfs, t, p.L), p)
        if p.K > 0:
            charged = sum(1.0 - pmfs[t - 2][0] for t in range(2, p.T + 1))
            total += p.K * (charged + (cands - p.x1 > ORDER_EPS))
        umax = max(len(f) for f in pmfs) - 1
        kinks = np.arange(0.0, min((p.L + 1) * umax, p.level_cap()) + 1.0)
        return total / p.T, kinks
    D_eval = draw(model, eval_samples, seed).as_matrix()
    kinks = base_stock_kinks(D_eval, p)
    matrix = base_stock_loss_matrix(cands, D_eval, p)
    return matrix.mean(axis=1), kinks


def ge_estimate(
    model: DemandModel,
    n_train: int,
    p: SystemParams,
    policy_class: str = "base-stock",
    reps: int = 100,
    eval_samples: int = 2000,
    seed: int = 0,
    grid_step: float = 1.0,
    grid_budget: int = 200_000,
) -> GeReport:
    """Mean over dataset replications of sup_policy (true risk - empirical risk).

    For the base-stock class the supremum is exact: both risks are piecewise
    linear in the level and every kink of either is a candidate.  For the
    reorder-point and per-period-level classes the supremum is taken over a
    parameter grid and the report is flagged approximate.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    values = []
    exact = policy_class == "base-stock"
    for rep in range(reps):
        data = draw(model, n_train, (seed, rep, 0))
        D = data.as_matrix()
        if policy_class == "base-stock":
            base = base_stock_kinks(D, p)
            true_risks, extra = _base_stock_true_curve(
                base, model, p, eval_samples, (seed, rep, 1)
            )
            cands = np.unique(np.concatenate([base, extra]))
            if len(cands) != len(base):
                true_risks, _ = _base_stock_true_curve(
                    cands, model, p, eval_samples, (seed, rep, 1)
                )
            emp = base_stock_loss_matrix(cands, D, p).mean(axis=1)
            values.append(float((true_risks - emp).max()))
        elif policy_class == "ss":
            lo, hi, _ = p.ss_bounds()
            s_axis = np.arange(lo, hi + grid_step / 2, grid_step)
            S_axis = s_axis[s_axis >= 0.0]
            sg, Sg = np.meshgrid(s_axis, S_axis, indexing="ij")
            keep = sg <= Sg
            s_vals, S_vals = sg[keep], Sg[keep]
            if len(s_vals) > grid_budget:
                raise BudgetError("(s, S) grid exceeds budget")
            emp = ss_losses_grid(s_vals, S_vals, D, p).mean(axis=1)
            D_eval = _eval_paths(model, eval_samples, (seed, rep, 1))
            true_risks = ss_losses_grid(s_vals, S_vals, D_eval, p).mean(axis=1)
            values.append(float((true_risks - emp).max()))
        elif policy_class == "st":
            hi = p.level_cap()
            axis = np.arange(0.0, hi + grid_step / 2, grid_step)
            if len(axis) ** p.horizon > grid_budget:
                raise BudgetError("per-period grid exceeds budget")
            D_eval = _eval_paths(model, eval_samples, (seed, rep, 1))
            best = -math.inf
            for combo in itertools.product(axis, repeat=p.horizon):
                lv = np.asarray(combo)
                gap = float(
                    st_losses(lv, D_eval, p).mean() - st_losses(lv, D, p).mean()
                )
                best = max(best, gap)
            values.append(best)
        else:
            raise ValueError(f"unknown policy class {policy_class!r}")
    arr = np.asarray(values)
    return GeReport(
        mean_ge=float(arr.mean()),
        stderr=float(arr.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0,
        reps=reps,
        values=tuple(float(v) for v in arr),
        exact_sup=exact,
    )


def _eval_paths(model: DemandModel, eval_samples: int, seed: tuple[int, ...]) -> np.ndarray:
    atoms = support_atoms(model)
    if atoms is not None:
        return np.asarray(atoms, dtype=float)
    return draw(model, eval_samples, seed).as_matrix()


def regression_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of y against x."""
    return float(np.polyfit(np.asarray(x, dtype=float), np.asarray(y, dtype=float), 1)[0])
