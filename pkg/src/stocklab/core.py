"""Exact simulation of a finite-horizon backlogged inventory system.

Period bookkeeping (1-indexed in the math, 0-indexed in arrays):
an order placed in period t arrives in period t + L, the on-hand level
after that arrival is y^t, demand d^t is then realized, and the next
level is x^{t+1} = y^t - d^t.  Losses are charged for periods
L+1 .. T+L and averaged over T.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Iterable, Sequence, Union

import numpy as np

# Orders below this size are treated as zero so that fixed-cost charges are
# never triggered by floating-point dust.
ORDER_EPS = 1e-12

# Fallback multiplier for policy caps that would otherwise be infinite
# (order-up-to bound with h == 0, reorder-point bound with b == 0).
CAP_MULTIPLIER = 10.0


class BudgetError(RuntimeError):
    """Raised when an exhaustive computation would exceed its size budget."""


@dataclass(frozen=True)
class SystemParams:
    """Horizon, cost, lead-time and bound parameters of the system.

    ``H`` and ``Hlo`` are optional overrides for the policy-parameter
    bounds; when left as ``None`` the per-class defaults are used
    (see :meth:`level_cap` and :meth:`ss_bounds`).
    """

    T: int
    L: int = 0
    h: float = 1.0
    b: float = 9.0
    K: float = 0.0
    U: float = 20.0
    x1: float = 0.0
    H: float | None = None
    Hlo: float | None = None

    def __post_init__(self) -> None:
        if self.T < 1 or int(self.T) != self.T:
            raise ValueError(f"T must be an integer >= 1, got {self.T}")
        if self.L < 0 or int(self.L) != self.L:
            raise ValueError(f"L must be an integer >= 0, got {self.L}")
        for name in ("h", "b", "K"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.U <= 0:
            raise ValueError("U must be positive")
        if self.Hlo is not None and self.H is not None and self.Hlo > self.H:
            raise ValueError("Hlo must not exceed H")

    @property
    def horizon(self) -> int:
        """Total number of simulated periods, T + L."""
        return self.T + self.L

    def level_cap(self) -> float:
        """Upper bound on order-up-to levels for the one-level policy classes."""
        if self.H is not None:
            return self.H
        return (self.L + 1) * self.U

    def ss_bounds(self) -> tuple[float, float, bool]:
        """Bounds ``(Hlo, H)`` for reorder-point policies plus a capped flag.

        ``H = (L+1) U / h`` and ``Hlo = min(0, (L+1) U (1 - 1/b))``; a zero
        cost rate would make the corresponding bound infinite, in which case
        a finite cap of ``+-CAP_MULTIPLIER * (L+1) U`` is substituted and the
        returned flag is set.
        """
        base = (self.L + 1) * self.U
        capped = False
        if self.H is not None:
            hi = self.H
        elif self.h > 0:
            hi = base / self.h
        else:
            hi = CAP_MULTIPLIER * base
            capped = True
        if self.Hlo is not None:
            lo = self.Hlo
        elif self.b > 0:
            lo = min(0.0, base * (1.0 - 1.0 / self.b))
        else:
            lo = -CAP_MULTIPLIER * base
            capped = True
        return lo, hi, capped

    def default_x1(self, policy: "Policy") -> "SystemParams":
        """Return a copy with ``x1`` set to the class default: the reorder-point
        lower bound for ``SsPolicy`` (so that an order is placed in period 1),
        zero otherwise."""
        if isinstance(policy, SsPolicy):
            lo, _, _ = self.ss_bounds()
            return replace(self, x1=lo)
        return replace(self, x1=0.0)


@dataclass(frozen=True)
class DemandSequence:
    """One realized demand path of length T + L."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if any(v < 0 for v in self.values):
            raise ValueError("demands must be nonnegative")

    def __len__(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class Dataset:
    """A list of demand sequences sharing a common length."""

    sequences: tuple[DemandSequence, ...]

    def __post_init__(self) -> None:
        seqs = tuple(
            s if isinstance(s, DemandSequence) else DemandSequence(tuple(s))
            for s in self.sequences
        )
        object.__setattr__(self, "sequences", seqs)
        if not seqs:
            raise ValueError("dataset must contain at least one sequence")
        lengths = {len(s) for s in seqs}
        if len(lengths) != 1:
            raise ValueError(f"all sequences must share one length, got {sorted(lengths)}")

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def n_periods(self) -> int:
        return len(self.sequences[0])

    def as_matrix(self) -> np.ndarray:
        """Demands as an (N, T+L) array."""
        return np.asarray([s.values for s in self.sequences], dtype=float)

    @staticmethod
    def from_matrix(matrix: Iterable[Iterable[float]]) -> "Dataset":
        return Dataset(tuple(DemandSequence(tuple(row)) for row in matrix))


@dataclass(frozen=True)
class BaseStock:
    """Order up to level S whenever the inventory position is below S."""

    S: float

    def __post_init__(self) -> None:
        if self.S < 0:
            raise ValueError("base-stock level must be nonnegative")


@dataclass(frozen=True)
class SsPolicy:
    """Order up to S whenever the inventory position falls to or below s."""

    s: float
    S: float

    def __post_init__(self) -> None:
        if self.s > self.S:
            raise ValueError("reorder point s must not exceed order-up-to level S")
        if self.S < 0:
            raise ValueError("order-up-to level must be nonnegative")

    @property
    def delta(self) -> float:
        """Minimum order quantity S - s."""
        return self.S - self.s


@dataclass(frozen=True)
class NonStationary:
    """Per-period order-up-to levels, one for each of the T + L periods."""

    levels: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        if any(v < 0 for v in self.levels):
            raise ValueError("order-up-to levels must be nonnegative")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.levels, dtype=float)


Policy = Union[BaseStock, SsPolicy, NonStationary]


@dataclass(frozen=True)
class Trajectory:
    """Per-period states and losses of one simulated path.

    Arrays are 0-indexed by period: ``x[0]`` is the initial level x^1 and
    ``x`` has one trailing entry for the post-horizon level.  ``per_period_loss``
    covers the charged window, periods L+1 .. T+L.
    """

    x: np.ndarray
    q: np.ndarray
    y: np.ndarray
    inventory_position: np.ndarray
    per_period_loss: np.ndarray
    avg_loss: float


def unit_cost(x: float, p: SystemParams) -> float:
    """One-period holding/backlogging cost h [x]^+ + b [-x]^+."""
    if x >= 0:
        return p.h * x
    return -p.b * x


def validate_policy(policy: Policy, p: SystemParams) -> None:
    """Raise ValueError if the policy parameters violate the class bounds."""
    if isinstance(policy, BaseStock):
        cap = p.level_cap()
        if not 0 <= policy.S <= cap:
            raise ValueError(f"base-stock level {policy.S} outside [0, {cap}]")
    elif isinstance(policy, SsPolicy):
        lo, hi, _ = p.ss_bounds()
        if not (lo <= policy.s and policy.S <= hi):
            raise ValueError(
                f"(s, S)=({policy.s}, {policy.S}) outside bounds [{lo}, {hi}]"
            )
        if p.x1 > lo:
            raise ValueError(
                f"initial level x1={p.x1} must not exceed the reorder-point bound {lo}"
            )
    elif isinstance(policy, NonStationary):
        cap = p.level_cap()
        if len(policy.levels) != p.horizon:
            raise ValueError(
                f"expected {p.horizon} levels, got {len(policy.levels)}"
            )
        if any(not 0 <= v <= cap for v in policy.levels):
            raise ValueError(f"order-up-to levels outside [0, {cap}]")
    else:
        raise TypeError(f"unknown policy type {type(policy)!r}")


def _order_quantity(policy: Policy, position: float, t: int) -> float:
    if isinstance(policy, BaseStock):
        return max(policy.S - position, 0.0)
    if isinstance(policy, SsPolicy):
        return policy.S - position if position <= policy.s else 0.0
    return max(policy.levels[t - 1] - position, 0.0)


def simulate(
    policy: Policy,
    d: DemandSequence | Sequence[float],
    p: SystemParams,
    unchecked: bool = False,
) -> Trajectory:
    """Simulate one demand path and return the full trajectory.

    With ``unchecked=True`` the policy-bound and initial-level checks are
    skipped; this is how deliberately out-of-bound configurations (unbounded
    order-up-to levels, positive initial stock) are simulated.
    """
    demands = d.values if isinstance(d, DemandSequence) else tuple(float(v) for v in d)
    n = p.horizon
    if len(demands) != n:
        raise ValueError(f"demand length {len(demands)} != T + L = {n}")
    if not unchecked:
        if p.x1 > 0:
            raise ValueError(f"initial level x1={p.x1} must be <= 0")
        validate_policy(policy, p)

    x = np.empty(n + 1)
    q = np.zeros(n)
    y = np.empty(n)
    pos = np.empty(n)
    loss = np.zeros(p.T)

    x[0] = p.x1
    for t in range(1, n + 1):
        position = x[t - 1] + sum(q[t1 - 1] for t1 in range(max(t - p.L, 1), t))
        pos[t - 1] = position
        order = _order_quantity(policy, position, t)
        q[t - 1] = order if order > ORDER_EPS else 0.0
        arrival = q[t - p.L - 1] if t - p.L >= 1 else 0.0
        y[t - 1] = x[t - 1] + arrival
        x[t] = y[t - 1] - demands[t - 1]
        if t >= p.L + 1:
            loss[t - p.L - 1] = unit_cost(x[t], p) + (p.K if arrival > 0 else 0.0)

    return Trajectory(
        x=x,
        q=q,
        y=y,
        inventory_position=pos,
        per_period_loss=loss,
        avg_loss=float(loss.sum() / p.T),
    )


def base_stock_loss(
    S: float, d: DemandSequence | Sequence[float], p: SystemParams
) -> float:
    """Closed-form time-averaged loss of the base-stock policy with level S.

    Requires ``S >= 0 >= x1`` so that the position is replenished to S every
    period; then the level after replenishment in period t is
    ``S - (d^{t-L} + ... + d^{t-1})`` and an order of size ``d^{t-1}`` is
    placed in every period t >= 2.
    """
    demands = d.values if isinstance(d, DemandSequence) else tuple(float(v) for v in d)
    n = p.horizon
    if len(demands) != n:
        raise ValueError(f"demand length {len(demands)} != T + L = {n}")
    if S < 0:
        raise ValueError("base-stock level must be nonnegative")

    dm = np.asarray(demands)
    window = np.concatenate([[0.0], np.cumsum(dm)])
    total = 0.0
    for t in range(p.L + 1, n + 1):
        lead = window[t] - window[t - p.L - 1]
        total += unit_cost(S - lead, p)
        order = S - p.x1 if t - p.L == 1 else dm[t - p.L - 2]
        if order > ORDER_EPS:
            total += p.K
    return total / p.T


@dataclass(frozen=True)
class ReorderSchedule:
    """Periods in 1..T at which a reorder-point policy places an order."""

    times: tuple[int, ...]

    @property
    def count(self) -> int:
        return len(self.times)


def reorder_schedule(
    delta: float, d: DemandSequence | Sequence[float], p: SystemParams
) -> ReorderSchedule:
    """Reordering periods of any (s, S) policy with gap S - s = delta.

    Assumes an order is placed in period 1 (``x1 <= s``); the next order
    follows as soon as demand accumulated since the last one reaches delta.
    Orders after period T are dropped (they cannot affect the loss window).
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    demands = d.values if isinstance(d, DemandSequence) else tuple(float(v) for v in d)
    if len(demands) < p.T:
        raise ValueError(f"need at least T = {p.T} demand values")
    times = [1]
    acc = 0.0
    for t in range(2, p.T + 1):
        acc += demands[t - 2]
        if acc >= delta:
            times.append(t)
            acc = 0.0
    return ReorderSchedule(times=tuple(times))


def delta_breakpoints(
    d: DemandSequence | Sequence[float], p: SystemParams
) -> list[float]:
    """Sorted distinct sums of consecutive demands within periods 1..T-1.

    The reorder schedule for gap ``delta`` is constant while ``delta`` varies
    within any interval between adjacent breakpoints (closed on the right).
    """
    demands = d.values if isinstance(d, DemandSequence) else tuple(float(v) for v in d)
    vals = set()
    for i in range(min(p.T - 1, len(demands))):
        acc = 0.0
        for j in range(i, min(p.T - 1, len(demands))):
            acc += demands[j]
            vals.add(acc)
    return sorted(vals)


def write_demands_csv(data: Dataset, path: str) -> None:
    """Write a dataset as CSV, one row per sequence, columns t1..t{T+L}."""
    n = data.n_periods
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"t{j}" for j in range(1, n + 1)])
        for seq in data.sequences:
            writer.writerow([repr(v) for v in seq.values])


def read_demands_csv(path: str) -> Dataset:
    """Read a dataset written by :func:`write_demands_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n = len(header)
        expected = [f"t{j}" for j in range(1, n + 1)]
        if header != expected:
            raise ValueError(f"unexpected CSV header {header!r}")
        rows = [tuple(float(v) for v in row) for row in reader if row]
    return Dataset.from_matrix(rows)
