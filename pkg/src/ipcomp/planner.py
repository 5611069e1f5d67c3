"""Retrieval planning: choose how many bitplanes to load per level.

The error of a plan is estimated as ``sum_l p**(l-1) * delta_l[d_l] + eb``
with level 1 the finest, where ``d_l`` is the number of discarded planes.
Both planning modes are knapsack dynamic programs over levels; the
continuous side constraint (error slack or byte budget) is discretized into
``BUCKETS`` units with ceiling costs, so a plan that fits the discretized
budget always fits the real one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .archive import ArchiveIndex, RetrievalPlan
from .bpcodec import NPLANES
from .errors import InfeasibleRequestError

__all__ = [
    "BUCKETS",
    "ErrorModel",
    "bound_for_plan",
    "plan_for_error",
    "plan_for_size",
]

BUCKETS = 1024
_NOPE = np.iinfo(np.int64).max // 4


@dataclass
class ErrorModel:
    """Per-level loss tables and loaded sizes, indexed ``[level - 1, d]``.

    ``delta[l-1, d]`` is the loss caused by discarding the ``d`` least
    significant planes of level ``l``; ``sizes[l-1, d]`` the payload bytes
    loaded for that level in that case.
    """

    delta: np.ndarray
    sizes: np.ndarray
    eb: float
    amplification: float = 1.0
    progressive_levels: int | None = None

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=np.float64)
        self.sizes = np.asarray(self.sizes, dtype=np.int64)
        if self.delta.shape != self.sizes.shape or self.delta.shape[1] != NPLANES + 1:
            raise ValueError("delta and size tables must both be (levels, 33)")
        if self.progressive_levels is None:
            self.progressive_levels = self.levels

    @property
    def levels(self) -> int:
        return self.delta.shape[0]

    @classmethod
    def from_index(cls, index: ArchiveIndex) -> "ErrorModel":
        """Model for a stored archive.

        The stored loss tables already measure how each level's loss spreads
        through every later prediction, so no further amplification applies.
        Dropping more planes can occasionally lose less than dropping fewer;
        the running maximum over ``d`` keeps the model monotone.
        """
        h = index.header
        delta = np.stack([index.records[l].delta for l in range(1, h.levels + 1)])
        delta = np.maximum.accumulate(delta, axis=1)
        sizes = np.array([
            [index.records[l].loaded_size(NPLANES - d) for d in range(NPLANES + 1)]
            for l in range(1, h.levels + 1)
        ])
        return cls(delta, sizes, h.eb, 1.0, h.progressive_levels)

    def err(self, level: int, d) -> np.ndarray:
        return self.amplification ** (level - 1) * self.delta[level - 1, d]

    def err_table(self) -> np.ndarray:
        weights = self.amplification ** np.arange(self.levels, dtype=np.float64)
        return weights[:, None] * self.delta

    def allowed(self, choices=None) -> list[np.ndarray]:
        """Discard counts each level may use; non-progressive levels load everything."""
        base = np.arange(NPLANES + 1) if choices is None else np.unique(np.asarray(choices, dtype=int))
        if base.size == 0 or base.min() < 0 or base.max() > NPLANES or 0 not in base:
            raise ValueError("plane choices must lie in 0..32 and include 0")
        out = []
        for level in range(1, self.levels + 1):
            out.append(base if level <= self.progressive_levels else np.array([0]))
        return out

    def plan_size(self, plan: RetrievalPlan) -> int:
        return int(sum(self.sizes[l - 1, plan.discarded(l)] for l in range(1, self.levels + 1)))

    def mandatory_size(self, choices=None) -> int:
        return int(sum(self.sizes[i, a].min() for i, a in enumerate(self.allowed(choices))))


def bound_for_plan(model: ErrorModel, plan: RetrievalPlan) -> float:
    """Worst-case max error of a plan: ``sum_l p**(l-1) * delta_l[d_l] + eb``."""
    if len(plan.loaded) != model.levels:
        raise ValueError(f"plan covers {len(plan.loaded)} levels, model has {model.levels}")
    total = 0.0
    for level in range(1, model.levels + 1):
        total += float(model.err(level, plan.discarded(level)))
    return total + model.eb


def _ceil_units(values: np.ndarray, unit: float) -> np.ndarray:
    """Integer costs ``c`` with ``c * unit >= value``; zero costs nothing."""
    values = np.asarray(values, dtype=np.float64)
    if unit == 0:
        return np.where(values > 0, _NOPE, 0).astype(np.int64)
    with np.errstate(over="ignore", invalid="ignore"):
        scaled = np.ceil(values / unit)
        scaled = np.where(scaled * unit < values, scaled + 1, scaled)
    scaled = np.where(values > 0, scaled, 0)
    return np.minimum(np.nan_to_num(scaled, nan=_NOPE, posinf=_NOPE), _NOPE).astype(np.int64)


def _knapsack(costs, primary, secondary, budget: int, choices):
    """Minimize ``(primary, secondary)`` lexicographically subject to ``sum costs <= budget``.

    Levels are stacked finest first and the plan is read back from the
    coarsest level, keeping the largest discard count among equal optima.
    """
    nlevels = len(choices)
    best_p = np.zeros(budget + 1)
    best_s = np.zeros(budget + 1)
    pick = []
    for i in range(nlevels):
        new_p = np.full(budget + 1, np.inf)
        new_s = np.full(budget + 1, np.inf)
        new_d = np.full(budget + 1, -1, dtype=np.int64)
        for d in sorted(choices[i], reverse=True):
            c = int(costs[i][d])
            if c > budget:
                continue
            cand_p = np.full(budget + 1, np.inf)
            cand_s = np.full(budget + 1, np.inf)
            cand_p[c:] = best_p[:budget + 1 - c] + primary[i][d]
            cand_s[c:] = best_s[:budget + 1 - c] + secondary[i][d]
            better = (cand_p < new_p) | ((cand_p == new_p) & (cand_s < new_s))
            new_p[better] = cand_p[better]
            new_s[better] = cand_s[better]
            new_d[better] = d
        best_p, best_s = new_p, new_s
        pick.append(new_d)
    if not np.isfinite(best_p[budget]):
        return None
    discarded = [0] * nlevels
    room = budget
    for i in range(nlevels - 1, -1, -1):
        d = int(pick[i][room])
        discarded[i] = d
        room -= int(costs[i][d])
    return discarded


def _prune_free(model: ErrorModel, allowed, err):
    """Drop discard counts dominated by a larger zero-loss count."""
    out = []
    for i, a in enumerate(allowed):
        free = a[err[i, a] == 0]
        floor = free.max() if free.size else 0
        out.append(a[a >= floor])
    return out


def _finish(model: ErrorModel, discarded) -> RetrievalPlan:
    plan = RetrievalPlan(tuple(NPLANES - d for d in discarded))
    return RetrievalPlan(plan.loaded, model.plan_size(plan), bound_for_plan(model, plan))


def plan_for_error(model: ErrorModel, max_error: float, choices=None) -> RetrievalPlan:
    """Cheapest plan whose estimated error stays within ``max_error``."""
    if not max_error >= model.eb:
        raise InfeasibleRequestError(
            f"requested error {max_error} is below the archive error bound {model.eb}"
        )
    err = model.err_table()
    allowed = _prune_free(model, model.allowed(choices), err)
    slack = max_error - model.eb
    budget = BUCKETS
    while budget > 0:
        unit = slack / budget if math.isfinite(slack) else math.inf
        costs = [_ceil_units(err[i], unit) for i in range(model.levels)]
        sizes = [model.sizes[i].astype(np.float64) for i in range(model.levels)]
        secondary = [np.zeros(NPLANES + 1)] * model.levels
        discarded = _knapsack(costs, sizes, secondary, budget, allowed)
        if discarded is None:
            break
        plan = _finish(model, discarded)
        if plan.bound <= max_error:
            return plan
        # float summation landed an ulp over; tighten the discrete budget
        budget -= 1
    raise InfeasibleRequestError(f"no plan keeps the estimated error within {max_error}")


def plan_for_size(model: ErrorModel, max_bytes: float, choices=None) -> RetrievalPlan:
    """Plan with the smallest estimated error loading at most ``max_bytes``."""
    allowed = _prune_free(model, model.allowed(choices), model.err_table())
    mandatory = int(sum(model.sizes[i, a].min() for i, a in enumerate(allowed)))
    if not max_bytes >= mandatory:
        raise InfeasibleRequestError(
            f"byte budget {max_bytes} is below the mandatory load of {mandatory} bytes"
        )
    err = model.err_table()
    extra = [model.sizes[i] - model.sizes[i, a].min() for i, a in enumerate(allowed)]
    room = max_bytes - mandatory
    unit = room / BUCKETS if math.isfinite(room) else math.inf
    costs = [_ceil_units(e, unit) for e in extra]
    sizes = [model.sizes[i].astype(np.float64) for i in range(model.levels)]
    discarded = _knapsack(costs, list(err), sizes, BUCKETS, allowed)
    if discarded is None:
        raise InfeasibleRequestError(f"no plan fits in {max_bytes} bytes")
    return _finish(model, discarded)
