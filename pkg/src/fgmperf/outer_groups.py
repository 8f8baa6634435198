"""Group generation: the outer cutting-plane layer.

Each outer step scores features by ``c_j = sum_k alpha_k sum_i (y_i - y^k_i) x_ij``,
takes the ``B`` largest ``c_j^2`` as a new group, and re-runs the bundle
method over the enlarged pool with all earlier label configurations kept.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .contingency import LossSpec
from .data_io import FeatureGroup, SparseDataset
from .inner_bundle import BundleState, run_inner

logger = logging.getLogger(__name__)


class NoInformativeFeaturesError(ValueError):
    pass


@dataclass
class GroupPool:
    B: int
    groups: list = field(default_factory=list)
    history: list = field(default_factory=list)
    converged: bool = False
    reason: str = ""

    def __contains__(self, group):
        return group in self.groups

    def add(self, group):
        if group in self.groups:
            raise ValueError(f"{group} already in pool")
        if group.budget_used > self.B:
            raise ValueError(f"{group} exceeds budget {self.B}")
        self.groups.append(group)

    def __len__(self):
        return len(self.groups)


def feature_scores(y_configs, alpha, dataset: SparseDataset) -> np.ndarray:
    """``c_j`` for every feature; one sparse product over the alpha-weighted label differences."""
    configs = np.asarray(y_configs, dtype=np.float64).reshape(-1, dataset.n)
    alpha = np.asarray(alpha, dtype=np.float64)
    if configs.shape[0] == 0 or not np.any(alpha):
        return np.zeros(dataset.m)
    mix = alpha @ (dataset.labels[None, :] - configs)  # sum_k alpha_k (y - y^k)
    return np.asarray(dataset.X.T @ mix).ravel()


def initial_scores(dataset: SparseDataset, C) -> np.ndarray:
    """Scores of the synthetic cut ``y' = -y`` at ``alpha = C``: ``2 C sum_i y_i x_i``."""
    return feature_scores([-dataset.labels], [C], dataset)


def most_violated_group(c, B, excluded=()) -> FeatureGroup:
    """The ``B`` features with largest ``c_j^2`` (ties by index); zero scores never enter."""
    if B < 1:
        raise ValueError("budget B must be at least 1")
    s = np.asarray(c, dtype=np.float64) ** 2
    if len(excluded):
        s = s.copy()
        s[np.asarray(list(excluded), dtype=np.int64)] = 0.0
    order = np.argsort(-s, kind="stable")[:B]
    order = order[s[order] > 0]
    if order.size == 0:
        raise NoInformativeFeaturesError("no informative features for current cuts")
    return FeatureGroup(order)


def brute_force_most_violated_group(c, B):
    """Exhaustive ``argmax sum_{j in d} c_j^2`` over all ``|d| <= B``; small m only."""
    s = np.asarray(c, dtype=np.float64) ** 2
    if s.size > 20:
        raise ValueError("subset enumeration limited to m <= 20")
    best, best_d = -1.0, ()
    for size in range(1, min(B, s.size) + 1):
        for d in itertools.combinations(range(s.size), size):
            v = float(s[list(d)].sum())
            if v > best:
                best, best_d = v, d
    return FeatureGroup(best_d), best


def run_two_layer(dataset: SparseDataset, spec: LossSpec, B, C, eps=1e-3, max_outer=50,
                  max_cuts=200, outer_tol=1e-4, excluded=(), qcqp_tol=1e-8, trace=None):
    """Alternate group generation and the bundle method until the pool stops changing.

    Stops when the generated group is already in the pool, when the relaxed
    objective improves by less than ``outer_tol`` (relative), or after
    ``max_outer`` groups. Returns ``(pool, bundle_state)``.
    """
    if max_outer < 1:
        raise ValueError("max_outer must be at least 1")
    dataset.check_trainable()
    pool = GroupPool(B=B)
    state: BundleState | None = None
    c = initial_scores(dataset, C)
    prev = None
    while True:
        try:
            group = most_violated_group(c, B, excluded)
        except NoInformativeFeaturesError:
            if state is None:
                raise
            pool.converged, pool.reason = True, "no-informative-features"
            break
        if group in pool:
            pool.converged, pool.reason = True, "repeated-group"
            break
        pool.add(group)
        configs = [cut.y_config for cut in state.cuts] if state is not None else ()
        warm = (state.alpha, state.mu) if state is not None and state.solution is not None else None
        inner_trace = None
        if trace is not None:
            def inner_trace(rec, t=len(pool)):
                trace(dict(layer="inner", t=t, **rec))
        state = run_inner(dataset, spec, pool.groups, C, eps=eps, max_cuts=max_cuts,
                          y_configs=configs, qcqp_tol=qcqp_tol, trace=inner_trace, warm=warm)
        obj = state.objective
        record = dict(layer="outer", t=len(pool), objective=obj, gap=state.gap,
                      cuts=len(state.cuts), inner_reason=state.reason)
        pool.history.append(record)
        if trace is not None:
            trace(record)
        logger.info("outer %s", " ".join(f"{k}={v}" for k, v in record.items()))
        if prev is not None and abs(prev - obj) < outer_tol * max(abs(prev), 1e-12):
            pool.converged, pool.reason = True, "small-improvement"
            break
        if len(pool) >= max_outer:
            pool.converged, pool.reason = False, "max-outer"
            break
        prev = obj
        c = feature_scores([cut.y_config for cut in state.cuts], state.alpha, dataset)
    return pool, state
