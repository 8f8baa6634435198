"""Bundle method over a fixed pool of feature groups.

Minimizes ``J(w) = 0.5 (sum_t ||w_t||)^2 + C R_emp(w)`` where
``R_emp(w) = max(0, max_{y'} loss(y', y)/n - sum_t <w_t, a^t_{y'}>)`` and
``a^t_{y'} = (1/n) sum_i (y_i - y'_i) x_i`` restricted to group ``t``.
Each iteration adds the subgradient cut of the most violated ``y'`` and
re-solves the reduced QCQP.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import qcqp
from .contingency import ContingencyTable, LossSpec, loss_array, table_from_labels
from .data_io import SparseDataset
from .label_oracle import OracleResult, decision_values, most_violated_y

logger = logging.getLogger(__name__)


@dataclass
class Cut:
    """One subgradient cut: blocks ``p[t]`` on group ``t``'s features and offset ``q``."""

    p: list
    q: float
    y_config: np.ndarray
    table: ContingencyTable | None = None


@dataclass
class BundleState:
    groups: list
    cuts: list
    solution: qcqp.QcqpSolution | None
    weights: list
    history: list = field(default_factory=list)
    converged: bool = False
    reason: str = ""
    upper: float = np.inf
    lower: float = 0.0
    new_cuts: int = 0

    @property
    def gap(self):
        return self.upper - self.lower

    @property
    def objective(self):
        """Optimal value of the reduced problem over the current cuts."""
        return self.lower

    @property
    def alpha(self):
        if self.solution is None:
            return np.zeros(len(self.cuts))
        return self.solution.alpha

    @property
    def mu(self):
        if self.solution is None:
            return np.full(len(self.groups), 1.0 / max(1, len(self.groups)))
        return self.solution.mu


def regularizer(weights):
    """``0.5 * (sum_t ||w_t||_2)^2``"""
    return 0.5 * sum(float(np.linalg.norm(w)) for w in weights) ** 2


def empirical_risk(weights, groups, dataset: SparseDataset, spec: LossSpec, columns=None):
    """Return ``(R_emp, witness)`` at the given group weights.

    ``columns`` optionally caches ``X[:, d_t]`` per group.
    """
    if columns is None:
        v = decision_values(groups, weights, dataset.X)
    else:
        v = np.zeros(dataset.n)
        for Xg, w in zip(columns, weights):
            v += Xg @ w
    witness = most_violated_y(spec, dataset.labels, v)
    return max(0.0, witness.violation / dataset.n), witness


def working_risk(weights, blocks, q):
    """``max(0, max_k q^k + sum_t <w_t, p_t^k>)``: the risk seen by the current cuts."""
    if len(q) == 0:
        return 0.0
    vals = np.asarray(q, dtype=np.float64).copy()
    for P, w in zip(blocks, weights):
        vals += P @ w
    return max(0.0, float(vals.max()))


def _cut_blocks(dataset, groups, configs):
    """Per group, the (K, |d_t|) matrix with rows ``-(1/n) sum_i (y_i - y^k_i) x_i``."""
    if not len(configs):
        return [np.zeros((0, g.members.size)) for g in groups]
    diffs = (dataset.labels[None, :] - np.asarray(configs)).astype(np.float64)  # (K, n)
    out = []
    for g in groups:
        Xg = dataset.X[:, g.members]
        out.append(-np.asarray((Xg.T @ diffs.T).T) / dataset.n)
    return out


def make_cut(witness: OracleResult, groups, dataset: SparseDataset) -> Cut:
    """``p_t = -(1/n) sum_i (y_i - y'_i) x_i`` on group ``t``; ``q = loss(y', y) / n``."""
    blocks = _cut_blocks(dataset, groups, [witness.y_prime])
    return Cut(p=[b[0] for b in blocks], q=witness.loss / dataset.n,
               y_config=witness.y_prime.copy(), table=witness.table)


class _Blocks:
    """Cut blocks per group, one row per cut, grown one cut at a time."""

    def __init__(self, groups):
        self.P = [np.zeros((0, g.members.size)) for g in groups]

    def set_blocks(self, blocks):
        self.P = [np.array(b) for b in blocks]

    def add(self, cut):
        self.P = [np.vstack((P, np.asarray(p)[None, :])) for P, p in zip(self.P, cut.p)]


def run_inner(dataset: SparseDataset, spec: LossSpec, groups, C, eps=1e-3, max_cuts=200,
              y_configs=(), qcqp_tol=1e-8, trace=None, warm=None) -> BundleState:
    """Cutting-plane loop until ``min_k J(w^k) - J_K(w^K) <= eps``.

    ``y_configs`` are label configurations of earlier cuts; they are rebuilt
    on ``groups`` and kept as constraints. ``warm = (alpha, mu)`` seeds the
    first QCQP solve (missing trailing entries are taken as zero). At most ``max_cuts`` new cuts are
    added; hitting the cap returns a state flagged non-converged.
    """
    if not groups:
        raise ValueError("run_inner needs at least one group")
    if eps <= 0 or max_cuts < 1:
        raise ValueError("eps must be positive and max_cuts at least 1")
    dataset.check_trainable()
    spec.bind(dataset.n)
    n = dataset.n
    y = dataset.labels
    groups = list(groups)

    gram = _Blocks(groups)
    columns = [dataset.X[:, g.members].tocsr() for g in groups]
    cuts = []
    if len(y_configs):
        configs = np.asarray(y_configs, dtype=np.int64)
        blocks = _cut_blocks(dataset, groups, configs)
        gram.set_blocks(blocks)
        for k, yc in enumerate(configs):
            t = table_from_labels(y, yc)
            cuts.append(Cut(p=[b[k] for b in blocks], q=float(loss_array(spec, t.a, t.b, t.c, t.d)) / n,
                            y_config=yc.copy(), table=t))

    def resolve(start):
        inp = qcqp.QcqpInput(None, np.array([c.q for c in cuts]), C, P=gram.P)
        sol = qcqp.solve(inp, tol=qcqp_tol, warm=start)
        return sol, qcqp.recover_group_weights(sol, gram.P)

    def pad(v, size):
        v = np.asarray(v, dtype=np.float64)
        return np.concatenate((v, np.zeros(size - v.size)))

    state = BundleState(groups=groups, cuts=cuts, solution=None,
                        weights=[np.zeros(g.members.size) for g in groups])
    if cuts:
        start = None
        if warm is not None and len(warm[0]) <= len(cuts) and len(warm[1]) <= len(groups):
            start = (pad(warm[0], len(cuts)), pad(warm[1], len(groups)))
        state.solution, state.weights = resolve(start)
        state.lower = state.solution.objective

    while True:
        risk, witness = empirical_risk(state.weights, groups, dataset, spec, columns)
        J = regularizer(state.weights) + C * risk
        state.upper = min(state.upper, J)
        record = dict(iteration=len(state.history), J=J, J_K=state.lower, gap=state.gap,
                      cuts=len(cuts))
        state.history.append(record)
        if trace is not None:
            trace(record)
        logger.debug("inner %s", " ".join(f"{k}={v}" for k, v in record.items()))
        # the first cut is always taken; both stopping tests need J_K from at least one cut
        if cuts and state.gap <= eps:
            state.converged, state.reason = True, "eps-gap"
            break
        # violation in objective units, so a null-cut stop never leaves a gap above eps
        if cuts and (witness.is_null(y)
                     or C * (risk - working_risk(state.weights, gram.P, [c.q for c in cuts])) <= eps / 10):
            state.converged, state.reason = True, "null-cut"
            break
        if state.new_cuts >= max_cuts:
            state.converged, state.reason = False, "max-cuts"
            break
        cut = make_cut(witness, groups, dataset)
        cuts.append(cut)
        gram.add(cut)
        state.new_cuts += 1
        start = None
        if state.solution is not None:
            start = (pad(state.solution.alpha, len(cuts)), state.solution.mu)
        state.solution, state.weights = resolve(start)
        state.lower = state.solution.objective
    return state
