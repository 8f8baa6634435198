"""Most violated label configuration for the structural hinge.

The search maximizes ``loss(y', y) + sum_i y'_i v_i``. The violation used by
training differs from it only by the constant ``sum_i y_i v_i``, exposed as
``OracleResult.offset``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contingency import ContingencyTable, LossKind, LossSpec, loss_array, table_from_labels
from .data_io import DegenerateDataError

BRUTE_FORCE_MAX_N = 20
_GRID_CHUNK = 1 << 20


@dataclass(frozen=True)
class OracleResult:
    y_prime: np.ndarray
    objective: float
    table: ContingencyTable
    offset: float = 0.0
    loss: float = 0.0

    @property
    def violation(self):
        """``loss - sum_i (y_i - y'_i) v_i``, the per-sample-sum hinge argument."""
        return self.objective - self.offset

    def is_null(self, y):
        return bool(np.array_equal(self.y_prime, y))


def decision_values(groups, weights, X) -> np.ndarray:
    """``v_i = sum_t <w_t, x_i restricted to group t>``."""
    v = np.zeros(X.shape[0])
    for g, w in zip(groups, weights):
        if g.members.size:
            v += X[:, g.members] @ np.asarray(w, dtype=np.float64)
    return v


def _check_inputs(spec, y, v):
    y = np.asarray(y, dtype=np.int64)
    v = np.asarray(v, dtype=np.float64)
    if y.shape != v.shape or y.ndim != 1:
        raise ValueError("y and v must be 1-D of equal length")
    p = int(np.sum(y == 1))
    q = y.size - p
    if p == 0 or q == 0:
        raise DegenerateDataError("degenerate label distribution")
    spec.bind(y.size)
    return y, v, p, q


def _admissible_pairs(spec, p, q):
    """Ranges of (a, b) to search, as an explicit array of pairs when constrained."""
    if spec.kind in (LossKind.PREC_AT_K, LossKind.REC_AT_K):
        a = np.arange(max(0, spec.k - q), min(p, spec.k) + 1)
        return a, spec.k - a
    if spec.kind is LossKind.PRBEP:
        a = np.arange(max(0, p - q), p + 1)
        return a, p - a
    return None


def most_violated_y(spec: LossSpec, y, v) -> OracleResult:
    """Exact maximizer over admissible label vectors in O(n log n + #(a, b) pairs).

    Positives and negatives are each sorted by ``v`` descending (ties by index);
    for fixed counts (a, b) the best assignment labels the top ``a`` positives
    and the top ``b`` negatives as +1. Ties between (a, b) pairs prefer larger
    ``a``, then smaller ``b``.
    """
    y, v, p, q = _check_inputs(spec, y, v)
    offset = float(np.dot(y, v))
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == -1)

    if spec.kind is LossKind.HAMMING:
        # separable: flip i iff 2 - y_i v_i > y_i v_i, keep on ties
        yp = y.copy()
        yp[(y == 1) & (v < 1.0)] = -1
        yp[(y == -1) & (v > -1.0)] = 1
        t = table_from_labels(y, yp)
        loss = float(loss_array(spec, t.a, t.b, t.c, t.d))
        return OracleResult(yp, loss + float(np.dot(yp, v)), t, offset, loss)

    pos_order = pos[np.argsort(-v[pos], kind="stable")]
    neg_order = neg[np.argsort(-v[neg], kind="stable")]
    # 2 * prefix - total: contribution of labeling the top a (resp. b) as +1
    pos_gain = 2.0 * np.concatenate(([0.0], np.cumsum(v[pos_order]))) - v[pos].sum()
    neg_gain = 2.0 * np.concatenate(([0.0], np.cumsum(v[neg_order]))) - v[neg].sum()

    pairs = _admissible_pairs(spec, p, q)
    if pairs is not None:
        a, b = pairs
        obj = loss_array(spec, a, b, p - a, q - b) + pos_gain[a] + neg_gain[b]
        best = obj.max()
        hits = np.flatnonzero(obj == best)
        # larger a first, then smaller b
        i = hits[np.lexsort((b[hits], -a[hits]))[0]]
        best_a, best_b = int(a[i]), int(b[i])
    else:
        best = -np.inf
        best_a = best_b = -1
        b = np.arange(q + 1)
        rows = max(1, _GRID_CHUNK // (q + 1))
        for start in range(p, -1, -rows):
            a = np.arange(max(0, start - rows + 1), start + 1)[::-1]
            A, Bm = a[:, None], b[None, :]
            obj = loss_array(spec, A, Bm, p - A, q - Bm) + pos_gain[A] + neg_gain[Bm]
            m = obj.max()
            if m > best:
                r, col = np.argwhere(obj == m)[0]  # rows run a descending, cols b ascending
                best, best_a, best_b = m, int(a[r]), int(col)

    yp = -np.ones_like(y)
    yp[pos_order[:best_a]] = 1
    yp[neg_order[:best_b]] = 1
    t = ContingencyTable(best_a, best_b, p - best_a, q - best_b)
    loss = float(loss_array(spec, t.a, t.b, t.c, t.d))
    return OracleResult(yp, float(best), t, offset, loss)


def brute_force_most_violated_y(spec: LossSpec, y, v) -> OracleResult:
    """Exhaustive search over all admissible label vectors; test reference only."""
    y, v, p, q = _check_inputs(spec, y, v)
    n = y.size
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    shifts = np.arange(n, dtype=np.int64)
    posmask = y == 1
    best, best_cfg = -np.inf, None
    chunk = 1 << 16
    for start in range(0, 1 << n, chunk):
        codes = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        bits = ((codes[:, None] >> shifts[None, :]) & 1).astype(bool)
        a = (bits & posmask).sum(axis=1)
        b = (bits & ~posmask).sum(axis=1)
        c, d = p - a, q - b
        ok = spec.admissible(a, b, c, d)
        if not np.any(ok):
            continue
        obj = loss_array(spec, a, b, c, d) + (2.0 * bits) @ v - v.sum()
        obj = np.where(ok, obj, -np.inf)
        i = int(np.argmax(obj))
        if obj[i] > best:
            best, best_cfg = float(obj[i]), bits[i]
    yp = np.where(best_cfg, 1, -1).astype(np.int64)
    t = table_from_labels(y, yp)
    loss = float(loss_array(spec, t.a, t.b, t.c, t.d))
    return OracleResult(yp, best, t, float(np.dot(y, v)), loss)
