"""Evaluation measures on score vectors, all on a 0-100 scale.

Thresholded measures use ``label = +1 iff score >= 0``. Ranking measures
predict +1 for the top-ranked examples, ties broken by ascending index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .contingency import ContingencyTable, table_from_labels

logger = logging.getLogger(__name__)

MEASURES = ("f1", "accuracy", "prec@k", "rec@k", "rec@2p", "prbep")


class MetricError(ValueError):
    pass


def _check(scores, y):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if s.shape != y.shape or s.ndim != 1:
        raise MetricError("scores and labels must be 1-D of equal length")
    if s.size == 0:
        raise MetricError("empty evaluation set")
    if not np.all(np.isin(y, (-1, 1))):
        raise MetricError("labels must be +1/-1")
    return s, y


def top_k_labels(scores, k) -> np.ndarray:
    """+1 on the k largest scores (ties by ascending index), -1 elsewhere."""
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-s, kind="stable")
    out = -np.ones(s.size, dtype=np.int64)
    out[order[:k]] = 1
    return out


def _pct(num, den):
    return 100.0 * num / den if den > 0 else 0.0


def eval_at_k(scores, y, k):
    """Return ``(Prec@k, Rec@k)``; requires ``1 <= k <= n`` and at least one positive for recall."""
    s, y = _check(scores, y)
    if not 1 <= k <= s.size:
        raise MetricError(f"k={k} out of range 1..{s.size}")
    t = table_from_labels(y, top_k_labels(s, k))
    return _pct(t.a, k), _pct(t.a, t.p)


def eval_rec_at_2p(scores, y):
    """Rec@k at ``k = 2p``, clamped to ``n``."""
    s, y = _check(scores, y)
    p = int(np.sum(y == 1))
    if p == 0:
        raise MetricError("Rec@2p is undefined without positive examples")
    return eval_at_k(s, y, min(2 * p, s.size))[1]


def eval_prbep(scores, y):
    """Precision (= recall) when the top ``p`` scores are predicted positive."""
    s, y = _check(scores, y)
    p = int(np.sum(y == 1))
    if p == 0:
        raise MetricError("PRBEP needs at least one positive example")
    t = table_from_labels(y, top_k_labels(s, p))
    return _pct(t.a, p)


def threshold_table(scores, y) -> ContingencyTable:
    s, y = _check(scores, y)
    return table_from_labels(y, np.where(s >= 0, 1, -1))


def eval_f1(scores, y):
    """100 * 2a / (2a + b + c); a labeling with no positives anywhere scores 100."""
    t = threshold_table(scores, y)
    den = 2 * t.a + t.b + t.c
    return _pct(2 * t.a, den) if den > 0 else 100.0


def eval_accuracy(scores, y):
    t = threshold_table(scores, y)
    return _pct(t.a + t.d, t.n)


def evaluate(scores, y, measures=("f1", "accuracy"), k=None):
    """Dict ``measure -> value`` for one binary problem.

    ``prec@k`` and ``rec@k`` need ``k``; the resolved k for ``rec@2p`` is
    reported under ``k@rec@2p``.
    """
    s, y = _check(scores, y)
    out = {}
    for m in measures:
        if m == "f1":
            out[m] = eval_f1(s, y)
        elif m == "accuracy":
            out[m] = eval_accuracy(s, y)
        elif m in ("prec@k", "rec@k"):
            if k is None:
                raise MetricError(f"{m} needs k")
            prec, rec = eval_at_k(s, y, k)
            out[m] = prec if m == "prec@k" else rec
        elif m == "rec@2p":
            out[m] = eval_rec_at_2p(s, y)
        elif m == "prbep":
            out[m] = eval_prbep(s, y)
        else:
            raise MetricError(f"unknown measure {m!r}")
    return out


@dataclass
class EvalReport:
    """Per-measure values, optionally per class with an unweighted macro average."""

    measures: tuple
    per_class: dict = field(default_factory=dict)  # class -> {measure: value}
    k_used: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)

    @property
    def macro(self):
        out = {}
        for m in self.measures:
            vals = [v[m] for v in self.per_class.values() if m in v]
            if vals:
                out[m] = float(np.mean(vals))
        return out

    @property
    def per_measure(self):
        if len(self.per_class) == 1:
            return dict(next(iter(self.per_class.values())))
        return self.macro

    def to_tsv(self):
        lines = []
        for cls, vals in self.per_class.items():
            for m in self.measures:
                if m in vals:
                    lines.append(f"{m}\t{cls}\t{vals[m]:.6f}")
        if len(self.per_class) > 1:
            for m, v in self.macro.items():
                lines.append(f"{m}\tmacro\t{v:.6f}")
        return "\n".join(lines) + ("\n" if lines else "")

    def to_table(self):
        rows = [(str(c), vals) for c, vals in self.per_class.items()]
        if len(self.per_class) > 1:
            rows.append(("macro", self.macro))
        width = max([5] + [len(r[0]) for r in rows])
        head = "class".ljust(width) + "".join(f"{m:>10}" for m in self.measures)
        body = []
        for name, vals in rows:
            cells = "".join(f"{vals[m]:>10.2f}" if m in vals else f"{'-':>10}" for m in self.measures)
            body.append(name.ljust(width) + cells)
        return "\n".join([head, "-" * len(head)] + body) + "\n"


def evaluate_classes(scores_by_class, y_by_class, measures, k=None) -> EvalReport:
    """One-vs-rest report. Classes with no positive examples are skipped with a warning."""
    rep = EvalReport(tuple(measures))
    for cls, s in scores_by_class.items():
        y = np.asarray(y_by_class[cls])
        if not np.any(y == 1):
            logger.warning("class %s has no positive examples; skipped", cls)
            rep.skipped.append(cls)
            continue
        rep.per_class[cls] = evaluate(s, y, measures, k)
        if "rec@2p" in measures:
            rep.k_used[cls] = min(2 * int(np.sum(y == 1)), y.size)
        elif k is not None:
            rep.k_used[cls] = k
    return rep
