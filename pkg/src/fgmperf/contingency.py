"""Contingency tables and the multivariate losses built on them.

All losses except Hamming live on a 0-100 scale. Hamming is ``2 (b + c)``,
which makes the multivariate hinge coincide with the ordinary SVM hinge.
Averaging by ``n`` is the training layer's job.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class LossKind(str, Enum):
    HAMMING = "hamming"
    FBETA = "fbeta"
    PREC_AT_K = "prec@k"
    REC_AT_K = "rec@k"
    PRBEP = "prbep"


class InadmissibleTableError(ValueError):
    pass


@dataclass(frozen=True)
class ContingencyTable:
    a: int  # true positives
    b: int  # false positives
    c: int  # false negatives
    d: int  # true negatives

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError(f"negative count in {self}")

    @property
    def n(self):
        return self.a + self.b + self.c + self.d

    @property
    def p(self):
        return self.a + self.c

    @property
    def q(self):
        return self.b + self.d


@dataclass(frozen=True)
class LossSpec:
    kind: LossKind
    beta: float = 1.0
    k: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.kind in (LossKind.PREC_AT_K, LossKind.REC_AT_K):
            if self.k is None or int(self.k) < 1:
                raise ValueError(f"{self.kind.value} needs a positive k")
            object.__setattr__(self, "k", int(self.k))

    @classmethod
    def parse(cls, name, beta=1.0, k=None):
        """Build from a CLI-facing name: hamming, f1, fbeta, prec@k, rec@k, prbep."""
        name = name.lower()
        if name == "f1":
            return cls(LossKind.FBETA, 1.0)
        if name == "fbeta":
            return cls(LossKind.FBETA, float(beta))
        try:
            kind = LossKind(name)
        except ValueError:
            raise ValueError(f"unknown loss {name!r}") from None
        return cls(kind, float(beta), k)

    @property
    def name(self):
        if self.kind is LossKind.FBETA:
            return "f1" if self.beta == 1.0 else "fbeta"
        return self.kind.value

    def bind(self, n):
        """Check ``k <= n`` for the @k losses."""
        if self.k is not None and self.kind in (LossKind.PREC_AT_K, LossKind.REC_AT_K) and self.k > n:
            raise ValueError(f"k={self.k} exceeds the number of examples n={n}")
        return self

    def admissible(self, a, b, c, d):
        """Elementwise admissibility mask (arrays) or bool (scalars)."""
        if self.kind in (LossKind.PREC_AT_K, LossKind.REC_AT_K):
            return np.asarray(a) + np.asarray(b) == self.k
        if self.kind is LossKind.PRBEP:
            return np.asarray(b) == np.asarray(c)
        return np.ones(np.broadcast(a, b, c, d).shape, dtype=bool)


def _ratio(num, den, p):
    # 0/0 is a perfect score only when there are no true positives at all
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    safe = np.where(den > 0, den, 1.0)
    return np.where(den > 0, num / safe, np.where(np.asarray(p) == 0, 1.0, 0.0))


def loss_array(spec: LossSpec, a, b, c, d):
    """Vectorized loss over count arrays. Admissibility is not checked."""
    a, b, c, d = (np.asarray(v, dtype=np.float64) for v in (a, b, c, d))
    p = a + c
    if spec.kind is LossKind.HAMMING:
        return 2.0 * (b + c)
    if spec.kind is LossKind.FBETA:
        b2 = spec.beta ** 2
        score = _ratio((1 + b2) * a, (1 + b2) * a + b + b2 * c, p)
    elif spec.kind in (LossKind.PREC_AT_K, LossKind.PRBEP):
        score = _ratio(a, a + b, p)
    else:
        score = _ratio(a, a + c, p)
    return 100.0 * (1.0 - score)


def loss_value(spec: LossSpec, t: ContingencyTable) -> float:
    if spec.kind is not LossKind.HAMMING and not spec.admissible(t.a, t.b, t.c, t.d):
        raise InadmissibleTableError(f"{t} is not admissible for {spec.name}")
    return float(loss_array(spec, t.a, t.b, t.c, t.d))


def table_from_labels(y_true, y_pred) -> ContingencyTable:
    y = np.asarray(y_true)
    yp = np.asarray(y_pred)
    if y.shape != yp.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {yp.shape}")
    pos, pred = y == 1, yp == 1
    return ContingencyTable(
        int(np.sum(pos & pred)), int(np.sum(~pos & pred)),
        int(np.sum(pos & ~pred)), int(np.sum(~pos & ~pred)))
