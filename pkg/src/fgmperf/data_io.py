"""Sparse labeled datasets and the SVMlight / LibSVM text format.

Feature indices are 1-based in files and 0-based everywhere inside the
package; the parser is the only place that converts between the two.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class DataError(ValueError):
    """Raised for malformed or unusable datasets."""


class SvmlightParseError(DataError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"{message} at line {lineno}"
        super().__init__(message)


class DegenerateDataError(DataError):
    """Training data without both a positive and a negative example."""


@dataclass(frozen=True)
class SparseVector:
    """A sparse row: strictly increasing 0-based indices and nonzero values."""

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise DataError("indices and values must be 1-D of equal length")
        if idx.size and (idx[0] < 0 or np.any(np.diff(idx) <= 0)):
            raise DataError("feature indices must be non-negative and strictly increasing")
        if not np.all(np.isfinite(val)):
            raise DataError("feature values must be finite")
        if np.any(val == 0.0):
            raise DataError("explicit zero values are not stored")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_entries(cls, entries):
        """Build from ``(index, value)`` pairs using 1-based indices."""
        entries = list(entries)
        idx = np.array([i for i, _ in entries], dtype=np.int64) - 1
        val = np.array([v for _, v in entries], dtype=np.float64)
        return cls(idx, val)

    @property
    def entries(self):
        """``(1-based index, value)`` pairs."""
        return [(int(i) + 1, float(v)) for i, v in zip(self.indices, self.values)]

    def __len__(self):
        return self.indices.size


@dataclass(frozen=True)
class FeatureGroup:
    """A selected feature-index set (0-based, sorted, unique)."""

    members: np.ndarray

    def __post_init__(self):
        m = np.unique(np.asarray(self.members, dtype=np.int64))
        object.__setattr__(self, "members", m)

    @property
    def budget_used(self):
        return int(self.members.size)

    def key(self):
        return tuple(int(j) for j in self.members)

    def __eq__(self, other):
        return isinstance(other, FeatureGroup) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __len__(self):
        return self.members.size

    def __repr__(self):
        return f"FeatureGroup({[j + 1 for j in self.key()]})"


def _rows_to_csr(rows: Sequence[SparseVector], n_features: int) -> sp.csr_matrix:
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    for i, r in enumerate(rows):
        indptr[i + 1] = indptr[i] + len(r)
    if rows:
        indices = np.concatenate([r.indices for r in rows])
        data = np.concatenate([r.values for r in rows])
    else:
        indices = np.zeros(0, dtype=np.int64)
        data = np.zeros(0)
    return sp.csr_matrix((data, indices, indptr), shape=(len(rows), n_features))


def _row(X: sp.csr_matrix, i: int) -> SparseVector:
    lo, hi = X.indptr[i], X.indptr[i + 1]
    return SparseVector(X.indices[lo:hi].copy(), X.data[lo:hi].copy())


@dataclass(frozen=True)
class SparseDataset:
    """Binary-labeled sparse examples.

    ``X`` is an ``n x m`` CSR matrix (rows are examples) and ``labels`` an
    int array with entries in {-1, +1}.
    """

    X: sp.csr_matrix
    labels: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.labels, dtype=np.int64)
        if y.ndim != 1 or y.size != self.X.shape[0]:
            raise DataError("label count does not match example count")
        if y.size < 1:
            raise DataError("dataset is empty")
        if not np.all((y == 1) | (y == -1)):
            raise DataError("binary labels must be -1 or +1")
        y.setflags(write=False)
        object.__setattr__(self, "labels", y)

    @classmethod
    def from_rows(cls, rows, labels, n_features=None):
        rows = list(rows)
        if n_features is None:
            n_features = max((int(r.indices[-1]) + 1 for r in rows if len(r)), default=0)
        return cls(_rows_to_csr(rows, n_features), np.asarray(labels))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def m(self):
        return self.X.shape[1]

    @property
    def examples(self):
        return [_row(self.X, i) for i in range(self.n)]

    @property
    def n_positive(self):
        return int(np.sum(self.labels == 1))

    def check_trainable(self):
        p = self.n_positive
        if p == 0 or p == self.n:
            raise DegenerateDataError(
                "degenerate label distribution: need at least one +1 and one -1 label")


@dataclass(frozen=True)
class MulticlassDataset:
    X: sp.csr_matrix
    raw_labels: tuple
    classes: tuple = field(default=())

    def __post_init__(self):
        raw = tuple(self.raw_labels)
        if len(raw) != self.X.shape[0]:
            raise DataError("label count does not match example count")
        classes = tuple(self.classes) or sort_classes(set(raw))
        missing = set(raw) - set(classes)
        if missing:
            raise DataError(f"labels not among classes: {sorted(map(str, missing))}")
        if not classes:
            raise DataError("no classes")
        object.__setattr__(self, "raw_labels", raw)
        object.__setattr__(self, "classes", classes)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def m(self):
        return self.X.shape[1]

    @property
    def examples(self):
        return [_row(self.X, i) for i in range(self.n)]


def _class_token(tok: str):
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        f = float(tok)
    except ValueError:
        return tok
    return int(f) if f.is_integer() else f


def _class_sort_key(c):
    if isinstance(c, str):
        return (1, 0.0, c)
    return (0, float(c), "")


def sort_classes(classes: Iterable) -> tuple:
    """Numeric tokens in numeric order first, then strings lexicographically."""
    return tuple(sorted(classes, key=_class_sort_key))


def parse_svmlight(stream, n_features=None) -> MulticlassDataset:
    """Parse SVMlight text from a file object, a string, or an iterable of lines.

    ``qid:`` tokens are accepted and ignored. Explicit zero values are dropped.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    rows, labels = [], []
    max_idx = 0
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        label = _class_token(tokens[0])
        if isinstance(label, str) and ":" in label:
            raise SvmlightParseError("missing label", lineno)
        idx, val = [], []
        last = 0
        for tok in tokens[1:]:
            key, sep, value = tok.partition(":")
            if not sep:
                raise SvmlightParseError(f"malformed feature token {tok!r}", lineno)
            if key == "qid":
                continue
            try:
                j = int(key)
            except ValueError:
                raise SvmlightParseError(f"non-integer feature index {key!r}", lineno) from None
            if j < 1:
                raise SvmlightParseError(f"feature index {j} is not positive", lineno)
            if j <= last:
                raise SvmlightParseError("indices not increasing", lineno)
            last = j
            try:
                x = float(value)
            except ValueError:
                raise SvmlightParseError(f"non-numeric value {value!r}", lineno) from None
            if not math.isfinite(x):
                raise SvmlightParseError(f"non-finite value {value!r}", lineno)
            if x != 0.0:
                idx.append(j - 1)
                val.append(x)
        max_idx = max(max_idx, last)
        rows.append(SparseVector(np.array(idx, dtype=np.int64), np.array(val)))
        labels.append(label)
    if not rows:
        raise DataError("empty SVMlight input")
    m = max_idx if n_features is None else int(n_features)
    if m < max_idx:
        keep = [SparseVector(r.indices[r.indices < m], r.values[r.indices < m]) for r in rows]
        rows = keep
    return MulticlassDataset(_rows_to_csr(rows, m), tuple(labels))


def load_svmlight(path, n_features=None) -> MulticlassDataset:
    with open(path, encoding="utf-8", newline=None) as fh:
        return parse_svmlight(fh, n_features=n_features)


def _format_label(label):
    if isinstance(label, (int, np.integer)):
        return f"{int(label):+d}" if label in (1, -1) else str(int(label))
    if isinstance(label, float):
        return repr(label)
    return str(label)


def dump_svmlight(X: sp.csr_matrix, labels, stream=None) -> str:
    """Write rows as SVMlight text with shortest round-trip float repr."""
    X = sp.csr_matrix(X)
    lines = []
    for i, label in enumerate(labels):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        feats = " ".join(f"{j + 1}:{float(v)!r}" for j, v in zip(X.indices[lo:hi], X.data[lo:hi]))
        lines.append(f"{_format_label(label)} {feats}".rstrip())
    text = "\n".join(lines) + "\n"
    if stream is not None:
        stream.write(text)
    return text


def binarize(ds: MulticlassDataset, positive_class) -> SparseDataset:
    """One-vs-rest view: +1 for ``positive_class``, -1 otherwise. ``X`` is shared."""
    if positive_class not in ds.classes:
        raise DataError(f"unknown class {positive_class!r}")
    y = np.array([1 if r == positive_class else -1 for r in ds.raw_labels], dtype=np.int64)
    return SparseDataset(ds.X, y)


def as_binary(ds: MulticlassDataset, positive_class=None) -> SparseDataset:
    """Binary mode: exactly two classes, the larger token is +1 by default."""
    if len(ds.classes) > 2:
        raise DataError(f"binary mode needs at most two classes, found {len(ds.classes)}")
    if positive_class is None:
        positive_class = ds.classes[-1]
    return binarize(ds, positive_class)


def dot_on_group(x: SparseVector, w, d) -> float:
    """``sum_{j in d} w_j x_j`` where ``w`` is aligned with the sorted members of ``d``."""
    members = d.members if isinstance(d, FeatureGroup) else np.unique(np.asarray(d, dtype=np.int64))
    w = np.asarray(w, dtype=np.float64)
    if x.indices.size == 0 or members.size == 0:
        return 0.0
    _, ix, iw = np.intersect1d(x.indices, members, assume_unique=True, return_indices=True)
    return float(np.dot(x.values[ix], w[iw]))


def scale_max_abs(ds: SparseDataset):
    """Per-feature max-abs scaling. Returns the scaled dataset and the scale factors."""
    X = ds.X.tocsc()
    scale = np.asarray(abs(X).max(axis=0).todense()).ravel()
    scale[scale == 0] = 1.0
    Xs = sp.csr_matrix(ds.X @ sp.diags(1.0 / scale))
    return SparseDataset(Xs, ds.labels), scale
