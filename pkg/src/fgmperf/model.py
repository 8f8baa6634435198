"""Trained sparse linear predictor and its text file format.

The canonical predictor is the sparse vector ``w * d_tilde`` where
``w = sum_i beta_i x_i`` with ``beta_i = (1/n) sum_k alpha_k (y_i - y^k_i)``
and ``d_tilde = sum_t mu_t d^t``. Scores are ``<w * d_tilde, x>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .data_io import FeatureGroup, SparseVector, dot_on_group

FORMAT_VERSION = 1
MANIFEST_VERSION = 1
_MAGIC = "fgmperf-model"
_MANIFEST_MAGIC = "fgmperf-manifest"


class ModelFormatError(ValueError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"{message} at line {lineno}"
        super().__init__(message)


def _fmt(x):
    return format(float(x), ".17g")


@dataclass(frozen=True)
class TrainedModel:
    """Sparse predictor plus the pool it came from.

    Attributes
    ----------
    indices : 0-based feature indices of the support, ascending.
    weights : effective weights ``(w * d_tilde)_j`` aligned with ``indices``.
    groups, mu : the feature-group pool and its mixing weights.
    meta : loss, budget, C, eps, convergence reasons and so on; values are strings or numbers.
    beta : optional per-example coefficients kept for auditing.
    """

    indices: np.ndarray
    weights: np.ndarray
    groups: tuple = ()
    mu: np.ndarray = field(default_factory=lambda: np.zeros(0))
    meta: dict = field(default_factory=dict)
    beta: np.ndarray | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.asarray(self.mu, dtype=np.float64)
        if idx.shape != w.shape or idx.ndim != 1:
            raise ValueError("indices and weights must be 1-D of equal length")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0):
            raise ValueError("indices must be strictly increasing and non-negative")
        if not np.all(np.isfinite(w)):
            raise ValueError("non-finite weight")
        if mu.size != len(self.groups):
            raise ValueError("one mu per group required")
        if idx.size:
            members = (np.unique(np.concatenate([g.members for g in self.groups]))
                       if self.groups else np.zeros(0, np.int64))
            if not np.all(np.isin(idx, members)):
                raise ValueError("support outside the union of groups")
        for name, v in (("indices", idx), ("weights", w), ("mu", mu)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        object.__setattr__(self, "groups", tuple(self.groups))

    @property
    def nnz(self):
        return int(np.count_nonzero(self.weights))

    @property
    def d_tilde(self):
        """``sum_t mu_t [j in d^t]`` on the support."""
        out = np.zeros(self.indices.size)
        for g, m in zip(self.groups, self.mu):
            out[np.isin(self.indices, g.members)] += m
        return out

    def dense_weights(self, m):
        w = np.zeros(m)
        keep = self.indices < m
        w[self.indices[keep]] = self.weights[keep]
        return w


def zero_model(meta=None) -> TrainedModel:
    return TrainedModel(np.zeros(0, np.int64), np.zeros(0), (), np.zeros(0), dict(meta or {}))


def assemble(bundle, pool, dataset, keep_beta=False, meta=None) -> TrainedModel:
    """Build the predictor from a solved bundle state over ``pool``."""
    n = dataset.n
    groups = list(bundle.groups)
    mu = np.asarray(bundle.mu, dtype=np.float64)
    alpha = np.asarray(bundle.alpha, dtype=np.float64)
    info = dict(meta or {})
    info.setdefault("inner_reason", bundle.reason or "none")
    info.setdefault("outer_reason", getattr(pool, "reason", "") or "none")
    if bundle.solution is not None:
        info.setdefault("qcqp_active", int(bundle.solution.active))
    if not bundle.cuts or not np.any(alpha):
        beta = np.zeros(n)
        return TrainedModel(np.zeros(0, np.int64), np.zeros(0), groups, mu, info,
                            beta if keep_beta else None)
    configs = np.stack([c.y_config for c in bundle.cuts]).astype(np.float64)
    beta = alpha @ (dataset.labels[None, :] - configs) / n
    union = np.unique(np.concatenate([g.members for g in groups]))
    w = np.asarray(dataset.X[:, union].T @ beta).ravel()
    dt = np.zeros(union.size)
    for g, m in zip(groups, mu):
        dt[np.isin(union, g.members)] += m
    eff = w * dt
    keep = eff != 0
    return TrainedModel(union[keep], eff[keep], groups, mu, info, beta if keep_beta else None)


def predict_scores(model: TrainedModel, X) -> np.ndarray:
    """Scores for every row of a CSR matrix; columns beyond the matrix width count as zero."""
    X = sp.csr_matrix(X)
    keep = model.indices < X.shape[1]
    if not np.any(keep):
        return np.zeros(X.shape[0])
    return np.asarray(X[:, model.indices[keep]] @ model.weights[keep]).ravel()


def predict_score(model: TrainedModel, x: SparseVector) -> float:
    if x.indices.size == 0 or model.indices.size == 0:
        return 0.0
    _, ix, iw = np.intersect1d(x.indices, model.indices, assume_unique=True, return_indices=True)
    return float(np.dot(x.values[ix], model.weights[iw]))


def predict_label(model: TrainedModel, x: SparseVector) -> int:
    """``sign(score)`` with a zero score mapped to +1."""
    return 1 if predict_score(model, x) >= 0 else -1


def labels_from_scores(scores) -> np.ndarray:
    return np.where(np.asarray(scores) >= 0, 1, -1).astype(np.int64)


def groupwise_score(model: TrainedModel, x: SparseVector) -> float:
    """``sum_t mu_t <w, x>`` on ``d^t``, with ``w`` recovered from the mixed weights.

    Independent of the assembled sparse dot product; used to cross-check it.
    """
    dt = model.d_tilde
    w = np.divide(model.weights, dt, out=np.zeros_like(dt), where=dt > 0)
    total = 0.0
    for g, m in zip(model.groups, model.mu):
        sel = np.isin(model.indices, g.members)
        wg = np.zeros(g.members.size)
        wg[np.searchsorted(g.members, model.indices[sel])] = w[sel]
        total += m * dot_on_group(x, wg, g)
    return total


# -- text format -----------------------------------------------------------

_META_ORDER = ("loss", "beta", "k", "B", "C", "eps", "n_features", "class",
               "inner_reason", "outer_reason", "qcqp_active", "converged")


def _meta_value(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    s = str(v)
    if not s or any(ch.isspace() for ch in s):
        raise ValueError(f"meta value {v!r} must be a non-empty token without whitespace")
    return s


def dumps(model: TrainedModel) -> str:
    out = [f"{_MAGIC} {FORMAT_VERSION}"]
    keys = [k for k in _META_ORDER if k in model.meta]
    keys += sorted(k for k in model.meta if k not in _META_ORDER)
    out.append(f"meta {len(keys)}")
    for k in keys:
        out.append(f"{k} {_meta_value(model.meta[k])}")
    out.append(f"groups {len(model.groups)}")
    for g, m in zip(model.groups, model.mu):
        out.append(" ".join([_fmt(m)] + [str(j + 1) for j in g.members]))
    out.append(f"weights {model.indices.size}")
    out.extend(f"{j + 1}:{_fmt(w)}" for j, w in zip(model.indices, model.weights))
    if model.beta is not None:
        out.append(f"beta {model.beta.size}")
        out.extend(_fmt(b) for b in model.beta)
    out.append("end")
    return "\n".join(out) + "\n"


def save(model: TrainedModel, sink) -> None:
    """Write to a path or a text stream."""
    text = dumps(model)
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        with open(sink, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _parse_meta(v):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


class _Lines:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self, what):
        if self.pos >= len(self.lines):
            raise ModelFormatError(f"unexpected end of file, expected {what}", self.pos + 1)
        self.pos += 1
        return self.lines[self.pos - 1]

    def count(self, key):
        line = self.next(f"'{key} <count>'")
        parts = line.split()
        if len(parts) != 2 or parts[0] != key:
            raise ModelFormatError(f"expected '{key} <count>', got {line!r}", self.pos)
        try:
            c = int(parts[1])
        except ValueError:
            raise ModelFormatError(f"bad count {parts[1]!r}", self.pos) from None
        if c < 0:
            raise ModelFormatError("negative count", self.pos)
        return c


def loads(text: str) -> TrainedModel:
    r = _Lines(text)
    head = r.next("header").split()
    if len(head) != 2 or head[0] != _MAGIC:
        raise ModelFormatError("not a model file", 1)
    if head[1] != str(FORMAT_VERSION):
        raise ModelFormatError(f"unsupported format version {head[1]}", 1)
    meta = {}
    for _ in range(r.count("meta")):
        parts = r.next("meta line").split()
        if len(parts) != 2:
            raise ModelFormatError("malformed meta line", r.pos)
        meta[parts[0]] = _parse_meta(parts[1])
    groups, mu = [], []
    for _ in range(r.count("groups")):
        parts = r.next("group line").split()
        try:
            mu.append(float(parts[0]))
            members = [int(t) - 1 for t in parts[1:]]
        except (ValueError, IndexError):
            raise ModelFormatError("malformed group line", r.pos) from None
        if not members or min(members) < 0:
            raise ModelFormatError("group needs 1-based feature indices", r.pos)
        groups.append(FeatureGroup(members))
    idx, w = [], []
    for _ in range(r.count("weights")):
        line = r.next("idx:weight line")
        j, sep, v = line.partition(":")
        try:
            if not sep:
                raise ValueError
            idx.append(int(j) - 1)
            w.append(float(v))
        except ValueError:
            raise ModelFormatError(f"malformed weight line {line!r}", r.pos) from None
    beta = None
    line = r.next("'end'")
    if line.startswith("beta "):
        r.pos -= 1
        vals = []
        for _ in range(r.count("beta")):
            s = r.next("beta value")
            try:
                vals.append(float(s))
            except ValueError:
                raise ModelFormatError("malformed beta value", r.pos) from None
        beta = np.array(vals)
        line = r.next("'end'")
    if line != "end":
        raise ModelFormatError(f"expected 'end', got {line!r}", r.pos)
    if any(s.strip() for s in r.lines[r.pos:]):
        raise ModelFormatError("trailing content after 'end'", r.pos + 1)
    try:
        return TrainedModel(np.array(idx, dtype=np.int64), np.array(w), groups, np.array(mu), meta, beta)
    except ValueError as e:
        raise ModelFormatError(str(e)) from None


def load(source) -> TrainedModel:
    """Read from a path or a text stream."""
    if hasattr(source, "read"):
        return loads(source.read())
    with open(source, encoding="utf-8") as fh:
        return loads(fh.read())


# -- one-vs-rest manifest --------------------------------------------------

def dumps_manifest(entries) -> str:
    """``entries``: sequence of (class token, model file name)."""
    out = [f"{_MANIFEST_MAGIC} {MANIFEST_VERSION}", f"classes {len(entries)}"]
    for cls, fname in entries:
        out.append(f"{cls}\t{fname}")
    return "\n".join(out) + "\n"


def loads_manifest(text: str):
    r = _Lines(text)
    head = r.next("header").split()
    if len(head) != 2 or head[0] != _MANIFEST_MAGIC:
        raise ModelFormatError("not a manifest file", 1)
    if head[1] != str(MANIFEST_VERSION):
        raise ModelFormatError(f"unsupported manifest version {head[1]}", 1)
    entries = []
    for _ in range(r.count("classes")):
        parts = r.next("class line").split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ModelFormatError("malformed class line", r.pos)
        entries.append((parts[0], parts[1]))
    return entries


def is_manifest(path) -> bool:
    with open(path, encoding="utf-8") as fh:
        return fh.readline().startswith(_MANIFEST_MAGIC)



def train(dataset, spec, B, C, eps=1e-3, max_outer=50, max_cuts=200, outer_tol=1e-4,
          trace=None, keep_beta=False, meta=None):
    """Run both layers and assemble. Returns ``(model, pool, bundle_state)``."""
    from .outer_groups import run_two_layer

    pool, state = run_two_layer(dataset, spec, B, C, eps=eps, max_outer=max_outer,
                                max_cuts=max_cuts, outer_tol=outer_tol, trace=trace)
    info = dict(loss=spec.name, beta=float(spec.beta), k=spec.k if spec.k is not None else "-",
                B=int(B), C=float(C), eps=float(eps), n_features=int(dataset.m))
    info.update(meta or {})
    info["converged"] = int(pool.converged and state.converged)
    return assemble(state, pool, dataset, keep_beta=keep_beta, meta=info), pool, state
