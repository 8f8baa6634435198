"""Command-line interface: ``fgmperf train|predict|eval|selfcheck``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 convergence
cap reached (the model is still written), 5 self-check failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import metrics, model as model_mod, qcqp
from .contingency import LossKind, LossSpec
from .data_io import (DataError, DegenerateDataError, MulticlassDataset, as_binary, binarize,
                      load_svmlight, scale_max_abs)
from .label_oracle import BRUTE_FORCE_MAX_N, brute_force_most_violated_y, most_violated_y
from .outer_groups import brute_force_most_violated_group, most_violated_group

logger = logging.getLogger("fgmperf")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CAP, EXIT_SELFCHECK = 0, 2, 3, 4, 5


class ConfigError(ValueError):
    pass


def _positive_int(v):
    i = int(v)
    if i < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return i


def _positive_float(v):
    x = float(v)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {v}")
    return x


def build_parser():
    p = argparse.ArgumentParser(prog="fgmperf", description=(
        "Sparse linear classifiers trained for F1, Prec@k, Rec@k, PRBEP or Hamming loss "
        "under a per-group feature budget."))
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from an SVMlight file")
    t.add_argument("train_file")
    t.add_argument("--loss", default="f1", choices=["hamming", "f1", "fbeta", "prec@k", "rec@k", "prbep"])
    t.add_argument("--beta", type=_positive_float, default=1.0, help="beta for --loss fbeta")
    t.add_argument("--k", type=int, default=None, help="k for prec@k / rec@k")
    t.add_argument("--B", type=int, required=True, help="features per generated group")
    t.add_argument("--C-scale", type=float, default=0.1, help="C = C_scale * n (default 0.1)")
    t.add_argument("--C-absolute", type=float, default=None, help="use this C instead of C_scale * n")
    t.add_argument("--eps", type=float, default=1e-3, help="inner gap tolerance")
    t.add_argument("--max-outer", type=int, default=50)
    t.add_argument("--max-cuts", type=int, default=200)
    t.add_argument("--outer-tol", type=float, default=1e-4)
    t.add_argument("--scale", action="store_true", help="max-abs scale features before training")
    t.add_argument("--positive-class", default=None, help="binary mode: token treated as +1")
    t.add_argument("--one-vs-rest", action="store_true", help="force one-vs-rest even for two classes")
    t.add_argument("--parallel-classes", type=int, default=1, metavar="N",
                   help="train up to N one-vs-rest classes concurrently")
    t.add_argument("--seed", type=int, default=0,
                   help="accepted for reproducibility records; training draws no random numbers")
    t.add_argument("--keep-beta", action="store_true", help="store per-example coefficients")
    t.add_argument("--trace", default=None, help="write key=value trace records here")
    t.add_argument("--out", required=True, help="model file (binary) or manifest (one-vs-rest)")

    pr = sub.add_parser("predict", help="score an SVMlight file")
    pr.add_argument("model")
    pr.add_argument("test_file")
    pr.add_argument("--out", default=None, help="write scores here instead of stdout")

    e = sub.add_parser("eval", help="evaluate scores against labels")
    e.add_argument("scores")
    e.add_argument("labels_file", help="SVMlight file whose labels are used")
    e.add_argument("--measures", default="f1,accuracy,prbep",
                   help=f"comma list from {','.join(metrics.MEASURES)}")
    e.add_argument("--k", type=int, default=None, help="k for prec@k and rec@k")
    e.add_argument("--rec-at", default=None, help="'2p' for Rec@2p, or an integer k for Rec@k")
    e.add_argument("--positive-class", default=None)
    e.add_argument("--format", choices=["table", "tsv"], default="table")

    s = sub.add_parser("selfcheck", help="compare the exact oracles and the QCQP solver to brute force")
    s.add_argument("--n-max", type=int, default=10, help=f"largest n for label enumeration (<= {BRUTE_FORCE_MAX_N})")
    s.add_argument("--draws", type=_positive_int, default=40)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--perturb", choices=["none", "label", "group", "qcqp"], default="none",
                   help="inject an error into one suite to exercise the failure path")
    return p


# -- train -----------------------------------------------------------------

def _loss_spec(args):
    if args.loss in ("prec@k", "rec@k") and args.k is None:
        raise ConfigError(f"--loss {args.loss} needs --k")
    try:
        return LossSpec.parse(args.loss, beta=args.beta, k=args.k)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _check_train_config(args):
    if args.B < 1:
        raise ConfigError("--B must be at least 1")
    if args.C_absolute is None and not args.C_scale > 0:
        raise ConfigError("--C-scale must be positive")
    if args.C_absolute is not None and not args.C_absolute > 0:
        raise ConfigError("--C-absolute must be positive")
    if not args.eps > 0:
        raise ConfigError("--eps must be positive")
    if args.max_outer < 1 or args.max_cuts < 1:
        raise ConfigError("--max-outer and --max-cuts must be at least 1")
    if args.parallel_classes < 1:
        raise ConfigError("--parallel-classes must be at least 1")


def _fmt_record(rec):
    parts = []
    for k, v in rec.items():
        if isinstance(v, float):
            v = format(v, ".17g")
        parts.append(f"{k}={v}")
    return " ".join(parts)


def _train_one(job):
    """Train one binary problem; returns (label, model text, trace lines, capped)."""
    label, ds, spec, cfg = job
    lines = []
    prefix = {} if label is None else {"class": label}

    def trace(rec):
        lines.append(_fmt_record({**prefix, **rec}))

    if cfg["scale"]:
        ds_fit, scale = scale_max_abs(ds)
    else:
        ds_fit, scale = ds, None
    C = cfg["C_absolute"] if cfg["C_absolute"] is not None else cfg["C_scale"] * ds.n
    meta = {"class": label} if label is not None else {}
    if scale is not None:
        meta["scaled"] = 1
    m, pool, state = model_mod.train(ds_fit, spec, cfg["B"], C, eps=cfg["eps"], max_outer=cfg["max_outer"],
                                     max_cuts=cfg["max_cuts"], outer_tol=cfg["outer_tol"], trace=trace,
                                     keep_beta=cfg["keep_beta"], meta=meta)
    if scale is not None:
        # fold the scaling into the weights so the model reads raw features
        m = model_mod.TrainedModel(m.indices, m.weights / scale[m.indices], m.groups, m.mu, m.meta, m.beta)
    trace({"layer": "done", "groups": len(pool), "outer_reason": pool.reason,
           "inner_reason": state.reason, "nnz": m.nnz})
    capped = any(h["inner_reason"] == "max-cuts" for h in pool.history)
    return label, model_mod.dumps(m), lines, capped


def _model_filename(out, label):
    base = os.path.basename(out)
    safe = "".join(ch if ch.isalnum() or ch in "+-._" else "_" for ch in str(label))
    return f"{base}.class-{safe}"


def cmd_train(args):
    _check_train_config(args)
    spec = _loss_spec(args)
    data = load_svmlight(args.train_file)
    cfg = dict(B=args.B, C_scale=args.C_scale, C_absolute=args.C_absolute, eps=args.eps,
               max_outer=args.max_outer, max_cuts=args.max_cuts, outer_tol=args.outer_tol,
               scale=args.scale, keep_beta=args.keep_beta)
    ovr = args.one_vs_rest or len(data.classes) > 2
    if not ovr:
        pos = args.positive_class
        if pos is not None:
            pos = _match_class(pos, data.classes)
        ds = as_binary(data, pos)
        ds.check_trainable()
        if spec.kind in (LossKind.PREC_AT_K, LossKind.REC_AT_K) and spec.k > ds.n:
            raise ConfigError(f"k={spec.k} exceeds n={ds.n}")
        results = [_train_one((None, ds, spec, cfg))]
    else:
        jobs = []
        for cls in data.classes:
            ds = binarize(data, cls)
            try:
                ds.check_trainable()
            except DegenerateDataError as e:
                logger.warning("class %s skipped: %s", cls, e)
                continue
            jobs.append((str(cls), ds, spec, cfg))
        if not jobs:
            raise DegenerateDataError("no trainable class")
        if args.parallel_classes > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=args.parallel_classes) as ex:
                results = list(ex.map(_train_one, jobs))
        else:
            results = [_train_one(j) for j in jobs]

    capped = False
    trace_lines = []
    if not ovr:
        _, text, lines, capped = results[0]
        _write_text(args.out, text)
        trace_lines = lines
    else:
        entries = []
        out_dir = os.path.dirname(args.out)
        for label, text, lines, cap in results:
            fname = _model_filename(args.out, label)
            _write_text(os.path.join(out_dir, fname), text)
            entries.append((label, fname))
            trace_lines.extend(lines)
            capped = capped or cap
        _write_text(args.out, model_mod.dumps_manifest(entries))
    if args.trace:
        _write_text(args.trace, "\n".join(trace_lines) + "\n")
    for line in trace_lines:
        logger.debug("%s", line)
    if capped:
        logger.warning("inner layer hit --max-cuts; the model is not eps-optimal")
        return EXIT_CAP
    return EXIT_OK


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _match_class(token, classes):
    for c in classes:
        if str(c) == str(token):
            return c
    try:
        x = float(token)
    except ValueError:
        x = None
    for c in classes:
        if x is not None and not isinstance(c, str) and float(c) == x:
            return c
    raise ConfigError(f"class {token!r} not present; classes are {', '.join(map(str, classes))}")


# -- predict ---------------------------------------------------------------

def _load_models(path):
    """Return ``[(label or None, model)]``; a manifest yields one entry per class."""
    if not model_mod.is_manifest(path):
        return [(None, model_mod.load(path))]
    with open(path, encoding="utf-8") as fh:
        entries = model_mod.loads_manifest(fh.read())
    base = os.path.dirname(path)
    out = []
    for label, fname in entries:
        mpath = os.path.join(base, fname)
        if not os.path.exists(mpath):
            raise DataError(f"manifest entry for class {label}: model file {fname} is missing")
        m = model_mod.load(mpath)
        if "class" in m.meta and str(m.meta["class"]) != label:
            raise DataError(f"model file {fname} belongs to class {m.meta['class']}, manifest says {label}")
        out.append((label, m))
    if not out:
        raise DataError("manifest lists no classes")
    return out


def _scores_for(models, data: MulticlassDataset):
    X = data.X
    for label, m in models:
        trained_m = m.meta.get("n_features")
        if isinstance(trained_m, int) and X.shape[1] > trained_m and X[:, trained_m:].nnz:
            logger.warning("test features beyond index %d are ignored%s", trained_m,
                           "" if label is None else f" (class {label})")
    return [(label, model_mod.predict_scores(m, X)) for label, m in models]


def cmd_predict(args):
    models = _load_models(args.model)
    data = load_svmlight(args.test_file)
    scored = _scores_for(models, data)
    if scored[0][0] is None:
        text = "".join(format(float(v), ".17g") + "\n" for v in scored[0][1])
    else:
        labels = [lab for lab, _ in scored]
        S = np.column_stack([s for _, s in scored])
        winner = np.argmax(S, axis=1)  # first maximum: manifest order breaks ties
        rows = ["prediction\t" + "\t".join(labels)]
        for i in range(S.shape[0]):
            rows.append(labels[winner[i]] + "\t" + "\t".join(format(float(v), ".17g") for v in S[i]))
        text = "\n".join(rows) + "\n"
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- eval ------------------------------------------------------------------

def _read_scores(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise DataError(f"{path}: no scores")
    if lines[0].startswith("prediction\t"):
        labels = lines[0].split("\t")[1:]
        try:
            S = np.array([[float(v) for v in ln.split("\t")[1:]] for ln in lines[1:]])
        except ValueError as e:
            raise DataError(f"{path}: {e}") from None
        if S.ndim != 2 or S.shape[1] != len(labels):
            raise DataError(f"{path}: ragged score table")
        return labels, S
    try:
        return None, np.array([float(v) for v in lines])
    except ValueError as e:
        raise DataError(f"{path}: {e}") from None


def cmd_eval(args):
    measures = [m.strip().lower() for m in args.measures.split(",") if m.strip()]
    k = args.k
    if args.rec_at is not None:
        if args.rec_at.lower() == "2p":
            measures.append("rec@2p")
        else:
            try:
                k = int(args.rec_at)
            except ValueError:
                raise ConfigError("--rec-at takes '2p' or an integer") from None
            measures.append("rec@k")
    measures = list(dict.fromkeys(measures))
    for m in measures:
        if m not in metrics.MEASURES:
            raise ConfigError(f"unknown measure {m!r}")
        if m in ("prec@k", "rec@k") and k is None:
            raise ConfigError(f"{m} needs --k")
    labels, S = _read_scores(args.scores)
    data = load_svmlight(args.labels_file)
    if S.shape[0] != data.n:
        raise DataError(f"{S.shape[0]} scores for {data.n} examples")
    if k is not None and not 1 <= k <= data.n:
        raise ConfigError(f"k={k} out of range 1..{data.n}")
    if labels is None:
        pos = _match_class(args.positive_class, data.classes) if args.positive_class else None
        y = as_binary(data, pos).labels
        report = metrics.evaluate_classes({"+1": S}, {"+1": y}, measures, k)
        if not report.per_class:
            raise DataError("no positive examples; measures are undefined")
    else:
        by_class, y_by_class = {}, {}
        for j, lab in enumerate(labels):
            by_class[lab] = S[:, j]
            y_by_class[lab] = np.where(np.array([str(c) for c in data.raw_labels]) == lab, 1, -1)
        report = metrics.evaluate_classes(by_class, y_by_class, measures, k)
        if not report.per_class:
            raise DataError("no class has positive examples")
    sys.stdout.write(report.to_tsv() if args.format == "tsv" else report.to_table())
    return EXIT_OK


# -- selfcheck -------------------------------------------------------------

def _suite_label(rng, draws, n_max, perturb):
    worst = 0.0
    kinds = [LossSpec.parse("hamming"), LossSpec.parse("f1"), LossSpec.parse("fbeta", beta=2.0),
             LossSpec.parse("prbep")]
    for n in range(4, n_max + 1):
        for _ in range(draws):
            y = np.where(rng.random(n) < 0.4, 1, -1)
            if np.all(y == y[0]):
                y[0] = -y[0]
            v = rng.normal(size=n) * rng.choice([0.1, 1.0, 10.0])
            specs = kinds + [LossSpec.parse("prec@k", k=int(rng.integers(1, n + 1))),
                             LossSpec.parse("rec@k", k=int(rng.integers(1, n + 1)))]
            for spec in specs:
                fast = most_violated_y(spec, y, v).objective
                if perturb:
                    fast += 1e-3
                slow = brute_force_most_violated_y(spec, y, v).objective
                worst = max(worst, abs(fast - slow))
    return worst, worst <= 1e-9


def _suite_group(rng, draws, perturb):
    worst = 0.0
    for _ in range(draws):
        m = int(rng.integers(1, 13))
        B = int(rng.integers(1, 4))
        c = rng.normal(size=m) * (rng.random(m) < 0.8)
        c[rng.integers(m)] = 1.0 + rng.random()
        g = most_violated_group(c, B)
        got = float(np.sum(c[g.members] ** 2))
        if perturb:
            got *= 0.999
        _, best = brute_force_most_violated_group(c, B)
        worst = max(worst, abs(got - best))
    return worst, worst == 0.0


def _suite_qcqp(rng, draws, perturb):
    worst = 0.0
    for _ in range(draws):
        K = int(rng.integers(1, 6))
        T = int(rng.integers(1, 4))
        G = np.stack([(lambda A: A.T @ A)(rng.normal(size=(K + 1, K))) for _ in range(T)])
        q = rng.normal(size=K) + 0.5
        C = float(rng.uniform(0.5, 3.0))
        sol = qcqp.solve(qcqp.QcqpInput(G, q, C))
        got = sol.objective + (1e-2 if perturb else 0.0)
        ref = qcqp.grid_search_objective(G, q, C)
        worst = max(worst, abs(got - ref), sol.kkt_residual, sol.slackness)
    return worst, worst <= 1e-4


def cmd_selfcheck(args):
    if not 4 <= args.n_max <= BRUTE_FORCE_MAX_N:
        raise ConfigError(f"--n-max must be in 4..{BRUTE_FORCE_MAX_N}")
    rng = np.random.default_rng(args.seed)
    ok_all = True
    for name, run in (("label-oracle", lambda: _suite_label(rng, args.draws, args.n_max, args.perturb == "label")),
                      ("group-oracle", lambda: _suite_group(rng, args.draws * 5, args.perturb == "group")),
                      ("qcqp", lambda: _suite_qcqp(rng, args.draws, args.perturb == "qcqp"))):
        t0 = time.perf_counter()
        worst, ok = run()
        ok_all &= ok
        print(f"{name}\t{'PASS' if ok else 'FAIL'}\tmax_dev={worst:.3g}\t{time.perf_counter() - t0:.1f}s")
    return EXIT_OK if ok_all else EXIT_SELFCHECK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"train": cmd_train, "predict": cmd_predict, "eval": cmd_eval, "selfcheck": cmd_selfcheck}
    try:
        return handlers[args.command](args)
    except ConfigError as e:
        logger.error("%s", e)
        return EXIT_CONFIG
    except (DataError, model_mod.ModelFormatError, metrics.MetricError, OSError) as e:
        logger.error("%s", e)
        return EXIT_DATA
    except qcqp.QcqpConvergenceError as e:
        logger.error("%s", e)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
