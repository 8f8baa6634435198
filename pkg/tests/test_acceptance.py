"""Acceptance suite: one PASS/FAIL line per criterion.

Run with pytest (lines are repeated in the terminal summary) or directly as
``python tests/test_acceptance.py [--skip-slow]``.
"""

import itertools
import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from conftest import ACCEPTANCE_LINES  # noqa: E402
from fgmperf import qcqp  # noqa: E402
from fgmperf.contingency import LossSpec  # noqa: E402
from fgmperf.data_io import FeatureGroup  # noqa: E402
from fgmperf.inner_bundle import run_inner  # noqa: E402
from fgmperf.label_oracle import most_violated_y  # noqa: E402
from fgmperf.metrics import eval_f1  # noqa: E402
from fgmperf.model import dumps, groupwise_score, loads, predict_score, predict_scores, train  # noqa: E402
from fgmperf.outer_groups import most_violated_group, run_two_layer  # noqa: E402
from oracles import enumerate_groups, enumerate_labelings_fast, random_psd_stack  # noqa: E402
from synth import imbalanced_split, planted  # noqa: E402

LOSSES = [("f1", {}), ("prec@k", {}), ("rec@k", {}), ("prbep", {}), ("hamming", {})]


def _report(number, title, ok, detail):
    line = "criterion %d  %-38s %s  %s" % (number, title, "PASS" if ok else "FAIL", detail)
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


class TestAcceptance:
    def test_1_label_oracle_exact(self):
        rng = np.random.default_rng(101)
        t0 = time.perf_counter()
        worst, draws = 0.0, 0
        for n in range(6, 13):
            for name, kw in LOSSES:
                for _ in range(200):
                    y = np.where(rng.random(n) < rng.uniform(0.2, 0.6), 1, -1)
                    y[rng.choice(n, 2, replace=False)] = (1, -1)
                    v = rng.normal(scale=rng.choice([0.1, 1.0, 30.0]), size=n)
                    k = int(rng.integers(1, n + 1)) if name.endswith("@k") else None
                    got = most_violated_y(LossSpec.parse(name, k=k, **kw), y, v).objective
                    want = enumerate_labelings_fast(name, y, v, k=k)
                    worst = max(worst, abs(got - want))
                    draws += 1
        elapsed = time.perf_counter() - t0
        ok = worst <= 1e-9 and elapsed < 60
        _report(1, "label oracle vs 2^n enumeration", ok,
                "draws=%d max_abs_dev=%.2e time=%.1fs" % (draws, worst, elapsed))
        assert ok

    def test_2_group_oracle_exact(self):
        rng = np.random.default_rng(202)
        mismatches = 0
        draws = 0
        for _ in range(300):
            m, B = int(rng.integers(1, 16)), int(rng.integers(1, 4))
            c = rng.normal(size=m) * (rng.random(m) < 0.8)
            if rng.random() < 0.3:
                c = np.round(c, 1)
            if not np.any(c):
                c[0] = 1.0
            g = most_violated_group(c, B)
            want, _ = enumerate_groups(c, B)
            got = float(sum(float(c[j]) ** 2 for j in g.members))
            mismatches += got != want or g.budget_used > B
            draws += 1
        ok = mismatches == 0
        _report(2, "group oracle vs enumeration", ok, "draws=%d mismatches=%d" % (draws, mismatches))
        assert ok

    def test_3_qcqp_certified(self):
        rng = np.random.default_rng(303)
        kkt = slack = grid = bridge = 0.0
        count = 0
        for _ in range(100):
            K, T = int(rng.integers(1, 9)), int(rng.integers(1, 5))
            rank = int(rng.integers(1, K + 1)) if rng.random() < 0.3 else None
            G = random_psd_stack(rng, T, K, rank)
            q = rng.uniform(-0.5, 2.0, size=K)
            C = float(rng.choice([0.1, 1.0, 10.0]))
            sol = qcqp.solve(qcqp.QcqpInput(G, q, C))
            kkt = max(kkt, sol.kkt_residual)
            slack = max(slack, sol.slackness)
            grid = max(grid, abs(sol.objective - qcqp.grid_search_objective(G, q, C)))
            primal = qcqp.reduced_primal_objective(G, q, C, sol.alpha, sol.mu)
            bridge = max(bridge, abs(primal - sol.objective))
            count += 1
        ok = kkt <= 1e-6 and slack <= 1e-6 and grid <= 1e-4 and bridge <= 1e-6
        _report(3, "QCQP certificates", ok, "instances=%d kkt=%.1e slack=%.1e grid=%.1e bridge=%.1e"
                % (count, kkt, slack, grid, bridge))
        assert ok

    def test_4_bundle_behavior(self):
        rng = np.random.default_rng(404)
        decreases, unconverged, runs, worst_cuts = 0, 0, 0, 0
        for seed in range(20):
            n = int(rng.integers(10, 51))
            m = int(rng.integers(4, 15))
            name, kw = LOSSES[seed % len(LOSSES)]
            k = int(rng.integers(1, n + 1)) if name.endswith("@k") else None
            ds, _ = planted(n, m, 2, seed=seed, pos_frac=rng.uniform(0.2, 0.5), signal=0.6)
            spec = LossSpec.parse(name, k=k, **kw)
            groups = [FeatureGroup(rng.choice(m, int(rng.integers(1, 4)), replace=False))
                      for _ in range(int(rng.integers(1, 4)))]
            for C in (0.5, 5.0):
                log = []
                state = run_inner(ds, spec, groups, C=C * n / 10, eps=1e-3, max_cuts=200, trace=log.append)
                jk = [r["J_K"] for r in log]
                decreases += sum(b < a - 1e-9 * max(1.0, abs(a)) for a, b in zip(jk, jk[1:]))
                unconverged += not state.gap <= 1e-3
                worst_cuts = max(worst_cuts, len(state.cuts))
                runs += 1
        ok = decreases == 0 and unconverged == 0
        _report(4, "bundle J_K monotone, eps-gap reached", ok,
                "runs=%d decreases=%d gap_misses=%d max_cuts_used=%d" % (runs, decreases, unconverged, worst_cuts))
        assert ok

    def test_5_relaxation_bound(self):
        rng = np.random.default_rng(505)
        t0 = time.perf_counter()
        above, close, total = 0, 0, 0
        worst, excess = 0.0, -np.inf
        for seed in range(25):
            n, m, B = int(rng.integers(6, 13)), int(rng.integers(3, 9)), int(rng.integers(1, 3))
            name, kw = LOSSES[seed % len(LOSSES)]
            k = int(rng.integers(1, n + 1)) if name.endswith("@k") else None
            ds, _ = planted(n, m, 2, seed=500 + seed, pos_frac=0.4, signal=0.5)
            spec = LossSpec.parse(name, k=k, **kw)
            C = 1.0
            pool, state = run_two_layer(ds, spec, B=B, C=C, eps=1e-6, max_outer=100, outer_tol=0.0)
            relaxed = state.objective
            best = np.inf
            for size in range(1, min(B, m) + 1):
                for d in itertools.combinations(range(m), size):
                    single = run_inner(ds, spec, [FeatureGroup(d)], C=C, eps=1e-6, max_cuts=500)
                    best = min(best, single.upper)
            # equal values (pool holds the best d) differ only by round-off, about 1e-15
            excess = max(excess, (relaxed - best) / max(1.0, abs(best)))
            above += relaxed > best + 1e-12 * max(1.0, abs(best))
            rel = (best - relaxed) / best if best > 0 else 0.0
            worst = max(worst, rel)
            close += rel <= 0.10
            total += 1
        elapsed = time.perf_counter() - t0
        ok = above == 0 and close >= 0.8 * total and elapsed < 300
        _report(5, "relaxed objective <= best single d", ok,
                "instances=%d violations=%d max_excess=%.1e within10%%=%d max_rel_gap=%.3f time=%.0fs"
                % (total, above, excess, close, worst, elapsed))
        assert ok

    @pytest.mark.slow
    def test_6_f1_beats_hamming(self):
        wins, rows = 0, []
        for seed in range(10):
            tr, te, _ = imbalanced_split(seed)
            f1 = {}
            for loss in ("f1", "hamming"):
                model, _, _ = train(tr, LossSpec.parse(loss), B=5, C=0.1 * tr.n, eps=1e-3, max_outer=10)
                f1[loss] = eval_f1(predict_scores(model, te.X), te.labels)
            wins += f1["f1"] > f1["hamming"]
            rows.append("%.1f/%.1f" % (f1["f1"], f1["hamming"]))
        ok = wins >= 8
        _report(6, "F1 model beats Hamming on test F1", ok,
                "wins=%d/10 (f1/hamming: %s)" % (wins, " ".join(rows)))
        assert ok

    def test_7_sparsity(self):
        hits, bound_ok = 0, True
        for seed in range(10):
            ds, cols = planted(120, 40, 2, seed=700 + seed, pos_frac=0.3, signal=0.8)
            model, pool, _ = train(ds, LossSpec.parse("f1"), B=2, C=0.1 * ds.n, max_outer=10)
            bound_ok &= model.nnz <= len(pool) * pool.B
            hits += bool(set(model.indices.tolist()) & set(cols.tolist()))
        ok = bound_ok and hits >= 9
        _report(7, "nnz <= T*B, planted feature selected", ok, "bound=%s hits=%d/10" % (bound_ok, hits))
        assert ok

    def test_8_paths_and_round_trip(self):
        ds, _ = planted(60, 15, 3, seed=808, pos_frac=0.3)
        model, _, state = train(ds, LossSpec.parse("prbep"), B=3, C=6.0, max_outer=5)
        dev = 0.0
        for i, x in enumerate(ds.examples):
            row = ds.X[i].toarray().ravel()
            direct = sum(float(row[g.members] @ w) for g, w in zip(state.groups, state.weights))
            dev = max(dev, abs(predict_score(model, x) - direct), abs(groupwise_score(model, x) - direct))
        back = loads(dumps(model))
        exact = (np.array_equal(predict_scores(back, ds.X), predict_scores(model, ds.X))
                 and np.array_equal(back.weights, model.weights))
        ok = dev <= 1e-9 and exact
        _report(8, "prediction paths and round-trip", ok, "max_dev=%.1e bit_exact=%s" % (dev, exact))
        assert ok


if __name__ == "__main__":
    skip_slow = "--skip-slow" in sys.argv[1:]
    suite = TestAcceptance()
    failed = 0
    for attr in sorted(a for a in dir(suite) if a.startswith("test_")):
        if skip_slow and attr == "test_6_f1_beats_hamming":
            continue
        try:
            getattr(suite, attr)()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
