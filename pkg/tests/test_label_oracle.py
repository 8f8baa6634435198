import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fgmperf.contingency import LossSpec
from fgmperf.data_io import DegenerateDataError, FeatureGroup
from fgmperf.label_oracle import brute_force_most_violated_y, decision_values, most_violated_y
from oracles import counts, enumerate_labelings, ref_admissible, ref_loss

LOSSES = [("hamming", {}), ("f1", {}), ("fbeta", {"beta": 2.0}), ("prbep", {}),
          ("prec@k", {"k": 2}), ("rec@k", {"k": 3})]


class TestDecisionValues:
    def test_no_groups(self):
        X = sp.csr_matrix(np.ones((3, 4)))
        np.testing.assert_array_equal(decision_values([], [], X), np.zeros(3))

    def test_single_feature(self):
        X = sp.csr_matrix(np.array([[2.0, 0.0], [0.0, 1.0], [-1.0, 3.0]]))
        v = decision_values([FeatureGroup([0])], [np.array([0.5])], X)
        np.testing.assert_allclose(v, [1.0, 0.0, -0.5])

    def test_overlapping_groups_add(self):
        X = sp.csr_matrix(np.array([[1.0, 2.0], [3.0, -1.0]]))
        groups = [FeatureGroup([0, 1]), FeatureGroup([1])]
        v = decision_values(groups, [np.array([1.0, 1.0]), np.array([2.0])], X)
        # row 0: 1 + 2 + 4; row 1: 3 - 1 - 2
        np.testing.assert_allclose(v, [7.0, 0.0])


class TestHandCases:
    def test_hamming_two_examples(self):
        res = most_violated_y(LossSpec.parse("hamming"), [1, -1], [-1.0, 1.0])
        np.testing.assert_array_equal(res.y_prime, [-1, 1])
        # both flips: loss 4, sum y'v = 2
        assert res.objective == pytest.approx(6.0)
        want, _ = enumerate_labelings("hamming", [1, -1], [-1.0, 1.0])
        assert res.objective == pytest.approx(want)

    def test_f1_zero_scores(self):
        res = most_violated_y(LossSpec.parse("f1"), [1, -1, -1], np.zeros(3))
        assert res.table.a == 0 and res.loss == 100.0
        # ties prefer fewer false positives
        np.testing.assert_array_equal(res.y_prime, [-1, -1, -1])
        want, _ = enumerate_labelings("f1", [1, -1, -1], [0.0, 0.0, 0.0])
        assert res.objective == want

    # the @k losses only admit y' = y when k = p
    @pytest.mark.parametrize("name,kw", LOSSES[:4] + [("prec@k", {"k": 3})])
    def test_dominant_margin(self, name, kw):
        y = np.array([1, -1, 1, -1, -1, 1])
        res = most_violated_y(LossSpec.parse(name, **kw), y, 1e6 * y)
        np.testing.assert_array_equal(res.y_prime, y)
        assert res.loss == 0.0
        assert res.violation == pytest.approx(0.0)
        assert res.is_null(y)

    def test_prbep_n6(self):
        rng = np.random.default_rng(7)
        y = np.array([1, 1, 1, -1, -1, -1])
        for _ in range(30):
            v = rng.normal(size=6)
            res = most_violated_y(LossSpec.parse("prbep"), y, v)
            want, _ = enumerate_labelings("prbep", y, v)
            assert res.objective == pytest.approx(want, abs=1e-12)
            assert res.table.b == res.table.c

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateDataError):
            most_violated_y(LossSpec.parse("f1"), [1], [0.3])
        with pytest.raises(DegenerateDataError):
            brute_force_most_violated_y(LossSpec.parse("f1"), [-1, -1], [0.3, 0.1])

    def test_brute_force_cap(self):
        with pytest.raises(ValueError):
            brute_force_most_violated_y(LossSpec.parse("f1"), [1] + [-1] * 21, np.zeros(22))

    def test_k_larger_than_n(self):
        with pytest.raises(ValueError):
            most_violated_y(LossSpec.parse("prec@k", k=5), [1, -1, 1], np.zeros(3))


class TestWitnessConsistency:
    @pytest.mark.parametrize("name,kw", LOSSES)
    def test_reported_fields(self, name, kw):
        rng = np.random.default_rng(11)
        spec = LossSpec.parse(name, **kw)
        for _ in range(40):
            y = np.where(rng.random(9) < 0.4, 1, -1)
            y[0], y[1] = 1, -1
            v = rng.normal(size=9)
            res = most_violated_y(spec, y, v)
            a, b, c, d = counts(y, res.y_prime)
            assert (res.table.a, res.table.b, res.table.c, res.table.d) == (a, b, c, d)
            assert ref_admissible(name, a, b, c, kw.get("k"))
            assert res.loss == pytest.approx(ref_loss(name, a, b, c, d, kw.get("beta", 1.0)))
            assert res.objective == pytest.approx(res.loss + res.y_prime @ v, abs=1e-12)
            assert res.offset == pytest.approx(y @ v)


@st.composite
def labeled_scores(draw):
    n = draw(st.integers(2, 9))
    y = np.array(draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n)))
    if np.all(y == y[0]):
        y[0] = -y[0]
    # integer-valued scores produce many exact ties
    v = np.array(draw(st.lists(st.integers(-3, 3), min_size=n, max_size=n)), dtype=float)
    v *= draw(st.sampled_from([0.25, 1.0, 7.0]))
    return y, v


class TestAgainstEnumeration:
    @settings(max_examples=150, deadline=None)
    @given(labeled_scores(), st.sampled_from(LOSSES), st.data())
    def test_fast_equals_enumeration(self, yv, loss, data):
        y, v = yv
        name, kw = loss
        kw = dict(kw)
        if "k" in kw:
            kw["k"] = data.draw(st.integers(1, y.size))
        spec = LossSpec.parse(name, **kw)
        fast = most_violated_y(spec, y, v)
        want, _ = enumerate_labelings(name, y, v, beta=kw.get("beta", 1.0), k=kw.get("k"))
        assert fast.objective == pytest.approx(want, abs=1e-9)
        assert brute_force_most_violated_y(spec, y, v).objective == pytest.approx(want, abs=1e-9)
