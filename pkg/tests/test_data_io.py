import io

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fgmperf.data_io import (DataError, DegenerateDataError, FeatureGroup, SparseDataset, SparseVector,
                             SvmlightParseError, as_binary, binarize, dot_on_group, dump_svmlight,
                             parse_svmlight, scale_max_abs)


class TestParse:
    def test_single_line(self):
        ds = parse_svmlight("+1 3:0.5 7:1.0\n")
        assert ds.n == 1 and ds.m == 7
        assert ds.raw_labels == (1,)
        assert ds.examples[0].entries == [(3, 0.5), (7, 1.0)]

    def test_label_only_line(self):
        ds = parse_svmlight("-1\n")
        assert ds.n == 1
        assert len(ds.examples[0]) == 0

    def test_decreasing_indices(self):
        with pytest.raises(SvmlightParseError, match="indices not increasing at line 1"):
            parse_svmlight("1 5:2 3:1")

    def test_error_reports_line(self):
        with pytest.raises(SvmlightParseError) as exc:
            parse_svmlight("1 1:1\n-1 2:x\n")
        assert exc.value.lineno == 2

    @pytest.mark.parametrize("line", ["1 0:1", "1 a:1", "1 2", "1 2:nan", "3:1"])
    def test_malformed(self, line):
        with pytest.raises(SvmlightParseError):
            parse_svmlight(line)

    def test_comments_qid_and_zeros(self):
        ds = parse_svmlight("# header\n1 qid:3 1:0 2:4 # tail\n\n-1 1:2\n")
        assert ds.n == 2
        assert ds.examples[0].entries == [(2, 4.0)]

    def test_empty_input(self):
        with pytest.raises(DataError):
            parse_svmlight("\n# nothing\n")

    def test_class_tokens(self):
        ds = parse_svmlight("b 1:1\na 1:1\n10 1:1\n2 1:1\n")
        assert ds.classes == (2, 10, "a", "b")

    def test_n_features_truncates(self):
        ds = parse_svmlight("1 1:1 5:2\n", n_features=3)
        assert ds.m == 3
        assert ds.examples[0].entries == [(1, 1.0)]


class TestRoundTrip:
    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.lists(st.floats(-1e6, 1e6, allow_nan=False).filter(lambda x: x != 0),
                             min_size=0, max_size=6), min_size=1, max_size=8),
           st.integers(0, 2 ** 31 - 1))
    def test_dump_parse(self, rows, seed):
        rng = np.random.default_rng(seed)
        m = 12
        dense = np.zeros((len(rows), m))
        for i, vals in enumerate(rows):
            cols = np.sort(rng.choice(m, size=min(len(vals), m), replace=False))
            dense[i, cols] = vals[:cols.size]
        labels = rng.choice([-1, 1], size=len(rows))
        text = dump_svmlight(sp.csr_matrix(dense), labels)
        back = parse_svmlight(io.StringIO(text), n_features=m)
        np.testing.assert_array_equal(back.X.toarray(), dense)
        assert list(back.raw_labels) == list(labels)


class TestBinarize:
    def setup_method(self):
        self.ds = parse_svmlight("a 1:1\nb 2:1\nc 3:1\n")

    def test_one_vs_rest(self):
        np.testing.assert_array_equal(binarize(self.ds, "a").labels, [1, -1, -1])

    def test_shares_matrix(self):
        assert binarize(self.ds, "b").X is self.ds.X

    def test_all_positive_is_degenerate(self):
        ds = parse_svmlight("b 1:1\nb 2:1\n")
        bin_ds = binarize(ds, "b")
        np.testing.assert_array_equal(bin_ds.labels, [1, 1])
        with pytest.raises(DegenerateDataError):
            bin_ds.check_trainable()

    def test_unknown_class(self):
        with pytest.raises(DataError):
            binarize(parse_svmlight("a 1:1\nb 1:1\n"), "z")

    def test_binary_default_positive(self):
        ds = parse_svmlight("0 1:1\n1 1:1\n")
        np.testing.assert_array_equal(as_binary(ds).labels, [-1, 1])
        ds = parse_svmlight("-1 1:1\n+1 1:1\n")
        np.testing.assert_array_equal(as_binary(ds).labels, [-1, 1])

    def test_binary_rejects_three_classes(self):
        with pytest.raises(DataError):
            as_binary(self.ds)


class TestDotOnGroup:
    def test_hand_value(self):
        x = SparseVector.from_entries([(1, 2.0), (3, 1.0)])
        assert dot_on_group(x, [0.5, 0.5], FeatureGroup([0, 2])) == pytest.approx(1.5)

    def test_disjoint(self):
        x = SparseVector.from_entries([(1, 2.0)])
        assert dot_on_group(x, [3.0], FeatureGroup([4])) == 0.0

    def test_empty_vector(self):
        assert dot_on_group(SparseVector([], []), [1.0, 2.0], FeatureGroup([0, 1])) == 0.0

    def test_matches_dense(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            dense = rng.normal(size=20) * (rng.random(20) < 0.4)
            x = SparseVector(np.flatnonzero(dense), dense[dense != 0])
            members = np.sort(rng.choice(20, 5, replace=False))
            w = rng.normal(size=5)
            assert dot_on_group(x, w, FeatureGroup(members)) == pytest.approx(dense[members] @ w, abs=1e-12)


class TestDataset:
    def test_invariants(self):
        with pytest.raises(DataError):
            SparseDataset(sp.csr_matrix(np.ones((2, 2))), np.array([1, 0]))
        with pytest.raises(DataError):
            SparseDataset(sp.csr_matrix(np.ones((2, 2))), np.array([1]))

    def test_sparse_vector_rejects_unsorted(self):
        with pytest.raises(DataError):
            SparseVector([3, 1], [1.0, 1.0])

    def test_scaling(self):
        X = sp.csr_matrix(np.array([[2.0, 0.0, -4.0], [1.0, 0.0, 2.0]]))
        ds, scale = scale_max_abs(SparseDataset(X, np.array([1, -1])))
        np.testing.assert_allclose(scale, [2.0, 1.0, 4.0])
        np.testing.assert_allclose(ds.X.toarray(), [[1.0, 0.0, -1.0], [0.5, 0.0, 0.5]])
