import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from epenas.archspace import CellSpec, random_sample
from epenas.data import synthetic_batch
from epenas.engine import Tensor
from epenas.network import build_network, profile_config
from epenas.scorer import (
    K_CONST,
    JacobianMatrix,
    ScoringError,
    aggregate_score,
    block_correlation,
    branch_name,
    class_correlation,
    class_covariance,
    compute_jacobian,
    epe_score,
    evaluate_class,
    partition_by_class,
    score_jacobian,
    single_matrix_score,
    single_matrix_score_jacobian,
)

from helpers import JacobianNet, scoring_fixture
from oracles import correlation_direct, covariance_direct, score_direct

LN1K = math.log(1 + K_CONST)


def report_is_finite(r):
    return math.isfinite(r.score) and all(math.isfinite(e) for e in r.e_values)


class TestJacobian:
    def test_sum_network_gives_ones(self):
        x = np.random.default_rng(0).standard_normal((3, 2, 2, 2))
        J = compute_jacobian(lambda t: t.sum(), x, [0, 1, 0])
        np.testing.assert_array_equal(J.rows, np.ones((3, 8)))
        assert J.num_classes == 2

    def test_identical_images_without_normalization(self):
        x = np.ones((2, 4))
        w = np.random.default_rng(1).standard_normal((2, 4))
        from epenas.engine import LayerParams, linear, relu

        net = lambda t: linear(relu(linear(t, LayerParams(w, np.zeros(2)))), LayerParams(w[:, :2], np.zeros(2)))
        J = compute_jacobian(net, x, [0, 0])
        np.testing.assert_array_equal(J.rows[0], J.rows[1])

    def test_all_zero_cell_network_matches_finite_differences(self):
        cfg = profile_config("tiny", extent=8, num_classes=2)
        net = build_network(CellSpec((0,) * 6), cfg, seed=3)
        b = synthetic_batch(4, 2, 8, seed=3)
        J = compute_jacobian(net, b.images, b.labels)
        from epenas.engine import finite_diff_gradient

        fd = finite_diff_gradient(lambda a: float(net(Tensor(a)).data.sum()), b.images, step=1e-5)
        # zeroize cells cut every path from the input, so both sides vanish
        np.testing.assert_allclose(J.rows.reshape(b.images.shape), fd, atol=1e-8)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_raises_with_arch_name(self):
        net = JacobianNet(np.array([[np.inf, 1.0], [0.0, 1.0]]))
        with pytest.raises(ScoringError, match="my-arch"):
            compute_jacobian(net, np.zeros((2, 2)), [0, 1], arch="my-arch")

    def test_label_length_checked(self):
        with pytest.raises(ValueError):
            JacobianMatrix(np.zeros((3, 2)), [0, 1])


class TestBlocks:
    def test_partition(self):
        rows = np.arange(8.0).reshape(4, 2)
        blocks = partition_by_class(JacobianMatrix(rows, [0, 1, 0, 1]))
        assert [b.label for b in blocks] == [0, 1]
        np.testing.assert_array_equal(blocks[0].rows, rows[[0, 2]])
        np.testing.assert_array_equal(blocks[1].rows, rows[[1, 3]])
        (only,) = partition_by_class(JacobianMatrix(rows, [5] * 4))
        np.testing.assert_array_equal(only.rows, rows)

    @given(st.lists(st.integers(0, 4), min_size=1, max_size=20))
    def test_partition_keeps_row_multiset(self, labels):
        rows = np.random.default_rng(len(labels)).standard_normal((len(labels), 3))
        blocks = partition_by_class(JacobianMatrix(rows, labels))
        assert sum(b.rows.shape[0] for b in blocks) == len(labels)
        got = sorted(map(tuple, np.vstack([b.rows for b in blocks])))
        assert got == sorted(map(tuple, rows))

    def test_covariance_examples(self):
        assert class_covariance(np.ones((1, 4))).tolist() == [[0.0]]
        assert not class_covariance(np.tile([1.0, 2.0, 3.0], (2, 1))).any()
        rows = np.random.default_rng(2).standard_normal((3, 5))
        want, _ = covariance_direct(rows.tolist())
        np.testing.assert_allclose(class_covariance(rows), want, rtol=1e-12, atol=1e-12)

    def test_correlation_identity(self):
        np.testing.assert_array_equal(class_correlation(np.eye(3)).matrix, np.eye(3))

    @given(st.integers(0, 10_000))
    def test_two_distinct_rows_are_antipodal(self, seed):
        rows = np.random.default_rng(seed).standard_normal((2, 7))
        np.testing.assert_array_equal(block_correlation(rows).matrix, [[1.0, -1.0], [-1.0, 1.0]])

    @given(st.integers(0, 10_000), st.integers(2, 8))
    def test_correlation_matches_formula(self, seed, n):
        a = np.random.default_rng(seed).standard_normal((n, n + 2))
        cov = a @ a.T
        got = class_correlation(cov).matrix
        want = correlation_direct(cov.tolist(), [False] * n)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)
        assert np.all(np.abs(got) <= 1 + 1e-12)
        np.testing.assert_array_equal(got, got.T)

    def test_zero_variance_rows(self):
        cov = np.array([[4.0, 0.0, 2.0], [0.0, 0.0, 0.0], [2.0, 0.0, 9.0]])
        m = class_correlation(cov).matrix
        np.testing.assert_array_equal(np.diag(m), 1.0)
        assert m[1, 0] == m[0, 1] == m[1, 2] == 0.0
        assert m[0, 2] == pytest.approx(2 / 6)
        assert np.array_equal(class_correlation(np.zeros((2, 2))).matrix, np.eye(2))


class TestEvaluation:
    def test_antipodal_pair(self):
        m = np.array([[1.0, -1.0], [-1.0, 1.0]])
        assert evaluate_class(m, 10) == pytest.approx(4 * LN1K, abs=1e-15)
        assert 4 * LN1K == pytest.approx(3.99998e-5, rel=1e-5)

    def test_identity_both_branches(self):
        want = 2 * LN1K + 2 * math.log(K_CONST)
        assert evaluate_class(np.eye(2), 100) == pytest.approx(want, abs=1e-12)
        assert evaluate_class(np.eye(2), 150) == pytest.approx(want / 4, abs=1e-12)
        assert want == pytest.approx(-23.0258, abs=1e-4)
        assert want / 4 == pytest.approx(-5.75646, abs=1e-5)

    def test_single_row_class(self):
        r = score_jacobian(JacobianMatrix(np.array([[1.0, 2.0]]), [0]))
        assert r.e_values == [pytest.approx(LN1K, abs=1e-18)]

    def test_aggregate_examples(self):
        assert aggregate_score([-23.0]) == 23.0
        assert aggregate_score([-10.0, -30.0]) == 40.0
        assert aggregate_score([-3.5] * 101) == 0.0
        E = list(np.random.default_rng(3).standard_normal(120))
        want = sum(abs(E[i] - E[j]) for i in range(120) for j in range(i, 120)) / 120
        assert aggregate_score(E) == pytest.approx(want, rel=1e-13)
        with pytest.raises(ValueError):
            aggregate_score([])
        with pytest.raises(ValueError):
            aggregate_score([1.0, 2.0], num_classes=3)

    def test_branch_boundary(self):
        assert branch_name(100) == "sum-abs"
        assert branch_name(101) == "pairwise-diff"
        for C, branch in [(100, "sum-abs"), (101, "pairwise-diff")]:
            rows, labels = scoring_fixture(0, C)
            r = score_jacobian(JacobianMatrix(rows, labels))
            assert r.branch == branch and r.num_classes == C


class TestScore:
    @pytest.mark.parametrize("C", [1, 2, 3, 101, 150])
    @pytest.mark.parametrize("index", range(4))
    def test_matches_oracle(self, C, index):
        rows, labels = scoring_fixture(index, C)
        r = epe_score(JacobianNet(rows), np.zeros(rows.shape), labels)
        S, E = score_direct(rows.tolist(), labels.tolist())
        assert report_is_finite(r)
        assert r.score == pytest.approx(S, abs=1e-10)
        np.testing.assert_allclose(r.e_values, E, atol=1e-10)

    @settings(max_examples=50, deadline=None)
    @given(
        arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 6)), elements=st.floats(-4, 4, width=16)),
        st.data(),
    )
    def test_never_nan_and_non_negative(self, rows, data):
        labels = data.draw(st.lists(st.integers(0, 3), min_size=rows.shape[0], max_size=rows.shape[0]))
        r = score_jacobian(JacobianMatrix(rows, labels))
        assert report_is_finite(r)
        assert r.score >= 0

    @given(st.integers(0, 10_000))
    def test_permutation_and_relabel_bit_exact(self, seed):
        rng = np.random.default_rng(seed)
        rows, labels = scoring_fixture(seed, int(rng.choice([1, 2, 3, 101])))
        base = score_jacobian(JacobianMatrix(rows, labels)).score
        p = rng.permutation(rows.shape[0])
        assert score_jacobian(JacobianMatrix(rows[p], labels[p])).score == base
        uniq = np.unique(labels)
        mapping = dict(zip(uniq, rng.permutation(uniq.size) + 7))
        assert score_jacobian(JacobianMatrix(rows, [mapping[v] for v in labels])).score == base

    def test_single_matrix_is_unlabeled_block(self):
        rows = np.random.default_rng(4).standard_normal((2, 5))
        assert single_matrix_score_jacobian(JacobianMatrix(rows, [0, 1])) == pytest.approx(4 * LN1K, abs=1e-15)
        rows = np.random.default_rng(5).standard_normal((9, 5))
        J = JacobianMatrix(rows, [3] * 9)
        assert score_jacobian(J).score == single_matrix_score_jacobian(J)


class TestOnNetworks:
    @pytest.fixture(scope="class")
    @staticmethod
    def setup():
        cfg = profile_config("tiny", extent=8, num_classes=3)
        spec = random_sample(1, seed=11)[0]
        return build_network(spec, cfg, seed=2), synthetic_batch(12, 3, 8, seed=4)

    def test_report_fields(self, setup):
        net, b = setup
        r = epe_score(net, b.images, b.labels)
        assert r.arch == str(net.spec)
        assert r.num_classes == 3 and len(r.e_values) == 3 and r.branch == "sum-abs"
        assert r.score >= 0 and r.seconds > 0 and r.k == K_CONST
        assert set(r.to_json()) == {"arch", "score", "branch", "num_classes", "e_values", "seconds"}

    def test_batch_permutation(self, setup):
        net, b = setup
        p = np.random.default_rng(0).permutation(len(b))
        a = epe_score(net, b.images, b.labels).score
        c = epe_score(net, b.images[p], b.labels[p]).score
        assert c == pytest.approx(a, rel=1e-9)

    def test_single_class_identity(self, setup):
        net, b = setup
        r = epe_score(net, b.images, np.zeros(len(b), dtype=int))
        assert abs(r.score - abs(single_matrix_score(net, b.images))) <= 1e-12
