import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abqp.blocks import (
    BlockMatrix,
    BlockPartition,
    BlockVector,
    block_max_norm,
    block_norm_table,
    dominance_gap,
    dominance_gaps,
    gershgorin_lambda_min_bound,
    induced_norm_upper_bound,
    inverse_norm_bound,
    is_strictly_block_diag_dominant,
    spectral_norm,
    symmetric_extreme_eigs,
)
from conftest import random_nonsymmetric_dominant, random_partition, random_spd_dominant


class TestPartition:
    def test_offsets(self):
        p = BlockPartition((2, 1, 3))
        assert p.offsets == (0, 2, 3)
        assert p.n == 6
        assert p.block_slice(2) == slice(3, 6)

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            BlockPartition((2, 0))
        with pytest.raises(ValueError):
            BlockPartition(())

    def test_vector_length_checked(self):
        with pytest.raises(ValueError):
            BlockVector([1.0, 2.0], BlockPartition((3,)))


class TestBlockMaxNorm:
    def test_worked_examples(self):
        assert block_max_norm(BlockVector([3, 4, 1], BlockPartition((2, 1)))) == 5.0
        assert block_max_norm(BlockVector([0, 0, 0], BlockPartition((1, 2)))) == 0.0
        assert block_max_norm(BlockVector([0.5, -0.7], BlockPartition((1, 1)))) == pytest.approx(0.7)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=12))
    def test_below_euclidean_above_max_abs(self, values):
        # one block per entry: equals max abs; whole vector: equals 2-norm
        data = np.asarray(values)
        scalar_blocks = BlockVector(data, BlockPartition((1,) * len(values)))
        assert block_max_norm(scalar_blocks) == pytest.approx(np.max(np.abs(data)))
        one_block = BlockVector(data, BlockPartition((len(values),)))
        assert block_max_norm(one_block) == pytest.approx(np.linalg.norm(data))


class TestSpectralNorm:
    def test_worked_examples(self):
        assert spectral_norm(np.eye(3)) == pytest.approx(1.0, abs=1e-10)
        assert spectral_norm([[0, 1], [0, 0]]) == pytest.approx(1.0, abs=1e-10)
        assert spectral_norm([[2, 1], [1, 2]]) == pytest.approx(3.0, rel=1e-10)

    def test_zero_and_rectangular(self):
        assert spectral_norm(np.zeros((3, 2))) == 0.0
        B = np.array([[1.0, 2.0, 2.0]])
        assert spectral_norm(B) == pytest.approx(3.0, rel=1e-10)

    def test_matches_closed_forms_small(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            m, n = rng.integers(1, 4, size=2)
            B = rng.standard_normal((m, n)) * rng.uniform(0.1, 10)
            expected = np.linalg.svd(B, compute_uv=False)[0]
            assert spectral_norm(B) == pytest.approx(expected, abs=1e-8 * max(1, expected))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            spectral_norm(np.zeros((0, 0)))


class TestExtremeEigs:
    def test_worked_examples(self):
        assert symmetric_extreme_eigs(np.eye(2)) == (1.0, 1.0)
        assert symmetric_extreme_eigs(np.diag([1.0, 5.0])) == (1.0, 5.0)
        lo, hi = symmetric_extreme_eigs([[2, 1], [1, 2]])
        assert lo == pytest.approx(1.0, abs=1e-10)
        assert hi == pytest.approx(3.0, abs=1e-10)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            symmetric_extreme_eigs([[1, 2], [0, 1]])

    def test_matches_lapack(self):
        rng = np.random.default_rng(1)
        for _ in range(60):
            k = int(rng.integers(1, 8))
            M = rng.standard_normal((k, k))
            S = 0.5 * (M + M.T)
            w = np.linalg.eigvalsh(S)
            lo, hi = symmetric_extreme_eigs(S)
            assert lo == pytest.approx(w[0], abs=1e-10 * max(1, abs(w[0])))
            assert hi == pytest.approx(w[-1], abs=1e-10 * max(1, abs(w[-1])))


class TestNormTable:
    def test_worked_examples(self):
        p = BlockPartition((1, 1))
        eye = BlockMatrix(np.eye(2), p)
        npt.assert_allclose(block_norm_table(eye), np.eye(2))
        B = BlockMatrix([[2, 1], [1, 2]], p)
        npt.assert_allclose(block_norm_table(B), [[2, 1], [1, 2]])
        single = BlockMatrix([[2, 1], [1, 2]], BlockPartition((2,)))
        npt.assert_allclose(block_norm_table(single), [[3.0]], rtol=1e-10)

    def test_cached(self):
        B = BlockMatrix(np.eye(4), BlockPartition((2, 2)))
        assert B.norm_table() is B.norm_table()


class TestInducedBound:
    def test_worked_examples(self):
        assert induced_norm_upper_bound(BlockMatrix(np.eye(3), BlockPartition((1, 2)))) == 1.0
        B = BlockMatrix([[2, 1], [1, 2]], BlockPartition((1, 1)))
        assert induced_norm_upper_bound(B) == pytest.approx(3.0)
        Z = BlockMatrix(np.zeros((2, 2)), BlockPartition((1, 1)))
        assert induced_norm_upper_bound(Z) == 0.0

    def test_dominates_block_max_norm_of_images(self):
        # random unit block-max vectors stay below the bound after mapping
        rng = np.random.default_rng(7)
        for _ in range(20):
            p = random_partition(rng)
            B = BlockMatrix(rng.standard_normal((p.n, p.n)), p)
            bound = induced_norm_upper_bound(B)
            for _ in range(50):
                x = np.empty(p.n)
                for sl in p.slices():
                    v = rng.standard_normal(sl.stop - sl.start)
                    x[sl] = v / np.linalg.norm(v)
                img = block_max_norm(BlockVector(B.data @ x, p))
                assert img <= bound * (1 + 1e-12)


class TestDominance:
    def test_gap_worked_examples(self):
        p = BlockPartition((1, 1))
        assert dominance_gap(BlockMatrix(np.eye(2), p), 0) == pytest.approx(1.0)
        B = BlockMatrix([[2, 1], [1, 2]], p)
        assert dominance_gap(B, 0) == pytest.approx(1.0)
        D = BlockMatrix(np.diag([5.0, 5.0]), p)
        assert dominance_gap(D, 1) == pytest.approx(5.0)

    def test_dominance_worked_examples(self):
        p = BlockPartition((1, 1))
        assert is_strictly_block_diag_dominant(BlockMatrix(np.eye(2), p))
        assert not is_strictly_block_diag_dominant(BlockMatrix([[1, 2], [2, 1]], p))
        assert is_strictly_block_diag_dominant(
            BlockMatrix([[2, 1], [1, 2]], BlockPartition((2,)))
        )

    def test_singular_diagonal_block(self):
        p = BlockPartition((1, 1))
        B = BlockMatrix([[0.0, 1.0], [1.0, 2.0]], p)
        with pytest.raises(ValueError):
            dominance_gap(B, 0)
        assert not is_strictly_block_diag_dominant(B)

    def test_indefinite_diagonal_block_uses_inverse(self):
        # nonsingular indefinite block: gap uses 1/||inv||, not lambda_min
        p = BlockPartition((2, 1))
        M = np.zeros((3, 3))
        M[:2, :2] = np.diag([3.0, -2.0])
        M[2, 2] = 5.0
        M[0, 2] = M[2, 0] = 0.5
        B = BlockMatrix(M, p)
        # 1/||inv||_2 = min singular value = 2 for diag(3, -2)
        assert dominance_gap(B, 0) == pytest.approx(2.0 - 0.5, rel=1e-9)

    def test_scalar_partition_matches_classical(self):
        rng = np.random.default_rng(11)
        agree = 0
        for _ in range(500):
            n = int(rng.integers(2, 7))
            A = rng.standard_normal((n, n))
            if rng.random() < 0.5:
                A += np.diag(np.sign(np.diag(A)) * rng.uniform(1, 6, size=n))
            classical = all(
                abs(A[i, i]) > np.sum(np.abs(A[i])) - abs(A[i, i]) for i in range(n)
            )
            ours = is_strictly_block_diag_dominant(
                BlockMatrix(A, BlockPartition((1,) * n))
            )
            assert ours == classical
            agree += ours
        assert 0 < agree < 500  # both outcomes exercised


class TestInverseNormBound:
    def test_worked_examples(self):
        p = BlockPartition((1, 1))
        assert inverse_norm_bound(BlockMatrix(np.eye(2), p)) == pytest.approx(1.0)
        assert inverse_norm_bound(BlockMatrix([[2, 1], [1, 2]], p)) == pytest.approx(1.0)
        assert inverse_norm_bound(BlockMatrix(2 * np.eye(2), p)) == pytest.approx(0.5)

    def test_rejects_non_dominant(self):
        with pytest.raises(ValueError):
            inverse_norm_bound(BlockMatrix([[1, 2], [2, 1]], BlockPartition((1, 1))))

    def test_bounds_sampled_inverse_ratios(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            p = random_partition(rng, max_blocks=4, max_size=3)
            A = random_nonsymmetric_dominant(rng, p)
            B = BlockMatrix(A, p)
            bound = inverse_norm_bound(B)
            inv = np.linalg.inv(A)
            for _ in range(25):
                x = rng.standard_normal(p.n)
                ratio = block_max_norm(BlockVector(inv @ x, p)) / block_max_norm(
                    BlockVector(x, p)
                )
                assert ratio <= bound * (1 + 1e-9)


class TestGershgorin:
    def test_worked_examples(self):
        p = BlockPartition((1, 1))
        assert gershgorin_lambda_min_bound(BlockMatrix(np.eye(2), p)) == pytest.approx(1.0)
        assert gershgorin_lambda_min_bound(
            BlockMatrix([[2, 1], [1, 2]], p)
        ) == pytest.approx(1.0)
        assert gershgorin_lambda_min_bound(
            BlockMatrix(np.diag([3.0, 7.0]), p)
        ) == pytest.approx(3.0)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            gershgorin_lambda_min_bound(
                BlockMatrix([[1.0, 1.0], [0.0, 1.0]], BlockPartition((1, 1)))
            )

    def test_below_true_lambda_min(self):
        rng = np.random.default_rng(5)
        for _ in range(60):
            p = random_partition(rng, max_blocks=5, max_size=3)
            A = random_spd_dominant(rng, p)
            B = BlockMatrix(A, p)
            lam_min = np.linalg.eigvalsh(A)[0]
            assert gershgorin_lambda_min_bound(B) <= lam_min + 1e-10


class TestImmutability:
    def test_arrays_frozen(self):
        B = BlockMatrix(np.eye(2), BlockPartition((1, 1)))
        with pytest.raises(ValueError):
            B.data[0, 0] = 5.0
        v = BlockVector([1.0, 2.0], BlockPartition((2,)))
        with pytest.raises(ValueError):
            v.data[0] = 3.0
