"""Shared builders for the test suite.

The random-instance helpers here are deliberately numpy-only so that tests
never exercise the package's own generator while checking other modules.
"""
import numpy as np
import pytest

from abqp.blocks import BlockMatrix, BlockPartition, BlockVector
from abqp.qp import Box, QuadraticProgram, Unconstrained


def random_partition(rng, max_blocks=6, max_size=4) -> BlockPartition:
    n_blocks = int(rng.integers(1, max_blocks + 1))
    sizes = tuple(int(s) for s in rng.integers(1, max_size + 1, size=n_blocks))
    return BlockPartition(sizes)


def random_spd_dominant(rng, partition: BlockPartition, margin=0.5) -> np.ndarray:
    """Symmetric strictly block diagonally dominant matrix (numpy only).

    Off-diagonal blocks are scaled so each block row keeps ``margin`` of its
    smallest diagonal eigenvalue in reserve.
    """
    n = partition.n
    slices = partition.slices()
    N = partition.num_blocks
    A = np.zeros((n, n))
    lo = np.empty(N)
    for i, sl in enumerate(slices):
        k = partition.sizes[i]
        M = rng.standard_normal((k, k))
        sym = M @ M.T + np.eye(k) * rng.uniform(0.5, 2.0)
        A[sl, sl] = sym
        lo[i] = np.linalg.eigvalsh(sym).min()
    for i in range(N):
        for j in range(i + 1, N):
            A[slices[i], slices[j]] = rng.standard_normal(
                (partition.sizes[i], partition.sizes[j])
            )
            A[slices[j], slices[i]] = A[slices[i], slices[j]].T
    # scale all couplings so row sums stay below the dominance budget
    row_sums = np.zeros(N)
    for i in range(N):
        for j in range(N):
            if i != j:
                row_sums[i] += np.linalg.svd(
                    A[slices[i], slices[j]], compute_uv=False
                )[0]
    worst = max(
        (row_sums[i] / (lo[i] * (1.0 - margin)) for i in range(N) if row_sums[i] > 0),
        default=0.0,
    )
    if worst > 1.0:
        for i in range(N):
            for j in range(N):
                if i != j:
                    A[slices[i], slices[j]] /= worst
    return A


def random_nonsymmetric_dominant(rng, partition: BlockPartition) -> np.ndarray:
    """Strictly block diagonally dominant matrix without symmetry."""
    n = partition.n
    slices = partition.slices()
    N = partition.num_blocks
    A = rng.standard_normal((n, n)) * 0.1
    for i, sl in enumerate(slices):
        k = partition.sizes[i]
        M = rng.standard_normal((k, k))
        A[sl, sl] = M @ M.T + np.eye(k) * (2.0 + k)
    # shrink off-diagonals until every row gap is comfortably positive
    for i in range(N):
        inv_norm = np.linalg.svd(np.linalg.inv(A[slices[i], slices[i]]), compute_uv=False)[0]
        budget = 0.5 / inv_norm
        off = sum(
            np.linalg.svd(A[slices[i], slices[j]], compute_uv=False)[0]
            for j in range(N)
            if j != i
        )
        if off > budget:
            for j in range(N):
                if j != i:
                    A[slices[i], slices[j]] *= budget / off
    return A


def random_qp(rng, partition=None, constraints="box", margin=0.5) -> QuadraticProgram:
    if partition is None:
        partition = random_partition(rng)
    Q = random_spd_dominant(rng, partition, margin=margin)
    r = rng.standard_normal(partition.n)
    if constraints == "box":
        cons = [
            Box(rng.uniform(-3.0, -0.5, size=s), rng.uniform(0.5, 3.0, size=s))
            for s in partition.sizes
        ]
    else:
        cons = [Unconstrained() for _ in partition.sizes]
    return QuadraticProgram(
        BlockMatrix(Q, partition), BlockVector(r, partition), cons
    )


@pytest.fixture
def two_block_qp():
    """The worked 2-block instance used throughout: Q=[[2,1],[1,2]],
    r=[-1,-1], wide boxes."""
    p = BlockPartition((1, 1))
    return QuadraticProgram(
        BlockMatrix([[2.0, 1.0], [1.0, 2.0]], p),
        BlockVector([-1.0, -1.0], p),
        [Box([-1.0], [1.0]), Box([-1.0], [1.0])],
    )


@pytest.fixture
def two_block_unconstrained():
    p = BlockPartition((1, 1))
    return QuadraticProgram(
        BlockMatrix([[2.0, 1.0], [1.0, 2.0]], p),
        BlockVector([-1.0, -1.0], p),
        [Unconstrained(), Unconstrained()],
    )
