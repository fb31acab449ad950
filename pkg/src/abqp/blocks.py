"""Block-partitioned dense linear algebra.

A partition splits an n-vector (and the rows/columns of an n-by-n matrix)
into consecutive blocks of sizes ``[n_1, ..., n_N]``. Everything downstream
(stepsize rules, error bounds, the simulator) measures vectors in the
block-maximum norm and matrices through per-block spectral norms, so those
primitives live here, along with the block diagonal dominance test and the
eigenvalue/inverse bounds it supports.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonConvergenceError(RuntimeError):
    """An iterative routine hit its iteration cap; the input is degenerate."""


@dataclass(frozen=True)
class BlockPartition:
    """Sizes ``[n_1, ..., n_N]`` of the consecutive blocks of an n-vector."""

    sizes: tuple[int, ...]
    offsets: tuple[int, ...] = field(init=False)
    n: int = field(init=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise ValueError("block sizes must be positive integers")
        offsets = (0,) + tuple(np.cumsum(sizes[:-1]).tolist())
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "n", int(sum(sizes)))

    @property
    def num_blocks(self) -> int:
        return len(self.sizes)

    def block_slice(self, i: int) -> slice:
        off = self.offsets[i]
        return slice(off, off + self.sizes[i])

    def slices(self) -> list[slice]:
        return [self.block_slice(i) for i in range(self.num_blocks)]


def _frozen_array(data, shape_check=None) -> np.ndarray:
    a = np.array(data, dtype=float)
    if shape_check is not None and a.shape != shape_check:
        raise ValueError(f"expected shape {shape_check}, got {a.shape}")
    a.flags.writeable = False
    return a


class BlockVector:
    """A real n-vector together with the partition that blocks it."""

    def __init__(self, data, partition: BlockPartition):
        self.partition = partition
        self.data = _frozen_array(data, (partition.n,))

    def block(self, i: int) -> np.ndarray:
        return self.data[self.partition.block_slice(i)]

    def __repr__(self):
        return f"BlockVector(n={self.partition.n}, blocks={self.partition.sizes})"


class BlockMatrix:
    """A dense square matrix partitioned into sub-blocks.

    ``block(i, j)`` returns the n_i-by-n_j sub-block at block row i, block
    column j. The table of sub-block spectral norms is computed once on
    first use and cached; instances are immutable and safe to share.
    """

    def __init__(self, data, partition: BlockPartition):
        self.partition = partition
        self.data = _frozen_array(data, (partition.n, partition.n))
        self._norm_table: np.ndarray | None = None
        self._diag_eigs: list[tuple[float, float]] | None = None

    def block(self, i: int, j: int) -> np.ndarray:
        p = self.partition
        return self.data[p.block_slice(i), p.block_slice(j)]

    def norm_table(self) -> np.ndarray:
        """N-by-N table of sub-block spectral norms, cached."""
        if self._norm_table is None:
            N = self.partition.num_blocks
            table = np.empty((N, N))
            for i in range(N):
                for j in range(N):
                    table[i, j] = spectral_norm(self.block(i, j))
            table.flags.writeable = False
            self._norm_table = table
        return self._norm_table

    def diag_eig_extremes(self) -> list[tuple[float, float]]:
        """(smallest, largest) eigenvalue of each diagonal sub-block, cached."""
        if self._diag_eigs is None:
            self._diag_eigs = [
                symmetric_extreme_eigs(self.block(i, i))
                for i in range(self.partition.num_blocks)
            ]
        return self._diag_eigs

    def __repr__(self):
        return f"BlockMatrix(n={self.partition.n}, blocks={self.partition.sizes})"


def block_max_norm(x: BlockVector) -> float:
    """Maximum Euclidean norm of any single block of ``x``."""
    p = x.partition
    return max(float(np.linalg.norm(x.block(i))) for i in range(p.num_blocks))


def block_max_norm_array(data: np.ndarray, partition: BlockPartition) -> float:
    """``block_max_norm`` on a raw array, avoiding the wrapper object."""
    return max(
        float(np.linalg.norm(data[sl])) for sl in partition.slices()
    )


def spectral_norm(B, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value of a dense real matrix.

    Power iteration on the Gram operator v -> B^T(Bv), which handles
    rectangular blocks. Stops when the Rayleigh quotient has settled to
    relative tolerance ``tol`` on two consecutive iterations.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.size == 0:
        raise ValueError("spectral_norm expects a nonempty 2-D matrix")
    if B.shape == (1, 1):
        return abs(float(B[0, 0]))
    scale = np.max(np.abs(B))
    if scale == 0.0:
        return 0.0
    Bs = B / scale

    rng = np.random.default_rng(0)
    v = rng.standard_normal(B.shape[1])
    v /= np.linalg.norm(v)
    lam_prev = 0.0
    settled = 0
    for _ in range(max_iter):
        w = Bs.T @ (Bs @ v)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            # v lies in the nullspace of the Gram operator; restart
            v = rng.standard_normal(B.shape[1])
            v /= np.linalg.norm(v)
            lam_prev = 0.0
            settled = 0
            continue
        lam = float(v @ w)
        v = w / norm_w
        if abs(lam - lam_prev) <= tol * max(lam, 1e-300):
            settled += 1
            if settled >= 2:
                return float(np.sqrt(lam)) * scale
        else:
            settled = 0
        lam_prev = lam
    raise NonConvergenceError(
        f"power iteration did not converge in {max_iter} iterations"
    )


def _check_symmetric(B: np.ndarray, tol: float = 1e-12) -> None:
    scale = max(1.0, float(np.max(np.abs(B))) if B.size else 1.0)
    if float(np.max(np.abs(B - B.T))) > tol * scale:
        raise ValueError("matrix is not symmetric")


def symmetric_extreme_eigs(B, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[float, float]:
    """(smallest, largest) eigenvalue of a symmetric matrix via cyclic Jacobi.

    Intended for small diagonal sub-blocks; rejects asymmetric input.
    """
    A = np.array(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.size == 0:
        raise ValueError("expected a nonempty square matrix")
    _check_symmetric(A)
    n = A.shape[0]
    if n == 1:
        v = float(A[0, 0])
        return v, v

    fro = np.linalg.norm(A)
    if fro == 0.0:
        return 0.0, 0.0
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * fro:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(1.0, theta))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # two-sided rotation in the (p, q) plane
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
    else:
        raise NonConvergenceError("Jacobi eigensolver did not converge")
    d = np.diag(A)
    return float(d.min()), float(d.max())


def block_norm_table(B: BlockMatrix) -> np.ndarray:
    """Table of sub-block spectral norms; entry (i, j) is ||B^(i,j)||_2."""
    return B.norm_table()


def induced_norm_upper_bound(B: BlockMatrix) -> float:
    """Upper bound on the induced block-maximum norm: max block-row sum of
    sub-block spectral norms."""
    return float(B.norm_table().sum(axis=1).max())


def dominance_gap(B: BlockMatrix, i: int) -> float:
    """Margin by which block row i is diagonally dominant.

    Reciprocal of the diagonal block's inverse spectral norm, minus the sum
    of off-diagonal sub-block norms in that block row. For a symmetric
    positive definite diagonal block the first term equals its smallest
    eigenvalue, which is used directly; otherwise the block is inverted.

    Raises ValueError if the diagonal block is singular.
    """
    table = B.norm_table()
    off_sum = float(table[i].sum() - table[i, i])
    blk = B.block(i, i)
    asym = float(np.max(np.abs(blk - blk.T)))
    if asym <= 1e-12 * max(1.0, float(np.max(np.abs(blk)))):
        lo, _ = symmetric_extreme_eigs(0.5 * (blk + blk.T))
        if lo > 0.0:
            return lo - off_sum
    try:
        inv = np.linalg.inv(blk)
    except np.linalg.LinAlgError:
        raise ValueError(f"diagonal block {i} is singular") from None
    return 1.0 / spectral_norm(inv) - off_sum


def dominance_gaps(B: BlockMatrix) -> np.ndarray:
    """``dominance_gap`` for every block row."""
    return np.array([dominance_gap(B, i) for i in range(B.partition.num_blocks)])


def is_strictly_block_diag_dominant(B: BlockMatrix) -> bool:
    """True iff every diagonal block is nonsingular with a positive gap."""
    try:
        gaps = dominance_gaps(B)
    except ValueError:
        return False
    return bool(np.all(gaps > 0.0))


def inverse_norm_bound(B: BlockMatrix) -> float:
    """Upper bound on the block-maximum norm of B^{-1}.

    Equals the reciprocal of the smallest per-row dominance gap; valid only
    for strictly block diagonally dominant input, which is enforced.
    """
    gaps = dominance_gaps(B)
    beta = float(gaps.min())
    if beta <= 0.0:
        raise ValueError("matrix is not strictly block diagonally dominant")
    return 1.0 / beta


def gershgorin_lambda_min_bound(B: BlockMatrix) -> float:
    """Lower bound on the smallest eigenvalue of a symmetric block matrix.

    The block Gershgorin argument guarantees lambda_min >= gap for at least
    one (unknown) block row, so the minimum gap over all rows is always a
    safe bound.
    """
    _check_symmetric(B.data)
    return float(dominance_gaps(B).min())
