"""Independent verification oracles.

Brute-force and exact-solve reference computations used by the test suite
to check the selection rules and error bounds. Everything here goes through
numpy/LAPACK primitives directly and deliberately shares no norm or
eigenvalue code with the main modules, so a defect in the hand-rolled
numerics cannot hide behind an oracle built on the same path. Test scale
only (n <= 64).
"""
from __future__ import annotations

import numpy as np

from .blocks import BlockMatrix, BlockPartition
from .qp import QuadraticProgram, Regularization


class ExactSolutionError(ValueError):
    """Relative error is undefined: the unregularized optimum is exact
    (r = 0, optimal cost zero)."""


def _blockwise_max_norm(data: np.ndarray, partition: BlockPartition) -> float:
    return max(float(np.linalg.norm(data[sl])) for sl in partition.slices())


def sampled_induced_norm(B: BlockMatrix, samples: int = 1000, seed: int = 0) -> float:
    """Lower estimate of the induced block-maximum norm of ``B``.

    Samples unit vectors of the block-maximum ball (every block drawn
    uniformly on its sphere, so each has norm exactly one) and takes the
    largest block-maximum norm of the image. Always at or below the true
    induced norm; used as a one-sided check against upper bounds.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    p = B.partition
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(samples):
        x = np.empty(p.n)
        for sl in p.slices():
            v = rng.standard_normal(sl.stop - sl.start)
            nv = np.linalg.norm(v)
            x[sl] = v / nv if nv > 0 else 1.0
        best = max(best, _blockwise_max_norm(B.data @ x, p))
    return best


def full_symmetric_eigensolve(B) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, ascending (LAPACK ``eigh``).

    Rejects asymmetric input and anything larger than the test scale.
    """
    A = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    if A.shape[0] > 64:
        raise ValueError("oracle eigensolve is limited to n <= 64")
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    if float(np.max(np.abs(A - A.T))) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    return np.linalg.eigvalsh(A)


def rate_curve(qp: QuadraticProgram, i: int, gammas: np.ndarray) -> np.ndarray:
    """Block i's contraction rate over a stepsize grid, computed from
    scratch: LAPACK eigenvalues for ||I - gamma*D_i||_2 and LAPACK singular
    values for the off-diagonal norms."""
    p = qp.partition
    sl = p.block_slice(i)
    D = qp.Q.data[sl, sl]
    eigs = np.linalg.eigvalsh(0.5 * (D + D.T))
    off_sum = 0.0
    for j in range(p.num_blocks):
        if j == i:
            continue
        blk = qp.Q.data[sl, p.block_slice(j)]
        off_sum += float(np.linalg.svd(blk, compute_uv=False)[0])
    gammas = np.asarray(gammas, dtype=float)
    shrink = np.max(np.abs(1.0 - np.outer(gammas, eigs)), axis=1)
    return shrink + gammas * off_sum


def grid_minimize_rate(qp: QuadraticProgram, i: int, gammas) -> tuple[float, float]:
    """Grid minimizer of block i's contraction rate: (argmin gamma, min rate)."""
    gammas = np.asarray(gammas, dtype=float)
    curve = rate_curve(qp, i, gammas)
    k = int(np.argmin(curve))
    return float(gammas[k]), float(curve[k])


def exact_relative_errors(qp: QuadraticProgram, reg: Regularization) -> tuple[float, float]:
    """Relative cost error and relative solution error of regularizing,
    from direct solves of both problems.

    Returns (|f(x*) - f(x*_A)| / |f(x*)|, ||x* - x*_A|| / ||x*||) with all
    vector norms block-maximum. Only meaningful for unconstrained problems;
    raises ExactSolutionError when r = 0 (both optima coincide at zero cost).
    """
    p = qp.partition
    rd = qp.r.data
    if float(np.max(np.abs(rd))) == 0.0:
        raise ExactSolutionError("r = 0: optimum is exact, relative error undefined")
    Q = qp.Q.data
    P = Q + np.diag(np.repeat(np.asarray(reg.alphas), p.sizes))
    x_hat = np.linalg.solve(Q, -rd)
    x_reg = np.linalg.solve(P, -rd)
    f = lambda x: 0.5 * float(x @ (Q @ x)) + float(rd @ x)  # noqa: E731
    cost_rel = abs(f(x_hat) - f(x_reg)) / abs(f(x_hat))
    sol_rel = _blockwise_max_norm(x_hat - x_reg, p) / _blockwise_max_norm(x_hat, p)
    return cost_rel, sol_rel
