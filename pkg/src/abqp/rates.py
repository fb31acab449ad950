"""Per-block stepsize and regularization selection.

Each block's update contracts toward the fixed point at rate

    rate_i(gamma) = || I - gamma * D_i ||_2  +  gamma * S_i,

where D_i is the (regularized) diagonal sub-block and S_i the sum of
off-diagonal sub-block spectral norms in block row i. The network rate is
the maximum over blocks, and the trace envelope decays geometrically in
completed communication cycles with this rate. Every rule here reads only
block row i of the norm table and the eigenvalue extremes of the diagonal
sub-block, so agents can apply them independently.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qp import QuadraticProgram, Regularization


@dataclass(frozen=True)
class BlockRates:
    """Per-block stepsize bounds, chosen stepsizes, and contraction rates."""

    gamma_bound: tuple[float, ...]
    gamma_opt: tuple[float, ...]
    gamma: tuple[float, ...]        # stepsizes actually in effect
    block_rates: tuple[float, ...]  # rate_i evaluated at gamma
    network_rate: float             # max over blocks

    @property
    def valid(self) -> bool:
        """All stepsizes strictly inside their bounds (rates below one)."""
        return all(g < b for g, b in zip(self.gamma, self.gamma_bound))


def stepsize_bound(i: int, norm_table: np.ndarray) -> float:
    """Largest admissible stepsize for block i: 2 over the block-row sum of
    sub-block spectral norms. Uses only row i of the table."""
    return 2.0 / float(norm_table[i].sum())


def contraction_rate(
    i: int,
    gamma: float,
    norm_table: np.ndarray,
    eig_extremes: tuple[float, float],
    alpha: float = 0.0,
) -> float:
    """Contraction factor of block i's update map at stepsize ``gamma``.

    For a positive definite diagonal sub-block, ||I - gamma*D_i||_2 is
    max(|1 - gamma*lo|, |1 - gamma*hi|) with (lo, hi) the extreme
    eigenvalues (shifted by ``alpha`` when the block is regularized).
    """
    if gamma <= 0.0:
        raise ValueError("stepsize must be positive")
    lo, hi = eig_extremes
    lo, hi = lo + alpha, hi + alpha
    off_sum = float(norm_table[i].sum() - norm_table[i, i])
    return max(abs(1.0 - gamma * lo), abs(1.0 - gamma * hi)) + gamma * off_sum


def optimal_stepsize(eig_extremes: tuple[float, float], alpha: float = 0.0) -> float:
    """Stepsize minimizing the block's contraction rate:
    2 / (hi + lo), with both extremes shifted when regularized."""
    lo, hi = eig_extremes
    return 2.0 / (hi + lo + 2.0 * alpha)


def regularization_for_rate(
    rate_target: float,
    eig_extremes: tuple[float, float],
    block_rate: float,
) -> tuple[float, float]:
    """Smallest regularization weight driving this block's rate to
    ``rate_target``, with the matching stepsize.

    ``block_rate`` is the block's unregularized rate at its optimal
    stepsize. Returns (alpha, gamma); alpha is zero when the block already
    meets the target.
    """
    if not 0.0 < rate_target < 1.0:
        raise ValueError("rate target must lie strictly inside (0, 1)")
    lo, hi = eig_extremes
    mid = 0.5 * (hi + lo)
    alpha = max((block_rate / rate_target - 1.0) * mid, 0.0)
    gamma = 2.0 / (hi + lo + 2.0 * alpha)
    return alpha, gamma


def network_rate(block_rates) -> float:
    """Network contraction rate: the worst (largest) block rate."""
    return float(max(block_rates))


def compute_rates(
    qp: QuadraticProgram,
    reg: Regularization | None = None,
    gammas=None,
) -> BlockRates:
    """Assemble every block's bound, optimal stepsize, and rate.

    Stepsizes default to each block's optimal value for the (regularized)
    problem; pass ``gammas`` to override. The norm table and diagonal
    eigenvalue extremes are cached on the matrix, so repeated calls are
    cheap.
    """
    p = qp.partition
    N = p.num_blocks
    table = qp.Q.norm_table()
    eigs = qp.Q.diag_eig_extremes()
    alphas = (0.0,) * N if reg is None else reg.alphas

    bound, opt, gamma, rates = [], [], [], []
    for i in range(N):
        lo, hi = eigs[i]
        off_sum = float(table[i].sum() - table[i, i])
        # block-row sum for the shifted diagonal block: spectral norm hi+alpha
        bound.append(2.0 / (hi + alphas[i] + off_sum))
        g_opt = optimal_stepsize((lo, hi), alphas[i])
        opt.append(g_opt)
        g = g_opt if gammas is None else float(gammas[i])
        gamma.append(g)
        rates.append(contraction_rate(i, g, table, (lo, hi), alphas[i]))
    return BlockRates(
        gamma_bound=tuple(bound),
        gamma_opt=tuple(opt),
        gamma=tuple(gamma),
        block_rates=tuple(rates),
        network_rate=network_rate(rates),
    )


def select_regularization_for_rate(
    qp: QuadraticProgram, rate_target: float
) -> tuple[Regularization, BlockRates]:
    """Apply the per-block rate rule across the network.

    Each block independently picks the (alpha, gamma) pair that caps its
    rate at ``rate_target``; the returned rates are recomputed from scratch
    for the regularized problem and satisfy network_rate <= rate_target.
    """
    base = compute_rates(qp)
    alphas, gammas = [], []
    for i in range(qp.partition.num_blocks):
        a, g = regularization_for_rate(
            rate_target, qp.Q.diag_eig_extremes()[i], base.block_rates[i]
        )
        alphas.append(a)
        gammas.append(g)
    reg = Regularization(tuple(alphas))
    return reg, compute_rates(qp, reg, gammas)
