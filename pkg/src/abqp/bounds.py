"""Regularization error bounds.

Two families. For set-constrained problems, descriptive absolute bounds a
network operator can assemble from per-block quantities (gradient row sums,
dominance gaps, regularization weights): they dominate the state distance
and cost gap between the projected unregularized and regularized optima.
For unconstrained problems, independent selection rules: caps on each
block's regularization weight that guarantee a requested relative cost or
relative solution error, plus the inverse map from chosen weights to the
smallest certified relative cost error.
"""
from __future__ import annotations

import math

import numpy as np

from .blocks import dominance_gaps
from .qp import QuadraticProgram, Regularization, Unconstrained


def _positive_alpha_gap_margins(qp: QuadraticProgram, reg: Regularization) -> np.ndarray:
    """Values 1 + gap_i / alpha_i over blocks with alpha_i > 0.

    Blocks with a zero weight contribute an infinite margin and drop out of
    the minimum (the zero-weight limit of the bound); an all-zero
    regularization leaves nothing to bound and is rejected.
    """
    alphas = np.asarray(reg.alphas, dtype=float)
    if np.all(alphas == 0.0):
        raise ValueError(
            "all regularization weights are zero: the regularized and "
            "unregularized problems coincide and the bound degenerates"
        )
    gaps = dominance_gaps(qp.Q)
    mask = alphas > 0.0
    return 1.0 + gaps[mask] / alphas[mask]


def absolute_state_error_bound(qp: QuadraticProgram, reg: Regularization) -> float:
    """Upper bound on the block-maximum distance between the projected
    unregularized and regularized optima.

    max_i ||r^(i)|| divided by the product of the two inverse-norm margins:
    min_i (1 + gap_i/alpha_i) and min_i gap_i.
    """
    margins = _positive_alpha_gap_margins(qp, reg)
    gaps = dominance_gaps(qp.Q)
    beta_q = float(gaps.min())
    if beta_q <= 0.0:
        raise ValueError("matrix is not strictly block diagonally dominant")
    r_max = max(float(np.linalg.norm(qp.r.block(i))) for i in range(qp.partition.num_blocks))
    return r_max / (float(margins.min()) * beta_q)


def constraint_radii(qp: QuadraticProgram) -> np.ndarray:
    """Largest Euclidean norm of any feasible point, per block.

    Requires every block to be compact (box or ball).
    """
    radii = []
    for i, c in enumerate(qp.constraints):
        if isinstance(c, Unconstrained):
            raise ValueError(f"block {i} is unconstrained; no finite radius")
        radii.append(c.radius())
    return np.array(radii)


def absolute_cost_error_bound(
    qp: QuadraticProgram, reg: Regularization, radii=None
) -> float:
    """Upper bound on the cost gap |f(proj(x*)) - f(proj(x*_A))|.

    Assembled as (max_i radius_i * max_i row_sum_i + sum_i ||r^(i)||) times
    the state error bound, with row_sum_i the block-row sum of sub-block
    spectral norms. ``radii`` defaults to the per-block constraint radii,
    which requires compact constraints.
    """
    if radii is None:
        radii = constraint_radii(qp)
    radii = np.asarray(radii, dtype=float)
    table = qp.Q.norm_table()
    row_sum_max = float(table.sum(axis=1).max())
    r_block_norms = [
        float(np.linalg.norm(qp.r.block(i))) for i in range(qp.partition.num_blocks)
    ]
    bracket = float(radii.max()) * row_sum_max + sum(r_block_norms)
    return bracket * absolute_state_error_bound(qp, reg)


def cost_error_alpha_cap(epsilon: float, gap: float) -> float:
    """Largest regularization weight a block may use so that, if every
    block complies, the relative cost error stays at or below ``epsilon``.

    sqrt(eps)/(1 - sqrt(eps)) times the block's dominance gap. Reads only
    block-local data, so agents apply it independently.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie strictly inside (0, 1)")
    s = math.sqrt(epsilon)
    return s / (1.0 - s) * gap


def solution_error_alpha_cap(eta: float, gap: float) -> float:
    """Largest weight guaranteeing relative solution error at most ``eta``
    network-wide: eta/(1 - eta) times the block's dominance gap."""
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie strictly inside (0, 1)")
    return eta / (1.0 - eta) * gap


def implied_cost_error(qp: QuadraticProgram, reg: Regularization) -> float:
    """Smallest relative cost error the cap rule certifies for the given
    weights: with m = max_i alpha_i/gap_i, the cap inverts to
    (m / (1 + m))^2. Zero weights contribute nothing; m -> infinity gives 1.
    """
    alphas = np.asarray(reg.alphas, dtype=float)
    gaps = dominance_gaps(qp.Q)
    if np.any(gaps <= 0.0):
        raise ValueError("matrix is not strictly block diagonally dominant")
    m = float((alphas / gaps).max())
    if m == 0.0:
        return 0.0
    if math.isinf(m):
        return 1.0
    return (m / (1.0 + m)) ** 2
