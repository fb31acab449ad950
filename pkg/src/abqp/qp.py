"""Quadratic program model: objective, per-block gradients, projections,
regularization, reference solutions, and JSON serialization.

The problem is  minimize  0.5 x^T Q x + r^T x  over  X_1 x ... x X_N,
with Q symmetric and strictly block diagonally dominant with respect to the
partition, which makes Q positive definite and the objective strongly
convex. Each block's constraint set is a box, a Euclidean ball, or absent.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .blocks import (
    BlockMatrix,
    BlockPartition,
    BlockVector,
    block_max_norm_array,
    dominance_gap,
)


class Box:
    """Axis-aligned box {v : lower <= v <= upper} (componentwise)."""

    def __init__(self, lower, upper):
        self.lower = np.array(lower, dtype=float)
        self.upper = np.array(upper, dtype=float)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("box bounds must be 1-D vectors of equal length")
        if np.any(self.lower > self.upper):
            raise ValueError("box has lower > upper")

    dim = property(lambda self: self.lower.size)

    def project(self, v: np.ndarray) -> np.ndarray:
        return np.clip(v, self.lower, self.upper)

    def radius(self) -> float:
        """Largest Euclidean norm of any point in the set."""
        return float(np.linalg.norm(np.maximum(np.abs(self.lower), np.abs(self.upper))))

    def to_json(self):
        return {"type": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


class Ball:
    """Euclidean ball {v : ||v - center|| <= radius_}."""

    def __init__(self, center, radius):
        self.center = np.array(center, dtype=float)
        self.r = float(radius)
        if self.center.ndim != 1:
            raise ValueError("ball center must be a 1-D vector")
        if self.r <= 0.0:
            raise ValueError("ball radius must be positive")

    dim = property(lambda self: self.center.size)

    def project(self, v: np.ndarray) -> np.ndarray:
        d = v - self.center
        nd = float(np.linalg.norm(d))
        if nd <= self.r:
            return np.array(v, dtype=float)
        return self.center + d * (self.r / nd)

    def radius(self) -> float:
        return float(np.linalg.norm(self.center)) + self.r

    def to_json(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.r}


class Unconstrained:
    """No constraint; projection is the identity. Dimension-agnostic."""

    dim = None

    def project(self, v: np.ndarray) -> np.ndarray:
        return np.array(v, dtype=float)

    def radius(self) -> float:
        raise ValueError("unconstrained block has no finite radius")

    def to_json(self):
        return {"type": "unconstrained"}


ConstraintSet = Box | Ball | Unconstrained


def project_block(constraint: ConstraintSet, v) -> np.ndarray:
    """Euclidean projection of ``v`` onto one block's constraint set."""
    v = np.asarray(v, dtype=float)
    if constraint.dim is not None and v.shape != (constraint.dim,):
        raise ValueError("vector dimension does not match constraint")
    return constraint.project(v)


@dataclass(frozen=True)
class Regularization:
    """Per-block nonnegative weights; block i's diagonal is shifted by
    alphas[i]. A zero weight leaves that block's update untouched."""

    alphas: tuple[float, ...]

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        if any(a < 0.0 for a in alphas):
            raise ValueError("regularization weights must be nonnegative")
        object.__setattr__(self, "alphas", alphas)

    @staticmethod
    def zero(num_blocks: int) -> "Regularization":
        return Regularization((0.0,) * num_blocks)

    def diagonal(self, partition: BlockPartition) -> np.ndarray:
        """The length-n diagonal of the induced block-scalar matrix."""
        return np.repeat(np.asarray(self.alphas, dtype=float), partition.sizes)


class QuadraticProgram:
    """Symmetric quadratic objective with one constraint set per block."""

    def __init__(self, Q: BlockMatrix, r: BlockVector, constraints):
        if r.partition is not Q.partition and r.partition != Q.partition:
            raise ValueError("Q and r carry different partitions")
        p = Q.partition
        constraints = list(constraints)
        if len(constraints) != p.num_blocks:
            raise ValueError("need exactly one constraint set per block")
        for i, c in enumerate(constraints):
            if c.dim is not None and c.dim != p.sizes[i]:
                raise ValueError(f"constraint {i} has dimension {c.dim}, block is {p.sizes[i]}")
        self.Q = Q
        self.r = r
        self.constraints = constraints

    partition = property(lambda self: self.Q.partition)

    @property
    def is_unconstrained(self) -> bool:
        return all(isinstance(c, Unconstrained) for c in self.constraints)

    def __repr__(self):
        return f"QuadraticProgram(n={self.partition.n}, blocks={self.partition.sizes})"


@dataclass
class ValidationReport:
    """Outcome of the standing-assumption checks, with per-block gaps."""

    symmetric: bool
    gaps: np.ndarray | None
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures

    def raise_if_invalid(self):
        if self.failures:
            raise ValueError("invalid quadratic program: " + "; ".join(self.failures))


def validate(qp: QuadraticProgram) -> ValidationReport:
    """Check symmetry, strict block diagonal dominance, and constraint
    well-formedness; report the per-block dominance gaps."""
    failures = []
    Q = qp.Q.data
    scale = max(1.0, float(np.max(np.abs(Q))))
    symmetric = float(np.max(np.abs(Q - Q.T))) <= 1e-12 * scale
    if not symmetric:
        failures.append("Q is not symmetric")

    gaps = None
    try:
        gaps = np.array(
            [dominance_gap(qp.Q, i) for i in range(qp.partition.num_blocks)]
        )
    except ValueError as exc:
        failures.append(f"Q is not strictly block diagonally dominant ({exc})")
    else:
        if np.any(gaps <= 0.0):
            bad = int(np.argmin(gaps))
            failures.append(
                "Q is not strictly block diagonally dominant "
                f"(gap {gaps[bad]:.3e} in block row {bad})"
            )

    for i, c in enumerate(qp.constraints):
        if isinstance(c, Box) and np.any(c.lower > c.upper):
            failures.append(f"constraint {i}: box has lower > upper")
        if isinstance(c, Ball) and c.r <= 0.0:
            failures.append(f"constraint {i}: ball radius not positive")
    return ValidationReport(symmetric=symmetric, gaps=gaps, failures=failures)


def objective(qp: QuadraticProgram, x, reg: Regularization | None = None) -> float:
    """0.5 x^T (Q + A) x + r^T x, where A is the regularization shift
    (zero when ``reg`` is None)."""
    xv = _as_array(x, qp.partition)
    val = 0.5 * float(xv @ (qp.Q.data @ xv)) + float(qp.r.data @ xv)
    if reg is not None:
        val += 0.5 * float((reg.diagonal(qp.partition) * xv) @ xv)
    return val


def gradient_block(qp: QuadraticProgram, x, i: int, reg: Regularization | None = None) -> np.ndarray:
    """Gradient of the (optionally regularized) objective with respect to
    block i: Q^(i) x + r^(i) + alpha_i x^(i)."""
    xv = _as_array(x, qp.partition)
    sl = qp.partition.block_slice(i)
    g = qp.Q.data[sl, :] @ xv + qp.r.data[sl]
    if reg is not None and reg.alphas[i] != 0.0:
        g = g + reg.alphas[i] * xv[sl]
    return g


def _as_array(x, partition: BlockPartition) -> np.ndarray:
    if isinstance(x, BlockVector):
        if x.partition != partition:
            raise ValueError("vector carries a different partition")
        return x.data
    xv = np.asarray(x, dtype=float)
    if xv.shape != (partition.n,):
        raise ValueError(f"expected vector of length {partition.n}, got {xv.shape}")
    return xv


def exact_unconstrained_minimizer(qp: QuadraticProgram, reg: Regularization | None = None) -> BlockVector:
    """Solve (Q + A) x = -r directly (LU with partial pivoting).

    The residual is checked against 1e-10 * (1 + ||r||) in the block-maximum
    norm; failure indicates the standing assumptions do not hold.
    """
    p = qp.partition
    M = qp.Q.data
    if reg is not None:
        M = M + np.diag(reg.diagonal(p))
    try:
        x = np.linalg.solve(M, -qp.r.data)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"direct solve failed: {exc}") from None
    resid = M @ x + qp.r.data
    tol = 1e-10 * (1.0 + block_max_norm_array(qp.r.data, p))
    if block_max_norm_array(resid, p) > tol:
        raise ValueError("direct solve residual exceeds tolerance; assumptions violated")
    return BlockVector(x, p)


def centralized_minimizer(
    qp: QuadraticProgram,
    reg: Regularization | None = None,
    tol: float = 1e-12,
    max_iters: int = 10_000_000,
) -> BlockVector:
    """Constrained minimizer by synchronous projected gradient descent.

    Every block uses its own optimal stepsize; iteration stops when the
    block-maximum step change drops to ``tol``. Serves as the ground-truth
    target the simulator's traces are measured against.
    """
    from .rates import compute_rates  # local import to avoid a cycle

    p = qp.partition
    rates = compute_rates(qp, reg)
    gammas = rates.gamma
    alphas = (0.0,) * p.num_blocks if reg is None else reg.alphas

    Qd = qp.Q.data
    rd = qp.r.data
    slices = p.slices()
    x = np.zeros(p.n)
    for i, c in enumerate(qp.constraints):
        x[slices[i]] = project_block(c, x[slices[i]])
    for _ in range(max_iters):
        g = Qd @ x + rd
        x_new = np.empty_like(x)
        for i, c in enumerate(qp.constraints):
            sl = slices[i]
            gi = g[sl]
            if alphas[i] != 0.0:
                gi = gi + alphas[i] * x[sl]
            x_new[sl] = c.project(x[sl] - gammas[i] * gi)
        step = block_max_norm_array(x_new - x, p)
        x = x_new
        if step <= tol:
            return BlockVector(x, p)
    raise RuntimeError("projected gradient did not converge within the iteration cap")


# --- JSON serialization ----------------------------------------------------
#
# Schema: {"partition": [n_1, ...], "Q": [row-major n*n floats],
#          "r": [n floats], "constraints": [{"type": ...}, ...]}
# Floats survive the round trip bit-exactly (shortest-repr encoding).


def to_json_dict(qp: QuadraticProgram) -> dict:
    return {
        "partition": list(qp.partition.sizes),
        "Q": qp.Q.data.reshape(-1).tolist(),
        "r": qp.r.data.tolist(),
        "constraints": [c.to_json() for c in qp.constraints],
    }


def to_json(qp: QuadraticProgram) -> str:
    return json.dumps(to_json_dict(qp), indent=2, sort_keys=True)


def _constraint_from_json(obj) -> ConstraintSet:
    kind = obj.get("type")
    if kind == "box":
        return Box(obj["lower"], obj["upper"])
    if kind == "ball":
        return Ball(obj["center"], obj["radius"])
    if kind == "unconstrained":
        return Unconstrained()
    raise ValueError(f"unknown constraint type: {kind!r}")


def from_json_dict(obj: dict) -> QuadraticProgram:
    partition = BlockPartition(tuple(obj["partition"]))
    n = partition.n
    Qflat = np.asarray(obj["Q"], dtype=float)
    if Qflat.shape != (n * n,):
        raise ValueError(f"Q has {Qflat.size} entries, expected {n * n}")
    Q = BlockMatrix(Qflat.reshape(n, n), partition)
    r = BlockVector(obj["r"], partition)
    constraints = [_constraint_from_json(c) for c in obj["constraints"]]
    return QuadraticProgram(Q, r, constraints)


def from_json(text: str) -> QuadraticProgram:
    return from_json_dict(json.loads(text))


def save(qp: QuadraticProgram, path) -> None:
    with open(path, "w") as fh:
        fh.write(to_json(qp))
        fh.write("\n")


def load(path) -> QuadraticProgram:
    with open(path) as fh:
        return from_json(fh.read())
