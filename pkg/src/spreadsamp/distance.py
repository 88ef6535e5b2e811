"""Pairwise distances, the gamma power, and log-scale row/column balancing.

The balanced matrix is the multiplicative analogue of a doubly stochastic
scaling: symmetric potentials a_i are fitted so that every row's (and by
symmetry every column's) off-diagonal log sum equals a common constant,
i.e. all row products are equal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import ConvergenceError, DegenerateFrameError, ParameterError
from .frame import Frame


@dataclass(frozen=True)
class DistanceMatrix:
    """Dense symmetric pairwise-distance matrix with the applied gamma power."""

    values: np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ParameterError("distance matrix must be square")
        if not np.array_equal(v, v.T):
            raise ParameterError("distance matrix must be symmetric")
        if np.any(np.diagonal(v) != 0.0):
            raise ParameterError("distance matrix must have a zero diagonal")
        off = v[~np.eye(v.shape[0], dtype=bool)]
        if off.size and (not np.all(np.isfinite(off)) or np.any(off <= 0.0)):
            raise ParameterError("off-diagonal distances must be finite and > 0")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class StandardizedDistance:
    """Row/column-balanced distance matrix (constant log row sums)."""

    values: np.ndarray
    target_log_row_sum: float
    achieved_tolerance: float
    iterations_used: int
    gamma: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def build_distances(frame: Frame) -> DistanceMatrix:
    """Euclidean pairwise distances of a frame (gamma = 1)."""
    if frame.n < 2:
        raise ParameterError("frame must have at least 2 units")
    flat = pdist(frame.coords)
    zero = np.flatnonzero(flat == 0.0)
    if zero.size:
        i, j = _condensed_pair(zero[0], frame.n)
        raise DegenerateFrameError(
            f"units {i} and {j} share coordinates; jitter the frame first"
        )
    return DistanceMatrix(squareform(flat), gamma=1.0)


def _condensed_pair(k: int, n: int) -> tuple[int, int]:
    # invert the condensed pdist index
    i = 0
    while k >= n - i - 1:
        k -= n - i - 1
        i += 1
    return i, i + 1 + k


def apply_gamma(D: DistanceMatrix, gamma: float) -> DistanceMatrix:
    """Entrywise power d_ij**gamma."""
    if not gamma > 0:
        raise ParameterError("gamma must be > 0")
    if gamma == 1.0:
        return DistanceMatrix(D.values, gamma=D.gamma)
    return DistanceMatrix(D.values ** gamma, gamma=D.gamma * gamma)


def standardize(D: DistanceMatrix, tolerance: float = 1e-8,
                max_iter: int = 1000) -> StandardizedDistance:
    """Balance the matrix so every row's off-diagonal log sum equals 0.

    Works additively on L = log d: fits potentials a_i and returns
    exp(L_ij + a_i + a_j). Row sweeps update a_i by the exact per-row
    correction (c - rowsum)/(N-1); the coupled system is symmetric positive
    definite, so the sweeps converge. The log matrix is mean-centered first,
    which leaves the fixed point unchanged but keeps the potentials small
    and makes the output insensitive to a global rescaling of D.

    Raises ConvergenceError (carrying the worst row residual) if the honest
    recomputed residual still exceeds `tolerance` after max_iter sweeps.
    """
    if not tolerance > 0:
        raise ParameterError("tolerance must be > 0")
    if max_iter < 1:
        raise ParameterError("max_iter must be >= 1")
    n = D.n
    if n < 2:
        raise ParameterError("need at least 2 units")

    offdiag = ~np.eye(n, dtype=bool)
    L = np.zeros((n, n))
    L[offdiag] = np.log(D.values[offdiag])
    L -= L[offdiag].mean() * offdiag  # geometric-mean centering

    row = L.sum(axis=1).tolist()  # fixed part of each row's log sum
    a = [0.0] * n
    total = 0.0  # sum of potentials
    target = 0.0
    stop = 0.05 * tolerance
    nm1 = n - 1
    nm2 = n - 2
    iterations = 0
    for iterations in range(1, max_iter + 1):
        for i in range(n):
            r = row[i] + nm2 * a[i] + total
            delta = (target - r) / nm1
            a[i] += delta
            total += delta
        worst = max(abs(row[i] + nm2 * a[i] + total) for i in range(n))
        if worst <= stop:
            break

    av = np.asarray(a)
    dbar = np.exp(L + av[:, None] + av[None, :])
    np.fill_diagonal(dbar, 0.0)
    # honest residual: recompute the row log sums from the finished matrix
    logs = np.zeros((n, n))
    logs[offdiag] = np.log(dbar[offdiag])
    achieved = float(np.abs(logs.sum(axis=1) - target).max())
    if achieved > tolerance:
        raise ConvergenceError(
            f"row balancing stalled at residual {achieved:.3e} after "
            f"{iterations} sweeps (tolerance {tolerance:.1e}); raise max_iter "
            "or lower gamma",
            worst_residual=achieved,
        )
    return StandardizedDistance(
        values=dbar,
        target_log_row_sum=target,
        achieved_tolerance=achieved,
        iterations_used=iterations,
        gamma=D.gamma,
    )


def nearest_neighbors(frame: Frame, from_id: int, mask, k: int):
    """The k eligible units nearest to `from_id`.

    mask is the set of eligible unit ids; results are ordered by ascending
    distance with exact ties broken by ascending unit id. A full vector scan
    keeps the tie-break reproducible (cheap at desk scale).
    """
    if k < 1:
        raise ParameterError("k must be >= 1")
    if not 0 <= from_id < frame.n:
        raise ParameterError(f"from_id {from_id} out of range")
    cand = np.fromiter(mask, dtype=int)
    if cand.size == 0:
        raise ParameterError("mask must not be empty")
    if cand.min() < 0 or cand.max() >= frame.n:
        raise ParameterError("mask contains ids outside the frame")
    cand = np.unique(cand)
    if k > cand.size:
        raise ParameterError(f"k={k} exceeds the {cand.size} eligible units")
    diff = frame.coords[cand] - frame.coords[from_id]
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    order = np.lexsort((cand, dist))[:k]
    return [(int(cand[o]), float(dist[o])) for o in order]


def dump_matrix(matrix, path) -> None:
    """Plain-text dump: N on line 1, then N whitespace-separated rows."""
    values = matrix.values if hasattr(matrix, "values") else np.asarray(matrix)
    with open(path, "w") as fh:
        fh.write(f"{values.shape[0]}\n")
        for row in values:
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")
