"""Design-based estimators: the expansion estimator of a population total
and its pairwise-difference variance estimate for fixed-size designs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .designs import SampleDraw
from .errors import EstimatorUndefinedError, ParameterError, VarianceInestimableError


@dataclass(frozen=True)
class EstimateResult:
    """A total estimate with optional variance and stability diagnostics.

    min_sampled_pij and max_term report the smallest joint probability and
    the largest single variance term among the sampled pairs; tiny joint
    probabilities make the variance estimate unstable even though it stays
    computable.
    """

    total_hat: float
    variance_hat: float | None
    n_used: int
    min_sampled_pij: float | None = None
    max_term: float | None = None


def _sampled(sample: SampleDraw, y, pi):
    y = np.asarray(y, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if y.shape != pi.shape:
        raise ParameterError("y and pi must have the same length")
    sel = sample.selected
    if sel.max() >= y.size:
        raise ParameterError("sample refers to units beyond the outcome vector")
    return sel, y[sel], pi[sel]


def ht_total(sample: SampleDraw, y, pi) -> float:
    """Expansion estimator of the total: sum of y_i / pi_i over the sample."""
    _, ys, ps = _sampled(sample, y, pi)
    if np.any(ps <= 0.0):
        raise EstimatorUndefinedError(
            "a sampled unit has non-positive inclusion probability"
        )
    return float((ys / ps).sum())


def syg_variance(sample: SampleDraw, y, pi, pij) -> float:
    """Pairwise-difference variance estimate for a fixed-size design.

    -1/2 * sum over sampled pairs of ((pij - pi*pj)/pij) * (y_i/pi_i - y_j/pi_j)^2;
    same-unit terms vanish. Every sampled pair must have pij > 0.
    """
    return _syg(sample, y, pi, pij)[0]


def estimate_total(sample: SampleDraw, y, pi, pij=None) -> EstimateResult:
    """Total estimate plus, when a joint-probability matrix is supplied, the
    variance estimate and its stability diagnostics."""
    total = ht_total(sample, y, pi)
    if pij is None:
        return EstimateResult(total_hat=total, variance_hat=None, n_used=sample.n)
    var, min_pij, max_term = _syg(sample, y, pi, pij)
    return EstimateResult(total_hat=total, variance_hat=var, n_used=sample.n,
                          min_sampled_pij=min_pij, max_term=max_term)


def _syg(sample, y, pi, pij):
    sel, ys, ps = _sampled(sample, y, pi)
    if np.any(ps <= 0.0):
        raise EstimatorUndefinedError(
            "a sampled unit has non-positive inclusion probability"
        )
    pij = np.asarray(pij, dtype=float)
    sub = pij[np.ix_(sel, sel)]
    off = ~np.eye(sel.size, dtype=bool)
    if np.any(sub[off] <= 0.0):
        bad = np.argwhere((sub <= 0.0) & off)[0]
        pair = (int(sel[bad[0]]), int(sel[bad[1]]))
        raise VarianceInestimableError(
            f"sampled pair {pair} has joint inclusion probability "
            f"{sub[bad[0], bad[1]]!r} <= 0",
            pair=pair,
        )
    yexp = ys / ps
    dif2 = (yexp[:, None] - yexp[None, :]) ** 2
    coef = (sub - ps[:, None] * ps[None, :]) / sub
    terms = -0.5 * coef * dif2
    np.fill_diagonal(terms, 0.0)
    var = float(terms.sum())
    return var, float(sub[off].min()), float(np.abs(terms).max())
