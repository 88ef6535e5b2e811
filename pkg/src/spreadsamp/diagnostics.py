"""Design diagnostics: spatial balance, Monte Carlo inclusion probabilities,
the CV index, the pair-probability power-law fit, and the exact small-N
enumeration oracle for the distance-product design."""

from __future__ import annotations

import csv
import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.stats import linregress

from .designs import (DesignSpec, SampleDraw, draw_hpwd_replicates, make_sampler,
                      substream)
from .distance import DistanceMatrix, apply_gamma, build_distances, standardize
from .errors import InsufficientDataError, ParameterError, SpreadSampError
from .frame import Frame


@dataclass(frozen=True)
class InclusionEstimates:
    """Monte Carlo selection frequencies over R replicate draws.

    pij_hat is the symmetric joint-frequency matrix; its diagonal equals
    pi_hat.
    """

    replicates: int
    pi_hat: np.ndarray
    pij_hat: np.ndarray


@dataclass(frozen=True)
class BalanceResult:
    """Spatial balance of one sample: the index and the per-unit cell sums."""

    sbi: float
    nu: np.ndarray


@dataclass(frozen=True)
class PijFit:
    """Power-law fit of pair frequencies against distance (log-log OLS)."""

    log_k3: float
    k5: float
    se_log_k3: float
    se_k5: float
    r2: float
    n_pairs_used: int
    n_zero_pairs: int


@dataclass(frozen=True)
class ExactDesign:
    """Exhaustive design table: every subset with its probability."""

    subsets: list[tuple[int, ...]]
    probs: np.ndarray
    pi: np.ndarray
    pij: np.ndarray

    def table(self) -> dict[tuple[int, ...], float]:
        return {s: float(p) for s, p in zip(self.subsets, self.probs)}


def spatial_balance_index(frame: Frame, sample: SampleDraw, pi) -> BalanceResult:
    """Voronoi-cell balance of a sample.

    Every population unit is assigned to the nearest sample unit (ties to
    the lowest unit id); nu_i sums the assigned units' pi values. The index
    is the mean squared deviation of nu from 1 over the sample.
    """
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (frame.n,):
        raise ParameterError(f"pi must have length {frame.n}")
    sel = sample.selected
    if sel.max() >= frame.n:
        raise ParameterError("sample refers to units outside the frame")
    order = np.argsort(sel)  # ascending ids so argmin ties pick the lowest id
    sel_sorted = sel[order]
    diff = frame.coords[:, None, :] - frame.coords[sel_sorted][None, :, :]
    d2 = np.einsum("vki,vki->vk", diff, diff)
    assign = np.argmin(d2, axis=1)
    nu_sorted = np.bincount(assign, weights=pi, minlength=sel.size)
    nu = np.empty(sel.size)
    nu[order] = nu_sorted
    sbi = float(((nu - 1.0) ** 2).sum() / sel.size)
    return BalanceResult(sbi=sbi, nu=nu)


def estimate_inclusion(design: DesignSpec, frame: Frame, replicates: int,
                       master_seed: int = 0, workers: int = 1) -> InclusionEstimates:
    """Estimate first- and second-order inclusion probabilities by replication.

    Replicate r draws with the substream (master_seed, r), so the result is
    independent of execution order and of the worker count.
    """
    if replicates < 1:
        raise ParameterError("replicates must be >= 1")
    N = frame.n
    if design.kind == "hpwd":
        # vectorized path, bitwise-equal to sequential draws (see designs)
        dbar = standardize(apply_gamma(build_distances(frame), design.gamma))

        def tally(lo: int, hi: int) -> np.ndarray:
            counts = np.zeros(N * N)
            try:
                sel = draw_hpwd_replicates(dbar, design.n, hi - lo, master_seed, start=lo)
            except SpreadSampError as exc:
                raise type(exc)(f"replicates {lo}..{hi}: {exc}") from exc
            chunk = max(1, 2 ** 21 // (design.n * design.n))
            for c in range(0, sel.shape[0], chunk):
                block = sel[c:c + chunk]
                flat = (block[:, :, None] * N + block[:, None, :]).ravel()
                counts += np.bincount(flat, minlength=N * N)
            return counts.reshape(N, N)
    else:
        sampler = make_sampler(design, frame)

        def tally(lo: int, hi: int) -> np.ndarray:
            counts = np.zeros((N, N))
            for r in range(lo, hi):
                try:
                    s = sampler(substream(master_seed, r)).selected
                except SpreadSampError as exc:
                    raise type(exc)(f"replicate {r}: {exc}") from exc
                counts[np.ix_(s, s)] += 1.0
            return counts

    if workers <= 1:
        counts = tally(0, replicates)
    else:
        bounds = np.linspace(0, replicates, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: tally(*b), zip(bounds[:-1], bounds[1:])))
        counts = parts[0]
        for part in parts[1:]:
            counts += part

    pij = counts / replicates
    return InclusionEstimates(replicates=replicates, pi_hat=np.diagonal(pij).copy(),
                              pij_hat=pij)


def cv_pi(estimates: InclusionEstimates, n: int, N: int) -> float:
    """Percent coefficient of variation of pi_hat around the constant n/N."""
    pi_hat = estimates.pi_hat
    if pi_hat.shape != (N,):
        raise ParameterError(f"estimates cover {pi_hat.size} units, expected {N}")
    dev = pi_hat - n / N
    return float((N / n) * np.sqrt((dev ** 2).sum() / N) * 100.0)


def fit_pij_model(estimates: InclusionEstimates, D: DistanceMatrix) -> PijFit:
    """OLS of log pair frequency on log distance over all pairs i < j.

    After balancing, the marginal-product factor of the pair-probability
    model is constant and folds into the intercept, so the fit has two
    parameters. Pairs never selected together (frequency zero) are excluded
    and counted.
    """
    N = D.n
    if estimates.pij_hat.shape != (N, N):
        raise ParameterError("estimates and distance matrix sizes differ")
    iu = np.triu_indices(N, 1)
    pij = estimates.pij_hat[iu]
    d = D.values[iu]
    mask = pij > 0.0
    n_used = int(mask.sum())
    if n_used < 3:
        raise InsufficientDataError(
            f"only {n_used} pairs have positive frequency; need at least 3"
        )
    res = linregress(np.log(d[mask]), np.log(pij[mask]))
    return PijFit(
        log_k3=float(res.intercept),
        k5=float(res.slope),
        se_log_k3=float(res.intercept_stderr),
        se_k5=float(res.stderr),
        r2=float(res.rvalue ** 2),
        n_pairs_used=n_used,
        n_zero_pairs=int((~mask).sum()),
    )


_ENUM_GUARD = 10 ** 6


def enumerate_pwd_exact(D: DistanceMatrix, n: int, gamma: float) -> ExactDesign:
    """Exact distance-product design by full enumeration (small N only).

    P(S) is proportional to the product over ordered within-subset pairs of
    d_uv**gamma; inclusion probabilities follow by summation. Probabilities
    are computed through a log-domain softmax for stability.
    """
    N = D.n
    if not 1 <= n <= N:
        raise ParameterError(f"need 1 <= n <= N, got n={n}, N={N}")
    if not gamma > 0:
        raise ParameterError("gamma must be > 0")
    if comb(N, n) > _ENUM_GUARD:
        raise ParameterError(
            f"C({N},{n}) = {comb(N, n)} exceeds the enumeration guard {_ENUM_GUARD}"
        )
    logd = np.zeros((N, N))
    off = ~np.eye(N, dtype=bool)
    logd[off] = np.log(D.values[off])

    subsets = list(itertools.combinations(range(N), n))
    lam = np.empty(len(subsets))
    for k, s in enumerate(subsets):
        acc = 0.0
        for a_idx in range(1, n):
            ua = s[a_idx]
            row = logd[ua]
            for b_idx in range(a_idx):
                acc += row[s[b_idx]]
        lam[k] = 2.0 * gamma * acc
    lam -= lam.max()
    probs = np.exp(lam)
    probs /= probs.sum()

    pi = np.zeros(N)
    pij = np.zeros((N, N))
    for s, p in zip(subsets, probs):
        idx = np.asarray(s)
        pi[idx] += p
        pij[np.ix_(idx, idx)] += p
    np.fill_diagonal(pij, pi)
    return ExactDesign(subsets=subsets, probs=probs, pi=pi, pij=pij)


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

def export_pi(estimates: InclusionEstimates, path) -> None:
    """CSV export: i,pi_hat."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "pi_hat"])
        for i, v in enumerate(estimates.pi_hat):
            w.writerow([i, repr(float(v))])


def export_pij(estimates: InclusionEstimates, D: DistanceMatrix, path) -> None:
    """CSV export: i,j,pij_hat,d_ij over all pairs i < j."""
    N = D.n
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "pij_hat", "d_ij"])
        for i in range(N):
            for j in range(i + 1, N):
                w.writerow([i, j, repr(float(estimates.pij_hat[i, j])),
                            repr(float(D.values[i, j]))])


def export_fit(fit: PijFit, path) -> None:
    with open(path, "w") as fh:
        json.dump(fit.__dict__, fh, indent=2)
        fh.write("\n")


def export_oracle(design: ExactDesign, path) -> None:
    """CSV export: subset,probability (subset ids joined by '-')."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subset", "probability"])
        for s, p in zip(design.subsets, design.probs):
            w.writerow(["-".join(map(str, s)), repr(float(p))])
