"""Sampling designs behind one interface: SRS, HPWD, PWD, LPM, SCPS.

Every draw function is deterministic given its inputs and a numpy
Generator. `make_sampler` performs the per-frame precomputation (distance
matrices, balancing, probability vectors) once and returns a closure that
maps a Generator to a SampleDraw, which is what the replication and timing
harnesses consume.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .distance import DistanceMatrix, StandardizedDistance, apply_gamma, build_distances, standardize
from .errors import InternalInvariantError, NumericDegeneracyError, ParameterError
from .frame import Frame

_LINEAR_UNDERFLOW = 1e-280  # switch HPWD to the log domain below this normalizer
_PWD_SMALL_N = 24  # pure-Python chain path for small samples
_SUM_TOL = 1e-9  # integrality tolerance for probability vectors
_STEP_CAP = 10 ** 9  # circuit breaker for the LPM re-pick loop


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Counter-addressable child generator for replicate fan-out."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, path)]))


@dataclass(frozen=True)
class SampleDraw:
    """An ordered, duplicate-free fixed-size sample of unit ids."""

    selected: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.selected, dtype=np.int64)
        if s.ndim != 1 or s.size < 1:
            raise ParameterError("a draw must hold at least one unit")
        if len(np.unique(s)) != s.size:
            raise InternalInvariantError("draw contains duplicate units")
        if s.min() < 0:
            raise ParameterError("unit ids must be non-negative")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "selected", s)

    @property
    def n(self) -> int:
        return self.selected.size

    def indicator(self, N: int) -> np.ndarray:
        out = np.zeros(N, dtype=np.int64)
        out[self.selected] = 1
        return out


_DESIGN_GRAMMAR = re.compile(r"^(srs|hpwd|pwd|lpm|scps)(?::(.*))?$")


@dataclass(frozen=True)
class DesignSpec:
    """A design kind plus its parameters, the sample size, and a seed."""

    kind: str
    n: int
    seed: int = 0
    gamma: float = 1.0
    proposals: int | None = None  # pwd only; None means 25 * N
    variant: int = 1  # lpm only

    def __post_init__(self):
        if self.kind not in ("srs", "hpwd", "pwd", "lpm", "scps"):
            raise ParameterError(f"unknown design kind {self.kind!r}")
        if self.n < 1:
            raise ParameterError("sample size n must be >= 1")
        if self.seed < 0:
            raise ParameterError("seed must be unsigned")
        if not self.gamma > 0:
            raise ParameterError("gamma must be > 0")
        if self.proposals is not None and self.proposals < 1:
            raise ParameterError("proposals must be >= 1")
        if self.variant not in (1, 2):
            raise ParameterError("lpm variant must be 1 or 2")

    @property
    def label(self) -> str:
        """Canonical spec string, e.g. 'hpwd:gamma=5'."""
        if self.kind == "srs":
            return "srs"
        if self.kind == "hpwd":
            return f"hpwd:gamma={_fmt(self.gamma)}"
        if self.kind == "pwd":
            extra = f",proposals={self.proposals}" if self.proposals is not None else ""
            return f"pwd:gamma={_fmt(self.gamma)}{extra}"
        if self.kind == "lpm":
            return f"lpm:variant={self.variant}"
        return "scps"


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def parse_design(text: str, n: int, seed: int = 0) -> DesignSpec:
    """Parse the spec-string grammar: srs | hpwd:gamma=G | pwd:gamma=G,proposals=P
    | lpm:variant=1|2 | scps."""
    m = _DESIGN_GRAMMAR.match(text.strip().lower())
    if not m:
        raise ParameterError(f"cannot parse design spec {text!r}")
    kind, raw = m.group(1), m.group(2)
    opts = {}
    if raw:
        for part in raw.split(","):
            if "=" not in part:
                raise ParameterError(f"bad design option {part!r} in {text!r}")
            key, val = part.split("=", 1)
            opts[key.strip()] = val.strip()
    known = {"srs": set(), "hpwd": {"gamma"}, "pwd": {"gamma", "proposals"},
             "lpm": {"variant"}, "scps": set()}[kind]
    unknown = set(opts) - known
    if unknown:
        raise ParameterError(f"design {kind!r} does not accept option(s) {sorted(unknown)}")
    try:
        return DesignSpec(
            kind=kind,
            n=n,
            seed=seed,
            gamma=float(opts.get("gamma", 1.0)),
            proposals=int(opts["proposals"]) if "proposals" in opts else None,
            variant=int(opts.get("variant", 1)),
        )
    except ValueError as exc:
        raise ParameterError(f"bad numeric value in design spec {text!r}: {exc}") from None


# ---------------------------------------------------------------------------
# SRS
# ---------------------------------------------------------------------------

def draw_srs(N: int, n: int, rng: np.random.Generator) -> SampleDraw:
    """Simple random sample without replacement, uniform over all C(N, n) subsets."""
    if not 1 <= n <= N:
        raise ParameterError(f"need 1 <= n <= N, got n={n}, N={N}")
    return SampleDraw(rng.choice(N, size=n, replace=False))


# ---------------------------------------------------------------------------
# HPWD: draw-by-draw with multiplicative probability updates
# ---------------------------------------------------------------------------

def hpwd_step(probs: np.ndarray, dbar_row: np.ndarray) -> np.ndarray:
    """One multiplicative update of the selection distribution.

    After selecting unit i, each unit j's probability becomes
    p_j * dbar[i, j] renormalized to sum 1. The zero diagonal keeps every
    previously selected unit at probability zero.
    """
    w = probs * dbar_row
    z = float(w.sum())
    if z < _LINEAR_UNDERFLOW:
        raise NumericDegeneracyError(
            "HPWD normalizer underflowed; use the log-domain path"
        )
    return w / z


def _categorical(weights: np.ndarray, u: float) -> int:
    """Inverse-CDF draw; zero-weight cells can never be hit."""
    cdf = weights.cumsum()
    total = cdf[-1]
    if not total > 0.0:
        raise NumericDegeneracyError("selection distribution is identically zero")
    idx = int(cdf.searchsorted(u * total, side="right"))
    return min(idx, weights.size - 1)


def draw_hpwd(dbar, n: int, rng: np.random.Generator, trace: list | None = None) -> SampleDraw:
    """Draw-by-draw sample in exactly n steps from a balanced distance matrix.

    Step 1 selects uniformly; after each selection the probabilities are
    updated multiplicatively by the selected unit's dbar row and
    renormalized. Probabilities live in the linear domain; if the
    normalizer underflows (extreme gamma) the remaining steps run in the
    log domain. If `trace` is a list, the distribution used at each step is
    appended to it.
    """
    values = dbar.values if isinstance(dbar, (StandardizedDistance, DistanceMatrix)) else np.asarray(dbar, dtype=float)
    N = values.shape[0]
    if not 1 <= n <= N:
        raise ParameterError(f"need 1 <= n <= N, got n={n}, N={N}")
    p = np.full(N, 1.0 / N)
    logp = None  # active when the linear normalizer underflows
    selected = np.empty(n, dtype=np.int64)
    for t in range(n):
        if logp is None:
            dist = p
        else:
            shift = logp.max()
            if shift == -np.inf:
                raise NumericDegeneracyError(
                    "all selection probabilities vanished even in the log "
                    "domain; lower gamma"
                )
            dist = np.exp(logp - shift)
        if trace is not None:
            trace.append(dist / dist.sum())
        i = _categorical(dist, rng.random())
        selected[t] = i
        if t == n - 1:
            break
        row = values[i]
        if logp is None:
            w = p * row
            z = float(w.sum())
            if z >= _LINEAR_UNDERFLOW:
                p = w / z
            else:
                with np.errstate(divide="ignore"):
                    logp = np.log(p) + np.log(row)
                logp -= logsumexp(logp)
        else:
            with np.errstate(divide="ignore"):
                logp = logp + np.log(row)
            finite = logp > -np.inf
            if not finite.any():
                raise NumericDegeneracyError(
                    "all selection probabilities vanished even in the log "
                    "domain; lower gamma"
                )
            logp -= logsumexp(logp[finite])
    return SampleDraw(selected)


def draw_hpwd_replicates(dbar, n: int, replicates: int, master_seed: int,
                         start: int = 0) -> np.ndarray:
    """Stack of independent draw-by-draw samples, vectorized across replicates.

    Returns an (replicates, n) array whose row r is bitwise identical to
    draw_hpwd(dbar, n, substream(master_seed, start + r)).selected: the
    substreams, the uniform consumption, and every float operation match
    the sequential path. Rows whose linear-domain normalizer underflows are
    rerun through draw_hpwd to pick up its log-domain fallback.
    """
    values = dbar.values if isinstance(dbar, (StandardizedDistance, DistanceMatrix)) else np.asarray(dbar, dtype=float)
    N = values.shape[0]
    if not 1 <= n <= N:
        raise ParameterError(f"need 1 <= n <= N, got n={n}, N={N}")
    if replicates < 1:
        raise ParameterError("replicates must be >= 1")
    R = replicates
    U = np.empty((R, n))
    for r in range(R):
        U[r] = substream(master_seed, start + r).random(n)
    P = np.full((R, N), 1.0 / N)
    out = np.empty((R, n), dtype=np.int64)
    redo = np.zeros(R, dtype=bool)
    for t in range(n):
        cdf = P.cumsum(axis=1)
        x = U[:, t] * cdf[:, -1]
        idx = (cdf <= x[:, None]).sum(axis=1)
        np.minimum(idx, N - 1, out=idx)
        out[:, t] = idx
        if t == n - 1:
            break
        W = P * values[idx]
        z = W.sum(axis=1)
        bad = z < _LINEAR_UNDERFLOW
        if bad.any():
            redo |= bad
            z = np.where(bad, 1.0, z)
        P = W / z[:, None]
    for r in np.flatnonzero(redo):
        out[r] = draw_hpwd(values, n, substream(master_seed, start + r)).selected
    return out


# ---------------------------------------------------------------------------
# PWD: Metropolis exchange chain over n-subsets
# ---------------------------------------------------------------------------

def pwd_log_index(D, subset, gamma: float = 1.0) -> float:
    """log M(D_S) = 2*gamma * sum of log d_uv over unordered pairs in S.

    From-scratch evaluation of the within-sample distance-product index;
    the chain itself updates this incrementally.
    """
    values = D.values if isinstance(D, (DistanceMatrix, StandardizedDistance)) else np.asarray(D, dtype=float)
    s = np.asarray(sorted(subset), dtype=int)
    if len(np.unique(s)) != s.size:
        raise ParameterError("subset has duplicate units")
    iu = np.triu_indices(s.size, 1)
    return float(2.0 * gamma * np.log(values[np.ix_(s, s)][iu]).sum())


def default_proposals(N: int) -> int:
    """Chain length validated against the enumeration oracle."""
    return 25 * N


def _pwd_logd(values: np.ndarray) -> np.ndarray:
    logd = np.zeros_like(values)
    off = ~np.eye(values.shape[0], dtype=bool)
    logd[off] = np.log(values[off])
    return logd


def _pwd_draw(logd, n, proposals, rng) -> SampleDraw:
    N = logd.shape[0]
    start = rng.choice(N, size=n, replace=False)
    if n == N:
        return SampleDraw(start)
    in_sample = np.zeros(N, dtype=bool)
    in_sample[start] = True
    comp = np.flatnonzero(~in_sample)
    if n <= _PWD_SMALL_N:
        sample = _pwd_chain_small(logd, start, comp, proposals, rng)
    else:
        sample = _pwd_chain_numpy(logd, start, comp, proposals, rng)
    return SampleDraw(sample)


def draw_pwd(D, n: int, proposals: int | None = None,
             rng: np.random.Generator | None = None) -> SampleDraw:
    """Exchange-chain draw targeting P(S) proportional to the distance product.

    The matrix is used as given (apply the gamma power first). Starting
    from an SRS subset, each proposal swaps a sampled unit for an
    unsampled one and accepts with probability min(1, M(S')/M(S)),
    evaluated in the log domain with an O(n) incremental update.
    """
    values = D.values if isinstance(D, (DistanceMatrix, StandardizedDistance)) else np.asarray(D, dtype=float)
    N = values.shape[0]
    if rng is None:
        raise ParameterError("rng is required")
    if not 2 <= n <= N:
        raise ParameterError(f"PWD needs 2 <= n <= N, got n={n}, N={N}")
    if proposals is None:
        proposals = default_proposals(N)
    if proposals < 1:
        raise ParameterError("proposals must be >= 1")
    return _pwd_draw(_pwd_logd(values), n, proposals, rng)


_PWD_CHUNK = 8192


def _pwd_chain_small(logd, start, comp, proposals, rng):
    rows = logd.tolist()
    S = [int(v) for v in start]
    C = [int(v) for v in comp]
    n, m = len(S), len(C)
    done = 0
    while done < proposals:
        k = min(_PWD_CHUNK, proposals - done)
        ii = rng.integers(0, n, size=k)
        jj = rng.integers(0, m, size=k)
        lu = np.log(rng.random(size=k))
        for t in range(k):
            ipos = ii[t]
            jpos = jj[t]
            i = S[ipos]
            j = C[jpos]
            rowj = rows[j]
            rowi = rows[i]
            gain = -rowj[i]
            for u in S:
                gain += rowj[u] - rowi[u]
            if gain >= 0.0 or lu[t] < 2.0 * gain:
                S[ipos] = j
                C[jpos] = i
        done += k
    return np.asarray(S, dtype=np.int64)


def _pwd_chain_numpy(logd, start, comp, proposals, rng):
    S = start.astype(np.int64).copy()
    C = comp.astype(np.int64).copy()
    n, m = S.size, C.size
    done = 0
    while done < proposals:
        k = min(_PWD_CHUNK, proposals - done)
        ii = rng.integers(0, n, size=k)
        jj = rng.integers(0, m, size=k)
        lu = np.log(rng.random(size=k))
        for t in range(k):
            ipos = ii[t]
            jpos = jj[t]
            i = S[ipos]
            j = C[jpos]
            gain = float(logd[S, j].sum() - logd[S, i].sum()) - logd[i, j]
            if gain >= 0.0 or lu[t] < 2.0 * gain:
                S[ipos] = j
                C[jpos] = i
        done += k
    return S


# ---------------------------------------------------------------------------
# LPM: nearest-neighbor pivotal competitions
# ---------------------------------------------------------------------------

def _check_probability_vector(pi, N):
    p = np.asarray(pi, dtype=float)
    if p.shape != (N,):
        raise ParameterError(f"pi must have length {N}")
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ParameterError("each pi must lie strictly inside (0, 1)")
    total = float(p.sum())
    n = round(total)
    if abs(total - n) > _SUM_TOL or n < 1:
        raise ParameterError(f"pi must sum to a positive integer, got {total!r}")
    return p.copy(), int(n)


def draw_lpm(frame: Frame, pi, variant: int, rng: np.random.Generator,
             trace: list | None = None) -> SampleDraw:
    """Local pivotal draw: nearest-neighbor pairs fight over probability mass.

    Repeatedly pick a random undecided unit i and its nearest undecided
    neighbor j (ties by lowest id). Variant 1 lets them compete only when
    they are mutual nearest neighbors (otherwise a fresh i is drawn);
    variant 2 competes immediately. The pivotal update pushes one of the
    pair to 0 or 1 while preserving the pair sum; it repeats until every
    unit is decided. If `trace` is a list, the probability vector after
    each competition is appended.
    """
    if variant not in (1, 2):
        raise ParameterError("variant must be 1 or 2")
    p, n = _check_probability_vector(pi, frame.n)
    coords = frame.coords
    alive_mask = np.ones(frame.n, dtype=bool)
    steps = 0
    while True:
        alive = np.flatnonzero(alive_mask)
        if alive.size <= 1:
            break
        while True:
            steps += 1
            if steps > _STEP_CAP:
                raise InternalInvariantError("LPM exceeded its step budget")
            i = int(alive[rng.integers(alive.size)])
            j = _nearest_alive(coords, alive, i)
            if variant == 2 or _nearest_alive(coords, alive, j) == i:
                break
        _pivotal_update(p, i, j, rng)
        for u in (i, j):
            if p[u] <= 1e-12:
                p[u] = 0.0
                alive_mask[u] = False
            elif p[u] >= 1.0 - 1e-12:
                p[u] = 1.0
                alive_mask[u] = False
        if trace is not None:
            trace.append(p.copy())
    leftover = np.flatnonzero(alive_mask)
    if leftover.size:
        u = int(leftover[0])
        if abs(p[u]) <= _SUM_TOL:
            p[u] = 0.0
        elif abs(1.0 - p[u]) <= _SUM_TOL:
            p[u] = 1.0
        else:
            raise InternalInvariantError(
                f"unit {u} finished undecided with probability {p[u]!r}"
            )
    chosen = np.flatnonzero(p == 1.0)
    if chosen.size != n:
        raise InternalInvariantError(f"LPM selected {chosen.size} units, expected {n}")
    return SampleDraw(chosen)


def _nearest_alive(coords, alive, i):
    diff = coords[alive] - coords[i]
    d2 = np.einsum("ij,ij->i", diff, diff)
    d2[alive == i] = np.inf
    return int(alive[int(np.argmin(d2))])  # first minimum = lowest id


def _pivotal_update(p, i, j, rng):
    a = p[i]
    b = p[j]
    s = a + b
    if s < 1.0:
        if rng.random() < b / s:
            p[i], p[j] = 0.0, s
        else:
            p[i], p[j] = s, 0.0
    else:
        if rng.random() < (1.0 - b) / (2.0 - s):
            p[i], p[j] = 1.0, s - 1.0
        else:
            p[i], p[j] = s - 1.0, 1.0


# ---------------------------------------------------------------------------
# SCPS: list-sequential draw with maximal weights to the nearest units
# ---------------------------------------------------------------------------

def draw_scps(D, pi, rng: np.random.Generator, order="random") -> SampleDraw:
    """Spatially correlated Poisson sampling with the maximal-weights rule.

    Units are visited in `order` (default: a fresh random permutation). At
    each visit the unit's current probability is realized to 0/1 and the
    change is propagated to the not-yet-visited units: weight 1 is placed
    greedily by ascending distance, each unit capped at the largest value
    that keeps its probability inside [0, 1] under both outcomes, with
    equidistant units sharing the remaining weight equally.
    """
    values = D.values if isinstance(D, (DistanceMatrix, StandardizedDistance)) else np.asarray(D, dtype=float)
    N = values.shape[0]
    p, n = _check_probability_vector(pi, N)
    if isinstance(order, str):
        if order != "random":
            raise ParameterError("order must be 'random' or a permutation")
        visit = rng.permutation(N)
    else:
        visit = np.asarray(order, dtype=int)
        if not np.array_equal(np.sort(visit), np.arange(N)):
            raise ParameterError("order must be a permutation of 0..N-1")

    s = np.zeros(N, dtype=np.int64)
    for t in range(N):
        i = int(visit[t])
        q = p[i]
        if q < -_SUM_TOL or q > 1.0 + _SUM_TOL:
            raise InternalInvariantError(f"probability of unit {i} left [0,1]: {q!r}")
        q = min(max(q, 0.0), 1.0)
        if q >= 1.0 - 1e-12:
            si = 1
        elif q <= 1e-12:
            si = 0
        else:
            si = 1 if rng.random() < q else 0
        s[i] = si
        residual = si - q
        if residual == 0.0 or t == N - 1:
            continue
        rest = visit[t + 1:]
        caps = np.minimum(p[rest] / (1.0 - q), (1.0 - p[rest]) / q)
        weights = _greedy_weights(values[i, rest], caps)
        p[rest] -= weights * residual
        np.clip(p[rest], 0.0, 1.0, out=p[rest])
    chosen = visit[s[visit] == 1]
    if chosen.size != n:
        raise InternalInvariantError(f"SCPS selected {chosen.size} units, expected {n}")
    return SampleDraw(chosen)


def _greedy_weights(dists, caps):
    """Place total weight 1 by ascending distance, honoring per-unit caps;
    exact distance ties share the remaining weight equally (water-filling)."""
    m = dists.size
    weights = np.zeros(m)
    order = np.argsort(dists, kind="stable")
    budget = 1.0
    start = 0
    while start < m and budget > 1e-15:
        d0 = dists[order[start]]
        stop = start
        while stop < m and dists[order[stop]] == d0:
            stop += 1
        group = order[start:stop]
        budget = _fill_group(weights, caps, group, budget)
        start = stop
    return weights


def _fill_group(weights, caps, group, budget):
    room = caps[group] - weights[group]
    active = room > 0.0
    while budget > 1e-15 and active.any():
        share = budget / active.sum()
        inc = np.minimum(room[active], share)
        idx = group[active]
        weights[idx] += inc
        room[active] -= inc
        budget -= float(inc.sum())
        saturated = inc < share
        if not saturated.any():
            break
        active_idx = np.flatnonzero(active)
        active[active_idx[saturated]] = False
    return max(budget, 0.0)


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

def make_sampler(spec: DesignSpec, frame: Frame):
    """Do the per-frame precomputation and return rng -> SampleDraw.

    The returned closure performs only per-draw work, which is what the
    timing harness measures; distance construction, the gamma power, and
    balancing happen here, once.
    """
    N = frame.n
    if spec.n > N:
        raise ParameterError(f"sample size {spec.n} exceeds population size {N}")
    if spec.kind == "srs":
        return lambda rng: draw_srs(N, spec.n, rng)
    if spec.kind == "hpwd":
        dbar = standardize(apply_gamma(build_distances(frame), spec.gamma))
        return lambda rng: draw_hpwd(dbar, spec.n, rng)
    if spec.kind == "pwd":
        if not 2 <= spec.n <= N:
            raise ParameterError(f"PWD needs 2 <= n <= N, got n={spec.n}, N={N}")
        logd = _pwd_logd(apply_gamma(build_distances(frame), spec.gamma).values)
        proposals = spec.proposals if spec.proposals is not None else default_proposals(N)
        return lambda rng: _pwd_draw(logd, spec.n, proposals, rng)
    pi = np.full(N, spec.n / N)
    if spec.kind == "lpm":
        return lambda rng: draw_lpm(frame, pi, spec.variant, rng)
    D = build_distances(frame)
    return lambda rng: draw_scps(D, pi, rng)
