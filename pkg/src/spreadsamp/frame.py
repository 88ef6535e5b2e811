"""Finite spatial populations: containers, generators, and file I/O.

A Frame is an immutable population of N point units with contiguous ids
0..N-1, planar coordinates, and zero or more named outcome columns.
"""

from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateFrameError, FrameFormatError, ParameterError

_JITTER_REL = 1e-9  # duplicate-coordinate nudge, relative to the bounding box


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Frame:
    """A finite spatial population.

    coords: (N, d) array of planar coordinates, unit i in row i.
    outcomes: mapping of variable name to a length-N value vector.
    """

    coords: np.ndarray
    outcomes: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim != 2 or coords.shape[0] < 1 or coords.shape[1] < 1:
            raise ParameterError("coords must be a non-empty (N, d) array")
        if not np.all(np.isfinite(coords)):
            raise ParameterError("coordinates must be finite")
        object.__setattr__(self, "coords", _readonly(coords))
        cleaned = {}
        for name, values in self.outcomes.items():
            v = np.asarray(values, dtype=float)
            if v.shape != (coords.shape[0],):
                raise ParameterError(
                    f"outcome {name!r} has length {v.shape}, expected ({coords.shape[0]},)"
                )
            if not np.all(np.isfinite(v)):
                raise ParameterError(f"outcome {name!r} contains non-finite values")
            cleaned[name] = _readonly(v)
        object.__setattr__(self, "outcomes", cleaned)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n)

    @property
    def outcome_names(self) -> list[str]:
        return list(self.outcomes)

    def outcome(self, name: str) -> np.ndarray:
        if name not in self.outcomes:
            raise ParameterError(f"no outcome named {name!r}")
        return self.outcomes[name]

    def with_outcome(self, name: str, values) -> "Frame":
        """Return a new frame with one extra outcome column."""
        if name in self.outcomes:
            raise ParameterError(f"outcome {name!r} already exists")
        merged = dict(self.outcomes)
        merged[name] = np.asarray(values, dtype=float)
        return Frame(self.coords, merged)

    def fingerprint(self) -> str:
        """Stable content hash of coordinates and outcomes."""
        h = hashlib.sha256()
        h.update(self.coords.tobytes())
        for name in sorted(self.outcomes):
            h.update(name.encode())
            h.update(self.outcomes[name].tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class OutcomeSpec:
    """Recipe for one synthetic outcome column.

    The column is a Gaussian field with exponential covariance
    exp(-h / variogram_range); with trend=True a linear surface x1 + x2 is
    mixed in so that it explains exactly trend_share of the variance. The
    result is affinely standardized to the target mean and sd (ddof=1).
    """

    name: str
    variogram_range: float
    trend: bool = False
    trend_share: float = 0.8
    mean: float = 5.0
    sd: float = 1.0

    def __post_init__(self):
        if not self.name:
            raise ParameterError("outcome name must be non-empty")
        if not self.variogram_range > 0:
            raise ParameterError("variogram_range must be > 0")
        if not 0.0 <= self.trend_share <= 1.0:
            raise ParameterError("trend_share must be in [0, 1]")
        if not self.sd > 0:
            raise ParameterError("target sd must be > 0")


@dataclass(frozen=True)
class PopulationRecipe:
    """Recipe for a complete population: geometry plus outcome columns."""

    kind: str  # "grid" | "neyman_scott"
    rows: int = 0
    cols: int = 0
    spacing: float = 1.0
    center_intensity: float = 10.0
    mean_per_cluster: float = 100.0
    kernel_scale: float = 0.01
    target_n: int = 0
    outcome_specs: tuple[OutcomeSpec, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("grid", "neyman_scott"):
            raise ParameterError(f"unknown population kind {self.kind!r}")
        if self.kind == "grid":
            if self.rows < 1 or self.cols < 1 or not self.spacing > 0:
                raise ParameterError("grid needs rows >= 1, cols >= 1, spacing > 0")
        else:
            if not (self.center_intensity > 0 and self.mean_per_cluster > 0
                    and self.kernel_scale > 0):
                raise ParameterError("point-process intensities and scales must be > 0")
            if self.target_n < 2:
                raise ParameterError("target_n must be >= 2")
        names = [s.name for s in self.outcome_specs]
        if len(set(names)) != len(names):
            raise ParameterError("outcome names must be unique within a recipe")


def generate_grid(rows: int, cols: int, spacing: float) -> Frame:
    """Regular rows x cols grid; unit id r*cols + c sits at (r*spacing, c*spacing)."""
    if rows < 1 or cols < 1:
        raise ParameterError("rows and cols must be >= 1")
    if not spacing > 0:
        raise ParameterError("spacing must be > 0")
    r, c = np.divmod(np.arange(rows * cols), cols)
    return Frame(np.column_stack([r * spacing, c * spacing]))


def _dedupe_coords(coords: np.ndarray, label: str) -> np.ndarray:
    """Nudge exact duplicate coordinates apart, warning once."""
    view = np.ascontiguousarray(coords).view([("", coords.dtype)] * coords.shape[1])
    _, inverse, counts = np.unique(view, return_inverse=True, return_counts=True)
    if counts.max(initial=1) == 1:
        return coords
    spans = coords.max(axis=0) - coords.min(axis=0)
    eps = _JITTER_REL * max(spans.max(), 1.0)
    coords = coords.copy()
    n_moved = 0
    for g in np.flatnonzero(counts > 1):
        members = np.flatnonzero(inverse == g)
        for k, idx in enumerate(members[1:], start=1):
            coords[idx] += k * eps
            n_moved += 1
    warnings.warn(
        f"{label}: nudged {n_moved} duplicate coordinate(s) by ~{eps:.1e}",
        stacklevel=3,
    )
    return coords


def generate_neyman_scott(recipe: PopulationRecipe, seed: int | None = None) -> Frame:
    """Clustered point population in the unit square, conditioned on an exact count.

    Parents are a Poisson process (expected count = center_intensity in
    [0,1]^2); each parent spawns a Poisson number of offspring displaced by
    an isotropic Gaussian of sd kernel_scale; offspring outside the square
    are dropped. If more than target_n points survive, the surplus is
    thinned uniformly at random; if fewer, the whole pattern is regenerated
    from a fresh substream (at most 100 attempts).
    """
    if recipe.kind != "neyman_scott":
        raise ParameterError("recipe.kind must be 'neyman_scott'")
    base = recipe.seed if seed is None else seed
    for attempt in range(100):
        rng = np.random.default_rng(np.random.SeedSequence([int(base), attempt]))
        n_centers = rng.poisson(recipe.center_intensity)
        if n_centers == 0:
            continue
        centers = rng.uniform(0.0, 1.0, size=(n_centers, 2))
        litter = rng.poisson(recipe.mean_per_cluster, size=n_centers)
        total = int(litter.sum())
        if total == 0:
            continue
        pts = np.repeat(centers, litter, axis=0)
        pts = pts + rng.normal(0.0, recipe.kernel_scale, size=(total, 2))
        inside = np.all((pts >= 0.0) & (pts <= 1.0), axis=1)
        pts = pts[inside]
        if len(pts) < recipe.target_n:
            continue
        keep = np.sort(rng.choice(len(pts), size=recipe.target_n, replace=False))
        pts = _dedupe_coords(pts[keep], "neyman_scott")
        return Frame(pts)
    raise DegenerateFrameError(
        f"could not reach target_n={recipe.target_n} within 100 attempts; "
        "raise the intensities or lower target_n"
    )


def attach_gaussian_outcome(frame: Frame, spec: OutcomeSpec, seed: int) -> Frame:
    """Append one synthetic outcome column drawn from a Gaussian field.

    Covariance between units at distance h is exp(-h / variogram_range),
    factorized densely (fine at desk scale). The finished column has sample
    mean and sd (ddof=1) exactly equal to the targets.
    """
    if frame.n < 2:
        raise ParameterError("frame must have at least 2 units")
    from scipy.spatial.distance import pdist, squareform

    h = squareform(pdist(frame.coords))
    cov = np.exp(-h / spec.variogram_range)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise DegenerateFrameError(
            "covariance factorization failed; the frame has duplicate or "
            "near-duplicate coordinates (jitter at generation)"
        ) from exc
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    eta = chol @ rng.standard_normal(frame.n)

    if spec.trend:
        trend = frame.coords[:, 0] + frame.coords[:, 1]
        t = trend - trend.mean()
        tt = float(t @ t)
        if frame.n < 3 or tt == 0.0:
            raise DegenerateFrameError("trend surface is degenerate on this frame")
        e = eta - eta.mean()
        resid = e - (float(e @ t) / tt) * t  # orthogonal to the trend
        sd_t = t.std(ddof=1)
        sd_r = resid.std(ddof=1)
        if sd_r == 0.0:
            raise DegenerateFrameError("residual field is degenerate on this frame")
        z = np.sqrt(spec.trend_share) * (t / sd_t) + np.sqrt(1.0 - spec.trend_share) * (resid / sd_r)
    else:
        z = eta

    sd_z = z.std(ddof=1)
    if sd_z == 0.0:
        raise DegenerateFrameError("generated field has zero variance")
    column = spec.mean + spec.sd * (z - z.mean()) / sd_z
    return frame.with_outcome(spec.name, column)


def build_population(recipe: PopulationRecipe) -> Frame:
    """Realize a recipe: geometry plus every outcome column, all seeded."""
    if recipe.kind == "grid":
        frame = generate_grid(recipe.rows, recipe.cols, recipe.spacing)
    else:
        frame = generate_neyman_scott(recipe)
    for k, spec in enumerate(recipe.outcome_specs):
        frame = attach_gaussian_outcome(frame, spec, seed=recipe.seed + 1000 + k)
    return frame


# ---------------------------------------------------------------------------
# File I/O.  CSV schema: header id,x,y[,<outcome>...]; JSON mirrors the
# {"d": ..., "units": [...]} layout.  Floats are written with repr so a
# write/read round trip is bit-exact.
# ---------------------------------------------------------------------------

def write_frame(frame: Frame, path, format: str = "csv") -> None:
    if frame.d != 2 and format == "csv":
        raise ParameterError("csv frames are 2-dimensional (columns x, y)")
    if format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            names = frame.outcome_names
            writer.writerow(["id", "x", "y", *names])
            for i in range(frame.n):
                row = [i, repr(float(frame.coords[i, 0])), repr(float(frame.coords[i, 1]))]
                row += [repr(float(frame.outcomes[name][i])) for name in names]
                writer.writerow(row)
    elif format == "json":
        units = []
        for i in range(frame.n):
            units.append({
                "id": i,
                "coords": [float(v) for v in frame.coords[i]],
                "outcomes": {name: float(frame.outcomes[name][i]) for name in frame.outcome_names},
            })
        with open(path, "w") as fh:
            json.dump({"d": frame.d, "units": units}, fh)
            fh.write("\n")
    else:
        raise ParameterError(f"unknown frame format {format!r}")


def _finish_frame(ids, coords, outcome_rows, names, jitter, label):
    ids = np.asarray(ids)
    order = np.argsort(ids)
    if not np.array_equal(np.sort(ids), np.arange(len(ids))):
        raise FrameFormatError(f"{label}: unit ids must be exactly 0..N-1")
    coords = np.asarray(coords, dtype=float)[order]
    outcomes = {name: np.asarray(col, dtype=float)[order]
                for name, col in zip(names, np.transpose(outcome_rows))} if names else {}
    view = np.ascontiguousarray(coords).view([("", coords.dtype)] * coords.shape[1])
    if len(np.unique(view)) != len(coords):
        if not jitter:
            raise FrameFormatError(
                f"{label}: duplicate coordinates present; pass jitter=True to nudge them"
            )
        coords = _dedupe_coords(coords, label)
    return Frame(coords, outcomes)


def read_frame(path, format: str = "csv", jitter: bool = False) -> Frame:
    if format == "csv":
        return _read_csv(path, jitter)
    if format == "json":
        return _read_json(path, jitter)
    raise ParameterError(f"unknown frame format {format!r}")


def _read_csv(path, jitter):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FrameFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for col in ("id", "x", "y"):
            if col not in header[:3]:
                raise FrameFormatError(f"{path}: missing required column '{col}'")
        if header[:3] != ["id", "x", "y"]:
            raise FrameFormatError(f"{path}: first columns must be id,x,y")
        names = header[3:]
        if len(set(names)) != len(names):
            raise FrameFormatError(f"{path}: duplicate outcome column names")
        ids, coords, outcome_rows = [], [], []
        seen = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FrameFormatError(f"{path} row {lineno}: expected {len(header)} cells")
            try:
                uid = int(row[0])
            except ValueError:
                raise FrameFormatError(f"{path} row {lineno}: non-integer id {row[0]!r}") from None
            if uid in seen:
                raise FrameFormatError(
                    f"{path} row {lineno}: duplicate id {uid} (first seen row {seen[uid]})"
                )
            seen[uid] = lineno
            vals = []
            for col, cell in zip(header[1:], row[1:]):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise FrameFormatError(
                        f"{path} row {lineno}: non-numeric value {cell!r} in column '{col}'"
                    ) from None
            ids.append(uid)
            coords.append(vals[:2])
            outcome_rows.append(vals[2:])
    if not ids:
        raise FrameFormatError(f"{path}: no data rows")
    return _finish_frame(ids, coords, outcome_rows, names, jitter, str(path))


def _read_json(path, jitter):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FrameFormatError(f"{path}: invalid JSON ({exc})") from None
    units = doc.get("units")
    if not isinstance(units, list) or not units:
        raise FrameFormatError(f"{path}: missing non-empty 'units' list")
    d = int(doc.get("d", 2))
    names = sorted(units[0].get("outcomes", {}))
    ids, coords, outcome_rows = [], [], []
    for k, unit in enumerate(units):
        try:
            uid = int(unit["id"])
            xy = [float(v) for v in unit["coords"]]
        except (KeyError, TypeError, ValueError):
            raise FrameFormatError(f"{path} unit #{k}: needs integer 'id' and numeric 'coords'") from None
        if len(xy) != d:
            raise FrameFormatError(f"{path} unit #{k}: coords length {len(xy)} != d={d}")
        out = unit.get("outcomes", {})
        if sorted(out) != names:
            raise FrameFormatError(f"{path} unit #{k}: outcome keys differ from the first unit")
        ids.append(uid)
        coords.append(xy)
        outcome_rows.append([float(out[name]) for name in names])
    return _finish_frame(ids, coords, outcome_rows, names, jitter, str(path))
