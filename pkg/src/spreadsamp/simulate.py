"""Replicated design comparisons (relative RMSE, mean spatial balance) and
wall-clock timing benchmarks."""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .designs import make_sampler, parse_design, substream
from .diagnostics import spatial_balance_index
from .errors import ParameterError, SpreadSampError
from .frame import Frame, OutcomeSpec, PopulationRecipe, build_population, read_frame


@dataclass(frozen=True)
class ComparisonConfig:
    """What to compare: frame source, designs, sizes, outcomes, replication."""

    designs: tuple[str, ...]
    sample_sizes: tuple[int, ...]
    replicates: int
    outcomes: tuple[str, ...] = ()  # empty = every outcome on the frame
    master_seed: int = 0
    record_sbi: bool = True
    realizations: int = 1
    frame: Frame | None = None
    recipe: PopulationRecipe | None = None
    frame_path: str | None = None
    frame_format: str = "csv"
    workers: int = 1

    def __post_init__(self):
        if self.replicates < 2:
            raise ParameterError("replicates must be >= 2")
        if not self.designs:
            raise ParameterError("at least one design is required")
        if not self.sample_sizes:
            raise ParameterError("at least one sample size is required")
        if self.realizations < 1:
            raise ParameterError("realizations must be >= 1")
        sources = [s is not None for s in (self.frame, self.recipe, self.frame_path)]
        if sum(sources) != 1:
            raise ParameterError("exactly one of frame, recipe, frame_path is required")
        if self.realizations > 1 and self.recipe is None:
            raise ParameterError("multi-realization averaging needs a recipe source")


@dataclass(frozen=True)
class CellResult:
    design: str
    n: int
    outcome: str
    rmse: float
    rel_rmse: float
    bias: float
    mean_sbi: float | None


@dataclass(frozen=True)
class ReplicationReport:
    cells: tuple[CellResult, ...]
    errors: tuple[dict, ...]
    metadata: dict

    def cell(self, design: str, n: int, outcome: str) -> CellResult:
        for c in self.cells:
            if c.design == design and c.n == n and c.outcome == outcome:
                return c
        raise KeyError(f"no cell ({design!r}, {n}, {outcome!r})")

    def mean_sbi(self, design: str, n: int) -> float:
        for c in self.cells:
            if c.design == design and c.n == n and c.mean_sbi is not None:
                return c.mean_sbi
        raise KeyError(f"no balance record for ({design!r}, {n})")

    def to_json(self) -> str:
        return json.dumps({
            "metadata": self.metadata,
            "cells": [asdict(c) for c in self.cells],
            "errors": list(self.errors),
        }, indent=2)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["design", "n", "outcome", "rmse", "rel_rmse", "bias", "mean_sbi"])
            for c in self.cells:
                w.writerow([c.design, c.n, c.outcome, repr(c.rmse), repr(c.rel_rmse),
                            repr(c.bias), "" if c.mean_sbi is None else repr(c.mean_sbi)])

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")


def _resolve_frame(config: ComparisonConfig, realization: int) -> Frame:
    if config.frame is not None:
        return config.frame
    if config.frame_path is not None:
        return read_frame(config.frame_path, config.frame_format)
    recipe = config.recipe
    if realization == 0:
        return build_population(recipe)
    bumped = PopulationRecipe(
        kind=recipe.kind, rows=recipe.rows, cols=recipe.cols, spacing=recipe.spacing,
        center_intensity=recipe.center_intensity, mean_per_cluster=recipe.mean_per_cluster,
        kernel_scale=recipe.kernel_scale, target_n=recipe.target_n,
        outcome_specs=recipe.outcome_specs, seed=recipe.seed + 7919 * realization,
    )
    return build_population(bumped)


def run_comparison(config: ComparisonConfig) -> ReplicationReport:
    """Replicate every design at every sample size and compare expansion
    estimates against the known totals, using the SRS cell as denominator.

    Replicate r of design d at size index k uses the substream
    (master_seed, realization, d, k, r), so reports are bitwise reproducible
    and independent of the worker count.
    """
    design_texts = list(config.designs)
    if not any(t.strip().lower() == "srs" for t in design_texts):
        design_texts.insert(0, "srs")

    per_real: list[dict] = []
    errors: list[dict] = []
    fingerprints = []
    for real in range(config.realizations):
        frame = _resolve_frame(config, real)
        fingerprints.append(frame.fingerprint())
        outcome_names = list(config.outcomes) if config.outcomes else frame.outcome_names
        for name in outcome_names:
            if name not in frame.outcomes:
                raise ParameterError(f"outcome {name!r} not present on the frame")
        if not outcome_names:
            raise ParameterError("the frame has no outcome columns to estimate")
        Y = np.column_stack([frame.outcomes[name] for name in outcome_names])
        true_totals = Y.sum(axis=0)
        cells = {}
        for d_idx, text in enumerate(design_texts):
            label = parse_design(text, n=1).label
            for k_idx, n in enumerate(config.sample_sizes):
                try:
                    cells[(label, n)] = _run_cell(
                        config, frame, text, n, Y, true_totals, real, d_idx, k_idx)
                except SpreadSampError as exc:
                    errors.append({"design": label, "n": n, "realization": real,
                                   "error": str(exc)})
        per_real.append({"cells": cells, "outcomes": outcome_names})

    outcome_names = per_real[0]["outcomes"]
    rows = []
    for label, n in per_real[0]["cells"]:
        runs, srs_runs = [], []
        for pr in per_real:
            if (label, n) in pr["cells"] and ("srs", n) in pr["cells"]:
                runs.append(pr["cells"][(label, n)])
                srs_runs.append(pr["cells"][("srs", n)])
        if not runs:
            continue
        mean_sbi = (float(np.mean([r["mean_sbi"] for r in runs]))
                    if config.record_sbi else None)
        for o_idx, name in enumerate(outcome_names):
            rel = [r["rmse"][o_idx] / s["rmse"][o_idx] for r, s in zip(runs, srs_runs)]
            rows.append(CellResult(
                design=label, n=n, outcome=name,
                rmse=float(np.mean([r["rmse"][o_idx] for r in runs])),
                rel_rmse=float(np.mean(rel)),
                bias=float(np.mean([r["bias"][o_idx] for r in runs])),
                mean_sbi=mean_sbi,
            ))
    metadata = {
        "master_seed": config.master_seed,
        "replicates": config.replicates,
        "realizations": config.realizations,
        "designs": [parse_design(t, n=1).label for t in design_texts],
        "sample_sizes": list(config.sample_sizes),
        "outcomes": outcome_names,
        "frame_fingerprints": fingerprints,
        "record_sbi": config.record_sbi,
    }
    return ReplicationReport(cells=tuple(rows), errors=tuple(errors), metadata=metadata)


def _run_cell(config, frame, design_text, n, Y, true_totals, real, d_idx, k_idx):
    spec = parse_design(design_text, n=n)
    sampler = make_sampler(spec, frame)
    R = config.replicates
    N = frame.n
    expansion = N / n
    pi_const = np.full(N, n / N)
    est = np.empty((R, Y.shape[1]))
    sbi = np.empty(R) if config.record_sbi else None

    def run_range(lo, hi):
        for r in range(lo, hi):
            draw = sampler(substream(config.master_seed, real, d_idx, k_idx, r))
            est[r] = Y[draw.selected].sum(axis=0) * expansion
            if sbi is not None:
                sbi[r] = spatial_balance_index(frame, draw, pi_const).sbi

    if config.workers <= 1:
        run_range(0, R)
    else:
        bounds = np.linspace(0, R, config.workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            list(pool.map(lambda b: run_range(*b), zip(bounds[:-1], bounds[1:])))

    err = est - true_totals
    rmse = np.array([math.sqrt(math.fsum(err[:, k] ** 2) / R)
                     for k in range(err.shape[1])])
    bias = np.array([math.fsum(err[:, k]) / R for k in range(err.shape[1])])
    return {
        "rmse": rmse,
        "bias": bias,
        "mean_sbi": math.fsum(sbi) / R if sbi is not None else None,
    }


# ---------------------------------------------------------------------------
# Timing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimingRow:
    design: str
    N: int
    n: int
    mean_seconds: float
    sd_seconds: float
    setup_seconds: float
    repeats: int


@dataclass(frozen=True)
class TimingReport:
    rows: tuple[TimingRow, ...]

    def row(self, design: str, N: int, n: int) -> TimingRow:
        for r in self.rows:
            if r.design == design and r.N == N and r.n == n:
                return r
        raise KeyError(f"no timing row ({design!r}, {N}, {n})")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["design", "N", "n", "mean_seconds", "sd_seconds"])
            for r in self.rows:
                w.writerow([r.design, r.N, r.n, repr(r.mean_seconds), repr(r.sd_seconds)])

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump([asdict(r) for r in self.rows], fh, indent=2)
            fh.write("\n")


_WARMUP = 3


def timing_frame(N: int, master_seed: int = 0) -> Frame:
    """Deterministic uniform scatter in the unit square used for benchmarks."""
    rng = substream(master_seed, 424242, N)
    return Frame(rng.uniform(0.0, 1.0, size=(N, 2)))


def benchmark_timing(designs, N_list, n_list, repeats: int = 30,
                     master_seed: int = 0) -> TimingReport:
    """Mean wall-clock seconds per draw for every (design, N, n) combination.

    Per-frame precomputation (distances, gamma, balancing) happens before
    the clock starts and is reported separately as setup_seconds; the first
     3 draws are warm-up and are not timed. Cells whose sample size a design
    cannot support (n too large) are skipped.
    """
    if repeats < 10:
        raise ParameterError("repeats must be >= 10")
    designs = list(designs)
    if not designs:
        raise ParameterError("at least one design is required")
    rows = []
    for N in N_list:
        frame = timing_frame(N, master_seed)
        for d_idx, text in enumerate(designs):
            for n in n_list:
                spec = parse_design(text, n=n)
                if n > N or (spec.kind in ("lpm", "scps") and n >= N):
                    continue
                t0 = time.perf_counter()
                try:
                    sampler = make_sampler(spec, frame)
                except SpreadSampError:
                    continue
                setup = time.perf_counter() - t0
                for w in range(_WARMUP):
                    sampler(substream(master_seed, d_idx, N, n, 900000 + w))
                times = np.empty(repeats)
                for r in range(repeats):
                    rng = substream(master_seed, d_idx, N, n, r)
                    t0 = time.perf_counter()
                    sampler(rng)
                    times[r] = time.perf_counter() - t0
                rows.append(TimingRow(
                    design=spec.label, N=N, n=n,
                    mean_seconds=float(times.mean()),
                    sd_seconds=float(times.std(ddof=1)),
                    setup_seconds=float(setup),
                    repeats=repeats,
                ))
    return TimingReport(rows=tuple(rows))


# ---------------------------------------------------------------------------
# Config file parsing (JSON mirror of ComparisonConfig)
# ---------------------------------------------------------------------------

def config_from_json(doc: dict) -> ComparisonConfig:
    """Build a ComparisonConfig from its JSON representation."""
    frame_block = doc.get("frame")
    recipe = None
    frame_path = None
    frame_format = "csv"
    if isinstance(frame_block, dict) and "recipe" in frame_block:
        recipe = recipe_from_json(frame_block["recipe"])
    elif isinstance(frame_block, dict) and "path" in frame_block:
        frame_path = frame_block["path"]
        frame_format = frame_block.get("format", "csv")
    else:
        raise ParameterError("config 'frame' must hold a 'recipe' or a 'path'")
    return ComparisonConfig(
        designs=tuple(doc.get("designs", ())),
        sample_sizes=tuple(int(v) for v in doc.get("sample_sizes", ())),
        replicates=int(doc.get("replicates", 0)),
        outcomes=tuple(doc.get("outcomes", ())),
        master_seed=int(doc.get("master_seed", 0)),
        record_sbi=bool(doc.get("record_sbi", True)),
        realizations=int(doc.get("realizations", 1)),
        recipe=recipe,
        frame_path=frame_path,
        frame_format=frame_format,
        workers=int(doc.get("workers", 1)),
    )


def recipe_from_json(doc: dict) -> PopulationRecipe:
    specs = tuple(
        OutcomeSpec(
            name=o["name"],
            variogram_range=float(o["variogram_range"]),
            trend=bool(o.get("trend", False)),
            trend_share=float(o.get("trend_share", 0.8)),
            mean=float(o.get("mean", 5.0)),
            sd=float(o.get("sd", 1.0)),
        )
        for o in doc.get("outcomes", ())
    )
    kind = doc.get("kind")
    if kind == "grid":
        return PopulationRecipe(kind="grid", rows=int(doc["rows"]), cols=int(doc["cols"]),
                                spacing=float(doc.get("spacing", 1.0)),
                                outcome_specs=specs, seed=int(doc.get("seed", 0)))
    if kind == "neyman_scott":
        return PopulationRecipe(
            kind="neyman_scott",
            center_intensity=float(doc.get("center_intensity", 10.0)),
            mean_per_cluster=float(doc.get("mean_per_cluster", 100.0)),
            kernel_scale=float(doc["kernel_scale"]),
            target_n=int(doc["target_n"]),
            outcome_specs=specs, seed=int(doc.get("seed", 0)),
        )
    raise ParameterError(f"unknown recipe kind {kind!r}")
