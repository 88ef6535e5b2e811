"""Command-line interface for batch use.

Exit codes: 0 success, 1 runtime failure, 2 usage/parameter error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import diagnostics, estimation
from .designs import SampleDraw, make_sampler, parse_design, substream
from .distance import build_distances
from .errors import FrameFormatError, ParameterError, SpreadSampError
from .frame import (Frame, OutcomeSpec, PopulationRecipe, attach_gaussian_outcome,
                    build_population, generate_grid, read_frame, write_frame)
from .simulate import benchmark_timing, config_from_json, run_comparison


def _resolve_seed(text: str) -> int:
    if text == "random":
        return int(np.random.SeedSequence().entropy % (2 ** 63))
    try:
        seed = int(text)
    except ValueError:
        raise ParameterError(f"--seed must be an unsigned integer or 'random', got {text!r}") from None
    if seed < 0:
        raise ParameterError("--seed must be unsigned")
    return seed


def _parse_outcome_flag(text: str) -> OutcomeSpec:
    """Outcome grammar: name[:key=value,...] with keys trend, range, share, mean, sd."""
    name, _, rest = text.partition(":")
    if not name:
        raise ParameterError(f"outcome spec {text!r} lacks a name")
    opts = {}
    if rest:
        for part in rest.split(","):
            if "=" not in part:
                raise ParameterError(f"bad outcome option {part!r} in {text!r}")
            key, val = part.split("=", 1)
            opts[key.strip()] = val.strip()
    unknown = set(opts) - {"trend", "range", "share", "mean", "sd"}
    if unknown:
        raise ParameterError(f"unknown outcome option(s) {sorted(unknown)} in {text!r}")
    if "range" not in opts:
        raise ParameterError(f"outcome spec {text!r} needs range=<float>")
    trend = opts.get("trend", "false").lower()
    if trend not in ("true", "false"):
        raise ParameterError(f"trend must be true or false in {text!r}")
    try:
        return OutcomeSpec(
            name=name,
            variogram_range=float(opts["range"]),
            trend=(trend == "true"),
            trend_share=float(opts.get("share", 0.8)),
            mean=float(opts.get("mean", 5.0)),
            sd=float(opts.get("sd", 1.0)),
        )
    except ValueError as exc:
        raise ParameterError(f"bad numeric value in outcome spec {text!r}: {exc}") from None


def _emit(text: str, path) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    seed = _resolve_seed(args.seed)
    specs = tuple(_parse_outcome_flag(t) for t in args.outcome or ())
    if args.kind == "grid":
        if args.rows is None or args.cols is None:
            raise ParameterError("grid generation needs --rows and --cols")
        recipe = PopulationRecipe(kind="grid", rows=args.rows, cols=args.cols,
                                  spacing=args.spacing, outcome_specs=specs, seed=seed)
    else:
        if args.n is None:
            raise ParameterError("neyman-scott generation needs --n")
        recipe = PopulationRecipe(
            kind="neyman_scott", center_intensity=args.centers,
            mean_per_cluster=args.per_cluster, kernel_scale=args.scale,
            target_n=args.n, outcome_specs=specs, seed=seed)
    frame = build_population(recipe)
    if args.output is None:
        raise ParameterError("generate needs an output path (-o)")
    write_frame(frame, args.output, args.format)
    return 0


def cmd_sample(args) -> int:
    seed = _resolve_seed(args.seed)
    frame = read_frame(args.frame)
    if args.replicates < 1:
        raise ParameterError("--replicates must be >= 1")
    spec = parse_design(args.design, n=args.n, seed=seed)
    sampler = make_sampler(spec, frame)
    out = io.StringIO()
    out.write(f"# design: {spec.label}\n")
    out.write(f"# n: {spec.n}\n")
    out.write(f"# seed: {seed}\n")
    out.write("replicate,order,unit_id\n")
    for r in range(args.replicates):
        draw = sampler(substream(seed, r))
        for order, unit in enumerate(draw.selected):
            out.write(f"{r},{order},{int(unit)}\n")
    _emit(out.getvalue(), args.output)
    return 0


def cmd_diagnose(args) -> int:
    seed = _resolve_seed(args.seed)
    frame = read_frame(args.frame)
    spec = parse_design(args.design, n=args.n, seed=seed)
    est = diagnostics.estimate_inclusion(spec, frame, args.replicates,
                                         master_seed=seed, workers=args.threads)
    summary = {
        "design": spec.label,
        "N": frame.n,
        "n": args.n,
        "replicates": args.replicates,
        "seed": seed,
        "cv_pi": diagnostics.cv_pi(est, args.n, frame.n),
        "pi_hat_min": float(est.pi_hat.min()),
        "pi_hat_max": float(est.pi_hat.max()),
    }
    fit = None
    if args.fit_pij:
        fit = diagnostics.fit_pij_model(est, build_distances(frame))
        summary["fit"] = fit.__dict__
    if args.sbi:
        draw = make_sampler(spec, frame)(substream(seed, args.replicates))
        balance = diagnostics.spatial_balance_index(
            frame, draw, np.full(frame.n, args.n / frame.n))
        summary["sbi"] = {"sbi": balance.sbi, "nu": balance.nu.tolist(),
                          "sample": draw.selected.tolist()}
    if args.output:
        prefix = args.output
        D = build_distances(frame)
        diagnostics.export_pi(est, f"{prefix}_pi.csv")
        diagnostics.export_pij(est, D, f"{prefix}_pij.csv")
        if fit is not None:
            diagnostics.export_fit(fit, f"{prefix}_fit.json")
        with open(f"{prefix}_summary.json", "w") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    else:
        json.dump(summary, sys.stdout, indent=2)
        sys.stdout.write("\n")
    return 0


def _read_sample_csv(path) -> dict[int, list[int]]:
    blocks: dict[int, list[tuple[int, int]]] = {}
    with open(path, newline="") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["replicate", "order", "unit_id"]:
        raise FrameFormatError(f"{path}: expected header replicate,order,unit_id")
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            rep, order, unit = int(row[0]), int(row[1]), int(row[2])
        except (ValueError, IndexError):
            raise FrameFormatError(f"{path} row {lineno}: bad sample row {row!r}") from None
        blocks.setdefault(rep, []).append((order, unit))
    return {rep: [u for _, u in sorted(pairs)] for rep, pairs in sorted(blocks.items())}


def cmd_estimate(args) -> int:
    frame = read_frame(args.frame)
    blocks = _read_sample_csv(args.sample)
    names = args.outcome or frame.outcome_names
    if not names:
        raise ParameterError("the frame has no outcome columns")
    results = []
    for rep, units in blocks.items():
        draw = SampleDraw(np.asarray(units))
        n = draw.n
        pi = np.full(frame.n, n / frame.n)
        pij = None
        if args.pij == "srs":
            N = frame.n
            if n < 2 or N < 2:
                raise ParameterError("--pij srs needs n >= 2")
            pij = np.full((N, N), n * (n - 1) / (N * (N - 1)))
            np.fill_diagonal(pij, n / N)
        elif args.pij is not None:
            pij = _read_pij_csv(args.pij, frame.n, n / frame.n)
        for name in names:
            res = estimation.estimate_total(draw, frame.outcome(name), pi, pij)
            results.append({
                "replicate": rep, "outcome": name, "total_hat": res.total_hat,
                "variance_hat": res.variance_hat, "n_used": res.n_used,
                "min_sampled_pij": res.min_sampled_pij, "max_term": res.max_term,
            })
    _emit(json.dumps(results, indent=2) + "\n", args.output)
    return 0


def _read_pij_csv(path, N, diag):
    pij = np.zeros((N, N))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header][:3] != ["i", "j", "pij_hat"]:
            raise FrameFormatError(f"{path}: expected header i,j,pij_hat[,d_ij]")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                i, j, v = int(row[0]), int(row[1]), float(row[2])
            except (ValueError, IndexError):
                raise FrameFormatError(f"{path} row {lineno}: bad pair row") from None
            if not (0 <= i < N and 0 <= j < N):
                raise FrameFormatError(f"{path} row {lineno}: pair ({i},{j}) out of range")
            pij[i, j] = pij[j, i] = v
    np.fill_diagonal(pij, diag)
    return pij


def cmd_simulate(args) -> int:
    with open(args.config) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{args.config}: invalid JSON ({exc})") from None
    config = config_from_json(doc)
    if args.threads != 1:
        config = type(config)(**{**config.__dict__, "workers": args.threads})
    report = run_comparison(config)
    if args.output and args.format == "csv":
        report.write_csv(args.output)
    elif args.output:
        report.write_json(args.output)
    else:
        sys.stdout.write(report.to_json())
        sys.stdout.write("\n")
    return 0


def cmd_bench(args) -> int:
    seed = _resolve_seed(args.seed)
    designs = [t for t in (args.designs or "").split(",") if t]
    n_list = [int(v) for v in args.n_list.split(",") if v]
    N_list = [int(v) for v in args.N_list.split(",") if v]
    report = benchmark_timing(designs, N_list, n_list, repeats=args.repeats,
                              master_seed=seed)
    if args.output:
        report.write_csv(args.output)
    else:
        out = io.StringIO()
        out.write("design,N,n,mean_seconds,sd_seconds\n")
        for r in report.rows:
            out.write(f"{r.design},{r.N},{r.n},{r.mean_seconds!r},{r.sd_seconds!r}\n")
        sys.stdout.write(out.getvalue())
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spreadsamp",
        description="Spatially balanced sampling toolkit: generate populations, "
                    "draw samples, diagnose designs, estimate totals, run "
                    "comparisons and benchmarks.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", default="0",
                        help="unsigned integer or 'random' (default 0, reproducible)")
    common.add_argument("-o", "--output", default=None, help="output path")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads for replicate fan-out")

    p = sub.add_parser("generate", parents=[common], help="generate a population frame")
    p.add_argument("--kind", choices=("grid", "neyman-scott"), required=True)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--centers", type=float, default=10.0,
                   help="expected cluster centers in the unit square")
    p.add_argument("--per-cluster", type=float, default=100.0, dest="per_cluster")
    p.add_argument("--scale", type=float, default=0.01, help="cluster kernel sd")
    p.add_argument("--n", type=int, help="exact population size (neyman-scott)")
    p.add_argument("--outcome", action="append",
                   help="outcome spec name[:trend=bool,range=float,share=float,mean=float,sd=float]")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sample", parents=[common], help="draw samples from a frame")
    p.add_argument("--frame", required=True)
    p.add_argument("--design", required=True, help="srs | hpwd:gamma=G | "
                   "pwd:gamma=G,proposals=P | lpm:variant=1|2 | scps")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--replicates", type=int, default=1)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("diagnose", parents=[common],
                       help="replicate a design and estimate inclusion probabilities")
    p.add_argument("--frame", required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--replicates", type=int, required=True)
    p.add_argument("--fit-pij", action="store_true", dest="fit_pij",
                   help="fit the pair-frequency power law")
    p.add_argument("--sbi", action="store_true", help="report balance of one draw")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("estimate", parents=[common],
                       help="expansion estimates from a frame and a sample file")
    p.add_argument("--frame", required=True)
    p.add_argument("--sample", required=True, help="CSV replicate,order,unit_id")
    p.add_argument("--outcome", action="append", help="outcome name (default: all)")
    p.add_argument("--pij", default=None,
                   help="'srs' for the closed form, or a pair-frequency CSV")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", parents=[common], help="run a comparison config")
    p.add_argument("--config", required=True, help="JSON comparison config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", parents=[common], help="per-draw timing benchmark")
    p.add_argument("--designs", required=True, help="comma-separated design specs")
    p.add_argument("--N-list", required=True, dest="N_list")
    p.add_argument("--n-list", required=True, dest="n_list")
    p.add_argument("--repeats", type=int, default=30)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ParameterError, FrameFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SpreadSampError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())
