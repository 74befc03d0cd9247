"""
Command-line front end.

    laguerre-ebd design   coefficient report for one filter
    laguerre-ebd response frequency / impulse response CSVs
    laguerre-ebd simulate write a synthetic scene
    laguerre-ebd run      scene -> cascade -> frames, metrics, manifest
    laguerre-ebd sweep    output SNR over one swept parameter and several seeds

Exit codes: 0 success, 2 usage or configuration, 3 numerical, 4 I/O.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .. import __version__
from ..engine.errors import (
    ConditioningError,
    ConfigError,
    DimensionMismatch,
    DomainError,
    FrameFormatError,
    LaguerreError,
    NonFiniteInput,
    UnsupportedConfiguration,
)
from ..engine.pipeline import run_pipeline
from ..engine.response import (
    as_tf,
    exp_average_hpf,
    flatness_report,
    highpass_from_lowpass,
    impulse_response,
    noncausal_kernel,
    q_opt,
    response_table,
    vrf,
    vrf_numeric,
    weight_centroid,
)
from ..engine.serialization import (
    RunManifest,
    SweepPlan,
    load_manifest,
    read_frames,
    save_manifest,
    write_csv,
    write_frames,
    write_pgm,
)
from ..engine.synth import (
    FilterSpec,
    LdeCoeffs,
    NoncausalPair,
    Realization,
    table_analysis_filter,
    table_synthesis_filter,
)
from ..engine.frames import FrameStream
from ..engine.types import FilterRole, FrameRole, Sidedness
from ..scenario.experiment import run_experiment
from ..scenario.generator import generate, truth_rows
from .config import RunConfig, apply_override, load_config, parse_sweep, with_seed

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

METRIC_HEADER = ("index", "row", "col", "power", "v_x", "v_y", "reliable", "warmup", "snr_db")


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, DomainError, UnsupportedConfiguration)):
        return EXIT_USAGE
    if isinstance(exc, (ConditioningError, NonFiniteInput, DimensionMismatch)):
        return EXIT_NUMERIC
    if isinstance(exc, (OSError, FrameFormatError)):
        return EXIT_IO
    return EXIT_NUMERIC


def _filter_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--sigma", type=float, help="forgetting factor (negative)")
    g.add_argument("--p", type=float, dest="pole", help="pole radius in (0, 1)")
    p.add_argument("--q", type=float, default=0.0, help="synthesis offset")
    p.add_argument("--B", type=int, default=2, dest="degree", help="polynomial degree")
    side = p.add_mutually_exclusive_group()
    side.add_argument("--causal", dest="sidedness", action="store_const", const=Sidedness.CAUSAL)
    side.add_argument("--noncausal", dest="sidedness", action="store_const", const=Sidedness.TWO_SIDED)
    p.set_defaults(sidedness=Sidedness.CAUSAL)
    p.add_argument("--role", choices=[r.value for r in FilterRole], default=FilterRole.SYNTHESIS.value)
    p.add_argument("--k", type=int, default=0, help="analysis order")
    p.add_argument("--table", action="store_true", help="use the closed-form B = 2 coefficients")


def _spec_from_args(args: argparse.Namespace) -> FilterSpec:
    if args.pole is not None:
        p = args.pole
    elif args.sigma is not None:
        if not args.sigma < 0:
            raise DomainError(f"--sigma must be negative, got {args.sigma}")
        p = math.exp(args.sigma)
    else:
        p = math.exp(-0.25)
    return FilterSpec(p=p, q=args.q, degree=args.degree, sidedness=args.sidedness,
                      role=FilterRole(args.role), k=args.k)


def _realize(spec: FilterSpec, table: bool) -> Realization:
    if not table:
        return spec.realize()
    if spec.degree != 2:
        raise UnsupportedConfiguration("Closed-form coefficients exist for B = 2 only")
    if spec.role is FilterRole.ANALYSIS:
        return table_analysis_filter(spec.k, spec.p, spec.sidedness)
    if spec.role is FilterRole.SYNTHESIS:
        return table_synthesis_filter(spec.p, spec.q, spec.sidedness)
    raise UnsupportedConfiguration("No closed-form table for derivative filters")


def _halves(r: Realization) -> list[tuple[str, LdeCoeffs]]:
    if isinstance(r, NoncausalPair):
        return [("fwd", r.fwd), ("bwd", r.bwd)]
    return [("causal", r)]


def _fmt(v: np.ndarray) -> str:
    return "[" + ", ".join(f"{x:.4f}" for x in v) + "]"


def cmd_design(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    if args.qopt:
        qo = q_opt(spec.p)
        print(f"p = {spec.p:.6f} (sigma = {spec.sigma:.6f})")
        print(f"q_opt = {qo:.4f}")
        print(f"VRF(q_opt) = {vrf(spec.p, qo):.6f}")
        print(f"weight centroid = {weight_centroid(spec.p):.4f}")
        return EXIT_OK

    r = _realize(spec, args.table)
    order = max(spec.degree + 1, max(c.order for _, c in _halves(r)))
    rows = []
    print(f"{spec.role.value} filter, p = {spec.p:.6f} (sigma = {spec.sigma:.6f}), q = {spec.q:g}, "
          f"B = {spec.degree}, {spec.sidedness.value}")
    for name, c in _halves(r):
        b, a = c.dense(order)
        print(f"  {name:6s} [{c.direction.value}]")
        print(f"    b = {_fmt(b)}")
        print(f"    a = {_fmt(a)}")
        print(f"    pole radii = {_fmt(np.sort(np.abs(c.poles)))}")
        rows.append([name, c.direction.value, "b", *b])
        rows.append([name, c.direction.value, "a", *a])
    print(f"  DC gain = {r.dc_gain:.6f}")
    print(f"  VRF (sum h^2) = {vrf_numeric(r):.6f}")
    if spec.role is FilterRole.SYNTHESIS:
        if spec.sidedness.is_causal and spec.degree == 2:
            print(f"  VRF (closed form) = {vrf(spec.p, spec.q):.6f}")
            print(f"  q_opt = {q_opt(spec.p):.4f}")
        rep = flatness_report(r)
        print(f"  flat derivatives at w=0: {rep.orders} (even orders: {rep.even_orders})")
    if args.csv:
        header = ["half", "direction", "vector", *[f"m{i}" for i in range(order + 1)]]
        write_csv(args.csv, header, rows)
        logger.info("Wrote %s", args.csv)
    return EXIT_OK


def cmd_response(args: argparse.Namespace) -> int:
    out = Path(args.out)
    if args.baseline:
        p = math.exp(args.sigma) if args.sigma is not None else (args.pole or math.exp(-0.5))
        tf = exp_average_hpf(p)
        r = None
    else:
        spec = _spec_from_args(args)
        r = _realize(spec, args.table)
        tf = as_tf(r)
        if args.hpf:
            if int(spec.q) != spec.q or spec.q < 0:
                raise DomainError("High-pass mode needs a non-negative integer --q")
            tf = highpass_from_lowpass(r, int(spec.q))
    table = response_table(tf, args.points)
    written = [write_csv(out / "response.csv", ("f", "mag_db", "phase_rad"), table.tolist())]
    if r is not None and args.impulse > 0:
        if isinstance(r, NoncausalPair):
            half = args.impulse
            h = noncausal_kernel(r, half)
            m = np.arange(-half, half + 1)
        else:
            h = impulse_response(r, args.impulse)
            m = np.arange(args.impulse)
        written.append(write_csv(out / "impulse.csv", ("m", "h"), zip(m.tolist(), h.tolist())))
    for path in written:
        print(path)
    return EXIT_OK


def _resolve_run_config(args: argparse.Namespace) -> tuple[RunConfig, Optional[str], Optional[RunManifest]]:
    manifest_path = getattr(args, "manifest", None)
    if manifest_path:
        manifest = load_manifest(manifest_path)
        return RunConfig.from_sections(manifest.config), manifest.config_path, manifest
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    s1, s2, pl = cfg.pipeline.stage1, cfg.pipeline.stage2, cfg.pipeline
    if getattr(args, "bypass_stage1", False):
        s1 = replace(s1, bypass=True)
    if getattr(args, "omega", None):
        s2 = replace(s2, omega=args.omega)
    if getattr(args, "workers", None):
        pl = replace(pl, workers=args.workers)
    if getattr(args, "pgm", False):
        cfg = replace(cfg, pgm=True)
    if getattr(args, "matched", None):
        cfg = replace(cfg, matched=args.matched)
    cfg = replace(cfg, pipeline=replace(pl, stage1=s1, stage2=s2))
    return cfg, (str(args.config) if args.config else None), None


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg, cfg_path, _ = _resolve_run_config(args)
    out = Path(args.out)
    stream, truth = generate(cfg.scenario)
    paths = [
        write_frames(out / "frames.lebd", stream),
        write_csv(out / "truth.csv", ("index", "x", "y", "v_x", "v_y"), truth_rows(truth)),
    ]
    manifest = RunManifest(command="simulate", config=cfg.to_sections(), seed=cfg.scenario.seed,
                           output_dir=str(out), version=__version__, config_path=cfg_path)
    manifest.record_outputs(paths)
    save_manifest(out / "manifest.json", manifest)
    print(out / "manifest.json")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg, cfg_path, replayed = _resolve_run_config(args)
    out = Path(args.out)
    paths: list[Path] = []
    source = args.input
    if source is None and replayed is not None:
        source = replayed.verify_input()
    if source:
        stream = read_frames(source)
        result = None
        run = run_pipeline(stream, cfg.pipeline)
        snr_by_index: dict[int, float] = {}
    else:
        matched = () if cfg.matched == "none" else (cfg.matched,)
        result = run_experiment(cfg.scenario, cfg.pipeline, matched=matched)
        run = result.run
        snr_by_index = {m.index: m.snr_db for m in result.measurements}
        paths.append(write_csv(out / "truth.csv", ("index", "x", "y", "v_x", "v_y"), truth_rows(result.truth)))

    if cfg.write_frames:
        for name, frames, role in (("raw", run.raw, FrameRole.RAW), ("background", run.background, FrameRole.BACKGROUND),
                                   ("residual", run.residual, FrameRole.RESIDUAL), ("power", run.power, FrameRole.POWER)):
            if frames:
                paths.append(write_frames(out / f"{name}.lebd", FrameStream.from_frames(frames, role=role)))
    if cfg.pgm and run.records:
        last = len(run.records) - 1
        quartet = [("raw", run.raw), ("background", run.background), ("residual", run.residual), ("power", run.power)]
        for name, frames in quartet:
            if frames:
                paths.append(write_pgm(out / f"{name}.pgm", frames[last].crop(cfg.pipeline.crop)
                                       if 2 * cfg.pipeline.crop < min(frames[last].shape) else frames[last]))

    rows = [(r.index, r.row, r.col, f"{r.power:.9g}", r.v_x, r.v_y, int(r.reliable), int(r.warmup),
             snr_by_index.get(r.index)) for r in run.records]
    paths.append(write_csv(out / "metrics.csv", METRIC_HEADER, rows))

    if result is not None:
        summary = [("output_snr_db", result.snr_db), ("true_v_x", result.truth.v_tgt[0]),
                   ("true_v_y", result.truth.v_tgt[1])]
        mv = run.mean_velocity()
        summary += [("mean_v_x", None if mv is None else mv[0]), ("mean_v_y", None if mv is None else mv[1])]
        for name, score in result.baselines.items():
            summary.append((f"{name}_snr_db", score.snr_db))
            if score.velocity is not None:
                summary += [(f"{name}_v_x", score.velocity[0]), (f"{name}_v_y", score.velocity[1])]
        paths.append(write_csv(out / "summary.csv", ("metric", "value"), summary))
        print(f"output SNR: {'n/a' if result.snr_db is None else f'{result.snr_db:.2f} dB'}")

    manifest = RunManifest(command="run", config=cfg.to_sections(), seed=cfg.scenario.seed,
                           output_dir=str(out), version=__version__, config_path=cfg_path)
    if source:
        manifest.record_input(source)
    manifest.record_outputs(paths)
    save_manifest(out / "manifest.json", manifest)
    print(out / "manifest.json")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg, cfg_path, replayed = _resolve_run_config(args)
    if args.sweep:
        key, values = parse_sweep(args.sweep)
        plan = SweepPlan(key=key, values=tuple(values), seeds=args.seeds, compare=tuple(args.compare or ()))
    elif replayed is not None and replayed.sweep is not None:
        plan = replayed.sweep
    else:
        raise ConfigError("sweep needs --sweep key=v1,v2,... or a sweep manifest")
    key, values, matched = plan.key, plan.values, plan.compare
    base_seed = cfg.scenario.seed
    rows = []
    for value in values:
        point = apply_override(cfg, key, value)
        snrs, vxs, vys = [], [], []
        baseline: dict[str, list[float]] = {m: [] for m in matched}
        for s in range(plan.seeds):
            seeded = point if key == "seed" else with_seed(point, base_seed + s)
            res = run_experiment(seeded.scenario, seeded.pipeline, matched=matched, keep_frames=False)
            if res.snr_db is not None:
                snrs.append(res.snr_db)
            mv = res.run.mean_velocity()
            if mv is not None:
                vxs.append(mv[0])
                vys.append(mv[1])
            for m in matched:
                if res.baselines[m].snr_db is not None:
                    baseline[m].append(res.baselines[m].snr_db)
            if key == "seed":
                break
        row = [key, value, len(snrs),
               float(np.mean(snrs)) if snrs else None,
               float(np.std(snrs)) if snrs else None,
               float(np.mean(vxs)) if vxs else None,
               float(np.mean(vys)) if vys else None]
        row += [float(np.mean(baseline[m])) if baseline[m] else None for m in matched]
        rows.append(row)
        print(f"{key}={value}: mean SNR {row[3] if row[3] is None else f'{row[3]:.2f}'} dB over {len(snrs)} seeds")
    header = ["key", "value", "n", "mean_snr_db", "std_snr_db", "mean_v_x", "mean_v_y",
              *[f"{m}_snr_db" for m in matched]]
    out = Path(args.out)
    path = write_csv(out / "sweep.csv", header, rows)
    manifest = RunManifest(command="sweep", config=cfg.to_sections(), seed=base_seed, output_dir=str(out),
                           version=__version__, config_path=cfg_path, sweep=plan)
    manifest.record_outputs([path])
    save_manifest(out / "manifest.json", manifest)
    print(path)
    return EXIT_OK


def _run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI run configuration")
    p.add_argument("--seed", type=int, help="scenario seed")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--workers", type=int, help="threads for row/column filtering")
    p.add_argument("--bypass-stage1", action="store_true", help="feed raw frames to stage 2")
    p.add_argument("--omega", choices=["full", "subset7"], help="stage-2 bin set")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="laguerre-ebd", description="Recursive Laguerre filters and "
                                     "the two-stage enhance-before-detect cascade.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="coefficient report for one filter")
    _filter_args(p)
    p.add_argument("--qopt", action="store_true", help="report the VRF-optimal offset only")
    p.add_argument("--csv", type=Path, help="also write the coefficients as CSV")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("response", help="frequency and impulse response CSVs")
    _filter_args(p)
    p.add_argument("--hpf", action="store_true", help="residual path z^-q - H(z)")
    p.add_argument("--baseline", action="store_true", help="two-sided exponential-average subtraction (B = 0)")
    p.add_argument("--points", type=int, default=257, help="frequency grid size on [0, 0.5]")
    p.add_argument("--impulse", type=int, default=64, help="impulse response length (0 to skip)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.set_defaults(func=cmd_response)

    p = sub.add_parser("simulate", help="write a synthetic scene")
    p.add_argument("--config", type=Path, help="INI run configuration")
    p.add_argument("--seed", type=int, help="scenario seed")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run the cascade on a scene or a frame file")
    _run_args(p)
    p.add_argument("--input", type=Path, help="frame file to process instead of a generated scene")
    p.add_argument("--pgm", action="store_true", help="export the last frame of each stage as PGM")
    p.add_argument("--matched", choices=["none", "clairvoyant", "grid3", "grid5"],
                   help="score a matched-filter baseline on the same residual")
    p.add_argument("--manifest", type=Path, help="replay the configuration stored in a manifest")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="mean output SNR over one swept parameter")
    _run_args(p)
    p.add_argument("--sweep", help="key=v1,v2,... (qz, psf, clutter_speed, clutter_freq, "
                                   "noise, stage1_degree, seed)")
    p.add_argument("--seeds", type=int, default=1, help="seeds per point, counted up from --seed")
    p.add_argument("--compare", action="append", choices=["clairvoyant", "grid3", "grid5"],
                   help="also score a matched-filter bank (repeatable)")
    p.add_argument("--manifest", type=Path, help="replay the sweep stored in a manifest")
    p.set_defaults(func=cmd_sweep)
    return parser


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    configure_logging(args.verbose)
    if getattr(args, "seeds", 1) < 1:
        print("error: --seeds must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (LaguerreError, OSError) as exc:
        code = exit_code_for(exc)
        logger.debug("Command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return code
