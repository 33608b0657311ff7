"""Command-line entry point binding evaluation, shaping, and figure export.

Every command writes a ``manifest.json`` beside its outputs echoing the
resolved configuration, seeds, tool version, and paths, so a run can be
reproduced from the manifest alone (bit-for-bit with ``--threads 1``).

Exit codes: 0 success, 1 computational failure, 2 input/validation error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, figures
from .constellation import (
    ConstellationFormatError,
    read_constellation_file,
    validate,
    write_constellation_file,
)
from .engine import ChannelSpec, QuadratureSpec, gmi, mi
from .optimizer import OptimizerConfig, optimize

EXIT_OK = 0
EXIT_COMPUTE = 1
EXIT_INPUT = 2


def _parse_snr_list(text: str) -> np.ndarray:
    """Either a single value '15' or an inclusive range 'a:b:step'."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"SNR range must be 'start:stop:step', got {text!r}")
        lo, hi, step = (float(p) for p in parts)
        if step <= 0 or hi < lo:
            raise ValueError(f"invalid SNR range {text!r}")
        n = int(round((hi - lo) / step))
        return lo + step * np.arange(n + 1)
    return np.array([float(text)])


def _write_manifest(out_dir: Path, args: argparse.Namespace, config: dict,
                    seeds: list, inputs: list, outputs: list, wall_time: float) -> None:
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:] if sys.argv[0].endswith(("airshape", "cli.py")) else None,
        "config": config,
        "seeds": seeds,
        "version": __version__,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "wall_time_s": wall_time,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_evaluate(args) -> int:
    t0 = time.perf_counter()
    out_dir = Path(args.out)
    try:
        snrs = _parse_snr_list(args.snr)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        lc = read_constellation_file(args.input)
    except (ConstellationFormatError, OSError) as exc:
        print(f"error: cannot read {args.input}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    violations = validate(lc)
    if violations:
        for v in violations:
            print(f"validation: {v}", file=sys.stderr)
        return EXIT_INPUT
    out_dir.mkdir(parents=True, exist_ok=True)
    quad = QuadratureSpec.of_order(args.quad_order)
    fn = mi if args.metric == "mi" else gmi
    try:
        rows = [(float(s), fn(lc, ChannelSpec.from_snr_db(float(s)), quad)) for s in snrs]
    except Exception as exc:  # computational failure
        print(f"error: evaluation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    curve_path = out_dir / "curve.csv"
    with open(curve_path, "w") as fh:
        fh.write("snr_db,rate\n")
        for s, r in rows:
            fh.write(f"{s:.6g},{r:.17g}\n")
    config = {"input": str(args.input), "snr": args.snr, "metric": args.metric,
              "quad_order": args.quad_order, "threads": args.threads}
    _write_manifest(out_dir, args, config, seeds=[], inputs=[args.input],
                    outputs=[curve_path], wall_time=time.perf_counter() - t0)
    return EXIT_OK


def _cmd_optimize(args) -> int:
    t0 = time.perf_counter()
    out_dir = Path(args.out)
    try:
        cfg = OptimizerConfig(
            objective=args.objective,
            snr_db=float(args.snr),
            max_outer_iters=args.max_outer_iters,
            max_pairwise_sweeps=args.max_pairwise_sweeps,
            step_init=args.step_init,
            step_shrink=args.step_shrink,
            step_floor=args.step_floor,
            tol=args.tol,
            restarts=args.restarts,
            seed=args.seed,
            quad_order=args.quad_order,
            inner_quad_order=args.inner_quad_order,
            neighbor_pairs=args.neighbor_pairs,
        )
        M = int(args.M)
        if M < 4 or (M & (M - 1)) != 0:
            raise ValueError(f"M must be a power of two >= 4, got {M}")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        lc, report = optimize(M, cfg)
    except Exception as exc:
        print(f"error: optimization failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    const_path = out_dir / "constellation.txt"
    report_path = out_dir / "report.csv"
    write_constellation_file(lc, const_path)
    report.to_csv(report_path)
    config = {k: getattr(args, k) for k in (
        "M", "snr", "objective", "seed", "restarts", "tol", "quad_order",
        "inner_quad_order", "step_init", "step_shrink", "step_floor",
        "max_outer_iters", "max_pairwise_sweeps", "neighbor_pairs", "threads")}
    _write_manifest(out_dir, args, config,
                    seeds=[cfg.seed + r for r in range(cfg.restarts)],
                    inputs=[], outputs=[const_path, report_path],
                    wall_time=time.perf_counter() - t0)
    print(f"final {cfg.objective} = {report.final_objective:.6f} bit/2D-symbol "
          f"(restart {report.winning_restart})")
    return EXIT_OK


def _cmd_figures(args) -> int:
    t0 = time.perf_counter()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        if args.figure in ("fig1", "fig4"):
            kwargs = dict(
                snr_step=args.snr_step,
                envelope_step=args.envelope_step,
                quad_order=args.quad_order,
                seed=args.seed,
                first_restarts=args.first_restarts,
            )
            if args.snr_min is not None and args.snr_max is not None:
                kwargs["envelope_range"] = (args.snr_min, args.snr_max)
                span = {M: (max(args.snr_min, figures.GS_RANGES[M][0]),
                            min(args.snr_max, figures.GS_RANGES[M][1]))
                        for M in figures.ENVELOPE_M_SET}
                kwargs["gs_ranges"] = span
            builder = figures.build_fig1 if args.figure == "fig1" else figures.build_fig4
            builder(out_dir, **kwargs)
        elif args.figure == "fig2":
            figures.build_fig2(out_dir, snr_db=float(args.snr), seed=args.seed,
                               restarts=args.restarts, quad_order=args.quad_order,
                               grid_cells=args.grid_cells)
        else:
            figures.build_fig3(out_dir, snr_db=float(args.snr), seed=args.seed,
                               restarts=args.restarts, quad_order=args.quad_order,
                               grid_cells=args.grid_cells)
    except Exception as exc:
        print(f"error: figure build failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    config = {k: getattr(args, k, None) for k in (
        "figure", "snr", "snr_step", "envelope_step", "snr_min", "snr_max",
        "quad_order", "seed", "restarts", "first_restarts", "grid_cells", "threads")}
    outputs = sorted(str(p) for p in out_dir.iterdir() if p.name != "manifest.json")
    _write_manifest(out_dir, args, config, seeds=[args.seed], inputs=[],
                    outputs=outputs, wall_time=time.perf_counter() - t0)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="airshape",
        description="Achievable information rates and geometric shaping on the AWGN channel",
    )
    ap.add_argument("--version", action="version", version=f"airshape {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="numba thread count (1 = bit-exact reproducibility)")
        p.add_argument("--quad-order", dest="quad_order", type=int, default=32)
        p.add_argument("--seed", type=int, default=0)

    pe = sub.add_parser("evaluate", help="evaluate MI/GMI of a constellation file")
    pe.add_argument("--input", required=True, help="constellation file")
    pe.add_argument("--snr", required=True, help="SNR in dB: single value or start:stop:step")
    pe.add_argument("--metric", choices=("mi", "gmi"), default="gmi")
    common(pe)
    pe.set_defaults(func=_cmd_evaluate)

    po = sub.add_parser("optimize", help="geometrically shape a constellation")
    po.add_argument("--M", required=True, type=int, help="constellation size (power of two)")
    po.add_argument("--snr", required=True, type=float, help="design SNR in dB")
    po.add_argument("--objective", choices=("mi", "gmi"), required=True)
    po.add_argument("--restarts", type=int, default=4)
    po.add_argument("--tol", type=float, default=1e-6)
    po.add_argument("--step-init", dest="step_init", type=float, default=0.05)
    po.add_argument("--step-shrink", dest="step_shrink", type=float, default=0.5)
    po.add_argument("--step-floor", dest="step_floor", type=float, default=1e-5)
    po.add_argument("--max-outer-iters", dest="max_outer_iters", type=int, default=50)
    po.add_argument("--max-pairwise-sweeps", dest="max_pairwise_sweeps", type=int, default=20)
    po.add_argument("--inner-quad-order", dest="inner_quad_order", type=int, default=16)
    po.add_argument("--neighbor-pairs", dest="neighbor_pairs", type=int, default=None)
    common(po)
    po.set_defaults(func=_cmd_optimize)

    pf = sub.add_parser("figures", help="export plot-ready CSV bundles")
    pf.add_argument("--figure", choices=("fig1", "fig2", "fig3", "fig4"), required=True)
    pf.add_argument("--snr", default="15", help="design SNR for constellation displays")
    pf.add_argument("--snr-step", dest="snr_step", type=float, default=0.5)
    pf.add_argument("--envelope-step", dest="envelope_step", type=float, default=0.25)
    pf.add_argument("--snr-min", dest="snr_min", type=float, default=None)
    pf.add_argument("--snr-max", dest="snr_max", type=float, default=None)
    pf.add_argument("--restarts", type=int, default=4)
    pf.add_argument("--first-restarts", dest="first_restarts", type=int, default=3)
    pf.add_argument("--grid-cells", dest="grid_cells", type=int, default=512)
    common(pf)
    pf.set_defaults(func=_cmd_figures)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_INPUT
        import numba

        numba.set_num_threads(args.threads)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
