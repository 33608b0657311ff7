"""Plot-ready CSV bundles for the rate-analysis displays.

Each builder writes every curve, marker set, and region layer needed to
re-plot one display, plus a README mapping files to plot elements. Output is
data only; no plotting dependency.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .constellation import write_constellation_file
from .engine import ChannelSpec, GridSpec, QuadratureSpec, awgn_capacity, decision_regions
from .optimizer import OptimizerConfig, optimize
from .rate_analysis import (
    fec_operating_points,
    gs_air_curve,
    qam_envelope,
    relative_gain,
    snr_gain_at_rate,
    switching_thresholds,
)

FEC_RATES = (0.6, 0.67, 0.75, 0.8, 0.85)
ENVELOPE_M_SET = (16, 64, 256)

# Default SNR windows (dB) for the shaped-format curves.
GS_RANGES = {16: (2.0, 14.0), 64: (6.0, 18.0), 256: (11.0, 19.0)}


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in row) + "\n")


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(round((hi - lo) / step))
    return lo + step * np.arange(n + 1)


def build_curve_set(
    out: Path,
    snr_step: float = 0.5,
    envelope_step: float = 0.25,
    quad_order: int = 32,
    seed: int = 0,
    first_restarts: int = 3,
    gs_ranges: dict | None = None,
    envelope_range: tuple = (0.0, 26.0),
):
    """Compute the baseline envelope and all six shaped-format curves.

    Returns (envelope, curves) with curves keyed by (M, objective). Each is
    also written to ``out`` as CSV.
    """
    out.mkdir(parents=True, exist_ok=True)
    quad = QuadratureSpec.of_order(quad_order)
    env_grid = _grid(envelope_range[0], envelope_range[1], envelope_step)
    env = qam_envelope(ENVELOPE_M_SET, env_grid, quad)
    env.as_curve().to_csv(out / "baseline_envelope.csv")
    for M, curve in env.members.items():
        curve.to_csv(out / f"baseline_qam{M}.csv")
    _write_csv(
        out / "baseline_switching_points.csv",
        "snr_db,from_M,to_M",
        [(s, a, b) for s, a, b in env.switching_points],
    )
    ranges = gs_ranges or GS_RANGES
    curves = {}
    for M in ENVELOPE_M_SET:
        lo, hi = ranges[M]
        grid = _grid(lo, hi, snr_step)
        for objective in ("gmi", "mi"):
            c = gs_air_curve(
                M, objective, grid, seed=seed, first_restarts=first_restarts,
                opt_overrides={"quad_order": quad_order},
            )
            c.to_csv(out / f"gs{M}_{objective}.csv")
            curves[(M, objective)] = c
    return env, curves


def build_fig1(out: Path, **kwargs) -> None:
    """Rate-vs-SNR display: baseline pieces, shaped curves, capacity, markers."""
    out = Path(out)
    env, curves = build_curve_set(out, **kwargs)
    grid = env.snr_db
    _write_csv(out / "awgn_capacity.csv", "snr_db,rate",
               [(float(s), float(c)) for s, c in zip(grid, awgn_capacity(grid))])
    gains = []
    for M, rate_at, name in ((64, 3.14, "gs64_gmi"), (256, 5.15, "gs256_gmi")):
        c = curves[(M, "gmi")]
        try:
            gains.append((name, rate_at, snr_gain_at_rate(c, env.as_curve(), rate_at)))
        except ValueError:
            pass
    _write_csv(out / "snr_gain_arrows.csv", "curve,rate,gain_db", gains)
    (out / "README.md").write_text(
        "# Rate-vs-SNR data\n\n"
        "- `awgn_capacity.csv`: black capacity line log2(1+snr).\n"
        "- `baseline_envelope.csv`: pointwise-max Gray square-QAM GMI baseline (solid).\n"
        "- `baseline_qam{16,64,256}.csv`: individual baseline members.\n"
        "- `baseline_switching_points.csv`: black-diamond crossing SNRs.\n"
        "- `gs{M}_gmi.csv`: GMI of GMI-optimized constellations (dashed).\n"
        "- `gs{M}_mi.csv`: MI of MI-optimized constellations (dotted).\n"
        "- `snr_gain_arrows.csv`: horizontal-arrow SNR gains at fixed rate.\n"
    )


def build_fig2(
    out: Path,
    snr_db: float = 15.0,
    seed: int = 0,
    restarts: int = 4,
    quad_order: int = 32,
    grid_cells: int = 512,
) -> None:
    """GMI-optimized 64-point constellation, labeling, and bit decision regions."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = OptimizerConfig(objective="gmi", snr_db=snr_db, seed=seed,
                          restarts=restarts, quad_order=quad_order)
    lc, rep = optimize(64, cfg)
    write_constellation_file(lc, out / "ggs64.txt")
    rep.to_csv(out / "ggs64_trace.csv")
    ch = ChannelSpec.from_snr_db(snr_db)
    regions = decision_regions(lc, ch, GridSpec(cells=grid_cells), mode="bit")
    regions.to_csv(out / "ggs64_bit_regions.csv")
    (out / "README.md").write_text(
        "# GMI-optimized 64-point constellation\n\n"
        f"- `ggs64.txt`: optimized points and labeling at {snr_db} dB "
        f"(GMI {rep.final_objective:.4f} bit/2D-symbol).\n"
        "- `ggs64_bit_regions.csv`: per-cell LLR-sign decision b1..bm for each bit.\n"
        "- `ggs64_trace.csv`: optimizer audit trace.\n"
    )


def build_fig3(
    out: Path,
    snr_db: float = 15.0,
    seed: int = 0,
    restarts: int = 4,
    quad_order: int = 32,
    grid_cells: int = 512,
) -> None:
    """MI-optimized 64- and 256-point constellations with Voronoi regions."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ch = ChannelSpec.from_snr_db(snr_db)
    lines = ["# MI-optimized constellations\n"]
    for M in (64, 256):
        cfg = OptimizerConfig(objective="mi", snr_db=snr_db, seed=seed,
                              restarts=restarts, quad_order=quad_order)
        lc, rep = optimize(M, cfg)
        write_constellation_file(lc, out / f"igs{M}.txt")
        regions = decision_regions(lc, ch, GridSpec(cells=grid_cells), mode="symbol")
        regions.to_csv(out / f"igs{M}_voronoi.csv")
        lines.append(
            f"- `igs{M}.txt`: MI-optimized {M}-point set at {snr_db} dB "
            f"(MI {rep.final_objective:.4f} bit/2D-symbol).\n"
            f"- `igs{M}_voronoi.csv`: nearest-point (symbol-wise) regions.\n"
        )
    (out / "README.md").write_text("".join(lines))


def build_fig4(out: Path, **kwargs) -> None:
    """Relative-gain display: eta curves, FEC-rate markers, switching regions."""
    out = Path(out)
    env, curves = build_curve_set(out, **kwargs)
    marker_rows = []
    for (M, objective), curve in curves.items():
        eta = relative_gain(curve, env)
        eta.to_csv(out / f"eta_gs{M}_{objective}.csv")
        m = int(round(math.log2(M)))
        for op in fec_operating_points(M, FEC_RATES, curve):
            if op.required_snr_db is None:
                continue
            try:
                eta_at = float(eta._interp()(op.required_snr_db))
            except ValueError:
                continue
            if np.isnan(eta_at):
                continue
            marker_rows.append((M, objective, op.R, op.target_rate, op.required_snr_db, eta_at))
    _write_csv(out / "fec_markers.csv", "M,objective,R,target_rate,required_snr_db,eta", marker_rows)
    gmi_curves = {M: curves[(M, "gmi")] for M in ENVELOPE_M_SET}
    thresholds = switching_thresholds(gmi_curves, FEC_RATES)
    _write_csv(out / "format_switching_thresholds.csv", "snr_db,from_M,to_M", thresholds)
    (out / "README.md").write_text(
        "# Relative AIR gain data\n\n"
        "- `eta_gs{M}_{gmi,mi}.csv`: relative gain (rate-baseline)/baseline vs SNR\n"
        "  (dashed: GMI-optimized, dotted: MI-optimized).\n"
        "- `fec_markers.csv`: markers at the SNRs where each curve reaches m*R.\n"
        "- `format_switching_thresholds.csv`: boundaries of the shaded regions where\n"
        "  the net-rate-optimal format changes, using the listed FEC rates.\n"
        "- `baseline_*.csv`, `gs*_*.csv`: shared curve set (see rate display).\n"
    )
