"""Rate analysis over SNR: baseline envelope, gains, and operating points.

The square-QAM GMI curves cross each other in SNR; their pointwise maximum
is the baseline every shaped format is compared against. Curves are
interpolated with monotone piecewise-cubic splines so rate targets can be
inverted to required SNRs by bracketed root finding.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .constellation import LabeledConstellation, square_qam
from .engine import ChannelSpec, QuadratureSpec, gmi, mi
from .optimizer import OptimizerConfig, optimize

__all__ = [
    "AirCurve",
    "BaselineEnvelope",
    "OperatingPoint",
    "qam_air_curve",
    "gs_air_curve",
    "qam_envelope",
    "relative_gain",
    "snr_gain_at_rate",
    "fec_operating_points",
    "switching_thresholds",
]

# Monotonicity slack for rate samples, absorbing quadrature noise.
RATE_TOL = 1e-7
# Root-finding resolution in dB for rate -> SNR inversion.
SNR_RESOLUTION_DB = 0.005


@dataclass(frozen=True)
class AirCurve:
    """Sampled (SNR, rate) pairs for one metric and one format."""

    metric: str
    format_id: str
    snr_db: np.ndarray
    rate: np.ndarray

    def __post_init__(self):
        snr = np.asarray(self.snr_db, dtype=float)
        rate = np.asarray(self.rate, dtype=float)
        if snr.ndim != 1 or snr.shape != rate.shape or snr.size < 2:
            raise ValueError("curve needs matching 1-D snr/rate arrays with >= 2 samples")
        if not np.all(np.isfinite(snr)) or not np.all(np.isfinite(rate)):
            raise ValueError("curve samples must be finite")
        if np.any(np.diff(snr) <= 0.0):
            raise ValueError("snr_db samples must be strictly increasing")
        if self.metric in ("mi", "gmi"):
            if np.any(rate < -RATE_TOL):
                raise ValueError("rates must be nonnegative")
            if np.any(np.diff(rate) < -RATE_TOL):
                raise ValueError("rate samples must be nondecreasing within 1e-7")
        for name, arr in (("snr_db", snr), ("rate", rate)):
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def _interp(self) -> PchipInterpolator:
        return PchipInterpolator(self.snr_db, self.rate, extrapolate=False)

    def rate_at(self, snr_db):
        """Monotone piecewise-cubic interpolation of the rate."""
        out = self._interp()(snr_db)
        if np.any(np.isnan(out)):
            raise ValueError(
                f"snr {snr_db} outside range of curve {self.format_id} "
                f"[{self.snr_db[0]}, {self.snr_db[-1]}]"
            )
        return float(out) if np.isscalar(snr_db) else out

    def snr_at(self, rate: float) -> float:
        """SNR in dB at which the curve reaches ``rate``."""
        lo, hi = float(self.rate[0]), float(self.rate[-1])
        if not (lo <= rate <= hi):
            raise ValueError(
                f"rate {rate} outside range of curve {self.format_id} [{lo}, {hi}]"
            )
        f = self._interp()
        return float(
            brentq(lambda s: float(f(s)) - rate, self.snr_db[0], self.snr_db[-1],
                   xtol=SNR_RESOLUTION_DB / 5.0)
        )

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("snr_db,rate\n")
            for s, r in zip(self.snr_db, self.rate):
                fh.write(f"{s:.6g},{r:.12g}\n")

    @classmethod
    def from_csv(cls, path, metric: str = "gmi", format_id: str = "") -> "AirCurve":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(metric=metric, format_id=format_id or str(path), snr_db=data[:, 0], rate=data[:, 1])


@dataclass(frozen=True)
class OperatingPoint:
    """One (format, FEC rate) combination and its required SNR."""

    M: int
    R: float
    target_rate: float
    required_snr_db: float | None
    metric: str
    error: str | None = None


@dataclass(frozen=True)
class BaselineEnvelope:
    """Pointwise maximum of the square-QAM GMI curves over a shared grid."""

    members: dict
    snr_db: np.ndarray
    rate: np.ndarray
    source: np.ndarray
    pieces: list
    switching_points: list

    def value_at(self, snr_db) -> float:
        return max(float(c._interp()(snr_db)) for c in self.members.values()
                   if c.snr_db[0] <= snr_db <= c.snr_db[-1])

    def as_curve(self) -> AirCurve:
        return AirCurve(metric="gmi", format_id="qam-envelope", snr_db=self.snr_db, rate=self.rate)


def qam_air_curve(
    M: int,
    metric: str,
    snr_grid_db: np.ndarray,
    quad: QuadratureSpec | None = None,
) -> AirCurve:
    """MI or GMI of Gray-labeled square QAM sampled over an SNR grid."""
    lc = square_qam(M)
    fn = mi if metric == "mi" else gmi
    rates = np.array([fn(lc, ChannelSpec.from_snr_db(s), quad) for s in snr_grid_db])
    return AirCurve(metric=metric, format_id=f"qam{M}", snr_db=np.asarray(snr_grid_db, float), rate=rates)


# Optimization settings used when tracing shaped-format curves over many SNR
# points: warm starts along the grid, neighbor-restricted pair sweeps, and a
# coarser step floor. Residual suboptimality is well below the tolerance
# budget of every envelope/gain comparison.
_CURVE_OPT = dict(
    max_outer_iters=30,
    step_shrink=0.5,
    tol=1e-5,
    step_floor=1e-3,
    inner_quad_order=12,
    neighbor_pairs=16,
    quad_order=32,
)


def gs_air_curve(
    M: int,
    objective: str,
    snr_grid_db: np.ndarray,
    seed: int = 0,
    first_restarts: int = 3,
    opt_overrides: dict | None = None,
    collect: dict | None = None,
) -> AirCurve:
    """AIR curve of geometrically shaped constellations, re-optimized per SNR.

    The lowest grid point starts from square QAM plus random restarts; each
    subsequent point warm-starts from the previous optimum and is re-anchored
    from QAM whenever the continuation falls behind the unshaped baseline.
    ``collect``, when given, receives snr -> optimized LabeledConstellation.
    """
    snr_grid_db = np.asarray(snr_grid_db, dtype=float)
    opts = dict(_CURVE_OPT)
    if opt_overrides:
        opts.update(opt_overrides)
    quad = QuadratureSpec.of_order(opts["quad_order"])
    fn = mi if objective == "mi" else gmi
    rates = []
    prev = None
    for i, snr in enumerate(snr_grid_db):
        if prev is None:
            cfg = OptimizerConfig(
                objective=objective, snr_db=float(snr), restarts=first_restarts,
                seed=seed, step_init=0.05, **opts,
            )
            lc, rep = optimize(M, cfg)
        else:
            cfg = OptimizerConfig(
                objective=objective, snr_db=float(snr), restarts=1,
                seed=seed + i, step_init=0.02, **opts,
            )
            lc, rep = optimize(prev, cfg)
            ch = ChannelSpec.from_snr_db(float(snr))
            anchor = fn(square_qam(M), ch, quad)
            if rep.final_objective < anchor:
                cfg2 = OptimizerConfig(
                    objective=objective, snr_db=float(snr), restarts=1,
                    seed=seed + i, step_init=0.05, **opts,
                )
                lc2, rep2 = optimize(M, cfg2)
                if rep2.final_objective > rep.final_objective:
                    lc, rep = lc2, rep2
        rates.append(rep.final_objective)
        prev = lc
        if collect is not None:
            collect[float(snr)] = lc
    # Continuation can leave sub-tolerance dips; lift them to keep the
    # sampled curve monotone within the optimizer's own tolerance.
    rates = np.maximum.accumulate(np.asarray(rates))
    return AirCurve(
        metric=objective,
        format_id=f"gs{M}-{objective}",
        snr_db=snr_grid_db,
        rate=rates,
    )


def qam_envelope(
    M_set,
    snr_grid_db: np.ndarray,
    quad: QuadratureSpec | None = None,
) -> BaselineEnvelope:
    """Baseline envelope of Gray square-QAM GMI curves and its switching points."""
    snr_grid_db = np.asarray(snr_grid_db, dtype=float)
    if snr_grid_db.size < 2 or np.any(np.diff(snr_grid_db) <= 0):
        raise ValueError("snr grid must be strictly increasing")
    if np.max(np.diff(snr_grid_db)) > 0.25 + 1e-12:
        raise ValueError("envelope grid step must be at most 0.25 dB")
    members = {int(M): qam_air_curve(int(M), "gmi", snr_grid_db, quad) for M in sorted(M_set)}
    stack = np.vstack([members[M].rate for M in sorted(members)])
    Ms = np.array(sorted(members))
    # argmax with ties resolved toward the smaller format
    best = np.argmax(stack, axis=0)
    rate = stack[best, np.arange(snr_grid_db.size)]
    source = Ms[best]

    pieces = []
    switching = []
    start = 0
    for i in range(1, snr_grid_db.size):
        if source[i] != source[start]:
            m_from, m_to = int(source[i - 1]), int(source[i])
            fa = members[m_from]._interp()
            fb = members[m_to]._interp()
            lo, hi = snr_grid_db[i - 1], snr_grid_db[i]
            diff = lambda s: float(fa(s)) - float(fb(s))
            if diff(lo) == 0.0:
                cross = float(lo)
            elif diff(lo) * diff(hi) < 0:
                cross = float(brentq(diff, lo, hi, xtol=1e-3))
            else:
                cross = float(0.5 * (lo + hi))
            pieces.append((float(snr_grid_db[start]), cross, int(source[start])))
            switching.append((cross, m_from, m_to))
            start = i
    pieces.append((float(snr_grid_db[start]), float(snr_grid_db[-1]), int(source[start])))
    return BaselineEnvelope(
        members=members,
        snr_db=snr_grid_db,
        rate=rate,
        source=source,
        pieces=pieces,
        switching_points=switching,
    )


def relative_gain(curve: AirCurve, baseline: BaselineEnvelope) -> AirCurve:
    """Pointwise relative AIR gain (rate - baseline) / baseline on the curve grid.

    Grid points where the baseline is zero are excluded (and reported via a
    warning).
    """
    base_curve = baseline.as_curve()
    if curve.snr_db.size != base_curve.snr_db.size or np.any(
        np.abs(curve.snr_db - base_curve.snr_db) > 1e-9
    ):
        # operate on the shared sub-grid of the curve within the baseline range
        mask = (curve.snr_db >= baseline.snr_db[0] - 1e-9) & (
            curve.snr_db <= baseline.snr_db[-1] + 1e-9
        )
        if not np.any(mask):
            raise ValueError("curve and baseline SNR grids do not overlap")
        snr = curve.snr_db[mask]
        rate = curve.rate[mask]
        base = np.array([baseline.value_at(s) for s in snr])
    else:
        snr = curve.snr_db
        rate = curve.rate
        base = baseline.rate
    ok = base > 0.0
    if not np.all(ok):
        warnings.warn(
            f"relative_gain: excluded {int((~ok).sum())} grid points with zero baseline",
            stacklevel=2,
        )
    eta = (rate[ok] - base[ok]) / base[ok]
    return AirCurve(
        metric=f"eta-{curve.metric}",
        format_id=curve.format_id,
        snr_db=snr[ok],
        rate=eta,
    )


def snr_gain_at_rate(curve_a: AirCurve, curve_b: AirCurve, rate: float) -> float:
    """SNR_b(rate) - SNR_a(rate) in dB; positive when b needs more SNR."""
    return curve_b.snr_at(rate) - curve_a.snr_at(rate)


def fec_operating_points(M: int, R_list, curve: AirCurve) -> list[OperatingPoint]:
    """Required SNR for each FEC rate R at net rate m*R on the given curve.

    Unreachable targets are returned with an error note instead of an SNR.
    """
    m = int(round(math.log2(M)))
    points = []
    for R in R_list:
        target = m * float(R)
        try:
            snr = curve.snr_at(target)
            points.append(OperatingPoint(M=M, R=float(R), target_rate=target,
                                         required_snr_db=snr, metric=curve.metric))
        except ValueError as exc:
            points.append(OperatingPoint(M=M, R=float(R), target_rate=target,
                                         required_snr_db=None, metric=curve.metric,
                                         error=str(exc)))
    return points


def _best_net_rate(curve: AirCurve, m: int, R_sorted, snr: float) -> float:
    # saturate above, infeasible below the sampled range
    if snr > curve.snr_db[-1]:
        value = float(curve.rate[-1])
    elif snr < curve.snr_db[0]:
        return 0.0
    else:
        value = float(curve._interp()(snr))
    best = 0.0
    for R in R_sorted:
        if value >= m * R - 1e-12:
            best = m * R
    return best


def switching_thresholds(curves: dict, R_list, grid_step_db: float = 0.01) -> list:
    """SNR boundaries of the regions where each format maximizes net rate.

    ``curves`` maps M to its AIR curve. The net rate of a format at a given
    SNR is m*R for the largest listed FEC rate R whose target m*R the curve
    reaches; the returned list holds (snr_db, from_M, to_M) transitions of
    the argmax, ties resolved toward the larger format.
    """
    if len(curves) < 2:
        return []
    R_sorted = sorted(float(R) for R in R_list)
    Ms = sorted(int(M) for M in curves)
    ms = {M: int(round(math.log2(M))) for M in Ms}
    lo = min(c.snr_db[0] for c in curves.values())
    hi = max(c.snr_db[-1] for c in curves.values())
    grid = np.arange(lo, hi + grid_step_db, grid_step_db)

    def winner(snr: float) -> int | None:
        best_m, best_net = None, 0.0
        for M in Ms:  # ascending; ties overwrite toward larger M
            net = _best_net_rate(curves[M], ms[M], R_sorted, snr)
            if net > 0.0 and net >= best_net:
                best_m, best_net = M, net
        return best_m

    transitions = []
    prev = winner(float(grid[0]))
    for s in grid[1:]:
        cur = winner(float(s))
        if cur != prev and cur is not None and prev is not None:
            transitions.append((float(s), int(prev), int(cur)))
        prev = cur if cur is not None else prev
    return transitions
