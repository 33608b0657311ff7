"""Geometric shaping of constellations by derivative-free coordinate search.

Point positions are optimized by a pairwise compass search: every sweep
visits point pairs, proposes eight single-point perturbations of each point
plus eight joint opposite perturbations, renormalizes each candidate to unit
average energy, and accepts the best strictly improving candidate. Labelings
(for the GMI objective) are optimized by binary switching: the best
improving label swap is applied repeatedly until none improves. The full
optimization alternates the two phases with a shrinking step schedule and
random restarts.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .constellation import (
    Constellation,
    LabeledConstellation,
    Labeling,
    normalize,
    square_qam,
)
from .engine import ChannelSpec, QuadratureSpec, gmi, mi

__all__ = [
    "OptimizerConfig",
    "OptimizerReport",
    "TracePoint",
    "random_start",
    "pairwise_sweep",
    "binary_switching",
    "optimize",
]

_LN2 = math.log(2.0)
_COMPASS = np.exp(1j * np.pi / 4.0 * np.arange(8))
_COLLISION = 1e-9
# Bound on |d^2 objective / d(ln snr)^2| used to budget the first-order
# energy correction in incremental (large-M) acceptance.
_J2 = 4.0


@dataclass(frozen=True)
class OptimizerConfig:
    """All knobs of one optimization run."""

    objective: str
    snr_db: float
    max_outer_iters: int = 50
    max_pairwise_sweeps: int = 20
    step_init: float = 0.05
    step_shrink: float = 0.5
    step_floor: float = 1e-5
    tol: float = 1e-6
    restarts: int = 4
    seed: int = 0
    quad_order: int = 32
    inner_quad_order: int = 16
    neighbor_pairs: int | None = None

    def __post_init__(self):
        if self.objective not in ("mi", "gmi"):
            raise ValueError(f"objective must be 'mi' or 'gmi', got {self.objective!r}")
        if self.max_outer_iters < 1 or self.max_pairwise_sweeps < 1 or self.restarts < 1:
            raise ValueError("iteration and restart counts must be at least 1")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if not (0.0 < self.step_shrink < 1.0):
            raise ValueError("step_shrink must be in (0, 1)")
        if self.step_init <= 0.0 or self.step_floor <= 0.0:
            raise ValueError("step sizes must be positive")
        if self.quad_order < 2 or self.inner_quad_order < 2:
            raise ValueError("quadrature orders must be at least 2")
        if self.neighbor_pairs is not None and self.neighbor_pairs < 1:
            raise ValueError("neighbor_pairs must be positive when given")


@dataclass(frozen=True)
class TracePoint:
    iteration: int
    phase: str
    objective: float


@dataclass
class OptimizerReport:
    """Audit trail of one optimization run (best restart)."""

    objective_name: str
    snr_db: float
    initial_objective: float
    final_objective: float
    trace: list[TracePoint]
    accepted_moves: int
    winning_restart: int
    restart_finals: list[float]
    wall_time_s: float

    def to_csv(self, path) -> None:
        """Trace rows ``iter,phase,objective`` plus one summary line."""
        with open(path, "w") as fh:
            fh.write("iter,phase,objective\n")
            for tp in self.trace:
                fh.write(f"{tp.iteration},{tp.phase},{tp.objective:.12g}\n")
            # wall time is recorded in the manifest, not here: the trace file
            # must be byte-identical across reruns with the same seed
            fh.write(
                f"# summary: objective={self.objective_name} snr_db={self.snr_db} "
                f"initial={self.initial_objective:.12g} final={self.final_objective:.12g} "
                f"accepted_moves={self.accepted_moves} winning_restart={self.winning_restart}\n"
            )


def random_start(M: int, seed: int) -> LabeledConstellation:
    """Circular-Gaussian points normalized to unit energy, identity labels."""
    if M < 2 or (M & (M - 1)) != 0:
        raise ValueError(f"M must be a power of two, got {M}")
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal(M) + 1j * rng.standard_normal(M)
    return LabeledConstellation(
        Constellation(normalize(pts)), Labeling(np.arange(M, dtype=np.int64))
    )


class _State:
    """Cached interaction state of one constellation at one SNR.

    Holds the exp tensor E[r, p, z], its row sums S, and the bit-half sums
    W1, kept exactly in sync with the (possibly unnormalized) working points
    at the fixed scale sqrt(snr). The tracked objective is exact after every
    rebuild; between rebuilds (incremental mode only) it carries a bounded
    first-order energy correction.
    """

    def __init__(self, lc: LabeledConstellation, ch: ChannelSpec, order: int, objective: str):
        self.ch = ch
        self.objective = objective
        self.is_gmi = objective == "gmi"
        quad = QuadratureSpec.of_order(order)
        self.zr, self.zi, self.w2 = quad.grid_2d()
        self.tmax = float(np.hypot(self.zr, self.zi).max())
        self.x = normalize(lc.points)
        self.labels = lc.labels.copy()
        self.M = lc.M
        self.m = lc.m
        mb = self.m if self.is_gmi else 0
        self.bits = np.ascontiguousarray(lc.labeling.bit_matrix()[:, : self.m])
        self.bits_k = self.bits if self.is_gmi else np.zeros((self.M, 0), dtype=np.uint8)
        self.sqrt_s = math.sqrt(ch.snr_linear)
        Z = self.w2.size
        self.E = np.empty((self.M, self.M, Z))
        self.S = np.empty((self.M, Z))
        self.W0 = np.empty((self.M, mb, Z))
        self.W1 = np.empty((self.M, mb, Z))
        iu = np.triu_indices(self.M)
        self.tri_i = np.ascontiguousarray(iu[0].astype(np.int64))
        self.tri_j = np.ascontiguousarray(iu[1].astype(np.int64))
        self._en1 = np.empty((24, self.M, Z))
        self._en2 = np.empty((24, self.M, Z))
        self._scratch = None
        self.energy = 1.0
        self.g = 0.0
        self.accepted = 0
        self.obj = 0.0
        self._rebuild()

    # -- cache maintenance -------------------------------------------------

    def _const(self) -> float:
        return float(self.m if self.is_gmi else math.log2(self.M))

    def _obj_from(self, S, W0, W1) -> float:
        acc = _kernels.objective_acc(S, W0, W1, self.bits_k, self.w2, self.is_gmi)
        return self._const() - acc / (self.M * _LN2)

    def _rebuild(self):
        self.x = normalize(self.x)
        self.energy = 1.0
        self.ur = np.ascontiguousarray(self.sqrt_s * self.x.real)
        self.ui = np.ascontiguousarray(self.sqrt_s * self.x.imag)
        _kernels.build_cache(
            self.ur, self.ui, self.zr, self.zi, self.bits_k,
            self.tri_i, self.tri_j, self.E, self.S, self.W0, self.W1,
        )
        self.obj = self._obj_from(self.S, self.W0, self.W1)

    def refresh_scale_gradient(self):
        acc = _kernels.scale_grad_acc(
            self.E, self.S, self.W0, self.W1, self.bits_k, self.ur, self.ui,
            self.zr, self.zi, self.w2, self.is_gmi,
        )
        self.g = -acc / (self.M * _LN2)

    def _row_cost(self, i: int) -> float:
        lns = np.log(self.S[i])
        if self.is_gmi:
            own = np.where(self.bits_k[i][:, None] != 0, self.W1[i], self.W0[i])
            c = self.m * lns - np.log(own).sum(axis=0)
        else:
            c = lns
        return float(c @ self.w2)

    def to_lc(self) -> LabeledConstellation:
        return LabeledConstellation(
            Constellation(normalize(self.x)), Labeling(self.labels.copy())
        )

    # -- pairwise sweep ----------------------------------------------------

    def _pairs(self, neighbors: int | None) -> np.ndarray:
        M = self.M
        if neighbors is None or neighbors >= M - 1:
            iu = np.triu_indices(M, k=1)
            return np.stack(iu, axis=1)
        d = np.abs(self.x[:, None] - self.x[None, :])
        np.fill_diagonal(d, np.inf)
        knn = np.argsort(d, axis=1)[:, :neighbors]
        a = np.repeat(np.arange(M), neighbors)
        b = knn.ravel()
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
        return pairs

    def _candidates(self, i1: int, i2: int, step: float):
        x1 = self.x[i1]
        x2 = self.x[i2]
        dirs = step * _COMPASS
        c1 = np.empty(24, dtype=np.complex128)
        c2 = np.empty(24, dtype=np.complex128)
        moved = np.zeros((24, 2), dtype=np.uint8)
        c1[0:8] = x1 + dirs
        c2[0:8] = x2
        moved[0:8, 0] = 1
        c1[8:16] = x1
        c2[8:16] = x2 + dirs
        moved[8:16, 1] = 1
        c1[16:24] = x1 + dirs
        c2[16:24] = x2 - dirs
        moved[16:24, :] = 1
        return c1, c2, moved

    def _collision_free(self, i1, i2, c1, c2, moved) -> np.ndarray:
        keep = np.ones(self.M, dtype=bool)
        keep[[i1, i2]] = False
        others = self.x[keep]
        ok = np.abs(c1 - c2) >= _COLLISION
        if others.size:
            d1 = np.abs(c1[:, None] - others[None, :]).min(axis=1)
            d2 = np.abs(c2[:, None] - others[None, :]).min(axis=1)
            ok &= np.where(moved[:, 0] == 1, d1 >= _COLLISION, True)
            ok &= np.where(moved[:, 1] == 1, d2 >= _COLLISION, True)
        return ok

    def sweep(self, step: float, neighbors: int | None, exact: bool, gate: float,
              drift_cap: float) -> float:
        """One pass over point pairs; returns the exact objective gain."""
        obj_start = self.obj
        pairs = self._pairs(neighbors)
        out = np.empty(24)
        cand_u = np.empty((24, 4))
        drift = 0.0
        dirty = False
        for i1, i2 in pairs:
            i1 = int(i1)
            i2 = int(i2)
            c1, c2, moved = self._candidates(i1, i2, step)
            ok = self._collision_free(i1, i2, c1, c2, moved)
            if not ok.any():
                continue
            cand_u[:, 0] = self.sqrt_s * c1.real
            cand_u[:, 1] = self.sqrt_s * c1.imag
            cand_u[:, 2] = self.sqrt_s * c2.real
            cand_u[:, 3] = self.sqrt_s * c2.imag
            old_rows_cost = np.array([self._row_cost(i1), self._row_cost(i2)])
            _kernels.screen_pair(
                self.ur, self.ui, self.E, self.S, self.W0, self.W1, self.bits_k,
                self.zr, self.zi, self.w2, self.tmax,
                i1, i2, cand_u, moved, self.is_gmi, old_rows_cost,
                self._en1, self._en2, out,
            )
            de = (
                moved[:, 0] * (np.abs(c1) ** 2 - np.abs(self.x[i1]) ** 2)
                + moved[:, 1] * (np.abs(c2) ** 2 - np.abs(self.x[i2]) ** 2)
            ) / self.M
            dln_e = np.log((self.energy + de) / self.energy)
            est = -out / (self.M * _LN2) - self.g * dln_e
            est[~ok] = -np.inf
            best = int(np.argmax(est))
            if not (est[best] > gate):
                continue
            if exact:
                xc = self.x.copy()
                xc[i1] = c1[best]
                xc[i2] = c2[best]
                new_obj = self._exact_candidate(xc)
                if new_obj > self.obj:
                    self._commit_scratch(xc, new_obj)
                    self.accepted += 1
            else:
                self._apply_incremental(i1, i2, c1[best], c2[best], moved[best], cand_u[best])
                self.obj += float(est[best])
                drift += abs(float(dln_e[best]))
                dirty = True
                self.accepted += 1
                if drift > drift_cap:
                    self._rebuild()
                    drift = 0.0
                    dirty = False
        if dirty:
            self._rebuild()
        return self.obj - obj_start

    def _ensure_scratch(self):
        if self._scratch is None:
            self._scratch = (
                np.empty_like(self.E),
                np.empty_like(self.S),
                np.empty_like(self.W0),
                np.empty_like(self.W1),
            )

    def _exact_candidate(self, x_cand: np.ndarray) -> float:
        self._ensure_scratch()
        E2, S2, W02, W12 = self._scratch
        xn = normalize(x_cand)
        ur = np.ascontiguousarray(self.sqrt_s * xn.real)
        ui = np.ascontiguousarray(self.sqrt_s * xn.imag)
        _kernels.build_cache(
            ur, ui, self.zr, self.zi, self.bits_k, self.tri_i, self.tri_j, E2, S2, W02, W12
        )
        self._cand_cache = (xn, ur, ui)
        return self._obj_from(S2, W02, W12)

    def _commit_scratch(self, x_cand: np.ndarray, new_obj: float):
        xn, ur, ui = self._cand_cache
        self.x = xn
        self.energy = 1.0
        self.ur = ur
        self.ui = ui
        E2, S2, W02, W12 = self._scratch
        self._scratch = (self.E, self.S, self.W0, self.W1)
        self.E, self.S, self.W0, self.W1 = E2, S2, W02, W12
        self.obj = new_obj

    def _apply_incremental(self, i1, i2, new1, new2, moved, cand_u_row):
        _kernels.apply_pair_move(
            self.ur, self.ui, self.E, self.S, self.W0, self.W1, self.bits_k,
            self.zr, self.zi, i1, i2,
            cand_u_row[0], cand_u_row[1], cand_u_row[2], cand_u_row[3],
            bool(moved[0]), bool(moved[1]),
        )
        de = 0.0
        if moved[0]:
            de += abs(new1) ** 2 - abs(self.x[i1]) ** 2
            self.x[i1] = new1
            self.ur[i1] = cand_u_row[0]
            self.ui[i1] = cand_u_row[1]
        if moved[1]:
            de += abs(new2) ** 2 - abs(self.x[i2]) ** 2
            self.x[i2] = new2
            self.ur[i2] = cand_u_row[2]
            self.ui[i2] = cand_u_row[3]
        self.energy += de / self.M

    # -- binary switching ---------------------------------------------------

    def bsa(self, tol: float) -> float:
        """Greedy best-improvement label-swap descent; exact gain returned."""
        if not self.is_gmi:
            raise ValueError("binary switching requires the GMI objective")
        obj_start = self.obj
        iu = np.triu_indices(self.M, k=1)
        pi = np.ascontiguousarray(iu[0].astype(np.int64))
        pj = np.ascontiguousarray(iu[1].astype(np.int64))
        out = np.empty(pi.size)
        swaps = 0
        while True:
            _kernels.bsa_scan(self.E, self.S, self.W0, self.W1, self.bits_k, self.w2, pi, pj, out)
            dg = -out / (self.M * _LN2)
            best = int(np.argmax(dg))
            if not (dg[best] > tol):
                break
            i = int(pi[best])
            j = int(pj[best])
            _kernels.bsa_apply(self.E, self.W0, self.W1, self.bits_k, i, j)
            self.bits_k[[i, j]] = self.bits_k[[j, i]]
            self.labels[[i, j]] = self.labels[[j, i]]
            self.obj += float(dg[best])
            self.accepted += 1
            swaps += 1
        if swaps:
            _kernels.recompute_halves(self.E, self.bits_k, self.W0, self.W1)
            self.obj = self._obj_from(self.S, self.W0, self.W1)
        return self.obj - obj_start


def _final_value(lc: LabeledConstellation, cfg: OptimizerConfig) -> float:
    ch = ChannelSpec.from_snr_db(cfg.snr_db)
    quad = QuadratureSpec.of_order(cfg.quad_order)
    return gmi(lc, ch, quad) if cfg.objective == "gmi" else mi(lc, ch, quad)


def pairwise_sweep(
    lc: LabeledConstellation,
    ch: ChannelSpec,
    objective: str,
    step: float,
    quad: QuadratureSpec | None = None,
) -> tuple[LabeledConstellation, float]:
    """One exact pass over all unordered point pairs.

    For each pair, the compass candidate set is evaluated with every other
    point fixed, each candidate renormalized to unit energy, and the best
    strictly improving candidate accepted. Returns the updated constellation
    and the total objective improvement (>= 0, in bit/2D-symbol).
    """
    if objective not in ("mi", "gmi"):
        raise ValueError(f"objective must be 'mi' or 'gmi', got {objective!r}")
    if step < 0.0:
        raise ValueError("step must be nonnegative")
    order = quad.order if quad is not None else 32
    state = _State(lc, ch, order, objective)
    state.refresh_scale_gradient()
    gain = state.sweep(step, neighbors=None, exact=True, gate=0.0, drift_cap=np.inf)
    return state.to_lc(), gain


def binary_switching(
    lc: LabeledConstellation,
    ch: ChannelSpec,
    quad: QuadratureSpec | None = None,
    tol: float = 1e-6,
) -> tuple[Labeling, float]:
    """Binary switching on the labeling; point positions are untouched.

    Returns the final labeling and the total GMI gain (>= 0).
    """
    order = quad.order if quad is not None else 32
    state = _State(lc, ch, order, "gmi")
    gain = state.bsa(tol)
    return Labeling(state.labels.copy()), gain


def _starts(start, cfg: OptimizerConfig) -> list[LabeledConstellation]:
    if isinstance(start, LabeledConstellation):
        base = start
        M = base.M
    else:
        M = int(start)
        try:
            base = square_qam(M)
        except ValueError:
            base = random_start(M, seed=cfg.seed + 1_000_003)
    rest = [random_start(M, seed=cfg.seed + r) for r in range(1, cfg.restarts)]
    return [base] + rest


def _dln_e_max(step: float, x_max: float, M: int) -> float:
    return 2.0 * (2.0 * x_max * step + step * step) / M


def _run_single(start_lc, cfg: OptimizerConfig):
    ch = ChannelSpec.from_snr_db(cfg.snr_db)
    state = _State(start_lc, ch, cfg.inner_quad_order, cfg.objective)
    exact_mode = state.M < 128
    neighbors = cfg.neighbor_pairs
    if neighbors is None and state.M >= 128:
        neighbors = 16
    trace = [TracePoint(0, "init", state.obj)]
    it = 0
    step = cfg.step_init
    floor_reached = False
    for _ in range(cfg.max_outer_iters):
        obj0 = state.obj
        stalled = False
        for _ in range(cfg.max_pairwise_sweeps):
            state.refresh_scale_gradient()
            if exact_mode:
                gate, cap = 0.0, np.inf
            else:
                dln = _dln_e_max(step, float(np.abs(state.x).max()), state.M)
                cap = max(1e-4, 1.1 * dln)
                gate = max(cfg.tol, 10.0 * _J2 * (cap + dln) ** 2)
            gain = state.sweep(step, neighbors, exact_mode, gate, cap)
            it += 1
            trace.append(TracePoint(it, "pairwise", state.obj))
            if gain < cfg.tol:
                stalled = True
                break
        if stalled:
            if step <= cfg.step_floor * (1.0 + 1e-12):
                floor_reached = True
            step = max(step * cfg.step_shrink, cfg.step_floor)
        if cfg.objective == "gmi":
            state.bsa(cfg.tol)
            it += 1
            trace.append(TracePoint(it, "bsa", state.obj))
        if state.obj - obj0 < cfg.tol and floor_reached:
            break
    return state.to_lc(), trace, state.accepted


def optimize(start, cfg: OptimizerConfig) -> tuple[LabeledConstellation, OptimizerReport]:
    """Maximize MI or GMI over point positions (and labeling, for GMI).

    ``start`` is either a LabeledConstellation or an integer M. The first
    restart begins from the given start (or square QAM when M admits one,
    else a random start); the remaining ``cfg.restarts - 1`` use seeded
    circular-Gaussian starts. The best final objective across restarts wins.
    Trace objectives are evaluated at ``cfg.inner_quad_order``; the reported
    initial/final values are re-evaluated at ``cfg.quad_order``.
    """
    t0 = time.perf_counter()
    starts = _starts(start, cfg)
    initial = _final_value(starts[0], cfg)
    best = None
    finals = []
    for r, s in enumerate(starts):
        lc_r, trace_r, accepted_r = _run_single(s, cfg)
        final_r = _final_value(lc_r, cfg)
        finals.append(final_r)
        if best is None or final_r > best[0]:
            best = (final_r, r, lc_r, trace_r, accepted_r)
    final, winner, lc, trace, accepted = best
    report = OptimizerReport(
        objective_name=cfg.objective,
        snr_db=cfg.snr_db,
        initial_objective=initial,
        final_objective=final,
        trace=trace,
        accepted_moves=accepted,
        winning_restart=winner,
        restart_finals=finals,
        wall_time_s=time.perf_counter() - t0,
    )
    return lc, report
