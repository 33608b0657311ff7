"""Achievable-information-rate evaluation on the AWGN channel.

MI and GMI are computed by deterministic tensor-product Gauss-Hermite
quadrature of the expectation over the transmitted symbol and the complex
noise. A seeded Monte-Carlo estimator of the same expectations serves as an
independent cross-check. All internal log-densities are kept in nats with
log-sum-exp stabilization; conversion to bits happens at the API boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .constellation import LabeledConstellation

__all__ = [
    "ChannelSpec",
    "QuadratureSpec",
    "GridSpec",
    "RegionMap",
    "awgn_capacity",
    "awgn_log_likelihood",
    "mi",
    "gmi",
    "mi_mc",
    "gmi_mc",
    "decision_regions",
]

_LN2 = math.log(2.0)

# Rows per quadrature chunk are sized so the (rows, M, nodes^2) exponent
# tensor stays near this element count.
_CHUNK_ELEMS = 1 << 24


@dataclass(frozen=True)
class ChannelSpec:
    """AWGN channel at a given SNR, with Es = 1.

    n0 is the total noise variance per complex symbol, 1/snr_linear.
    """

    snr_db: float
    snr_linear: float
    n0: float

    def __post_init__(self):
        if not (self.snr_linear > 0.0 and self.n0 > 0.0):
            raise ValueError("snr_linear and n0 must be positive")
        if abs(self.snr_linear * self.n0 - 1.0) > 1e-12:
            raise ValueError("inconsistent channel spec: snr_linear * n0 != 1")

    @classmethod
    def from_snr_db(cls, snr_db: float) -> "ChannelSpec":
        s = 10.0 ** (snr_db / 10.0)
        return cls(snr_db=float(snr_db), snr_linear=s, n0=1.0 / s)


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Hermite nodes and weights, per real dimension."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("quadrature order must be at least 2")
        if np.any(self.weights <= 0.0):
            raise ValueError("quadrature weights must be positive")
        if abs(self.weights.sum() / math.sqrt(math.pi) - 1.0) > 1e-10:
            raise ValueError("quadrature weights do not integrate the Gaussian to 1")

    @classmethod
    def of_order(cls, order: int) -> "QuadratureSpec":
        nodes, weights = hermgauss(order)
        return cls(order=order, nodes=nodes, weights=weights)

    def grid_2d(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flattened 2-D product rule: node re/im parts and normalized weights.

        The weights include the 1/pi Gaussian normalization, so they sum to 1.
        """
        t = self.nodes
        w = self.weights
        zr = np.repeat(t, t.size)
        zi = np.tile(t, t.size)
        w2 = np.outer(w, w).ravel() / math.pi
        return zr, zi, w2


DEFAULT_QUAD_ORDER = 32


def default_quadrature() -> QuadratureSpec:
    return QuadratureSpec.of_order(DEFAULT_QUAD_ORDER)


def awgn_capacity(snr_db) -> np.ndarray | float:
    """Shannon capacity log2(1 + SNR) of the complex AWGN channel."""
    return np.log2(1.0 + 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0))


def awgn_log_likelihood(y, x, ch: ChannelSpec):
    """Log density (nats) of the circular complex Gaussian channel law.

    Returns -|y - x|^2 / n0 - ln(pi * n0); broadcasts over array inputs.
    """
    y = np.asarray(y, dtype=np.complex128)
    x = np.asarray(x, dtype=np.complex128)
    out = -(np.abs(y - x) ** 2) / ch.n0 - math.log(math.pi * ch.n0)
    if out.ndim == 0:
        return float(out)
    return out


def _scaled_points(lc: LabeledConstellation, ch: ChannelSpec) -> np.ndarray:
    return np.sqrt(ch.snr_linear) * lc.points


def _row_chunks(M: int, n_nodes: int):
    rows = max(1, min(M, _CHUNK_ELEMS // max(1, M * n_nodes)))
    for start in range(0, M, rows):
        yield start, min(start + rows, M)


def _exponents(u: np.ndarray, zr: np.ndarray, zi: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Exponent tensor a[j, p, z] for conditioning rows lo..hi.

    a = |z|^2 - |u_j - u_p + z|^2 expanded so the diagonal term is exactly 0;
    its maximum is bounded by max |z|^2, which keeps exp() finite for any
    practical quadrature order.
    """
    d = u[lo:hi, None] - u[None, :]
    a = -(d.real**2 + d.imag**2)
    a = a[:, :, None] - 2.0 * (
        d.real[:, :, None] * zr[None, None, :] + d.imag[:, :, None] * zi[None, None, :]
    )
    return a


def mi(lc: LabeledConstellation, ch: ChannelSpec, quad: QuadratureSpec | None = None) -> float:
    """Mutual information in bit/2D-symbol for uniform input over the points.

    The labeling is ignored. The result is clamped to [0, m] to absorb
    sub-1e-9 quadrature excursions past the theoretical range.
    """
    quad = quad or default_quadrature()
    u = _scaled_points(lc, ch)
    zr, zi, w2 = quad.grid_2d()
    M = lc.M
    acc = 0.0
    for lo, hi in _row_chunks(M, w2.size):
        a = _exponents(u, zr, zi, lo, hi)
        mx = a.max(axis=1)
        lse = np.log(np.exp(a - mx[:, None, :]).sum(axis=1)) + mx
        acc += float((lse * w2[None, :]).sum())
    value = math.log2(M) - acc / (M * _LN2)
    return min(max(value, 0.0), float(lc.m))


def gmi(lc: LabeledConstellation, ch: ChannelSpec, quad: QuadratureSpec | None = None) -> float:
    """Generalized mutual information in bit/2D-symbol.

    Sum over bit positions of the bit-wise information of the labeling,
    with each bit-conditional density the equiprobable mixture over the
    half-constellation sharing that bit value. Clamped to [0, m].
    """
    quad = quad or default_quadrature()
    u = _scaled_points(lc, ch)
    zr, zi, w2 = quad.grid_2d()
    M, m = lc.M, lc.m
    bits = lc.labeling.bit_matrix().astype(np.float64)
    acc = 0.0
    for lo, hi in _row_chunks(M, w2.size):
        a = _exponents(u, zr, zi, lo, hi)
        mx = a.max(axis=1)
        e = np.exp(a - mx[:, None, :])
        s = e.sum(axis=1)
        # Half sums accumulated directly per bit value; computing one half as
        # s - other would cancel catastrophically when the halves are
        # unbalanced by hundreds of orders of magnitude.
        h1 = np.tensordot(e, bits, axes=([1], [0]))
        h0 = np.tensordot(e, 1.0 - bits, axes=([1], [0]))
        own_mask = bits[lo:hi].astype(bool)
        own = np.where(own_mask[:, None, :], h1, h0)
        # the mx shift cancels in ln(s) - ln(own)
        gap = np.log(s)[:, :, None] - np.log(own)
        acc += float((gap.sum(axis=2) * w2[None, :]).sum())
    value = m - acc / (M * _LN2)
    return min(max(value, 0.0), float(m))


def _draw_received(lc, ch, n, rng):
    idx = rng.integers(0, lc.M, size=n)
    sigma = math.sqrt(ch.n0 / 2.0)
    noise = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    y = lc.points[idx] + sigma * noise
    return idx, y


def mi_mc(
    lc: LabeledConstellation,
    ch: ChannelSpec,
    n_samples: int,
    seed: int,
) -> tuple[float, float]:
    """Monte-Carlo MI estimate with its standard error.

    Deterministic for a fixed seed. Requires n_samples >= 10^4 so the
    reported standard error is meaningful.
    """
    from . import _kernels

    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 10^4")
    rng = np.random.default_rng(seed)
    vals = np.empty(n_samples)
    chunk = 1 << 17
    for lo in range(0, n_samples, chunk):
        n = min(chunk, n_samples - lo)
        idx, y = _draw_received(lc, ch, n, rng)
        _kernels.mc_mi_samples(
            lc.points.real.copy(), lc.points.imag.copy(),
            idx, y.real.copy(), y.imag.copy(), ch.n0, vals[lo : lo + n],
        )
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(n_samples))
    return est, se


def gmi_mc(
    lc: LabeledConstellation,
    ch: ChannelSpec,
    n_samples: int,
    seed: int,
) -> tuple[float, float]:
    """Monte-Carlo GMI estimate with its standard error; seeded like mi_mc."""
    from . import _kernels

    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 10^4")
    rng = np.random.default_rng(seed)
    vals = np.empty(n_samples)
    bits = lc.labeling.bit_matrix()
    chunk = 1 << 17
    for lo in range(0, n_samples, chunk):
        n = min(chunk, n_samples - lo)
        idx, y = _draw_received(lc, ch, n, rng)
        _kernels.mc_gmi_samples(
            lc.points.real.copy(), lc.points.imag.copy(), bits,
            idx, y.real.copy(), y.imag.copy(), ch.n0, vals[lo : lo + n],
        )
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(n_samples))
    return est, se


@dataclass(frozen=True)
class GridSpec:
    """Rectangular sampling of the complex plane (cell centers)."""

    re_min: float = -1.6
    re_max: float = 1.6
    im_min: float = -1.6
    im_max: float = 1.6
    cells: int = 512

    def __post_init__(self):
        if self.cells < 1:
            raise ValueError("grid must have at least one cell per axis")
        if not (self.re_max > self.re_min and self.im_max > self.im_min):
            raise ValueError("grid extent is empty")

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.linspace(self.re_min, self.re_max, self.cells),
            np.linspace(self.im_min, self.im_max, self.cells),
        )


@dataclass(frozen=True)
class RegionMap:
    """Decision regions sampled on a grid.

    mode "symbol": ``owner[iy, ix]`` is the index of the nearest point
    (hard maximum-likelihood / Voronoi regions).
    mode "bit": ``bit_layers[k, iy, ix]`` is the sign of the exact
    log-likelihood ratio of bit k+1 (1 where bit 1 is more likely).
    """

    mode: str
    re_axis: np.ndarray
    im_axis: np.ndarray
    owner: np.ndarray | None = None
    bit_layers: np.ndarray | None = None

    def to_csv(self, path) -> None:
        """Write ``re,im,owner`` (symbol) or ``re,im,b1,...,bm`` (bit) rows."""
        with open(path, "w") as fh:
            if self.mode == "symbol":
                fh.write("re,im,owner\n")
                for iy, im_v in enumerate(self.im_axis):
                    for ix, re_v in enumerate(self.re_axis):
                        fh.write(f"{re_v:.6g},{im_v:.6g},{self.owner[iy, ix]}\n")
            else:
                m = self.bit_layers.shape[0]
                fh.write("re,im," + ",".join(f"b{k + 1}" for k in range(m)) + "\n")
                for iy, im_v in enumerate(self.im_axis):
                    for ix, re_v in enumerate(self.re_axis):
                        bits = ",".join(str(self.bit_layers[k, iy, ix]) for k in range(m))
                        fh.write(f"{re_v:.6g},{im_v:.6g},{bits}\n")


def decision_regions(
    lc: LabeledConstellation,
    ch: ChannelSpec,
    grid: GridSpec | None = None,
    mode: str = "symbol",
) -> RegionMap:
    """Sample symbol-wise (Voronoi) or bit-wise (LLR-sign) decision regions.

    The grid must cover every constellation point with a margin of at least
    3 noise standard deviations.
    """
    if mode not in ("symbol", "bit"):
        raise ValueError(f"mode must be 'symbol' or 'bit', got {mode!r}")
    grid = grid or GridSpec()
    margin = 3.0 * math.sqrt(ch.n0)
    pts = lc.points
    if (
        pts.real.min() - grid.re_min < margin
        or grid.re_max - pts.real.max() < margin
        or pts.imag.min() - grid.im_min < margin
        or grid.im_max - pts.imag.max() < margin
    ):
        raise ValueError("grid extent does not cover all points with a 3-sigma margin")
    re_axis, im_axis = grid.axes()
    y = re_axis[None, :] + 1j * im_axis[:, None]

    if mode == "symbol":
        d2 = np.abs(y[:, :, None] - pts[None, None, :]) ** 2
        owner = np.argmin(d2, axis=2).astype(np.int32)
        return RegionMap(mode="symbol", re_axis=re_axis, im_axis=im_axis, owner=owner)

    m = lc.m
    bits = lc.labeling.bit_matrix().astype(bool)
    a = -(np.abs(y[:, :, None] - pts[None, None, :]) ** 2) / ch.n0
    mx = a.max(axis=2, keepdims=True)
    e = np.exp(a - mx)
    layers = np.empty((m, grid.cells, grid.cells), dtype=np.int8)
    for k in range(m):
        num = e[:, :, bits[:, k]].sum(axis=2)
        den = e[:, :, ~bits[:, k]].sum(axis=2)
        layers[k] = (np.log(num) - np.log(den) > 0.0).astype(np.int8)
    return RegionMap(mode="bit", re_axis=re_axis, im_axis=im_axis, bit_layers=layers)
