"""Constellation and labeling data model, canonical generators, and validation.

A constellation is a set of M complex points with uniform symbol probabilities,
normalized to unit average energy so that the channel SNR equals Es/N0 with
Es = 1. A labeling is a bijection between point indices and m-bit binary
labels, stored as integers with the first bit of the label in the most
significant position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ENERGY_TOL = 1e-12

__all__ = [
    "ENERGY_TOL",
    "Constellation",
    "Labeling",
    "LabeledConstellation",
    "Violation",
    "ConstellationFormatError",
    "gray_labeling",
    "square_qam",
    "normalize",
    "validate",
    "read_constellation_file",
    "write_constellation_file",
]


class ConstellationFormatError(ValueError):
    """Raised when a constellation file cannot be parsed.

    Attributes:
        line: 1-based line number of the offending line, or None for
            file-level problems.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Constellation:
    """M complex points with implicit uniform probabilities.

    The container itself does not enforce its invariants (unit average
    energy, power-of-two size, finite coordinates); use :func:`validate`
    to check them. Generators in this module always return valid objects.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.complex128)
        if pts.ndim != 1:
            raise ValueError("points must be a 1-D sequence of complex numbers")
        object.__setattr__(self, "points", _readonly(pts))

    @property
    def M(self) -> int:
        return self.points.size

    @property
    def energy(self) -> float:
        """Average symbol energy (1/M) * sum |x_i|^2."""
        return float(np.mean(np.abs(self.points) ** 2))


@dataclass(frozen=True)
class Labeling:
    """Bijective map from point indices to m-bit labels.

    ``labels[i]`` is the label of point i as an integer in [0, M). Bit 1 of
    the label (the first bit) sits in the most significant position, so the
    k-th bit of point i is ``(labels[i] >> (m - k)) & 1`` for k in 1..m.
    """

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        if lab.ndim != 1:
            raise ValueError("labels must be a 1-D integer sequence")
        object.__setattr__(self, "labels", _readonly(lab))

    @property
    def M(self) -> int:
        return self.labels.size

    @property
    def m(self) -> int:
        """Bits per symbol, log2(M)."""
        return max(1, int(round(math.log2(self.M))))

    def bit(self, index, position: int) -> np.ndarray:
        """Bit value at 1-based ``position`` (1 = most significant)."""
        return (self.labels[index] >> (self.m - position)) & 1

    def bit_matrix(self) -> np.ndarray:
        """(M, m) uint8 matrix; column k holds bit k+1 of every label."""
        m = self.m
        shifts = np.arange(m - 1, -1, -1)
        return ((self.labels[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


@dataclass(frozen=True)
class LabeledConstellation:
    """A constellation together with its binary labeling."""

    constellation: Constellation
    labeling: Labeling

    @property
    def M(self) -> int:
        return self.constellation.M

    @property
    def m(self) -> int:
        return self.labeling.m

    @property
    def points(self) -> np.ndarray:
        return self.constellation.points

    @property
    def labels(self) -> np.ndarray:
        return self.labeling.labels

    def with_points(self, points: np.ndarray) -> "LabeledConstellation":
        """Same labeling, new point positions."""
        return LabeledConstellation(Constellation(points), self.labeling)

    def with_labels(self, labels: np.ndarray) -> "LabeledConstellation":
        """Same geometry, new labeling."""
        return LabeledConstellation(self.constellation, Labeling(labels))


@dataclass(frozen=True)
class Violation:
    """One violated invariant, with a machine-readable code."""

    code: str
    message: str
    details: dict = field(default_factory=dict)

    def __str__(self):
        return f"{self.code}: {self.message}"


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def gray_labeling(m: int) -> np.ndarray:
    """Per-axis binary-reflected Gray sequence for a square grid.

    For m bits per 2-D symbol (m even), each axis carries m/2 bits; the
    returned array lists the 2^(m/2) per-axis labels in amplitude order,
    consecutive entries differing in exactly one bit.
    """
    if m < 2 or m % 2 != 0:
        raise ValueError(f"bits per symbol must be even and >= 2, got {m}")
    k = m // 2
    idx = np.arange(1 << k)
    return idx ^ (idx >> 1)


def square_qam(M: int) -> LabeledConstellation:
    """Square QAM with unit average energy and per-axis Gray labeling.

    The grid is equally spaced, scaled to unit average energy. The label of
    a point is the concatenation of the Gray code of its in-phase level
    (high bits) and of its quadrature level (low bits).

    Raises:
        ValueError: if M is not a supported square size (4, 16, 64, 256,
            1024). Cross-shaped sizes such as 8, 32, 128 are rejected.
    """
    if not _is_power_of_two(M) or M < 4 or M > 1024:
        raise ValueError(f"unsupported constellation size M={M}")
    m = int(round(math.log2(M)))
    if m % 2 != 0:
        raise ValueError(
            f"M={M} has no square grid (odd number of bits per symbol); "
            "cross-shaped QAM is not supported"
        )
    L = 1 << (m // 2)
    amps = 2.0 * np.arange(L) - (L - 1)
    gray = gray_labeling(m)
    re, im = np.meshgrid(amps, amps, indexing="ij")
    points = normalize((re + 1j * im).ravel())
    gi, gq = np.meshgrid(gray, gray, indexing="ij")
    labels = (gi.ravel() << (m // 2)) | gq.ravel()
    return LabeledConstellation(Constellation(points), Labeling(labels))


def normalize(points: np.ndarray) -> np.ndarray:
    """Scale a point set by a positive real factor to unit average energy."""
    pts = np.asarray(points, dtype=np.complex128)
    energy = np.mean(np.abs(pts) ** 2)
    if not np.isfinite(energy) or energy <= 0.0:
        raise ValueError("cannot normalize: average energy is zero or not finite")
    return pts / np.sqrt(energy)


def validate(lc: LabeledConstellation) -> list[Violation]:
    """Check every invariant; an empty list means the object is valid."""
    violations: list[Violation] = []
    pts = lc.points
    labels = lc.labels
    M = lc.M

    if not _is_power_of_two(M):
        violations.append(
            Violation("size_not_power_of_two", f"M={M} is not a power of two")
        )
    if not np.all(np.isfinite(pts.view(np.float64))):
        violations.append(
            Violation("nonfinite_point", "constellation contains NaN or infinite coordinates")
        )
    else:
        energy = float(np.mean(np.abs(pts) ** 2))
        if abs(energy - 1.0) > ENERGY_TOL:
            violations.append(
                Violation(
                    "energy_not_unit",
                    f"average energy {energy!r} deviates from 1 by more than {ENERGY_TOL}",
                    {"energy": energy},
                )
            )

    if labels.size != M:
        violations.append(
            Violation(
                "label_count_mismatch",
                f"{labels.size} labels for {M} points",
            )
        )
    else:
        if np.any(labels < 0) or np.any(labels >= M) or np.unique(labels).size != M:
            violations.append(
                Violation(
                    "labeling_not_bijective",
                    "labels are not a bijection onto {0,...,M-1}",
                )
            )
    if _is_power_of_two(M) and lc.labeling.m != int(round(math.log2(max(M, 2)))):
        violations.append(
            Violation(
                "bit_width_mismatch",
                f"labeling has m={lc.labeling.m} bits but constellation needs log2({M})",
            )
        )
    return violations


def _format_float(x: float) -> str:
    # 17 significant digits: lossless float64 round trip.
    return format(x, ".17g")


def write_constellation_file(lc: LabeledConstellation, path) -> None:
    """Write the interchange text format.

    Header ``M=<int> m=<int>``, then one line per point:
    ``<index> <re> <im> <label-as-binary>``, real parts with 17 significant
    digits so the file round-trips bit-exactly.
    """
    m = lc.m
    lines = [f"M={lc.M} m={m}"]
    for i in range(lc.M):
        p = lc.points[i]
        lines.append(
            f"{i} {_format_float(p.real)} {_format_float(p.imag)} "
            f"{format(int(lc.labels[i]), f'0{m}b')}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_constellation_file(path) -> LabeledConstellation:
    """Parse the interchange text format written by :func:`write_constellation_file`.

    Raises:
        ConstellationFormatError: on any malformed header or point line,
            with the 1-based line number.
    """
    raw = Path(path).read_text().splitlines()
    lines = [(no, ln.strip()) for no, ln in enumerate(raw, start=1) if ln.strip()]
    if not lines:
        raise ConstellationFormatError("empty constellation file")
    header_no, header = lines[0]
    parts = header.split()
    try:
        fields = dict(p.split("=", 1) for p in parts)
        M = int(fields["M"])
        m = int(fields["m"])
    except (ValueError, KeyError):
        raise ConstellationFormatError(
            f"expected header 'M=<int> m=<int>', got {header!r}", header_no
        ) from None
    if M < 2 or m < 1 or (1 << m) != M:
        raise ConstellationFormatError(
            f"inconsistent header: M={M} does not match m={m}", header_no
        )
    if len(lines) - 1 != M:
        raise ConstellationFormatError(
            f"expected {M} point lines, found {len(lines) - 1}"
        )

    points = np.zeros(M, dtype=np.complex128)
    labels = np.zeros(M, dtype=np.int64)
    seen = np.zeros(M, dtype=bool)
    for no, line in lines[1:]:
        cols = line.split()
        if len(cols) != 4:
            raise ConstellationFormatError(
                f"expected 4 columns '<index> <re> <im> <label>', got {len(cols)}", no
            )
        try:
            idx = int(cols[0])
            re = float(cols[1])
            im = float(cols[2])
        except ValueError:
            raise ConstellationFormatError(f"malformed numeric field in {line!r}", no) from None
        if not (0 <= idx < M):
            raise ConstellationFormatError(f"point index {idx} out of range [0, {M})", no)
        if seen[idx]:
            raise ConstellationFormatError(f"duplicate point index {idx}", no)
        lab = cols[3]
        if len(lab) != m or any(c not in "01" for c in lab):
            raise ConstellationFormatError(
                f"label {lab!r} is not a binary string of length {m}", no
            )
        seen[idx] = True
        points[idx] = complex(re, im)
        labels[idx] = int(lab, 2)
    return LabeledConstellation(Constellation(points), Labeling(labels))
