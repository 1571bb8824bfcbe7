"""Periodic spatial grid, complex fields and unitary spectral transforms.

The real line is truncated to the box [-L_box, L_box) with n_points
equispaced samples. Transforms use the unitary normalization (1/sqrt(n)
both ways) so that ``dx * sum|f|^2 == dx * sum|f_hat|^2`` holds literally.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

SNAPSHOT_MAGIC = b"DMNLS1\x00\x00"
# magic, u32 n_points, 4 reserved bytes, f64 L_box, f64 time
_HEADER = struct.Struct("<8sI4xdd")


def fft_workers() -> int:
    """Worker cap for batched transforms, from ``DMNLS_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("DMNLS_THREADS", "1")))
    except ValueError:
        return 1


def fft(a: np.ndarray, axis: int = -1) -> np.ndarray:
    return sfft.fft(a, axis=axis, norm="ortho", workers=fft_workers())


def ifft(a: np.ndarray, axis: int = -1) -> np.ndarray:
    return sfft.ifft(a, axis=axis, norm="ortho", workers=fft_workers())


class GridMismatchError(ValueError):
    """Two fields (or a field and an array) live on different grids."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [-L_box, L_box)."""

    L_box: float
    n_points: int

    def __post_init__(self):
        if not isinstance(self.n_points, (int, np.integer)) or isinstance(self.n_points, bool):
            raise ValueError(f"n_points must be an integer, got {self.n_points!r}")
        if self.n_points < 8 or self.n_points % 2:
            raise ValueError(f"n_points must be even and >= 8, got {self.n_points}")
        if not np.isfinite(self.L_box) or self.L_box <= 0:
            raise ValueError(f"L_box must be positive, got {self.L_box}")
        object.__setattr__(self, "L_box", float(self.L_box))
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def dx(self) -> float:
        return 2.0 * self.L_box / self.n_points

    @property
    def length(self) -> float:
        return 2.0 * self.L_box

    @cached_property
    def x(self) -> np.ndarray:
        x = -self.L_box + self.dx * np.arange(self.n_points)
        x.flags.writeable = False
        return x

    @cached_property
    def eta(self) -> np.ndarray:
        """Angular wavenumbers pi*k/L_box in FFT storage order."""
        k = np.fft.fftfreq(self.n_points, d=1.0 / self.n_points)
        eta = np.pi * k / self.L_box
        eta.flags.writeable = False
        return eta

    @cached_property
    def eta2(self) -> np.ndarray:
        e2 = self.eta**2
        e2.flags.writeable = False
        return e2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Boolean mask of modes kept by the 2/3 rule (|k| < n/3)."""
        k = np.fft.fftfreq(self.n_points, d=1.0 / self.n_points)
        m = np.abs(k) < self.n_points / 3.0
        m.flags.writeable = False
        return m

    def field(self, values) -> "Field":
        return Field(self, values)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.n_points, dtype=complex))


def make_grid(L_box: float, n_points: int) -> Grid:
    return Grid(L_box, n_points)


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples of a wavefunction on a :class:`Grid`.

    Fields are treated as immutable values; arithmetic returns new fields.
    """

    grid: Grid
    values: np.ndarray
    _spectrum: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != (self.grid.n_points,):
            raise GridMismatchError(
                f"field has shape {v.shape}, grid expects ({self.grid.n_points},)"
            )
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        return cls(grid, fn(grid.x))

    def spectrum(self) -> np.ndarray:
        if self._spectrum is None:
            s = fft(self.values)
            s.flags.writeable = False
            object.__setattr__(self, "_spectrum", s)
        return self._spectrum

    def _check(self, other: "Field"):
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values + other.values)
        return Field(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values - other.values)
        return Field(self.grid, self.values - other)

    def __mul__(self, c):
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return Field(self.grid, self.values / c)

    def __neg__(self):
        return Field(self.grid, -self.values)

    def conj(self) -> "Field":
        return Field(self.grid, np.conj(self.values))


def to_spectrum(f: Field) -> np.ndarray:
    return f.spectrum()


def from_spectrum(s: np.ndarray, grid: Grid) -> Field:
    s = np.asarray(s, dtype=complex)
    if s.shape != (grid.n_points,):
        raise GridMismatchError(f"spectrum has shape {s.shape}, grid expects ({grid.n_points},)")
    cached = s.copy()
    cached.flags.writeable = False
    return Field(grid, ifft(s), _spectrum=cached)


def _common(f: Field, g: Field):
    if f.grid != g.grid:
        raise GridMismatchError("fields live on different grids")


def inner(f: Field, g: Field) -> complex:
    """dx * sum conj(f) g."""
    _common(f, g)
    return complex(f.grid.dx * np.vdot(f.values, g.values))


def norm_l2(f: Field) -> float:
    return float(np.sqrt(f.grid.dx * np.sum(np.abs(f.values) ** 2)))


def norm_dx(f: Field) -> float:
    """L2 norm of the spectral derivative."""
    s = f.spectrum()
    return float(np.sqrt(f.grid.dx * np.sum(f.grid.eta2 * np.abs(s) ** 2)))


def norm_h1(f: Field) -> float:
    s = f.spectrum()
    return float(np.sqrt(f.grid.dx * np.sum((1.0 + f.grid.eta2) * np.abs(s) ** 2)))


def inner_h1(f: Field, g: Field) -> complex:
    _common(f, g)
    w = 1.0 + f.grid.eta2
    return complex(f.grid.dx * np.vdot(f.spectrum(), w * g.spectrum()))


def derivative(f: Field, order: int = 1) -> Field:
    """Spectral derivative via the multiplier (i eta)^order."""
    return from_spectrum((1j * f.grid.eta) ** order * f.spectrum(), f.grid)


def shift(f: Field, y: float) -> Field:
    """f(. - y) by the spectral multiplier exp(-i eta y); exact for grid shifts."""
    return from_spectrum(np.exp(-1j * f.grid.eta * y) * f.spectrum(), f.grid)


def gaussian(grid: Grid, amplitude: float = 1.0, width: float = 1.0, center: float = 0.0) -> Field:
    return Field(grid, amplitude * np.exp(-((grid.x - center) ** 2) / (2.0 * width**2)))


def write_snapshot(path, f: Field, time: float = 0.0) -> None:
    """Binary snapshot: 32-byte header then little-endian (f64 re, f64 im) pairs."""
    header = _HEADER.pack(SNAPSHOT_MAGIC, f.grid.n_points, f.grid.L_box, float(time))
    body = np.empty(2 * f.grid.n_points, dtype="<f8")
    body[0::2] = f.values.real
    body[1::2] = f.values.imag
    Path(path).write_bytes(header + body.tobytes())


def read_snapshot(path) -> tuple[Field, float]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("snapshot too short for header")
    magic, n, L_box, time = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"bad snapshot magic {magic!r}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != 2 * n:
        raise ValueError(f"snapshot body has {body.size} doubles, expected {2 * n}")
    grid = Grid(L_box, int(n))
    return Field(grid, body[0::2] + 1j * body[1::2]), float(time)
