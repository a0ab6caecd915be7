"""Periodic grid, spectral differentiation and the Helmholtz operator (1 - d^2/dx^2).

All transforms are real-to-complex (``scipy.fft.rfft``) so every multiplier
application returns real samples. Array-level kernels accept any leading
shape ``(..., n_points)`` and are what the dynamics module calls in its inner
loop; the ``RealField`` wrappers validate and are the public operations.
"""

import logging
import os
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy import fft as sfft
from scipy.interpolate import CubicSpline

from src.utils.errors import GridMismatchError, NonFiniteFieldError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, list, tuple]


def fft_workers() -> int:
    """Worker count for scipy.fft, taken from NOVIKOV_THREADS (default 1)."""
    try:
        return max(1, int(os.getenv("NOVIKOV_THREADS", "1")))
    except ValueError:
        return 1


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform sampling of the periodic domain [0, length)."""

    n_points: int
    length: float

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 8:
            raise ValueError(f"n_points must be an integer >= 8, got {self.n_points}")
        if not (np.isfinite(self.length) and self.length > 0):
            raise ValueError(f"length must be a positive real, got {self.length}")
        object.__setattr__(self, "n_points", int(self.n_points))
        object.__setattr__(self, "length", float(self.length))
        if self.n_points & (self.n_points - 1):
            logger.debug(f"n_points={self.n_points} is not a power of two")

    @cached_property
    def spacing(self) -> float:
        return self.length / self.n_points

    @cached_property
    def nodes(self) -> np.ndarray:
        return _frozen(np.arange(self.n_points) * self.spacing)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """k_j = 2*pi*j/L in standard FFT ordering (n_points entries)."""
        return _frozen(2.0 * np.pi * sfft.fftfreq(self.n_points, d=self.spacing))

    @cached_property
    def half_wavenumbers(self) -> np.ndarray:
        """Non-negative wavenumbers of the real transform (n_points//2 + 1 entries)."""
        return _frozen(2.0 * np.pi * sfft.rfftfreq(self.n_points, d=self.spacing))

    @cached_property
    def first_derivative_symbol(self) -> np.ndarray:
        symbol = 1j * self.half_wavenumbers
        if self.n_points % 2 == 0:
            symbol[-1] = 0.0  # odd derivative: Nyquist mode dropped
        return _frozen(symbol)

    @cached_property
    def helmholtz_symbol(self) -> np.ndarray:
        return _frozen(1.0 + self.half_wavenumbers ** 2)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3 rule: keep modes with |j| < n_points/3."""
        return _frozen(np.arange(self.n_points // 2 + 1) < self.n_points / 3.0)

    def field(self, samples: ArrayLike) -> "RealField":
        return RealField(self, samples)

    def zeros(self) -> "RealField":
        return RealField(self, np.zeros(self.n_points))

    def sample(self, func) -> "RealField":
        """Sample a vectorized callable at the grid nodes."""
        return RealField(self, func(self.nodes))


@dataclass(frozen=True, eq=False)
class RealField:
    """Real samples of one function on a periodic grid."""

    grid: PeriodicGrid
    samples: np.ndarray

    def __post_init__(self):
        array = np.array(self.samples, dtype=float)
        if array.shape != (self.grid.n_points,):
            raise ValueError(
                f"samples must have shape ({self.grid.n_points},), got {array.shape}"
            )
        object.__setattr__(self, "samples", _frozen(array))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.samples)))

    def check_finite(self, what: str = "field") -> "RealField":
        if not self.is_finite():
            raise NonFiniteFieldError(what)
        return self

    def _other(self, other):
        if isinstance(other, RealField):
            require_same_grid(self, other)
            return other.samples
        return other

    def __add__(self, other):
        return RealField(self.grid, self.samples + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return RealField(self.grid, self.samples - self._other(other))

    def __mul__(self, other):
        return RealField(self.grid, self.samples * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return RealField(self.grid, -self.samples)


def require_same_grid(*fields: RealField) -> PeriodicGrid:
    """Return the shared grid or raise GridMismatchError."""
    grid = fields[0].grid
    for other in fields[1:]:
        if other.grid != grid:
            raise GridMismatchError(
                f"grid mismatch: ({grid.n_points}, {grid.length}) vs "
                f"({other.grid.n_points}, {other.grid.length})"
            )
    return grid


def ensure_finite(values: np.ndarray, what: str = "field") -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NonFiniteFieldError(what)
    return values


# --- Array-level kernels ---

def _apply_symbol(grid: PeriodicGrid, values: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    coeffs = sfft.rfft(values, axis=-1, workers=fft_workers())
    return sfft.irfft(coeffs * symbol, n=grid.n_points, axis=-1, workers=fft_workers())


def spectral_derivative(grid: PeriodicGrid, values: np.ndarray, order: int = 1) -> np.ndarray:
    """d^order/dx^order of samples with shape (..., n_points)."""
    if order == 1:
        symbol = grid.first_derivative_symbol
    else:
        symbol = (1j * grid.half_wavenumbers) ** order
        if order % 2 == 1 and grid.n_points % 2 == 0:
            symbol = symbol.copy()
            symbol[-1] = 0.0
    return _apply_symbol(grid, values, symbol)


def helmholtz_solve(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    """(1 - d^2/dx^2)^{-1} applied along the last axis."""
    return _apply_symbol(grid, values, 1.0 / grid.helmholtz_symbol)


def helmholtz_multiply(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    """(1 - d^2/dx^2) applied along the last axis."""
    return _apply_symbol(grid, values, grid.helmholtz_symbol)


def truncate_two_thirds(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    return _apply_symbol(grid, values, grid.dealias_mask.astype(float))


def padded_grid(grid: PeriodicGrid, factor: int = 2) -> PeriodicGrid:
    """Same domain sampled factor times more finely, for alias-free products."""
    return PeriodicGrid(factor * grid.n_points, grid.length)


def resample(values: np.ndarray, n_points: int) -> np.ndarray:
    """
    Band-limited resampling along the last axis by zero-padding or cutting the real spectrum.

    Upsampling is exact for any input; downsampling keeps the modes both grids
    resolve and drops the rest.
    """
    n_from = values.shape[-1]
    if n_from == n_points:
        return values
    coeffs = sfft.rfft(values, axis=-1, workers=fft_workers())
    keep = min(n_from, n_points) // 2 + 1
    out = np.zeros(values.shape[:-1] + (n_points // 2 + 1,), dtype=complex)
    out[..., :keep] = coeffs[..., :keep]
    if n_from < n_points and n_from % 2 == 0:
        out[..., n_from // 2] *= 0.5  # coarse Nyquist splits between +k and -k
    return sfft.irfft(out, n=n_points, axis=-1, workers=fft_workers()) * (n_points / n_from)


def smooth_gaussian(grid: PeriodicGrid, values: np.ndarray, sigma: float) -> np.ndarray:
    """Periodic convolution with a unit-mass Gaussian of width sigma."""
    return _apply_symbol(grid, values, np.exp(-0.5 * (grid.half_wavenumbers * sigma) ** 2))


def trig_interpolate(grid: PeriodicGrid, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """
    Evaluate the trigonometric interpolant of samples at arbitrary points.

    Args:
        grid: Grid the samples live on
        values: Samples with shape (n_points,) or (n_fields, n_points)
        points: Evaluation points (any real values; periodicity is implicit)

    Returns:
        Array with shape (len(points),) or (n_fields, len(points))
    """
    values = np.asarray(values, dtype=float)
    points = np.asarray(points, dtype=float)
    coeffs = sfft.rfft(values, axis=-1, workers=fft_workers()) / grid.n_points
    weights = np.full(grid.half_wavenumbers.shape, 2.0)
    weights[0] = 1.0
    if grid.n_points % 2 == 0:
        weights[-1] = 1.0
    phases = np.exp(1j * np.outer(points.ravel(), grid.half_wavenumbers))
    result = np.real((coeffs * weights) @ phases.T)
    if values.ndim == 1:
        return result.reshape(points.shape)
    return result.reshape(values.shape[:-1] + points.shape)


def cubic_interpolate(grid: PeriodicGrid, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Periodic cubic-spline alternative to trig_interpolate."""
    values = np.asarray(values, dtype=float)
    closed_nodes = np.append(grid.nodes, grid.length)
    closed_values = np.concatenate([values, values[..., :1]], axis=-1)
    spline = CubicSpline(closed_nodes, closed_values, axis=-1, bc_type="periodic")
    return spline(np.mod(np.asarray(points, dtype=float), grid.length))


def random_band_limited(grid: PeriodicGrid, rng: np.random.Generator,
                        max_mode: Optional[int] = None, shape: tuple = ()) -> np.ndarray:
    """Random real samples whose spectrum is confined to modes 1..max_mode plus the mean."""
    if max_mode is None:
        max_mode = grid.n_points // 8
    n_modes = grid.n_points // 2 + 1
    coeffs = np.zeros(shape + (n_modes,), dtype=complex)
    coeffs[..., : max_mode + 1] = (
        rng.standard_normal(shape + (max_mode + 1,))
        + 1j * rng.standard_normal(shape + (max_mode + 1,))
    )
    coeffs[..., 0] = coeffs[..., 0].real
    return sfft.irfft(coeffs, n=grid.n_points, axis=-1) * grid.n_points / np.sqrt(max_mode + 1)


# --- RealField operations ---

def derivative(f: RealField, order: int = 1) -> RealField:
    """Spectral derivative; exact for trigonometric polynomials below Nyquist."""
    f.check_finite()
    return RealField(f.grid, spectral_derivative(f.grid, f.samples, order))


def helmholtz_invert(m: RealField) -> RealField:
    """Solve (1 - d^2/dx^2) u = m via the Fourier symbol 1/(1 + k^2)."""
    m.check_finite()
    return RealField(m.grid, helmholtz_solve(m.grid, m.samples))


def helmholtz_apply(u: RealField) -> RealField:
    """Return m = u - u_xx."""
    u.check_finite()
    return RealField(u.grid, helmholtz_multiply(u.grid, u.samples))


def dealias(f: RealField) -> RealField:
    f.check_finite()
    return RealField(f.grid, truncate_two_thirds(f.grid, f.samples))


def gaussian_smooth(f: RealField, sigma: float) -> RealField:
    f.check_finite()
    return RealField(f.grid, smooth_gaussian(f.grid, f.samples, sigma))


def interpolate(f: RealField, points: ArrayLike, method: str = "trig") -> np.ndarray:
    """Evaluate f at off-grid points by trigonometric or periodic cubic interpolation."""
    f.check_finite()
    if method == "trig":
        return trig_interpolate(f.grid, f.samples, np.asarray(points))
    if method == "cubic":
        return cubic_interpolate(f.grid, f.samples, np.asarray(points))
    raise ValueError(f"unknown interpolation method: {method}")


def integrate(f: RealField) -> float:
    """Rectangle rule, spectrally exact for band-limited periodic integrands."""
    return float(f.grid.spacing * np.sum(f.samples))


class FieldNorms(NamedTuple):
    linf: float
    l2: float
    h1: float
    hs: float


def sobolev_norm(f: RealField, s: float) -> float:
    """H^s norm through the Fourier multiplier (1 + k^2)^(s/2)."""
    grid = f.grid
    coeffs = sfft.fft(f.samples, workers=fft_workers()) / grid.n_points
    weights = (1.0 + grid.wavenumbers ** 2) ** s
    return float(np.sqrt(grid.length * np.sum(weights * np.abs(coeffs) ** 2)))


def norms(f: RealField, s: float = 2.0) -> FieldNorms:
    """L-infinity, L2, H1 and H^s norms of a field."""
    f.check_finite()
    return FieldNorms(
        linf=float(np.max(np.abs(f.samples))),
        l2=sobolev_norm(f, 0.0),
        h1=sobolev_norm(f, 1.0),
        hs=sobolev_norm(f, s),
    )
