"""Spectral synthesis of anisotropic squared-exponential Gaussian fields.

The covariance of the simulated field is

    r(t) = std**2 * exp(-0.5 * t^T M t),   M = R(theta0)^T diag(a**2, a**-2) R(theta0)

so that the gradient covariance is ``std**2 * M`` with leading direction
``(cos theta0, sin theta0)``. Pixel ``(i, j)`` sits at
``origin + (j * dx, i * dy)``: columns run along the first physical
coordinate and rows along the second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .errors import PreconditionError

_MAX_CELLS = 2**27


@dataclass(frozen=True)
class SimConfig:
    grid_rows: int = 512
    grid_cols: int = 512
    domain_size: float = 100.0
    a: float = 1.0
    theta0: float = 0.0
    mean: float = 0.0
    std: float = 1.0
    seed: int = 0
    pad_factor: int = 2

    def __post_init__(self):
        if self.grid_rows < 8 or self.grid_cols < 8:
            raise PreconditionError("grid_rows and grid_cols must be >= 8")
        if not self.domain_size > 0:
            raise PreconditionError("domain_size must be positive")
        if not (self.a > 0 and math.isfinite(self.a)):
            raise PreconditionError(f"anisotropy scale a must be > 0, got {self.a}")
        if not self.std > 0:
            raise PreconditionError("std must be positive")
        if int(self.pad_factor) < 1:
            raise PreconditionError("pad_factor must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise PreconditionError("seed must be a 64-bit unsigned integer")
        cells = self.grid_rows * self.grid_cols * self.pad_factor**2
        if cells > _MAX_CELLS:
            raise PreconditionError(f"padded grid of {cells} cells exceeds the {_MAX_CELLS} limit")

    @classmethod
    def from_kappa(cls, kappa: float, **kwargs) -> "SimConfig":
        """Build a config whose model anisotropy is ``kappa`` (a = (1-kappa^2)^(-1/4))."""
        return cls(a=a_from_kappa(kappa), **kwargs)

    @property
    def kappa(self) -> float:
        return kappa_from_a(self.a)

    @property
    def spacing(self) -> float:
        return self.domain_size / (self.grid_cols - 1)


@dataclass
class FieldGrid:
    """A raster of field values with physical spacing."""

    values: np.ndarray
    dx: float = 1.0
    dy: float = 1.0
    origin: tuple = field(default=(0.0, 0.0))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise PreconditionError("field values must be a 2-D array")
        if not np.all(np.isfinite(self.values)):
            raise PreconditionError("field values must be finite")
        if not (self.dx > 0 and self.dy > 0):
            raise PreconditionError("grid spacing must be positive")
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @property
    def shape(self):
        return self.values.shape

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.dx * np.arange(self.values.shape[1])

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] + self.dy * np.arange(self.values.shape[0])

    @property
    def window(self) -> tuple:
        """Physical extent ``(x0, y0, x1, y1)`` spanned by the pixel centres."""
        rows, cols = self.values.shape
        x0, y0 = self.origin
        return (x0, y0, x0 + (cols - 1) * self.dx, y0 + (rows - 1) * self.dy)

    @property
    def area(self) -> float:
        x0, y0, x1, y1 = self.window
        return (x1 - x0) * (y1 - y0)


def a_from_kappa(kappa: float) -> float:
    if not 0.0 <= kappa < 1.0:
        raise PreconditionError(f"kappa must lie in [0, 1), got {kappa}")
    return (1.0 - kappa * kappa) ** -0.25


def kappa_from_a(a: float) -> float:
    """Model anisotropy sqrt(1 - a^-4), using the larger of a, 1/a as the major axis."""
    r = min(a, 1.0 / a) ** 4
    return math.sqrt(1.0 - r)


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def _metric(a: float, theta0: float) -> np.ndarray:
    # Double-angle form: invariant under theta0 -> theta0 + pi up to the
    # rounding of the doubled angle.
    c2, s2 = math.cos(2 * theta0), math.sin(2 * theta0)
    mean = 0.5 * (a * a + a**-2)
    half = 0.5 * (a * a - a**-2)
    return np.array([[mean + half * c2, half * s2], [half * s2, mean - half * c2]])


def model_truth(config: SimConfig):
    """Exact (kappa, theta0, Lambda) of the simulated model."""
    lam = config.std**2 * _metric(config.a, config.theta0)
    theta = config.theta0 if config.a >= 1 else config.theta0 + math.pi / 2
    theta = theta - math.pi * math.floor(theta / math.pi + 0.5)
    if theta <= -math.pi / 2:
        theta += math.pi
    return config.kappa, theta, lam


def covariance(config: SimConfig, t: np.ndarray) -> np.ndarray:
    """Model covariance r(t) for lag vectors ``t`` of shape (..., 2)."""
    t = np.asarray(t, dtype=np.float64)
    m = _metric(config.a, config.theta0)
    q = np.einsum("...i,ij,...j->...", t, m, t)
    return config.std**2 * np.exp(-0.5 * q)


def simulate(config: SimConfig) -> FieldGrid:
    """Draw one realization on the requested grid.

    The spectral density of the squared-exponential covariance is sampled on
    a periodic grid ``pad_factor`` times larger than requested, and the
    result cropped, which keeps periodic wrap-around out of the window.
    """
    rows, cols, pad = config.grid_rows, config.grid_cols, int(config.pad_factor)
    h = config.spacing
    P, Q = pad * rows, pad * cols
    wx = 2 * np.pi * np.fft.fftfreq(Q, d=h)
    wy = 2 * np.pi * np.fft.fftfreq(P, d=h)
    minv = np.linalg.inv(_metric(config.a, config.theta0))
    WX, WY = np.meshgrid(wx, wy)
    quad = minv[0, 0] * WX * WX + 2 * minv[0, 1] * WX * WY + minv[1, 1] * WY * WY
    # det(M) = 1, so S(w) = std^2 / (2 pi) * exp(-w^T M^-1 w / 2).
    dw = (2 * np.pi / (Q * h)) * (2 * np.pi / (P * h))
    amp = config.std * np.sqrt(np.exp(-0.5 * quad) * dw / (2 * np.pi))

    rng = _rng.substream(config.seed, _rng.SIMULATION)
    noise = rng.standard_normal((P, Q)) + 1j * rng.standard_normal((P, Q))
    full = np.fft.fft2(amp * noise).real
    values = full[:rows, :cols] + config.mean
    return FieldGrid(np.ascontiguousarray(values), dx=h, dy=h, origin=(0.0, 0.0))
