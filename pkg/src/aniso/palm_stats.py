"""Contour integrals of the normal field and Palm-law evaluators/samplers.

Angles follow ``Theta = atan2(N_y, N_x)``. Since contour normals point up
the gradient, Theta is the gradient angle and its Palm density
``C_kappa (1 - kappa^2 cos^2(theta - theta0))^(-3/2)`` peaks at theta0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _rng, elliptic
from .contour import ContourSet
from .errors import DegenerateInputError, PreconditionError


def double_angle(normals):
    """(cos 2 Theta, sin 2 Theta) of unit 2-D normals with Theta = atan2(N_y, N_x)."""
    nx, ny = normals[:, 0], normals[:, 1]
    return nx * nx - ny * ny, 2.0 * nx * ny


@dataclass
class PalmSummary:
    total_length: float
    C: float
    S: float
    normal_cov: np.ndarray
    n_points: int

    @property
    def dim(self) -> int:
        return self.normal_cov.shape[0]

    @property
    def normalized(self) -> tuple:
        """(C / |L|, S / |L|)."""
        return self.C / self.total_length, self.S / self.total_length

    @classmethod
    def from_normals(cls, normals, weights=None) -> "PalmSummary":
        """Summary of unit normals in any dimension with arc-length weights.

        C and S are only defined in two dimensions; otherwise they are NaN.
        """
        n = np.asarray(normals, dtype=np.float64)
        if n.ndim != 2 or n.shape[0] == 0:
            raise DegenerateInputError("need a non-empty (n, d) array of normals")
        w = np.ones(n.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
        if w.shape != (n.shape[0],) or np.any(w < 0):
            raise PreconditionError("weights must be non-negative, one per normal")
        total = float(np.sum(w))
        if not total > 0:
            raise DegenerateInputError("total contour length is zero")
        cov = (n * w[:, None]).T @ n / total
        cov = 0.5 * (cov + cov.T)
        if n.shape[1] == 2:
            c2, s2 = double_angle(n)
            C = float(np.sum(c2 * w))
            S = float(np.sum(s2 * w))
        else:
            C = S = float("nan")
        return cls(total, C, S, cov, int(n.shape[0]))

    def to_dict(self) -> dict:
        return {
            "total_length": self.total_length,
            "C": self.C,
            "S": self.S,
            "normal_cov": self.normal_cov.tolist(),
            "n_points": self.n_points,
        }


def summarize(contours: ContourSet) -> PalmSummary:
    if contours.n_points == 0 or not contours.total_length > 0:
        raise DegenerateInputError("empty contour set")
    return PalmSummary.from_normals(contours.normals, contours.seg_length)


@dataclass
class CellStats:
    """Raw contour integrals on an N x N partition of the window.

    ``C[i, j]`` is the cell in row ``i`` (second coordinate) and column ``j``.
    """

    grid_n: int
    C: np.ndarray
    S: np.ndarray
    length: np.ndarray

    @property
    def cells(self) -> np.ndarray:
        """(N, N, 3) array of (C_i, S_i, length_i)."""
        return np.stack([self.C, self.S, self.length], axis=-1)

    @property
    def n_nonempty(self) -> int:
        return int(np.count_nonzero(self.length))

    def scaled(self, c: float) -> "CellStats":
        return CellStats(self.grid_n, self.C * c, self.S * c, self.length * c)

    def to_dict(self) -> dict:
        return {"grid_n": self.grid_n, "C": self.C.tolist(), "S": self.S.tolist(),
                "length": self.length.tolist()}


def _cell_index(coord, lo, hi, n):
    # Half-open cells [lo + k w, lo + (k+1) w), last one closed at hi.
    k = np.floor((coord - lo) / (hi - lo) * n).astype(np.int64)
    return np.minimum(k, n - 1)


def cell_stats(contours: ContourSet, window, N: int) -> CellStats:
    """Accumulate C, S and length per cell of an N x N partition of ``window``.

    ``window`` is ``(x0, y0, x1, y1)``. Each resampled point is assigned by
    position; empty cells hold zeros.
    """
    N = int(N)
    if N < 1:
        raise PreconditionError("N must be >= 1")
    x0, y0, x1, y1 = map(float, window)
    if not (x1 > x0 and y1 > y0):
        raise PreconditionError("window must have positive extent")
    pos = contours.positions
    px, py = pos[:, 0], pos[:, 1]
    if np.any((px < x0) | (px > x1) | (py < y0) | (py > y1)):
        raise PreconditionError("contour point outside the window")
    col = _cell_index(px, x0, x1, N)
    row = _cell_index(py, y0, y1, N)
    flat = row * N + col
    w = contours.seg_length
    c2, s2 = double_angle(contours.normals)
    size = N * N

    def acc(v):
        return np.bincount(flat, weights=v, minlength=size).reshape(N, N)

    return CellStats(N, acc(c2 * w), acc(s2 * w), acc(w))


def _check_kappa(kappa):
    kappa = float(kappa)
    if not 0.0 <= kappa < 1.0:
        raise PreconditionError(f"kappa must lie in [0, 1), got {kappa}")
    return kappa


@lru_cache(maxsize=256)
def palm_angle_normalizer(kappa: float) -> float:
    """C_kappa such that the angle density integrates to one over a full turn."""
    kappa = _check_kappa(kappa)
    if kappa == 0.0:
        return 1.0 / (2 * math.pi)
    # quarter-turn integral of (1 - k^2 cos^2)^(-3/2) is E(k) / (1 - k^2)
    return (1.0 - kappa * kappa) / (4.0 * elliptic.ellip_E(kappa))


def palm_angle_density(theta, kappa: float, theta0: float = 0.0):
    kappa = _check_kappa(kappa)
    c = palm_angle_normalizer(kappa)
    t = np.asarray(theta, dtype=np.float64)
    out = c * (1.0 - kappa * kappa * np.cos(t - theta0) ** 2) ** -1.5
    return out if out.ndim else float(out)


def palm_angle_acceptance(kappa: float) -> float:
    """Expected acceptance rate of the uniform-envelope rejection sampler."""
    kappa = _check_kappa(kappa)
    return (1.0 - kappa * kappa) ** 1.5 / (2 * math.pi * palm_angle_normalizer(kappa))


def sample_palm_angle(kappa: float, theta0: float, n: int, seed: int, return_stats: bool = False):
    """Draws from the Palm angle density by rejection from the uniform law on (-pi, pi]."""
    kappa = _check_kappa(kappa)
    if n < 1:
        raise PreconditionError("n must be >= 1")
    rng = _rng.substream(seed, _rng.SAMPLER, 0)
    k2 = kappa * kappa
    out = np.empty(0)
    proposed = 0
    batch = int(n / max(palm_angle_acceptance(kappa), 1e-3) * 1.1) + 64
    while out.size < n:
        t = rng.uniform(-math.pi, math.pi, batch)
        ratio = ((1.0 - k2) / (1.0 - k2 * np.cos(t) ** 2)) ** 1.5
        acc = t[rng.uniform(0.0, 1.0, batch) < ratio]
        out = np.concatenate([out, acc])
        proposed += batch
    theta = out[:n] + theta0
    theta = theta - 2 * math.pi * np.floor((theta + math.pi) / (2 * math.pi))
    theta = np.where(theta == -math.pi, math.pi, theta)
    if return_stats:
        return theta, out.size / proposed
    return theta


def _check_kappa_vec(kappa_vec):
    k = np.asarray(kappa_vec, dtype=np.float64)
    if k.ndim != 1 or k.size < 2 or np.any(k <= 0):
        raise PreconditionError("kappa vector needs >= 2 strictly positive entries")
    if abs(np.sum(k * k) - 1.0) > 1e-9:
        raise PreconditionError("kappa vector must satisfy sum kappa_i^2 = 1")
    return k


def _unnormalized_sphere_density(z, k):
    return np.sum(z * z / (k * k), axis=-1) ** (-(k.size + 1) / 2.0)


def palm_normal_density_sphere(z, kappa_vec, quad=None):
    """Palm density of the unit normal w.r.t. the uniform probability on the sphere."""
    from .inversion_hd import sphere_quadrature

    k = _check_kappa_vec(kappa_vec)
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != k.size:
        raise PreconditionError("dimension mismatch between z and kappa")
    if np.any(np.abs(np.linalg.norm(z, axis=-1) - 1.0) > 1e-9):
        raise PreconditionError("z must be unit vectors")
    q = quad if quad is not None else sphere_quadrature(k.size)
    norm = float(np.sum(q.weights * _unnormalized_sphere_density(q.nodes, k)))
    out = _unnormalized_sphere_density(z, k) / norm
    return out if np.ndim(out) else float(out)


def sample_palm_normals(kappa_vec, n: int, seed: int) -> np.ndarray:
    """Unit normals drawn from the Palm normal density by rejection from the uniform sphere law."""
    k = _check_kappa_vec(kappa_vec)
    if n < 1:
        raise PreconditionError("n must be >= 1")
    d = k.size
    kmax = float(np.max(k))
    rng = _rng.substream(seed, _rng.SAMPLER, 1)
    chunks = []
    got = 0
    batch = max(4 * n, 1024)
    while got < n:
        z = rng.standard_normal((batch, d))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        ratio = (kmax * kmax * np.sum(z * z / (k * k), axis=1)) ** (-(d + 1) / 2.0)
        acc = z[rng.uniform(0.0, 1.0, batch) < ratio]
        chunks.append(acc)
        got += acc.shape[0]
    return np.concatenate(chunks)[:n]
