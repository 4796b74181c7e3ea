"""Lipschitz-Killing curvature summaries of an excursion set and the LKC estimator.

From the excursion area fraction, the boundary length L and the Euler
characteristic chi of {X > u} in a window T:

    w_hat  = -Phi^-1(A / |T|)
    P_hat  = sqrt(pi / 2) L / (|T| phi(w_hat))        (estimates kappa_1 E(kappa) / sigma)
    GC_hat = 2 pi chi / (|T| w_hat phi(w_hat))         (estimates kappa_1 kappa_2 / sigma^2)
    R_hat  = GC_hat / P_hat^2                          (estimates R(kappa))
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

from . import elliptic
from .contour import ContourSet, turning_number
from .errors import DegenerateInputError, LKCRefusal, PreconditionError
from .field_sim import FieldGrid

W_MIN = 0.2
KAPPA_COMBINE_MAX = 1.0 - 1e-6
_SQRT2PI = math.sqrt(2 * math.pi)

# Rational approximation of the normal quantile (Acklam), central and tail pieces.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def norm_pdf(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.exp(-0.5 * x * x) / _SQRT2PI
    return out if out.ndim else float(out)


def norm_cdf(x):
    out = special.ndtr(np.asarray(x, dtype=np.float64))
    return out if np.ndim(out) else float(out)


def _acklam(p):
    q = np.empty_like(p)
    lo = p < _P_LOW
    hi = p > 1 - _P_LOW
    mid = ~(lo | hi)
    if np.any(mid):
        r = p[mid] - 0.5
        s = r * r
        num = ((((_A[0] * s + _A[1]) * s + _A[2]) * s + _A[3]) * s + _A[4]) * s + _A[5]
        den = ((((_B[0] * s + _B[1]) * s + _B[2]) * s + _B[3]) * s + _B[4]) * s + 1.0
        q[mid] = r * num / den
    for mask, sign, pp in ((lo, 1.0, p), (hi, -1.0, 1.0 - p)):
        if np.any(mask):
            t = np.sqrt(-2.0 * np.log(pp[mask]))
            num = ((((_C[0] * t + _C[1]) * t + _C[2]) * t + _C[3]) * t + _C[4]) * t + _C[5]
            den = (((_D[0] * t + _D[1]) * t + _D[2]) * t + _D[3]) * t + 1.0
            q[mask] = sign * num / den
    return q


def norm_ppf(p):
    """Standard normal quantile: rational first guess, then one Halley step on Phi."""
    p = np.asarray(p, dtype=np.float64)
    if not np.all((p > 0) & (p < 1)):
        raise PreconditionError("quantile argument must lie in (0, 1)")
    flat = p.reshape(-1)
    x = _acklam(flat)
    # Work with the smaller tail to keep the residual accurate.
    upper = flat > 0.5
    e = np.where(upper, special.ndtr(-x) - (1.0 - flat), special.ndtr(x) - flat)
    e = np.where(upper, -e, e)
    u = e * _SQRT2PI * np.exp(0.5 * x * x)
    x = x - u / (1.0 + 0.5 * x * u)
    out = x.reshape(p.shape)
    return out if out.ndim else float(out)


@dataclass
class LKCSummary:
    area_fraction: float
    boundary_length: float
    euler_char: float
    w_hat: float
    window_area: float
    n_closed: int = 0
    n_open: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def euler_characteristic(paths) -> float:
    """Sum of turning numbers over closed paths (excursion loops +1, holes -1)."""
    return float(sum(turning_number(p) for p in paths if p.closed))


def lkc_summarize(grid_or_mask, level: float, contours: ContourSet, window_area: float | None = None
                  ) -> LKCSummary:
    """Area fraction, boundary length and Euler characteristic of {X > level}.

    ``grid_or_mask`` is a FieldGrid (thresholded at ``level``) or a boolean
    excursion mask, in which case ``window_area`` must be given unless it can
    be taken from unit pixel spacing.
    """
    if isinstance(grid_or_mask, FieldGrid):
        mask = grid_or_mask.values > level
        area = grid_or_mask.area if window_area is None else float(window_area)
    else:
        mask = np.asarray(grid_or_mask).astype(bool)
        rows, cols = mask.shape
        area = float((rows - 1) * (cols - 1)) if window_area is None else float(window_area)
    frac = float(np.count_nonzero(mask)) / mask.size
    if frac <= 0.0 or frac >= 1.0:
        raise DegenerateInputError("excursion set is empty or covers the whole window")
    closed = [p for p in contours.paths if p.closed]
    return LKCSummary(
        area_fraction=frac,
        boundary_length=float(contours.total_length),
        euler_char=euler_characteristic(closed),
        w_hat=-float(norm_ppf(frac)),
        window_area=area,
        n_closed=len(closed),
        n_open=len(contours.paths) - len(closed),
    )


@dataclass
class LKCEstimate:
    kappa: float
    R_hat: float
    truncated: bool
    P_hat: float
    GC_hat: float

    def __iter__(self):
        yield from (self.kappa, self.R_hat, self.truncated)


def kappa_from_R(R_hat: float):
    """(kappa, truncated) from a ratio estimate, truncating outside [0, 4/pi^2]."""
    if R_hat < 0:
        return 1.0, True
    if R_hat > elliptic.R_MAX:
        return 0.0, True
    return elliptic.invert_link(elliptic.LinkKind.R, R_hat), False


def estimate_kappa_lkc(summary: LKCSummary, w_min: float = W_MIN) -> LKCEstimate:
    w = summary.w_hat
    if not abs(w) > w_min:
        raise LKCRefusal(f"|w_hat| = {abs(w):.3g} <= {w_min}: curvature normalization is singular "
                         "near the mean level")
    T = summary.window_area
    phi = norm_pdf(w)
    P = math.sqrt(math.pi / 2) * summary.boundary_length / (T * phi)
    if not P > 0:
        raise DegenerateInputError("boundary length is zero")
    GC = 2 * math.pi * summary.euler_char / (T * w * phi)
    R = GC / (P * P)
    kappa, truncated = kappa_from_R(R)
    return LKCEstimate(kappa, R, truncated, P, GC)


def _golden(f, lo, hi, tol=1e-12, max_iter=200):
    inv = (math.sqrt(5) - 1) / 2
    c = hi - inv * (hi - lo)
    d = lo + inv * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if hi - lo < tol:
            break
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - inv * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + inv * (hi - lo)
            fd = f(d)
    return 0.5 * (lo + hi)


def combine_estimates(R_hat: float, F: float, alpha1: float, n_grid: int = 10_000) -> float:
    """Least-squares blend of the LKC ratio and the contour statistic.

    Minimises alpha1 (R_hat - R(k))^2 + (1 - alpha1) (F - g(k))^2 over
    k in [0, 1 - 1e-6]: dense grid search, then golden-section refinement in
    the bracketing grid cell pair.
    """
    if not 0.0 <= alpha1 <= 1.0:
        raise PreconditionError("alpha1 must lie in [0, 1]")
    a2 = 1.0 - alpha1

    def obj(k):
        k = np.asarray(k)
        return alpha1 * (R_hat - elliptic.R_values(k)) ** 2 + a2 * (F - elliptic.g_values(k)) ** 2

    ks = np.linspace(0.0, KAPPA_COMBINE_MAX, n_grid)
    vals = obj(ks)
    i = int(np.argmin(vals))
    lo, hi = ks[max(i - 1, 0)], ks[min(i + 1, n_grid - 1)]
    k = _golden(lambda t: float(obj(t)), lo, hi)
    cands = np.array([lo, k, hi])
    return float(cands[int(np.argmin(obj(cands)))])
