"""Complete elliptic integrals and the anisotropy link functions g and R.

The integrals use Carlson's symmetric forms from scipy. All functions take
the modulus ``k`` (not the parameter ``m = k**2``).

``g(kappa)`` is the Palm mean of ``cos 2(Theta - theta0)`` for the angle
density proportional to ``(1 - kappa^2 cos^2)^(-3/2)``. It is evaluated as

    g = (2 B - (1 - k^2) Pi(k^2, k)) / ((1 - k^2) Pi(k^2, k)),
    B = RF(0, 1-k^2, 1) - RD(0, 1-k^2, 1) / 3  (= int_0^{pi/2} cos^2 / Delta),

which has no cancellation for small k, plus a series branch below 1e-4.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .errors import PreconditionError

KAPPA_MAX = 1.0 - 1e-8
SERIES_THRESHOLD = 1e-4
R_SERIES_THRESHOLD = 1e-3
R_MAX = 4.0 / math.pi**2


class LinkKind(str, enum.Enum):
    G = "G"
    R = "R"


def _check_modulus(k, allow_one=False):
    k = float(k)
    ok = 0.0 <= k <= 1.0 if allow_one else 0.0 <= k < 1.0
    if not ok:
        raise PreconditionError(f"modulus must lie in [0, 1{']' if allow_one else ')'}, got {k}")
    return k


def ellip_K(k: float) -> float:
    k = _check_modulus(k)
    return float(special.elliprf(0.0, 1.0 - k * k, 1.0))


def ellip_E(k: float) -> float:
    k = _check_modulus(k, allow_one=True)
    if k == 1.0:
        return 1.0
    y = 1.0 - k * k
    return float(special.elliprf(0.0, y, 1.0) - k * k * special.elliprd(0.0, y, 1.0) / 3.0)


def ellip_Pi(n: float, k: float) -> float:
    k = _check_modulus(k)
    if not n < 1.0:
        raise PreconditionError(f"characteristic n must be < 1, got {n}")
    y = 1.0 - k * k
    return float(special.elliprf(0.0, y, 1.0) + n * special.elliprj(0.0, y, 1.0, 1.0 - n) / 3.0)


def _cos2_over_delta(k: float) -> float:
    y = 1.0 - k * k
    return float(special.elliprf(0.0, y, 1.0) - special.elliprd(0.0, y, 1.0) / 3.0)


def cos2_fraction(kappa: float) -> float:
    """Palm mean of cos^2(Theta - theta0), i.e. (1 + g) / 2."""
    return 0.5 * (1.0 + g_of_kappa(kappa))


def _g_series(k: float) -> float:
    k2 = k * k
    return k2 * (3.0 / 8.0 + k2 * (3.0 / 16.0 + k2 * 111.0 / 1024.0))


def g_of_kappa(kappa: float) -> float:
    k = _check_modulus(kappa)
    if k < SERIES_THRESHOLD:
        return _g_series(k)
    y = 1.0 - k * k
    denom = y * ellip_Pi(k * k, k)
    return (2.0 * _cos2_over_delta(k) - denom) / denom


def R_of_kappa(kappa: float) -> float:
    k = _check_modulus(kappa, allow_one=True)
    if k == 1.0:
        return 0.0
    if k < R_SERIES_THRESHOLD:
        # R is flat to fourth order at 0; the series keeps it monotone in floating point.
        return R_MAX * (1.0 - 3.0 * k**4 / 32.0)
    return math.sqrt(1.0 - k * k) / ellip_E(k) ** 2


def _link(kind):
    kind = LinkKind(kind)
    return g_of_kappa if kind is LinkKind.G else R_of_kappa


def link_range(kind) -> tuple:
    """Closed range of values the link attains on [0, KAPPA_MAX]."""
    if LinkKind(kind) is LinkKind.G:
        return 0.0, g_of_kappa(KAPPA_MAX)
    return R_of_kappa(KAPPA_MAX), R_MAX


def invert_link(kind, y: float, tol: float = 1e-10) -> float:
    """Solve link(kappa) = y on [0, KAPPA_MAX] by bracketed Brent iteration.

    For R, values in [0, R(KAPPA_MAX)] map to KAPPA_MAX, since R is only
    defined up to the singular endpoint.
    """
    kind = LinkKind(kind)
    y = float(y)
    f = _link(kind)
    lo, hi = link_range(kind)
    if kind is LinkKind.G:
        if not 0.0 <= y <= hi:
            raise PreconditionError(f"g value {y} outside [0, {hi}]")
        if y == 0.0:
            return 0.0
        if y == hi:
            return KAPPA_MAX
    else:
        if not 0.0 <= y <= R_MAX:
            raise PreconditionError(f"R value {y} outside [0, 4/pi^2]")
        if y >= R_MAX:
            return 0.0
        if y <= lo:
            return KAPPA_MAX
    k = optimize.brentq(lambda t: f(t) - y, 0.0, KAPPA_MAX, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                        maxiter=200)
    return float(k)


@dataclass
class LinkFunctionTable:
    kind: LinkKind
    knots: np.ndarray  # (n, 2) columns kappa, value

    def __post_init__(self):
        self.kind = LinkKind(self.kind)
        self.knots = np.asarray(self.knots, dtype=np.float64).reshape(-1, 2)
        d = np.diff(self.knots[:, 1])
        if self.kind is LinkKind.G and not np.all(d > 0):
            raise PreconditionError("G table must be strictly increasing")
        if self.kind is LinkKind.R and not np.all(d < 0):
            raise PreconditionError("R table must be strictly decreasing")

    @classmethod
    def build(cls, kind, n: int = 201) -> "LinkFunctionTable":
        f = _link(kind)
        ks = np.linspace(0.0, KAPPA_MAX, n)
        return cls(kind, np.column_stack([ks, [f(k) for k in ks]]))


def link_table_csv(n: int = 201) -> str:
    """CSV text with columns kappa, g, R on an even grid over [0, KAPPA_MAX]."""
    if n < 2:
        raise PreconditionError("need at least 2 table rows")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kappa", "g", "R"])
    for k in np.linspace(0.0, KAPPA_MAX, n):
        w.writerow([repr(float(k)), repr(g_of_kappa(k)), repr(R_of_kappa(k))])
    return buf.getvalue()


def g_values(kappas) -> np.ndarray:
    """Vectorized g over an array of moduli in [0, 1)."""
    k = np.asarray(kappas, dtype=np.float64)
    if np.any((k < 0) | (k >= 1)):
        raise PreconditionError("moduli must lie in [0, 1)")
    k2 = k * k
    y = 1.0 - k2
    rf = special.elliprf(0.0, y, 1.0)
    b = rf - special.elliprd(0.0, y, 1.0) / 3.0
    denom = y * (rf + k2 * special.elliprj(0.0, y, 1.0, y) / 3.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        closed = (2.0 * b - denom) / denom
    series = k2 * (3.0 / 8.0 + k2 * (3.0 / 16.0 + k2 * 111.0 / 1024.0))
    return np.where(k < SERIES_THRESHOLD, series, closed)


def R_values(kappas) -> np.ndarray:
    """Vectorized R over an array of moduli in [0, 1]."""
    k = np.asarray(kappas, dtype=np.float64)
    if np.any((k < 0) | (k > 1)):
        raise PreconditionError("moduli must lie in [0, 1]")
    y = np.maximum(1.0 - k * k, 0.0)
    ys = np.where(k == 1.0, 0.5, y)
    e = special.elliprf(0.0, ys, 1.0) - k * k * special.elliprd(0.0, ys, 1.0) / 3.0
    e = np.where(k == 1.0, 1.0, e)
    return np.where(k < R_SERIES_THRESHOLD, R_MAX * (1.0 - 3.0 * k**4 / 32.0), np.sqrt(y) / e**2)
