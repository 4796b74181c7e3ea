"""Top-level anisotropy estimators built on the contour and LKC summaries."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import elliptic, inversion_hd, lkc
from .errors import ConvergenceError, DegenerateInputError, PreconditionError
from .field_sim import FieldGrid
from .palm_stats import PalmSummary


class Method(str, enum.Enum):
    CONTOUR = "Contour"
    LKC = "LKC"
    COMBINED = "Combined"
    ORACLE_GRAD = "OracleGrad"
    PALM_HD = "PalmHD"


@dataclass
class AnisotropyEstimate:
    method: Method
    kappa: object
    theta0: object
    F_stat: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def plain(x):
            return x.tolist() if isinstance(x, np.ndarray) else x

        return {
            "method": Method(self.method).value,
            "kappa": plain(self.kappa),
            "theta0": plain(self.theta0),
            "F_stat": self.F_stat,
            "diagnostics": {k: plain(v) for k, v in self.diagnostics.items()},
        }


def reduce_angle(theta: float) -> float:
    """Reduce a direction angle to (-pi/2, pi/2]."""
    t = theta - math.pi * math.floor(theta / math.pi + 0.5)
    if t <= -math.pi / 2:
        t += math.pi
    return t


def contour_statistic(summary: PalmSummary):
    """(F, theta0_hat) with F = sqrt(C^2 + S^2) / |L| and theta0_hat = atan2(S, C) / 2."""
    if not summary.total_length > 0:
        raise DegenerateInputError("zero-length contour")
    F = math.hypot(summary.C, summary.S) / summary.total_length
    return F, reduce_angle(0.5 * math.atan2(summary.S, summary.C))


def kappa_from_F(F: float):
    """(kappa, clamped) inverting g, with F beyond the range of g clamped."""
    g_max = elliptic.link_range(elliptic.LinkKind.G)[1]
    if F >= g_max:
        return elliptic.KAPPA_MAX, F > g_max
    return elliptic.invert_link(elliptic.LinkKind.G, F), False


def estimate_contour_2d(summary: PalmSummary) -> AnisotropyEstimate:
    F, theta = contour_statistic(summary)
    diag = {"total_length": summary.total_length, "C": summary.C, "S": summary.S}
    if summary.C == 0.0 and summary.S == 0.0:
        diag["isotropic"] = True
        return AnisotropyEstimate(Method.CONTOUR, 0.0, 0.0, 0.0, diag)
    kappa, clamped = kappa_from_F(F)
    if clamped:
        diag["clamped"] = True
    return AnisotropyEstimate(Method.CONTOUR, kappa, theta, F, diag)


def estimate_lkc(summary: lkc.LKCSummary) -> AnisotropyEstimate:
    est = lkc.estimate_kappa_lkc(summary)
    diag = {"R_hat": est.R_hat, "P_hat": est.P_hat, "GC_hat": est.GC_hat,
            "truncated": est.truncated, "w_hat": summary.w_hat, "euler_char": summary.euler_char}
    return AnisotropyEstimate(Method.LKC, est.kappa, float("nan"), float("nan"), diag)


def estimate_combined(palm: PalmSummary, lkc_summary: lkc.LKCSummary, alpha1: float = 0.5
                      ) -> AnisotropyEstimate:
    F, theta = contour_statistic(palm)
    est = lkc.estimate_kappa_lkc(lkc_summary)
    kappa = lkc.combine_estimates(est.R_hat, F, alpha1)
    diag = {"R_hat": est.R_hat, "alpha1": alpha1}
    return AnisotropyEstimate(Method.COMBINED, kappa, theta, F, diag)


def estimate_palm_hd(summary: PalmSummary, box=None, quad=None, tol: float = 1e-10,
                     max_iter: int = 2_000_000) -> AnisotropyEstimate:
    """Eigen-decompose the normal covariance and invert its eigenvalues.

    Directions are returned as columns matched to the descending kappa. The
    Palm normal concentrates along directions of large kappa, so the largest
    eigenvalue of the normal covariance pairs with the largest kappa.
    """
    cov = np.asarray(summary.normal_cov, dtype=np.float64)
    d = cov.shape[0]
    if cov.shape != (d, d) or not np.allclose(cov, cov.T, atol=1e-12):
        raise PreconditionError("normal covariance must be a symmetric matrix")
    vals, vecs = np.linalg.eigh(cov)
    if vals[0] < -1e-12 or abs(vals.sum() - 1.0) > 1e-6:
        raise PreconditionError("normal covariance must be PSD with unit trace")
    diag = {}
    if vals[-1] - vals[0] <= 1e-12:
        kappa = np.full(d, 1.0 / math.sqrt(d))
        diag["isotropic"] = True
        directions = vecs
        pi_hat = np.ones(d)
    else:
        Z = np.clip(vals, 1e-300, None)
        Z = Z / Z.sum()
        pi_hat, kappa, report = inversion_hd.invert_palm(Z, box=box, quad=quad, tol=tol,
                                                         max_iter=max_iter)
        if not report.converged:
            raise ConvergenceError(
                f"Palm inversion did not converge (residual {report.final_residual:.3g} after "
                f"{report.n_iter} steps); target may lie outside the image of the box {report.box}")
        directions = vecs[:, report.permutation]
        diag.update({"n_iter": report.n_iter, "final_residual": report.final_residual,
                     "Q": report.Q})
    diag["Z"] = vals[::-1].copy()
    diag["pi_hat"] = pi_hat
    # fix column signs: largest-magnitude entry positive
    idx = np.argmax(np.abs(directions), axis=0)
    directions = directions * np.sign(directions[idx, np.arange(d)])
    theta = reduce_angle(math.atan2(directions[1, 0], directions[0, 0])) if d == 2 else directions
    if d == 2:
        diag["directions"] = directions
        k2 = kappa[1] / kappa[0]
        diag["kappa_2d"] = math.sqrt(max(0.0, 1.0 - k2 * k2))
    return AnisotropyEstimate(Method.PALM_HD, kappa, theta, float("nan"), diag)


def gradient_covariance(grid: FieldGrid) -> np.ndarray:
    """Empirical covariance of centred finite-difference gradients at interior pixels."""
    v = grid.values
    if v.shape[0] < 3 or v.shape[1] < 3:
        raise PreconditionError("grid must be at least 3x3")
    gx = (v[1:-1, 2:] - v[1:-1, :-2]) / (2 * grid.dx)
    gy = (v[2:, 1:-1] - v[:-2, 1:-1]) / (2 * grid.dy)
    g = np.column_stack([gx.ravel(), gy.ravel()])
    g = g - g.mean(axis=0)
    return g.T @ g / g.shape[0]


def estimate_oracle_grad(grid: FieldGrid) -> AnisotropyEstimate:
    lam = gradient_covariance(grid)
    vals, vecs = np.linalg.eigh(lam)
    l2, l1 = vals
    scale = max(float(np.max(np.abs(grid.values))), 1.0)
    if not l1 > 1e-24 * scale * scale:
        raise DegenerateInputError("gradient covariance is degenerate")
    kappa = math.sqrt(max(0.0, 1.0 - max(l2, 0.0) / l1))
    theta = reduce_angle(math.atan2(vecs[1, 1], vecs[0, 1]))
    return AnisotropyEstimate(Method.ORACLE_GRAD, kappa, theta, float("nan"),
                              {"lambda1": float(l1), "lambda2": float(l2)})
