"""Block-variance chi-squared test of quasi-isotropy from contour integrals.

With raw cell integrals (C_i, S_i) on an N x N partition,

    V2_hat = sum_i [(C_i - C_bar)^2 + (S_i - S_bar)^2] / (2 (N^2 - 1))
    Q      = (C^2 + S^2) / (N^2 V2_hat)

and Q is asymptotically chi-squared with two degrees of freedom under
quasi-isotropy, so the p-value is exp(-Q / 2).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateInputError, PreconditionError
from .palm_stats import CellStats, PalmSummary


@dataclass
class IsotropyTestResult:
    Q: float
    V2_hat: float
    N: int
    p_value: float
    n_nonempty_cells: int

    def reject(self, alpha: float = 0.05) -> bool:
        return self.p_value < alpha

    def to_dict(self, alpha: float | None = None) -> dict:
        out = asdict(self)
        if alpha is not None:
            out["alpha"] = alpha
            out["reject"] = self.reject(alpha)
        return out


def chi2_cdf_2dof(x: float) -> float:
    if x < 0:
        raise PreconditionError("chi-squared argument must be >= 0")
    return -math.expm1(-0.5 * x)


def chi2_sf_2dof(x: float) -> float:
    if x < 0:
        raise PreconditionError("chi-squared argument must be >= 0")
    return math.exp(-0.5 * x)


def block_variance(C_cells, S_cells) -> float:
    c = np.asarray(C_cells, dtype=np.float64).ravel()
    s = np.asarray(S_cells, dtype=np.float64).ravel()
    m = c.size
    if m < 4:
        raise PreconditionError("need N^2 >= 4 cells")
    return float((np.sum((c - c.mean()) ** 2) + np.sum((s - s.mean()) ** 2)) / (2.0 * (m - 1)))


def q_statistic(C: float, S: float, C_cells, S_cells):
    """(Q, V2_hat) from global and per-cell raw integrals."""
    v2 = block_variance(C_cells, S_cells)
    if not v2 > 0:
        raise DegenerateInputError("block variance is zero: all cell statistics are identical")
    m = np.asarray(C_cells).size
    return (C * C + S * S) / (m * v2), v2


def chi2_contour_test(summary: PalmSummary, cells: CellStats) -> IsotropyTestResult:
    N = int(cells.grid_n)
    if N * N < 4:
        raise PreconditionError("the partition needs N^2 >= 4 cells")
    if cells.n_nonempty < 2:
        raise DegenerateInputError("need at least 2 non-empty cells")
    Q, v2 = q_statistic(summary.C, summary.S, cells.C, cells.S)
    return IsotropyTestResult(float(Q), v2, N, chi2_sf_2dof(Q), cells.n_nonempty)


def default_blocks(level: float) -> int:
    """Partition side used at desk scale: 25 near |u| = 1, else 10."""
    return 25 if abs(abs(level) - 1.0) < 0.5 else 10
