"""Field-to-estimate orchestration shared by the CLI and the Monte-Carlo harness."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import contour, estimators, isotropy_test, lkc, palm_stats
from .errors import AnisoError, EmptyLevelSetError
from .field_sim import FieldGrid

DEFAULT_POINTS = 1_000_000


@dataclass
class LevelAnalysis:
    """Everything computed from one grid at one level."""

    level: float
    contours: contour.ContourSet
    palm: palm_stats.PalmSummary
    lkc_summary: lkc.LKCSummary | None
    window: tuple
    estimates: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    def cells(self, N: int) -> palm_stats.CellStats:
        return palm_stats.cell_stats(self.contours, self.window, N)

    def test(self, N: int) -> isotropy_test.IsotropyTestResult:
        return isotropy_test.chi2_contour_test(self.palm, self.cells(N))


def extract(grid: FieldGrid, level: float, points: int = DEFAULT_POINTS,
            binary: bool = False, smoothing: float = 0.0) -> contour.ContourSet:
    if binary:
        paths = contour.extract_binary_boundary(grid.values > 0.5, smoothing, grid.dx, grid.dy,
                                                grid.origin)
        level = 0.5
    else:
        paths = contour.extract_level_set(grid, level)
    if not paths:
        raise EmptyLevelSetError(f"empty level set at u = {level}")
    return contour.resample_and_normals(paths, points, level=level)


def analyze(grid: FieldGrid, level: float, points: int = DEFAULT_POINTS,
            methods=("contour",), binary: bool = False, smoothing: float = 0.0,
            alpha1: float = 0.5) -> LevelAnalysis:
    """Extract the level set and run the requested estimators.

    ``methods`` is any subset of {contour, lkc, combined, oracle, palm-hd}.
    Estimator failures (for instance the LKC refusal near the mean level)
    are stored in ``errors`` keyed by method rather than raised.
    """
    cs = extract(grid, level, points, binary, smoothing)
    palm = palm_stats.summarize(cs)
    lvl = 0.5 if binary else level
    lkc_sum = None
    if {"lkc", "combined"} & set(methods):
        lkc_sum = lkc.lkc_summarize(grid, lvl, cs)
    out = LevelAnalysis(lvl, cs, palm, lkc_sum, grid.window)
    runners = {
        "contour": lambda: estimators.estimate_contour_2d(palm),
        "lkc": lambda: estimators.estimate_lkc(lkc_sum),
        "combined": lambda: estimators.estimate_combined(palm, lkc_sum, alpha1),
        "oracle": lambda: estimators.estimate_oracle_grad(grid),
        "palm-hd": lambda: estimators.estimate_palm_hd(palm),
    }
    for m in methods:
        try:
            out.estimates[m] = runners[m]()
        except AnisoError as exc:
            out.errors[m] = exc
    return out


def values_at_levels(grid: FieldGrid, levels, points: int = DEFAULT_POINTS):
    """Contour estimates (kappa, theta0) at several levels of one grid."""
    res = []
    for u in levels:
        a = analyze(grid, u, points)
        e = a.estimates["contour"]
        res.append((e.kappa, e.theta0))
    return np.array(res)
