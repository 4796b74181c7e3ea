"""Monte-Carlo calibration and power of the isotropy tests.

Three tests are compared on simulated fields:

* ``chi2-contour``: the model-agnostic block-variance chi-squared test.
* ``mb-contour``: rejects for large F, with the null law of F simulated at kappa = 0.
* ``mb-lkc``: rejects for small R_hat, with the null law of R_hat simulated at kappa = 0.

The model-based tests need the true covariance family to simulate their
null, which is what the first test avoids.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import estimators, pipeline
from .errors import AnisoError, PreconditionError
from .field_sim import SimConfig, simulate

LEVELS = (0.01, 0.05, 0.1)
METHODS = ("chi2-contour", "mb-contour", "mb-lkc")


@dataclass(frozen=True)
class PowerConfig:
    kappa: float
    u: float
    N: int
    n_reps: int = 200
    grid: int = 512
    domain: float = 100.0
    theta0: float = 1.0
    points: int = pipeline.DEFAULT_POINTS


@dataclass
class ReplicateResult:
    p_chi2: float = float("nan")
    F: float = float("nan")
    R_hat: float = float("nan")
    error: str = ""


def replicate_seed(base_seed: int, rep: int) -> int:
    """Independent 64-bit seed for replicate ``rep`` of a study seeded by ``base_seed``."""
    state = np.random.SeedSequence([int(base_seed), int(rep)]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def max_workers() -> int:
    env = os.environ.get("ANISO_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def run_replicate(cfg: PowerConfig, kappa: float, seed: int, want_lkc: bool) -> ReplicateResult:
    out = ReplicateResult()
    try:
        grid = simulate(SimConfig.from_kappa(kappa, grid_rows=cfg.grid, grid_cols=cfg.grid,
                                             domain_size=cfg.domain, theta0=cfg.theta0, seed=seed))
        methods = ("contour", "lkc") if want_lkc else ("contour",)
        res = pipeline.analyze(grid, cfg.u, cfg.points, methods=methods)
        out.F = estimators.contour_statistic(res.palm)[0]
        out.p_chi2 = res.test(cfg.N).p_value
        if want_lkc and "lkc" in res.estimates:
            out.R_hat = res.estimates["lkc"].diagnostics["R_hat"]
    except AnisoError as exc:
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def _run_many(tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [run_replicate(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(run_replicate, *zip(*tasks), chunksize=max(1, len(tasks) // (4 * workers))))


def ks_uniform(p) -> float:
    """Kolmogorov-Smirnov distance between the empirical law of ``p`` and Unif(0, 1)."""
    x = np.sort(np.asarray(p, dtype=np.float64))
    n = x.size
    if n == 0:
        return float("nan")
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - x), np.max(x - (i - 1) / n)))


def mc_p_values(stat, null, upper: bool) -> np.ndarray:
    """Monte-Carlo p-values (1 + #{null at least as extreme}) / (1 + n_null)."""
    null = np.sort(np.asarray(null, dtype=np.float64))
    stat = np.asarray(stat, dtype=np.float64)
    n = null.size
    if upper:
        count = n - np.searchsorted(null, stat, side="left")
    else:
        count = np.searchsorted(null, stat, side="right")
    p = (1.0 + count) / (1.0 + n)
    return np.where(np.isnan(stat), np.nan, p)


@dataclass
class PowerRow:
    method: str
    kappa: float
    u: float
    N: int
    level: float
    rejection_rate: float
    ks_distance: float
    n_reps: int
    n_failed: int


@dataclass
class PowerStudy:
    rows: list
    p_values: dict  # (method, kappa, u, N) -> array of p-values

    def rows_csv(self) -> str:
        buf = io.StringIO()
        fields = list(PowerRow.__dataclass_fields__)
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in asdict(r).items()})
        return buf.getvalue()

    def ecdf_csv(self) -> str:
        """Long-format empirical CDF of p-values, one row per (configuration, p)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "kappa", "u", "N", "p_value", "ecdf"])
        for (m, k, u, N), p in self.p_values.items():
            p = np.sort(p[~np.isnan(p)])
            for i, x in enumerate(p, 1):
                w.writerow([m, repr(k), repr(u), N, repr(float(x)), repr(i / p.size)])
        return buf.getvalue()

    def rate(self, method: str, kappa: float, u: float, N: int, level: float = 0.05) -> float:
        for r in self.rows:
            if (r.method, r.kappa, r.u, r.N, r.level) == (method, kappa, u, N, level):
                return r.rejection_rate
        raise KeyError((method, kappa, u, N, level))


def run_calibration_power(configs, seed: int = 0, methods=("chi2-contour",), n_null: int = 1000,
                          workers: int | None = None) -> PowerStudy:
    """Rejection rates and p-value uniformity for every configuration.

    Replicate ``r`` of every configuration uses the seed
    ``replicate_seed(seed, r)``; model-based nulls use a disjoint seed range.
    Failed replicates (empty level sets, LKC refusals) are counted and
    excluded from the rates.
    """
    configs = list(configs)
    for c in configs:
        if c.n_reps < 50:
            raise PreconditionError("n_reps must be >= 50")
    bad = set(methods) - set(METHODS)
    if bad:
        raise PreconditionError(f"unknown methods: {sorted(bad)}")
    workers = max_workers() if workers is None else max(1, int(workers))
    want_lkc = "mb-lkc" in methods
    want_mb = want_lkc or "mb-contour" in methods

    nulls = {}
    if want_mb:
        keys = sorted({(c.u, c.grid, c.domain, c.points) for c in configs})
        for key in keys:
            u, grid, domain, points = key
            ncfg = PowerConfig(0.0, u, 2, n_null, grid, domain, 0.0, points)
            tasks = [(ncfg, 0.0, replicate_seed(seed, 10**9 + r), want_lkc) for r in range(n_null)]
            res = _run_many(tasks, workers)
            nulls[key] = (np.array([r.F for r in res]), np.array([r.R_hat for r in res]))

    rows, pvals = [], {}
    for c in configs:
        tasks = [(c, c.kappa, replicate_seed(seed, r), want_lkc) for r in range(c.n_reps)]
        res = _run_many(tasks, workers)
        per_method = {}
        if "chi2-contour" in methods:
            per_method["chi2-contour"] = np.array([r.p_chi2 for r in res])
        if want_mb:
            nF, nR = nulls[(c.u, c.grid, c.domain, c.points)]
            if "mb-contour" in methods:
                per_method["mb-contour"] = mc_p_values([r.F for r in res], nF[~np.isnan(nF)], True)
            if "mb-lkc" in methods:
                per_method["mb-lkc"] = mc_p_values([r.R_hat for r in res], nR[~np.isnan(nR)], False)
        for m, p in per_method.items():
            ok = p[~np.isnan(p)]
            failed = int(p.size - ok.size)
            pvals[(m, c.kappa, c.u, c.N)] = p
            ks = ks_uniform(ok)
            for lv in LEVELS:
                rate = float(np.mean(ok < lv)) if ok.size else float("nan")
                rows.append(PowerRow(m, c.kappa, c.u, c.N, lv, rate, ks, c.n_reps, failed))
    return PowerStudy(rows, pvals)


def rejection_band(level: float, n: int, z: float = 3.0):
    """Binomial band level +- z sqrt(level (1 - level) / n)."""
    half = z * math.sqrt(level * (1 - level) / n)
    return max(0.0, level - half), level + half

