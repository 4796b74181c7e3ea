import math
import os
import pickle
import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from aniso import estimators, field_sim, pipeline
from aniso.errors import AnisoError

MC_KAPPAS = (0.0, 0.5, 0.9)
MC_LEVELS = (0.0, 1.0, 2.0)
MC_SEEDS = 200
MC_THETA0 = 1.0
MC_GRID = 512
MC_DOMAIN = 100.0
MC_BLOCKS = (10, 20, 25)


@dataclass
class LevelRecord:
    kappa_C: float
    theta_C: float
    Cn: float
    Sn: float
    p_values: dict
    V2: dict
    kappa_lkc: float = float("nan")
    R_hat: float = float("nan")
    euler: float = float("nan")
    lkc_refused: bool = False
    lkc_truncated: bool = False


@dataclass
class SeedRecord:
    kappa: float
    seed: int
    kappa_grad: float
    theta_grad: float
    levels: dict = field(default_factory=dict)


def _analyze_seed(kappa, seed):
    grid = field_sim.simulate(field_sim.SimConfig.from_kappa(
        kappa, grid_rows=MC_GRID, grid_cols=MC_GRID, domain_size=MC_DOMAIN, theta0=MC_THETA0,
        seed=seed))
    og = estimators.estimate_oracle_grad(grid)
    rec = SeedRecord(kappa, seed, og.kappa, og.theta0)
    for u in MC_LEVELS:
        res = pipeline.analyze(grid, u, methods=("contour", "lkc"))
        est = res.estimates["contour"]
        cn, sn = res.palm.normalized
        pv, v2 = {}, {}
        for N in MC_BLOCKS:
            t = res.test(N)
            pv[N], v2[N] = t.p_value, t.V2_hat
        lr = LevelRecord(est.kappa, est.theta0, cn, sn, pv, v2,
                         euler=res.lkc_summary.euler_char)
        if "lkc" in res.estimates:
            d = res.estimates["lkc"]
            lr.kappa_lkc, lr.R_hat = d.kappa, d.diagnostics["R_hat"]
            lr.lkc_truncated = d.diagnostics["truncated"]
        else:
            lr.lkc_refused = True
        rec.levels[u] = lr
    return rec


class MCStudy:
    """Per-seed results of the desk-scale simulation study."""

    def __init__(self, records):
        self.records = records

    def select(self, kappa):
        return [r for r in self.records if r.kappa == kappa]

    def level_values(self, kappa, u, attr):
        return np.array([getattr(r.levels[u], attr) for r in self.select(kappa)], dtype=float)

    def p_values(self, kappa, u, N):
        return np.array([r.levels[u].p_values[N] for r in self.select(kappa)])

    def V2(self, kappa, u, N):
        return np.array([r.levels[u].V2[N] for r in self.select(kappa)])

    def seed_values(self, kappa, attr):
        return np.array([getattr(r, attr) for r in self.select(kappa)], dtype=float)


def run_mc_study(n_seeds=MC_SEEDS):
    records = []
    t0 = time.time()
    for kappa in MC_KAPPAS:
        for seed in range(n_seeds):
            try:
                records.append(_analyze_seed(kappa, seed))
            except AnisoError as exc:  # pragma: no cover - reported in the study
                print(f"seed {seed} kappa {kappa} failed: {exc}")
    print(f"\nMonte-Carlo study: {len(records)} fields in {time.time() - t0:.0f}s")
    return MCStudy(records)


@pytest.fixture(scope="session")
def mc_study():
    # Optional on-disk cache for development runs; never set in the reference run.
    cache = os.environ.get("ANISO_MC_CACHE")
    if cache and os.path.exists(cache):
        with open(cache, "rb") as fh:
            return pickle.load(fh)
    study = run_mc_study()
    if cache:
        with open(cache, "wb") as fh:
            pickle.dump(study, fh)
    return study


def sample_grid(f, lo, hi, n):
    """FieldGrid sampling f(x, y) on the square [lo, hi]^2 with n points per side."""
    xs = np.linspace(lo, hi, n)
    X, Y = np.meshgrid(xs, xs)
    h = (hi - lo) / (n - 1)
    return field_sim.FieldGrid(f(X, Y), dx=h, dy=h, origin=(lo, lo))


def circ_mean_axial(theta):
    """Mean of an axial (mod pi) angle sample, in (-pi/2, pi/2]."""
    return 0.5 * math.atan2(np.mean(np.sin(2 * theta)), np.mean(np.cos(2 * theta)))


ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    """Store a verdict for the summary and echo it in the test's own output."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
