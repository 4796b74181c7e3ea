import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage, special

from aniso import elliptic, lkc
from aniso.contour import extract_binary_boundary, resample_and_normals
from aniso.errors import DegenerateInputError, LKCRefusal, PreconditionError
from aniso.lkc import LKCSummary


def disc(n, r, c=None):
    c = (n - 1) / 2 if c is None else c
    i, j = np.mgrid[0:n, 0:n]
    return (i - c) ** 2 + (j - c) ** 2 <= r * r


def mask_summary(mask, smoothing=0.0):
    paths = extract_binary_boundary(mask, smoothing)
    return lkc.lkc_summarize(mask, 0.5, resample_and_normals(paths, 20_000))


def flood_fill_euler(mask):
    """Components minus holes with 4-connected foreground and 8-connected background."""
    m = np.pad(mask, 1)
    _, n_fg = ndimage.label(m, structure=ndimage.generate_binary_structure(2, 1))
    _, n_bg = ndimage.label(~m, structure=ndimage.generate_binary_structure(2, 2))
    return n_fg - (n_bg - 1)


def synthetic_summary(kappa, w, T=1e4, sigma=1.0):
    """Summary carrying the exact expectations of the length and Euler characteristic."""
    k1 = (1 - kappa * kappa) ** -0.25
    k2 = 1 / k1
    phi = lkc.norm_pdf(w)
    L = T * math.sqrt(2 / math.pi) * k1 * elliptic.ellip_E(kappa) * phi / sigma
    chi = T * k1 * k2 / (2 * math.pi * sigma**2) * w * phi
    return LKCSummary(area_fraction=float(lkc.norm_cdf(-w)), boundary_length=L, euler_char=chi,
                      w_hat=w, window_area=T)


class TestNormal:
    def test_pdf_cdf(self):
        assert lkc.norm_pdf(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
        assert lkc.norm_cdf(0.0) == 0.5
        assert lkc.norm_cdf(1.959963984540054) == pytest.approx(0.975, rel=1e-15)

    def test_ppf_against_reference(self):
        p = np.concatenate([np.logspace(-300, -1, 300), np.linspace(0.01, 0.99, 500),
                            1 - np.logspace(-15, -2, 100)])
        np.testing.assert_allclose(lkc.norm_ppf(p), special.ndtri(p), rtol=5e-15, atol=1e-16)

    def test_ppf_known(self):
        assert lkc.norm_ppf(0.5) == 0.0
        assert lkc.norm_ppf(0.975) == pytest.approx(1.959963984540054, rel=1e-15)

    @settings(max_examples=200)
    @given(st.floats(1e-12, 1 - 1e-12))
    def test_ppf_cdf_round_trip(self, p):
        assert float(lkc.norm_cdf(lkc.norm_ppf(p))) == pytest.approx(p, rel=1e-12)

    @settings(max_examples=100)
    @given(st.floats(1e-10, 0.5))
    def test_ppf_antisymmetric(self, p):
        q = 1 - p
        p = 1 - q  # exactly representable pair
        assert lkc.norm_ppf(p) == pytest.approx(-lkc.norm_ppf(q), rel=1e-13, abs=1e-16)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, float("nan")])
    def test_ppf_domain(self, p):
        with pytest.raises(PreconditionError):
            lkc.norm_ppf(p)


class TestEulerCharacteristic:
    def test_disc(self):
        m = disc(120, 30)
        s = mask_summary(m)
        assert abs(s.euler_char - 1) < 0.02
        assert s.area_fraction == pytest.approx(math.pi * 30**2 / m.size, rel=0.02)
        assert s.n_closed == 1 and s.n_open == 0

    def test_annulus(self):
        m = disc(120, 40) & ~disc(120, 15)
        s = mask_summary(m, smoothing=1.0)
        assert abs(s.euler_char) < 0.04
        assert s.n_closed == 2

    def test_two_discs_and_a_hole(self):
        m = disc(200, 30, 50) | disc(200, 30, 140)
        m &= ~disc(200, 10, 50)
        assert round(mask_summary(m).euler_char) == 1

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_flood_fill(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(10, 40))
        m = ndimage.gaussian_filter(rng.standard_normal((n, n)), rng.uniform(0.5, 2.0)) > rng.uniform(-0.3, 0.3)
        m[0, :] = m[-1, :] = False
        m[:, 0] = m[:, -1] = False
        if not m.any():
            m[n // 2, n // 2] = True
        paths = extract_binary_boundary(m)
        assert all(p.closed for p in paths)
        chi = lkc.euler_characteristic(paths)
        assert abs(chi - round(chi)) < 1e-9
        assert round(chi) == flood_fill_euler(m)

    def test_open_paths_excluded(self):
        m = np.zeros((30, 30), bool)
        m[:, :10] = True
        s = mask_summary(m)
        assert s.n_open == 1 and s.euler_char == 0.0

    def test_degenerate(self):
        cs = resample_and_normals(extract_binary_boundary(disc(20, 5)), 100)
        with pytest.raises(DegenerateInputError):
            lkc.lkc_summarize(np.zeros((20, 20), bool), 0.5, cs)


class TestEstimate:
    @pytest.mark.parametrize("kappa", [0.0, 0.3, 0.5, 0.9])
    @pytest.mark.parametrize("w", [-1.5, 1.0, 2.0])
    def test_exact_expectations_recover_kappa(self, kappa, w):
        est = lkc.estimate_kappa_lkc(synthetic_summary(kappa, w))
        assert est.R_hat == pytest.approx(elliptic.R_of_kappa(kappa), rel=1e-12)
        assert abs(est.kappa - kappa) < 1e-6
        k1 = (1 - kappa * kappa) ** -0.25
        assert est.P_hat == pytest.approx(k1 * elliptic.ellip_E(kappa), rel=1e-12)
        assert est.GC_hat == pytest.approx(1.0, rel=1e-12)

    def test_sigma_cancels(self):
        a = lkc.estimate_kappa_lkc(synthetic_summary(0.6, 1.5))
        b = lkc.estimate_kappa_lkc(synthetic_summary(0.6, 1.5, sigma=3.0))
        assert a.kappa == pytest.approx(b.kappa, abs=1e-9)

    def test_refuses_near_mean_level(self):
        with pytest.raises(LKCRefusal):
            lkc.estimate_kappa_lkc(synthetic_summary(0.5, 0.1))
        with pytest.raises(LKCRefusal):
            lkc.estimate_kappa_lkc(synthetic_summary(0.5, -0.2))

    def test_truncation(self):
        assert lkc.kappa_from_R(-0.1) == (1.0, True)
        assert lkc.kappa_from_R(0.5) == (0.0, True)
        s = synthetic_summary(0.5, 2.0)
        s.euler_char = -3.0
        k, R, trunc = lkc.estimate_kappa_lkc(s)
        assert k == 1.0 and trunc and R < 0
        s.euler_char = 1e6
        k, R, trunc = lkc.estimate_kappa_lkc(s)
        assert k == 0.0 and trunc

    def test_zero_length(self):
        s = synthetic_summary(0.5, 2.0)
        s.boundary_length = 0.0
        with pytest.raises(DegenerateInputError):
            lkc.estimate_kappa_lkc(s)


class TestCombine:
    @pytest.mark.parametrize("alpha1", [0.0, 0.25, 0.5, 0.75, 1.0])
    def test_consistent_inputs(self, alpha1):
        k = lkc.combine_estimates(elliptic.R_of_kappa(0.5), elliptic.g_of_kappa(0.5), alpha1)
        assert abs(k - 0.5) < 1e-6

    def test_isotropic(self):
        assert lkc.combine_estimates(4 / math.pi**2, 0.0, 0.5) == 0.0

    def test_pure_contour_matches_inversion(self):
        F = elliptic.g_of_kappa(0.77)
        assert abs(lkc.combine_estimates(0.1, F, 0.0) - 0.77) < 1e-6

    def test_between_when_inconsistent(self):
        k = lkc.combine_estimates(elliptic.R_of_kappa(0.3), elliptic.g_of_kappa(0.7), 0.5)
        assert 0.3 < k < 0.7

    def test_rejects_alpha(self):
        with pytest.raises(PreconditionError):
            lkc.combine_estimates(0.1, 0.1, 1.5)


@pytest.mark.slow
class TestSimulated:
    def test_mean_euler_at_high_level(self, mc_study):
        chi = mc_study.level_values(0.0, 2.0, "euler")
        w = 2.0
        expected = 1e4 / (2 * math.pi) * w * lkc.norm_pdf(w)
        assert abs(chi.mean() - expected) / expected < 0.10

    def test_kappa_recovery_strong_anisotropy(self, mc_study):
        # R is nearly flat below kappa 0.5, so only strong anisotropy is resolved per seed
        for u in (1.0, 2.0):
            k = mc_study.level_values(0.9, u, "kappa_lkc")
            assert abs(k.mean() - 0.9) < 0.05
            R = mc_study.level_values(0.9, u, "R_hat")
            assert abs(R.mean() / elliptic.R_of_kappa(0.9) - 1) < 0.06

    def test_refusal_at_mean_level(self, mc_study):
        refused = [r.levels[0.0].lkc_refused for r in mc_study.records]
        assert all(refused)
