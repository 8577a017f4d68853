import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from elastobem.core import DomainError, ElasticMedium, InvalidMediumError
from elastobem.specfun import (
    RadialKernels, bessel_jy, compare_with_printed, derived_coefficients, f1_series, f2_series, f3_series,
    f_direct, hankel1, printed_coefficients, series_coefficients,
)

MEDIUM = ElasticMedium()  # k_s = 1, k_p = 0.5


def mp_h(n, x):
    return mpmath.besselj(n, x) + 1j * mpmath.bessely(n, x)


def mp_hankel(n, x):
    return complex(mp_h(n, x))


class TestBessel:
    @pytest.mark.parametrize("n,x,j,y", [
        (0, 1.0, 0.765197687, 0.088256964),
        (1, 1.0, 0.440050586, -0.781212821),
    ])
    def test_reference_values(self, n, x, j, y):
        assert_allclose(bessel_jy(n, x), (j, y), atol=1e-9)

    @pytest.mark.parametrize("x", [0.1, 1.0, 10.0, 50.0])
    def test_wronskian(self, x):
        j0, y0 = bessel_jy(0, x)
        j1, y1 = bessel_jy(1, x)
        assert_allclose(j0 * y1 - j1 * y0, -2 / (math.pi * x), rtol=1e-12)

    @pytest.mark.parametrize("n", [0, 1, 2])
    def test_against_mpmath(self, n):
        for x in (0.05, 0.7, 3.3, 12.0, 80.0):
            assert_allclose(hankel1(n, x), mp_hankel(n, x), rtol=1e-13)

    def test_hankel_values(self):
        assert_allclose(hankel1(0, 1.0), 0.765197687 + 0.088256964j, atol=1e-9)
        assert_allclose(hankel1(1, 1.0), 0.440050586 - 0.781212821j, atol=1e-9)

    def test_recurrence(self):
        x = np.geomspace(0.1, 100, 200)
        lhs = hankel1(2, x) - (2 / x) * hankel1(1, x) + hankel1(0, x)
        assert np.max(np.abs(lhs) / np.abs(hankel1(2, x))) < 1e-12

    @pytest.mark.parametrize("x", [0.0, -1.0])
    def test_domain(self, x):
        with pytest.raises(DomainError):
            bessel_jy(0, x)
        with pytest.raises(DomainError):
            hankel1(1, x)

    def test_unsupported_order(self):
        with pytest.raises(DomainError):
            bessel_jy(3, 1.0)


class TestSeriesCoefficients:
    def test_structure(self):
        co = series_coefficients(MEDIUM, 20)
        for j in range(1, 7):
            fam = co.family(j)
            assert fam.shape == (21,)
            assert np.all(np.isfinite(fam))
        for j in (2, 4, 6):
            assert_allclose(co.family(j).real, 0, atol=0)

    def test_printed_values(self):
        co = series_coefficients(MEDIUM, 20)
        assert co.c6[0] == pytest.approx(2j / math.pi, abs=1e-16)
        assert co.c2[0] == pytest.approx(0.238732415j, abs=1e-9)

    def test_c2_c5_c6_match_printed_forms(self):
        d = derived_coefficients(0.5, 1.0, 20)
        p = printed_coefficients(0.5, 1.0, 20)
        bad = compare_with_printed(d, p)
        assert set(bad) == {f"C{j}" for j in range(1, 7)}
        for name in ("C2", "C5", "C6"):
            assert bad[name] == [], name
        # printed C1, C3, C4 differ from the re-derived ascending series
        for name in ("C1", "C3", "C4"):
            assert bad[name], name

    def test_rejects_negative_order(self):
        with pytest.raises(ValueError):
            series_coefficients(MEDIUM, -1)

    def test_rejects_bad_wavenumbers(self):
        with pytest.raises(InvalidMediumError):
            series_coefficients((0.0, 1.0), 5)


class TestSeries:
    r = math.pi

    def test_f1_reconstruction(self):
        co = series_coefficients(MEDIUM, 20)
        assert_allclose(f1_series(co, self.r), f_direct("F1", MEDIUM, self.r), rtol=1e-10)

    def test_f2_reconstruction(self):
        co = series_coefficients(MEDIUM, 20)
        assert_allclose(f2_series(co, self.r), f_direct("F2", MEDIUM, self.r), rtol=1e-10)

    def test_f3_reconstruction(self):
        assert_allclose(f3_series(1.0, 20, self.r), hankel1(0, math.pi), rtol=1e-10)

    def test_f1_vanishes_at_origin(self):
        co = series_coefficients(MEDIUM, 20)
        assert abs(f1_series(co, 1e-12)) < 1e-10

    def test_error_decreases_with_M(self):
        r = math.pi / MEDIUM.k_s
        ref = f_direct("F1", MEDIUM, r)
        errs = [abs(f1_series(series_coefficients(MEDIUM, M), r) - ref) for M in range(5, 21)]
        noise = 1e-14 * abs(ref)
        assert all(b <= a + noise for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 1e-10 * abs(ref)

    def test_direct_values(self):
        assert_allclose(f_direct("F3", 1.0, 1.0), 0.765197687 + 0.088256964j, atol=1e-9)
        assert f_direct("F2", (1.0, 1.0), 2.0) == 0

    def test_direct_far_decay(self):
        # |k H1(k r)| ~ sqrt(2k/(pi r)), so sqrt(r)|F1| stays under the summed envelopes
        r = np.linspace(100.0, 5000.0, 400)
        env = math.sqrt(2 / math.pi) * (math.sqrt(MEDIUM.k_s) + math.sqrt(MEDIUM.k_p))
        scaled = np.sqrt(r) * np.abs(f_direct("F1", MEDIUM, r))
        assert scaled.max() <= 1.01 * env
        assert scaled.max() >= 0.9 * env

    @pytest.mark.parametrize("fn", ["f1", "f2", "f3"])
    def test_domain(self, fn):
        co = series_coefficients(MEDIUM, 5)
        call = {"f1": lambda r: f1_series(co, r), "f2": lambda r: f2_series(co, r),
                "f3": lambda r: f3_series(1.0, 5, r)}[fn]
        with pytest.raises(DomainError):
            call(0.0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            f_direct("F4", MEDIUM, 1.0)


class TestRadialKernels:
    @given(st.floats(1e-4, 30.0), st.floats(0.2, 5.0))
    def test_matches_extended_precision(self, r, omega):
        med = ElasticMedium(omega=omega)
        ks, kp = med.k_s, med.k_p
        h0s, h0p, a, b, d = RadialKernels(kp, ks).evaluate(np.array([r]))
        with mpmath.workdps(40):
            f1 = complex(ks * mp_h(1, ks * r) - kp * mp_h(1, kp * r))
            f2 = complex(ks**2 * mp_h(2, ks * r) - kp**2 * mp_h(2, kp * r))
        assert_allclose(h0s[0], mp_hankel(0, ks * r), rtol=1e-12)
        assert_allclose(h0p[0], mp_hankel(0, kp * r), rtol=1e-12)
        assert_allclose(a[0], f1 / r, rtol=1e-9, atol=1e-12 * ks**2)
        assert_allclose(b[0], f2 / r**2, rtol=1e-9, atol=1e-12 * ks**4)
        assert_allclose(d[0], ks * mp_hankel(1, ks * r) / r, rtol=1e-12)

    def test_static_limit_finite(self):
        h0s, h0p, a, b, d = RadialKernels(0.5e-6, 1e-6).evaluate(np.array([1.0]))
        assert np.isfinite(a[0]) and np.isfinite(b[0])
