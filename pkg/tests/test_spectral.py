import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate

from conexit.errors import TruncationWarning, ValidationError
from conexit.legendre import legendre_p
from conexit.spectral import (
    ConeSpec, absorbed_bm_interval_survival, cap_spectrum, circle_heat_kernel_diag,
    default_heat_kernel_constants, fd_spectrum_1d, fit_heat_kernel_constant,
    lemma_bounds_check, sigma_measure, sphere_heat_kernel_diag, spectrum_rows,
    survival_series, wedge_spectrum,
)

HALF = ConeSpec(2, math.pi)
QUAD = ConeSpec(2, math.pi / 2)
HEMI = ConeSpec(3, math.pi / 2)


def wedge_inner(mi, mj, theta0):
    return integrate.quad(lambda p: mi(p) * mj(p) / (2 * math.pi), 0, theta0, limit=400)[0]


def cap_inner(mi, mj, theta0):
    return integrate.quad(lambda t: mi(t) * mj(t) * math.sin(t) / 2, 0, theta0, limit=400)[0]


class TestLegendre:
    @pytest.mark.parametrize("nu", [0.0, 0.5, 1.0, 1.7773, 3.0, 12.25, 97.6, 311.1])
    def test_against_mpmath(self, nu):
        for x in (0.99, 0.6, 0.1, -0.3, -0.9):
            ref = float(mp.legenp(nu, 0, x, type=2))
            assert abs(legendre_p(nu, x) - ref) < 1e-12

    def test_integer_degree_polynomials(self):
        x = np.linspace(-0.99, 1, 50)
        for n in range(6):
            c = np.zeros(n + 1)
            c[n] = 1
            np.testing.assert_allclose(legendre_p(float(n), x), np.polynomial.legendre.legval(x, c),
                                       atol=1e-13)

    def test_reflection_in_degree(self):
        assert legendre_p(-2.3, 0.4) == pytest.approx(legendre_p(1.3, 0.4), abs=1e-14)


class TestWedge:
    def test_half_plane_first_mode(self):
        m1 = wedge_spectrum(ConeSpec(2, math.pi, 0.5), 1)[0]
        assert m1.eigenvalue == pytest.approx(0.5, rel=1e-15)
        assert m1(math.pi / 2) == pytest.approx(2.0, rel=1e-15)
        assert m1.mass == pytest.approx(2 / math.pi, rel=1e-15)
        quad = integrate.quad(lambda p: m1(p) / (2 * math.pi), 0, math.pi)[0]
        assert m1.mass == pytest.approx(quad, rel=1e-12)

    def test_even_modes_have_no_mass(self):
        modes = wedge_spectrum(HALF, 10)
        assert all(m.mass == 0.0 for m in modes[1::2])

    def test_quadrant_eigenvalue_and_fd(self):
        lam1 = wedge_spectrum(QUAD, 1)[0].eigenvalue
        assert lam1 == pytest.approx(2.0, rel=1e-15)
        fd = fd_spectrum_1d(math.pi / 2, 0.5, 2048, count=1)[0].eigenvalue
        assert fd == pytest.approx(2.0, rel=1e-5)

    @pytest.mark.parametrize("theta0", [math.pi, math.pi / 2, 2 * math.pi / 3, 1.5 * math.pi])
    def test_orthonormal(self, theta0):
        modes = wedge_spectrum(ConeSpec(2, theta0), 10)
        for i, mi in enumerate(modes):
            for j, mj in enumerate(modes[: i + 1]):
                assert wedge_inner(mi, mj, theta0) == pytest.approx(float(i == j), abs=1e-6)

    @pytest.mark.parametrize("theta0", [math.pi, 0.7, 5.0])
    def test_masses_against_quadrature(self, theta0):
        for m in wedge_spectrum(ConeSpec(2, theta0), 6):
            quad = integrate.quad(lambda p: m(p) / (2 * math.pi), 0, theta0, limit=200)[0]
            assert m.mass == pytest.approx(quad, abs=1e-12)

    def test_dirichlet_and_order(self):
        modes = wedge_spectrum(ConeSpec(2, 2.2), 20)
        lam = [m.eigenvalue for m in modes]
        assert lam == sorted(lam)
        for m in modes:
            assert abs(m(0.0)) <= 1e-9 and abs(m(2.2)) <= 1e-9


class TestCap:
    def test_hemisphere_first_mode(self):
        m1 = cap_spectrum(ConeSpec(3, math.pi / 2, 0.5), 1)[0]
        assert m1.degree == 1.0
        assert m1.eigenvalue == 1.0
        assert m1.mass == pytest.approx(math.sqrt(6) / 4, rel=1e-12)
        # eigenfunction is sqrt(6) cos(theta)
        th = np.linspace(0, math.pi / 2, 7)
        np.testing.assert_allclose(m1(th), math.sqrt(6) * np.cos(th), atol=1e-12)
        quad = integrate.quad(lambda t: math.sqrt(6) * math.cos(t) * math.sin(t) / 2, 0, math.pi / 2)[0]
        assert m1.mass == pytest.approx(quad, rel=1e-12)
        # on-axis profile of M: mass * m1(theta) = 3/2 cos(theta)
        assert m1.mass * m1(0.3) == pytest.approx(1.5 * math.cos(0.3), rel=1e-12)

    def test_hemisphere_degrees_are_odd_integers(self):
        degs = [m.degree for m in cap_spectrum(HEMI, 6)]
        np.testing.assert_allclose(degs, [1, 3, 5, 7, 9, 11], atol=1e-12)

    def test_sixty_degree_cap_first_root(self):
        nu1 = cap_spectrum(ConeSpec(3, math.pi / 3), 1)[0].degree
        assert 1 < nu1 < 3
        # brute-force sign scan with mpmath on a fine grid
        grid = np.arange(0.0, 3.0, 0.001)
        vals = [float(mp.legenp(v, 0, 0.5, type=2)) for v in grid]
        k = next(i for i in range(1, len(vals)) if vals[i - 1] > 0 >= vals[i])
        assert grid[k - 1] <= nu1 <= grid[k]
        assert abs(float(mp.legenp(nu1, 0, 0.5, type=2))) < 1e-12

    @pytest.mark.parametrize("theta0", [math.pi / 2, math.pi / 3, 2.4])
    def test_orthonormal(self, theta0):
        modes = cap_spectrum(ConeSpec(3, theta0), 10)
        for i, mi in enumerate(modes):
            for j, mj in enumerate(modes[: i + 1]):
                assert cap_inner(mi, mj, theta0) == pytest.approx(float(i == j), abs=1e-6)

    @pytest.mark.parametrize("theta0", [math.pi / 3, 2.4])
    def test_masses_and_dirichlet(self, theta0):
        modes = cap_spectrum(ConeSpec(3, theta0), 8)
        lam = [m.eigenvalue for m in modes]
        assert np.all(np.diff(lam) > 0)
        for m in modes:
            quad = integrate.quad(lambda t: m(t) * math.sin(t) / 2, 0, theta0, limit=200)[0]
            assert m.mass == pytest.approx(quad, abs=1e-10)
            assert abs(m(theta0)) <= 1e-9

    def test_bracketing_failure_reports_interval(self):
        from conexit.errors import ConvergenceError
        with pytest.raises(ConvergenceError, match="scanning nu in"):
            cap_spectrum(HEMI, 5, nu_max=4.0)


class TestFiniteDifference:
    def test_first_eigenvalue(self):
        fd = fd_spectrum_1d(math.pi, 0.5, 1024, count=1)[0]
        assert abs(fd.eigenvalue - 0.5) < 1e-4

    def test_second_order(self):
        exact = [m.eigenvalue for m in wedge_spectrum(HALF, 3)]
        for j in range(3):
            e1 = abs(fd_spectrum_1d(math.pi, 0.5, 127, 3)[j].eigenvalue - exact[j])
            e2 = abs(fd_spectrum_1d(math.pi, 0.5, 255, 3)[j].eigenvalue - exact[j])
            assert e1 / e2 == pytest.approx(4.0, rel=0.02)

    def test_eigenfunction_matches_closed_form(self):
        fd = fd_spectrum_1d(math.pi, 0.5, 1024, 3)
        ex = wedge_spectrum(HALF, 3)
        grid = np.linspace(0, math.pi, 1026)
        assert fd[0](math.pi / 2) > 0
        for a, b in zip(fd, ex):
            assert np.max(np.abs(a(grid) - b(grid))) < 1e-3

    def test_error_bounded_by_k_h_squared(self):
        exact = [m.eigenvalue for m in wedge_spectrum(HALF, 5)]
        for n in (63, 127, 255):
            h = math.pi / (n + 1)
            for j, m in enumerate(fd_spectrum_1d(math.pi, 0.5, n, 5)):
                # leading error of the 3-point stencil: lambda_j (j h)^2 / 12 per unit
                K = exact[j] * (j + 1) ** 2 / 12 * 1.01
                assert abs(m.eigenvalue - exact[j]) <= K * h * h

    def test_too_few_points(self):
        with pytest.raises(ValidationError):
            fd_spectrum_1d(math.pi, 0.5, 8)


class TestSurvivalSeries:
    def test_large_time(self):
        modes = wedge_spectrum(HALF, 50)
        s = survival_series(modes, math.pi / 2, 10.0)
        assert s.value == pytest.approx(4 / math.pi * math.exp(-5), rel=1e-6)
        assert not s.truncated

    def test_small_time_against_images(self):
        modes = wedge_spectrum(HALF, 400)
        s = survival_series(modes, math.pi / 2, 0.01)
        oracle = absorbed_bm_interval_survival(math.pi / 2, math.pi, 2 * 0.5 * 0.01)
        assert abs(s.value - oracle) < 5e-3

    @pytest.mark.parametrize("theta0,phi", [(math.pi, 0.3), (2.0, 1.1), (5.0, 4.0)])
    def test_matches_images_across_times(self, theta0, phi):
        modes = wedge_spectrum(ConeSpec(2, theta0), 300)
        for u in (0.05, 0.3, 1.0, 4.0):
            s = survival_series(modes, phi, u)
            assert s.raw == pytest.approx(absorbed_bm_interval_survival(phi, theta0, u), abs=1e-9)

    def test_monotone_decay(self):
        for spec in (HALF, QUAD, HEMI):
            modes = wedge_spectrum(spec, 200) if spec.dimension == 2 else cap_spectrum(spec, 60)
            ang = spec.angle / 3
            u = np.linspace(0.05, 40, 400)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", TruncationWarning)
                s = survival_series(modes, ang, u)
            assert np.all(np.diff(s.raw) < 0)
            assert s.value[-1] < 1e-6

    def test_truncation_warning(self):
        with pytest.warns(TruncationWarning):
            s = survival_series(wedge_spectrum(HALF, 3), 1.0, 0.01)
        assert s.truncated

    def test_clamp_keeps_raw(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            s = survival_series(wedge_spectrum(HALF, 2), math.pi / 2, 0.001)
        assert s.value == 1.0 and s.raw > 1.0


class TestLemma:
    def test_sigma_measure(self):
        assert sigma_measure(ConeSpec(2, 1.3)) == pytest.approx(1.3 / (2 * math.pi))
        assert sigma_measure(HEMI) == pytest.approx(0.5)

    def test_circle_kernel_representations_agree(self):
        # Poisson-summed and Fourier forms meet at a*t = 1
        a = 0.5
        lo = circle_heat_kernel_diag(2.0 * (1 - 1e-12), a)
        hi = circle_heat_kernel_diag(2.0 * (1 + 1e-12), a)
        assert lo == pytest.approx(hi, rel=1e-10)
        n = np.arange(1, 400)
        assert circle_heat_kernel_diag(0.3, a) == pytest.approx(1 + 2 * np.sum(np.exp(-a * n * n * 0.3)), rel=1e-12)

    def test_sphere_kernel_small_time(self):
        # Weyl: q(t, x, x) ~ 1/(a t) on S^2 with normalised measure
        a = 0.5
        t = 1e-4
        assert t * sphere_heat_kernel_diag(t, a) == pytest.approx(1 / a, rel=1e-3)

    def test_fitted_constant(self):
        C, beta = default_heat_kernel_constants(HALF)
        assert beta == 0.5
        # sup of sqrt(t) q(t) on (0, 2] sits at t = 2 and tends to sqrt(2 pi) as t -> 0
        assert C == pytest.approx(math.sqrt(2.0) * circle_heat_kernel_diag(2.0), rel=1e-12)
        assert C >= math.sqrt(2 * math.pi)

    def test_wedge_bounds(self):
        modes = wedge_spectrum(HALF, 20)
        C, beta = default_heat_kernel_constants(HALF)
        diags = lemma_bounds_check(modes, C, beta, sigma_measure(HALF))
        assert all(d.sup_ok for d in diags)
        assert all(d.lower_ok_with_e for d in diags)

    def test_wrong_beta_fails_eventually(self):
        # a j^4 lower bound must overtake lambda_j = j^2 / 2
        modes = wedge_spectrum(HALF, 900)
        grid = np.geomspace(1e-4, 2.0, 400)
        C = fit_heat_kernel_constant(lambda t: circle_heat_kernel_diag(t, 0.5), 0.25, grid)
        diags = lemma_bounds_check(modes, C, 0.25, 0.5)
        assert diags[0].lower_ok_with_e
        assert not diags[-1].lower_ok_with_e
        assert not diags[-1].lower_ok

    def test_export_rows(self):
        rows = spectrum_rows(wedge_spectrum(HALF, 3))
        assert [r[0] for r in rows] == [1, 2, 3]
        assert rows[0][3] == pytest.approx(2.0, rel=1e-6)
