import math

import numpy as np
import pytest

from stolzcalc.fm import (
    Band,
    ConstructionError,
    FMBasis,
    alpha_coefficients,
    band_weight_mass,
    build_fm_contour,
    fit_phi_decay,
    half_power_sum,
    interior_grid,
    kernel,
    orthonormal_basis,
    phi_function,
    phi_matrix,
    reconstruct,
    subsegment_weight_mass,
)
from stolzcalc.geometry import UnimodularVertexSet


@pytest.fixture(scope="module")
def contour(E2):
    return build_fm_contour(E2, 0.6, 0.8)


@pytest.fixture(scope="module")
def basis(contour):
    return FMBasis.build(contour, P_max=12)


class TestContourBuild:
    def test_winding_number(self, contour):
        assert abs(contour.winding_number(0.0) - 1.0) < 1e-6

    def test_segment_lengths_match(self, contour):
        ls = {
            round(b.length, 14)
            for b in contour.bands
            if b.m in (1, 2) and b.k == 0
        }
        assert len(ls) == 1

    def test_r_prime_in_band(self, contour):
        assert contour.r < contour.r_prime < contour.s
        assert contour.theta0 > 0

    def test_disc_clearance_positive(self, contour):
        assert contour.clearance_report["inner_disc_clearance"] > 0

    def test_m0_piece_lengths(self, contour):
        for b in contour.bands:
            if b.m == 0:
                assert b.length <= contour.delta / 2 + 1e-12

    def test_band_coverage(self, contour):
        # bands cover the vertex segment down to l rho^-(K_max+1)
        ks = [b.k for b in contour.bands if (b.m, b.j) == (1, 0)]
        assert sorted(ks) == list(range(contour.K_max + 1))
        innermost = min(
            (b for b in contour.bands if (b.m, b.j) == (1, 0)), key=lambda b: b.k
        )
        assert innermost.k == 0

    def test_explicit_rho_validated(self, E2):
        with pytest.raises(ConstructionError):
            build_fm_contour(E2, 0.6, 0.8, rho=2.5)

    def test_requires_large_enough_inner_radius(self):
        E = UnimodularVertexSet([1.0, np.exp(1j * np.pi / 3)])
        with pytest.raises(ConstructionError):
            build_fm_contour(E, 0.5, 0.8)

    def test_single_vertex_contour(self, E1):
        c = build_fm_contour(E1, 0.6, 0.8)
        assert abs(c.winding_number(0.0) - 1.0) < 1e-6


class TestWeightMass:
    def test_log_rho(self, contour):
        for key in [(1, 0, 0), (2, 1, 3), (1, 1, 7)]:
            assert abs(subsegment_weight_mass(contour, key) - math.log(contour.rho)) < 1e-10

    def test_unit_ratio_band(self):
        # a standalone band with ratio e has weight mass exactly 1
        anchor, rho, l = 1.0 + 0.0j, math.e, 0.4
        direction = np.exp(2.4j)
        b_in, b_out = l / rho, l
        band = Band(
            1, 0, 0,
            anchor + b_in * direction,
            anchor + b_out * direction,
            anchor + 0.5 * (b_in + b_out) * direction,
            l * (1 - 1 / rho),
            anchor,
            1,
        )
        assert abs(band_weight_mass(band) - 1.0) < 1e-10

    def test_m0_arclength(self, contour):
        b = next(b for b in contour.bands if b.m == 0)
        assert abs(subsegment_weight_mass(contour, (0, b.j, b.k)) - b.length) < 1e-14


class TestBasis:
    def test_gram_residuals(self, basis):
        assert basis.m12_gram_residual < 1e-8
        assert basis.m0_gram_residual < 1e-8

    def test_constant_row_is_mass_normalization(self, contour, basis):
        entry = orthonormal_basis(contour, (1, 0, 2), P_max=8)
        e0 = entry.evaluate(np.array([0.0]))[0, 0]
        assert abs(e0 - entry.weight_mass ** -0.5) < 1e-9

    def test_degree_one_orthogonal_to_constants(self, contour, basis):
        from numpy.polynomial.legendre import leggauss

        b = contour.band((1, 0, 1))
        t, w = leggauss(2 * basis.order)
        rows = basis.eval_rows(1, t)
        wt = basis.weight_values(b, t) * abs(b.half)
        inner = np.sum(w * wt * rows[0] * rows[1])
        assert abs(inner) < 1e-8

    def test_unit_triangular_change_of_basis(self, basis):
        C = basis.m12_coeffs
        assert np.allclose(np.triu(C, 1), 0.0)
        assert np.all(np.diag(C) > 0)

    def test_degree_cap(self, contour):
        with pytest.raises(ConstructionError):
            FMBasis.build(contour, P_max=31)


class TestKernel:
    def test_explicit_single_vertex(self, E1):
        c = build_fm_contour(E1, 0.6, 0.8)
        z = np.array([c.band((1, 0, 0)).center])
        val = kernel(c, z, np.array([0.0 + 0j]))
        want = np.sqrt(1 - z) / z
        assert np.abs(val - want).max() < 1e-12

    def test_reflection_symmetry(self, contour):
        z = contour.band((1, 0, 1)).center
        xi = 0.2 + 0.1j
        a = kernel(contour, np.array([z]), np.array([xi]))
        b = kernel(contour, np.array([np.conj(z)]), np.array([np.conj(xi)]))
        assert abs(a[0] - np.conj(b[0])) < 1e-12

    def test_band_decay_bound(self, contour):
        # |K| <~ rho^{-|k-q|/2} over band pairs; the fitted constant is finite
        rho = contour.rho
        worst = 0.0
        for q in range(0, 10, 3):
            d = contour.l * rho ** (-q - 0.5)
            xi = np.array([contour.E[0] * (1 - d)])
            for k in range(0, 12, 3):
                z = contour.band((1, 0, k)).center
                val = abs(kernel(contour, np.array([z]), xi)[0])
                worst = max(worst, val * rho ** (abs(k - q) / 2.0))
        assert math.isfinite(worst) and worst < 50.0

    def test_far_field_band_decay(self, contour):
        # outside the band range of both vertices, |K| <~ rho^{-k/2}
        xi = np.array([0.0 + 0.0j])
        assert contour.band_index(0, xi[0]) is None
        worst = 0.0
        for k in range(0, 13, 2):
            z = contour.band((1, 0, k)).center
            val = abs(kernel(contour, np.array([z]), xi)[0])
            worst = max(worst, val * contour.rho ** (k / 2.0))
        assert math.isfinite(worst) and worst < 10.0

    def test_uniform_vertex_comparison(self, contour):
        # a single finite constant covers |1 - conj(xi_j) z| <= C |z - xi|
        # and |1 - conj(xi_j) xi| <= C |z - xi| over disc centers x grid
        grid = interior_grid(contour, 200)
        worst = 0.0
        for b in contour.bands[:: max(1, len(contour.bands) // 60)]:
            z = b.center
            dist = np.abs(z - grid)
            for xi_v in contour.E:
                r1 = abs(1 - np.conj(xi_v) * z) / dist
                r2 = np.abs(1 - np.conj(xi_v) * grid) / dist
                worst = max(worst, float(r1.max()), float(r2.max()))
        assert math.isfinite(worst)
        assert worst < 1e3  # fitted constant stays moderate for this geometry


class TestPhiFunctions:
    def test_matrix_matches_single(self, contour, basis):
        xi = np.array([0.1 + 0.2j, -0.3 + 0.1j])
        M = phi_matrix(contour, basis, (1, 0, 2), xi)
        for p in (0, 3):
            v = phi_function(contour, basis, (1, 0, 2), p, xi)
            assert np.abs(v - M[p]).max() < 1e-12

    def test_quadrature_order_self_convergence(self, contour):
        b1 = FMBasis.build(contour, P_max=10)
        b2 = FMBasis.build(contour, P_max=10, order=2 * b1.order)
        xi = np.array([0.25 - 0.15j])
        v1 = phi_function(contour, b1, (2, 0, 1), 4, xi)
        v2 = phi_function(contour, b2, (2, 0, 1), 4, xi)
        assert np.abs(v1 - v2).max() < 1e-8

    def test_m0_uniform_bound(self, contour, basis):
        grid = interior_grid(contour, 50)
        key = next((b.m, b.j, b.k) for b in contour.bands if b.m == 0)
        vals = np.abs(phi_matrix(contour, basis, key, grid))
        # p-rows decay by at least a factor two per degree overall
        assert vals[8].max() <= vals[0].max() * 2.0 ** (-6)


class TestAlphaAndReconstruct:
    def test_zero_function(self, contour, basis):
        co = alpha_coefficients(contour, basis, lambda z: np.zeros_like(z), hinf=1.0)
        assert co.bound == 0.0

    def test_constant_function_alphas(self, contour, basis):
        co = alpha_coefficients(contour, basis, lambda z: np.ones_like(z), hinf=1.0)
        a = co.values[(1, 0, 0)]
        assert abs(a[0] - math.sqrt(math.log(contour.rho))) < 1e-10
        assert np.abs(a[1:]).max() < 1e-9

    def test_linearity(self, contour, basis):
        h1 = lambda z: z
        h2 = lambda z: 1.0 / (2.0 - z)
        c1 = alpha_coefficients(contour, basis, h1, hinf=1.0)
        c2 = alpha_coefficients(contour, basis, h2, hinf=1.0)
        c12 = alpha_coefficients(
            contour, basis, lambda z: 2.0 * h1(z) - 1j * h2(z), hinf=1.0
        )
        for key in [(1, 0, 0), (2, 1, 2), (0, 0, 3)]:
            want = 2.0 * c1.values[key] - 1j * c2.values[key]
            assert np.abs(c12.values[key] - want).max() < 1e-10

    def test_bounded_coefficient_certificate(self, contour, basis):
        h = lambda z: 1.0 / (1.5 - z)
        co = alpha_coefficients(contour, basis, h)
        assert co.certificate_ratio < 5.0

    def test_reconstruction_improves_with_k(self, contour, basis):
        # the truncation tail scales like rho^(-K/2); near-vertex grid
        # points see the slowest decay
        co = alpha_coefficients(contour, basis, lambda z: np.ones_like(z), hinf=1.0)
        grid = interior_grid(contour, 40)
        errs = []
        for K in (10, 25, 40):
            rec = reconstruct(contour, basis, co, grid, K_cut=K, P_cut=10)
            errs.append(float(np.abs(rec - 1.0).max()))
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 2e-2
        rate = (errs[2] / errs[1]) ** (1.0 / 15.0)
        assert rate < contour.rho ** -0.25  # at least the model rate

    def test_identity_function(self, contour, basis):
        co = alpha_coefficients(contour, basis, lambda z: z, hinf=1.0)
        grid = interior_grid(contour, 40)
        rec = reconstruct(contour, basis, co, grid, K_cut=40, P_cut=12)
        assert float(np.abs(rec - grid).max()) < 2e-2

    def test_vector_valued_matches_componentwise(self, contour, basis):
        h1 = lambda z: z
        h2 = lambda z: np.ones_like(z)
        hv = lambda z: np.stack([h1(z), h2(z)], axis=-1)
        cv = alpha_coefficients(contour, basis, hv, hinf=math.sqrt(2.0))
        c1 = alpha_coefficients(contour, basis, h1, hinf=1.0)
        c2 = alpha_coefficients(contour, basis, h2, hinf=1.0)
        for key in [(1, 0, 0), (0, 1, 2)]:
            assert np.abs(cv.values[key][:, 0] - c1.values[key]).max() < 1e-14
            assert np.abs(cv.values[key][:, 1] - c2.values[key]).max() < 1e-14
        grid = interior_grid(contour, 10)
        rv = reconstruct(contour, basis, cv, grid, K_cut=20, P_cut=8)
        r1 = reconstruct(contour, basis, c1, grid, K_cut=20, P_cut=8)
        assert np.abs(rv[:, 0] - r1).max() < 1e-12


class TestBandIndex:
    def test_interior_band(self, contour):
        d = contour.l * contour.rho ** (-3.5)
        assert contour.band_index(0, contour.E[0] * (1 - d)) == 3

    def test_outside_band_range(self, contour):
        d = 1.5 * contour.l
        assert contour.band_index(0, contour.E[0] * (1 - d)) is None

    def test_boundary_tie(self, contour):
        d = contour.l * contour.rho ** (-4.0)
        assert contour.band_index(0, contour.E[0] * (1 - d)) == 4


class TestHalfPowerSum:
    def test_finite_and_stable(self, contour, basis):
        grid = interior_grid(contour, 30)
        a = half_power_sum(contour, basis, grid, K_cut=16, P_cut=6)
        b = half_power_sum(contour, basis, grid, K_cut=32, P_cut=12)
        assert np.all(np.isfinite(b))
        assert abs(a.max() - b.max()) <= 0.05 * b.max()

    def test_tail_decreases_with_p(self, contour, basis):
        grid = interior_grid(contour, 10)
        with_tail = half_power_sum(contour, basis, grid, K_cut=20, P_cut=6)
        without = half_power_sum(contour, basis, grid, K_cut=20, P_cut=6, include_tail=False)
        tail6 = with_tail - without
        with_tail2 = half_power_sum(contour, basis, grid, K_cut=20, P_cut=11)
        without2 = half_power_sum(contour, basis, grid, K_cut=20, P_cut=11, include_tail=False)
        tail11 = with_tail2 - without2
        assert np.all(tail11 <= tail6 + 1e-12)


class TestDecayFit:
    def test_envelope_constants_finite(self, contour, basis):
        fit = fit_phi_decay(contour, basis, k_max=8, p_max=8, q_max=10)
        for key, c in fit.c_max.items():
            assert math.isfinite(c) and c > 0

    def test_model_envelope_holds_on_fresh_samples(self, contour, basis):
        # the sup-fitted constant bounds a verification sample within slack
        fit = fit_phi_decay(contour, basis, k_max=8, p_max=8, q_max=10)
        rho, log2 = contour.rho, math.log(2.0)
        c = fit.c_max[(1, 0)] * 3.0
        for q in (1, 4, 7):
            d = contour.l * rho ** (-q - 0.3)
            xi = np.array([contour.E[0] * (1 - d)])
            for k in (0, 3, 6):
                vals = np.abs(phi_matrix(contour, basis, (1, 0, k), xi))[:9, 0]
                bound = c * 2.0 ** (-np.arange(9)) * rho ** (-abs(k - q) / 2.0)
                assert np.all(vals <= bound)

    def test_p_decay_is_at_least_model_rate(self, contour, basis):
        fit = fit_phi_decay(contour, basis, k_max=8, p_max=8, q_max=10)
        for key, slope in fit.p_slope.items():
            assert slope <= -math.log(2.0) * 0.85
