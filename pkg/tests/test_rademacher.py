import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stolzcalc.harness import generate_ritt_operator
from stolzcalc.operators import FiniteOperator, matrix_norm
from stolzcalc.rademacher import (
    SquareFunctionSpec,
    VectorFamily,
    adjoint_square_function,
    kaiser_weis_ratio,
    lattice_square_function,
    r_bound_estimate,
    rad_norm,
    square_function,
)


class TestRadNorm:
    def test_hilbert_single(self):
        fam = VectorFamily(np.array([[3.0, 4.0]]), 2.0)
        est = rad_norm(fam)
        assert est.value == 5.0 and est.method == "hilbert-exact"

    def test_hilbert_orthogonal_pair(self):
        fam = VectorFamily(np.eye(2), 2.0)
        assert abs(rad_norm(fam).value - math.sqrt(2)) < 1e-15

    def test_sup_norm_basis_pair(self):
        fam = VectorFamily(np.eye(2), math.inf)
        est = rad_norm(fam, "enumeration")
        assert est.value == 1.0

    def test_hilbert_consistency_enumeration(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
        fam = VectorFamily(X, 2.0)
        e = rad_norm(fam, "enumeration")
        h = rad_norm(fam, "hilbert-exact")
        assert abs(e.value - h.value) < 1e-12

    @settings(max_examples=25, deadline=None)
    @given(c=st.floats(min_value=0.1, max_value=8.0))
    def test_homogeneity_exact(self, c):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((4, 3))
        fam = VectorFamily(X, 1.0)
        a = rad_norm(fam, "enumeration").value
        b = rad_norm(fam.scaled(c), "enumeration").value
        assert abs(b - c * a) < 1e-10 * max(1.0, b)

    def test_homogeneity_monte_carlo(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((25, 4))
        fam = VectorFamily(X, math.inf)
        a = rad_norm(fam, "monte-carlo", seed=3)
        b = rad_norm(fam.scaled(2.0), "monte-carlo", seed=3)
        assert abs(b.value - 2 * a.value) <= 3 * (2 * a.std_error + b.std_error)

    def test_mc_within_three_sigma(self):
        rng = np.random.default_rng(9)
        ok = total = 0
        for i in range(15):
            K = int(rng.integers(2, 12))
            p = [1.0, math.inf][i % 2]
            X = rng.standard_normal((K, 4)) + 1j * rng.standard_normal((K, 4))
            fam = VectorFamily(X, p)
            e = rad_norm(fam, "enumeration")
            m = rad_norm(fam, "monte-carlo", seed=i)
            total += 1
            ok += abs(e.value - m.value) <= 3 * m.std_error
        assert ok >= total - 1

    def test_enumeration_cap(self):
        fam = VectorFamily(np.zeros((21, 2)), 1.0)
        with pytest.raises(ValueError):
            rad_norm(fam, "enumeration")


class TestSquareFunction:
    def test_zero_operator_norm(self, E1):
        T = FiniteOperator(np.zeros((2, 2)), 2.0)
        spec = SquareFunctionSpec(alpha=0.7)
        res = square_function(T, E1, spec, np.array([3.0, 4.0]))
        assert abs(res.value - 5.0) < 1e-12

    def test_kernel_vector_vanishes(self, E1):
        T = FiniteOperator(np.diag([1.0, 0.5]), 2.0)
        spec = SquareFunctionSpec(alpha=1.0)
        res = square_function(T, E1, spec, np.array([1.0, 0.0]))
        assert res.value == 0.0

    def test_geometric_closed_form(self, E1):
        T = FiniteOperator(np.diag([0.5]), 2.0)
        spec = SquareFunctionSpec(alpha=1.0, truncation_tol=1e-12)
        res = square_function(T, E1, spec, np.array([1.0]))
        assert abs(res.value - 2.0 / 3.0) < 1e-9

    def test_monotone_in_truncation(self, E2):
        # partial values are nondecreasing in the truncation length
        T = generate_ritt_operator(E2, 0.6, 4, seed=61)
        from stolzcalc.rademacher import _collect_terms

        spec = SquareFunctionSpec(alpha=1.0)
        rng = np.random.default_rng(0)
        x = rng.standard_normal(4)
        norms, _, _, _ = _collect_terms(T, E2, spec, x)
        partial = np.sqrt(np.cumsum(np.array(norms) ** 2))
        assert np.all(np.diff(partial) >= -1e-15)

    def test_commuting_operator_bound(self, E2):
        T = generate_ritt_operator(E2, 0.6, 4, seed=62)
        S = 0.3 * T.matrix @ T.matrix + 0.1 * np.eye(4)
        spec = SquareFunctionSpec(alpha=1.0, truncation_tol=1e-10)
        rng = np.random.default_rng(1)
        x = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        lhs = square_function(T, E2, spec, S @ x).value
        rhs = matrix_norm(S, 2.0) * square_function(T, E2, spec, x).value
        assert lhs <= rhs + 1e-8

    def test_divergence_flag(self, E1):
        T = FiniteOperator(np.diag([1.2]), 2.0)
        spec = SquareFunctionSpec(alpha=1.0, k_cap=300)
        res = square_function(T, E1, spec, np.array([1.0]))
        assert res.diverged

    def test_lattice_matches_hilbert(self, E1):
        T = FiniteOperator(np.diag([0.5, 0.2]), 2.0)
        spec = SquareFunctionSpec(alpha=1.0, truncation_tol=1e-11)
        x = np.array([1.0, 1.0])
        a = square_function(T, E1, spec, x).value
        b = lattice_square_function(T, E1, spec, x)
        assert abs(a - b) < 1e-9


class TestAdjointSquareFunction:
    def test_zero_operator_dual_norm(self, E1):
        T = FiniteOperator(np.zeros((2, 2)), 1.0)
        spec = SquareFunctionSpec(alpha=1.0)
        res = adjoint_square_function(T, E1, spec, np.array([1.0, 1.0]))
        assert abs(res.value - 1.0) < 1e-12  # sup norm of (1,1)

    def test_self_adjoint_real_diagonal(self, E1):
        T = FiniteOperator(np.diag([0.5, -0.3]), 2.0)
        spec = SquareFunctionSpec(alpha=1.0, truncation_tol=1e-11)
        x = np.array([1.0, 2.0])
        assert abs(
            square_function(T, E1, spec, x).value
            - adjoint_square_function(T, E1, spec, x).value
        ) < 1e-9

    def test_conjugation_symmetry(self, E2):
        rng = np.random.default_rng(3)
        M = rng.standard_normal((3, 3))
        M = M + M.T  # real symmetric, spectrum real
        M *= 0.5 / np.abs(np.linalg.eigvalsh(M)).max()
        T = FiniteOperator(M, 2.0)
        spec = SquareFunctionSpec(alpha=1.0, truncation_tol=1e-11)
        y = rng.standard_normal(3)
        a = square_function(T, E2, spec, y).value
        b = adjoint_square_function(T, E2, spec, y).value
        assert abs(a - b) < 1e-9


class TestRBound:
    def test_identity_family(self):
        est = r_bound_estimate([np.eye(2)], 2.0, trials=4, family_size=4)
        assert abs(est.value - 1.0) < 1e-12

    def test_scaled_identity(self):
        est = r_bound_estimate([1.5j * np.eye(2)], 2.0, trials=4, family_size=4)
        assert abs(est.value - 1.5) < 1e-12

    def test_orthogonal_projections(self):
        fam = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
        est = r_bound_estimate(fam, 2.0, trials=30, family_size=6, seed=5)
        assert 1.0 - 1e-12 <= est.value <= math.sqrt(2) + 1e-12


class TestKaiserWeis:
    def test_single_column_collapses(self):
        A = np.zeros((3, 4))
        A[:, 0] = 1.0
        fam = VectorFamily(np.random.default_rng(1).standard_normal((3, 2)), math.inf)
        assert abs(kaiser_weis_ratio(A, fam) - 1.0) < 1e-12

    def test_hilbert_contraction(self):
        rng = np.random.default_rng(2)
        A = rng.standard_normal((3, 4))
        fam = VectorFamily(rng.standard_normal((3, 2)), 2.0)
        assert kaiser_weis_ratio(A, fam) <= 1.0 + 1e-10

    def test_scaling_invariance(self):
        rng = np.random.default_rng(4)
        A = rng.standard_normal((2, 3))
        fam = VectorFamily(rng.standard_normal((2, 2)), 1.0)
        a = kaiser_weis_ratio(A, fam)
        b = kaiser_weis_ratio(-7.0 * A, fam)
        assert abs(a - b) < 1e-12
