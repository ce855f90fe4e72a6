"""Holomorphic functions on Stolz domains and the contour calculus.

Evaluates ``phi(T)`` as a quadrature of the Cauchy integral
``(1/2 pi i) contour-int phi(z) R(z,T) dz`` over the boundary of an
intermediate domain, estimates bounded and quadratic calculus constants by
maximization over function families, and produces the power-series
coefficient families tied to the vertex factor polynomial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
import numpy.polynomial.polynomial as npoly

from .geometry import (
    GradedQuadrature,
    StolzDomain,
    UnimodularVertexSet,
    boundary_grid,
    boundary_path,
    quadrature_nodes,
)
from .operators import (
    FiniteOperator,
    matrix_norm,
    resolvent_stack,
    spectrum,
    vector_norm,
    vertex_factor,
)


class ContourError(ValueError):
    pass


class RangeMembershipError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class DecayCertificate:
    """Bound |phi(z)| <= c prod_j |xi_j - z|**e_j on the domain."""

    c: float
    exponents: tuple

    def check_on_grid(self, phi, E: UnimodularVertexSet, s: float, density: int = 1000) -> float:
        """Largest violation ratio of the certificate on a boundary grid."""
        zs = boundary_grid(E, s, density=density // 3 + 2, min_vertex_distance=1e-9)
        bound = np.full(zs.shape, self.c, dtype=float)
        for xi, e in zip(E, self.exponents):
            bound *= np.abs(xi - zs) ** e
        vals = np.abs(phi(zs))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bound > 0, vals / bound, np.where(vals > 0, np.inf, 0.0))
        return float(np.max(ratio))


@dataclass
class HoloFunction:
    """Evaluatable holomorphic function on the radius-``s`` domain."""

    fn: object
    s: float
    decay: DecayCertificate | None = None
    kind: str = "closed-form"
    label: str = ""

    def __call__(self, z):
        return self.fn(np.asarray(z, dtype=complex))

    def __mul__(self, other: "HoloFunction") -> "HoloFunction":
        decay = None
        if self.decay is not None and other.decay is not None:
            decay = DecayCertificate(
                self.decay.c * other.decay.c,
                tuple(a + b for a, b in zip(self.decay.exponents, other.decay.exponents)),
            )
        elif self.decay is not None or other.decay is not None:
            have = self.decay or other.decay
            decay = have
        return HoloFunction(
            lambda z, f=self.fn, g=other.fn: f(z) * g(z),
            min(self.s, other.s),
            decay,
            "composite",
            f"({self.label})*({other.label})",
        )


class Polynomial:
    """Complex polynomial with ascending coefficients; exact trailing zeros trimmed."""

    def __init__(self, coefficients):
        c = np.atleast_1d(np.asarray(coefficients, dtype=complex))
        while len(c) > 1 and c[-1] == 0:
            c = c[:-1]
        self.coefficients = c

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, z):
        return npoly.polyval(np.asarray(z, dtype=complex), self.coefficients)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(npoly.polymul(self.coefficients, other.coefficients))

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(npoly.polyadd(self.coefficients, other.coefficients))

    def on_operator(self, T: FiniteOperator) -> np.ndarray:
        return eval_polynomial_on_operator(self, T)

    def divisible_by(self, divisor, rtol: float = 1e-10) -> bool:
        q, r = npoly.polydiv(self.coefficients, np.asarray(divisor, dtype=complex))
        scale = max(1.0, float(np.abs(self.coefficients).max()))
        return bool(np.max(np.abs(r)) <= rtol * scale)

    def quotient(self, divisor) -> "Polynomial":
        q, _ = npoly.polydiv(self.coefficients, np.asarray(divisor, dtype=complex))
        return Polynomial(q)

    def to_holo(self, E: UnimodularVertexSet, s: float, grid_density: int = 512) -> HoloFunction:
        """HoloFunction view; carries a decay certificate when the vertex
        factor divides the polynomial."""
        decay = None
        fac = E.factor_polynomial(1)
        if self.degree >= len(E) and self.divisible_by(fac):
            q = self.quotient(fac)
            zs = boundary_grid(E, s, density=grid_density // 3 + 2)
            c = float(np.max(np.abs(q(zs)))) * (1 + 1e-9)
            decay = DecayCertificate(c, tuple(1.0 for _ in E))
        return HoloFunction(self.__call__, s, decay, "polynomial", f"poly(deg={self.degree})")


def eval_polynomial_on_operator(P: Polynomial, T: FiniteOperator) -> np.ndarray:
    """Horner evaluation of P at the matrix."""
    n = T.dim
    c = P.coefficients
    out = c[-1] * np.eye(n, dtype=complex)
    for ck in c[-2::-1]:
        out = out @ T.matrix + ck * np.eye(n)
    return out


def build_contour_quadrature(
    E: UnimodularVertexSet,
    u: float,
    order: int = 16,
    grading: float = 0.5,
    depth: int = 25,
) -> GradedQuadrature:
    """Graded quadrature of the boundary of the radius-``u`` domain.

    The default depth keeps the innermost nodes safely above the resolvent
    singularity guard even when an eigenvalue sits at a vertex.
    """
    return quadrature_nodes(boundary_path(StolzDomain(E, u)), grading, depth, order)


class ContourEngine:
    """Shared resolvent stack for applying many functions to one operator."""

    def __init__(
        self,
        T: FiniteOperator,
        E: UnimodularVertexSet,
        u: float,
        quad: GradedQuadrature | None = None,
    ):
        dom = StolzDomain(E, u)
        for lam in spectrum(T).eigenvalues:
            if dom.hull_margin(lam) < -1e-9:
                raise ContourError(
                    f"eigenvalue {lam} lies outside the closed radius-{u} hull; "
                    "the contour does not enclose the spectrum"
                )
        self.T = T
        self.E = E
        self.u = float(u)
        self.quad = quad if quad is not None else build_contour_quadrature(E, u)
        self._resolvents = resolvent_stack(T, self.quad.points)

    def apply(self, phi) -> np.ndarray:
        if isinstance(phi, HoloFunction) and self.u >= phi.s - 1e-12:
            raise ContourError(
                f"contour radius {self.u} is not strictly below the function domain radius {phi.s}"
            )
        vals = phi(self.quad.points) * self.quad.weights
        return np.tensordot(vals, self._resolvents, axes=(0, 0)) / (2j * math.pi)


def contour_calculus(
    phi,
    T: FiniteOperator,
    E: UnimodularVertexSet,
    u: float,
    quad: GradedQuadrature | None = None,
) -> np.ndarray:
    """Dunford contour calculus ``phi(T)`` over the radius-``u`` boundary."""
    return ContourEngine(T, E, u, quad).apply(phi)


def hinf_norm(
    phi,
    E: UnimodularVertexSet,
    s: float | None = None,
    grid_density: int = 2048,
) -> float:
    """Supremum norm over the radius-``s`` domain via boundary maximization."""
    if s is None:
        s = phi.s
    zs = boundary_grid(E, s, density=grid_density)
    return float(np.max(np.abs(phi(zs))))


@dataclass(frozen=True)
class ConstantEstimate:
    """Empirical lower bound for a calculus constant, with provenance."""

    value: float
    method: str
    details: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


def default_test_family(
    E: UnimodularVertexSet,
    s: float,
    max_degree: int = 24,
    n_random: int = 8,
    seed: int = 0,
) -> list:
    """Monomial multiples of the vertex factor up to the given degree plus
    seeded random-coefficient multiples; all vanish at the vertices."""
    fac = Polynomial(E.factor_polynomial(1))
    fam = []
    for m in range(0, max_degree - len(E) + 1):
        mono = Polynomial([0.0] * m + [1.0])
        fam.append(mono * fac)
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        deg = int(rng.integers(1, max(2, max_degree - len(E))))
        coeffs = rng.standard_normal(deg + 1) + 1j * rng.standard_normal(deg + 1)
        fam.append(Polynomial(coeffs) * fac)
    return fam


def calculus_constant(
    T: FiniteOperator,
    E: UnimodularVertexSet,
    s: float,
    test_functions=None,
    u: float | None = None,
    grid_density: int = 2048,
    seed: int = 0,
) -> ConstantEstimate:
    """max over the family of ||phi(T)|| / ||phi||_{inf}; a lower bound for
    the optimal bounded-calculus constant."""
    if test_functions is None:
        test_functions = default_test_family(E, s, seed=seed)
    if u is None:
        u = _default_contour_radius(T, E, s)
    engine = ContourEngine(T, E, u)
    zs = boundary_grid(E, s, density=grid_density)
    best, best_label = 0.0, ""
    for k, phi in enumerate(test_functions):
        holo = phi.to_holo(E, s) if isinstance(phi, Polynomial) else phi
        denom = float(np.max(np.abs(holo(zs))))
        if denom == 0.0:
            continue
        val = matrix_norm(engine.apply(holo), T.p) / denom
        if val > best:
            best, best_label = val, getattr(holo, "label", str(k))
    return ConstantEstimate(
        best,
        "empirical-lower-bound",
        {
            "family_size": len(test_functions),
            "grid_density": grid_density,
            "contour_radius": u,
            "argmax": best_label,
            "seed": seed,
        },
    )


def quadratic_constant(
    T: FiniteOperator,
    E: UnimodularVertexSet,
    s: float,
    phi_family,
    x_samples,
    rad_method: str = "auto",
    u: float | None = None,
    grid_density: int = 2048,
    seed: int = 0,
) -> ConstantEstimate:
    """max over sample vectors of
    ``||sum_l eps_l (x) phi_l(T) x||_Rad / (||x|| sup (sum |phi_l|^2)^(1/2))``."""
    from .rademacher import VectorFamily, rad_norm

    if len(phi_family) == 0 or len(x_samples) == 0:
        raise PreconditionError("need a nonempty function family and sample vectors")
    if u is None:
        u = _default_contour_radius(T, E, s)
    engine = ContourEngine(T, E, u)
    holos = [phi.to_holo(E, s) if isinstance(phi, Polynomial) else phi for phi in phi_family]
    mats = [engine.apply(h) for h in holos]
    zs = boundary_grid(E, s, density=grid_density)
    sq = np.zeros(zs.shape, dtype=float)
    for h in holos:
        sq += np.abs(h(zs)) ** 2
    denom_sup = float(np.sqrt(np.max(sq)))
    best = 0.0
    samples_used = 0
    for x in x_samples:
        x = np.asarray(x, dtype=complex)
        nx = vector_norm(x, T.p)
        if nx == 0.0:
            continue
        fam = VectorFamily(np.array([M @ x for M in mats]), T.p)
        est = rad_norm(fam, method=rad_method, seed=seed)
        samples_used = max(samples_used, est.samples)
        best = max(best, est.value / (nx * denom_sup))
    return ConstantEstimate(
        best,
        "empirical-lower-bound",
        {
            "family_size": len(phi_family),
            "grid_density": grid_density,
            "sup_sq": denom_sup,
            "rad_samples": samples_used,
            "seed": seed,
        },
    )


def _default_contour_radius(T: FiniteOperator, E: UnimodularVertexSet, s: float) -> float:
    """A contour radius strictly between the spectrum and s."""
    lo = 0.0
    for lam in spectrum(T).eigenvalues:
        if min(abs(lam - xi) for xi in E) < 1e-8:
            continue
        lo = max(lo, abs(lam))
    lo = min(lo, s - 1e-6)
    return lo + 0.5 * (s - lo)


@dataclass
class CoefficientSeries:
    """Power-series coefficients tied to the vertex factor to a power.

    For ``alpha_weight`` None the values are the Taylor coefficients
    ``c_0..c_K`` of the reciprocal of ``prod_j (1 - conj(xi_j) z)**M``.
    With a weight ``alpha`` they are the ``c_k`` (from k=1) solving
    ``sum_k c_k k**(alpha-1/2) z**(k-1)`` equals that reciprocal.
    """

    values: np.ndarray
    M: int
    vertex_poly: np.ndarray
    alpha_weight: float | None = None
    start_index: int = 0

    def recurrence_residual(self) -> float:
        if self.alpha_weight is None:
            c = self.values
        else:
            k = np.arange(1, len(self.values) + 1, dtype=float)
            c = self.values * k ** (self.alpha_weight - 0.5)
        p = self.vertex_poly
        resid = 0.0
        for k in range(len(c)):
            lo = max(0, k - len(p) + 1)
            acc = np.dot(p[k - np.arange(lo, k + 1)], c[lo : k + 1])
            target = 1.0 if k == 0 else 0.0
            resid = max(resid, abs(acc - target))
        return resid / max(1.0, float(np.abs(c).max()))

    def growth_ratio(self, exponent: float, k_min: int = 1) -> float:
        """max over k >= k_min of |c_k| / k**exponent."""
        idx = np.arange(len(self.values)) + (1 if self.alpha_weight is not None else 0)
        idx = idx + self.start_index
        mask = idx >= k_min
        k = idx[mask].astype(float)
        k[k == 0] = 1.0
        return float(np.max(np.abs(self.values[mask]) / k**exponent))


def series_coefficients(E: UnimodularVertexSet, M: int, k_max: int) -> CoefficientSeries:
    """Taylor coefficients of ``1 / prod_j (1 - conj(xi_j) z)**M`` by the
    linear recurrence against the expanded vertex polynomial."""
    if M < 1:
        raise PreconditionError(f"multiplicity must be >= 1, got {M}")
    p = E.factor_polynomial(M)
    # the filter has repeated unit-circle poles, so roundoff injected at
    # step k grows polynomially; extended precision keeps the tail clean
    pl = p.astype(np.clongdouble)
    c = np.zeros(k_max + 1, dtype=np.clongdouble)
    c[0] = 1.0
    D = len(p) - 1
    for k in range(1, k_max + 1):
        m = min(k, D)
        c[k] = -np.dot(pl[1 : m + 1], c[k - m : k][::-1])
    return CoefficientSeries(c.astype(complex), M, p, None, 0)


def weighted_coefficients(
    E: UnimodularVertexSet,
    alpha: float,
    k_max: int,
    M: int | None = None,
) -> CoefficientSeries:
    """Coefficients ``c_k = d_{k-1} / k**(alpha - 1/2)`` where ``d`` expands
    the reciprocal vertex factor at multiplicity M (default floor(alpha)+1);
    their growth is O(k**(gamma - 1/2)) with gamma = M - alpha."""
    if alpha <= 0:
        raise PreconditionError(f"alpha must be positive, got {alpha}")
    if M is None:
        M = int(math.floor(alpha)) + 1
    if not M > alpha:
        raise PreconditionError(
            f"multiplicity {M} must exceed alpha={alpha} (gamma = M - alpha > 0)"
        )
    d = series_coefficients(E, M, k_max - 1)
    k = np.arange(1, k_max + 1, dtype=float)
    vals = d.values / k ** (alpha - 0.5)
    return CoefficientSeries(vals, M, d.vertex_poly, alpha, 0)


def identity_reconstruction(
    T: FiniteOperator,
    E: UnimodularVertexSet,
    x: np.ndarray,
    k_max: int,
) -> tuple[np.ndarray, float]:
    """Partial sum ``sum_k c_k T**k prod_j (I - conj(xi_j) T)**3 x`` against x.

    Requires x in the range of the vertex factor (least-squares residual
    below 1e-8 relative); returns the partial sum and its distance to x.
    """
    x = np.asarray(x, dtype=complex)
    B = vertex_factor(T, E, 1)
    sol, *_ = np.linalg.lstsq(B, x, rcond=None)
    resid = np.linalg.norm(B @ sol - x)
    if resid > 1e-8 * max(1.0, np.linalg.norm(x)):
        raise RangeMembershipError(
            f"x is not in the range of the vertex factor (residual {resid:.3e})"
        )
    c = series_coefficients(E, 3, k_max).values
    y = B @ (B @ (B @ x))
    acc = c[0] * y
    v = y
    for k in range(1, k_max + 1):
        v = T.matrix @ v
        acc = acc + c[k] * v
    return acc, vector_norm(acc - x, T.p)


def phi_rho_convergence(
    phi,
    T: FiniteOperator,
    E: UnimodularVertexSet,
    rho_sequence,
    u: float | None = None,
    quad: GradedQuadrature | None = None,
) -> np.ndarray:
    """``|| phi(rho T) - phi(T) ||`` per rho, on one shared contour."""
    if u is None:
        u = _default_contour_radius(T, E, phi.s)
    engine = ContourEngine(T, E, u, quad)
    base = engine.apply(phi)
    out = []
    for rho in rho_sequence:
        eng = ContourEngine(T.scaled(float(rho)), E, u, engine.quad)
        out.append(matrix_norm(eng.apply(phi) - base, T.p))
    return np.array(out)


def rbdd_family_norms(
    phi: Polynomial,
    T: FiniteOperator,
    E: UnimodularVertexSet,
    s: float,
    k_max: int = 1000,
    grid_density: int = 2048,
) -> float:
    """max over k <= k_max of
    ``k ||phi(T) T**(k-1) prod_j (I - conj(xi_j) T)||`` over
    ``||phi||_{inf}``; the vertex factor must divide phi exactly."""
    fac = E.factor_polynomial(1)
    if not phi.divisible_by(fac):
        raise PreconditionError("the vertex factor does not divide the polynomial")
    denom = hinf_norm(phi.to_holo(E, s), E, s, grid_density)
    A = eval_polynomial_on_operator(phi, T)
    C = A @ vertex_factor(T, E, 1)
    best = 0.0
    for k in range(1, k_max + 1):
        best = max(best, k * matrix_norm(C, T.p))
        C = C @ T.matrix
    return best / denom


def make_catalog_function(name: str, E: UnimodularVertexSet, s: float, **params) -> HoloFunction:
    """Closed-form functions selectable by name.

    - ``vertex-factor-power``: prod_j (1 - conj(xi_j) z)**beta (param beta > 0)
    - ``monomial-vertex``: z**m prod_j (1 - conj(xi_j) z) (param m >= 0)
    - ``constant``: the constant c (param c); bounded but without decay
    """
    if name == "vertex-factor-power":
        beta = float(params.get("beta", 0.5))
        if beta <= 0:
            raise PreconditionError("beta must be positive")

        def f(z, _b=beta):
            out = np.ones_like(z)
            for v in E:
                w = 1.0 - np.conj(v) * z
                out = out * np.where(np.abs(w) == 0.0, 0.0, w.astype(complex) ** _b)
            return out

        decay = DecayCertificate(1.000001 * 2.0 ** (max(len(E) - 1, 0) * beta), tuple(beta for _ in E))
        return HoloFunction(f, s, decay, "closed-form", f"vertex-factor-power(beta={beta})")
    if name == "monomial-vertex":
        m = int(params.get("m", 0))
        poly = Polynomial([0.0] * m + [1.0]) * Polynomial(E.factor_polynomial(1))
        return poly.to_holo(E, s)
    if name == "constant":
        c = complex(params.get("c", 1.0))
        return HoloFunction(lambda z: np.full_like(z, c), s, None, "closed-form", f"constant({c})")
    raise KeyError(f"unknown catalog function {name!r}")


FUNCTION_CATALOG = ("vertex-factor-power", "monomial-vertex", "constant")


_polylog = np.frompyfunc(lambda order, t: complex(mpmath.polylog(order, t)), 2, 1)


def power_weight_sum(alpha: float, t) -> np.ndarray:
    """``sum_{k>=1} k**(2 alpha - 1) t**(k-1)`` for t in [0, 1).

    Evaluated through the polylogarithm; diverges as t -> 1.
    """
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape, dtype=float)
    flat_t = np.atleast_1d(t)
    flat = np.empty(flat_t.shape, dtype=float)
    order = 1.0 - 2.0 * alpha
    for i, ti in enumerate(flat_t):
        if ti == 0.0:
            flat[i] = 1.0
        elif ti >= 1.0:
            flat[i] = math.inf
        else:
            flat[i] = float(mpmath.re(mpmath.polylog(order, ti))) / ti
    if t.shape == ():
        return flat[0]
    out[...] = flat.reshape(t.shape)
    return out


def square_function_symbol_sum(
    E: UnimodularVertexSet, alpha: float, zs: np.ndarray
) -> np.ndarray:
    """``sum_k |phi_k(z)|**2`` for the square-function symbols
    ``phi_k(z) = k**(alpha-1/2) z**(k-1) prod_j (1 - conj(xi_j) z)**alpha``."""
    zs = np.asarray(zs, dtype=complex)
    fac = np.ones(zs.shape, dtype=float)
    for xi in E:
        fac *= np.abs(1.0 - np.conj(xi) * zs)
    t = np.minimum(np.abs(zs) ** 2, 1.0 - 1e-16)
    return fac ** (2 * alpha) * power_weight_sum(alpha, t)
