"""Finite-dimensional complex operators with l^p ambient norms.

Resolvents, spectra, Ritt-type classification over a vertex set, principal
fractional powers of the vertex factors ``I - conj(xi_j) T``, scaled power
family suprema, and the Cesaro / mean-ergodic machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .geometry import StolzDomain, UnimodularVertexSet, boundary_grid

VERTEX_SNAP = 1e-10
RESOLVENT_GUARD = 1e-12


class OperatorError(ValueError):
    pass


class SingularResolventError(OperatorError):
    """Resolvent requested within tolerance of the spectrum."""


class ClassificationError(OperatorError):
    """Spectrum violates the prerequisites of a Ritt-type computation."""


class ConditioningError(OperatorError):
    """A factorization is too ill-conditioned to trust; failure is explicit."""


def dual_exponent(p: float) -> float:
    if p == 1.0:
        return math.inf
    if p == math.inf:
        return 1.0
    return p / (p - 1.0)


def vector_norm(x: np.ndarray, p: float) -> float:
    return float(np.linalg.norm(x, p))


def _dual_vector(y: np.ndarray, p: float) -> np.ndarray:
    """Unit-q-norm vector pairing to ||y||_p under Re <.,.>."""
    a = np.abs(y)
    phase = np.where(a > 0, y / np.where(a > 0, a, 1.0), 1.0)
    if p == math.inf:
        z = np.zeros_like(y)
        i = int(np.argmax(a))
        z[i] = phase[i]
        return z
    if p == 1.0:
        return phase.astype(complex)
    nrm = np.linalg.norm(y, p)
    if nrm == 0.0:
        z = np.zeros_like(y)
        z[0] = 1.0
        return z
    return phase * (a / nrm) ** (p - 1.0)


def _pnorm_lower_bound(M: np.ndarray, p: float, starts: int = 32, seed: int = 0) -> float:
    """Certified lower bound on the l^p -> l^p operator norm.

    Power-method ascent on the unit sphere from several random starts;
    every evaluated ratio ||Mx||_p / ||x||_p is a valid lower bound.
    """
    q = dual_exponent(p)
    rng = np.random.default_rng(seed)
    n = M.shape[0]
    best = 0.0
    for s in range(starts):
        if s == 0:
            x = np.ones(n, dtype=complex)
        else:
            x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        x = x / np.linalg.norm(x, p)
        prev = -1.0
        for _ in range(60):
            y = M @ x
            val = float(np.linalg.norm(y, p))
            best = max(best, val)
            z = M.conj().T @ _dual_vector(y, p)
            if val <= prev * (1 + 1e-12):
                break
            prev = val
            zq = np.linalg.norm(z, q)
            if zq == 0.0:
                break
            x = _dual_vector(z, q).conj()
            xn = np.linalg.norm(x, p)
            if xn == 0.0:
                break
            x = x / xn
    return best


def matrix_norm(M: np.ndarray, p: float) -> float:
    """Operator norm on (C^n, l^p); exact for p in {1, 2, inf}."""
    M = np.asarray(M)
    if p == 1.0:
        return float(np.abs(M).sum(axis=0).max())
    if p == math.inf:
        return float(np.abs(M).sum(axis=1).max())
    if p == 2.0:
        return float(np.linalg.norm(M, 2))
    return _pnorm_lower_bound(M, p)


def norm_method(p: float) -> str:
    return "exact" if p in (1.0, 2.0, math.inf) else "power-iteration-lower-bound"


class FiniteOperator:
    """An n x n complex matrix acting on (C^n, l^p).

    Immutable by convention: the underlying array is write-protected and
    spectral factorizations are cached.
    """

    def __init__(self, matrix, p: float = 2.0):
        M = np.array(matrix, dtype=complex, order="C")
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
            raise OperatorError(f"matrix must be square and nonempty, got {M.shape}")
        if not np.all(np.isfinite(M.real)) or not np.all(np.isfinite(M.imag)):
            raise OperatorError("matrix entries must be finite")
        if not (1.0 <= p <= math.inf):
            raise OperatorError(f"ambient exponent must lie in [1, inf], got {p}")
        M.setflags(write=False)
        self.matrix = M
        self.p = float(p)
        self._spectral = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __repr__(self):
        return f"FiniteOperator(dim={self.dim}, p={self.p})"

    def scaled(self, rho: float) -> "FiniteOperator":
        return FiniteOperator(rho * self.matrix, self.p)

    def norm(self) -> float:
        return matrix_norm(self.matrix, self.p)

    def eigenvalues(self) -> np.ndarray:
        return spectrum(self).eigenvalues


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: np.ndarray
    diagonalizer: np.ndarray | None
    diag_condition: float
    schur_t: np.ndarray
    schur_q: np.ndarray

    def is_diagonalizable(self, cond_cap: float = 1e6) -> bool:
        return self.diagonalizer is not None and self.diag_condition <= cond_cap


def spectrum(T: FiniteOperator) -> SpectralData:
    """Eigenvalues (ordered by real then imaginary part) with factorizations."""
    if T._spectral is not None:
        return T._spectral
    M = T.matrix
    w, V = np.linalg.eig(M)
    order = np.lexsort((w.imag, w.real))
    w, V = w[order], V[:, order]
    try:
        cond = float(np.linalg.cond(V))
    except np.linalg.LinAlgError:
        cond = math.inf
    diag = None
    if math.isfinite(cond):
        resid = np.linalg.norm(V @ np.diag(w) @ np.linalg.inv(V) - M, 2)
        scale = max(1.0, np.linalg.norm(M, 2))
        if resid <= 1e-8 * scale * max(1.0, cond):
            diag = V
    schur_t, schur_q = scipy.linalg.schur(M, output="complex")
    data = SpectralData(w, diag, cond, schur_t, schur_q)
    T._spectral = data
    return data


def resolvent(T: FiniteOperator, z: complex) -> np.ndarray:
    """(zI - T)^{-1} by direct solve; errors near the spectrum."""
    w = spectrum(T).eigenvalues
    if np.min(np.abs(w - z)) <= RESOLVENT_GUARD * (1.0 + abs(z)):
        raise SingularResolventError(f"z={z} is within tolerance of the spectrum")
    n = T.dim
    return np.linalg.solve(z * np.eye(n) - T.matrix, np.eye(n))


def resolvent_stack(T: FiniteOperator, zs: np.ndarray) -> np.ndarray:
    """Batched resolvents (len(zs), n, n) with the same singularity guard."""
    zs = np.asarray(zs)
    w = spectrum(T).eigenvalues
    dist = np.abs(zs[:, None] - w[None, :]).min(axis=1)
    bad = dist <= RESOLVENT_GUARD * (1.0 + np.abs(zs))
    if np.any(bad):
        raise SingularResolventError(
            f"{int(bad.sum())} contour nodes fall within tolerance of the spectrum"
        )
    n = T.dim
    A = zs[:, None, None] * np.eye(n)[None] - T.matrix[None]
    return np.linalg.solve(A, np.broadcast_to(np.eye(n), A.shape))


def adjoint(T: FiniteOperator) -> FiniteOperator:
    """Conjugate transpose acting on the dual exponent."""
    return FiniteOperator(T.matrix.conj().T, dual_exponent(T.p))


def vertex_factor(T: FiniteOperator, E: UnimodularVertexSet, power: int = 1) -> np.ndarray:
    """Exact matrix product prod_j (I - conj(xi_j) T)**power."""
    n = T.dim
    out = np.eye(n, dtype=complex)
    for xi in E:
        F = np.eye(n) - np.conj(xi) * T.matrix
        for _ in range(power):
            out = F @ out
    return out


def _principal_factor_scalar(lams: np.ndarray, E: UnimodularVertexSet, alpha: float) -> np.ndarray:
    """prod_j (1 - conj(xi_j) lam)**alpha with principal branches, 0**alpha := 0."""
    out = np.ones_like(lams, dtype=complex)
    for xi in E:
        w = 1.0 - np.conj(xi) * lams
        small = np.abs(w) < VERTEX_SNAP
        term = np.where(small, 0.0, np.where(small, 1.0, w) ** alpha)
        out = out * term
    return out


def _parlett_function(U: np.ndarray, f) -> np.ndarray:
    """Triangular matrix function by the Parlett recurrence.

    Raises ConditioningError on (near-)repeated diagonal entries, where the
    divided-difference recurrence is unstable.
    """
    n = U.shape[0]
    F = np.zeros_like(U)
    d = np.diag(U)
    scale = max(1.0, float(np.abs(U).max()))
    for i in range(n):
        F[i, i] = f(d[i])
    for off in range(1, n):
        for i in range(n - off):
            j = i + off
            den = d[j] - d[i]
            num = U[i, j] * (F[j, j] - F[i, i])
            coupled = abs(U[i, j]) > 1e-12 * scale
            if off > 1:
                num += F[i, i + 1 : j] @ U[i + 1 : j, j] - U[i, i + 1 : j] @ F[i + 1 : j, j]
                coupled = coupled or np.any(np.abs(U[i + 1 : j, j]) > 1e-12 * scale)
            if abs(den) < 1e-10 * scale:
                if not coupled and abs(num) < 1e-12 * scale:
                    F[i, j] = 0.0
                    continue
                raise ConditioningError(
                    "repeated eigenvalues couple through the off-diagonal; "
                    "the triangular recurrence cannot produce the factor power"
                )
            F[i, j] = num / den
    return F


def fractional_factor(
    T: FiniteOperator,
    E: UnimodularVertexSet,
    alpha: float,
    cond_cap: float = 1e6,
) -> np.ndarray:
    """prod_j (I - conj(xi_j) T)**alpha with principal branches.

    Integer exponents multiply exactly.  Otherwise diagonalization is used
    when the eigenvector condition is below ``cond_cap``, with a
    Schur-based triangular fallback; eigenvalues at a vertex use the
    convention 0**alpha = 0.
    """
    if alpha <= 0:
        raise OperatorError(f"fractional exponent must be positive, got {alpha}")
    if float(alpha).is_integer():
        return vertex_factor(T, E, int(alpha))
    sd = spectrum(T)

    def f(lam):
        return _principal_factor_scalar(np.asarray([lam], dtype=complex), E, alpha)[0]

    if sd.is_diagonalizable(cond_cap):
        vals = _principal_factor_scalar(sd.eigenvalues, E, alpha)
        V = sd.diagonalizer
        return V @ (vals[:, None] * np.linalg.inv(V))
    F = _parlett_function(sd.schur_t, f)
    return sd.schur_q @ F @ sd.schur_q.conj().T


def _stacked_norms(stack: np.ndarray, p: float) -> np.ndarray:
    if p == 1.0:
        return np.abs(stack).sum(axis=1).max(axis=1)
    if p == math.inf:
        return np.abs(stack).sum(axis=2).max(axis=1)
    if p == 2.0:
        return np.linalg.svd(stack, compute_uv=False)[:, 0]
    return np.array([_pnorm_lower_bound(Mk, p) for Mk in stack])


def power_family_bound(
    T: FiniteOperator,
    E: UnimodularVertexSet,
    alpha: float,
    rho_grid=(0.5, 0.9, 0.99, 1.0),
    n_max: int = 10_000,
) -> float:
    """sup over n <= n_max, rho in the grid of
    ``n**alpha * || (rho T)**(n-1) prod_j (I - conj(xi_j) rho T)**alpha ||``.
    """
    n = T.dim
    best = 0.0
    ns = np.arange(1, n_max + 1, dtype=float)
    for rho in rho_grid:
        S = T.scaled(rho)
        F = fractional_factor(S, E, alpha)
        stack = np.empty((n_max, n, n), dtype=complex)
        P = F
        for k in range(n_max):
            stack[k] = P
            P = S.matrix @ P
        vals = ns**alpha * _stacked_norms(stack, T.p)
        best = max(best, float(np.max(vals)))
    return best


def cesaro_projection(T: FiniteOperator, xi: complex, m: int) -> np.ndarray:
    """Cesaro mean ``(1/(m+1)) sum_{k=0}^{m} (conj(xi) T)**k``."""
    n = T.dim
    A = np.conj(xi) * T.matrix
    S = np.eye(n, dtype=complex)
    P = np.eye(n, dtype=complex)
    for _ in range(m):
        P = A @ P
        S += P
    return S / (m + 1)


def cesaro_sequence(T: FiniteOperator, xi: complex, ms) -> dict:
    """Cesaro means at several truncations in one pass over the powers."""
    ms = sorted(int(m) for m in ms)
    n = T.dim
    A = np.conj(xi) * T.matrix
    S = np.eye(n, dtype=complex)
    P = np.eye(n, dtype=complex)
    out = {}
    k = 0
    for m in ms:
        while k < m:
            P = A @ P
            S += P
            k += 1
        out[m] = S / (m + 1)
    return out


def spectral_projection(T: FiniteOperator, xi: complex, tol: float = 1e-8) -> np.ndarray | None:
    """Projection onto the eigenspace at ``xi`` along the other spectral
    subspaces; None when T has no usable diagonalization."""
    sd = spectrum(T)
    if not sd.is_diagonalizable(1e8):
        return None
    mask = np.abs(sd.eigenvalues - xi) < tol
    V = sd.diagonalizer
    return V @ (mask[:, None].astype(complex) * np.linalg.inv(V))


def lambda_operator(T: FiniteOperator, E: UnimodularVertexSet, m: int) -> np.ndarray:
    """prod_j (I - C_m(xi_j)) with C_m the Cesaro mean at vertex xi_j."""
    n = T.dim
    out = np.eye(n, dtype=complex)
    for xi in E:
        out = (np.eye(n) - cesaro_projection(T, xi, m)) @ out
    return out


def lambda_sequence(T: FiniteOperator, E: UnimodularVertexSet, ms) -> dict:
    """lambda_operator at several truncations, sharing the power recursion."""
    per_vertex = [cesaro_sequence(T, xi, ms) for xi in E]
    n = T.dim
    out = {}
    for m in sorted(int(m) for m in ms):
        prod = np.eye(n, dtype=complex)
        for seq in per_vertex:
            prod = (np.eye(n) - seq[m]) @ prod
        out[m] = prod
    return out


@dataclass(frozen=True)
class RittClassification:
    is_ritt: bool
    type_estimate: float
    constant: float
    samples_used: int
    detail: str = ""


def _ritt_mesh(E: UnimodularVertexSet, s: float, n_angular: int, n_radial: int) -> np.ndarray:
    """Deterministic points of D(0,2) outside the closed radius-s hull,
    graded toward the boundary and toward each vertex."""
    w = boundary_grid(E, s, density=max(8, n_angular // (3 * len(E))))
    eps = np.geomspace(1e-6, 1.0, n_radial)
    return (w[:, None] * (1.0 + eps[None, :])).ravel()


def ritt_constant(
    T: FiniteOperator,
    E: UnimodularVertexSet,
    s: float,
    n_samples: int = 1024,
) -> float:
    """sup over a mesh of z outside the closed radius-s hull (|z| <= 2) of
    ``|| prod_j (1 - conj(xi_j) z) R(z, T) ||``."""
    dom = StolzDomain(E, s)
    w = spectrum(T).eigenvalues
    for lam in w:
        if dom.hull_margin(lam) < -1e-9:
            raise ClassificationError(
                f"eigenvalue {lam} lies outside the closed radius-{s} hull"
            )
    n_radial = max(4, int(round(n_samples ** 0.25)))
    n_angular = max(16, n_samples // n_radial)
    zs = _ritt_mesh(E, s, n_angular, n_radial)
    R = resolvent_stack(T, zs)
    fac = np.ones_like(zs)
    for xi in E:
        fac = fac * (1.0 - np.conj(xi) * zs)
    vals = _stacked_norms(np.abs(fac)[:, None, None] * R, T.p)
    return float(np.max(vals))


def _vertex_eigen_ok(T: FiniteOperator, E: UnimodularVertexSet, tol: float = 1e-8) -> bool:
    """Unimodular eigenvalues must sit at vertices and be semisimple."""
    w = spectrum(T).eigenvalues
    scale = max(1.0, float(np.abs(T.matrix).max()))
    for lam in w:
        if abs(lam) > 1.0 + 1e-9:
            return False
    near_circle = [lam for lam in w if abs(lam) > 1.0 - tol]
    for lam in near_circle:
        if min(abs(lam - xi) for xi in E) > tol:
            return False
    for xi in E:
        mult = int(np.sum(np.abs(w - xi) < tol))
        if mult == 0:
            continue
        sv = np.linalg.svd(T.matrix - xi * np.eye(T.dim), compute_uv=False)
        geo = int(np.sum(sv < tol * scale))
        if geo != mult:
            return False
    return True


def classify_ritt(
    T: FiniteOperator,
    E: UnimodularVertexSet,
    n_samples: int = 1024,
) -> RittClassification:
    """Bisect to the smallest workable type radius and report the resolvent
    product constant there.  ``is_ritt`` is False when no radius works."""
    if not _vertex_eigen_ok(T, E):
        return RittClassification(False, math.nan, math.inf, 0, "spectrum violates circle condition")
    if len(E) == 1:
        r_floor = 0.01
    else:
        r_floor = float(np.max(np.abs(np.cos(E.gaps() / 2.0)))) + 1e-12
    r_floor = min(max(r_floor, 0.01), 1.0 - 1e-9)
    w = spectrum(T).eigenvalues
    interior = [lam for lam in w if min(abs(lam - xi) for xi in E) >= 1e-8]

    def all_inside(r):
        dom = StolzDomain(E, r)
        return all(dom.hull_margin(lam) >= -1e-12 for lam in interior)

    if all_inside(r_floor):
        r_type = r_floor
    else:
        lo, hi = r_floor, 1.0 - 1e-9
        if not all_inside(hi):
            return RittClassification(False, math.nan, math.inf, 0, "no admissible type radius")
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if all_inside(mid):
                hi = mid
            else:
                lo = mid
        r_type = hi
    s = r_type + 0.5 * (1.0 - r_type)
    const = ritt_constant(T, E, s, n_samples=n_samples)
    return RittClassification(True, float(r_type), const, n_samples, f"constant at s={s:.4g}")
